#pragma once

// Independent numerical checks of the analysis chain: brute-force hole
// drilling, finite differences, reciprocity and quadrature.

#include "fem.hpp"
#include "levelset.hpp"
#include "mesh.hpp"
#include "optimizer.hpp"
#include "problem.hpp"
#include "sensitivity.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace topt::verify {

/// Average ranks (ties share the mean rank).
inline std::vector<double> ranks(const std::vector<double> &v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();)
    {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
            ++j;
        const double mean = 0.5 * static_cast<double>(i + j);
        for (std::size_t k = i; k <= j; ++k)
            r[order[k]] = mean;
        i = j + 1;
    }
    return r;
}

inline double spearman(const std::vector<double> &a, const std::vector<double> &b)
{
    if (a.size() != b.size() || a.size() < 2)
        throw InvalidInput("spearman needs two samples of equal size >= 2");
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i)
    {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

/// Cantilever of nx x ny square elements on a 2:1 domain, clamped on the
/// left, unit downward load at mid-right.
inline ProblemSpec desk_cantilever(int nx = 20, int ny = 10)
{
    ProblemSpec p;
    p.name = "desk-cantilever";
    p.domain = {2.0, 1.0, nx, ny, {}};
    p.supports = {{Rect{0.0, 0.0, 0.0, 1.0}, true, true}};
    p.loads = {{0, {2.0, 0.5}, {0.0, -1.0}, 1.0}};
    p.objective = ObjectiveKind::compliance;
    p.target_vf = 0.5;
    return p;
}

struct HoleDrilling
{
    double rho = 0.0;
    std::size_t samples = 0;
    double seconds = 0.0;
};

/// Removes each interior element in turn and correlates (J_hole - J) / area
/// with the compliance sensitivity.
inline HoleDrilling hole_drilling_compliance(int nx = 20, int ny = 10)
{
    const auto start = std::chrono::steady_clock::now();
    const Problem problem = resolve(desk_cantilever(nx, ny));
    const Mesh &mesh = problem.mesh;
    const auto full = TopologyState::full(mesh.num_elements());
    const ActiveMesh active = active_submesh(mesh, problem.boundary, full);
    const SystemMatrix k = assemble(mesh, active, problem.material);
    const DisplacementField u = solve(k, problem.loads[0]);
    const double j0 = compliance(problem.loads[0], u);
    const TensorField primal = recover(mesh, active, u, problem.material);
    const TensorField adjoint = recover(mesh, active, DisplacementField(-u), problem.material);
    const SensitivityField t = topo_sensitivity(primal, adjoint, problem.material.poisson_ratio);

    std::vector<double> predicted, observed;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e)
    {
        const auto [ix, iy] = mesh.element_cell[e];
        if (ix == 0 || iy == 0 || ix == mesh.nx - 1 || iy == mesh.ny - 1)
            continue;
        TopologyState holed = full;
        holed.solid[e] = 0;
        holed.recount();
        const ActiveMesh a = active_submesh(mesh, problem.boundary, holed);
        const DisplacementField uh = solve(assemble(mesh, a, problem.material), problem.loads[0]);
        observed.push_back((compliance(problem.loads[0], uh) - j0) / mesh.element_area);
        predicted.push_back(t.values[e]);
    }
    HoleDrilling out;
    out.rho = spearman(predicted, observed);
    out.samples = predicted.size();
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// max |lambda + u| / max |u| for the compliance adjoint on the desk cantilever.
inline double compliance_adjoint_error()
{
    const Problem problem = resolve(desk_cantilever());
    const auto full = TopologyState::full(problem.mesh.num_elements());
    const ActiveMesh active = active_submesh(problem.mesh, problem.boundary, full);
    const SystemMatrix k = assemble(problem.mesh, active, problem.material);
    const DisplacementField u = solve(k, problem.loads[0]);
    const DisplacementField lambda = solve_adjoint(k, LoadVector(-problem.loads[0]));
    return (lambda + u).lpNorm<Eigen::Infinity>() / u.lpNorm<Eigen::Infinity>();
}

struct Reciprocity
{
    double reciprocity_error = 0.0; ///< |lambda^T f + u_dir(q)| / |u_dir(q)|
    double gradient_error = 0.0;    ///< load-perturbation derivative vs -lambda
};

/// Point-displacement adjoint on the desk cantilever with q at mid-top.
inline Reciprocity displacement_adjoint_checks()
{
    const Problem problem = resolve(desk_cantilever());
    const Mesh &mesh = problem.mesh;
    const auto full = TopologyState::full(mesh.num_elements());
    const ActiveMesh active = active_submesh(mesh, problem.boundary, full);
    const SystemMatrix k = assemble(mesh, active, problem.material);
    const Point2 dir{0.0, -1.0};
    const int q = locate_node(mesh, {1.0, 1.0});
    const LoadVector rhs = adjoint_rhs_point_displacement(mesh, problem.boundary, q, dir);
    const DisplacementField lambda = solve_adjoint(k, rhs);
    const LoadVector &f = problem.loads[0];
    const DisplacementField u = solve(k, f);
    const double uq = dir.x * u[2 * q] + dir.y * u[2 * q + 1];

    Reciprocity out;
    out.reciprocity_error = std::abs(lambda.dot(f) + uq) / std::abs(uq);

    // d u_dir(q) / d f_j = -lambda_j, probed on a few free dofs.
    double worst = 0.0;
    const double scale = f.lpNorm<Eigen::Infinity>();
    for (int node : {locate_node(mesh, {2.0, 0.5}), locate_node(mesh, {1.5, 0.0}), locate_node(mesh, {0.5, 1.0})})
    {
        for (int axis = 0; axis < 2; ++axis)
        {
            const int dof = 2 * node + axis;
            const double step = 1e-3 * scale;
            LoadVector fp = f, fm = f;
            fp[dof] += step;
            fm[dof] -= step;
            const DisplacementField up = solve(k, fp), um = solve(k, fm);
            const double dp = dir.x * up[2 * q] + dir.y * up[2 * q + 1];
            const double dm = dir.x * um[2 * q] + dir.y * um[2 * q + 1];
            const double fd = (dp - dm) / (2.0 * step);
            const double ref = std::max(std::abs(lambda[dof]), 1e-30);
            worst = std::max(worst, std::abs(fd + lambda[dof]) / ref);
        }
    }
    out.gradient_error = worst;
    return out;
}

/// Central differences of the p-norm stress against its adjoint load on a
/// 2 x 2 patch with a pseudo-random displacement field.
inline double pnorm_gradient_error(int p = 8, unsigned seed = 7)
{
    const Mesh mesh = build_mesh({2.0, 2.0, 2, 2, {}});
    const BoundarySpec bc{{}, {}, 1};
    const auto full = TopologyState::full(mesh.num_elements());
    const ActiveMesh active = active_submesh(mesh, bc, full);
    const Material material;
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    DisplacementField u(static_cast<Eigen::Index>(mesh.num_dofs()));
    for (Eigen::Index i = 0; i < u.size(); ++i)
        u[i] = 1e-6 * dist(rng);

    const PnormAdjoint adj = adjoint_rhs_pnorm(mesh, active, u, material, p);
    const double step = 1e-6 * u.norm();
    double worst = 0.0;
    const double scale = adj.rhs.lpNorm<Eigen::Infinity>();
    for (Eigen::Index d = 0; d < u.size(); ++d)
    {
        DisplacementField up = u, um = u;
        up[d] += step;
        um[d] -= step;
        const double fd = (adjoint_rhs_pnorm(mesh, active, up, material, p).value -
                           adjoint_rhs_pnorm(mesh, active, um, material, p).value) /
                          (2.0 * step);
        worst = std::max(worst, std::abs(-fd - adj.rhs[d]) / scale);
    }
    return worst;
}

/// Largest |achieved - target| * N over random fields and targets.
inline double tau_exactness(int trials = 100, unsigned seed = 11)
{
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> size(10, 3000);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    std::uniform_real_distribution<double> target(0.01, 1.0);
    double worst = 0.0;
    for (int t = 0; t < trials; ++t)
    {
        SensitivityField f;
        f.values.resize(static_cast<std::size_t>(size(rng)));
        for (auto &v : f.values)
            v = value(rng);
        const double vf = target(rng);
        const TopologyState topo = extract_domain(f, find_tau(f, vf));
        const double n = static_cast<double>(f.values.size());
        worst = std::max(worst, std::abs(topo.volume_fraction - vf) * n);
    }
    return worst;
}

/// 2 x 2 Gauss integration of B^T D B over a square element.
inline ElementMatrix gauss_element_stiffness(const Material &material, double h)
{
    const double g = 1.0 / std::sqrt(3.0);
    const Eigen::Matrix3d d = material.constitutive();
    ElementMatrix k = ElementMatrix::Zero();
    for (double xi : {-g, g})
        for (double eta : {-g, g})
        {
            const StrainDisplacement b = strain_displacement(h, xi, eta);
            k += b.transpose() * d * b * (h * h / 4.0);
        }
    return k;
}

inline double element_stiffness_error(const Material &material = {}, double h = 0.25)
{
    const ElementMatrix a = element_stiffness(material, h);
    const ElementMatrix b = gauss_element_stiffness(material, h);
    return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

} // namespace topt::verify
