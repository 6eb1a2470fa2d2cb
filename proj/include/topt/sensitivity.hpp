#pragma once

// Adjoint right-hand sides, adjoint solves and per-element topological
// sensitivity fields.
//
// Sign convention: a field value T_Q(e) approximates (Q(with hole) - Q) per
// unit hole area at the centroid of e. Compliance sensitivities are therefore
// non-negative and rank elements the same way as drilling them out does.

#include "errors.hpp"
#include "fem.hpp"
#include "mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

namespace topt {

struct SensitivityField
{
    std::vector<double> values;
    bool normalized = false;
    /// Set by normalize_and_protect when every non-protected value is zero.
    bool degenerate = false;
    std::vector<int> protected_elements;

    std::size_t size() const { return values.size(); }
};

enum class ConstraintKind
{
    point_displacement,
    pnorm_stress,
    compliance
};

inline const char *to_string(ConstraintKind kind)
{
    switch (kind)
    {
    case ConstraintKind::point_displacement:
        return "displacement";
    case ConstraintKind::pnorm_stress:
        return "stress";
    case ConstraintKind::compliance:
        return "compliance";
    }
    return "?";
}

struct ConstraintSpec
{
    ConstraintKind kind = ConstraintKind::point_displacement;
    int load_case = 0;
    /// Constrained point and measured direction (displacement kind only).
    Point2 point{};
    Point2 direction{0.0, -1.0};
    /// Limit on raw / reference.
    double bound = 1.5;
    int p_exponent = 8;

    void validate() const
    {
        if (!(bound > 0.0) || !std::isfinite(bound))
            throw InvalidInput("constraint bound must be positive");
        if (kind == ConstraintKind::pnorm_stress && (p_exponent < 2 || p_exponent % 2 != 0))
            throw InvalidInput("p-norm exponent must be even and at least 2");
        if (kind == ConstraintKind::point_displacement)
        {
            const double n = std::hypot(direction.x, direction.y);
            if (std::abs(n - 1.0) > 1e-9)
                throw InvalidInput("displacement direction must be a unit vector");
        }
    }

    friend bool operator==(const ConstraintSpec &, const ConstraintSpec &) = default;
};

/// A constraint bound to a mesh: the constrained point resolved to a node.
struct ResolvedConstraint
{
    ConstraintSpec spec;
    int node = -1;
};

/// Stress below this fraction of E is treated as zero in the von Mises
/// derivative, which is singular at zero stress.
inline constexpr double stress_guard_factor = 1e-12;

inline LoadVector adjoint_rhs_point_displacement(const Mesh &mesh, const BoundarySpec &bc, int node,
                                                 Point2 direction)
{
    if (node < 0 || static_cast<std::size_t>(node) >= mesh.num_nodes())
        throw InvalidInput("constrained node out of range");
    const auto fixed = bc.fixed_mask(mesh.num_dofs());
    LoadVector rhs = LoadVector::Zero(static_cast<Eigen::Index>(mesh.num_dofs()));
    const double comp[2] = {direction.x, direction.y};
    for (int a = 0; a < 2; ++a)
    {
        if (comp[a] == 0.0)
            continue;
        const int dof = 2 * node + a;
        if (fixed[static_cast<std::size_t>(dof)])
            throw InvalidInput("constrained displacement sits on a fixed degree of freedom (node " +
                               std::to_string(node) + ")");
        rhs[dof] = -comp[a];
    }
    return rhs;
}

inline LoadVector adjoint_rhs_point_displacement(const Mesh &mesh, const BoundarySpec &bc, Point2 point,
                                                 Point2 direction)
{
    return adjoint_rhs_point_displacement(mesh, bc, locate_node(mesh, point), direction);
}

struct PnormAdjoint
{
    double value = 0.0;    ///< sigma_PN
    double max_stress = 0.0;
    LoadVector rhs;        ///< -d sigma_PN / du
    bool zero_stress = false;
};

inline std::vector<double> element_von_mises(const Mesh &mesh, const TensorField &tensors)
{
    std::vector<double> out(mesh.num_elements());
    for (std::size_t e = 0; e < out.size(); ++e)
        out[e] = von_mises(tensors.stress[e]);
    return out;
}

/// p-norm of centroid von Mises stresses over the active elements and its
/// adjoint load -d(sigma_PN)/du.
inline PnormAdjoint adjoint_rhs_pnorm(const Mesh &mesh, const ActiveMesh &active, const DisplacementField &u,
                                      const Material &material, int p)
{
    if (p < 2 || p % 2 != 0)
        throw InvalidInput("p-norm exponent must be even and at least 2");
    PnormAdjoint out;
    out.rhs = LoadVector::Zero(static_cast<Eigen::Index>(mesh.num_dofs()));

    const StrainDisplacement b = strain_displacement(mesh.h, 0.0, 0.0);
    const Eigen::Matrix3d d = material.constitutive();
    const Eigen::Matrix<double, 3, 8> db = d * b;
    Eigen::Matrix3d v;
    v << 1.0, -0.5, 0.0, -0.5, 1.0, 0.0, 0.0, 0.0, 3.0;

    std::vector<Eigen::Vector3d> stress(active.elements.size());
    std::vector<double> vm(active.elements.size());
    double smax = 0.0;
    for (std::size_t i = 0; i < active.elements.size(); ++i)
    {
        stress[i] = db * gather(mesh, static_cast<std::size_t>(active.elements[i]), u);
        vm[i] = std::sqrt(std::max(0.0, stress[i].dot(v * stress[i])));
        smax = std::max(smax, vm[i]);
    }
    out.max_stress = smax;
    const double guard = stress_guard_factor * material.youngs_modulus;
    if (!(smax > 0.0))
    {
        out.zero_stress = true;
        return out;
    }

    // Scaled by the maximum so large stresses cannot overflow sigma^p.
    double sum = 0.0;
    for (double s : vm)
        sum += std::pow(s / smax, p);
    out.value = smax * std::pow(sum, 1.0 / p);
    if (smax < guard)
    {
        out.zero_stress = true;
        return out;
    }

    for (std::size_t i = 0; i < active.elements.size(); ++i)
    {
        if (vm[i] < guard)
            continue;
        const double weight = std::pow(vm[i] / out.value, p - 1);
        const ElementVector grad = db.transpose() * (v * stress[i]) * (weight / vm[i]);
        const auto dofs = element_dofs(mesh, static_cast<std::size_t>(active.elements[i]));
        for (int k = 0; k < 8; ++k)
            out.rhs[dofs[static_cast<std::size_t>(k)]] -= grad[k];
    }
    return out;
}

inline DisplacementField solve_adjoint(const SystemMatrix &system, const LoadVector &rhs) { return solve(system, rhs); }

/// Per-element topological sensitivity from the primal stress and the
/// adjoint strain (plane stress, unit-area hole).
inline SensitivityField topo_sensitivity(const TensorField &primal, const TensorField &adjoint, double nu)
{
    if (primal.stress.size() != adjoint.strain.size())
        throw InvalidInput("primal and adjoint tensor fields differ in size");
    const double a = -4.0 / (1.0 + nu);
    const double b = (1.0 - 3.0 * nu) / (1.0 - nu * nu);
    SensitivityField out;
    out.values.resize(primal.stress.size());
    for (std::size_t e = 0; e < out.values.size(); ++e)
    {
        const Sym2 &s = primal.stress[e];
        const Sym2 &eps = adjoint.strain[e];
        out.values[e] = a * contract(s, eps) + b * s.trace() * eps.trace();
    }
    return out;
}

/// Topological sensitivity of the material volume: every hole removes its own area.
inline SensitivityField sensitivity_volume(std::size_t num_elements)
{
    SensitivityField out;
    out.values.assign(num_elements, -1.0);
    return out;
}

inline constexpr double protected_value = 2.0;

/// Divides by max |T| over non-protected elements and pins protected
/// elements to a value above every normalized entry.
inline SensitivityField normalize_and_protect(SensitivityField field, std::span<const int> protected_elements)
{
    for (double v : field.values)
        if (!std::isfinite(v))
            throw InvalidInput("sensitivity field contains non-finite values");
    std::vector<std::uint8_t> is_protected(field.values.size(), 0);
    for (int e : protected_elements)
        is_protected.at(static_cast<std::size_t>(e)) = 1;

    double scale = 0.0;
    for (std::size_t e = 0; e < field.values.size(); ++e)
        if (!is_protected[e])
            scale = std::max(scale, std::abs(field.values[e]));
    if (scale > 0.0)
    {
        for (double &v : field.values)
            v /= scale;
        field.normalized = true;
        field.degenerate = false;
    }
    else
    {
        field.degenerate = true;
    }
    for (int e : protected_elements)
        field.values[static_cast<std::size_t>(e)] = protected_value;
    field.protected_elements.assign(protected_elements.begin(), protected_elements.end());
    return field;
}

/// Elements touching any of the given nodes.
inline std::vector<int> elements_touching(const Mesh &mesh, std::span<const int> nodes)
{
    std::vector<std::uint8_t> mark(mesh.num_nodes(), 0);
    for (int n : nodes)
        mark.at(static_cast<std::size_t>(n)) = 1;
    std::vector<int> out;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e)
        if (std::any_of(mesh.elements[e].begin(), mesh.elements[e].end(),
                        [&](int n) { return mark[static_cast<std::size_t>(n)] != 0; }))
            out.push_back(static_cast<int>(e));
    return out;
}

/// Load elements, support elements and elements around constrained points.
inline std::vector<int> protected_elements(const Mesh &mesh, const BoundarySpec &bc,
                                           std::span<const ResolvedConstraint> constraints)
{
    std::vector<int> nodes;
    for (const auto &l : bc.point_loads)
        nodes.push_back(l.node);
    for (const auto &f : bc.fixed_dofs)
        nodes.push_back(f.node);
    for (const auto &c : constraints)
        if (c.node >= 0)
            nodes.push_back(c.node);
    return elements_touching(mesh, nodes);
}

struct ConstraintResponse
{
    /// Physical value: signed displacement along the direction, sigma_PN or compliance.
    double raw = 0.0;
    SensitivityField sensitivity;
};

struct SensitivityBatch
{
    std::vector<ConstraintResponse> responses;
    int adjoint_solves = 0;
};

/// Evaluates every constraint and its sensitivity field for the current
/// topology. Point-displacement adjoints depend only on the point and the
/// direction, so one solve serves every load case that shares them; the
/// compliance adjoint is -u and needs no solve.
inline SensitivityBatch multi_load_sensitivities(const Mesh &mesh, const BoundarySpec &bc, const ActiveMesh &active,
                                                 const SystemMatrix &system, const Material &material,
                                                 std::span<const LoadVector> loads,
                                                 std::span<const DisplacementField> primal,
                                                 std::span<const TensorField> primal_tensors,
                                                 std::span<const ResolvedConstraint> constraints)
{
    SensitivityBatch out;
    std::map<std::tuple<int, double, double>, TensorField> displacement_adjoints;
    for (const auto &c : constraints)
    {
        const auto n = static_cast<std::size_t>(c.spec.load_case);
        if (n >= primal.size())
            throw InvalidInput("constraint references an unknown load case");
        ConstraintResponse r;
        switch (c.spec.kind)
        {
        case ConstraintKind::point_displacement: {
            const auto key = std::make_tuple(c.node, c.spec.direction.x, c.spec.direction.y);
            auto it = displacement_adjoints.find(key);
            if (it == displacement_adjoints.end())
            {
                const LoadVector rhs = adjoint_rhs_point_displacement(mesh, bc, c.node, c.spec.direction);
                const DisplacementField lambda = solve_adjoint(system, rhs);
                ++out.adjoint_solves;
                it = displacement_adjoints.emplace(key, recover(mesh, active, lambda, material)).first;
            }
            r.raw = c.spec.direction.x * primal[n][2 * c.node] + c.spec.direction.y * primal[n][2 * c.node + 1];
            r.sensitivity = topo_sensitivity(primal_tensors[n], it->second, material.poisson_ratio);
            break;
        }
        case ConstraintKind::pnorm_stress: {
            const PnormAdjoint adj = adjoint_rhs_pnorm(mesh, active, primal[n], material, c.spec.p_exponent);
            r.raw = adj.value;
            if (adj.zero_stress)
            {
                r.sensitivity.values.assign(mesh.num_elements(), 0.0);
                break;
            }
            const DisplacementField lambda = solve_adjoint(system, adj.rhs);
            ++out.adjoint_solves;
            r.sensitivity = topo_sensitivity(primal_tensors[n], recover(mesh, active, lambda, material),
                                             material.poisson_ratio);
            break;
        }
        case ConstraintKind::compliance: {
            r.raw = compliance(loads[n], primal[n]);
            const DisplacementField lambda = -primal[n];
            r.sensitivity = topo_sensitivity(primal_tensors[n], recover(mesh, active, lambda, material),
                                             material.poisson_ratio);
            break;
        }
        }
        out.responses.push_back(std::move(r));
    }
    return out;
}

} // namespace topt
