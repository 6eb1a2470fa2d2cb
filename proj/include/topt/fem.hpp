#pragma once

// Plane-stress bilinear quadrilateral analysis over the active submesh.

#include "errors.hpp"
#include "mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <memory>
#include <vector>

namespace topt {

struct Material
{
    double youngs_modulus = 2e11;
    double poisson_ratio = 0.33;

    void validate() const
    {
        if (!(youngs_modulus > 0.0) || !std::isfinite(youngs_modulus))
            throw InvalidInput("Young's modulus must be positive");
        if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5))
            throw InvalidInput("Poisson ratio must lie in [0, 0.5)");
    }

    /// Plane-stress constitutive matrix acting on (exx, eyy, gxy).
    Eigen::Matrix3d constitutive() const
    {
        const double nu = poisson_ratio;
        const double c = youngs_modulus / (1.0 - nu * nu);
        Eigen::Matrix3d d;
        d << c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0;
        return d;
    }

    friend bool operator==(const Material &, const Material &) = default;
};

using ElementMatrix = Eigen::Matrix<double, 8, 8>;
using ElementVector = Eigen::Matrix<double, 8, 1>;
using StrainDisplacement = Eigen::Matrix<double, 3, 8>;

/// Full-mesh vector of nodal 2-vectors, dof 2n+axis. Used for loads, primal
/// displacements and adjoint fields alike.
using DisplacementField = Eigen::VectorXd;
using LoadVector = Eigen::VectorXd;

/// Symmetric 2x2 tensor.
struct Sym2
{
    double xx = 0.0;
    double yy = 0.0;
    double xy = 0.0;

    double trace() const { return xx + yy; }
    friend double contract(const Sym2 &a, const Sym2 &b) { return a.xx * b.xx + a.yy * b.yy + 2.0 * a.xy * b.xy; }
};

/// Centroid stress and strain per mesh element; zero on void elements.
struct TensorField
{
    std::vector<Sym2> stress;
    std::vector<Sym2> strain;
};

/// Strain-displacement matrix of a square element of side h at natural
/// coordinates (xi, eta). Rows are exx, eyy, gxy (engineering shear).
inline StrainDisplacement strain_displacement(double h, double xi, double eta)
{
    const double dxi[4] = {-(1 - eta) / 4, (1 - eta) / 4, (1 + eta) / 4, -(1 + eta) / 4};
    const double deta[4] = {-(1 - xi) / 4, -(1 + xi) / 4, (1 + xi) / 4, (1 - xi) / 4};
    const double s = 2.0 / h;
    StrainDisplacement b = StrainDisplacement::Zero();
    for (int a = 0; a < 4; ++a)
    {
        const double dx = s * dxi[a];
        const double dy = s * deta[a];
        b(0, 2 * a) = dx;
        b(1, 2 * a + 1) = dy;
        b(2, 2 * a) = dy;
        b(2, 2 * a + 1) = dx;
    }
    return b;
}

/// Unit-thickness element stiffness; the result does not depend on h for
/// square elements. Closed form of the exact bilinear integral.
inline ElementMatrix element_stiffness(const Material &material, double h)
{
    (void)h;
    const double nu = material.poisson_ratio;
    const double k[8] = {0.5 - nu / 6.0,          0.125 + nu / 8.0,  -0.25 - nu / 12.0, -0.125 + 3.0 * nu / 8.0,
                         -0.25 + nu / 12.0,       -0.125 - nu / 8.0, nu / 6.0,          0.125 - 3.0 * nu / 8.0};
    ElementMatrix ke;
    // clang-format off
    ke << k[0], k[1], k[2], k[3], k[4], k[5], k[6], k[7],
          k[1], k[0], k[7], k[6], k[5], k[4], k[3], k[2],
          k[2], k[7], k[0], k[5], k[6], k[3], k[4], k[1],
          k[3], k[6], k[5], k[0], k[7], k[2], k[1], k[4],
          k[4], k[5], k[6], k[7], k[0], k[1], k[2], k[3],
          k[5], k[4], k[3], k[2], k[1], k[0], k[7], k[6],
          k[6], k[3], k[4], k[1], k[2], k[7], k[0], k[5],
          k[7], k[2], k[1], k[4], k[3], k[6], k[5], k[0];
    // clang-format on
    return material.youngs_modulus / (1.0 - nu * nu) * ke;
}

inline std::array<int, 8> element_dofs(const Mesh &mesh, std::size_t e)
{
    const auto &n = mesh.elements[e];
    return {2 * n[0], 2 * n[0] + 1, 2 * n[1], 2 * n[1] + 1, 2 * n[2], 2 * n[2] + 1, 2 * n[3], 2 * n[3] + 1};
}

inline ElementVector gather(const Mesh &mesh, std::size_t e, const Eigen::VectorXd &field)
{
    ElementVector ue;
    const auto dofs = element_dofs(mesh, e);
    for (int i = 0; i < 8; ++i)
        ue[i] = field[dofs[static_cast<std::size_t>(i)]];
    return ue;
}

/// Reduced stiffness matrix over the free equations of an active mesh,
/// together with its Cholesky factorization.
class SystemMatrix
{
public:
    using Sparse = Eigen::SparseMatrix<double>;
    using Factor = Eigen::SimplicialLLT<Sparse>;

    SystemMatrix() = default;

    /// Wraps an arbitrary SPD matrix (equation i maps to dof i).
    static SystemMatrix from_matrix(Sparse k)
    {
        SystemMatrix s;
        s.equation_.resize(k.rows());
        for (Eigen::Index i = 0; i < k.rows(); ++i)
            s.equation_[static_cast<std::size_t>(i)] = static_cast<int>(i);
        s.k_ = std::move(k);
        s.factorize();
        return s;
    }

    static SystemMatrix from_parts(Sparse k, std::vector<int> equation)
    {
        SystemMatrix s;
        s.k_ = std::move(k);
        s.equation_ = std::move(equation);
        s.factorize();
        return s;
    }

    const Sparse &matrix() const { return k_; }
    const Factor &factor() const { return *factor_; }
    Eigen::Index size() const { return k_.rows(); }
    std::size_t num_dofs() const { return equation_.size(); }
    const std::vector<int> &equation() const { return equation_; }

    Eigen::VectorXd reduce(const Eigen::VectorXd &full) const
    {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(k_.rows());
        for (std::size_t d = 0; d < equation_.size(); ++d)
            if (equation_[d] >= 0)
                r[equation_[d]] = full[static_cast<Eigen::Index>(d)];
        return r;
    }

    Eigen::VectorXd expand(const Eigen::VectorXd &reduced) const
    {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(equation_.size()));
        for (std::size_t d = 0; d < equation_.size(); ++d)
            if (equation_[d] >= 0)
                full[static_cast<Eigen::Index>(d)] = reduced[equation_[d]];
        return full;
    }

private:
    void factorize()
    {
        if (k_.rows() == 0)
            throw SingularSystemError("no free degrees of freedom");
        auto f = std::make_shared<Factor>();
        f->compute(k_);
        if (f->info() != Eigen::Success)
            throw SingularSystemError("stiffness matrix is not positive definite (insufficient supports)");
        factor_ = std::move(f);
    }

    Sparse k_;
    std::vector<int> equation_;
    std::shared_ptr<const Factor> factor_;
};

inline SystemMatrix assemble(const Mesh &mesh, const ActiveMesh &active, const Material &material)
{
    if (active.elements.empty())
        throw InvalidInput("cannot assemble an empty active mesh");
    material.validate();
    const ElementMatrix ke = element_stiffness(material, mesh.h);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(active.elements.size() * 64);
    for (int e : active.elements)
    {
        const auto dofs = element_dofs(mesh, static_cast<std::size_t>(e));
        for (int i = 0; i < 8; ++i)
        {
            const int row = active.equation[static_cast<std::size_t>(dofs[static_cast<std::size_t>(i)])];
            if (row < 0)
                continue;
            for (int j = 0; j < 8; ++j)
            {
                const int col = active.equation[static_cast<std::size_t>(dofs[static_cast<std::size_t>(j)])];
                if (col >= 0)
                    triplets.emplace_back(row, col, ke(i, j));
            }
        }
    }
    SystemMatrix::Sparse k(active.num_equations, active.num_equations);
    k.setFromTriplets(triplets.begin(), triplets.end());
    return SystemMatrix::from_parts(std::move(k), active.equation);
}

inline constexpr double solve_tolerance = 1e-8;

/// Solves K u = f on the free equations. Loads on fixed or inactive dofs are
/// ignored; the result is zero there.
inline DisplacementField solve(const SystemMatrix &system, const LoadVector &rhs)
{
    if (static_cast<std::size_t>(rhs.size()) != system.num_dofs())
        throw InvalidInput("load vector size does not match the mesh");
    if (!rhs.allFinite())
        throw SolverError("load vector contains NaN or infinity");
    const Eigen::VectorXd f = system.reduce(rhs);
    const double fnorm = f.norm();
    if (fnorm == 0.0)
        return Eigen::VectorXd::Zero(rhs.size());
    Eigen::VectorXd u = system.factor().solve(f);
    Eigen::VectorXd r = f - system.matrix() * u;
    // Iterative refinement keeps the residual contract on poorly scaled systems.
    for (int pass = 0; pass < 3 && r.norm() > solve_tolerance * fnorm; ++pass)
    {
        u += system.factor().solve(r);
        r = f - system.matrix() * u;
    }
    if (!u.allFinite())
        throw SolverError("solution contains NaN");
    if (r.norm() > solve_tolerance * fnorm)
        throw SolverError("relative residual " + std::to_string(r.norm() / fnorm) + " exceeds tolerance");
    return system.expand(u);
}

inline TensorField recover(const Mesh &mesh, const ActiveMesh &active, const DisplacementField &u,
                           const Material &material)
{
    TensorField out;
    out.stress.assign(mesh.num_elements(), Sym2{});
    out.strain.assign(mesh.num_elements(), Sym2{});
    const StrainDisplacement b = strain_displacement(mesh.h, 0.0, 0.0);
    const Eigen::Matrix3d d = material.constitutive();
    for (int e : active.elements)
    {
        const auto idx = static_cast<std::size_t>(e);
        const Eigen::Vector3d eps = b * gather(mesh, idx, u);
        const Eigen::Vector3d sig = d * eps;
        out.strain[idx] = {eps[0], eps[1], 0.5 * eps[2]};
        out.stress[idx] = {sig[0], sig[1], sig[2]};
    }
    return out;
}

inline double von_mises(const Sym2 &s)
{
    return std::sqrt(std::max(0.0, s.xx * s.xx - s.xx * s.yy + s.yy * s.yy + 3.0 * s.xy * s.xy));
}

inline double compliance(const LoadVector &loads, const DisplacementField &u) { return loads.dot(u); }

struct ConditionEstimate
{
    double value = 0.0;
    double lambda_max = 0.0;
    double lambda_min = 0.0;
    /// False when an iteration cap was hit; `value` is then a lower bound.
    bool converged = true;
};

/// Ratio of extreme eigenvalues: power iteration for the largest, inverse
/// iteration through the stored factorization for the smallest.
inline ConditionEstimate condition_estimate(const SystemMatrix &system, int max_iterations = 2000,
                                            double tolerance = 1e-6)
{
    const Eigen::Index n = system.size();
    ConditionEstimate out;
    auto start = [n]() {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = 1.0 + 0.37 * std::sin(1.3 * static_cast<double>(i) + 0.5);
        return Eigen::VectorXd(v.normalized());
    };

    Eigen::VectorXd v = start();
    double lmax = 0.0;
    bool max_ok = false;
    for (int it = 0; it < max_iterations; ++it)
    {
        Eigen::VectorXd w = system.matrix() * v;
        const double rq = v.dot(w);
        v = w.normalized();
        if (it > 0 && std::abs(rq - lmax) <= tolerance * std::abs(rq))
        {
            lmax = rq;
            max_ok = true;
            break;
        }
        lmax = rq;
    }

    v = start();
    double mu = 0.0; // largest eigenvalue of K^-1
    bool min_ok = false;
    for (int it = 0; it < max_iterations; ++it)
    {
        Eigen::VectorXd w = system.factor().solve(v);
        const double rq = v.dot(w);
        v = w.normalized();
        if (it > 0 && std::abs(rq - mu) <= tolerance * std::abs(rq))
        {
            mu = rq;
            min_ok = true;
            break;
        }
        mu = rq;
    }
    out.lambda_max = lmax;
    out.lambda_min = 1.0 / mu;
    out.value = lmax * mu;
    out.converged = max_ok && min_ok;
    return out;
}

} // namespace topt
