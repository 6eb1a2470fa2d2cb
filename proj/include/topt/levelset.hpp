#pragma once

// Cut-off selection and domain extraction from a sensitivity field.

#include "errors.hpp"
#include "mesh.hpp"
#include "sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace topt {

struct Cut
{
    double tau = 0.0;
    /// Number of elements kept, counting ties at tau by ascending index.
    std::size_t keep_count = 0;
};

namespace detail {

/// Element indices ordered by descending value, ascending index on ties.
inline std::vector<std::size_t> ranking(const std::vector<double> &values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    return order;
}

} // namespace detail

/// Cut-off that keeps the element count closest to target_vf * N.
inline Cut find_tau(const SensitivityField &field, double target_vf)
{
    if (!(target_vf > 0.0) || target_vf > 1.0)
        throw InvalidInput("target volume fraction must lie in (0, 1]");
    const std::size_t n = field.values.size();
    if (n == 0)
        throw InvalidInput("empty sensitivity field");
    const auto keep = static_cast<std::size_t>(std::llround(target_vf * static_cast<double>(n)));
    const auto order = detail::ranking(field.values);
    Cut cut;
    cut.keep_count = std::min(keep, n);
    if (cut.keep_count == n)
    {
        const double lo = field.values[order.back()];
        cut.tau = lo - std::max(1.0, std::abs(lo));
    }
    else if (cut.keep_count == 0)
    {
        cut.tau = field.values[order.front()];
    }
    else
    {
        const double above = field.values[order[cut.keep_count - 1]];
        const double below = field.values[order[cut.keep_count]];
        cut.tau = above > below ? below + 0.5 * (above - below) : below;
    }
    return cut;
}

namespace detail {

inline TopologyState finish(const SensitivityField &field, std::vector<std::uint8_t> solid, double tau)
{
    for (int e : field.protected_elements)
        solid.at(static_cast<std::size_t>(e)) = 1;
    TopologyState topo{std::move(solid), 0.0, tau};
    topo.recount();
    return topo;
}

} // namespace detail

/// Omega_tau = {e : T_e > tau}, plus protected elements.
inline TopologyState extract_domain(const SensitivityField &field, double tau)
{
    if (!std::isfinite(tau))
        throw InvalidInput("cut-off must be finite");
    std::vector<std::uint8_t> solid(field.values.size());
    for (std::size_t e = 0; e < solid.size(); ++e)
        solid[e] = field.values[e] > tau ? 1 : 0;
    return detail::finish(field, std::move(solid), tau);
}

/// Rank-exact extraction: keeps exactly cut.keep_count elements (before
/// protection), breaking ties at the cut by ascending element index.
inline TopologyState extract_domain(const SensitivityField &field, const Cut &cut)
{
    const auto order = detail::ranking(field.values);
    std::vector<std::uint8_t> solid(field.values.size(), 0);
    for (std::size_t i = 0; i < cut.keep_count && i < order.size(); ++i)
        solid[order[i]] = 1;
    return detail::finish(field, std::move(solid), cut.tau);
}

/// Cone-weighted average over elements whose centroids lie within
/// radius * h; weights max(0, 1 - d / r), normalized per element.
inline SensitivityField smooth_filter(const Mesh &mesh, const SensitivityField &field, double radius)
{
    if (!(radius >= 0.0))
        throw InvalidInput("filter radius must be non-negative");
    if (field.values.size() != mesh.num_elements())
        throw InvalidInput("field size does not match the mesh");
    if (radius == 0.0)
        return field;
    SensitivityField out = field;
    const int reach = static_cast<int>(std::ceil(radius));
    for (std::size_t e = 0; e < mesh.num_elements(); ++e)
    {
        const auto [ix, iy] = mesh.element_cell[e];
        double sum = 0.0;
        double weight = 0.0;
        for (int dy = -reach; dy <= reach; ++dy)
        {
            for (int dx = -reach; dx <= reach; ++dx)
            {
                const int other = mesh.element_at(ix + dx, iy + dy);
                if (other < 0)
                    continue;
                const double w = 1.0 - std::hypot(dx, dy) / radius;
                if (w <= 0.0)
                    continue;
                sum += w * field.values[static_cast<std::size_t>(other)];
                weight += w;
            }
        }
        out.values[e] = sum / weight;
    }
    out.normalized = false;
    return out;
}

} // namespace topt
