#pragma once

#include "errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace topt {

struct Point2
{
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2 &, const Point2 &) = default;
};

/// Closed axis-aligned rectangle [x0, x1] x [y0, y1].
struct Rect
{
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    bool contains(Point2 p, double tol = 0.0) const
    {
        return p.x >= x0 - tol && p.x <= x1 + tol && p.y >= y0 - tol && p.y <= y1 + tol;
    }

    friend bool operator==(const Rect &, const Rect &) = default;
};

struct DomainSpec
{
    double width = 1.0;
    double height = 1.0;
    int nx = 1;
    int ny = 1;
    /// Rectangles removed from the design domain. An element is removed when
    /// its centroid lies inside any of them.
    std::vector<Rect> masked_regions;

    friend bool operator==(const DomainSpec &, const DomainSpec &) = default;
};

enum class Axis : int
{
    x = 0,
    y = 1
};

inline int dof_index(int node, Axis axis) { return 2 * node + static_cast<int>(axis); }

/// Structured mesh of square bilinear quadrilaterals. Element nodes are
/// ordered counter-clockwise starting at the lower-left corner.
struct Mesh
{
    std::vector<Point2> nodes;
    std::vector<std::array<int, 4>> elements;
    double h = 0.0;
    double element_area = 0.0;

    // Background grid the elements were cut from.
    int nx = 0;
    int ny = 0;
    double width = 0.0;
    double height = 0.0;
    std::vector<std::array<int, 2>> element_cell;
    std::vector<int> cell_element;

    std::size_t num_nodes() const { return nodes.size(); }
    std::size_t num_elements() const { return elements.size(); }
    std::size_t num_dofs() const { return 2 * nodes.size(); }

    /// Element index at grid cell (ix, iy), or -1 when masked or out of range.
    int element_at(int ix, int iy) const
    {
        if (ix < 0 || iy < 0 || ix >= nx || iy >= ny)
            return -1;
        return cell_element[static_cast<std::size_t>(iy) * nx + ix];
    }

    Point2 centroid(std::size_t e) const
    {
        const auto &n = elements[e];
        return {0.25 * (nodes[n[0]].x + nodes[n[1]].x + nodes[n[2]].x + nodes[n[3]].x),
                0.25 * (nodes[n[0]].y + nodes[n[1]].y + nodes[n[2]].y + nodes[n[3]].y)};
    }

    /// Elements sharing an edge with e.
    std::vector<int> edge_neighbors(std::size_t e) const
    {
        std::vector<int> out;
        const auto [ix, iy] = element_cell[e];
        for (auto [dx, dy] : {std::array{-1, 0}, std::array{1, 0}, std::array{0, -1}, std::array{0, 1}})
        {
            const int other = element_at(ix + dx, iy + dy);
            if (other >= 0)
                out.push_back(other);
        }
        return out;
    }
};

struct FixedDof
{
    int node = 0;
    Axis axis = Axis::x;

    friend bool operator==(const FixedDof &, const FixedDof &) = default;
};

struct PointLoad
{
    int load_case = 0;
    int node = 0;
    Point2 direction{0.0, -1.0};
    double magnitude = 1.0;
};

struct BoundarySpec
{
    std::vector<FixedDof> fixed_dofs;
    std::vector<PointLoad> point_loads;
    int num_load_cases = 1;

    std::vector<std::uint8_t> fixed_mask(std::size_t num_dofs) const
    {
        std::vector<std::uint8_t> mask(num_dofs, 0);
        for (const auto &f : fixed_dofs)
            mask[static_cast<std::size_t>(dof_index(f.node, f.axis))] = 1;
        return mask;
    }
};

struct TopologyState
{
    std::vector<std::uint8_t> solid;
    double volume_fraction = 1.0;
    double tau = -std::numeric_limits<double>::infinity();

    static TopologyState full(std::size_t num_elements)
    {
        return {std::vector<std::uint8_t>(num_elements, 1), 1.0, -std::numeric_limits<double>::infinity()};
    }

    std::size_t solid_count() const { return static_cast<std::size_t>(std::count(solid.begin(), solid.end(), 1)); }

    void recount()
    {
        volume_fraction = solid.empty() ? 0.0 : static_cast<double>(solid_count()) / static_cast<double>(solid.size());
    }

    bool same_set(const TopologyState &other) const { return solid == other.solid; }
};

/// Solid part of the mesh with its reduced equation numbering.
struct ActiveMesh
{
    std::vector<int> elements;
    std::vector<std::uint8_t> element_active;
    std::vector<int> node_map;      ///< mesh node -> active node, -1 if inactive
    std::vector<int> equation;      ///< mesh dof -> reduced equation, -1 if fixed or inactive
    std::vector<int> dangling_dofs; ///< dofs of nodes touched by no solid element
    std::vector<int> fixed_dofs;    ///< fixed dofs that belong to active nodes
    int num_active_nodes = 0;
    int num_equations = 0;
};

inline Mesh build_mesh(const DomainSpec &spec)
{
    if (spec.nx < 1 || spec.ny < 1)
        throw InvalidInput("element counts must be at least 1 (got nx=" + std::to_string(spec.nx) +
                           ", ny=" + std::to_string(spec.ny) + ")");
    if (!(spec.width > 0.0) || !(spec.height > 0.0))
        throw InvalidInput("domain width and height must be positive");
    const double hx = spec.width / spec.nx;
    const double hy = spec.height / spec.ny;
    if (std::abs(hx - hy) > 1e-9 * std::max(hx, hy))
        throw InvalidInput("elements must be square: width/nx != height/ny");
    const Rect bounds{0.0, 0.0, spec.width, spec.height};
    const double tol = 1e-12 * std::max(spec.width, spec.height);
    for (const auto &r : spec.masked_regions)
    {
        if (!(r.x0 <= r.x1 && r.y0 <= r.y1) || !bounds.contains({r.x0, r.y0}, tol) ||
            !bounds.contains({r.x1, r.y1}, tol))
            throw InvalidInput("masked region lies outside the domain");
    }

    Mesh mesh;
    mesh.nx = spec.nx;
    mesh.ny = spec.ny;
    mesh.width = spec.width;
    mesh.height = spec.height;
    mesh.h = hx;
    mesh.element_area = hx * hx;

    const auto nx = static_cast<std::size_t>(spec.nx);
    const auto ny = static_cast<std::size_t>(spec.ny);
    std::vector<std::uint8_t> keep(nx * ny, 0);
    for (std::size_t iy = 0; iy < ny; ++iy)
    {
        for (std::size_t ix = 0; ix < nx; ++ix)
        {
            const Point2 c{spec.width * (static_cast<double>(ix) + 0.5) / spec.nx,
                           spec.height * (static_cast<double>(iy) + 0.5) / spec.ny};
            const bool masked = std::any_of(spec.masked_regions.begin(), spec.masked_regions.end(),
                                            [&](const Rect &r) { return r.contains(c); });
            keep[iy * nx + ix] = masked ? 0 : 1;
        }
    }
    if (std::find(keep.begin(), keep.end(), 1) == keep.end())
        throw InvalidInput("masked regions cover the whole domain");

    // Row-major grid node ids, compacted to the nodes used by some element.
    std::vector<int> grid_node((nx + 1) * (ny + 1), -1);
    auto grid_id = [&](std::size_t ix, std::size_t iy) { return iy * (nx + 1) + ix; };
    for (std::size_t iy = 0; iy < ny; ++iy)
        for (std::size_t ix = 0; ix < nx; ++ix)
            if (keep[iy * nx + ix])
                for (auto [dx, dy] : {std::array<std::size_t, 2>{0, 0}, {1, 0}, {1, 1}, {0, 1}})
                    grid_node[grid_id(ix + dx, iy + dy)] = 0;
    for (std::size_t iy = 0; iy <= ny; ++iy)
    {
        for (std::size_t ix = 0; ix <= nx; ++ix)
        {
            auto &id = grid_node[grid_id(ix, iy)];
            if (id < 0)
                continue;
            id = static_cast<int>(mesh.nodes.size());
            mesh.nodes.push_back({spec.width * static_cast<double>(ix) / spec.nx,
                                  spec.height * static_cast<double>(iy) / spec.ny});
        }
    }

    mesh.cell_element.assign(nx * ny, -1);
    for (std::size_t iy = 0; iy < ny; ++iy)
    {
        for (std::size_t ix = 0; ix < nx; ++ix)
        {
            if (!keep[iy * nx + ix])
                continue;
            mesh.cell_element[iy * nx + ix] = static_cast<int>(mesh.elements.size());
            mesh.elements.push_back({grid_node[grid_id(ix, iy)], grid_node[grid_id(ix + 1, iy)],
                                     grid_node[grid_id(ix + 1, iy + 1)], grid_node[grid_id(ix, iy + 1)]});
            mesh.element_cell.push_back({static_cast<int>(ix), static_cast<int>(iy)});
        }
    }
    return mesh;
}

/// Nearest node to p; ties go to the lowest index.
inline int locate_node(const Mesh &mesh, Point2 p)
{
    const double tol = 1e-9 * std::max(mesh.width, mesh.height);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !Rect{0.0, 0.0, mesh.width, mesh.height}.contains(p, tol))
        throw InvalidInput("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                           ") lies outside the domain");
    const double tie = 1e-12 * mesh.h * mesh.h;
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    {
        const double dx = mesh.nodes[i].x - p.x;
        const double dy = mesh.nodes[i].y - p.y;
        const double d = dx * dx + dy * dy;
        if (d < best_d - tie)
        {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

/// All nodes inside the closed rectangle (with a small geometric tolerance).
inline std::vector<int> nodes_in_region(const Mesh &mesh, const Rect &region)
{
    const double tol = 1e-9 * mesh.h;
    std::vector<int> out;
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
        if (region.contains(mesh.nodes[i], tol))
            out.push_back(static_cast<int>(i));
    return out;
}

inline void validate_boundary(const Mesh &mesh, const BoundarySpec &bc)
{
    const auto n = static_cast<int>(mesh.num_nodes());
    for (const auto &f : bc.fixed_dofs)
        if (f.node < 0 || f.node >= n)
            throw InvalidInput("fixed node index out of range");
    const auto fixed = bc.fixed_mask(mesh.num_dofs());
    if (std::accumulate(fixed.begin(), fixed.end(), 0) < 3)
        throw InvalidInput("at least 3 degrees of freedom must be fixed");
    if (bc.num_load_cases < 1)
        throw InvalidInput("at least one load case is required");
    for (const auto &l : bc.point_loads)
    {
        if (l.node < 0 || l.node >= n)
            throw InvalidInput("load node index out of range");
        if (l.load_case < 0 || l.load_case >= bc.num_load_cases)
            throw InvalidInput("load references an unknown load case");
        if (fixed[static_cast<std::size_t>(dof_index(l.node, Axis::x))] &&
            fixed[static_cast<std::size_t>(dof_index(l.node, Axis::y))])
            throw InvalidInput("load applied to a fully fixed node " + std::to_string(l.node));
    }
}

/// Restricts the mesh to the solid elements of `topo` and numbers the free
/// equations of the reduced system.
inline ActiveMesh active_submesh(const Mesh &mesh, const BoundarySpec &bc, const TopologyState &topo)
{
    if (topo.solid.size() != mesh.num_elements())
        throw InvalidInput("topology size does not match the mesh element count");

    ActiveMesh active;
    active.element_active.assign(mesh.num_elements(), 0);
    std::vector<std::uint8_t> node_used(mesh.num_nodes(), 0);
    for (std::size_t e = 0; e < mesh.num_elements(); ++e)
    {
        if (!topo.solid[e])
            continue;
        active.elements.push_back(static_cast<int>(e));
        active.element_active[e] = 1;
        for (int n : mesh.elements[e])
            node_used[static_cast<std::size_t>(n)] = 1;
    }

    for (const auto &l : bc.point_loads)
        if (!node_used[static_cast<std::size_t>(l.node)])
            throw LoadPathError("loaded node " + std::to_string(l.node) + " has no attached solid element");

    const auto fixed = bc.fixed_mask(mesh.num_dofs());
    active.node_map.assign(mesh.num_nodes(), -1);
    active.equation.assign(mesh.num_dofs(), -1);
    for (std::size_t n = 0; n < mesh.num_nodes(); ++n)
    {
        if (!node_used[n])
        {
            active.dangling_dofs.push_back(static_cast<int>(2 * n));
            active.dangling_dofs.push_back(static_cast<int>(2 * n + 1));
            continue;
        }
        active.node_map[n] = active.num_active_nodes++;
        for (std::size_t d = 2 * n; d < 2 * n + 2; ++d)
        {
            if (fixed[d])
                active.fixed_dofs.push_back(static_cast<int>(d));
            else
                active.equation[d] = active.num_equations++;
        }
    }
    return active;
}

/// Removes edge-connected groups of solid elements that cannot be held in
/// equilibrium by the supports they touch (fewer than three fixed dofs, a
/// single pinned node, or no restraint along one axis). Returns the number of
/// elements removed.
inline std::size_t prune_unsupported(const Mesh &mesh, const BoundarySpec &bc, TopologyState &topo)
{
    const auto fixed = bc.fixed_mask(mesh.num_dofs());
    std::vector<int> component(mesh.num_elements(), -1);
    std::size_t removed = 0;
    std::vector<int> stack;
    std::vector<int> members;
    int next_id = 0;
    for (std::size_t seed = 0; seed < mesh.num_elements(); ++seed)
    {
        if (!topo.solid[seed] || component[seed] >= 0)
            continue;
        members.clear();
        stack.assign(1, static_cast<int>(seed));
        component[seed] = next_id;
        while (!stack.empty())
        {
            const int e = stack.back();
            stack.pop_back();
            members.push_back(e);
            for (int nb : mesh.edge_neighbors(static_cast<std::size_t>(e)))
            {
                if (topo.solid[static_cast<std::size_t>(nb)] && component[static_cast<std::size_t>(nb)] < 0)
                {
                    component[static_cast<std::size_t>(nb)] = next_id;
                    stack.push_back(nb);
                }
            }
        }
        ++next_id;

        std::vector<int> nodes;
        for (int e : members)
            for (int n : mesh.elements[static_cast<std::size_t>(e)])
                nodes.push_back(n);
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        int count = 0;
        int fixed_nodes = 0;
        bool has_x = false;
        bool has_y = false;
        for (int n : nodes)
        {
            const bool fx = fixed[static_cast<std::size_t>(2 * n)] != 0;
            const bool fy = fixed[static_cast<std::size_t>(2 * n + 1)] != 0;
            count += static_cast<int>(fx) + static_cast<int>(fy);
            fixed_nodes += (fx || fy) ? 1 : 0;
            has_x = has_x || fx;
            has_y = has_y || fy;
        }
        if (count >= 3 && fixed_nodes >= 2 && has_x && has_y)
            continue;
        for (int e : members)
            topo.solid[static_cast<std::size_t>(e)] = 0;
        removed += members.size();
    }
    if (removed > 0)
        topo.recount();
    return removed;
}

} // namespace topt
