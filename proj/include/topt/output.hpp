#pragma once

// Result artifacts: density image, field dump, history table and summary.

#include "errors.hpp"
#include "optimizer.hpp"
#include "problem.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace topt {

namespace detail {

inline std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline void write_file(const std::filesystem::path &path, const std::string &text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out << text;
    out.close();
    if (!out)
        throw Error("failed writing " + path.string());
}

} // namespace detail

/// Plain PGM, one pixel per grid cell, top row first. Masked cells are 0.
inline std::string density_pgm(const Mesh &mesh, const TopologyState &topo)
{
    std::ostringstream os;
    os << "P2\n" << mesh.nx << " " << mesh.ny << "\n255\n";
    for (int iy = mesh.ny - 1; iy >= 0; --iy)
    {
        for (int ix = 0; ix < mesh.nx; ++ix)
        {
            const int e = mesh.element_at(ix, iy);
            const bool solid = e >= 0 && topo.solid[static_cast<std::size_t>(e)];
            os << (ix ? " " : "") << (solid ? 255 : 0);
        }
        os << "\n";
    }
    return os.str();
}

inline std::string fields_vtk(const Problem &problem, const OptimizationResult &result)
{
    using detail::format_number;
    const Mesh &mesh = problem.mesh;
    std::ostringstream os;
    os << "# vtk DataFile Version 3.0\n" << problem.name << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.num_nodes() << " double\n";
    for (const auto &p : mesh.nodes)
        os << format_number(p.x) << " " << format_number(p.y) << " 0\n";
    os << "CELLS " << mesh.num_elements() << " " << 5 * mesh.num_elements() << "\n";
    for (const auto &el : mesh.elements)
        os << "4 " << el[0] << " " << el[1] << " " << el[2] << " " << el[3] << "\n";
    os << "CELL_TYPES " << mesh.num_elements() << "\n";
    for (std::size_t e = 0; e < mesh.num_elements(); ++e)
        os << "9\n";
    os << "CELL_DATA " << mesh.num_elements() << "\n";
    auto scalars = [&](const char *name, auto value) {
        os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (std::size_t e = 0; e < mesh.num_elements(); ++e)
            os << format_number(value(e)) << "\n";
    };
    scalars("density", [&](std::size_t e) { return result.topology.solid[e] ? 1.0 : 0.0; });
    scalars("von_mises", [&](std::size_t e) { return result.von_mises.empty() ? 0.0 : result.von_mises[e]; });
    scalars("T_L", [&](std::size_t e) { return result.level_set.empty() ? 0.0 : result.level_set[e]; });
    return os.str();
}

/// One row per analysis. rel_compliance is the largest over load cases.
inline std::string history_csv(const OptimizationResult &result, std::size_t num_constraints)
{
    using detail::format_number;
    std::ostringstream os;
    os << "step,target_vf,achieved_vf,rel_compliance";
    for (const char *prefix : {"g_", "mu_", "gamma_"})
        for (std::size_t i = 1; i <= num_constraints; ++i)
            os << "," << prefix << i;
    os << ",fea_count,cond_estimate\n";
    for (const auto &h : result.history)
    {
        double rel = 0.0;
        for (double r : h.rel_compliance)
            rel = std::max(rel, r);
        os << h.step << "," << format_number(h.target_vf) << "," << format_number(h.achieved_vf) << ","
           << format_number(rel);
        for (const auto *column : {&h.g, &h.mu, &h.gamma})
            for (double v : *column)
                os << "," << format_number(v);
        os << "," << h.fea_count << ",";
        if (h.cond_estimate)
            os << format_number(*h.cond_estimate);
        os << "\n";
    }
    return os.str();
}

/// Bounds, achieved relative values and final volume fraction. Constraints
/// within 2% of their bound are marked active.
inline std::string summary_table(const Problem &problem, const OptimizationResult &result)
{
    using detail::fixed;
    std::ostringstream os;
    os << "problem: " << problem.name << "\n";
    os << "status: " << to_string(result.status);
    if (!result.diagnostic.empty())
        os << " (" << result.diagnostic << ")";
    os << "\n\n";
    os << "constraint        case  bound     result    g         active\n";
    for (std::size_t i = 0; i < problem.constraints.size(); ++i)
    {
        const auto &spec = problem.constraints[i].spec;
        const auto &ev = result.constraints[i];
        std::string label = to_string(spec.kind);
        label.resize(18, ' ');
        std::string cs = std::to_string(spec.load_case + 1);
        cs.resize(6, ' ');
        auto col = [](std::string s) {
            s.resize(10, ' ');
            return s;
        };
        const double ratio = ev.raw / ev.reference;
        os << label << cs << col(fixed(spec.bound, 2)) << col(fixed(ratio, 2)) << col(fixed(ev.g, 4))
           << (ev.g >= -0.02 * spec.bound ? "*" : "") << "\n";
    }
    os << "\nvolume fraction: " << fixed(result.topology.volume_fraction, 4) << "\n";
    for (std::size_t n = 0; n < result.rel_compliance.size(); ++n)
        os << "relative compliance (case " << n + 1 << "): " << fixed(result.rel_compliance[n], 4) << "\n";
    os << "outer steps: " << result.outer_steps << "\n";
    os << "FEA count: " << result.fea_count << "\n";
    return os.str();
}

inline void write_outputs(const Problem &problem, const OptimizationResult &result,
                          const std::filesystem::path &out_dir)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw Error("cannot create output directory " + out_dir.string() + ": " + ec.message());
    detail::write_file(out_dir / "density.pgm", density_pgm(problem.mesh, result.topology));
    detail::write_file(out_dir / "fields.vtk", fields_vtk(problem, result));
    detail::write_file(out_dir / "history.csv", history_csv(result, problem.constraints.size()));
    detail::write_file(out_dir / "summary.txt", summary_table(problem, result));
}

} // namespace topt
