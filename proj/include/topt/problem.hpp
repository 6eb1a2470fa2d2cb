#pragma once

// Problem descriptions: the geometric ProblemSpec that configuration files
// and built-in benchmarks produce, and the mesh-bound Problem the optimizer
// consumes.

#include "config.hpp"
#include "errors.hpp"
#include "fem.hpp"
#include "mesh.hpp"
#include "sensitivity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace topt {

struct SupportSpec
{
    Rect region;
    bool fix_x = true;
    bool fix_y = true;

    friend bool operator==(const SupportSpec &, const SupportSpec &) = default;
};

struct LoadSpec
{
    int load_case = 0;
    Point2 point;
    Point2 direction{0.0, -1.0};
    double magnitude = 1.0;

    friend bool operator==(const LoadSpec &, const LoadSpec &) = default;
};

struct ProblemSpec
{
    std::string name = "problem";
    DomainSpec domain;
    Material material;
    std::vector<SupportSpec> supports;
    std::vector<LoadSpec> loads;
    std::vector<ConstraintSpec> constraints;
    ObjectiveKind objective = ObjectiveKind::volume;
    /// Stop once the volume fraction reaches this value (0 disables).
    double target_vf = 0.0;
    OptimizerConfig config;

    int num_load_cases() const
    {
        int n = 0;
        for (const auto &l : loads)
            n = std::max(n, l.load_case + 1);
        return n;
    }

    void validate() const
    {
        material.validate();
        config.validate();
        if (loads.empty())
            throw InvalidInput("at least one load is required");
        const int cases = num_load_cases();
        std::vector<int> per_case(static_cast<std::size_t>(cases), 0);
        for (const auto &l : loads)
        {
            if (l.load_case < 0)
                throw InvalidInput("load case ids start at 1");
            if (std::abs(std::hypot(l.direction.x, l.direction.y) - 1.0) > 1e-9)
                throw InvalidInput("load direction must be a unit vector");
            if (!std::isfinite(l.magnitude) || l.magnitude == 0.0)
                throw InvalidInput("load magnitude must be finite and non-zero");
            ++per_case[static_cast<std::size_t>(l.load_case)];
        }
        for (int c = 0; c < cases; ++c)
            if (per_case[static_cast<std::size_t>(c)] == 0)
                throw InvalidInput("load case " + std::to_string(c + 1) + " has no loads");
        for (const auto &c : constraints)
        {
            c.validate();
            if (c.load_case < 0 || c.load_case >= cases)
                throw InvalidInput("constraint references load case " + std::to_string(c.load_case + 1) + " but only " +
                                   std::to_string(cases) + " load case(s) exist");
        }
        if (supports.empty())
            throw InvalidInput("at least one support is required");
        if (!(target_vf >= 0.0 && target_vf < 1.0))
            throw InvalidInput("target volume fraction must lie in [0, 1)");
        if (constraints.empty() && target_vf == 0.0)
            throw InvalidInput("a problem without constraints needs a target volume fraction");
        if (objective == ObjectiveKind::volume && constraints.empty())
            throw InvalidInput("volume minimization needs at least one constraint");
    }

    friend bool operator==(const ProblemSpec &, const ProblemSpec &) = default;
};

/// A ProblemSpec bound to its mesh. Load vectors are stored at unit scale
/// (largest point-load magnitude of each case equal to 1); `load_scale`
/// restores physical units. Every decision the optimizer makes uses ratios
/// to full-domain reference values, so it is independent of the load scale.
struct Problem
{
    std::string name;
    Mesh mesh;
    BoundarySpec boundary;
    Material material;
    std::vector<LoadVector> loads;
    std::vector<double> load_scale;
    std::vector<ResolvedConstraint> constraints;
    ObjectiveKind objective = ObjectiveKind::volume;
    double target_vf = 0.0;
    std::vector<int> protected_elements;
};

inline Problem resolve(const ProblemSpec &spec, int mesh_scale = 1)
{
    spec.validate();
    if (mesh_scale < 1)
        throw InvalidInput("mesh scale must be at least 1");
    Problem p;
    p.name = spec.name;
    DomainSpec domain = spec.domain;
    domain.nx *= mesh_scale;
    domain.ny *= mesh_scale;
    p.mesh = build_mesh(domain);
    p.material = spec.material;
    p.objective = spec.objective;
    p.target_vf = spec.target_vf;

    for (const auto &s : spec.supports)
    {
        const auto nodes = nodes_in_region(p.mesh, s.region);
        if (nodes.empty())
            throw InvalidInput("support region contains no mesh node");
        for (int n : nodes)
        {
            if (s.fix_x)
                p.boundary.fixed_dofs.push_back({n, Axis::x});
            if (s.fix_y)
                p.boundary.fixed_dofs.push_back({n, Axis::y});
        }
    }
    std::sort(p.boundary.fixed_dofs.begin(), p.boundary.fixed_dofs.end(),
              [](const FixedDof &a, const FixedDof &b) { return dof_index(a.node, a.axis) < dof_index(b.node, b.axis); });
    p.boundary.fixed_dofs.erase(std::unique(p.boundary.fixed_dofs.begin(), p.boundary.fixed_dofs.end()),
                                p.boundary.fixed_dofs.end());

    const int cases = spec.num_load_cases();
    p.boundary.num_load_cases = cases;
    p.load_scale.assign(static_cast<std::size_t>(cases), 0.0);
    for (const auto &l : spec.loads)
    {
        auto &scale = p.load_scale[static_cast<std::size_t>(l.load_case)];
        scale = std::max(scale, std::abs(l.magnitude));
    }
    p.loads.assign(static_cast<std::size_t>(cases), LoadVector::Zero(static_cast<Eigen::Index>(p.mesh.num_dofs())));
    for (const auto &l : spec.loads)
    {
        const int node = locate_node(p.mesh, l.point);
        p.boundary.point_loads.push_back({l.load_case, node, l.direction, l.magnitude});
        const double m = l.magnitude / p.load_scale[static_cast<std::size_t>(l.load_case)];
        auto &f = p.loads[static_cast<std::size_t>(l.load_case)];
        f[2 * node] += m * l.direction.x;
        f[2 * node + 1] += m * l.direction.y;
    }
    validate_boundary(p.mesh, p.boundary);

    for (const auto &c : spec.constraints)
    {
        ResolvedConstraint rc{c, -1};
        if (c.kind == ConstraintKind::point_displacement)
        {
            rc.node = locate_node(p.mesh, c.point);
            // Raises when the point is fixed along the measured direction.
            (void)adjoint_rhs_point_displacement(p.mesh, p.boundary, rc.node, c.direction);
        }
        p.constraints.push_back(rc);
    }
    p.protected_elements = protected_elements(p.mesh, p.boundary, p.constraints);
    return p;
}

// ---------------------------------------------------------------------------
// Built-in benchmarks

struct BenchmarkBounds
{
    std::optional<double> displacement;
    std::optional<double> stress;
};

inline const std::vector<std::string> &builtin_names()
{
    static const std::vector<std::string> names = {"l-bracket-single", "l-bracket-multi", "cantilever-single",
                                                   "cantilever-multi", "mitchell-multi"};
    return names;
}

namespace detail {

inline ConstraintSpec displacement_constraint(int load_case, Point2 at, Point2 dir, double bound)
{
    ConstraintSpec c;
    c.kind = ConstraintKind::point_displacement;
    c.load_case = load_case;
    c.point = at;
    c.direction = dir;
    c.bound = bound;
    return c;
}

inline ConstraintSpec stress_constraint(int load_case, double bound)
{
    ConstraintSpec c;
    c.kind = ConstraintKind::pnorm_stress;
    c.load_case = load_case;
    c.bound = bound;
    return c;
}

} // namespace detail

/// Benchmark setups at roughly 2000 elements. Displacement bounds default to
/// 1.5; stress bounds default to 1000 for the single-load L-bracket and 1.5
/// elsewhere.
inline ProblemSpec builtin_problem(const std::string &name, BenchmarkBounds bounds = {})
{
    using detail::displacement_constraint;
    using detail::stress_constraint;
    ProblemSpec p;
    p.name = name;
    const Point2 down{0.0, -1.0};
    const Point2 right{1.0, 0.0};

    if (name == "l-bracket-single" || name == "l-bracket-multi")
    {
        // Unit square minus its top-right 0.6 x 0.6 corner; arms 0.4 wide.
        p.domain = {1.0, 1.0, 55, 55, {Rect{0.4, 0.4, 1.0, 1.0}}};
        p.supports = {{Rect{0.0, 1.0, 0.4, 1.0}, true, true}};
        const Point2 tip{1.0, 0.2};
        const double delta = bounds.displacement.value_or(1.5);
        p.loads = {{0, tip, down, 1.0}};
        if (name == "l-bracket-single")
        {
            const double sigma = bounds.stress.value_or(1000.0);
            p.constraints = {displacement_constraint(0, tip, down, delta), stress_constraint(0, sigma)};
        }
        else
        {
            const double sigma = bounds.stress.value_or(1.5);
            p.loads.push_back({1, tip, right, 1.0});
            p.constraints = {displacement_constraint(0, tip, down, delta), stress_constraint(0, sigma),
                             displacement_constraint(1, tip, right, delta), stress_constraint(1, sigma)};
        }
        return p;
    }
    if (name == "cantilever-single" || name == "cantilever-multi")
    {
        p.domain = {2.0, 1.0, 64, 32, {}};
        p.supports = {{Rect{0.0, 0.0, 0.0, 1.0}, true, true}};
        const double delta = bounds.displacement.value_or(1.5);
        const Point2 a{2.0, 0.5};
        p.loads = {{0, a, down, 1.0}};
        if (name == "cantilever-single")
        {
            const Point2 q{1.0, 1.0};
            p.constraints = {displacement_constraint(0, a, down, delta), displacement_constraint(0, q, down, delta)};
        }
        else
        {
            const Point2 corner{2.0, 1.0};
            p.loads.push_back({1, corner, right, 1.0});
            p.constraints = {displacement_constraint(0, a, down, delta),
                             displacement_constraint(1, corner, right, delta)};
        }
        return p;
    }
    if (name == "mitchell-multi")
    {
        p.domain = {2.0, 1.0, 64, 32, {}};
        p.supports = {{Rect{0.0, 0.0, 0.0, 0.0}, true, true}, {Rect{2.0, 0.0, 2.0, 0.0}, true, true}};
        const Point2 mid{1.0, 0.0};
        const double delta = bounds.displacement.value_or(1.5);
        const double sigma = bounds.stress.value_or(1.5);
        p.loads = {{0, mid, down, 1.0}, {1, mid, right, 1.0}};
        p.constraints = {displacement_constraint(0, mid, down, delta), stress_constraint(0, sigma),
                         displacement_constraint(1, mid, right, delta), stress_constraint(1, sigma)};
        return p;
    }

    std::string menu;
    for (const auto &n : builtin_names())
        menu += (menu.empty() ? "" : ", ") + n;
    throw InvalidInput("unknown problem '" + name + "'; available: " + menu);
}

// ---------------------------------------------------------------------------
// Configuration text
//
// Line-oriented sections of `key = value` pairs. `[support]`, `[load]` and
// `[constraint]` may repeat; each occurrence adds one entry. `#` and `;`
// start comments.

namespace detail {

inline std::string format_number(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<double> parse_numbers(std::string_view text, std::size_t count, const std::string &key, int line)
{
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < text.size())
    {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t'))
            ++pos;
        if (pos >= text.size())
            break;
        double v = 0.0;
        const auto res = std::from_chars(text.data() + pos, text.data() + text.size(), v);
        if (res.ec != std::errc{} || (res.ptr != text.data() + text.size() && *res.ptr != ' ' && *res.ptr != '\t'))
            throw ParseError("invalid number in '" + key + "'", line);
        out.push_back(v);
        pos = static_cast<std::size_t>(res.ptr - text.data());
    }
    if (out.size() != count)
        throw ParseError("'" + key + "' expects " + std::to_string(count) + " number(s)", line);
    return out;
}

inline double parse_number(std::string_view text, const std::string &key, int line)
{
    return parse_numbers(text, 1, key, line)[0];
}

inline int parse_int(std::string_view text, const std::string &key, int line)
{
    const double v = parse_number(text, key, line);
    if (v != std::floor(v) || std::abs(v) > 1e9)
        throw ParseError("'" + key + "' expects an integer", line);
    return static_cast<int>(v);
}

inline bool parse_bool(std::string_view text, const std::string &key, int line)
{
    if (text == "on" || text == "true" || text == "yes" || text == "1")
        return true;
    if (text == "off" || text == "false" || text == "no" || text == "0")
        return false;
    throw ParseError("'" + key + "' expects on/off", line);
}

} // namespace detail

inline ProblemSpec parse_problem(std::string_view text)
{
    using namespace detail;
    ProblemSpec spec;
    spec.supports.clear();
    spec.loads.clear();
    spec.constraints.clear();

    std::string section;
    int section_line = 0;
    std::map<std::string, int> seen; // keys seen in the current section
    bool have_nx = false, have_ny = false;

    auto require = [&](std::initializer_list<const char *> keys) {
        for (const char *k : keys)
            if (!seen.count(k))
                throw ParseError("section [" + section + "] is missing '" + k + "'", section_line);
    };
    auto close_section = [&] {
        if (section == "support")
            require({"region"});
        else if (section == "load")
            require({"case", "point", "direction"});
        else if (section == "constraint")
        {
            require({"kind", "case", "bound"});
            if (spec.constraints.back().kind == ConstraintKind::point_displacement)
                require({"point", "direction"});
        }
        seen.clear();
    };

    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size())
    {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto c = line.find_first_of("#;"); c != std::string_view::npos)
            line = line.substr(0, c);
        line = trim(line);
        if (line.empty())
        {
            if (end == text.size())
                break;
            continue;
        }

        if (line.front() == '[')
        {
            if (line.back() != ']')
                throw ParseError("unterminated section header", line_no);
            if (!section.empty())
                close_section();
            section = std::string(trim(line.substr(1, line.size() - 2)));
            section_line = line_no;
            static const std::vector<std::string> known = {"problem", "domain",     "material", "support",
                                                           "load",    "constraint", "optimizer"};
            if (std::find(known.begin(), known.end(), section) == known.end())
                throw ParseError("unknown section [" + section + "]", line_no);
            if (section == "support")
                spec.supports.push_back({});
            else if (section == "load")
                spec.loads.push_back({});
            else if (section == "constraint")
                spec.constraints.push_back({});
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("expected 'key = value'", line_no);
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ParseError("key '" + key + "' outside of any section", line_no);
        const bool repeatable = section == "domain" && key == "mask";
        if (!repeatable && seen.count(key))
            throw ParseError("duplicate key '" + key + "'", line_no);
        seen[key] = line_no;
        auto unknown = [&] { return ParseError("unknown key '" + key + "' in section [" + section + "]", line_no); };

        if (section == "problem")
        {
            if (key == "name")
                spec.name = std::string(value);
            else if (key == "objective")
            {
                if (value == "volume")
                    spec.objective = ObjectiveKind::volume;
                else if (value == "compliance")
                    spec.objective = ObjectiveKind::compliance;
                else
                    throw ParseError("objective must be 'volume' or 'compliance'", line_no);
            }
            else if (key == "target_vf")
                spec.target_vf = parse_number(value, key, line_no);
            else
                throw unknown();
        }
        else if (section == "domain")
        {
            if (key == "width")
                spec.domain.width = parse_number(value, key, line_no);
            else if (key == "height")
                spec.domain.height = parse_number(value, key, line_no);
            else if (key == "nx")
                spec.domain.nx = parse_int(value, key, line_no), have_nx = true;
            else if (key == "ny")
                spec.domain.ny = parse_int(value, key, line_no), have_ny = true;
            else if (key == "mask")
            {
                const auto v = parse_numbers(value, 4, key, line_no);
                spec.domain.masked_regions.push_back({v[0], v[1], v[2], v[3]});
            }
            else
                throw unknown();
        }
        else if (section == "material")
        {
            if (key == "youngs_modulus")
                spec.material.youngs_modulus = parse_number(value, key, line_no);
            else if (key == "poisson_ratio")
                spec.material.poisson_ratio = parse_number(value, key, line_no);
            else
                throw unknown();
        }
        else if (section == "support")
        {
            auto &s = spec.supports.back();
            if (key == "region")
            {
                const auto v = parse_numbers(value, 4, key, line_no);
                s.region = {v[0], v[1], v[2], v[3]};
            }
            else if (key == "fix")
            {
                if (value == "x")
                    s.fix_x = true, s.fix_y = false;
                else if (value == "y")
                    s.fix_x = false, s.fix_y = true;
                else if (value == "xy")
                    s.fix_x = s.fix_y = true;
                else
                    throw ParseError("'fix' must be x, y or xy", line_no);
            }
            else
                throw unknown();
        }
        else if (section == "load")
        {
            auto &l = spec.loads.back();
            if (key == "case")
                l.load_case = parse_int(value, key, line_no) - 1;
            else if (key == "point")
            {
                const auto v = parse_numbers(value, 2, key, line_no);
                l.point = {v[0], v[1]};
            }
            else if (key == "direction")
            {
                const auto v = parse_numbers(value, 2, key, line_no);
                l.direction = {v[0], v[1]};
            }
            else if (key == "magnitude")
                l.magnitude = parse_number(value, key, line_no);
            else
                throw unknown();
        }
        else if (section == "constraint")
        {
            auto &c = spec.constraints.back();
            if (key == "kind")
            {
                if (value == "displacement")
                    c.kind = ConstraintKind::point_displacement;
                else if (value == "stress")
                    c.kind = ConstraintKind::pnorm_stress;
                else if (value == "compliance")
                    c.kind = ConstraintKind::compliance;
                else
                    throw ParseError("constraint kind must be displacement, stress or compliance", line_no);
            }
            else if (key == "case")
                c.load_case = parse_int(value, key, line_no) - 1;
            else if (key == "point")
            {
                const auto v = parse_numbers(value, 2, key, line_no);
                c.point = {v[0], v[1]};
            }
            else if (key == "direction")
            {
                const auto v = parse_numbers(value, 2, key, line_no);
                c.direction = {v[0], v[1]};
            }
            else if (key == "bound")
                c.bound = parse_number(value, key, line_no);
            else if (key == "p")
                c.p_exponent = parse_int(value, key, line_no);
            else
                throw unknown();
        }
        else if (section == "optimizer")
        {
            auto &o = spec.config;
            if (key == "delta_v")
                o.delta_v = parse_number(value, key, line_no);
            else if (key == "mu0")
                o.mu0 = parse_number(value, key, line_no);
            else if (key == "gamma0")
                o.gamma0 = parse_number(value, key, line_no);
            else if (key == "varsigma")
                o.varsigma = parse_number(value, key, line_no);
            else if (key == "eta")
                o.eta = parse_number(value, key, line_no);
            else if (key == "compliance_tol")
                o.compliance_tol = parse_number(value, key, line_no);
            else if (key == "min_delta_v")
                o.min_delta_v = parse_number(value, key, line_no);
            else if (key == "max_inner_iters")
                o.max_inner_iters = parse_int(value, key, line_no);
            else if (key == "max_total_fea")
                o.max_total_fea = parse_int(value, key, line_no);
            else if (key == "filter")
                o.filter = parse_bool(value, key, line_no);
            else if (key == "filter_radius")
                o.filter_radius = parse_number(value, key, line_no);
            else if (key == "condition_estimate")
                o.condition_estimate = parse_bool(value, key, line_no);
            else if (key == "multiplier_rule")
            {
                if (value == "paper")
                    o.multiplier_rule = MultiplierRule::paper;
                else if (value == "standard")
                    o.multiplier_rule = MultiplierRule::standard;
                else
                    throw ParseError("multiplier_rule must be 'paper' or 'standard'", line_no);
            }
            else
                throw unknown();
        }
        if (end == text.size())
            break;
    }
    if (!section.empty())
        close_section();
    if (!have_nx || !have_ny)
        throw ParseError("section [domain] must define nx and ny", 0);

    try
    {
        spec.validate();
    }
    catch (const InvalidInput &e)
    {
        throw ParseError(e.what(), 0);
    }
    return spec;
}

inline std::string serialize_problem(const ProblemSpec &spec)
{
    using detail::format_number;
    std::ostringstream os;
    auto pair = [](Point2 p) { return format_number(p.x) + " " + format_number(p.y); };
    auto rect = [](const Rect &r) {
        return format_number(r.x0) + " " + format_number(r.y0) + " " + format_number(r.x1) + " " + format_number(r.y1);
    };
    os << "[problem]\n";
    os << "name = " << spec.name << "\n";
    os << "objective = " << (spec.objective == ObjectiveKind::volume ? "volume" : "compliance") << "\n";
    if (spec.target_vf > 0.0)
        os << "target_vf = " << format_number(spec.target_vf) << "\n";
    os << "\n[domain]\n";
    os << "width = " << format_number(spec.domain.width) << "\n";
    os << "height = " << format_number(spec.domain.height) << "\n";
    os << "nx = " << spec.domain.nx << "\n";
    os << "ny = " << spec.domain.ny << "\n";
    for (const auto &m : spec.domain.masked_regions)
        os << "mask = " << rect(m) << "\n";
    os << "\n[material]\n";
    os << "youngs_modulus = " << format_number(spec.material.youngs_modulus) << "\n";
    os << "poisson_ratio = " << format_number(spec.material.poisson_ratio) << "\n";
    for (const auto &s : spec.supports)
    {
        os << "\n[support]\n";
        os << "region = " << rect(s.region) << "\n";
        os << "fix = " << (s.fix_x && s.fix_y ? "xy" : s.fix_x ? "x" : "y") << "\n";
    }
    for (const auto &l : spec.loads)
    {
        os << "\n[load]\n";
        os << "case = " << l.load_case + 1 << "\n";
        os << "point = " << pair(l.point) << "\n";
        os << "direction = " << pair(l.direction) << "\n";
        os << "magnitude = " << format_number(l.magnitude) << "\n";
    }
    for (const auto &c : spec.constraints)
    {
        os << "\n[constraint]\n";
        os << "kind = " << to_string(c.kind) << "\n";
        os << "case = " << c.load_case + 1 << "\n";
        if (c.kind == ConstraintKind::point_displacement)
        {
            os << "point = " << pair(c.point) << "\n";
            os << "direction = " << pair(c.direction) << "\n";
        }
        os << "bound = " << format_number(c.bound) << "\n";
        if (c.kind == ConstraintKind::pnorm_stress)
            os << "p = " << c.p_exponent << "\n";
    }
    const auto &o = spec.config;
    os << "\n[optimizer]\n";
    os << "delta_v = " << format_number(o.delta_v) << "\n";
    os << "mu0 = " << format_number(o.mu0) << "\n";
    os << "gamma0 = " << format_number(o.gamma0) << "\n";
    os << "varsigma = " << format_number(o.varsigma) << "\n";
    os << "eta = " << format_number(o.eta) << "\n";
    os << "compliance_tol = " << format_number(o.compliance_tol) << "\n";
    os << "min_delta_v = " << format_number(o.min_delta_v) << "\n";
    os << "max_inner_iters = " << o.max_inner_iters << "\n";
    os << "max_total_fea = " << o.max_total_fea << "\n";
    os << "filter = " << (o.filter ? "on" : "off") << "\n";
    os << "filter_radius = " << format_number(o.filter_radius) << "\n";
    os << "multiplier_rule = " << (o.multiplier_rule == MultiplierRule::paper ? "paper" : "standard") << "\n";
    os << "condition_estimate = " << (o.condition_estimate ? "on" : "off") << "\n";
    return os.str();
}

} // namespace topt
