#include <topt/output.hpp>
#include <topt/problem.hpp>
#include <topt/verify.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace topt;

namespace {

const char *minimal_cantilever = R"([domain]
width = 2
height = 1
nx = 20
ny = 10

[support]
region = 0 0 0 1

[load]
case = 1
point = 2 0.5
direction = 0 -1

[constraint]
kind = displacement
case = 1
point = 2 0.5
direction = 0 -1
bound = 1.5
)";

std::string read(const std::filesystem::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> lines(const std::string &text)
{
    std::vector<std::string> out;
    std::istringstream is(text);
    for (std::string l; std::getline(is, l);)
        out.push_back(l);
    return out;
}

int parse_error_line(const std::string &text)
{
    try
    {
        parse_problem(text);
    }
    catch (const ParseError &e)
    {
        return e.line();
    }
    return -1;
}

std::filesystem::path scratch_dir(const std::string &name)
{
    auto dir = std::filesystem::temp_directory_path() / ("topt_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST(ParseProblem, MinimalDocumentGetsDefaults)
{
    const ProblemSpec s = parse_problem(minimal_cantilever);
    EXPECT_EQ(s.material.youngs_modulus, 2e11);
    EXPECT_EQ(s.material.poisson_ratio, 0.33);
    EXPECT_EQ(s.config.delta_v, 0.025);
    EXPECT_EQ(s.config.mu0, 1.0);
    EXPECT_EQ(s.config.gamma0, 10.0);
    EXPECT_EQ(s.config.min_delta_v, 0.0025);
    EXPECT_EQ(s.config.max_total_fea, 1000);
    EXPECT_FALSE(s.config.filter);
    EXPECT_EQ(s.objective, ObjectiveKind::volume);
    ASSERT_EQ(s.loads.size(), 1u);
    EXPECT_EQ(s.loads[0].load_case, 0);
    EXPECT_EQ(s.loads[0].magnitude, 1.0);
    ASSERT_EQ(s.constraints.size(), 1u);
    EXPECT_EQ(s.constraints[0].bound, 1.5);
    EXPECT_EQ(s.domain.nx, 20);
    EXPECT_EQ(resolve(s).mesh.num_elements(), 200u);
}

TEST(ParseProblem, UnknownKeyIsNamed)
{
    const std::string doc = std::string(minimal_cantilever) + "stiffness = 3\n";
    try
    {
        parse_problem(doc);
        FAIL() << "expected a parse error";
    }
    catch (const ParseError &e)
    {
        EXPECT_NE(std::string(e.what()).find("stiffness"), std::string::npos);
        EXPECT_EQ(e.line(), 21);
    }
}

TEST(ParseProblem, ConstraintOnMissingLoadCase)
{
    std::string doc = minimal_cantilever;
    doc.replace(doc.rfind("case = 1"), 8, "case = 3");
    doc += "\n[load]\ncase = 2\npoint = 2 1\ndirection = 1 0\n";
    try
    {
        parse_problem(doc);
        FAIL() << "expected a validation error";
    }
    catch (const ParseError &e)
    {
        EXPECT_NE(std::string(e.what()).find("load case 3"), std::string::npos) << e.what();
    }
}

TEST(ParseProblem, SyntaxErrorsCarryLineNumbers)
{
    EXPECT_EQ(parse_error_line("[domain]\nnx = 4\nny 4\n"), 3);
    EXPECT_EQ(parse_error_line("[nonsense]\n"), 1);
    EXPECT_EQ(parse_error_line("nx = 4\n"), 1);
    EXPECT_EQ(parse_error_line("[domain]\nnx = 4\nnx = 5\n"), 3);
    EXPECT_EQ(parse_error_line("[domain]\nnx = four\n"), 2);
    EXPECT_EQ(parse_error_line("[domain\n"), 1);
    EXPECT_EQ(parse_error_line("[domain]\nwidth = 1 2\n"), 2);
    EXPECT_THROW(parse_problem("[domain]\nwidth = 1\n"), ParseError);
}

TEST(ParseProblem, CommentsAndWhitespace)
{
    std::string doc = "# benchmark\n\n";
    doc += minimal_cantilever;
    doc += "\n[optimizer]\n  delta_v = 0.05   ; coarser steps\nfilter = on\n";
    const ProblemSpec s = parse_problem(doc);
    EXPECT_EQ(s.config.delta_v, 0.05);
    EXPECT_TRUE(s.config.filter);
}

TEST(SerializeProblem, RoundTrips)
{
    std::vector<ProblemSpec> specs;
    for (const auto &name : builtin_names())
        specs.push_back(builtin_problem(name));
    specs.push_back(builtin_problem("l-bracket-single", {1.3, 2.0 / 3.0}));
    specs.push_back(parse_problem(minimal_cantilever));
    ProblemSpec custom = verify::desk_cantilever();
    custom.config.multiplier_rule = MultiplierRule::standard;
    custom.config.filter_radius = 2.25;
    custom.material.youngs_modulus = 1.0 / 3.0;
    custom.loads[0].magnitude = 0.1 + 0.2;
    specs.push_back(custom);
    for (const auto &s : specs)
    {
        const std::string text = serialize_problem(s);
        const ProblemSpec back = parse_problem(text);
        EXPECT_TRUE(back == s) << text;
        EXPECT_EQ(serialize_problem(back), text);
    }
}

TEST(BuiltinProblem, LBracketLayout)
{
    const ProblemSpec s = builtin_problem("l-bracket-single");
    ASSERT_EQ(s.constraints.size(), 2u);
    EXPECT_EQ(s.constraints[0].kind, ConstraintKind::point_displacement);
    EXPECT_EQ(s.constraints[0].bound, 1.5);
    EXPECT_EQ(s.constraints[1].kind, ConstraintKind::pnorm_stress);
    EXPECT_EQ(s.constraints[1].bound, 1000.0);
    EXPECT_EQ(s.loads.size(), 1u);
    const Problem p = resolve(s);
    EXPECT_NEAR(static_cast<double>(p.mesh.num_elements()), 2000.0, 100.0);
    // The masked corner has no elements.
    EXPECT_EQ(p.mesh.element_at(p.mesh.nx - 1, p.mesh.ny - 1), -1);
}

TEST(BuiltinProblem, AllNearTwoThousandElements)
{
    for (const auto &name : builtin_names())
    {
        const Problem p = resolve(builtin_problem(name));
        EXPECT_NEAR(static_cast<double>(p.mesh.num_elements()), 2000.0, 100.0) << name;
    }
    EXPECT_EQ(resolve(builtin_problem("mitchell-multi")).loads.size(), 2u);
}

TEST(BuiltinProblem, UnknownNameListsMenu)
{
    try
    {
        builtin_problem("unknown");
        FAIL() << "expected an error";
    }
    catch (const InvalidInput &e)
    {
        for (const auto &name : builtin_names())
            EXPECT_NE(std::string(e.what()).find(name), std::string::npos);
    }
}

TEST(Resolve, LoadsAreNormalizedPerCase)
{
    ProblemSpec s = verify::desk_cantilever();
    s.loads[0].magnitude = 250.0;
    const Problem p = resolve(s);
    EXPECT_EQ(p.load_scale[0], 250.0);
    EXPECT_EQ(p.loads[0].lpNorm<Eigen::Infinity>(), 1.0);
    EXPECT_EQ(resolve(s, 2).mesh.num_elements(), 4u * 200u);
}

TEST(Outputs, DensityImageOfFullTopology)
{
    const Mesh m = build_mesh({2.0, 1.0, 6, 3, {}});
    const auto img = lines(density_pgm(m, TopologyState::full(m.num_elements())));
    ASSERT_EQ(img.size(), 3u + 3u);
    EXPECT_EQ(img[0], "P2");
    EXPECT_EQ(img[1], "6 3");
    EXPECT_EQ(img[2], "255");
    for (std::size_t r = 3; r < img.size(); ++r)
        EXPECT_EQ(img[r], "255 255 255 255 255 255");
}

TEST(Outputs, DensityImageIsTopDown)
{
    const Mesh m = build_mesh({1.0, 1.0, 2, 2, {Rect{0.5, 0.5, 1.0, 1.0}}});
    TopologyState t = TopologyState::full(m.num_elements());
    t.solid[0] = 0; // lower-left
    t.recount();
    const auto img = lines(density_pgm(m, t));
    EXPECT_EQ(img[3], "255 0");
    EXPECT_EQ(img[4], "0 255");
}

TEST(Outputs, HistoryRowsAndHeader)
{
    OptimizationResult r;
    for (int k = 0; k < 3; ++k)
    {
        HistoryRecord h;
        h.step = k;
        h.target_vf = 1.0 - 0.025 * k;
        h.achieved_vf = h.target_vf;
        h.rel_compliance = {1.0 + k, 0.5};
        h.g = {-0.5, -0.25};
        h.mu = {1.0, 1.0};
        h.gamma = {10.0, 10.0};
        h.fea_count = k + 1;
        if (k == 2)
            h.cond_estimate = 1e9;
        r.history.push_back(h);
    }
    const auto csv = lines(history_csv(r, 2));
    ASSERT_EQ(csv.size(), 4u);
    EXPECT_EQ(csv[0], "step,target_vf,achieved_vf,rel_compliance,g_1,g_2,mu_1,mu_2,gamma_1,gamma_2,fea_count,"
                      "cond_estimate");
    EXPECT_EQ(csv[1], "0,1,1,1,-0.5,-0.25,1,1,10,10,1,");
    EXPECT_EQ(csv[3], "2,0.95,0.95,3,-0.5,-0.25,1,1,10,10,3,1e+09");
}

TEST(Outputs, SummaryTableLayout)
{
    ProblemSpec spec = builtin_problem("l-bracket-single");
    spec.domain.nx = spec.domain.ny = 25;
    const Problem p = resolve(spec);
    const auto r = run(p, spec.config);
    const std::string s = summary_table(p, r);
    EXPECT_NE(s.find("constraint        case  bound     result    g         active"), std::string::npos);
    EXPECT_NE(s.find("displacement      1     1.50"), std::string::npos) << s;
    EXPECT_NE(s.find("stress            1     1000.00"), std::string::npos) << s;
    EXPECT_NE(s.find("volume fraction: "), std::string::npos);
    EXPECT_NE(s.find("FEA count: " + std::to_string(r.fea_count)), std::string::npos);
}

TEST(Outputs, VtkHasCellArrays)
{
    const ProblemSpec spec = verify::desk_cantilever(8, 4);
    const Problem p = resolve(spec);
    const auto r = run(p, spec.config);
    const std::string vtk = fields_vtk(p, r);
    EXPECT_EQ(vtk.rfind("# vtk DataFile Version 3.0", 0), 0u);
    EXPECT_NE(vtk.find("CELLS 32 160"), std::string::npos);
    for (const char *name : {"SCALARS density", "SCALARS von_mises", "SCALARS T_L"})
        EXPECT_NE(vtk.find(name), std::string::npos) << name;
}

TEST(Outputs, RepeatedRunsAreByteIdentical)
{
    ProblemSpec spec = builtin_problem("l-bracket-single");
    spec.domain.nx = spec.domain.ny = 25;
    const Problem p = resolve(spec);
    const auto a = scratch_dir("a"), b = scratch_dir("b");
    write_outputs(p, run(p, spec.config), a);
    write_outputs(p, run(p, spec.config), b);
    for (const char *file : {"density.pgm", "fields.vtk", "history.csv", "summary.txt"})
    {
        const std::string ta = read(a / file);
        EXPECT_FALSE(ta.empty()) << file;
        EXPECT_EQ(ta, read(b / file)) << file;
    }
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST(Outputs, UnwritableDirectoryIsReported)
{
    const ProblemSpec spec = verify::desk_cantilever(8, 4);
    const Problem p = resolve(spec);
    const auto r = run(p, spec.config);
    const auto file = scratch_dir("blocker");
    std::ofstream(file) << "x";
    EXPECT_THROW(write_outputs(p, r, file / "sub"), Error);
    std::filesystem::remove_all(file);
}
