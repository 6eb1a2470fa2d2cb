#include "topt/topt.hpp"
#include "topt/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

int finish(const topt::Problem &problem, const topt::OptimizationResult &result, const std::string &out_dir)
{
    topt::write_outputs(problem, result, out_dir);
    std::cout << topt::summary_table(problem, result);
    return result.feasible() ? 0 : 2;
}

int solve_spec(topt::ProblemSpec spec, bool filter, int mesh_scale, const std::string &out_dir)
{
    if (filter)
        spec.config.filter = true;
    const topt::Problem problem = topt::resolve(spec, mesh_scale);
    return finish(problem, topt::run(problem, spec.config), out_dir);
}

int verify()
{
    namespace v = topt::verify;
    bool ok = true;
    auto line = [&](const char *name, bool pass, const std::string &detail) {
        ok = ok && pass;
        std::printf("%s  %-28s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
    };
    auto num = [](double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", x);
        return std::string(buf);
    };

    const double ke = v::element_stiffness_error();
    line("element stiffness", ke <= 1e-12, "max rel diff vs Gauss " + num(ke));
    const auto hole = v::hole_drilling_compliance();
    line("hole drilling (compliance)", hole.rho >= 0.90,
         "spearman " + num(hole.rho) + " over " + std::to_string(hole.samples) + " elements");
    const double comp = v::compliance_adjoint_error();
    line("compliance adjoint", comp <= 1e-9, "|lambda + u| / |u| = " + num(comp));
    const auto rec = v::displacement_adjoint_checks();
    line("displacement adjoint", rec.reciprocity_error <= 1e-8 && rec.gradient_error <= 1e-6,
         "reciprocity " + num(rec.reciprocity_error) + ", load derivative " + num(rec.gradient_error));
    const double pn = v::pnorm_gradient_error();
    line("p-norm adjoint load", pn <= 1e-5, "max rel diff vs central differences " + num(pn));
    const double tau = v::tau_exactness();
    line("cut-off volume", tau <= 1.0, "max |vf - target| * N = " + num(tau));
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Volume minimization under displacement, stress and compliance constraints"};
    app.require_subcommand(1);

    auto *run = app.add_subcommand("run", "optimize a problem described in a configuration file");
    std::string config_path, out_dir = "out";
    bool filter = false;
    int mesh_scale = 1;
    run->add_option("--config", config_path, "configuration file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_flag("--filter", filter, "smooth the level-set before each cut");
    run->add_option("--mesh-scale", mesh_scale, "multiply the element counts along both axes")
        ->check(CLI::PositiveNumber);

    auto *bench = app.add_subcommand("bench", "optimize a built-in benchmark");
    std::string name;
    double delta = 0.0, sigma = 0.0;
    std::string dump;
    bench->add_option("name", name, "benchmark name")->required();
    auto *delta_opt = bench->add_option("--delta", delta, "relative displacement bound");
    auto *sigma_opt = bench->add_option("--sigma", sigma, "relative stress bound");
    bench->add_option("--out", out_dir, "output directory")->required();
    bench->add_flag("--filter", filter, "smooth the level-set before each cut");
    bench->add_option("--mesh-scale", mesh_scale, "multiply the element counts along both axes")
        ->check(CLI::PositiveNumber);
    bench->add_option("--write-config", dump, "also write the benchmark as a configuration file");

    app.add_subcommand("verify", "run the numerical oracle checks");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try
    {
        if (*run)
        {
            std::ifstream in(config_path);
            std::stringstream text;
            text << in.rdbuf();
            return solve_spec(topt::parse_problem(text.str()), filter, mesh_scale, out_dir);
        }
        if (*bench)
        {
            topt::BenchmarkBounds bounds;
            if (*delta_opt)
                bounds.displacement = delta;
            if (*sigma_opt)
                bounds.stress = sigma;
            const topt::ProblemSpec spec = topt::builtin_problem(name, bounds);
            if (!dump.empty())
            {
                std::ofstream out(dump);
                out << topt::serialize_problem(spec);
                if (!out)
                    throw topt::Error("cannot write " + dump);
            }
            return solve_spec(spec, filter, mesh_scale, out_dir);
        }
        return verify();
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
