#pragma once

// Volume-decrement schedule with inner fixed-point iterations, augmented
// Lagrangian updates and backtracking on constraint violation.

#include "auglag.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "fem.hpp"
#include "levelset.hpp"
#include "mesh.hpp"
#include "problem.hpp"
#include "sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <string>
#include <vector>

namespace topt {

/// Everything computed on one topology.
struct Analysis
{
    TopologyState topo;
    ActiveMesh active;
    SystemMatrix system;
    std::vector<DisplacementField> u; ///< unit-scale loads
    std::vector<TensorField> tensors;
    std::vector<double> compliance; ///< unit-scale loads
    std::vector<ConstraintResponse> responses;
    /// sum_n T_Jn / J_ref_n
    SensitivityField compliance_field;
    std::optional<ConditionEstimate> condition;
};

struct References
{
    std::vector<double> compliance;
    std::vector<double> constraint;
};

struct HistoryRecord
{
    int step = 0;
    double target_vf = 1.0;
    double achieved_vf = 1.0;
    std::vector<double> rel_compliance;
    std::vector<double> g;
    std::vector<double> mu;
    std::vector<double> gamma;
    int fea_count = 0;
    std::optional<double> cond_estimate;
};

enum class RunStatus
{
    converged,          ///< volume decrement fell below its minimum
    reached_target,     ///< target volume fraction reached
    protected_floor,    ///< only protected elements would remain
    budget_exhausted,   ///< FEA budget spent
    infeasible_initial, ///< constraints violated on the full domain
};

inline const char *to_string(RunStatus s)
{
    switch (s)
    {
    case RunStatus::converged:
        return "converged";
    case RunStatus::reached_target:
        return "reached target volume";
    case RunStatus::protected_floor:
        return "protected-element floor";
    case RunStatus::budget_exhausted:
        return "FEA budget exhausted";
    case RunStatus::infeasible_initial:
        return "infeasible on the full domain";
    }
    return "?";
}

struct AcceptedStep
{
    double volume_fraction = 1.0;
    std::vector<double> compliance; ///< physical units
    std::vector<double> g;
    int fea_count = 0;
};

struct OptimizationResult
{
    RunStatus status = RunStatus::converged;
    std::string diagnostic;
    TopologyState topology;
    std::vector<HistoryRecord> history;
    std::vector<AcceptedStep> accepted;
    References references; ///< physical units
    /// Final constraint values: raw (physical), raw / reference, and g.
    std::vector<ConstraintEval> constraints;
    std::vector<double> compliance;     ///< physical units
    std::vector<double> rel_compliance; ///< J / J_ref per load case
    std::vector<double> von_mises;      ///< per element, max over load cases, physical units
    std::vector<double> level_set;      ///< normalized T_L of the final topology
    ALState al;
    int fea_count = 0;
    int outer_steps = 0;
    bool inner_converged = true;

    bool feasible() const { return status != RunStatus::infeasible_initial; }
};

namespace detail {

inline TensorField negated(const TensorField &t)
{
    TensorField out = t;
    for (auto &s : out.stress)
        s = {-s.xx, -s.yy, -s.xy};
    for (auto &s : out.strain)
        s = {-s.xx, -s.yy, -s.xy};
    return out;
}

} // namespace detail

/// Solves every load case and every constraint adjoint on `topo`.
/// `refs` supplies the full-domain compliance for the objective field; when
/// null the analysis is its own reference.
inline Analysis analyse(const Problem &problem, TopologyState topo, const References *refs,
                        bool with_condition = false)
{
    Analysis a;
    a.topo = std::move(topo);
    a.active = active_submesh(problem.mesh, problem.boundary, a.topo);
    a.system = assemble(problem.mesh, a.active, problem.material);
    const std::size_t cases = problem.loads.size();
    a.compliance_field.values.assign(problem.mesh.num_elements(), 0.0);
    for (std::size_t n = 0; n < cases; ++n)
    {
        a.u.push_back(solve(a.system, problem.loads[n]));
        a.tensors.push_back(recover(problem.mesh, a.active, a.u[n], problem.material));
        a.compliance.push_back(compliance(problem.loads[n], a.u[n]));
    }
    for (std::size_t n = 0; n < cases; ++n)
    {
        const double ref = refs ? refs->compliance[n] : a.compliance[n];
        if (!(ref > 0.0))
            throw InvalidInput("load case " + std::to_string(n + 1) + " does no work on the structure");
        const SensitivityField t =
            topo_sensitivity(a.tensors[n], detail::negated(a.tensors[n]), problem.material.poisson_ratio);
        for (std::size_t e = 0; e < t.values.size(); ++e)
            a.compliance_field.values[e] += t.values[e] / ref;
    }
    auto batch = multi_load_sensitivities(problem.mesh, problem.boundary, a.active, a.system, problem.material,
                                          problem.loads, a.u, a.tensors, problem.constraints);
    a.responses = std::move(batch.responses);
    if (with_condition)
        a.condition = condition_estimate(a.system);
    return a;
}

/// Level-set value of void elements away from the solid boundary; below
/// every normalized value.
inline constexpr double void_value = -3.0;

/// Slack floor of the fallback weighting.
inline constexpr double min_slack = 1e-3;

/// Level-set value of each element the last time it was solid, relative to
/// the peak over the solid region at that time. NaN for never-solid.
struct RegrowthMemory
{
    std::vector<double> values;
};

/// Combined level-set T_L, normalized, with protected elements pinned high
/// and void elements pinned below every normalized value.
inline SensitivityField build_level_set(const Problem &problem, const Analysis &analysis, const References &refs,
                                        const ALState &al, std::span<const double> g, const OptimizerConfig &config,
                                        RegrowthMemory *memory = nullptr)
{
    const std::size_t n_el = problem.mesh.num_elements();
    SensitivityField objective = problem.objective == ObjectiveKind::compliance ? analysis.compliance_field
                                                                                : sensitivity_volume(n_el);
    // Constraint fields are oriented so that a large value marks an element
    // whose removal would raise g the most. The multiplier terms are taken
    // on the slack -g, the convention the augmented Lagrangian formulas
    // come from: violated or nearly active constraints get weight, slack
    // ones none.
    std::vector<SensitivityField> oriented(analysis.responses.size());
    std::vector<ConstraintTerm> terms;
    bool any_weight = false;
    for (std::size_t i = 0; i < analysis.responses.size(); ++i)
    {
        oriented[i].values = analysis.responses[i].sensitivity.values;
        for (double &v : oriented[i].values)
            v = -v / refs.constraint[i];
        terms.push_back({&oriented[i], -g[i], al.mu[i], al.gamma[i]});
        any_weight = any_weight || level_set_coefficient(-g[i], al.mu[i], al.gamma[i]) > 0.0;
    }
    SensitivityField combined = combine_level_sets(objective, terms);
    if (!any_weight && !terms.empty())
    {
        // No multiplier weight anywhere: weight each constraint by the
        // inverse of its slack so the closest one steers.
        for (auto &t : terms)
        {
            t.mu = 1.0 / std::max(t.g, min_slack);
            t.gamma = 0.0;
            t.g = 0.0;
        }
        combined = combine_level_sets(objective, terms);
    }

    if (problem.objective == ObjectiveKind::volume)
    {
        // The uniform volume field cannot rank elements on its own. The
        // compliance field is added at the same peak magnitude as the
        // constraint terms, so removal follows the stiffness trace wherever
        // the constraints are indifferent.
        double peak_constraints = 0.0;
        double peak_compliance = 0.0;
        for (std::size_t e = 0; e < n_el; ++e)
        {
            if (!analysis.topo.solid[e])
                continue;
            peak_constraints = std::max(peak_constraints, std::abs(combined.values[e] - objective.values[e]));
            peak_compliance = std::max(peak_compliance, std::abs(analysis.compliance_field.values[e]));
        }
        const double scale = peak_compliance > 0.0 && peak_constraints > 0.0 ? peak_constraints / peak_compliance
                           : peak_compliance > 0.0                           ? 1.0
                                                                             : 0.0;
        for (std::size_t e = 0; e < n_el; ++e)
            combined.values[e] += scale * analysis.compliance_field.values[e];
    }

    // Void elements carry no stress. Those on the boundary of the solid take
    // the mean of their solid edge neighbours so the boundary can move both
    // ways; the rest stay out. With a memory, a frontier element is capped
    // at the value it had when it was last solid.
    std::vector<double> remembered;
    double peak = 0.0;
    if (memory)
    {
        if (memory->values.size() != n_el)
            memory->values.assign(n_el, std::numeric_limits<double>::quiet_NaN());
        remembered = memory->values;
        for (std::size_t e = 0; e < n_el; ++e)
            if (analysis.topo.solid[e])
                peak = std::max(peak, std::abs(combined.values[e]));
        if (peak > 0.0)
            for (std::size_t e = 0; e < n_el; ++e)
                if (analysis.topo.solid[e])
                    memory->values[e] = combined.values[e] / peak;
    }
    std::vector<std::uint8_t> frontier(n_el, 0);
    for (std::size_t e = 0; e < n_el; ++e)
    {
        if (analysis.topo.solid[e])
            continue;
        double sum = 0.0;
        int count = 0;
        for (int nb : problem.mesh.edge_neighbors(e))
        {
            if (!analysis.topo.solid[static_cast<std::size_t>(nb)])
                continue;
            sum += combined.values[static_cast<std::size_t>(nb)];
            ++count;
        }
        frontier[e] = count > 0 ? 1 : 0;
        combined.values[e] = count > 0 ? sum / count : 0.0;
        if (count > 0 && !remembered.empty() && !std::isnan(remembered[e]))
            combined.values[e] = std::min(combined.values[e], remembered[e] * peak);
    }
    if (config.filter)
        combined = smooth_filter(problem.mesh, combined, config.filter_radius);

    // Protected elements never count towards the normalization scale.
    SensitivityField out = normalize_and_protect(std::move(combined), problem.protected_elements);
    for (std::size_t e = 0; e < n_el; ++e)
        if (!analysis.topo.solid[e] && !frontier[e])
            out.values[e] = void_value;
    return out;
}

struct InnerResult
{
    Analysis analysis;
    int iterations = 0;
    bool converged = false;
    bool budget_hit = false;
};

/// Inner loop at a fixed target: extract, analyse, repeat until the relative
/// compliance change stays below tolerance twice in a row or the topology
/// stops changing.
template <class Recorder>
InnerResult fixed_point_step(const Problem &problem, const Analysis &start, double target_vf, const References &refs,
                             const ALState &al, const OptimizerConfig &config, int &fea_count, Recorder &&record,
                             RegrowthMemory *memory = nullptr)
{
    if (target_vf > start.topo.volume_fraction + 1e-12)
        throw InvalidInput("fixed-point target must not exceed the current volume fraction");
    auto g_of = [&](const Analysis &a) {
        std::vector<double> g(a.responses.size());
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] = a.responses[i].raw / refs.constraint[i] - problem.constraints[i].spec.bound;
        return g;
    };

    // Ranks iterates for the non-converged case: worst constraint value
    // first, then compliance.
    auto merit = [&](const Analysis &a) {
        const auto g = g_of(a);
        double worst = -std::numeric_limits<double>::infinity();
        for (double v : g)
            worst = std::max(worst, v);
        double rel = 0.0;
        for (std::size_t n = 0; n < a.compliance.size(); ++n)
            rel = std::max(rel, a.compliance[n] / refs.compliance[n]);
        return std::make_pair(g.empty() ? 0.0 : worst, rel);
    };

    InnerResult out{start, 0, false, false};
    std::optional<Analysis> best;
    std::pair<double, double> best_merit;
    int small_changes = 0;
    while (out.iterations < config.max_inner_iters)
    {
        const auto g = g_of(out.analysis);
        const SensitivityField field = build_level_set(problem, out.analysis, refs, al, g, config, memory);
        const Cut cut = find_tau(field, target_vf);
        TopologyState next = extract_domain(field, cut);
        prune_unsupported(problem.mesh, problem.boundary, next);
        const bool detached = std::any_of(problem.protected_elements.begin(), problem.protected_elements.end(),
                                          [&](int e) { return !next.solid[static_cast<std::size_t>(e)]; });
        if (detached)
        {
            if (!best)
                throw LoadPathError("a loaded, supported or constrained point was cut off from the supports");
            break;
        }
        if (next.same_set(out.analysis.topo))
        {
            out.converged = true;
            return out;
        }
        if (fea_count >= config.max_total_fea)
        {
            out.budget_hit = true;
            break;
        }
        std::optional<Analysis> fresh;
        try
        {
            fresh = analyse(problem, std::move(next), &refs, config.condition_estimate);
        }
        catch (const LoadPathError &)
        {
            if (!best)
                throw;
            break;
        }
        catch (const SingularSystemError &)
        {
            if (!best)
                throw;
            break;
        }
        ++fea_count;
        ++out.iterations;
        double change = 0.0;
        for (std::size_t n = 0; n < fresh->compliance.size(); ++n)
            change = std::max(change, std::abs(fresh->compliance[n] - out.analysis.compliance[n]) /
                                          out.analysis.compliance[n]);
        out.analysis = std::move(*fresh);
        record(out.analysis, target_vf);
        small_changes = change < config.compliance_tol ? small_changes + 1 : 0;
        if (small_changes >= 2)
        {
            out.converged = true;
            return out;
        }
        const auto m = merit(out.analysis);
        if (!best || m < best_merit)
        {
            best = out.analysis;
            best_merit = m;
        }
    }
    if (best)
        out.analysis = std::move(*best);
    return out;
}

inline OptimizationResult run(const Problem &problem, const OptimizerConfig &config)
{
    config.validate();
    OptimizationResult result;
    const std::size_t m = problem.constraints.size();
    const std::size_t cases = problem.loads.size();
    const auto n_el = static_cast<double>(problem.mesh.num_elements());

    Analysis current = analyse(problem, TopologyState::full(problem.mesh.num_elements()), nullptr,
                               config.condition_estimate);
    int fea = 1;
    References refs;
    refs.compliance = current.compliance;
    for (std::size_t i = 0; i < m; ++i)
        refs.constraint.push_back(current.responses[i].raw);

    auto evaluate = [&](const Analysis &a) {
        std::vector<ConstraintEval> ev;
        for (std::size_t i = 0; i < m; ++i)
            ev.push_back(evaluate_constraint(problem.constraints[i].spec, a.responses[i].raw, refs.constraint[i]));
        return ev;
    };
    auto g_values = [](const std::vector<ConstraintEval> &ev) {
        std::vector<double> g;
        for (const auto &e : ev)
            g.push_back(e.g);
        return g;
    };

    ALState al = ALState::initial(m, config.mu0, config.gamma0);
    int step = 0;
    auto record = [&](const Analysis &a, double target) {
        HistoryRecord h;
        h.step = step;
        h.target_vf = target;
        h.achieved_vf = a.topo.volume_fraction;
        for (std::size_t n = 0; n < cases; ++n)
            h.rel_compliance.push_back(a.compliance[n] / refs.compliance[n]);
        h.g = g_values(evaluate(a));
        h.mu = al.mu;
        h.gamma = al.gamma;
        h.fea_count = fea;
        if (a.condition)
            h.cond_estimate = a.condition->value;
        result.history.push_back(std::move(h));
    };

    const auto initial_eval = evaluate(current);
    record(current, 1.0);
    auto accept = [&](const Analysis &a, const std::vector<ConstraintEval> &ev) {
        AcceptedStep s;
        s.volume_fraction = a.topo.volume_fraction;
        for (std::size_t n = 0; n < cases; ++n)
            s.compliance.push_back(a.compliance[n] * problem.load_scale[n] * problem.load_scale[n]);
        s.g = g_values(ev);
        s.fea_count = fea;
        result.accepted.push_back(std::move(s));
    };

    Analysis feasible = current;
    std::vector<ConstraintEval> feasible_eval = initial_eval;
    al.g_prev = g_values(initial_eval);

    for (std::size_t i = 0; i < m; ++i)
    {
        if (initial_eval[i].g > 0.0)
        {
            result.status = RunStatus::infeasible_initial;
            result.diagnostic = std::string(to_string(problem.constraints[i].spec.kind)) + " constraint " +
                                std::to_string(i + 1) + " is violated on the full domain (ratio 1 > bound " +
                                detail::format_number(problem.constraints[i].spec.bound) + ")";
            break;
        }
    }

    if (result.status != RunStatus::infeasible_initial)
    {
        accept(feasible, feasible_eval);
        const double floor = static_cast<double>(problem.protected_elements.size()) / n_el;
        double dv = config.delta_v;
        // Only the stiffness trace keeps a memory: with constraints the
        // multiplier weights change between steps and stale values mislead.
        RegrowthMemory memory;
        RegrowthMemory *regrowth = problem.objective == ObjectiveKind::compliance ? &memory : nullptr;
        const double half_element = 0.5 / n_el;
        while (true)
        {
            if (problem.target_vf > 0.0 && feasible.topo.volume_fraction <= problem.target_vf + half_element)
            {
                result.status = RunStatus::reached_target;
                break;
            }
            if (fea >= config.max_total_fea)
            {
                result.status = RunStatus::budget_exhausted;
                break;
            }
            double target = feasible.topo.volume_fraction - dv;
            if (problem.target_vf > 0.0)
                target = std::max(target, problem.target_vf);
            if (target <= floor + half_element)
            {
                result.status = RunStatus::protected_floor;
                break;
            }

            ++step;
            ++result.outer_steps;
            bool ok = true;
            std::vector<ConstraintEval> ev;
            InnerResult inner;
            try
            {
                inner = fixed_point_step(problem, feasible, target, refs, al, config, fea, record, regrowth);
                ev = evaluate(inner.analysis);
                result.inner_converged = result.inner_converged && (inner.converged || inner.budget_hit);
                if (inner.analysis.topo.same_set(feasible.topo))
                    ok = false;
            }
            catch (const LoadPathError &)
            {
                ok = false;
            }
            catch (const SingularSystemError &)
            {
                ok = false;
            }

            {
                const auto g = g_values(ev.empty() ? feasible_eval : ev);
                // Same slack convention as the level-set weights; the
                // standard rule already carries the sign flip.
                std::vector<double> slack(g.size()), slack_prev(g.size());
                for (std::size_t i = 0; i < g.size(); ++i)
                {
                    slack[i] = -g[i];
                    slack_prev[i] = -al.g_prev[i];
                }
                const bool paper = config.multiplier_rule == MultiplierRule::paper;
                al = update_multipliers(std::move(al), paper ? slack : g, config.multiplier_rule);
                al = update_penalties(std::move(al), slack_prev, slack, config.varsigma, config.eta);
                al.g_prev = g;
                ++al.k;
            }

            if (ok)
                for (const auto &e : ev)
                    ok = ok && e.g <= 0.0;
            if (ok)
            {
                feasible = std::move(inner.analysis);
                feasible_eval = std::move(ev);
                accept(feasible, feasible_eval);
                if (inner.budget_hit)
                {
                    result.status = RunStatus::budget_exhausted;
                    break;
                }
                continue;
            }
            if (inner.budget_hit)
            {
                result.status = RunStatus::budget_exhausted;
                break;
            }
            dv *= 0.5;
            if (dv < config.min_delta_v)
            {
                result.status = RunStatus::converged;
                break;
            }
        }
    }

    result.topology = feasible.topo;
    result.references.compliance.resize(cases);
    for (std::size_t n = 0; n < cases; ++n)
        result.references.compliance[n] = refs.compliance[n] * problem.load_scale[n] * problem.load_scale[n];
    for (std::size_t i = 0; i < m; ++i)
    {
        const auto &spec = problem.constraints[i].spec;
        const double s = problem.load_scale[static_cast<std::size_t>(spec.load_case)];
        const double phys = spec.kind == ConstraintKind::compliance ? s * s : s;
        result.references.constraint.push_back(refs.constraint[i] * phys);
        ConstraintEval e = feasible_eval[i];
        e.raw *= phys;
        e.reference *= phys;
        result.constraints.push_back(e);
    }
    for (std::size_t n = 0; n < cases; ++n)
    {
        result.compliance.push_back(feasible.compliance[n] * problem.load_scale[n] * problem.load_scale[n]);
        result.rel_compliance.push_back(feasible.compliance[n] / refs.compliance[n]);
    }
    result.von_mises.assign(problem.mesh.num_elements(), 0.0);
    for (std::size_t n = 0; n < cases; ++n)
        for (std::size_t e = 0; e < problem.mesh.num_elements(); ++e)
            result.von_mises[e] =
                std::max(result.von_mises[e], von_mises(feasible.tensors[n].stress[e]) * problem.load_scale[n]);
    result.level_set = build_level_set(problem, feasible, refs, al, g_values(feasible_eval), config).values;
    result.al = std::move(al);
    result.fea_count = fea;
    return result;
}

inline OptimizationResult run(const ProblemSpec &spec, int mesh_scale = 1)
{
    return run(resolve(spec, mesh_scale), spec.config);
}

} // namespace topt
