#pragma once

// Relative constraint evaluation and augmented Lagrangian bookkeeping.

#include "errors.hpp"
#include "sensitivity.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace topt {

struct ConstraintEval
{
    double raw = 0.0;
    double reference = 0.0;
    double g = 0.0; ///< raw / reference - bound; feasible when <= 0
};

inline ConstraintEval evaluate_constraint(const ConstraintSpec &spec, double raw, double reference)
{
    if (!(reference > 0.0))
        throw InvalidInput(std::string("reference value of ") + to_string(spec.kind) +
                           " constraint is not positive; the initial state is degenerate");
    return {raw, reference, raw / reference - spec.bound};
}

enum class MultiplierRule
{
    paper,    ///< mu <- max(mu - g, 0)
    standard, ///< mu <- max(mu + gamma g, 0)
};

struct ALState
{
    std::vector<double> mu;
    std::vector<double> gamma;
    std::vector<double> g_prev;
    int k = 0;

    static ALState initial(std::size_t constraints, double mu0, double gamma0)
    {
        return {std::vector<double>(constraints, mu0), std::vector<double>(constraints, gamma0),
                std::vector<double>(constraints, 0.0), 0};
    }
};

/// Weight of a constraint field in the combined level-set; zero once
/// mu - gamma g is no longer positive.
inline double level_set_coefficient(double g, double mu, double gamma)
{
    const double c = mu - gamma * g;
    return c > 0.0 ? c : 0.0;
}

/// Evaluated in extended precision and rounded once.
inline double lagrangian_terms(double g, double mu, double gamma)
{
    const long double gl = g, ml = mu, yl = gamma;
    if (mu - gamma * g > 0.0)
        return static_cast<double>(ml * gl - 0.5L * yl * gl * gl);
    return static_cast<double>(0.5L * ml * ml / yl);
}

struct ConstraintTerm
{
    const SensitivityField *field = nullptr;
    double g = 0.0;
    double mu = 0.0;
    double gamma = 1.0;
};

/// T_L = T_obj - sum_i c_i T_i with c_i = max(mu_i - gamma_i g_i, 0).
/// The result is not normalized.
inline SensitivityField combine_level_sets(const SensitivityField &objective, std::span<const ConstraintTerm> terms)
{
    SensitivityField out;
    out.values = objective.values;
    for (const auto &t : terms)
    {
        if (t.field == nullptr || t.field->values.size() != out.values.size())
            throw InvalidInput("constraint sensitivity field size does not match the objective field");
        const double c = level_set_coefficient(t.g, t.mu, t.gamma);
        if (c == 0.0)
            continue;
        for (std::size_t e = 0; e < out.values.size(); ++e)
            out.values[e] -= c * t.field->values[e];
    }
    return out;
}

inline ALState update_multipliers(ALState state, std::span<const double> g, MultiplierRule rule = MultiplierRule::paper)
{
    for (std::size_t i = 0; i < state.mu.size(); ++i)
    {
        const double step = rule == MultiplierRule::paper ? g[i] : -state.gamma[i] * g[i];
        state.mu[i] = std::max(state.mu[i] - step, 0.0);
    }
    return state;
}

/// Keeps gamma_i when min(g_curr, 0) <= varsigma min(g_prev, 0), otherwise
/// raises it to max(eta gamma_i, k^2).
inline ALState update_penalties(ALState state, std::span<const double> g_prev, std::span<const double> g_curr,
                                double varsigma = 0.25, double eta = 10.0)
{
    if (!(varsigma > 0.0 && varsigma < 1.0) || !(eta > 0.0))
        throw InvalidInput("penalty update requires 0 < varsigma < 1 and eta > 0");
    const double k2 = static_cast<double>(state.k) * static_cast<double>(state.k);
    for (std::size_t i = 0; i < state.gamma.size(); ++i)
    {
        if (std::min(g_curr[i], 0.0) <= varsigma * std::min(g_prev[i], 0.0))
            continue;
        state.gamma[i] = std::max(eta * state.gamma[i], k2);
    }
    return state;
}

} // namespace topt
