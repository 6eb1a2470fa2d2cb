#pragma once

#include "auglag.hpp"
#include "errors.hpp"

namespace topt {

enum class ObjectiveKind
{
    volume,     ///< minimize material volume subject to the constraints
    compliance, ///< trace compliance-optimal topologies down to a target volume
};

struct OptimizerConfig
{
    double delta_v = 0.025;
    double mu0 = 1.0;
    double gamma0 = 10.0;
    double varsigma = 0.25;
    double eta = 10.0;
    double compliance_tol = 0.015;
    double min_delta_v = 0.0025;
    int max_inner_iters = 20;
    int max_total_fea = 1000;
    bool filter = false;
    double filter_radius = 1.5; ///< in element widths
    MultiplierRule multiplier_rule = MultiplierRule::paper;
    bool condition_estimate = false;

    void validate() const
    {
        if (!(min_delta_v > 0.0 && min_delta_v <= delta_v && delta_v < 1.0))
            throw InvalidInput("volume decrements must satisfy 0 < min_delta_v <= delta_v < 1");
        if (!(mu0 >= 0.0) || !(gamma0 > 0.0))
            throw InvalidInput("initial multipliers must be >= 0 and penalties > 0");
        if (!(varsigma > 0.0 && varsigma < 1.0) || !(eta > 0.0))
            throw InvalidInput("penalty update requires 0 < varsigma < 1 and eta > 0");
        if (!(compliance_tol > 0.0) || max_inner_iters < 1 || max_total_fea < 1)
            throw InvalidInput("tolerances and iteration caps must be positive");
        if (!(filter_radius >= 0.0))
            throw InvalidInput("filter radius must be non-negative");
    }

    friend bool operator==(const OptimizerConfig &, const OptimizerConfig &) = default;
};

} // namespace topt
