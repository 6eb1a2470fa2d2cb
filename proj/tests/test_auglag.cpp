#include <topt/auglag.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace topt;

TEST(EvaluateConstraint, Examples)
{
    const ConstraintSpec active{ConstraintKind::point_displacement, 0, {}, {0.0, -1.0}, 1.5, 8};
    EXPECT_EQ(evaluate_constraint(active, 3.0, 2.0).g, 0.0);
    const ConstraintSpec loose{ConstraintKind::pnorm_stress, 0, {}, {0.0, -1.0}, 3.0, 8};
    EXPECT_EQ(evaluate_constraint(loose, 7.25, 7.25).g, -2.0);
    EXPECT_THROW(evaluate_constraint(loose, 1.0, 0.0), InvalidInput);
    EXPECT_THROW(evaluate_constraint(loose, 1.0, -1.0), InvalidInput);
}

TEST(LagrangianTerms, Branches)
{
    EXPECT_EQ(lagrangian_terms(0.05, 1.0, 10.0), 0.0375);
    EXPECT_EQ(lagrangian_terms(0.2, 1.0, 10.0), 0.05);
    EXPECT_EQ(lagrangian_terms(0.0, 1.0, 10.0), 0.0);
}

TEST(LagrangianTerms, ContinuousAtSwitchingSurface)
{
    // mu - gamma g = 0 exactly for these dyadic inputs.
    for (auto [mu, gamma] : {std::pair{1.0, 8.0}, std::pair{0.5, 4.0}, std::pair{3.0, 0.75}})
    {
        const double g = mu / gamma;
        EXPECT_EQ(level_set_coefficient(g, mu, gamma), 0.0);
        EXPECT_EQ(lagrangian_terms(g, mu, gamma), 0.5 * mu * mu / gamma);
        const double below = std::nextafter(g, 0.0);
        EXPECT_NEAR(lagrangian_terms(below, mu, gamma), 0.5 * mu * mu / gamma, 1e-12);
    }
}

TEST(CombineLevelSets, NoConstraintsIsIdentity)
{
    SensitivityField obj;
    obj.values = {-1.0, 0.25, 3.0};
    EXPECT_EQ(combine_level_sets(obj, {}).values, obj.values);
}

TEST(CombineLevelSets, InactiveBranchContributesNothing)
{
    SensitivityField obj, tg;
    obj.values = {-1.0, -1.0};
    tg.values = {5.0, -7.0};
    const std::vector<ConstraintTerm> terms = {{&tg, 0.2, 1.0, 10.0}};
    EXPECT_EQ(combine_level_sets(obj, terms).values, obj.values);
}

TEST(CombineLevelSets, ActiveBranch)
{
    SensitivityField obj, tg;
    obj.values = {-1.0, -1.0, -1.0, -1.0};
    tg.values = {0.0, 1.0, -2.0, 0.5};
    const std::vector<ConstraintTerm> terms = {{&tg, 0.05, 1.0, 10.0}};
    const auto tl = combine_level_sets(obj, terms);
    for (std::size_t e = 0; e < tg.values.size(); ++e)
        EXPECT_EQ(tl.values[e], -1.0 - 0.5 * tg.values[e]);
}

TEST(CombineLevelSets, SizeMismatch)
{
    SensitivityField obj, tg;
    obj.values = {1.0, 2.0};
    tg.values = {1.0};
    const std::vector<ConstraintTerm> terms = {{&tg, 0.0, 1.0, 1.0}};
    EXPECT_THROW(combine_level_sets(obj, terms), InvalidInput);
}

TEST(CombineLevelSets, LinearInFields)
{
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    SensitivityField a, b, t1, t2, sum_obj, sum_t;
    for (int i = 0; i < 30; ++i)
    {
        a.values.push_back(d(rng));
        b.values.push_back(d(rng));
        t1.values.push_back(d(rng));
        t2.values.push_back(d(rng));
        sum_obj.values.push_back(a.values.back() + b.values.back());
        sum_t.values.push_back(t1.values.back() + t2.values.back());
    }
    SensitivityField zero;
    zero.values.assign(30, 0.0);
    const std::vector<ConstraintTerm> ta = {{&t1, -0.1, 1.0, 10.0}};
    const std::vector<ConstraintTerm> tb = {{&t2, -0.1, 1.0, 10.0}};
    const std::vector<ConstraintTerm> tsum = {{&sum_t, -0.1, 1.0, 10.0}};
    const auto lhs = combine_level_sets(sum_obj, tsum);
    const auto ra = combine_level_sets(a, ta);
    const auto rb = combine_level_sets(b, tb);
    for (std::size_t e = 0; e < 30; ++e)
        EXPECT_NEAR(lhs.values[e], ra.values[e] + rb.values[e], 1e-14);
}

TEST(UpdateMultipliers, DefaultRule)
{
    ALState s = ALState::initial(3, 1.0, 10.0);
    s.mu = {1.0, 0.1, 1.0};
    const std::vector<double> g = {0.2, 0.5, -0.5};
    const auto out = update_multipliers(s, g);
    EXPECT_EQ(out.mu, (std::vector<double>{0.8, 0.0, 1.5}));
    EXPECT_EQ(out.gamma, s.gamma);
}

TEST(UpdateMultipliers, StandardRule)
{
    ALState s = ALState::initial(2, 1.0, 10.0);
    const std::vector<double> g = {0.25, -0.5};
    const auto out = update_multipliers(s, g, MultiplierRule::standard);
    EXPECT_EQ(out.mu, (std::vector<double>{3.5, 0.0}));
}

TEST(UpdatePenalties, Branches)
{
    ALState s = ALState::initial(3, 1.0, 10.0);
    s.k = 2;
    const std::vector<double> g_prev = {-0.5, -0.5, 0.3};
    const std::vector<double> g_curr = {-0.1, -0.6, 0.1};
    const auto out = update_penalties(s, g_prev, g_curr, 0.25, 10.0);
    EXPECT_EQ(out.gamma, (std::vector<double>{100.0, 10.0, 10.0}));
}

TEST(UpdatePenalties, KSquaredDominatesLateInTheRun)
{
    ALState s = ALState::initial(1, 1.0, 0.5);
    s.k = 4;
    const std::vector<double> g_prev = {-0.5}, g_curr = {-0.1};
    EXPECT_EQ(update_penalties(s, g_prev, g_curr).gamma[0], 16.0);
    EXPECT_THROW(update_penalties(s, g_prev, g_curr, 1.5, 10.0), InvalidInput);
}

TEST(AugmentedLagrangian, MultipliersNonNegativeAndPenaltiesMonotone)
{
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (auto rule : {MultiplierRule::paper, MultiplierRule::standard})
    {
        ALState s = ALState::initial(4, 1.0, 10.0);
        std::vector<double> prev(4, 0.0);
        for (int step = 0; step < 200; ++step)
        {
            std::vector<double> g(4);
            for (auto &v : g)
                v = d(rng);
            const auto before = s.gamma;
            s = update_multipliers(std::move(s), g, rule);
            s = update_penalties(std::move(s), prev, g);
            prev = g;
            ++s.k;
            for (std::size_t i = 0; i < 4; ++i)
            {
                EXPECT_GE(s.mu[i], 0.0);
                EXPECT_GE(s.gamma[i], before[i]);
            }
        }
    }
}

TEST(AugmentedLagrangian, LoadScalingLeavesDecisionsUnchanged)
{
    const ConstraintSpec spec{ConstraintKind::point_displacement, 0, {}, {0.0, -1.0}, 1.5, 8};
    for (double raw : {0.7, 1.2, 2.9})
    {
        const double g1 = evaluate_constraint(spec, raw, 1.3).g;
        const double g2 = evaluate_constraint(spec, raw * 1024.0, 1.3 * 1024.0).g;
        EXPECT_EQ(g1, g2);
        EXPECT_EQ(level_set_coefficient(g1, 1.0, 10.0), level_set_coefficient(g2, 1.0, 10.0));
    }
}
