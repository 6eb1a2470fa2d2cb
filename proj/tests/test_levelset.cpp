#include <topt/levelset.hpp>
#include <topt/verify.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace topt;

namespace {

SensitivityField field(std::vector<double> v)
{
    SensitivityField f;
    f.values = std::move(v);
    return f;
}

SensitivityField random_field(std::mt19937 &rng, std::size_t n)
{
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    SensitivityField f;
    f.values.resize(n);
    for (auto &x : f.values)
        x = d(rng);
    return f;
}

} // namespace

TEST(FindTau, OrderStatistics)
{
    const auto f = field({0.1, 0.2, 0.3, 0.4});
    const Cut cut = find_tau(f, 0.5);
    EXPECT_GE(cut.tau, 0.2);
    EXPECT_LT(cut.tau, 0.3);
    EXPECT_EQ(cut.keep_count, 2u);
    const auto t = extract_domain(f, cut.tau);
    EXPECT_EQ(t.solid, (std::vector<std::uint8_t>{0, 0, 1, 1}));
    EXPECT_EQ(t.volume_fraction, 0.5);
}

TEST(FindTau, FullTargetKeepsEverything)
{
    const auto f = field({0.3, -0.7, 0.1});
    const Cut cut = find_tau(f, 1.0);
    EXPECT_LT(cut.tau, -0.7);
    EXPECT_EQ(extract_domain(f, cut.tau).volume_fraction, 1.0);
}

TEST(FindTau, RejectsBadTargets)
{
    const auto f = field({0.3, -0.7, 0.1});
    EXPECT_THROW(find_tau(f, 0.0), InvalidInput);
    EXPECT_THROW(find_tau(f, -0.1), InvalidInput);
    EXPECT_THROW(find_tau(f, 1.5), InvalidInput);
    EXPECT_THROW(find_tau(field({}), 0.5), InvalidInput);
}

TEST(FindTau, TiesKeepLowerIndexFirst)
{
    const auto f = field({0.5, 0.5, 0.5, 0.5, 0.9});
    const auto t = extract_domain(f, find_tau(f, 0.6));
    EXPECT_EQ(t.solid, (std::vector<std::uint8_t>{1, 1, 0, 0, 1}));
}

TEST(FindTau, VolumeExactness)
{
    EXPECT_LE(verify::tau_exactness(100, 11), 1.0);
    EXPECT_LE(verify::tau_exactness(100, 12), 1.0);
}

TEST(FindTau, ExactWithHeavyTies)
{
    std::mt19937 rng(4);
    std::uniform_int_distribution<int> level(0, 3);
    std::uniform_real_distribution<double> target(0.01, 1.0);
    for (int trial = 0; trial < 100; ++trial)
    {
        SensitivityField f;
        f.values.resize(97);
        for (auto &x : f.values)
            x = 0.25 * level(rng);
        const double vf = target(rng);
        const auto t = extract_domain(f, find_tau(f, vf));
        EXPECT_LE(std::abs(t.volume_fraction - vf) * 97.0, 0.5 + 1e-12);
    }
}

TEST(ExtractDomain, BelowMinimumIsFull)
{
    const auto f = field({0.3, -0.7, 0.1});
    const auto t = extract_domain(f, -1.0);
    EXPECT_EQ(t.volume_fraction, 1.0);
    EXPECT_THROW(extract_domain(f, std::nan("")), InvalidInput);
}

TEST(ExtractDomain, NestedInTau)
{
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial)
    {
        const auto f = random_field(rng, 300);
        double t1 = d(rng), t2 = d(rng);
        if (t1 > t2)
            std::swap(t1, t2);
        const auto a = extract_domain(f, t1);
        const auto b = extract_domain(f, t2);
        for (std::size_t e = 0; e < f.size(); ++e)
            EXPECT_LE(b.solid[e], a.solid[e]);
    }
}

TEST(ExtractDomain, ProtectedStaysSolid)
{
    auto f = field({-0.9, 0.5, 0.8});
    f.protected_elements = {0};
    const auto t = extract_domain(f, 0.6);
    EXPECT_EQ(t.solid, (std::vector<std::uint8_t>{1, 0, 1}));
    EXPECT_EQ(t.volume_fraction, 2.0 / 3.0);
}

TEST(ExtractDomain, InvariantUnderMonotoneTransform)
{
    std::mt19937 rng(10);
    std::uniform_real_distribution<double> target(0.05, 1.0);
    for (int trial = 0; trial < 50; ++trial)
    {
        const auto f = random_field(rng, 250);
        SensitivityField g = f;
        for (auto &x : g.values)
            x = std::exp(3.0 * x) - 7.0;
        const double vf = target(rng);
        EXPECT_EQ(extract_domain(f, find_tau(f, vf)).solid, extract_domain(g, find_tau(g, vf)).solid);
    }
}

TEST(SmoothFilter, RadiusZeroIsIdentity)
{
    const Mesh m = build_mesh({1.0, 1.0, 5, 5, {}});
    std::mt19937 rng(1);
    const auto f = random_field(rng, m.num_elements());
    EXPECT_EQ(smooth_filter(m, f, 0.0).values, f.values);
    EXPECT_THROW(smooth_filter(m, f, -1.0), InvalidInput);
}

TEST(SmoothFilter, UniformFieldUnchanged)
{
    const Mesh m = build_mesh({1.0, 1.0, 10, 10, {Rect{0.4, 0.4, 1.0, 1.0}}});
    SensitivityField f;
    f.values.assign(m.num_elements(), -0.375);
    for (double r : {1.0, 1.5, 2.5, 4.0})
        for (double v : smooth_filter(m, f, r).values)
            EXPECT_NEAR(v, -0.375, 1e-15);
}

TEST(SmoothFilter, SpikeMatchesDirectConvolution)
{
    const Mesh m = build_mesh({1.0, 1.0, 5, 5, {}});
    SensitivityField f;
    f.values.assign(25, 0.0);
    const int centre = m.element_at(2, 2);
    f.values[static_cast<std::size_t>(centre)] = 1.0;
    const auto out = smooth_filter(m, f, 1.5);

    // Cone weights at distances 0, 1 and sqrt(2) for r = 1.5.
    const double w0 = 1.0, w1 = 1.0 - 1.0 / 1.5, w2 = 1.0 - std::sqrt(2.0) / 1.5;
    auto total = [&](int ix, int iy) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
            {
                if (ix + dx < 0 || iy + dy < 0 || ix + dx > 4 || iy + dy > 4)
                    continue;
                s += (dx == 0 && dy == 0) ? w0 : (dx == 0 || dy == 0) ? w1 : w2;
            }
        return s;
    };
    for (int iy = 0; iy < 5; ++iy)
        for (int ix = 0; ix < 5; ++ix)
        {
            const int dx = std::abs(ix - 2), dy = std::abs(iy - 2);
            double w = 0.0;
            if (dx == 0 && dy == 0)
                w = w0;
            else if (dx + dy == 1)
                w = w1;
            else if (dx == 1 && dy == 1)
                w = w2;
            EXPECT_NEAR(out.values[static_cast<std::size_t>(m.element_at(ix, iy))], w / total(ix, iy), 1e-15)
                << ix << "," << iy;
        }
}
