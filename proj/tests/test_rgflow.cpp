#include <gtest/gtest.h>

#include "planar/rgflow.hpp"

using namespace planar;

namespace {
BetaSpec anchored(double c = 1.0, double b = 1.0) {
    BetaSpec s;
    s.mode = BetaMode::anchored;
    s.c = c;
    s.b = b;
    return s;
}
}  // namespace

TEST(Flow, AnchoredConverges) {
    const auto f = run_flow(0.1, anchored(), 2.0, -60);
    ASSERT_TRUE(f.summary.converged);
    EXPECT_FALSE(f.summary.diverged);
    EXPECT_EQ(f.trajectory.back().h, -60);
    EXPECT_LE(std::abs(f.summary.lambda_inf - 0.1), 2 * 0.1 * 0.1);
    // Increments shrink by gamma.
    const auto& t = f.trajectory;
    for (int k = 2; k < 30; ++k) {
        const double d1 = t[k].lambda - t[k - 1].lambda;
        const double d2 = t[k + 1].lambda - t[k].lambda;
        EXPECT_NEAR(d2 / d1, 0.5, 0.05) << "step " << k;
    }
}

TEST(Flow, AnchoredBoundAcrossCouplings) {
    const double gamma = 2.0, c = 1.0;
    for (double l0 : {0.05, 0.1, 0.2, -0.1, -0.2}) {
        const auto f = run_flow(l0, anchored(c), gamma, -80);
        ASSERT_TRUE(f.summary.converged);
        EXPECT_LE(std::abs(f.summary.lambda_inf - l0), 2 * l0 * l0);
        EXPECT_LE(std::abs(f.summary.lambda_inf - l0), 2 * c / (gamma - 1) * 1.1 * l0 * l0);
    }
}

TEST(Flow, AnchoredMapIsMonotoneAndSmooth) {
    std::vector<double> li;
    const double h = 0.01;
    for (int k = -30; k <= 30; ++k) li.push_back(run_flow(k * h, anchored(), 2.0, -60).summary.lambda_inf);
    for (std::size_t k = 1; k < li.size(); ++k) EXPECT_GT(li[k], li[k - 1]);
    for (std::size_t k = 1; k + 1 < li.size(); ++k) {
        const double second = (li[k + 1] - 2 * li[k] + li[k - 1]) / (h * h);
        EXPECT_LT(std::abs(second), 5.0);
    }
}

TEST(Flow, RunawayDiverges) {
    BetaSpec s;
    s.mode = BetaMode::runaway;
    s.a = 1.0;
    const auto f = run_flow(0.1, s, 2.0, -60);
    EXPECT_TRUE(f.summary.diverged);
    EXPECT_FALSE(f.summary.converged);
    bool exceeded_one = false;
    for (std::size_t k = 1; k < f.trajectory.size(); ++k) {
        EXPECT_GT(f.trajectory[k].lambda, f.trajectory[k - 1].lambda);
        exceeded_one = exceeded_one || f.trajectory[k].lambda > 1.0;
    }
    EXPECT_TRUE(exceeded_one);
    EXPECT_LT(f.summary.divergence_h, 0);
    EXPECT_GT(std::abs(f.trajectory.back().lambda), flow_overflow_guard);
}

TEST(Flow, ZeroCouplingIsFixedPoint) {
    const auto f = run_flow(0.0, anchored(), 2.0, -20);
    for (const auto& s : f.trajectory) {
        EXPECT_EQ(s.lambda, 0.0);
        EXPECT_EQ(s.Z, 1.0);
    }
    EXPECT_EQ(eta_from_flow(f, 1.0).eta, 0.0);
}

TEST(Flow, TabulatedMode) {
    BetaSpec s;
    s.mode = BetaMode::tabulated;
    s.table.assign(20, 0.0);
    s.table[0] = 1.0;
    const auto f = run_flow(0.1, s, 2.0, -20);
    EXPECT_NEAR(f.trajectory[1].lambda, 0.11, 1e-15);
    EXPECT_NEAR(f.summary.lambda_inf, 0.11, 1e-15);
    s.table.resize(5);
    EXPECT_THROW(run_flow(0.1, s, 2.0, -20), ConfigError);
}

TEST(Flow, ZStaysPositive) {
    for (double l0 : {-0.45, -0.1, 0.3, 0.45}) {
        const auto f = run_flow(l0, anchored(1.0, 3.0), 1.5, -40);
        for (const auto& s : f.trajectory) EXPECT_GT(s.Z, 0.0);
    }
}

TEST(Flow, Preconditions) {
    EXPECT_THROW(run_flow(0.5, anchored(), 2.0, -20), ConfigError);
    EXPECT_THROW(run_flow(0.1, anchored(), 1.0, -20), ConfigError);
    EXPECT_THROW(run_flow(0.1, anchored(), 2.0, -5), ConfigError);
    EXPECT_THROW(run_flow(0.1, anchored(1.0, 0.0), 2.0, -20), ConfigError);
    EXPECT_EQ(beta_mode_from_name("runaway"), BetaMode::runaway);
    EXPECT_THROW(beta_mode_from_name("other"), ConfigError);
}

TEST(Eta, MatchesStationaryClosedForm) {
    for (double l0 : {0.05, 0.1, 0.2}) {
        const auto f = run_flow(l0, anchored(), 2.0, -60);
        const auto e = eta_from_flow(f, 1.0);
        EXPECT_NEAR(e.eta, e.stationary, 1e-10);
        EXPECT_NEAR(e.eta, e.small_coupling, 2 * std::pow(f.summary.lambda_inf, 4) / std::log(2.0));
    }
}

TEST(Eta, EvenAtLeadingOrder) {
    // The odd part is third order while eta itself is second order, so the
    // relative odd part shrinks linearly with the coupling.
    double prev = 0.0;
    for (double l0 : {0.1, 0.05, 0.025, 0.0125}) {
        const double ep = eta_from_flow(run_flow(l0, anchored(), 2.0, -60), 1.0).eta;
        const double em = eta_from_flow(run_flow(-l0, anchored(), 2.0, -60), 1.0).eta;
        EXPECT_GT(ep, 0.5 * l0 * l0 / std::log(2.0));
        EXPECT_GT(em, 0.5 * l0 * l0 / std::log(2.0));
        const double odd = std::abs(ep - em) / (ep + em);
        EXPECT_LT(odd, 0.5 * l0 / 0.1);
        if (prev > 0.0) EXPECT_NEAR(odd / prev, 0.5, 0.05);
        prev = odd;
    }
}

TEST(Eta, RequiresConvergence) {
    BetaSpec s;
    s.mode = BetaMode::runaway;
    EXPECT_THROW(eta_from_flow(run_flow(0.1, s, 2.0, -60), 1.0), NumericError);
}

TEST(ScalingDimension, Classification) {
    auto d4 = scaling_dimension(4, 0);
    EXPECT_EQ(d4.D, 0.0);
    EXPECT_EQ(d4.label, Relevance::marginal);
    auto d2 = scaling_dimension(2, 0);
    EXPECT_EQ(d2.D, 1.0);
    EXPECT_EQ(d2.label, Relevance::relevant);
    auto d6 = scaling_dimension(6, 0);
    EXPECT_EQ(d6.D, -1.0);
    EXPECT_EQ(d6.label, Relevance::irrelevant);
    EXPECT_EQ(scaling_dimension(2, 1).label, Relevance::marginal);
    EXPECT_EQ(scaling_dimension(4, 1).label, Relevance::irrelevant);
    EXPECT_THROW(scaling_dimension(3, 0), ConfigError);
    EXPECT_THROW(scaling_dimension(0, 0), ConfigError);
    EXPECT_THROW(scaling_dimension(4, -1), ConfigError);
}
