#include "dsilab/dpe.hpp"
#include "dsilab/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace dsi;

namespace {

const MarketParams kMarket(0.2, 1.0);

double max_abs_gap_to_bs(const DpeSolution& sol, const PayoffSpec& g) {
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < sol.grid.nx; ++i) {
        worst = std::max(worst, std::abs(sol.value(0, i) - bs_price(g, sol.s[i], 0.0, kMarket)));
    }
    return worst;
}

} // namespace

TEST(PdeGrid, DefaultsAndStability) {
    const auto g = PdeGrid::around(100.0, kMarket);
    EXPECT_EQ(g.nx, 400u);
    EXPECT_NEAR(g.x_max - g.x_min, 12 * 0.2, 1e-12);
    EXPECT_TRUE(g.stable(0.2));
    EXPECT_LE(g.dt(), 0.9 * g.dx() * g.dx() / 0.04 * 1.0001);
    PdeGrid bad = g;
    bad.nt = g.nt / 2;
    EXPECT_FALSE(bad.stable(0.2));
    EXPECT_THROW(solve_dpe(PayoffSpec::call(100), GammaBand::unconstrained(), kMarket, bad), std::invalid_argument);
    PdeGrid small = g;
    small.nx = 8;
    EXPECT_THROW(small.validate(), std::invalid_argument);
    EXPECT_TRUE(grid_covers(g, 100.0, kMarket));
    EXPECT_FALSE(grid_covers(g, 250.0, kMarket));
}

TEST(Dpe, UnconstrainedMatchesBlackScholes) {
    const auto g = PdeGrid::around(100.0, kMarket);
    const auto call = PayoffSpec::call(100);
    const auto sol = solve_dpe(call, GammaBand::unconstrained(), kMarket, g);
    EXPECT_LT(std::abs(price_at(sol, 100.0) - 7.9656) / 7.9656, 0.005);
    for (std::size_t i = g.nx / 4; i < 3 * g.nx / 4; ++i) {
        const double ref = bs_price(call, sol.s[i], 0.0, kMarket);
        EXPECT_LT(std::abs(sol.value(0, i) - ref), 0.005 * ref + 1e-4) << sol.s[i];  // absolute floor 1e-6 K for far out-of-the-money nodes
    }
    for (auto c : sol.active) EXPECT_EQ(c, ActiveConstraint::none);
}

TEST(Dpe, ConstantPayoffIsInvariant) {
    const auto g = PdeGrid::around(50.0, kMarket, 64);
    const auto c = PayoffSpec::piecewise_linear(3.0, {}, {0.0});
    const auto sol = solve_dpe(c, GammaBand(-1.0, 1.0), kMarket, g);
    for (double v : sol.v) EXPECT_NEAR(v, 3.0, 1e-12);
}

TEST(Dpe, ZeroUpperGivesSpot) {
    const MarketParams mp(0.2, 1.0);
    const auto g = PdeGrid::around(1.0, mp);
    const auto sol = solve_dpe(PayoffSpec::call(1.0), GammaBand::upper_only(0.0), mp, g);
    for (std::size_t i = 0; i < g.nx; ++i) EXPECT_NEAR(sol.value(0, i) / sol.s[i], 1.0, 0.01);
}

TEST(Dpe, UpperOnlyMatchesLiftedBlackScholes) {
    const auto g = PdeGrid::around(100.0, kMarket);
    const auto call = PayoffSpec::call(100);
    for (double up : {0.5, 5.0, 50.0}) {
        const auto band = GammaBand::upper_only(up);
        const auto sol = solve_dpe(call, band, kMarket, g);
        const auto lift = face_lift(call, band, sol.s);
        for (std::size_t i = 0; i < g.nx; ++i) {
            if (!grid_covers(g, sol.s[i], kMarket, 2.0)) continue;
            const double ref = bs_price(lift, sol.s[i], 0.0, kMarket);
            EXPECT_LT(std::abs(sol.value(0, i) / ref - 1.0), 0.01) << up << " " << sol.s[i];
        }
        EXPECT_EQ(sol.upper_violations, 0u) << up;
    }
}

TEST(Dpe, DominatesBlackScholes) {
    const auto g = PdeGrid::around(100.0, kMarket);
    const auto call = PayoffSpec::call(100);
    // grid tolerance = discretization error of the unconstrained solve on the same grid
    const double tol = max_abs_gap_to_bs(solve_dpe(call, GammaBand::unconstrained(), kMarket, g), call);
    EXPECT_LT(tol, 0.01);
    for (double up : {0.5, 5.0, 50.0}) {
        const auto sol = solve_dpe(call, GammaBand::upper_only(up), kMarket, g);
        for (std::size_t i = 1; i + 1 < g.nx; ++i) {
            EXPECT_GE(sol.value(0, i), bs_price(call, sol.s[i], 0.0, kMarket) - tol) << up << " " << sol.s[i];
        }
    }
    const auto binding = solve_dpe(call, GammaBand::upper_only(0.5), kMarket, g);
    EXPECT_GT(price_at(binding, 100.0), 1.01 * bs_price(call, 100.0, 0.0, kMarket));
}

TEST(Dpe, LowerConstraintOnConcavePayoff) {
    const auto g = PdeGrid::around(100.0, kMarket);
    const auto capped = PayoffSpec::piecewise_linear(0.0, {100}, {1.0, 0.0});  // min(s, 100)
    const auto sol = solve_dpe(capped, GammaBand::lower_only(0.0), kMarket, g);
    EXPECT_GT(price_at(sol, 100.0), bs_price(capped, 100.0, 0.0, kMarket) + 1.0);
    std::size_t lower = 0;
    for (auto c : sol.active) lower += c == ActiveConstraint::lower;
    EXPECT_GT(lower, 0u);
}

TEST(Dpe, MonotoneInPayoff) {
    const auto g = PdeGrid::around(100.0, kMarket, 200);
    const auto band = GammaBand(-10.0, 5.0);
    const auto lo = solve_dpe(PayoffSpec::call(110), band, kMarket, g);
    const auto hi = solve_dpe(PayoffSpec::call(100), band, kMarket, g);
    for (std::size_t k = 0; k < lo.v.size(); ++k) EXPECT_LE(lo.v[k], hi.v[k] + 1e-12);
}

TEST(Dpe, TimeMonotoneForConvexPayoff) {
    const auto g = PdeGrid::around(100.0, kMarket, 200);
    const auto sol = solve_dpe(PayoffSpec::call(100), GammaBand::unconstrained(), kMarket, g);
    for (std::size_t n = 0; n < g.nt; ++n) {
        for (std::size_t i = 0; i < g.nx; ++i) EXPECT_GE(sol.value(n, i), sol.value(n + 1, i) - 1e-6);
    }
}

TEST(Dpe, GridConvergence) {
    const auto call = PayoffSpec::call(100);
    std::vector<double> v;
    for (std::size_t nx : {201u, 401u, 801u, 1601u}) {
        v.push_back(price_at(solve_dpe(call, GammaBand::unconstrained(), kMarket, PdeGrid::around(100.0, kMarket, nx)), 100.0));
    }
    for (std::size_t k = 0; k + 2 < v.size(); ++k) {
        const double ratio = (v[k + 1] - v[k]) / (v[k + 2] - v[k + 1]);
        EXPECT_GT(ratio, 3.5);
        EXPECT_LT(ratio, 4.5);
    }
}

TEST(Dpe, ResidualShrinksWithRefinement) {
    const auto call = PayoffSpec::call(100);
    const auto coarse = solve_dpe(call, GammaBand::unconstrained(), kMarket, PdeGrid::around(100.0, kMarket, 201));
    const auto fine = solve_dpe(call, GammaBand::unconstrained(), kMarket, PdeGrid::around(100.0, kMarket, 401));
    EXPECT_LT(fine.residual_early, 0.3 * coarse.residual_early);
    EXPECT_LT(fine.residual_early, 0.01);
}

TEST(Greeks, NodesAndLimits) {
    const auto g = PdeGrid::around(100.0, kMarket);
    const auto sol = solve_dpe(PayoffSpec::call(100), GammaBand::unconstrained(), kMarket, g);
    const std::size_t n = 37, i = 123;
    const auto at = greeks(sol, sol.time(n), sol.s[i]);
    EXPECT_NEAR(at.v, sol.value(n, i), 1e-12 * (1 + at.v));
    EXPECT_NEAR(at.v_s, sol.v_s[sol.index(n, i)], 1e-9);
    EXPECT_NEAR(at.s2v_ss, sol.s2v_ss[sol.index(n, i)], 1e-9);
    EXPECT_NEAR(greeks(sol, 0.0, 250.0).v_s, 1.0, 0.05);
    EXPECT_NEAR(greeks(sol, 0.0, 100.0).v_s, normal_cdf(0.1), 0.01);
    EXPECT_THROW(greeks(sol, 0.0, 500.0), std::out_of_range);
    EXPECT_THROW(greeks(sol, 1.5, 100.0), std::out_of_range);
}

TEST(Greeks, GammaStaysInBand) {
    const auto g = PdeGrid::around(100.0, kMarket);
    const auto band = GammaBand::upper_only(5.0);
    const auto sol = solve_dpe(PayoffSpec::call(100), band, kMarket, g);
    for (std::size_t k = 0; k < sol.s2v_ss.size(); ++k) EXPECT_LE(sol.s2v_ss[k], 5.0 + sol.constraint_tol);
    // constrained-strategy drift is bounded on the grid
    EXPECT_TRUE(std::isfinite(sol.alpha_max));
    EXPECT_LT(sol.alpha_max, 10.0);
}

TEST(Dpe, SurfaceCsv) {
    const auto g = PdeGrid::around(100.0, kMarket, 16);
    const auto sol = solve_dpe(PayoffSpec::call(100), GammaBand::upper_only(5.0), kMarket, g);
    std::ostringstream out;
    export_surface_csv(sol, out, 1000000);
    const std::string text = out.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "t,s,v,v_s,s2v_ss,active");
    // header + first row block + terminal row block
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), 1 + 2 * g.nx);
}
