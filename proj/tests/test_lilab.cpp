#include "dsilab/lilab.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

using namespace dsi;

namespace {

BrownianBundle geometric_bundle(std::size_t d, std::size_t K, std::size_t paths, std::uint64_t seed,
                                std::size_t substeps = 1) {
    return sample_bundle(d, make_grid(GeometricGrid{1e-2, 0.5, K, substeps}), paths, seed, {false, {}});
}

} // namespace

TEST(RatioRate, Domains) {
    EXPECT_THROW(ratio_rate(RatioKind::h_normalized, 0.5), std::domain_error);
    EXPECT_NO_THROW(ratio_rate(RatioKind::h_normalized, 0.3));
    EXPECT_THROW(ratio_rate(RatioKind::example36, 0.07), std::domain_error);
    EXPECT_NO_THROW(ratio_rate(RatioKind::example36, 0.06));
    EXPECT_DOUBLE_EQ(ratio_rate(RatioKind::t_normalized, 0.25), 0.125);
    // rate36 at t = e^{-e^e}: logloglog = 1
    const double t = std::exp(-std::exp(std::numbers::e));
    EXPECT_NEAR(ratio_rate(RatioKind::example36, t), t * std::numbers::e, 1e-12 * t);
}

TEST(RatioSup, RejectsTimesOutsideDomain) {
    auto bundle = sample_bundle(1, make_grid(UniformGrid{1.0, 10}), 5, 1);
    const auto v = closed_form_constant(bundle, SymMatrix{{1}});
    EXPECT_THROW(ratio_sup(v, RatioOptions{}), std::domain_error);
    EXPECT_NO_THROW(ratio_sup(v, RatioOptions{RatioKind::h_normalized, false, 0.0, 0.3}));
}

TEST(RatioSup, ZeroIntegrandGivesZero) {
    auto bundle = geometric_bundle(2, 20, 50, 3, 2);
    const auto trace = integrate_double(bundle, make_integrand("zero", 2));
    const auto est = ratio_sup(trace, RatioOptions{}, bundle.grid());
    for (double s : est.per_path_sup) EXPECT_EQ(s, 0.0);
    ASSERT_TRUE(est.grid.has_value());
    EXPECT_EQ(est.grid->levels, 20u);
}

TEST(RatioSup, NegativeOneIsBoundedByOne) {
    auto bundle = geometric_bundle(1, 40, 10000, 7);
    const auto v = closed_form_constant(bundle, SymMatrix{{-1}});
    const auto est = ratio_sup(v, RatioOptions{RatioKind::t_normalized}, bundle.grid());
    for (double s : est.per_path_sup) EXPECT_LE(s, 1.0);
    // per level P[chi2_1 <= 0.1] ~ 0.248 over 41 levels
    EXPECT_GT(fraction_at_least(est.per_path_sup, 0.9), 0.99);
}

TEST(RatioSup, LevelTimesOnly) {
    auto bundle = geometric_bundle(1, 10, 20, 4, 4);
    const auto v = closed_form_constant(bundle, SymMatrix{{1}});
    const auto est = ratio_sup(v, RatioOptions{}, bundle.grid());
    EXPECT_DOUBLE_EQ(est.t_min, bundle.grid().geometric()->finest());
    for (std::size_t p = 0; p < 20; ++p) {
        double best = -1e300;
        for (std::size_t k : bundle.grid().level_indices()) {
            best = std::max(best, v[p][k + 1] / ratio_rate(RatioKind::h_normalized, bundle.grid()[k]));
        }
        EXPECT_EQ(est.per_path_sup[p], best);
    }
}

TEST(RatioSup, ScalingIsExact) {
    auto bundle = geometric_bundle(2, 25, 200, 9, 4);
    const auto b = make_integrand("rotation", 2);
    const auto t1 = integrate_double(bundle, b);
    const auto t3 = integrate_double(bundle, b.scaled(3.0));
    const auto e1 = ratio_sup(t1, RatioOptions{}, bundle.grid());
    const auto e3 = ratio_sup(t3, RatioOptions{}, bundle.grid());
    for (std::size_t p = 0; p < 200; ++p) {
        EXPECT_NEAR(e3.per_path_sup[p], 3.0 * e1.per_path_sup[p], 1e-12 * (1.0 + std::abs(e3.per_path_sup[p])));
    }
}

TEST(RatioSup, MonotoneInLevels) {
    for (std::size_t K : {10u, 20u, 34u}) {
        auto small = geometric_bundle(2, K, 500, 21);
        auto large = geometric_bundle(2, K + 12, 500, 21);
        const SymMatrix beta{{1, 0}, {0, -1}};
        const auto es = ratio_sup(closed_form_constant(small, beta), RatioOptions{}, small.grid());
        const auto el = ratio_sup(closed_form_constant(large, beta), RatioOptions{}, large.grid());
        for (std::size_t p = 0; p < 500; ++p) EXPECT_GE(el.per_path_sup[p], es.per_path_sup[p]);
    }
}

TEST(RatioSup, OrderingByTopEigenvalue) {
    auto bundle = geometric_bundle(2, 34, 10000, 13);
    const auto e1 = ratio_sup(closed_form_constant(bundle, SymMatrix{{1, 0}, {0, -1}}), RatioOptions{}, bundle.grid());
    const auto e2 = ratio_sup(closed_form_constant(bundle, SymMatrix{{2, 0}, {0, -1}}), RatioOptions{}, bundle.grid());
    EXPECT_GT(e2.summary.median, e1.summary.median);
    // golden interval, seed 13, 1e4 paths
    EXPECT_NEAR(e1.summary.median, 0.8128, 0.01);
    EXPECT_NEAR(e2.summary.median, 1.5174, 0.01);
}

TEST(RatioSup, EnvelopeForBoundedCatalog) {
    for (std::size_t d : {1u, 2u}) {
        auto bundle = geometric_bundle(d, 34, 10000, 13, 8);
        for (const auto& entry : integrand_catalog()) {
            const auto b = make_integrand(entry.name, d);
            if (!b.bound() || *b.bound() > 1.0) continue;
            const auto est = ratio_sup(integrate_double(bundle, b), RatioOptions{RatioKind::h_normalized, false, 0.0, 1e-2},
                                       bundle.grid());
            EXPECT_LT(est.summary.q99, 3.38) << entry.name << " d=" << d;
            EXPECT_LT(fraction_at_least(est.per_path_sup, 3.38), 0.01) << entry.name << " d=" << d;
        }
    }
}

TEST(RatioSup, CsvAndJson) {
    auto bundle = geometric_bundle(1, 5, 3, 1);
    const auto est = ratio_sup(closed_form_constant(bundle, SymMatrix{{1}}), RatioOptions{}, bundle.grid());
    std::ostringstream csv;
    write_sup_csv(est, csv);
    EXPECT_EQ(csv.str().substr(0, 9), "path,sup\n");
    const auto j = to_json(est);
    EXPECT_EQ(j["ratio"], "h");
    EXPECT_EQ(j["grid"]["levels"], 5);
    EXPECT_EQ(j["paths"], 3);
}

TEST(Moment, ClosedForm) {
    EXPECT_NEAR(moment_identity(0.5, 0.5, 1), std::exp(-0.25) * std::sqrt(2.0), 1e-14);
    EXPECT_NEAR(moment_identity(0.5, 0.5, 1), 1.10136, 1e-4);  // quoted rounded; exact value 1.101391
    EXPECT_NEAR(moment_identity(1e-9, 1.0, 3), 1.0, 1e-8);
    EXPECT_THROW(moment_identity(1.0, 0.5, 1), std::domain_error);
    EXPECT_THROW(moment_identity(0.0, 0.5, 1), std::domain_error);
}

TEST(Moment, FAtTerminalTime) {
    const double y[2] = {3.0, -1.0};
    EXPECT_NEAR(moment_f(0.4, 1.0, 1.0, y, 0.7), std::exp(0.8 * 0.7), 1e-14);
    // t = 0, y = 0, z = 0 reduces to the closed form
    const double zero[2] = {0.0, 0.0};
    EXPECT_NEAR(moment_f(0.4, 1.0, 0.0, zero, 0.0), moment_identity(0.4, 1.0, 2), 1e-14);
    EXPECT_THROW(moment_f(0.6, 1.0, 0.0, zero, 0.0), std::domain_error);
}

TEST(Moment, IdentityWithinThreeSe) {
    auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 200}), 50000, 5, {false, {}});
    const auto r = moment_dominance(bundle, make_integrand("identity", 2), 0.1);
    EXPECT_LT(std::abs(r.mc_mean - r.closed_form), 3.0 * r.se);
    EXPECT_EQ(r.path_count, 50000u);
}

TEST(Moment, ZeroIsExactlyOne) {
    auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 20}), 100, 5);
    const auto r = moment_dominance(bundle, make_integrand("zero", 2), 0.2);
    EXPECT_EQ(r.mc_mean, 1.0);
    EXPECT_EQ(r.se, 0.0);
    EXPECT_TRUE(std::isinf(r.dominance_margin) && r.dominance_margin > 0);
}

TEST(Moment, DominanceForBoundedCatalog) {
    auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 100}), 20000, 17, {false, {}});
    for (const auto& entry : integrand_catalog()) {
        const auto b = make_integrand(entry.name, 2);
        if (!b.bound() || *b.bound() > 1.0) continue;
        const auto r = moment_dominance(bundle, b, 0.25);
        EXPECT_GE(r.dominance_margin, -2.0) << entry.name;
    }
}

TEST(Moment, RejectsUnboundedIntegrand) {
    auto bundle = sample_bundle(1, make_grid(UniformGrid{1.0, 10}), 10, 1);
    EXPECT_THROW(moment_dominance(bundle, make_integrand("scaled_identity", 1, std::vector<double>{2.0}), 0.1),
                 std::invalid_argument);
    EXPECT_THROW(moment_dominance(bundle, make_integrand("holder", 1), 0.1), std::invalid_argument);
}

TEST(MartingaleProxy, ConstantInTime) {
    auto bundle = sample_bundle(1, make_grid(UniformGrid{1.0, 100}), 50000, 23, {false, {}});
    const double lambda = 0.2;
    const auto rows = martingale_proxy(bundle, lambda);
    ASSERT_EQ(rows.size(), 101u);
    EXPECT_EQ(rows.front().t, 0.0);
    const double target = moment_identity(lambda, 1.0, 1);
    EXPECT_NEAR(rows.front().mean, target, 1e-14);
    for (const auto& r : rows) {
        if (r.t == 0.0) continue;
        EXPECT_LT(std::abs(r.mean - target), 3.0 * r.se + 1e-3) << r.t;
    }
}

TEST(TailBound, OptimalLambda) {
    for (double alpha : {0.5, 1.0, 2.0, 4.0}) {
        for (std::size_t d : {1u, 3u}) {
            const double T = 0.1;
            const double exact = alpha / (2.0 * T * (alpha + d * T));
            EXPECT_NEAR(optimal_lambda(alpha, T, d), exact, 1e-8 * exact);
        }
    }
    // the optimum beats the fixed rule
    EXPECT_LT(tail_bound(optimal_lambda(2.0, 0.1, 1), 2.0, 0.1, 1), tail_bound(1.0 / (2 * 0.1 * 1.1), 2.0, 0.1, 1));
}

TEST(TailBound, IdentityBelowBound) {
    auto bundle = sample_bundle(1, make_grid(UniformGrid{0.1, 400}), 20000, 3, {false, {}});
    const double alphas[] = {0.5, 1.0, 2.0, 4.0};
    for (auto rule : {LambdaRule::optimized, LambdaRule::fixed_eta}) {
        const auto rep = tail_bound_check(bundle, make_integrand("identity", 1), alphas, rule);
        EXPECT_FALSE(rep.any_flagged());
        ASSERT_EQ(rep.rows.size(), 4u);
        EXPECT_LE(rep.rows[2].exceedance, rep.rows[2].bound);
    }
}

TEST(TailBound, DegenerateCases) {
    auto bundle = sample_bundle(1, make_grid(UniformGrid{0.1, 50}), 1000, 3);
    const double alphas[] = {0.0, 1.0};
    const auto z = tail_bound_check(bundle, make_integrand("zero", 1), alphas);
    EXPECT_EQ(z.rows[0].exceedance, 1.0);  // sup 2V = 0 >= 0
    EXPECT_EQ(z.rows[1].exceedance, 0.0);
    EXPECT_GE(z.rows[0].bound, 0.0);
    EXPECT_FALSE(z.rows[1].flagged);
}

TEST(Ergodic, Reference) {
    bool exact = false;
    EXPECT_NEAR(ergodic_reference(SymMatrix{{1}}, 0.1, &exact), std::erf(std::sqrt(0.05)), 1e-14);
    EXPECT_TRUE(exact);
    EXPECT_NEAR(ergodic_reference(SymMatrix{{1}}, 0.1), 0.2482, 1e-4);
    const boost::math::chi_squared chi3(3);
    EXPECT_NEAR(ergodic_reference(SymMatrix(Matrix::identity(3) * 2.0), 1.0),
                boost::math::cdf(chi3, 0.5), 1e-14);
    // |W1^2 - W2^2| <= delta by Monte Carlo
    const double mc = ergodic_reference(SymMatrix{{1, 0}, {0, -1}}, 0.5, &exact);
    EXPECT_FALSE(exact);
    EXPECT_GT(mc, 0.0);
    EXPECT_LT(mc, 1.0);
}

TEST(Ergodic, FrequencyMatchesChiSquare) {
    const TimeGrid g = make_grid(GeometricGrid{std::exp(-1.0), std::exp(-1.0), 59, 1});
    auto bundle = sample_bundle(1, g, 10000, 11);
    const auto r = ergodic_liminf(bundle, SymMatrix{{1}}, 0.1);
    EXPECT_EQ(r.levels, 60u);
    EXPECT_NEAR(r.final_frequency, 0.2482, 0.02);
    std::size_t below = 0;
    for (double m : r.per_path_min) below += m < 0.05;
    EXPECT_GE(below, 9900u);
}

TEST(Ergodic, ZeroBetaAndGridMismatch) {
    const TimeGrid g = make_grid(GeometricGrid{std::exp(-1.0), std::exp(-1.0), 9, 1});
    auto bundle = sample_bundle(2, g, 100, 1);
    const auto r = ergodic_liminf(bundle, SymMatrix{{0, 0}, {0, 0}}, 0.1);
    for (double f : r.running_frequency) EXPECT_EQ(f, 1.0);
    auto wrong = geometric_bundle(2, 10, 10, 1);
    EXPECT_THROW(ergodic_liminf(wrong, SymMatrix{{1, 0}, {0, 1}}, 0.1), std::invalid_argument);
}

TEST(Example36, DomainAndProxyIdentity) {
    auto ok = geometric_bundle(1, 30, 200, 36, 4);
    const auto r = example36_rate(ok, 0.0, 1e-2);
    // (W^2 b / 2) / rate36 = W^2 / h
    const auto plain = ratio_sup(closed_form_constant(ok, SymMatrix{{1}}), RatioOptions{}, ok.grid());
    for (std::size_t p = 0; p < 200; ++p) {
        // closed form for beta = 1 is (W^2 - t)/2, so W^2/h exceeds it by 1/(2 loglog(1/t))
        EXPECT_GE(r.proxy.per_path_sup[p], plain.per_path_sup[p]);
        EXPECT_LE(r.proxy.per_path_sup[p], plain.per_path_sup[p] + 0.5 / std::log(std::log(1.0 / r.proxy.t_max)) + 1e-12);
    }
    auto bad = sample_bundle(1, make_grid(UniformGrid{0.1, 10}), 5, 1);
    EXPECT_THROW(example36_rate(bad, 0.0, 0.05), std::domain_error);
}

TEST(Example36, GapExplainedByDriftTerm) {
    // V/rate = proxy - (1/2) int b dr / rate - (1/2) int W^2 db / rate; the middle term is the
    // leading deterministic offset 1/(2 loglog(1/t))
    auto bundle = geometric_bundle(1, 94, 2000, 36, 32);
    const auto r = example36_rate(bundle, 0.0, 1e-12);
    EXPECT_LT(r.proxy.t_min, 1e-29);
    const double offset = 0.5 / std::log(std::log(1e12));
    const double gap = r.proxy.summary.median - r.ratio.summary.median;
    EXPECT_GT(gap, 0.5 * offset);
    EXPECT_LT(gap, 1.1 * offset);
    std::size_t above = 0;
    for (std::size_t p = 0; p < 2000; ++p) above += r.ratio.per_path_sup[p] > r.proxy.per_path_sup[p] + 0.02;
    EXPECT_LT(above, 20u);
}

TEST(Example36, GoldenProxyMedian) {
    // seed 36, 2000 paths, t0 = 1e-2, theta = 0.5, K = 94
    auto bundle = geometric_bundle(1, 94, 2000, 36, 32);
    const auto r = example36_rate(bundle, 0.0, 1e-2);
    EXPECT_NEAR(r.proxy.summary.median, 1.0683, 0.005);
    EXPECT_NEAR(r.ratio.summary.median, 0.8381, 0.01);
}
