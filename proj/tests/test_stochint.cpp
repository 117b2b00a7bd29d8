#include "dsilab/stats.hpp"
#include "dsilab/stochint.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace dsi;

namespace {

double rms_error(const DoubleIntegralTrace& tr, const PathValues& cf, std::size_t k) {
    std::vector<double> sq(tr.path_count());
    for (std::size_t p = 0; p < tr.path_count(); ++p) {
        const double e = tr.outer(p)[k] - cf[p][k];
        sq[p] = e * e;
    }
    return std::sqrt(pairwise_sum(sq) / static_cast<double>(sq.size()));
}

double median_window_max(const PathValues& v, std::size_t from, std::size_t to, bool divide_by_t) {
    std::vector<double> m(v.path_count());
    for (std::size_t p = 0; p < v.path_count(); ++p) {
        double best = 0.0;
        for (std::size_t k = from; k < to; ++k) {
            const double x = divide_by_t ? v[p][k] / v.times()[k] : v[p][k];
            best = std::max(best, std::abs(x));
        }
        m[p] = best;
    }
    return quantile(m, 0.5);
}

} // namespace

TEST(Integrate, ZeroIntegrand) {
    const auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 20}), 10, 1);
    const auto tr = integrate_double(bundle, make_integrand("zero", 2));
    for (std::size_t p = 0; p < 10; ++p) {
        for (double v : tr.outer(p)) EXPECT_EQ(v, 0.0);
        for (double y : tr.inner(p)) EXPECT_EQ(y, 0.0);
    }
}

TEST(Integrate, HandComputedTwoSteps) {
    const std::vector<double> times{0.0, 0.5, 1.0};
    const std::vector<double> w{0.0, 1.0, 0.0};
    PathIntegral out;
    integrate_path(make_integrand("identity", 1), times, w, 1, false, out);
    EXPECT_DOUBLE_EQ(out.inner[0], 0.0);
    EXPECT_DOUBLE_EQ(out.inner[1], 1.0);
    EXPECT_DOUBLE_EQ(out.inner[2], 0.0);
    EXPECT_DOUBLE_EQ(out.outer[1], 0.0);
    EXPECT_DOUBLE_EQ(out.outer[2], -1.0);
    EXPECT_DOUBLE_EQ(out.qv_outer[2], 0.5);
    EXPECT_DOUBLE_EQ(out.qv_inner[2], 1.0);
}

TEST(Integrate, OriginPrepended) {
    const auto bundle = sample_bundle(1, make_grid(GeometricGrid{1e-2, 0.5, 5}), 3, 2);
    const auto tr = integrate_double(bundle, make_integrand("identity", 1));
    ASSERT_TRUE(tr.origin_prepended());
    EXPECT_EQ(tr.steps(), bundle.grid().size() + 1);
    EXPECT_EQ(tr.times()[0], 0.0);
    for (std::size_t p = 0; p < 3; ++p) {
        EXPECT_EQ(tr.outer(p)[0], 0.0);
        // Y = W for b = I
        for (std::size_t k = 0; k < bundle.grid().size(); ++k)
            EXPECT_NEAR(tr.inner(p)[tr.trace_index(k)], bundle.value(p, k, 0), 1e-15);
    }
}

TEST(Integrate, TraceInvariants) {
    const auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 50}), 20, 3);
    for (const char* name : {"rotation", "clamped_w", "holder", "sign_w"}) {
        const auto tr = integrate_double(bundle, make_integrand(name, 2));
        for (std::size_t p = 0; p < 20; ++p) {
            EXPECT_EQ(tr.outer(p)[0], 0.0);
            const auto qo = tr.qv_outer(p), qi = tr.qv_inner(p);
            for (std::size_t k = 1; k < tr.steps(); ++k) {
                EXPECT_GE(qo[k], qo[k - 1]);
                for (std::size_t j = 0; j < 2; ++j) EXPECT_GE(qi[k * 2 + j], qi[(k - 1) * 2 + j]);
            }
        }
    }
}

TEST(Integrate, ClosedFormRmsHalvesPerQuadrupling) {
    const auto g1 = make_grid(UniformGrid{1.0, 16});
    const auto g2 = refine_grid(g1, 4);
    const auto g3 = refine_grid(g2, 4);
    const std::size_t P = 1000;
    const auto b = make_integrand("identity", 1);
    const SymMatrix one = SymMatrix::identity(1);
    double rms[3];
    int i = 0;
    for (const auto* g : {&g1, &g2, &g3}) {
        const auto bundle = sample_bundle(1, *g, P, 17);
        rms[i++] = rms_error(integrate_double(bundle, b), closed_form_constant(bundle, one),
                             g->size() - 1);
    }
    EXPECT_NEAR(rms[0] / rms[1], 2.0, 0.5);
    EXPECT_NEAR(rms[1] / rms[2], 2.0, 0.5);
}

TEST(ClosedForm, Examples) {
    const SymMatrix beta = SymMatrix::diagonal(std::vector<double>{1.0, 2.0});
    const double w[2] = {1.0, -1.0};
    EXPECT_DOUBLE_EQ(closed_form_value(beta, 0.5, w), 0.75);
    EXPECT_DOUBLE_EQ(closed_form_value(SymMatrix(Matrix(2)), 0.5, w), 0.0);
    const double w1[1] = {1.3};
    EXPECT_DOUBLE_EQ(closed_form_value(SymMatrix::identity(1), 0.4, w1), 0.5 * (1.3 * 1.3 - 0.4));
}

TEST(ClosedForm, BundleMatchesPointwise) {
    const auto bundle = sample_bundle(2, make_grid(GeometricGrid{0.1, 0.5, 4}), 5, 4);
    const SymMatrix beta{{1.0, 0.5}, {0.5, -2.0}};
    const auto cf = closed_form_constant(bundle, beta);
    for (std::size_t p = 0; p < 5; ++p) {
        EXPECT_EQ(cf[p][0], 0.0);
        for (std::size_t k = 0; k < bundle.grid().size(); ++k) {
            const double w[2] = {bundle.value(p, k, 0), bundle.value(p, k, 1)};
            EXPECT_EQ(cf[p][k + 1], closed_form_value(beta, bundle.grid()[k], w));
        }
    }
}

TEST(Properties, Linearity) {
    const auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 64}), 50, 5);
    const auto b1 = make_integrand("rotation", 2);
    const auto b2 = make_integrand("clamped_w", 2);
    const auto sum = integrate_double(bundle, b1.plus(b2));
    const auto t1 = integrate_double(bundle, b1);
    const auto t2 = integrate_double(bundle, b2);
    for (std::size_t p = 0; p < 50; ++p)
        for (std::size_t k = 0; k < sum.steps(); ++k)
            EXPECT_NEAR(sum.outer(p)[k], t1.outer(p)[k] + t2.outer(p)[k], 1e-12);
}

TEST(Properties, SignFlipAntisymmetry) {
    const auto bundle = sample_bundle(3, make_grid(GeometricGrid{1e-2, 0.5, 20}), 30, 6);
    for (const char* name : {"rotation", "identity", "holder", "sign_w"}) {
        const auto b = make_integrand(name, 3);
        const auto pos = integrate_double(bundle, b);
        const auto neg = integrate_double(bundle, b.scaled(-1.0));
        for (std::size_t p = 0; p < 30; ++p)
            for (std::size_t k = 0; k < pos.steps(); ++k) EXPECT_EQ(neg.outer(p)[k], -pos.outer(p)[k]);
    }
}

TEST(Properties, ItoIsometry) {
    const std::size_t P = 20000;
    const auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 50}), P, 7);
    for (const char* name : {"identity", "rotation", "signflip"}) {
        std::vector<double> v2(P), qv(P);
        for_each_double_integral(bundle, make_integrand(name, 2), Exec{}, [&](std::size_t p, const PathIntegral& r) {
            v2[p] = r.outer.back() * r.outer.back();
            qv[p] = r.qv_outer.back();
        });
        const auto a = mean_se(v2), b = mean_se(qv);
        EXPECT_LT(std::abs(a.mean - b.mean), 5.0 * std::hypot(a.se, b.se)) << name;
    }
}

TEST(Integrands, Example36) {
    const auto b = make_integrand("example36", 1);
    Matrix out(1);
    const double t = std::exp(-std::exp(std::numbers::e));
    const double times[1] = {t};
    const double w[1] = {0.0};
    b.evaluate(PathPrefix{times, w, 1}, out);
    EXPECT_NEAR(out(0, 0), 1.0, 1e-12);
    const double zero[1] = {0.0};
    b.evaluate(PathPrefix{zero, w, 1}, out);
    EXPECT_EQ(out(0, 0), 0.0);
    const auto bad = sample_bundle(1, make_grid(UniformGrid{0.1, 4}), 2, 1);
    EXPECT_THROW(integrate_double(bad, b), std::domain_error);
    const auto ok = sample_bundle(1, make_grid(GeometricGrid{1e-3, 0.5, 30}), 2, 1);
    EXPECT_NO_THROW(integrate_double(ok, b));
}

TEST(Integrands, CatalogSortedAndComplete) {
    const auto& cat = integrand_catalog();
    for (std::size_t i = 1; i < cat.size(); ++i) EXPECT_LT(cat[i - 1].name, cat[i].name);
    for (const auto& e : cat) {
        EXPECT_NO_THROW(make_integrand(e.name, 2)) << e.name;
        EXPECT_FALSE(e.serves.empty());
    }
    EXPECT_THROW(make_integrand("nope", 2), std::invalid_argument);
    EXPECT_THROW(make_integrand("diag", 2, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Integrands, DeclaredBounds) {
    for (const char* name : {"zero", "identity", "neg_identity", "signflip", "rotation", "rotation_w",
                             "clamped_w", "sign_w"}) {
        const auto b = make_integrand(name, 3);
        ASSERT_TRUE(b.bound().has_value()) << name;
        EXPECT_LE(*b.bound(), 1.0 + 1e-12) << name;
    }
    const auto rot = make_integrand("rotation", 2);
    EXPECT_NEAR(operator_norm(rot.constant_value()), 1.0, 1e-14);
    EXPECT_NE(rot.constant_value(), rot.constant_value().transpose());
}

TEST(Integrands, PathFunctionalSeesOnlyThePast) {
    const auto bundle = sample_bundle(1, make_grid(UniformGrid{1.0, 10}), 2, 8);
    std::size_t calls = 0;
    bool ok = true;
    const auto spy = IntegrandSpec::path_functional(
        "spy", 1,
        [&](const PathPrefix& prefix, Matrix& out) {
            ok = ok && prefix.values.size() == prefix.times.size() && prefix.times.size() == prefix.step() + 1 &&
                 prefix.times.back() == bundle.grid()[prefix.step()];
            ++calls;
            out(0, 0) = 1.0;
        },
        1.0);
    integrate_double(bundle, spy, Exec{1});
    EXPECT_TRUE(ok);
    EXPECT_EQ(calls, 20u);
}

TEST(Martingale, IdentityM) {
    const auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 40}), 20, 9);
    const auto b = make_integrand("rotation", 2);
    const auto res = integrate_double_martingale(bundle, b, make_integrand("identity", 2));
    const auto ref = integrate_double(bundle, b);
    for (std::size_t p = 0; p < 20; ++p)
        for (std::size_t k = 0; k < ref.steps(); ++k) {
            EXPECT_EQ(res.r1[p][k], 0.0);
            EXPECT_EQ(res.r2[p][k], 0.0);
            EXPECT_NEAR(res.x.outer(p)[k], ref.outer(p)[k], 1e-14);
        }
}

TEST(Martingale, ScaledM) {
    const auto bundle = sample_bundle(1, make_grid(UniformGrid{1.0, 40}), 20, 10);
    const auto res = integrate_double_martingale(bundle, make_integrand("identity", 1),
                                                 make_integrand("scaled_identity", 1, std::vector<double>{2.0}));
    const auto ref = integrate_double(bundle, make_integrand("identity", 1));
    for (std::size_t p = 0; p < 20; ++p)
        for (std::size_t k = 0; k < ref.steps(); ++k) EXPECT_NEAR(res.x.outer(p)[k], 4.0 * ref.outer(p)[k], 1e-13);
}

TEST(Martingale, DecompositionIdentity) {
    const auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 60}), 25, 11);
    const std::vector<std::string> ms{"identity", "holder", "rotation_w", "clamped_w", "scaled_identity"};
    for (const auto& e : integrand_catalog()) {
        if (e.name == "example36") continue;  // needs t < e^{-e}
        for (const auto& mn : ms) {
            const auto res = integrate_double_martingale(bundle, make_integrand(e.name, 2), make_integrand(mn, 2));
            for (std::size_t p = 0; p < 25; ++p) {
                double scale = 1e-300;
                for (double v : res.x.outer(p)) scale = std::max(scale, std::abs(v));
                for (std::size_t k = 0; k < res.x.steps(); ++k) {
                    const double sum = res.c_piece[p][k] + res.r1[p][k] + res.r2[p][k];
                    EXPECT_LE(std::abs(sum - res.x.outer(p)[k]), 1e-10 * scale) << e.name << "/" << mn;
                }
            }
        }
    }
    const auto small = sample_bundle(2, make_grid(GeometricGrid{1e-3, 0.5, 20, 2}), 10, 12);
    const auto res = integrate_double_martingale(small, make_integrand("example36", 2), make_integrand("holder", 2));
    for (std::size_t p = 0; p < 10; ++p)
        for (std::size_t k = 0; k < res.x.steps(); ++k) {
            const double sum = res.c_piece[p][k] + res.r1[p][k] + res.r2[p][k];
            EXPECT_NEAR(sum, res.x.outer(p)[k], 1e-10 * std::abs(res.x.outer(p)[k]) + 1e-300);
        }
}

TEST(Martingale, ResidualsVanishFasterThanT) {
    const std::size_t K = 40;
    const auto bundle = sample_bundle(1, make_grid(GeometricGrid{1e-1, 0.5, K, 4}), 2000, 13);
    const auto m = make_integrand("holder", 1, std::vector<double>{1.0, 1.0});  // m(t) = (1 + t) I
    const auto res = integrate_double_martingale(bundle, make_integrand("identity", 1), m);
    const auto lv = bundle.grid().level_indices();
    // windows of 10 levels, moving toward 0
    double prev1 = INFINITY, prev2 = INFINITY;
    for (std::size_t w = 0; w + 10 <= K; w += 10) {
        const std::size_t hi = res.x.trace_index(lv[K - w]) + 1;
        const std::size_t lo = res.x.trace_index(lv[K - w - 10]);
        const double a = median_window_max(res.r1, lo, hi, true);
        const double b = median_window_max(res.r2, lo, hi, true);
        EXPECT_LT(a, prev1);
        EXPECT_LT(b, prev2);
        prev1 = a;
        prev2 = b;
    }
}

TEST(Drift, ZeroDrift) {
    const auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 10}), 5, 14);
    const double zero[2] = {0.0, 0.0};
    const auto res = drift_integral(bundle, DriftSpec::constant(zero), make_integrand("identity", 2), 0.5);
    for (std::size_t p = 0; p < 5; ++p)
        for (double v : res.x[p]) EXPECT_EQ(v, 0.0);
}

TEST(Drift, IsometryVariance) {
    const std::size_t P = 100000;
    const auto bundle = sample_bundle(1, make_grid(UniformGrid{1.0, 400}), P, 15, SampleOptions{false, {}});
    const double one[1] = {1.0};
    const auto x = drift_terminal(bundle, DriftSpec::constant(one), make_integrand("identity", 1));
    const auto ms = mean_se(x);
    const double se = ms.variance * std::sqrt(2.0 / static_cast<double>(P));
    EXPECT_LT(std::abs(ms.variance - 1.0 / 3.0), 5.0 * se);
}

TEST(Drift, ScaledStatisticDecreases) {
    const std::size_t K = 45;
    const auto bundle = sample_bundle(1, make_grid(GeometricGrid{1e-4, 0.5, K, 2}), 2000, 16);
    const double one[1] = {1.0};
    const auto res = drift_integral(bundle, DriftSpec::constant(one), make_integrand("identity", 1), 0.5);
    const auto lv = bundle.grid().level_indices();
    double prev = INFINITY;
    for (std::size_t w = 0; w + 15 <= K; w += 15) {
        const std::size_t hi = lv[K - w] + 2;
        const std::size_t lo = lv[K - w - 15] + 1;
        const double m = median_window_max(res.scaled, lo, hi, false);
        EXPECT_LT(m, prev);
        prev = m;
    }
}

TEST(Export, TraceCsvHeader) {
    const auto bundle = sample_bundle(2, make_grid(UniformGrid{1.0, 2}), 1, 1);
    std::ostringstream out;
    integrate_double(bundle, make_integrand("identity", 2)).export_csv(out);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "path,time,V,Y_1,Y_2,qv");
}
