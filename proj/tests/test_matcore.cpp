#include "dsilab/matcore.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace dsi;

namespace {

// sup over beta in [0, 10] at step 1e-4.
double fhat_grid(double p, double A, double sigma, const GammaBand& band) {
    double best = -INFINITY;
    for (int i = 0; i <= 100000; ++i) {
        best = std::max(best, dpe_operator_F(p, A + 1e-4 * i, sigma, band));
    }
    return best;
}

std::pair<double, double> mesh_extremes(const SymMatrix& m) {
    double lo = INFINITY, hi = -INFINITY;
    for (int i = 0; i < 200000; ++i) {
        const double a = 2.0 * std::numbers::pi * i / 200000.0;
        const double y[2] = {std::cos(a), std::sin(a)};
        const double q = m.quadratic_form(y);
        lo = std::min(lo, q);
        hi = std::max(hi, q);
    }
    return {lo, hi};
}

SymMatrix random_sym(std::mt19937_64& rng, std::size_t d) {
    std::normal_distribution<double> n;
    Matrix m(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = n(rng);
    return SymMatrix(m);
}

} // namespace

TEST(LilNormalizer, Values) {
    EXPECT_NEAR(lil_normalizer(std::exp(-std::numbers::e)), 2.0 * std::exp(-std::numbers::e), 1e-15);
    EXPECT_NEAR(lil_normalizer(std::exp(-std::numbers::e * std::numbers::e)),
                4.0 * std::exp(-std::numbers::e * std::numbers::e), 1e-16);
    EXPECT_NEAR(lil_normalizer(std::exp(-std::numbers::e)), 0.13198, 1e-5);
    EXPECT_THROW(lil_normalizer(0.5), std::domain_error);
    EXPECT_THROW(lil_normalizer(0.0), std::domain_error);
    EXPECT_THROW(lil_normalizer(-1.0), std::domain_error);
}

TEST(LilNormalizer, TinyTimes) {
    const double h = lil_normalizer(1e-300);
    EXPECT_GT(h, 0.0);
    EXPECT_NEAR(h / 1e-300, 2.0 * std::log(300.0 * std::log(10.0)), 1e-12);
}

TEST(Eigen, Examples) {
    auto e = eigen_extremes(SymMatrix{{2, 0}, {0, -1}});
    EXPECT_DOUBLE_EQ(e.lambda_min, -1.0);
    EXPECT_DOUBLE_EQ(e.lambda_max, 2.0);

    e = eigen_extremes(SymMatrix::identity(3));
    EXPECT_DOUBLE_EQ(e.lambda_min, 1.0);
    EXPECT_DOUBLE_EQ(e.lambda_max, 1.0);

    const SymMatrix m{{2, 1}, {1, 2}};
    e = eigen_extremes(m);
    const auto [lo, hi] = mesh_extremes(m);
    EXPECT_NEAR(e.lambda_min, 1.0, 1e-12);
    EXPECT_NEAR(e.lambda_max, 3.0, 1e-12);
    EXPECT_NEAR(e.lambda_min, lo, 1e-8);
    EXPECT_NEAR(e.lambda_max, hi, 1e-8);
}

TEST(Eigen, DiagonalizesRandomMatrices) {
    std::mt19937_64 rng(7);
    for (std::size_t d = 1; d <= 8; ++d) {
        for (int rep = 0; rep < 20; ++rep) {
            const SymMatrix m = random_sym(rng, d);
            const auto e = eigen_extremes(m);
            EXPECT_TRUE(is_orthogonal(e.U, 1e-12));
            const Matrix D = e.U * m.matrix() * e.U.transpose();
            const double scale = m.matrix().frobenius_norm();
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    if (i == j) continue;
                    EXPECT_LE(std::abs(D(i, j)), 1e-12 * scale);
                }
        }
    }
}

TEST(Eigen, QuadraticFormBetweenExtremes) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n;
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t d = 1 + rep % 6;
        const SymMatrix m = random_sym(rng, d);
        const auto e = eigen_extremes(m);
        std::vector<double> y(d);
        double norm = 0.0;
        for (auto& v : y) {
            v = n(rng);
            norm += v * v;
        }
        for (auto& v : y) v /= std::sqrt(norm);
        const double q = m.quadratic_form(y);
        EXPECT_LE(e.lambda_min, q + 1e-12);
        EXPECT_GE(e.lambda_max, q - 1e-12);
    }
}

TEST(Eigen, ShiftEquivariance) {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 50; ++rep) {
        const SymMatrix m = random_sym(rng, 4);
        const double c = 3.0 * (rep - 25) / 25.0;
        EXPECT_NEAR(eigen_extremes(m.shifted(c)).lambda_max, eigen_extremes(m).lambda_max + c, 1e-11);
    }
}

TEST(SymMatrix, SymmetrizedExactly) {
    const SymMatrix m(Matrix{{1, 0.1}, {0.3, 2}});
    EXPECT_EQ(m(0, 1), m(1, 0));
    EXPECT_DOUBLE_EQ(m(0, 1), 0.2);
}

TEST(OperatorNorm, Examples) {
    EXPECT_NEAR(operator_norm(Matrix::identity(3)), 1.0, 1e-14);
    EXPECT_NEAR(operator_norm(Matrix{{-3, 0}, {0, 1}}), 3.0, 1e-14);
    EXPECT_NEAR(operator_norm(Matrix{{0, 2}, {0, 0}}), 2.0, 1e-14);
}

TEST(OperatorNorm, MeshSearch) {
    const Matrix m{{1, 2}, {-0.5, 0.3}};
    double best = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double a = 2.0 * std::numbers::pi * i / 100000.0;
        const double y[2] = {std::cos(a), std::sin(a)};
        double out[2];
        m.apply(y, out);
        best = std::max(best, std::hypot(out[0], out[1]));
    }
    EXPECT_NEAR(operator_norm(m), best, 1e-8);
}

TEST(GammaBand, Validation) {
    EXPECT_THROW(GammaBand(1.0, 1.0), std::invalid_argument);
    EXPECT_THROW(GammaBand(2.0, 1.0), std::invalid_argument);
    EXPECT_THROW(GammaBand(-INFINITY, 1.0), std::invalid_argument);
    EXPECT_NO_THROW(GammaBand::unconstrained());
    const GammaBand b(-1.0, 1.0);
    EXPECT_EQ(b.clamp(3.0), 1.0);
    EXPECT_EQ(b.clamp(-3.0), -1.0);
    EXPECT_EQ(b.clamp(0.5), 0.5);
}

TEST(SupportFunction, Examples) {
    const GammaBand b(-1.0, 3.0);
    EXPECT_DOUBLE_EQ(support_function(2.0, b), 6.0);
    EXPECT_DOUBLE_EQ(support_function(-2.0, b), 2.0);
    EXPECT_DOUBLE_EQ(support_function(0.0, b), 0.0);
    EXPECT_DOUBLE_EQ(support_function(0.0, GammaBand::unconstrained()), 0.0);
    EXPECT_THROW(support_function(1.0, GammaBand::lower_only(0.0)), std::domain_error);
    EXPECT_THROW(support_function(-1.0, GammaBand::upper_only(0.0)), std::domain_error);
}

TEST(SupportFunction, PositivelyHomogeneous) {
    const GammaBand b(-0.7, 2.5);
    for (double u : {-3.0, -0.1, 0.0, 0.4, 5.0})
        for (double a : {0.0, 0.5, 1.0, 7.0})
            EXPECT_NEAR(support_function(a * u, b), a * support_function(u, b), 1e-14);
}

TEST(OperatorF, Examples) {
    const GammaBand b(-1.0, 1.0);
    EXPECT_NEAR(dpe_operator_F(-0.02, 1.0, 0.2, b), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(dpe_operator_F(0.0, 2.0, 0.2, b), -1.0);
    EXPECT_DOUBLE_EQ(dpe_operator_F(0.1, 0.0, 0.2, b), -0.1);
}

TEST(OperatorFhat, Examples) {
    const GammaBand b(-1.0, 1.0);
    EXPECT_NEAR(dpe_operator_Fhat(0.02, -3.0, 0.2, b), 0.0, 1e-14);
    EXPECT_NEAR(fhat_grid(0.02, -3.0, 0.2, b), 0.0, 1e-4);
    EXPECT_DOUBLE_EQ(dpe_operator_Fhat(1.0, 0.0, 0.2, b), -1.0);
    EXPECT_NEAR(fhat_grid(1.0, 0.0, 0.2, b), -1.0, 1e-12);
    // first branch binding with A above the lower bound
    EXPECT_DOUBLE_EQ(dpe_operator_Fhat(0.3, 0.5, 0.2, b), dpe_operator_F(0.3, 0.5, 0.2, b));
}

TEST(OperatorFhat, MatchesGridSearch) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> up(-2.0, 2.0), ua(-4.0, 2.0);
    const std::vector<GammaBand> bands{GammaBand(-1.0, 1.0), GammaBand(-0.5, 0.2),
                                       GammaBand::lower_only(-1.0), GammaBand::upper_only(0.5),
                                       GammaBand(0.1, 3.0)};
    for (const auto& band : bands) {
        for (int rep = 0; rep < 40; ++rep) {
            const double p = up(rng), A = ua(rng);
            const double closed = dpe_operator_Fhat(p, A, 0.3, band);
            // the grid search cannot see optima beyond beta = 10
            if (band.lower() && A + 10.0 < *band.lower()) continue;
            EXPECT_NEAR(closed, fhat_grid(p, A, 0.3, band), 2e-4) << p << " " << A;
            EXPECT_GE(closed, dpe_operator_F(p, A, 0.3, band) - 1e-15);
        }
    }
}

TEST(OperatorFhat, NonincreasingInAWhenFirstBranchBinds) {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> up(-1.0, 1.0), ua(-1.0, 0.9);
    const GammaBand band(-1.0, 1.0);
    const double sigma = 0.4;
    int checked = 0;
    for (int rep = 0; rep < 2000 && checked < 100; ++rep) {
        const double p = up(rng), A = ua(rng), A2 = A + 0.05;
        const double first = -p - 0.5 * sigma * sigma * A;
        const double first2 = -p - 0.5 * sigma * sigma * A2;
        const bool binds = first <= std::min(1.0 - A, A + 1.0) && first2 <= std::min(1.0 - A2, A2 + 1.0);
        if (!binds) continue;
        ++checked;
        EXPECT_LE(fhat_grid(p, A2, sigma, band), fhat_grid(p, A, sigma, band) + 1e-12);
        EXPECT_LE(dpe_operator_Fhat(p, A2, sigma, band), dpe_operator_Fhat(p, A, sigma, band) + 1e-15);
    }
    EXPECT_GE(checked, 50);
}
