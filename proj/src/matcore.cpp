#include "dsilab/matcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dsi {

Matrix::Matrix(std::size_t dim, double fill) : dim_(dim), data_(dim * dim, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : dim_(rows.size()), data_(rows.size() * rows.size(), 0.0) {
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != dim_) {
            throw std::invalid_argument("Matrix: rows must form a square array");
        }
        std::copy(row.begin(), row.end(), data_.begin() + static_cast<std::ptrdiff_t>(i * dim_));
        ++i;
    }
}

Matrix Matrix::identity(std::size_t dim) {
    Matrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> entries) {
    Matrix m(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) m(i, i) = entries[i];
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(dim_);
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = 0; j < dim_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double Matrix::trace() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += (*this)(i, i);
    return s;
}

double Matrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

void Matrix::apply(std::span<const double> x, std::span<double> out) const {
    for (std::size_t i = 0; i < dim_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) s += data_[i * dim_ + j] * x[j];
        out[i] = s;
    }
}

void Matrix::apply_add(std::span<const double> x, std::span<double> out) const {
    for (std::size_t i = 0; i < dim_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) s += data_[i * dim_ + j] * x[j];
        out[i] += s;
    }
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (other.dim_ != dim_) throw std::invalid_argument("Matrix: dimension mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (other.dim_ != dim_) throw std::invalid_argument("Matrix: dimension mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
    return *this;
}

Matrix& Matrix::operator*=(double scale) {
    for (double& v : data_) v *= scale;
    return *this;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.dim_ != b.dim_) throw std::invalid_argument("Matrix: dimension mismatch");
    const std::size_t n = a.dim_;
    Matrix c(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < n; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

SymMatrix::SymMatrix(const Matrix& m) : m_(m.dim()) {
    if (m.dim() == 0) throw std::invalid_argument("SymMatrix: dimension must be >= 1");
    const std::size_t n = m.dim();
    for (std::size_t i = 0; i < n; ++i) {
        m_(i, i) = m(i, i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (m(i, j) + m(j, i));
            m_(i, j) = v;
            m_(j, i) = v;
        }
    }
}

SymMatrix::SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : SymMatrix(Matrix(rows)) {}

double SymMatrix::quadratic_form(std::span<const double> y) const {
    const std::size_t n = dim();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += m_(i, j) * y[j];
        s += y[i] * row;
    }
    return s;
}

SymMatrix SymMatrix::shifted(double c) const {
    Matrix m = m_;
    for (std::size_t i = 0; i < dim(); ++i) m(i, i) += c;
    return SymMatrix(m);
}

double lil_normalizer(double t) {
    if (!(t > 0.0) || !(t < std::exp(-1.0))) {
        throw std::domain_error("lil_normalizer: t must lie in (0, 1/e), got " + std::to_string(t));
    }
    // log(1/t) as -log(t) keeps t down to the smallest normal double in range.
    return 2.0 * t * std::log(-std::log(t));
}

EigenExtremes eigen_extremes(const SymMatrix& sym) {
    const std::size_t n = sym.dim();
    Matrix a = sym.matrix();
    Matrix v = Matrix::identity(n);  // columns are eigenvectors of a

    const double scale = a.frobenius_norm();
    const double threshold = 1e-13 * scale;
    auto off_mass = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    constexpr int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps && scale > 0.0 && off_mass() >= threshold; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    EigenExtremes out;
    out.U = v.transpose();
    out.eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.eigenvalues[i] = a(i, i);
    out.lambda_min = *std::min_element(out.eigenvalues.begin(), out.eigenvalues.end());
    out.lambda_max = *std::max_element(out.eigenvalues.begin(), out.eigenvalues.end());
    return out;
}

double operator_norm(const Matrix& m) {
    if (m.dim() == 0) return 0.0;
    const SymMatrix gram(m.transpose() * m);
    const double top = eigen_extremes(gram).lambda_max;
    return std::sqrt(std::max(top, 0.0));
}

bool is_orthogonal(const Matrix& U, double tol) {
    const Matrix p = U * U.transpose();
    const std::size_t n = U.dim();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (std::abs(p(i, j) - (i == j ? 1.0 : 0.0)) > tol) return false;
    return true;
}

GammaBand::GammaBand(std::optional<double> lower, std::optional<double> upper)
    : lower_(lower), upper_(upper) {
    if ((lower_ && !std::isfinite(*lower_)) || (upper_ && !std::isfinite(*upper_))) {
        throw std::invalid_argument("GammaBand: use an empty bound, not an infinite value");
    }
    if (lower_ && upper_ && !(*lower_ < *upper_)) {
        throw std::invalid_argument("GammaBand: lower bound must be below upper bound");
    }
}

double GammaBand::clamp(double value) const {
    if (lower_ && value < *lower_) return *lower_;
    if (upper_ && value > *upper_) return *upper_;
    return value;
}

bool GammaBand::contains(double value) const {
    return (!lower_ || value >= *lower_) && (!upper_ || value <= *upper_);
}

double support_function(double u, const GammaBand& band) {
    if (u > 0.0) {
        if (!band.upper()) throw std::domain_error("support_function: upper bound is infinite");
        return u * *band.upper();
    }
    if (u < 0.0) {
        if (!band.lower()) throw std::domain_error("support_function: lower bound is infinite");
        return u * *band.lower();
    }
    return 0.0;
}

double dpe_operator_F(double p, double A, double sigma, const GammaBand& band) {
    double f = -p - 0.5 * sigma * sigma * A;
    if (band.upper()) f = std::min(f, *band.upper() - A);
    if (band.lower()) f = std::min(f, A - *band.lower());
    return f;
}

double dpe_operator_Fhat(double p, double A, double sigma, const GammaBand& band) {
    // On a = A + beta the first two branches decrease and the third increases.
    // If the third branch does not bind at a = A, beta = 0 is optimal; otherwise
    // the optimum is the first crossing of the increasing branch with the others.
    const double half_var = 0.5 * sigma * sigma;
    double decreasing = -p - half_var * A;
    if (band.upper()) decreasing = std::min(decreasing, *band.upper() - A);
    if (!band.lower()) return decreasing;

    const double lower = *band.lower();
    if (A - lower >= decreasing) return decreasing;

    double crossing = (lower - p) / (1.0 + half_var);
    if (band.upper()) crossing = std::min(crossing, 0.5 * (lower + *band.upper()));
    return crossing - lower;
}

} // namespace dsi
