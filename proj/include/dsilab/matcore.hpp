#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

namespace dsi {

/// Dense square matrix, row-major. Sized for the small dimensions used here (d <= 8).
class Matrix {
public:
    Matrix() = default;
    explicit Matrix(std::size_t dim, double fill = 0.0);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t dim);
    static Matrix diagonal(std::span<const double> entries);

    std::size_t dim() const { return dim_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    Matrix transpose() const;
    double trace() const;
    double frobenius_norm() const;

    /// out = M x
    void apply(std::span<const double> x, std::span<double> out) const;
    /// Adds M x to out.
    void apply_add(std::span<const double> x, std::span<double> out) const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double scale);

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend Matrix operator*(const Matrix& a, const Matrix& b);
    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

/// Symmetric matrix. Entries are symmetrized on construction, so (i, j) and (j, i)
/// are bit-identical.
class SymMatrix {
public:
    explicit SymMatrix(const Matrix& m);
    SymMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static SymMatrix identity(std::size_t dim) { return SymMatrix(Matrix::identity(dim)); }
    static SymMatrix diagonal(std::span<const double> entries) {
        return SymMatrix(Matrix::diagonal(entries));
    }

    std::size_t dim() const { return m_.dim(); }
    double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
    const Matrix& matrix() const { return m_; }
    double trace() const { return m_.trace(); }

    double quadratic_form(std::span<const double> y) const;

    SymMatrix shifted(double c) const;

private:
    Matrix m_;
};

/// h(t) = 2 t log log(1/t), defined for 0 < t < 1/e.
double lil_normalizer(double t);

struct EigenExtremes {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    /// Rows are orthonormal eigenvectors: U m U^T is diagonal.
    Matrix U;
    /// Eigenvalues in the order of the rows of U.
    std::vector<double> eigenvalues;
};

/// Cyclic Jacobi diagonalization.
EigenExtremes eigen_extremes(const SymMatrix& m);

/// Largest singular value, sup_{|y|=1} |m y|.
double operator_norm(const Matrix& m);

/// Whether U U^T = I within tol.
bool is_orthogonal(const Matrix& U, double tol = 1e-12);

/// The interval [lower, upper] for S^2 gamma. An empty optional disables that side.
class GammaBand {
public:
    GammaBand(std::optional<double> lower, std::optional<double> upper);

    static GammaBand unconstrained() { return GammaBand(std::nullopt, std::nullopt); }
    static GammaBand upper_only(double upper) { return GammaBand(std::nullopt, upper); }
    static GammaBand lower_only(double lower) { return GammaBand(lower, std::nullopt); }

    const std::optional<double>& lower() const { return lower_; }
    const std::optional<double>& upper() const { return upper_; }
    bool has_lower() const { return lower_.has_value(); }
    bool has_upper() const { return upper_.has_value(); }

    /// Clamps a value of S^2 gamma into the band.
    double clamp(double value) const;
    bool contains(double value) const;

private:
    std::optional<double> lower_;
    std::optional<double> upper_;
};

/// S_Gamma(u) = sup over the band of u c.
double support_function(double u, const GammaBand& band);

/// F(p, A) = min{-p - sigma^2 A / 2; upper - A; A - lower}; disabled bounds drop their term.
double dpe_operator_F(double p, double A, double sigma, const GammaBand& band);

/// sup_{beta >= 0} F(p, A + beta), closed form.
double dpe_operator_Fhat(double p, double A, double sigma, const GammaBand& band);

} // namespace dsi
