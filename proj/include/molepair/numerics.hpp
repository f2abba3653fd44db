#pragma once

// Dense row-major matrices, stable scalar math, and the seeded PRNG shared by
// every other module. Everything is float64.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "molepair/error.hpp"

namespace molepair {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool all_finite() const noexcept;
    Matrix transposed() const;

    /// Rows selected by index, in the given order.
    Matrix gather_rows(std::span<const std::size_t> indices) const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Shape-checked products. Throws ShapeError on mismatch; never broadcasts.
Matrix matmul(const Matrix& a, const Matrix& b);      // A B
Matrix matmul_at_b(const Matrix& a, const Matrix& b); // A^T B
Matrix matmul_a_bt(const Matrix& a, const Matrix& b); // A B^T

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// Adds `bias` to every row of `m` (bias length must equal m.cols()).
void add_row_vector(Matrix& m, std::span<const double> bias);

std::vector<double> column_means(const Matrix& m);
std::vector<double> column_sums(const Matrix& m);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
double trace(const Matrix& m);
double frobenius_sq(const Matrix& m);

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Returns false (leaving `lower` unspecified) if the matrix is not numerically PD.
bool cholesky(const Matrix& spd, Matrix& lower);

/// Solves L y = b in place (L lower triangular).
void forward_substitute(const Matrix& lower, std::span<double> b);
/// Solves L^T x = y in place.
void backward_substitute_transposed(const Matrix& lower, std::span<double> y);

/// Inverse of an SPD matrix from its Cholesky factor.
Matrix spd_inverse_from_cholesky(const Matrix& lower);

// ---------------------------------------------------------------------------
// Scalar functions

/// Logistic sigmoid; evaluates the branch that cannot overflow.
inline double sigmoid(double u) noexcept {
    if (u >= 0.0) {
        return 1.0 / (1.0 + std::exp(-u));
    }
    const double e = std::exp(u);
    return e / (1.0 + e);
}

/// log(1 + exp(u)) without overflow or cancellation.
inline double log1pexp(double u) noexcept {
    if (u > 36.0) {
        return u + std::exp(-u);
    }
    if (u < -36.0) {
        return std::exp(u);
    }
    return std::log1p(std::exp(u));
}

double logsumexp(std::span<const double> values);

/// Standard normal CDF.
inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Minimizes a unimodal function on [lo, hi] by golden-section search until
/// the bracket is narrower than `tol`. Derivative-free.
template <typename T, typename F>
T golden_section_minimize(F&& f, T lo, T hi, T tol) {
    const T inv_phi = (std::sqrt(T(5)) - T(1)) / T(2);
    T a = lo;
    T b = hi;
    T c = b - inv_phi * (b - a);
    T d = a + inv_phi * (b - a);
    T fc = f(c);
    T fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return (a + b) / T(2);
}

// ---------------------------------------------------------------------------
// Random numbers

/// xoshiro256** seeded through splitmix64. The u64 stream (and therefore
/// uniform_real/uniform_index/shuffle) is bit-identical on every platform;
/// normal draws additionally depend on the platform's std::log.
class Rng {
public:
    static constexpr const char* kAlgorithm = "xoshiro256**/splitmix64";

    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform_real() noexcept;
    /// Uniform in [lo, hi).
    double uniform_real(double lo, double hi) noexcept { return lo + (hi - lo) * uniform_real(); }
    /// Unbiased uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);
    /// Standard normal via the Marsaglia polar method.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// An independent generator seeded from this one's stream.
    Rng split();

    bool operator==(const Rng& other) const = default;

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// n i.i.d. N(mean, std^2) draws. Throws InvalidParameter if std <= 0.
std::vector<double> gauss_sample(Rng& rng, double mean, double std, std::size_t n);

}  // namespace molepair
