#include "molepair/numerics.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace molepair {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("ragged matrix literal");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) {
            throw ShapeError("row index " + std::to_string(indices[i]) + " out of range for " +
                             shape_str(*this));
        }
        const auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out_row = out.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            const double* b_row = b.row(k).data();
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_at_b: " + shape_str(a) + "^T * " + shape_str(b));
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* b_row = b.row(r).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = a(r, i);
            if (ari == 0.0) {
                continue;
            }
            double* out_row = out.row(i).data();
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out_row[j] += ari * b_row[j];
            }
        }
    }
    return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_a_bt: " + shape_str(a) + " * " + shape_str(b) + "^T");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto a_row = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            out(i, j) = dot(a_row, b.row(j));
        }
    }
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("add: " + shape_str(a) + " + " + shape_str(b));
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] += b.data()[i];
    }
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("subtract: " + shape_str(a) + " - " + shape_str(b));
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] -= b.data()[i];
    }
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out = a;
    for (double& v : out.data()) {
        v *= s;
    }
    return out;
}

void add_row_vector(Matrix& m, std::span<const double> bias) {
    if (bias.size() != m.cols()) {
        throw ShapeError("add_row_vector: bias length " + std::to_string(bias.size()) +
                         " vs " + shape_str(m));
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < bias.size(); ++c) {
            row[c] += bias[c];
        }
    }
}

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> sums(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            sums[c] += row[c];
        }
    }
    return sums;
}

std::vector<double> column_means(const Matrix& m) {
    if (m.rows() == 0) {
        throw ShapeError("column_means of a matrix with no rows");
    }
    auto sums = column_sums(m);
    for (double& s : sums) {
        s /= static_cast<double>(m.rows());
    }
    return sums;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("squared_distance: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double trace(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw ShapeError("trace of non-square " + shape_str(m));
    }
    double t = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        t += m(i, i);
    }
    return t;
}

double frobenius_sq(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) {
        s += v * v;
    }
    return s;
}

bool cholesky(const Matrix& spd, Matrix& lower) {
    if (spd.rows() != spd.cols()) {
        throw ShapeError("cholesky of non-square " + shape_str(spd));
    }
    const std::size_t n = spd.rows();
    lower = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = spd(j, j);
        for (std::size_t k = 0; k < j; ++k) {
            diag -= lower(j, k) * lower(j, k);
        }
        if (!(diag > 0.0) || !std::isfinite(diag)) {
            return false;
        }
        const double ljj = std::sqrt(diag);
        lower(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = spd(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                v -= lower(i, k) * lower(j, k);
            }
            lower(i, j) = v / ljj;
        }
    }
    return true;
}

void forward_substitute(const Matrix& lower, std::span<double> b) {
    if (lower.rows() != b.size()) {
        throw ShapeError("forward_substitute: size mismatch");
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) {
            v -= lower(i, k) * b[k];
        }
        b[i] = v / lower(i, i);
    }
}

void backward_substitute_transposed(const Matrix& lower, std::span<double> y) {
    if (lower.rows() != y.size()) {
        throw ShapeError("backward_substitute_transposed: size mismatch");
    }
    for (std::size_t ii = y.size(); ii > 0; --ii) {
        const std::size_t i = ii - 1;
        double v = y[i];
        for (std::size_t k = i + 1; k < y.size(); ++k) {
            v -= lower(k, i) * y[k];
        }
        y[i] = v / lower(i, i);
    }
}

Matrix spd_inverse_from_cholesky(const Matrix& lower) {
    const std::size_t n = lower.rows();
    Matrix inv(n, n);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(col.begin(), col.end(), 0.0);
        col[j] = 1.0;
        forward_substitute(lower, col);
        backward_substitute_transposed(lower, col);
        for (std::size_t i = 0; i < n; ++i) {
            inv(i, j) = col[i];
        }
    }
    // Symmetrize away round-off.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = v;
            inv(j, i) = v;
        }
    }
    return inv;
}

double logsumexp(std::span<const double> values) {
    if (values.empty()) {
        return -std::numeric_limits<double>::infinity();
    }
    const double mx = *std::max_element(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) {
        s += std::exp(v - mx);
    }
    return mx + std::log(s);
}

// ---------------------------------------------------------------------------

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& w : state_) {
        w = splitmix64(x);
    }
}

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform_real() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

__extension__ using Wide = unsigned __int128;

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) {
        throw InvalidParameter("uniform_index: n must be positive");
    }
    // Lemire's nearly-divisionless rejection.
    Wide m = static_cast<Wide>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<Wide>(next_u64()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform_real() - 1.0;
        v = 2.0 * uniform_real() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * scale;
    has_spare_ = true;
    return u * scale;
}

Rng Rng::split() { return Rng(next_u64()); }

std::vector<double> gauss_sample(Rng& rng, double mean, double std, std::size_t n) {
    if (!(std > 0.0) || !std::isfinite(std) || !std::isfinite(mean)) {
        throw InvalidParameter("gauss_sample: std must be positive and finite, got " +
                               std::to_string(std));
    }
    std::vector<double> out(n);
    for (double& v : out) {
        v = mean + std * rng.normal();
    }
    return out;
}

}  // namespace molepair
