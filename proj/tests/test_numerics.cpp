#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "molepair/numerics.hpp"

using namespace molepair;

TEST_CASE("matrix construction and shape checks") {
    Matrix m{{1, 2, 3}, {4, 5, 6}};
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m(1, 2) == 6);
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS((Matrix{{1, 2}, {3}}), ShapeError);
    CHECK(Matrix::identity(3)(1, 1) == 1.0);
    CHECK(Matrix::identity(3)(0, 1) == 0.0);
    CHECK(m.transposed()(2, 1) == 6);
}

TEST_CASE("matmul against hand products") {
    const Matrix a{{1, 2}, {3, 4}};
    const Matrix b{{5, 6}, {7, 8}};
    CHECK(matmul(a, b) == Matrix{{19, 22}, {43, 50}});
    CHECK(matmul_at_b(a, b) == matmul(a.transposed(), b));
    CHECK(matmul_a_bt(a, b) == matmul(a, b.transposed()));
    CHECK_THROWS_AS(matmul(a, Matrix(3, 1)), ShapeError);
}

TEST_CASE("elementwise helpers") {
    Matrix m{{1, 2}, {3, 4}};
    add_row_vector(m, std::vector<double>{10, 20});
    CHECK(m == Matrix{{11, 22}, {13, 24}});
    CHECK(column_means(m) == std::vector<double>{12, 23});
    CHECK(column_sums(m) == std::vector<double>{24, 46});
    CHECK(trace(m) == 35);
    CHECK(frobenius_sq(Matrix{{1, 2}, {2, 0}}) == 9);
    const std::vector<double> x{3, 4};
    const std::vector<double> o{0, 0};
    CHECK(squared_distance(x, o) == 25);
    CHECK(dot(x, x) == 25);
    const std::vector<std::size_t> pick{1, 0, 1};
    CHECK(m.gather_rows(pick) == Matrix{{13, 24}, {11, 22}, {13, 24}});
}

TEST_CASE("cholesky solves and inverts") {
    const Matrix s{{4, 2}, {2, 3}};
    Matrix l;
    REQUIRE(cholesky(s, l));
    CHECK(matmul_a_bt(l, l)(0, 1) == doctest::Approx(2));
    const Matrix inv = spd_inverse_from_cholesky(l);
    const Matrix prod = matmul(s, inv);
    CHECK(prod(0, 0) == doctest::Approx(1));
    CHECK(prod(0, 1) == doctest::Approx(0).epsilon(1e-12));
    CHECK(inv(0, 1) == inv(1, 0));
    std::vector<double> b{2, 1};
    forward_substitute(l, b);
    backward_substitute_transposed(l, b);
    // s^{-1} (2, 1) = (1/8) (3*2 - 2*1, -2*2 + 4*1) = (0.5, 0)
    CHECK(b[0] == doctest::Approx(0.5));
    CHECK(b[1] == doctest::Approx(0.0).epsilon(1e-12));
    Matrix bad;
    CHECK_FALSE(cholesky(Matrix{{1, 2}, {2, 1}}, bad));
}

TEST_CASE("stable scalar functions") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(-3.0) == doctest::Approx(1.0 / (1.0 + std::exp(3.0))));
    CHECK(log1pexp(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(log1pexp(1000.0) == 1000.0);
    CHECK(log1pexp(-1000.0) == 0.0);
    CHECK(log1pexp(-50.0) == doctest::Approx(std::exp(-50.0)));
    for (double u = -30; u <= 30; u += 0.7) {
        CHECK(log1pexp(u) == doctest::Approx(std::log1p(std::exp(u))).epsilon(1e-13));
    }
    const std::vector<double> z{3, 1};
    CHECK(logsumexp(z) == doctest::Approx(std::log(std::exp(3.0) + std::exp(1.0))));
    const std::vector<double> big{1000, 1000};
    CHECK(logsumexp(big) == doctest::Approx(1000 + std::log(2.0)));
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
}

TEST_CASE("golden section finds a parabola minimum") {
    const double x = golden_section_minimize([](double v) { return (v - 1.25) * (v - 1.25); }, -10.0, 10.0, 1e-12);
    CHECK(x == doctest::Approx(1.25).epsilon(1e-9));
}

TEST_CASE("rng determinism and split independence") {
    Rng a(123), b(123), c(124);
    std::vector<std::uint64_t> sa, sb, sc;
    for (int i = 0; i < 16; ++i) {
        sa.push_back(a.next_u64());
        sb.push_back(b.next_u64());
        sc.push_back(c.next_u64());
    }
    CHECK(sa == sb);
    CHECK(sa != sc);
    Rng p(5);
    Rng child = p.split();
    CHECK(child.next_u64() != p.next_u64());
    CHECK(std::string(Rng::kAlgorithm) == "xoshiro256**/splitmix64");
}

TEST_CASE("rng ranges") {
    Rng r(9);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform_real();
        CHECK((u >= 0.0 && u < 1.0));
        CHECK(r.uniform_index(7) < 7);
    }
    CHECK_THROWS_AS(r.uniform_index(0), InvalidParameter);
}

TEST_CASE("uniform_index is unbiased over a small range") {
    Rng r(77);
    std::vector<int> counts(5, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[r.uniform_index(5)];
    for (int c : counts) CHECK(std::abs(c - n / 5) < 600);  // ~4.7 sigma
}

TEST_CASE("normal draws have unit moments") {
    Rng r(3);
    const auto v = gauss_sample(r, 2.0, 3.0, 200000);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= v.size();
    CHECK(mean == doctest::Approx(2.0).epsilon(0.01));
    CHECK(std::sqrt(var) == doctest::Approx(3.0).epsilon(0.01));
    CHECK_THROWS_AS(gauss_sample(r, 0.0, 0.0, 3), InvalidParameter);
}

TEST_CASE("shuffle is a permutation and reproducible") {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    Rng r1(8), r2(8);
    r1.shuffle(v);
    r2.shuffle(w);
    CHECK(v == w);
    std::set<int> s(v.begin(), v.end());
    CHECK(s.size() == 50);
}

TEST_CASE("sigmoid saturation and symmetry") {
    CHECK(std::abs(sigmoid(40.0) - 1.0) <= 1e-15);
    CHECK(sigmoid(-1.0) == doctest::Approx(1.0 - sigmoid(1.0)).epsilon(1e-15));
    Rng r(11);
    for (int i = 0; i < 2000; ++i) {
        const double u = r.uniform_real(-700.0, 700.0);
        CHECK(std::abs(sigmoid(u) + sigmoid(-u) - 1.0) <= 1e-15);
    }
}

TEST_CASE("log1pexp derivative is the sigmoid") {
    const double h = 1e-5;
    for (double u = -20.0; u <= 20.0; u += 0.37) {
        const double fd = (log1pexp(u + h) - log1pexp(u - h)) / (2 * h);
        CHECK(std::abs(fd - sigmoid(u)) <= 1e-8 * std::max(sigmoid(u), 1e-300) + 1e-12);
    }
    CHECK(std::abs(log1pexp(1000.0) - 1000.0) <= 1e-12 * 1000.0);
    CHECK(log1pexp(-1000.0) <= 1e-300);
    CHECK(log1pexp(0.0) == 0.6931471805599453);
}

TEST_CASE("gauss_sample law of large numbers") {
    Rng r(1);
    const auto v = gauss_sample(r, 0.0, 1.0, 100000);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    CHECK(std::abs(mean) < 0.02);
    Rng r1(1);
    CHECK_THROWS_AS(gauss_sample(r1, 5.0, 0.0, 3), InvalidParameter);
    Rng a(1), b(1);
    CHECK(gauss_sample(a, 0, 1, 64) == gauss_sample(b, 0, 1, 64));
}

TEST_CASE("matrix arithmetic rejects mismatched shapes") {
    const Matrix a(2, 2, 1.0);
    const Matrix b(2, 3, 1.0);
    CHECK_THROWS_AS(a + b, ShapeError);
    CHECK_THROWS_AS(a - b, ShapeError);
    Matrix c(2, 2);
    CHECK_THROWS_AS(add_row_vector(c, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK((2.0 * a)(1, 1) == 2.0);
    CHECK(a.all_finite());
}
