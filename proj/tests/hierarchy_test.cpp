#include "ctha/hierarchy.hpp"

#include <algorithm>
#include <cmath>

#include "ctha/rng.hpp"

#include "doctest.h"

using namespace ctha;

namespace {

LayeredState state_from(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t d = rows.begin()->size();
    LayeredState s{Matrix(n, d), 0};
    std::size_t i = 0;
    for (const auto& row : rows) {
        std::size_t j = 0;
        for (double v : row) s.rows.at(i, j++) = v;
        ++i;
    }
    return s;
}

Matrix random_matrix(Rng& rng, std::size_t n, double lo, double hi) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m.at(i, j) = rng.uniform(lo, hi);
    return m;
}

// Scratch oracle: plain triple-loop product, independent of Matrix::operator*.
Matrix naive_product(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            worst = std::max(worst, std::abs(a.at(i, j) - b.at(i, j)));
    return worst;
}

}  // namespace

TEST_CASE("normalize_state maps constant rows to zero and centers the rest") {
    const auto constant = normalize_state(state_from({{1, 1, 1, 1}}));
    for (std::size_t j = 0; j < 4; ++j) CHECK(constant.rows.at(0, j) == 0.0);

    const auto two = normalize_state(state_from({{0, 2}}));
    CHECK(two.rows.at(0, 0) == doctest::Approx(-1.0));
    CHECK(two.rows.at(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("normalize_state yields zero mean and unit variance on random state") {
    Rng rng(11);
    LayeredState s{Matrix(4, 8), 0};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 8; ++j) s.rows.at(i, j) = rng.uniform(-5.0, 5.0);
    const auto normalized = normalize_state(s);
    for (std::size_t i = 0; i < 4; ++i) {
        // Recompute mean and population variance directly.
        double mean = 0.0;
        for (std::size_t j = 0; j < 8; ++j) mean += normalized.rows.at(i, j);
        mean /= 8.0;
        double var = 0.0;
        for (std::size_t j = 0; j < 8; ++j) {
            const double dev = normalized.rows.at(i, j) - mean;
            var += dev * dev;
        }
        var /= 8.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(var - 1.0) < 1e-9);
    }
}

TEST_CASE("compute_mappings honors gating and static biases") {
    const auto x = state_from({{0.3, -1.2, 0.5}, {2.0, 0.1, -0.7}, {0.0, 0.9, 1.1}});
    const std::size_t n = 3, d = 3;

    SUBCASE("gating off leaves the static residual bias") {
        auto p = MappingParams::neutral(n, d);
        const auto m = compute_mappings(x, p);
        CHECK(m.h_res == Matrix::identity(n));
    }

    SUBCASE("uniform read-out weights with zero pre gate") {
        auto p = MappingParams::neutral(n, d);
        const auto m = compute_mappings(x, p);
        for (std::size_t l = 0; l < n; ++l)
            CHECK(m.h_pre[l] == doctest::Approx(1.0 / 3.0));
    }

    SUBCASE("unit gate with zero projection and bias gives logistic(0) everywhere") {
        auto p = MappingParams::neutral(n, d);
        p.alpha_res = 1.0;
        p.b_res = Matrix(n, n, 0.0);
        const auto m = compute_mappings(x, p);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                CHECK(m.h_res.at(i, j) == doctest::Approx(0.5));
    }

    SUBCASE("shape mismatch raises") {
        auto p = MappingParams::neutral(n + 1, d);
        CHECK_THROWS_AS(compute_mappings(x, p), ShapeError);
    }
}

TEST_CASE("propagate_layer degenerate paths") {
    const auto x = state_from({{1, 2}, {3, 4}});
    const auto identity_policy = [](const Vector& v) { return v; };

    SUBCASE("pure residual: identity h_res and zero h_post keep the state") {
        MappingSet m{{0.5, 0.5}, {0.0, 0.0}, Matrix::identity(2)};
        const auto out = propagate_layer(x, m, identity_policy);
        CHECK(out.rows == x.rows);
        CHECK(out.step == x.step + 1);
    }

    SUBCASE("one-hot read and write with zero residual copies row one") {
        MappingSet m{{1.0, 0.0}, {1.0, 0.0}, Matrix(2, 2, 0.0)};
        const auto out = propagate_layer(x, m, identity_policy);
        CHECK(out.rows.at(0, 0) == doctest::Approx(1.0));
        CHECK(out.rows.at(0, 1) == doctest::Approx(2.0));
        CHECK(out.rows.at(1, 0) == 0.0);
        CHECK(out.rows.at(1, 1) == 0.0);
    }

    SUBCASE("policy returning the wrong length raises") {
        MappingSet m{{1.0, 0.0}, {1.0, 0.0}, Matrix::identity(2)};
        CHECK_THROWS_AS(propagate_layer(x, m, [](const Vector&) { return Vector(5, 0.0); }),
                        ShapeError);
    }
}

TEST_CASE("propagate_layer matches a term-by-term oracle on random instances") {
    Rng rng(23);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 4, d = 4;
        LayeredState x{Matrix(n, d), 0};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) x.rows.at(i, j) = rng.uniform(-2.0, 2.0);
        MappingSet m;
        m.h_pre.resize(n);
        m.h_post.resize(n);
        for (std::size_t l = 0; l < n; ++l) {
            m.h_pre[l] = rng.uniform(-1.0, 1.0);
            m.h_post[l] = rng.uniform(-1.0, 1.0);
        }
        m.h_res = random_matrix(rng, n, -1.0, 1.0);
        const auto policy = [](const Vector& v) {
            Vector out(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
            return out;
        };

        // Oracle: evaluate the residual and write-in terms separately.
        const Matrix residual = naive_product(m.h_res, x.rows);
        Vector context(d, 0.0);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t l = 0; l < n; ++l) context[j] += m.h_pre[l] * x.rows.at(l, j);
        const Vector acted = policy(context);
        Matrix expected = residual;
        for (std::size_t l = 0; l < n; ++l)
            for (std::size_t j = 0; j < d; ++j)
                expected.at(l, j) += m.h_post[l] * acted[j];

        const auto out = propagate_layer(x, m, policy);
        CHECK(max_abs_diff(out.rows, expected) < 1e-12);
    }
}

TEST_CASE("composite_mapping multiplies deepest-last") {
    const std::vector<Matrix> identities(3, Matrix::identity(4));
    CHECK(composite_mapping(identities, 0, 3) == Matrix::identity(4));

    Rng rng(5);
    const std::vector<Matrix> single{random_matrix(rng, 4, -1.0, 1.0)};
    CHECK(composite_mapping(single, 0, 1) == single[0]);

    std::vector<Matrix> chain;
    for (int i = 0; i < 3; ++i) chain.push_back(random_matrix(rng, 4, -1.0, 1.0));
    const Matrix expected = naive_product(naive_product(chain[2], chain[1]), chain[0]);
    CHECK(max_abs_diff(composite_mapping(chain, 0, 3), expected) < 1e-12);

    CHECK(composite_mapping(chain, 1, 1) == Matrix::identity(4));
    CHECK_THROWS_AS(composite_mapping(chain, 2, 1), DomainError);
}

TEST_CASE("amax_gain row and column sums") {
    CHECK(amax_gain(Matrix::identity(3)).fwd == doctest::Approx(1.0));
    CHECK(amax_gain(Matrix::identity(3)).bwd == doctest::Approx(1.0));

    Matrix scaled(2, 2, 0.0);
    scaled.at(0, 0) = 2.0;
    scaled.at(1, 1) = 2.0;
    CHECK(amax_gain(scaled).fwd == doctest::Approx(2.0));
    CHECK(amax_gain(scaled).bwd == doctest::Approx(2.0));

    CHECK_THROWS_AS(amax_gain(Matrix()), DomainError);
}

TEST_CASE("project_doubly_stochastic fixed points and support") {
    SUBCASE("doubly stochastic input comes back unchanged within tolerance") {
        Matrix ds(2, 2, 0.5);
        const auto result = project_doubly_stochastic(ds, 1e-9);
        CHECK(result.converged);
        CHECK(max_abs_diff(result.matrix, ds) < 1e-8);
    }

    SUBCASE("diagonal scaling projects to the identity") {
        Matrix m(2, 2, 0.0);
        m.at(0, 0) = 2.0;
        m.at(1, 1) = 2.0;
        const auto result = project_doubly_stochastic(m, 1e-9);
        CHECK(result.converged);
        CHECK(max_abs_diff(result.matrix, Matrix::identity(2)) < 1e-8);
    }

    SUBCASE("random positive matrices project to unit gains") {
        Rng rng(31);
        for (int trial = 0; trial < 20; ++trial) {
            const auto result =
                project_doubly_stochastic(random_matrix(rng, 4, 0.01, 1.0), 1e-9);
            CHECK(result.converged);
            const auto gain = amax_gain(result.matrix);
            CHECK(gain.fwd == doctest::Approx(1.0).epsilon(1e-8));
            CHECK(gain.bwd == doctest::Approx(1.0).epsilon(1e-8));
        }
    }

    SUBCASE("empty matrix raises") {
        CHECK_THROWS_AS(project_doubly_stochastic(Matrix(), 1e-9), DomainError);
    }
}

TEST_CASE("propagate_error scalarizes through forward gains") {
    const std::vector<Matrix> identities(4, Matrix::identity(3));
    CHECK(propagate_error({0.1, 0.1, 0.1, 0.1}, identities) == doctest::Approx(0.4));

    Matrix twice(3, 3, 0.0);
    for (std::size_t i = 0; i < 3; ++i) twice.at(i, i) = 2.0;
    const std::vector<Matrix> doubling{twice, twice};
    CHECK(propagate_error({1.0, 0.0}, doubling) == doctest::Approx(4.0));

    CHECK_THROWS_AS(propagate_error({0.1}, doubling), DomainError);

    SUBCASE("projected chains stay within the bound from unit gain") {
        Rng rng(41);
        const std::size_t L = 5;
        std::vector<Matrix> chain;
        for (std::size_t i = 0; i < L; ++i)
            chain.push_back(
                project_doubly_stochastic(random_matrix(rng, 4, 0.01, 1.5)).matrix);
        const double total = propagate_error(ErrorVector(L, 0.1), chain);
        CHECK(total <= 0.1 * static_cast<double>(L) * (1.0 + 1e-6));
    }
}

TEST_CASE("layer_temperature follows the logarithmic ladder") {
    const std::vector<double> tau{0.1, 10.0, 600.0, 86400.0};
    CHECK(layer_temperature(1, tau, 0.1, 0.15) == doctest::Approx(0.1));

    const std::vector<double> e2{1.0, std::exp(2.0)};
    CHECK(layer_temperature(2, e2, 0.1, 0.15) == doctest::Approx(0.4));

    // Inverting the formula for the shipped ladder (0.1, 0.3, 0.5, 0.7)
    // gives time-scale ratios e^{4/3}, e^{8/3}, e^{4}.
    const std::vector<double> ladder{1.0, std::exp(4.0 / 3.0), std::exp(8.0 / 3.0),
                                     std::exp(4.0)};
    CHECK(layer_temperature(1, ladder, 0.1, 0.15) == doctest::Approx(0.1));
    CHECK(layer_temperature(2, ladder, 0.1, 0.15) == doctest::Approx(0.3));
    CHECK(layer_temperature(3, ladder, 0.1, 0.15) == doctest::Approx(0.5));
    CHECK(layer_temperature(4, ladder, 0.1, 0.15) == doctest::Approx(0.7));

    CHECK_THROWS_AS(layer_temperature(1, std::vector<double>{-1.0}, 0.1, 0.15), DomainError);
    CHECK_THROWS_AS(layer_temperature(1, std::vector<double>{2.0, 1.0}, 0.1, 0.15),
                    DomainError);
}

TEST_CASE("non-expansiveness and composition closure of projected mappings") {
    Rng rng(59);
    std::vector<Matrix> projected;
    for (int i = 0; i < 16; ++i)
        projected.push_back(
            project_doubly_stochastic(random_matrix(rng, 4, 0.0, 2.0)).matrix);

    for (const auto& m : projected) {
        const auto gain = amax_gain(m);
        CHECK(gain.fwd >= 1.0 - 1e-8);
        CHECK(gain.fwd <= 1.0 + 1e-8);
        CHECK(gain.bwd >= 1.0 - 1e-8);
        CHECK(gain.bwd <= 1.0 + 1e-8);
    }

    for (std::size_t k = 1; k <= 16; ++k) {
        const auto gain = amax_gain(composite_mapping(projected, 0, k));
        const double bound = static_cast<double>(k) * 1e-9 + 1e-12;
        CHECK(std::abs(gain.fwd - 1.0) <= bound);
        CHECK(std::abs(gain.bwd - 1.0) <= bound);
    }
}

TEST_CASE("unconstrained composites grow with depth") {
    Rng rng(67);
    const int trials = 120;
    std::vector<std::vector<double>> gains(4);
    for (int t = 0; t < trials; ++t) {
        Matrix product;
        for (int depth = 0; depth < 4; ++depth) {
            const Matrix sample = random_matrix(rng, 4, 0.0, 1.5);
            product = depth == 0 ? sample : sample * product;
            gains[static_cast<std::size_t>(depth)].push_back(amax_gain(product).fwd);
        }
    }
    std::vector<double> medians;
    for (auto& g : gains) {
        std::sort(g.begin(), g.end());
        medians.push_back(g[g.size() / 2]);
    }
    CHECK(medians[3] > 3.0);
    for (std::size_t depth = 1; depth < medians.size(); ++depth)
        CHECK(medians[depth] >= medians[depth - 1]);
}

TEST_CASE("single-layer hierarchy degenerates to the plain loop") {
    // With n = 1 the constrained projection forces the residual mapping to 1
    // and propagation reduces to x + policy(x).
    const auto projected = project_doubly_stochastic(Matrix(1, 1, 7.3));
    CHECK(projected.matrix.at(0, 0) == doctest::Approx(1.0));

    LayeredState x{Matrix(1, 3), 0};
    x.rows.at(0, 0) = 0.2;
    x.rows.at(0, 1) = -0.4;
    x.rows.at(0, 2) = 1.5;
    MappingSet m{{1.0}, {1.0}, projected.matrix};
    const auto policy = [](const Vector& v) {
        Vector out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
        return out;
    };
    const auto out = propagate_layer(x, m, policy);
    for (std::size_t j = 0; j < 3; ++j) {
        const double expected = x.rows.at(0, j) + std::tanh(x.rows.at(0, j));
        CHECK(out.rows.at(0, j) == doctest::Approx(expected));
    }
}
