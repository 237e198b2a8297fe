#include "ctha/hierarchy.hpp"

#include <algorithm>
#include <cmath>

namespace ctha {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// theta (length d) against every normalized row: one coefficient per layer.
Vector project_rows(const Matrix& normalized, const Vector& theta) {
    const std::size_t n = normalized.rows();
    const std::size_t d = normalized.cols();
    if (theta.size() != d)
        throw ShapeError("mapping theta length " + std::to_string(theta.size()) +
                         " != feature dim " + std::to_string(d));
    Vector out(n, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += theta[j] * normalized.at(l, j);
        out[l] = dot;
    }
    return out;
}

}  // namespace

void LayeredState::check_invariants() const {
    if (rows.rows() < 1 || rows.cols() < 1)
        throw DomainError("layered state requires n >= 1 and d >= 1");
    if (!rows.all_finite()) throw DomainError("layered state contains non-finite entries");
}

MappingParams MappingParams::neutral(std::size_t n, std::size_t d) {
    MappingParams p;
    p.theta_pre.assign(d, 0.0);
    p.theta_post.assign(d, 0.0);
    p.theta_res = Matrix(n, d, 0.0);
    p.b_pre.assign(n, 1.0 / static_cast<double>(n));
    p.b_post.assign(n, 1.0);
    p.b_res = Matrix::identity(n);
    return p;
}

void MappingParams::check_shapes(std::size_t n, std::size_t d) const {
    if (theta_pre.size() != d || theta_post.size() != d)
        throw ShapeError("theta_pre/theta_post must have length d");
    if (theta_res.rows() != n || theta_res.cols() != d)
        throw ShapeError("theta_res must be n x d");
    if (b_pre.size() != n || b_post.size() != n)
        throw ShapeError("b_pre/b_post must have length n");
    if (b_res.rows() != n || b_res.cols() != n) throw ShapeError("b_res must be n x n");
}

LayeredState normalize_state(const LayeredState& x) {
    x.check_invariants();
    const std::size_t n = x.layer_count();
    const std::size_t d = x.feature_dim();
    LayeredState out{Matrix(n, d), x.step};
    for (std::size_t l = 0; l < n; ++l) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += x.rows.at(l, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dev = x.rows.at(l, j) - mean;
            var += dev * dev;
        }
        var /= static_cast<double>(d);
        if (var == 0.0) continue;  // zero-variance row stays all-zeros
        const double inv_sd = 1.0 / std::sqrt(var);
        for (std::size_t j = 0; j < d; ++j)
            out.rows.at(l, j) = (x.rows.at(l, j) - mean) * inv_sd;
    }
    return out;
}

MappingSet compute_mappings(const LayeredState& x, const MappingParams& p) {
    const std::size_t n = x.layer_count();
    const std::size_t d = x.feature_dim();
    p.check_shapes(n, d);
    const LayeredState normalized = normalize_state(x);

    MappingSet m;
    m.h_pre = project_rows(normalized.rows, p.theta_pre);
    m.h_post = project_rows(normalized.rows, p.theta_post);
    for (std::size_t l = 0; l < n; ++l) {
        m.h_pre[l] = p.alpha_pre * logistic(m.h_pre[l]) + p.b_pre[l];
        m.h_post[l] = p.alpha_post * logistic(m.h_post[l]) + p.b_post[l];
    }

    m.h_res = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vector theta_row = p.theta_res.row(i);
        const Vector dyn = project_rows(normalized.rows, theta_row);
        for (std::size_t j = 0; j < n; ++j)
            m.h_res.at(i, j) = p.alpha_res * logistic(dyn[j]) + p.b_res.at(i, j);
    }
    return m;
}

LayeredState propagate_layer(const LayeredState& x, const MappingSet& m,
                             const LayerPolicyFn& policy) {
    x.check_invariants();
    const std::size_t n = x.layer_count();
    const std::size_t d = x.feature_dim();
    if (m.h_pre.size() != n || m.h_post.size() != n)
        throw ShapeError("h_pre/h_post must have length n");
    if (m.h_res.rows() != n || m.h_res.cols() != n) throw ShapeError("h_res must be n x n");

    // h_pre * x: one d-vector read out of the n streams.
    Vector context(d, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
        if (m.h_pre[l] == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) context[j] += m.h_pre[l] * x.rows.at(l, j);
    }

    const Vector acted = policy(context);
    if (acted.size() != d)
        throw ShapeError("layer policy returned length " + std::to_string(acted.size()) +
                         ", expected " + std::to_string(d));

    LayeredState out{m.h_res * x.rows, x.step + 1};
    for (std::size_t l = 0; l < n; ++l) {
        if (m.h_post[l] == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) out.rows.at(l, j) += m.h_post[l] * acted[j];
    }
    return out;
}

Matrix composite_mapping(std::span<const Matrix> res_list, std::size_t from_layer,
                         std::size_t to_layer) {
    if (from_layer > to_layer)
        throw DomainError("composite_mapping: from_layer > to_layer");
    if (to_layer > res_list.size())
        throw DomainError("composite_mapping: range exceeds mapping list");
    if (from_layer == to_layer) {
        if (res_list.empty())
            throw DomainError("composite_mapping: empty list gives no identity size");
        return Matrix::identity(res_list.front().rows());
    }
    Matrix acc = res_list[from_layer];
    for (std::size_t l = from_layer + 1; l < to_layer; ++l)
        acc = res_list[l] * acc;  // deeper mapping applied last
    return acc;
}

GainPair amax_gain(const Matrix& h) {
    if (h.empty()) throw DomainError("amax_gain: empty matrix");
    GainPair g;
    for (std::size_t i = 0; i < h.rows(); ++i) g.fwd = std::max(g.fwd, h.row_abs_sum(i));
    for (std::size_t j = 0; j < h.cols(); ++j) g.bwd = std::max(g.bwd, h.col_abs_sum(j));
    return g;
}

ProjectionResult project_doubly_stochastic(const Matrix& h, double tol,
                                           std::size_t max_iter) {
    const std::size_t n = h.rows();
    if (n == 0) throw DomainError("project_doubly_stochastic: empty matrix");
    if (h.cols() != n) throw ShapeError("project_doubly_stochastic: matrix must be square");
    if (tol <= 0.0) throw DomainError("project_doubly_stochastic: tol must be positive");
    if (max_iter < 1) throw DomainError("project_doubly_stochastic: max_iter must be >= 1");

    constexpr double kFloor = 1e-12;
    ProjectionResult result;
    result.matrix = h;
    Matrix& m = result.matrix;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            m.at(i, j) = std::max(std::abs(m.at(i, j)), kFloor);

    auto max_deviation = [&]() {
        double dev = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double rs = 0.0, cs = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                rs += m.at(i, j);
                cs += m.at(j, i);
            }
            dev = std::max(dev, std::max(std::abs(rs - 1.0), std::abs(cs - 1.0)));
        }
        return dev;
    };

    for (std::size_t sweep = 0; sweep < max_iter; ++sweep) {
        if (max_deviation() <= tol) {
            result.converged = true;
            result.sweeps = sweep;
            return result;
        }
        for (std::size_t i = 0; i < n; ++i) {
            double rs = 0.0;
            for (std::size_t j = 0; j < n; ++j) rs += m.at(i, j);
            for (std::size_t j = 0; j < n; ++j) m.at(i, j) /= rs;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double cs = 0.0;
            for (std::size_t i = 0; i < n; ++i) cs += m.at(i, j);
            for (std::size_t i = 0; i < n; ++i) m.at(i, j) /= cs;
        }
    }
    result.converged = max_deviation() <= tol;
    result.sweeps = max_iter;
    return result;
}

double propagate_error(const ErrorVector& eps, std::span<const Matrix> res_list) {
    const std::size_t L = res_list.size();
    if (eps.size() != L)
        throw DomainError("propagate_error: eps length must equal mapping count");
    for (double e : eps)
        if (!std::isfinite(e)) throw DomainError("propagate_error: non-finite eps");
    double total = 0.0;
    // Running suffix product res[L-1] * ... * res[i], extended right to left.
    Matrix suffix;
    for (std::size_t idx = L; idx-- > 0;) {
        suffix = suffix.empty() ? res_list[idx] : suffix * res_list[idx];
        total += amax_gain(suffix).fwd * eps[idx];
    }
    return total;
}

double layer_temperature(std::size_t layer, std::span<const double> tau, double t_base,
                         double gamma) {
    if (layer < 1 || layer > tau.size())
        throw DomainError("layer_temperature: layer out of range");
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (tau[i] <= 0.0) throw DomainError("layer_temperature: tau must be positive");
        if (i > 0 && tau[i] <= tau[i - 1])
            throw DomainError("layer_temperature: tau must be strictly increasing");
    }
    return t_base + gamma * std::log(tau[layer - 1] / tau[0]);
}

}  // namespace ctha
