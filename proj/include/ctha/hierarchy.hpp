#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ctha/matrix.hpp"

namespace ctha {

/// Layered state: one row per temporal layer, d features per row. Row l is
/// layer l's stream at the current step. Immutable-by-convention: operations
/// return fresh values.
struct LayeredState {
    Matrix rows;             // n x d
    std::uint64_t step = 0;  // t

    std::size_t layer_count() const { return rows.rows(); }
    std::size_t feature_dim() const { return rows.cols(); }

    /// n >= 1, d >= 1, every entry finite.
    void check_invariants() const;
};

/// Per-layer parameters behind the three inter-layer mappings: a gating
/// scalar, a projection against the normalized state (the input-dependent
/// part), and a bias (the static part) for each of pre/post/res.
struct MappingParams {
    double alpha_pre = 0.0;
    double alpha_post = 0.0;
    double alpha_res = 0.0;
    Vector theta_pre;   // length d
    Vector theta_post;  // length d
    Matrix theta_res;   // n x d
    Vector b_pre;       // length n
    Vector b_post;      // length n
    Matrix b_res;       // n x n

    /// Gating off, read-out uniform (1/n), write-in ones, residual identity:
    /// the fixed fallback mappings that keep shapes consistent with every
    /// mapping disabled.
    static MappingParams neutral(std::size_t n, std::size_t d);

    void check_shapes(std::size_t n, std::size_t d) const;
};

/// The synthesized mapping triple for one layer: read-out weights (1 x n),
/// write-in weights (1 x n) and the n x n residual mixing matrix. In
/// constrained mode h_res is kept doubly stochastic within tolerance, which
/// bounds its gain by 1 in both directions.
struct MappingSet {
    Vector h_pre;   // length n
    Vector h_post;  // length n
    Matrix h_res;   // n x n
};

/// Forward gain = max absolute row sum, backward gain = max absolute column
/// sum. The stability metric for composite residual mappings.
struct GainPair {
    double fwd = 0.0;
    double bwd = 0.0;
};

struct ProjectionResult {
    Matrix matrix;
    bool converged = false;
    std::size_t sweeps = 0;
};

/// Per-layer perturbation magnitudes eps_0 .. eps_{L-1}, dimensionless.
using ErrorVector = std::vector<double>;

/// A layer's internal policy as seen by the numeric propagation path: total
/// function from a d-vector context to a d-vector output.
using LayerPolicyFn = std::function<Vector(const Vector&)>;

/// Rescale each row to zero mean and unit variance across the feature
/// dimension (population variance). A row with zero variance maps to
/// all-zeros rather than raising: degenerate states occur in scripted tests.
LayeredState normalize_state(const LayeredState& x);

/// Synthesize one layer's mapping triple from the current state:
///   h = alpha * logistic(theta * normalize(x)^T) + b
/// for each of pre/post/res. Normalization happens internally; the caller may
/// pass raw state.
MappingSet compute_mappings(const LayeredState& x, const MappingParams& p);

/// Single-layer propagation: x' = h_res * x + h_post^T * policy(h_pre * x).
/// h_pre * x collapses the n streams into one d-vector, the policy maps it,
/// and h_post^T spreads the result back across streams as a rank-1 update.
LayeredState propagate_layer(const LayeredState& x, const MappingSet& m,
                             const LayerPolicyFn& policy);

/// Ordered product of residual mappings covering layers
/// [from_layer, to_layer): the deepest layer's matrix is applied last, i.e.
/// res[to-1] * res[to-2] * ... * res[from]. Empty range yields the identity.
Matrix composite_mapping(std::span<const Matrix> res_list, std::size_t from_layer,
                         std::size_t to_layer);

GainPair amax_gain(const Matrix& h);

/// Project a square matrix onto the doubly stochastic set: take absolute
/// values, floor entries at 1e-12 so no row or column can vanish, then
/// alternate row/column normalization (Sinkhorn sweeps) until every row and
/// column sum is within tol of 1 or max_iter sweeps have run.
ProjectionResult project_doubly_stochastic(const Matrix& h, double tol = 1e-9,
                                           std::size_t max_iter = 1000);

/// Total error reaching the output layer when eps[i] enters at layer i:
///   eps_L = sum_i gain_fwd(res[L-1] * ... * res[i]) * eps[i]
/// Per-layer errors are scalar magnitudes scaled through the forward Amax
/// gain of the remaining composite mapping.
double propagate_error(const ErrorVector& eps, std::span<const Matrix> res_list);

/// Temperature ladder: T_l = t_base + gamma * ln(tau[l-1] / tau[0]).
/// `layer` is 1-based; tau must be strictly increasing and positive.
double layer_temperature(std::size_t layer, std::span<const double> tau, double t_base,
                         double gamma);

}  // namespace ctha
