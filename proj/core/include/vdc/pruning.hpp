#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vdc/rng.hpp"
#include "vdc/tensor.hpp"

namespace vdc {

double sigmoid(double x);
double logit(double x);

/// Learnable importance logits with a fixed sigmoid temperature; the
/// importance of block i is sigmoid(theta_i / temperature).
struct ImportanceVector {
    std::vector<double> theta;
    double temperature = 0.1;

    std::vector<double> importances() const;
};

/// Solution of
///   min over (c, p) of Σ_i (p_i − c·q_i)²
///   subject to Σ_i p_i = n, 0 ≤ p_i ≤ 1, c ≥ 0.
/// t is the clamp index in the sorted-descending frame: t−1 probabilities sit
/// exactly at 1. beta/delta are the KKT duals of the sum and upper-bound
/// constraints (the lower-bound duals are identically zero at the optimum).
struct InclusionSolution {
    std::vector<double> p;      // original index order
    double c = 0.0;
    std::size_t t = 1;
    double objective = 0.0;
    double beta = 0.0;
    std::vector<double> delta;  // original index order
    bool inputs_clamped = false;  // some q was raised to the 1e-9 floor
};

/// Closed-form solver: evaluates the proportional candidate, the clamped
/// prefix systems for t = 2..n, and the top-n fallback, returning the
/// feasible candidate with the smallest objective.
InclusionSolution solve_inclusion(std::span<const double> q, std::size_t n);

/// Exhaustive active-set oracle (N ≤ 16): tries every subset of indices
/// clamped to 1 with the equality-constrained least squares on the rest.
/// Shares no logic with solve_inclusion beyond the 2×2 solve primitive.
InclusionSolution oracle_active_set(std::span<const double> q, std::size_t n);

enum class JacobianMode {
    /// True derivative of the solver output: rows of clamped indices are zero
    /// (their p is locally constant at 1). Columns sum to zero.
    exact,
    /// Straight-through rows for clamped indices: gradient of the analytic
    /// expression c·q_i − β/2 even though the forward value is 1.
    straight_through,
};

/// ∂p_i/∂q_j of the selected solver branch, N×N, rows indexed by p.
/// Throws DegenerateError when the solution is too close to a constraint
/// boundary for the branch to be stable under perturbation.
Tensor solver_jacobian(std::span<const double> q, std::size_t n,
                       JacobianMode mode = JacobianMode::exact);

/// Fixed-size zero-one selection with its sampling probabilities.
struct GateSample {
    std::vector<std::uint8_t> z;
    std::vector<double> p;
    std::size_t n = 0;

    std::size_t count() const;
};

/// Brewer's draw-by-draw sampling without replacement: exactly n ones, and
/// the first-order inclusion probability of index i equals p[i].
GateSample sample_fixed_size(std::span<const double> p, std::size_t n, Rng& rng);

/// Systematic PPS sampling over a random permutation; provably achieves the
/// prescribed inclusion probabilities at fixed size. Kept as an independent
/// distributional oracle for sample_fixed_size.
GateSample sample_systematic_pps(std::span<const double> p, std::size_t n, Rng& rng);

/// Straight-through gate: forward value is exactly z, gradient w.r.t. p is
/// exactly 1.
double gate_forward(std::uint8_t z, double p);
double gate_grad();

/// Indices of the n largest importances, ties broken by lowest index;
/// returned sorted ascending.
std::vector<std::size_t> select_top_n(std::span<const double> q, std::size_t n);

/// λ · Σ_i (1 − α_i), the L1 regularization baseline on temporal mix weights.
double l1_gate_loss(std::span<const double> alpha, double lambda);

/// Importance logits reproducing q_i = 1 − α_i under the sigmoid
/// parametrization: theta_i = temperature · logit(1 − α_i).
ImportanceVector importance_from_alpha(std::span<const double> alpha,
                                       double temperature = 0.1);

/// Table-style pruning-rate preset: n = round((1 − rate) · N) for rate in
/// [0, 1), e.g. rate 0.7 keeps 30% of the blocks.
std::size_t budget_from_prune_rate(double rate, std::size_t block_count);

}  // namespace vdc
