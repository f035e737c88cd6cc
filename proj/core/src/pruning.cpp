#include "vdc/pruning.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "vdc/errors.hpp"
#include "vdc/linalg.hpp"

namespace vdc {

namespace {

constexpr double kBoxTol = 1e-12;
constexpr double kSumTol = 1e-9;
constexpr double kImportanceFloor = 1e-9;

struct SortedProblem {
    std::vector<double> q;           // sorted descending
    std::vector<std::size_t> order;  // order[sorted_pos] = original index
    bool clamped = false;
};

SortedProblem sort_importances(std::span<const double> q_in) {
    SortedProblem prob;
    prob.q.assign(q_in.begin(), q_in.end());
    for (double& v : prob.q) {
        if (std::isnan(v)) throw DomainError("importance values must be finite");
        if (v < kImportanceFloor) {
            v = kImportanceFloor;
            prob.clamped = true;
        }
    }
    prob.order.resize(prob.q.size());
    std::iota(prob.order.begin(), prob.order.end(), std::size_t{0});
    std::stable_sort(prob.order.begin(), prob.order.end(),
                     [&](std::size_t a, std::size_t b) { return prob.q[a] > prob.q[b]; });
    std::vector<double> sorted(prob.q.size());
    for (std::size_t i = 0; i < prob.q.size(); ++i) sorted[i] = prob.q[prob.order[i]];
    prob.q = std::move(sorted);
    return prob;
}

struct Candidate {
    bool feasible = false;
    std::size_t t = 1;  // clamp index; t-1 entries are fixed at 1
    double c = 0.0;
    double mu = 0.0;  // β/2
    std::vector<double> p;  // sorted frame
    double objective = 0.0;
};

double candidate_objective(const Candidate& cand, const std::vector<double>& q) {
    double obj = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double r = cand.p[i] - cand.c * q[i];
        obj += r * r;
    }
    return obj;
}

Candidate proportional_candidate(const std::vector<double>& q, std::size_t n) {
    Candidate cand;
    cand.t = 1;
    const double sum = std::accumulate(q.begin(), q.end(), 0.0);
    cand.c = static_cast<double>(n) / sum;
    cand.p.resize(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) cand.p[i] = cand.c * q[i];
    cand.feasible = cand.p[0] <= 1.0 + kBoxTol;  // sorted, so p[0] is the max
    cand.objective = candidate_objective(cand, q);
    return cand;
}

Candidate clamped_candidate(const std::vector<double>& q, std::size_t n, std::size_t t) {
    const std::size_t big_n = q.size();
    const std::size_t ones = t - 1;
    Candidate cand;
    cand.t = t;
    double sum_clamped = 0.0, sum_clamped_sq = 0.0, sum_free = 0.0;
    for (std::size_t i = 0; i < ones; ++i) {
        sum_clamped += q[i];
        sum_clamped_sq += q[i] * q[i];
    }
    for (std::size_t i = ones; i < big_n; ++i) sum_free += q[i];

    const Tensor m = Tensor::from_rows(
        {{sum_free, -static_cast<double>(big_n - ones)}, {sum_clamped_sq, sum_free}});
    const Tensor rhs({2}, {static_cast<double>(n - ones), sum_clamped});
    const Tensor x = solve_2x2(m, rhs);
    cand.c = x(0);
    cand.mu = x(1);

    cand.p.resize(big_n);
    cand.feasible = cand.c >= -kBoxTol;
    for (std::size_t i = 0; i < ones; ++i) cand.p[i] = 1.0;
    for (std::size_t i = ones; i < big_n; ++i) {
        cand.p[i] = cand.c * q[i] - cand.mu;
        if (cand.p[i] < -kBoxTol || cand.p[i] > 1.0 + kBoxTol) cand.feasible = false;
    }
    cand.objective = candidate_objective(cand, q);
    return cand;
}

Candidate fallback_candidate(const std::vector<double>& q, std::size_t n) {
    Candidate cand;
    cand.t = n + 1;
    cand.p.assign(q.size(), 0.0);
    double sum_sq = 0.0, sum_sel = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) sum_sq += q[i] * q[i];
    for (std::size_t i = 0; i < n; ++i) {
        cand.p[i] = 1.0;
        sum_sel += q[i];
    }
    cand.c = sum_sel / sum_sq;  // least-squares c for this fixed p
    cand.feasible = true;
    cand.objective = candidate_objective(cand, q);
    return cand;
}

struct SolveDetail {
    SortedProblem prob;
    Candidate best;
};

SolveDetail solve_sorted(std::span<const double> q_in, std::size_t n) {
    const std::size_t big_n = q_in.size();
    if (big_n < 2) throw ArgumentError("solve_inclusion: need at least 2 importance values");
    if (n < 1 || n >= big_n) {
        throw ArgumentError("solve_inclusion: budget n = " + std::to_string(n) +
                            " outside [1, " + std::to_string(big_n - 1) + "]");
    }
    SolveDetail detail{sort_importances(q_in), {}};
    const std::vector<double>& q = detail.prob.q;

    Candidate best = proportional_candidate(q, n);
    for (std::size_t t = 2; t <= n; ++t) {
        Candidate cand = clamped_candidate(q, n, t);
        if (cand.feasible && (!best.feasible || cand.objective < best.objective)) {
            best = std::move(cand);
        }
    }
    if (!best.feasible) best = fallback_candidate(q, n);
    detail.best = std::move(best);
    return detail;
}

InclusionSolution to_solution(const SolveDetail& detail) {
    const Candidate& cand = detail.best;
    const std::vector<double>& q = detail.prob.q;
    const std::size_t big_n = q.size();
    InclusionSolution sol;
    sol.c = std::max(cand.c, 0.0);
    sol.t = cand.t;
    sol.objective = cand.objective;
    sol.beta = 2.0 * cand.mu;
    sol.inputs_clamped = detail.prob.clamped;
    sol.p.resize(big_n);
    sol.delta.assign(big_n, 0.0);
    for (std::size_t i = 0; i < big_n; ++i) {
        sol.p[detail.prob.order[i]] = cand.p[i];
        if (i + 1 < cand.t) {
            sol.delta[detail.prob.order[i]] = 2.0 * (cand.c * q[i] - 1.0) - sol.beta;
        }
    }
    return sol;
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double x) {
    if (!(x > 0.0) || !(x < 1.0)) {
        throw DomainError("logit argument must lie strictly inside (0, 1)");
    }
    return std::log(x / (1.0 - x));
}

std::vector<double> ImportanceVector::importances() const {
    std::vector<double> q(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) q[i] = sigmoid(theta[i] / temperature);
    return q;
}

InclusionSolution solve_inclusion(std::span<const double> q, std::size_t n) {
    return to_solution(solve_sorted(q, n));
}

InclusionSolution oracle_active_set(std::span<const double> q_in, std::size_t n) {
    const std::size_t big_n = q_in.size();
    if (big_n > 16) throw ArgumentError("oracle_active_set: exhaustive search needs N <= 16");
    if (big_n < 2) throw ArgumentError("oracle_active_set: need at least 2 values");
    if (n < 1 || n >= big_n) throw ArgumentError("oracle_active_set: budget out of range");

    std::vector<double> q(q_in.begin(), q_in.end());
    bool clamped_inputs = false;
    for (double& v : q) {
        if (std::isnan(v)) throw DomainError("importance values must be finite");
        if (v < kImportanceFloor) {
            v = kImportanceFloor;
            clamped_inputs = true;
        }
    }
    double sum_sq_all = 0.0;
    for (double v : q) sum_sq_all += v * v;

    bool found = false;
    InclusionSolution best;
    for (std::uint32_t mask = 0; mask < (1u << big_n); ++mask) {
        const int ones = std::popcount(mask);
        if (static_cast<std::size_t>(ones) > n) continue;

        double c, mu;
        std::vector<double> p(big_n, 0.0);
        if (static_cast<std::size_t>(ones) == n) {
            // All free probabilities must vanish; c minimizes the residual.
            double sum_sel = 0.0;
            for (std::size_t i = 0; i < big_n; ++i)
                if (mask & (1u << i)) {
                    p[i] = 1.0;
                    sum_sel += q[i];
                }
            c = sum_sel / sum_sq_all;
            mu = 0.0;
        } else {
            double sum_clamped = 0.0, sum_clamped_sq = 0.0, sum_free = 0.0;
            std::size_t free_count = 0;
            for (std::size_t i = 0; i < big_n; ++i) {
                if (mask & (1u << i)) {
                    sum_clamped += q[i];
                    sum_clamped_sq += q[i] * q[i];
                } else {
                    sum_free += q[i];
                    ++free_count;
                }
            }
            const Tensor m = Tensor::from_rows(
                {{sum_free, -static_cast<double>(free_count)}, {sum_clamped_sq, sum_free}});
            const Tensor rhs({2},
                             {static_cast<double>(n - static_cast<std::size_t>(ones)),
                              sum_clamped});
            const Tensor x = solve_2x2(m, rhs);
            c = x(0);
            mu = x(1);
            bool ok = c >= -kBoxTol;
            for (std::size_t i = 0; i < big_n && ok; ++i) {
                if (mask & (1u << i)) {
                    p[i] = 1.0;
                } else {
                    p[i] = c * q[i] - mu;
                    if (p[i] < -kBoxTol || p[i] > 1.0 + kBoxTol) ok = false;
                }
            }
            if (!ok) continue;
        }

        double objective = 0.0;
        for (std::size_t i = 0; i < big_n; ++i) {
            const double r = p[i] - c * q[i];
            objective += r * r;
        }
        if (!found || objective < best.objective) {
            found = true;
            best.p = p;
            best.c = std::max(c, 0.0);
            best.t = static_cast<std::size_t>(ones) + 1;
            best.objective = objective;
            best.beta = 2.0 * mu;
            best.delta.assign(big_n, 0.0);
            for (std::size_t i = 0; i < big_n; ++i)
                if (mask & (1u << i)) best.delta[i] = 2.0 * (c * q[i] - 1.0) - best.beta;
            best.inputs_clamped = clamped_inputs;
        }
    }
    return best;
}

Tensor solver_jacobian(std::span<const double> q_in, std::size_t n, JacobianMode mode) {
    const SolveDetail detail = solve_sorted(q_in, n);
    const Candidate& cand = detail.best;
    const std::vector<double>& q = detail.prob.q;
    const std::size_t big_n = q.size();
    const std::size_t ones = cand.t - 1;
    constexpr double kDegenerateTol = 1e-6;

    for (std::size_t i = ones; i < big_n; ++i) {
        if (cand.p[i] < kDegenerateTol) {
            throw DegenerateError("solver_jacobian: p[" +
                                  std::to_string(detail.prob.order[i]) +
                                  "] within 1e-6 of its lower bound 0");
        }
        if (cand.p[i] > 1.0 - kDegenerateTol) {
            throw DegenerateError("solver_jacobian: p[" +
                                  std::to_string(detail.prob.order[i]) +
                                  "] within 1e-6 of its upper bound 1");
        }
    }
    if (cand.c < kDegenerateTol) {
        throw DegenerateError("solver_jacobian: c within 1e-6 of its lower bound 0");
    }
    for (std::size_t i = 0; i < ones; ++i) {
        const double delta_i = 2.0 * (cand.c * q[i] - 1.0) - 2.0 * cand.mu;
        if (delta_i < kDegenerateTol) {
            throw DegenerateError("solver_jacobian: upper-bound dual of p[" +
                                  std::to_string(detail.prob.order[i]) +
                                  "] within 1e-6 of 0 (clamp about to release)");
        }
    }

    Tensor jac_sorted({big_n, big_n});
    if (ones == 0) {
        // Proportional branch: p_i = n q_i / Σq.
        const double sum = std::accumulate(q.begin(), q.end(), 0.0);
        for (std::size_t i = 0; i < big_n; ++i)
            for (std::size_t j = 0; j < big_n; ++j) {
                const double kron = i == j ? 1.0 : 0.0;
                jac_sorted(i, j) =
                    static_cast<double>(n) * (kron * sum - q[i]) / (sum * sum);
            }
    } else {
        double sum_clamped_sq = 0.0, sum_free = 0.0;
        for (std::size_t i = 0; i < ones; ++i) sum_clamped_sq += q[i] * q[i];
        for (std::size_t i = ones; i < big_n; ++i) sum_free += q[i];
        const Tensor m = Tensor::from_rows(
            {{sum_free, -static_cast<double>(big_n - ones)}, {sum_clamped_sq, sum_free}});

        for (std::size_t j = 0; j < big_n; ++j) {
            Tensor rhs({2});
            if (j < ones) {
                rhs(0) = 0.0;
                rhs(1) = 1.0 - 2.0 * q[j] * cand.c;
            } else {
                rhs(0) = -cand.c;
                rhs(1) = -cand.mu;
            }
            const Tensor d = solve_2x2(m, rhs);
            const double dc = d(0);
            const double dmu = d(1);
            for (std::size_t i = 0; i < big_n; ++i) {
                if (i < ones && mode == JacobianMode::exact) {
                    jac_sorted(i, j) = 0.0;
                    continue;
                }
                double v = dc * q[i] - dmu;
                if (i == j) v += cand.c;
                jac_sorted(i, j) = v;
            }
        }
    }

    Tensor jac({big_n, big_n});
    for (std::size_t i = 0; i < big_n; ++i)
        for (std::size_t j = 0; j < big_n; ++j)
            jac(detail.prob.order[i], detail.prob.order[j]) = jac_sorted(i, j);
    return jac;
}

std::size_t GateSample::count() const {
    std::size_t total = 0;
    for (std::uint8_t v : z) total += v;
    return total;
}

namespace {

void validate_sample_request(std::span<const double> p, std::size_t n) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= -kBoxTol) || !(v <= 1.0 + kBoxTol)) {
            throw ArgumentError("sampling probabilities must lie in [0, 1]");
        }
        sum += v;
    }
    if (std::fabs(sum - static_cast<double>(n)) > kSumTol) {
        throw ArgumentError("sampling probabilities must sum to the budget n, got " +
                            std::to_string(sum) + " vs n = " + std::to_string(n));
    }
    if (n > p.size()) throw ArgumentError("budget exceeds population size");
}

constexpr double kForcedTol = 1e-9;

}  // namespace

GateSample sample_fixed_size(std::span<const double> p, std::size_t n, Rng& rng) {
    validate_sample_request(p, n);
    const std::size_t big_n = p.size();
    GateSample sample;
    sample.z.assign(big_n, 0);
    sample.p.assign(p.begin(), p.end());
    sample.n = n;

    std::vector<std::size_t> pool;
    std::size_t forced = 0;
    for (std::size_t i = 0; i < big_n; ++i) {
        if (p[i] >= 1.0 - kForcedTol) {
            sample.z[i] = 1;
            ++forced;
        } else if (p[i] > kForcedTol) {
            pool.push_back(i);
        }
    }
    if (forced > n) throw ArgumentError("more unit probabilities than the budget allows");
    const std::size_t budget = n - forced;

    // Brewer's draw-by-draw scheme on the interior units: at draw j with
    // already-selected mass a, unit k is picked with weight
    // p_k (m − a − p_k) / (m − a − p_k (m − j + 1)); the final draw reduces
    // to weight p_k.
    const double m = static_cast<double>(budget);
    double selected_mass = 0.0;
    std::vector<double> weights;
    for (std::size_t j = 1; j <= budget; ++j) {
        weights.assign(pool.size(), 0.0);
        double total = 0.0;
        const double remaining_draws = static_cast<double>(budget - j + 1);
        for (std::size_t idx = 0; idx < pool.size(); ++idx) {
            const double pk = p[pool[idx]];
            const double w =
                j == budget
                    ? pk
                    : pk * (m - selected_mass - pk) /
                          (m - selected_mass - pk * remaining_draws);
            weights[idx] = w;
            total += w;
        }
        const double u = rng.uniform() * total;
        double cumulative = 0.0;
        std::size_t chosen = pool.size() - 1;
        for (std::size_t idx = 0; idx < pool.size(); ++idx) {
            cumulative += weights[idx];
            if (u < cumulative) {
                chosen = idx;
                break;
            }
        }
        const std::size_t unit = pool[chosen];
        sample.z[unit] = 1;
        selected_mass += p[unit];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen));
    }
    return sample;
}

GateSample sample_systematic_pps(std::span<const double> p, std::size_t n, Rng& rng) {
    validate_sample_request(p, n);
    const std::size_t big_n = p.size();
    GateSample sample;
    sample.z.assign(big_n, 0);
    sample.p.assign(p.begin(), p.end());
    sample.n = n;

    std::vector<std::size_t> perm(big_n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = big_n; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.below(i)]);
    }

    // Renormalize so the walk ends exactly at n regardless of rounding.
    double sum = 0.0;
    for (double v : p) sum += v;
    const double scale = static_cast<double>(n) / sum;

    const double u = rng.uniform();
    double cursor = 0.0;
    for (std::size_t idx = 0; idx < big_n; ++idx) {
        const std::size_t unit = perm[idx];
        const double lo = cursor;
        const double hi =
            idx + 1 == big_n ? static_cast<double>(n) : cursor + p[unit] * scale;
        if (std::floor(hi - u) > std::floor(lo - u)) sample.z[unit] = 1;
        cursor = hi;
    }
    return sample;
}

double gate_forward(std::uint8_t z, double /*p*/) { return static_cast<double>(z); }

double gate_grad() { return 1.0; }

std::vector<std::size_t> select_top_n(std::span<const double> q, std::size_t n) {
    if (n > q.size()) throw ArgumentError("select_top_n: n exceeds value count");
    std::vector<std::size_t> order(q.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return q[a] > q[b]; });
    order.resize(n);
    std::sort(order.begin(), order.end());
    return order;
}

double l1_gate_loss(std::span<const double> alpha, double lambda) {
    if (lambda < 0.0) throw ArgumentError("l1_gate_loss: lambda must be non-negative");
    double total = 0.0;
    for (double a : alpha) total += 1.0 - a;
    return lambda * total;
}

ImportanceVector importance_from_alpha(std::span<const double> alpha, double temperature) {
    ImportanceVector importance;
    importance.temperature = temperature;
    importance.theta.resize(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        importance.theta[i] = temperature * logit(1.0 - alpha[i]);
    }
    return importance;
}

std::size_t budget_from_prune_rate(double rate, std::size_t block_count) {
    if (!(rate >= 0.0) || rate >= 1.0) {
        throw ArgumentError("prune rate must lie in [0, 1)");
    }
    const auto n = static_cast<std::size_t>(
        std::llround((1.0 - rate) * static_cast<double>(block_count)));
    return std::max<std::size_t>(1, std::min(n, block_count));
}

}  // namespace vdc
