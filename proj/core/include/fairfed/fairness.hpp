#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fairfed/model.hpp"

namespace fairfed {

// Per-client loss gaps r_k = observed_loss_k - optimal_loss_k. Gaps may be
// negative when a federated model beats a client's local optimum.
struct GapVector {
    Eigen::VectorXd gaps;
    Eigen::VectorXd optimal_losses;

    int size() const { return static_cast<int>(gaps.size()); }
};

enum class NormMode { None, L2UnitNorm, L2SqrtKNorm };

struct WeightVector {
    Eigen::VectorXd weights;
    double lambda = 0.0;
    NormMode normalization = NormMode::None;

    int size() const { return static_cast<int>(weights.size()); }
};

// Running lower-bound estimate of the worst-case pairwise gap spread over
// the iterates actually visited.
struct GammaEstimate {
    double value = 0.0;
    long num_observations = 0;
};

// Unnormalized per-client weights w_k = 1 + (4*lambda/(K-1)) * (K*r_k - sum(r)).
// The mean of the returned weights is 1 in exact arithmetic.
WeightVector eagle_weights(const GapVector& gaps, double lambda);

// None -> identity; L2UnitNorm -> w/||w||; L2SqrtKNorm -> sqrt(K)*w/||w||
// (uniform weights map to themselves). Signs and ratios preserved.
WeightVector normalize_weights(const WeightVector& w, NormMode mode);

// (lambda/(K*(K-1))) * sum over ordered pairs k != k' of (r_k - r_k')^2.
// Equals 2*lambda*gap_variance(gaps).
double pairwise_penalty(const GapVector& gaps, double lambda);

// Sample variance with denominator K-1.
double gap_variance(const GapVector& gaps);

// mean(losses) + pairwise_penalty(gaps, lambda).
double objective_value(const Eigen::VectorXd& losses, const GapVector& gaps, double lambda);

// (1/K) sum over k of w_k * grad_k with unnormalized weights. Diagnostic
// gradient of the regularized objective; the training loop uses the
// fixed-weight proxy instead.
ParamVector grad_objective(const std::vector<ParamVector>& client_grads, const GapVector& gaps,
                           double lambda);

// value <- max(value, max pairwise |gap spread|); monotone non-decreasing.
GammaEstimate gamma_update(const GammaEstimate& est, const GapVector& gaps);

}  // namespace fairfed
