#include "fairfed/fairness.hpp"

#include <cmath>

#include "fairfed/errors.hpp"

namespace fairfed {

namespace {

void require_k2(int k, const char* op) {
    if (k < 2)
        throw ConfigError(std::string(op) + " requires at least 2 clients, got " +
                          std::to_string(k));
}

}  // namespace

WeightVector eagle_weights(const GapVector& gaps, double lambda) {
    const int k = gaps.size();
    require_k2(k, "eagle_weights");
    if (lambda < 0.0)
        throw ConfigError("lambda must be nonnegative");
    const double total = gaps.gaps.sum();
    const double coef = 4.0 * lambda / static_cast<double>(k - 1);
    WeightVector w;
    w.lambda = lambda;
    w.weights = 1.0 + coef * (static_cast<double>(k) * gaps.gaps.array() - total);
    return w;
}

WeightVector normalize_weights(const WeightVector& w, NormMode mode) {
    WeightVector out = w;
    out.normalization = mode;
    if (mode == NormMode::None)
        return out;
    const double norm = w.weights.norm();
    if (norm == 0.0)
        throw TrainingError("cannot normalize an all-zero weight vector");
    out.weights = w.weights / norm;
    if (mode == NormMode::L2SqrtKNorm)
        out.weights *= std::sqrt(static_cast<double>(w.size()));
    return out;
}

double pairwise_penalty(const GapVector& gaps, double lambda) {
    const int k = gaps.size();
    require_k2(k, "pairwise_penalty");
    // Sum over ordered pairs of squared differences, via the variance identity.
    const double mean = gaps.gaps.mean();
    const double ss = (gaps.gaps.array() - mean).square().sum();
    return lambda / (static_cast<double>(k) * (k - 1)) * 2.0 * k * ss;
}

double gap_variance(const GapVector& gaps) {
    const int k = gaps.size();
    require_k2(k, "gap_variance");
    const double mean = gaps.gaps.mean();
    return (gaps.gaps.array() - mean).square().sum() / static_cast<double>(k - 1);
}

double objective_value(const Eigen::VectorXd& losses, const GapVector& gaps, double lambda) {
    if (losses.size() != gaps.gaps.size())
        throw ConfigError("objective_value: losses and gaps are misaligned");
    return losses.mean() + pairwise_penalty(gaps, lambda);
}

ParamVector grad_objective(const std::vector<ParamVector>& client_grads, const GapVector& gaps,
                           double lambda) {
    const int k = gaps.size();
    if (static_cast<int>(client_grads.size()) != k)
        throw ConfigError("grad_objective: gradient count does not match gap count");
    const WeightVector w = eagle_weights(gaps, lambda);
    ParamVector acc = w.weights[0] * client_grads[0];
    for (int i = 1; i < k; ++i) {
        if (client_grads[static_cast<std::size_t>(i)].size() != acc.size())
            throw ConfigError("grad_objective: gradient dim mismatch");
        acc += w.weights[i] * client_grads[static_cast<std::size_t>(i)];
    }
    return acc / static_cast<double>(k);
}

GammaEstimate gamma_update(const GammaEstimate& est, const GapVector& gaps) {
    require_k2(gaps.size(), "gamma_update");
    const double spread = gaps.gaps.maxCoeff() - gaps.gaps.minCoeff();
    return {std::max(est.value, spread), est.num_observations + 1};
}

}  // namespace fairfed
