#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

namespace fairfed {

// Flat model parameter vector. All arithmetic partners must share dim.
using ParamVector = Eigen::VectorXd;

enum class ModelFamily { LinearSoftmax, Mlp1Hidden };

struct ModelSpec {
    ModelFamily family = ModelFamily::LinearSoftmax;
    int input_dim = 0;
    int num_classes = 2;
    int hidden_dim = 0;  // Mlp1Hidden only
};

// Parameter dimension is a deterministic function of the spec.
// LinearSoftmax: (input_dim+1)*num_classes (bias folded in).
// Mlp1Hidden:    (input_dim+1)*hidden_dim + (hidden_dim+1)*num_classes.
int param_dim(const ModelSpec& spec);

struct Batch {
    Eigen::MatrixXd features;  // n x input_dim
    std::vector<int> labels;   // n entries in [0, num_classes)

    int size() const { return static_cast<int>(labels.size()); }
};

// Pre-softmax scores, n x num_classes. Deterministic.
Eigen::MatrixXd forward_logits(const ModelSpec& spec, const ParamVector& params,
                               const Batch& batch);

// Mean cross-entropy over the batch and its exact analytic gradient.
// Softmax is computed with row-max subtraction.
struct LossGrad {
    double loss;
    ParamVector grad;
};
LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Mean cross-entropy only (no gradient); cheaper for evaluation passes.
double batch_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Argmax class predictions.
std::vector<int> predict(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// params - lr*scale*grad. scale may be negative.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr, double scale);

// Coordinate-wise arithmetic mean, folded in ascending index order.
ParamVector average_params(const std::vector<ParamVector>& params);

// Gaussian init scaled by 1/sqrt(fan_in) for weight blocks, zero biases.
ParamVector init_params(const ModelSpec& spec, std::mt19937_64& rng);

}  // namespace fairfed
