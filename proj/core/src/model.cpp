#include "fairfed/model.hpp"

#include <cmath>

#include "fairfed/errors.hpp"

namespace fairfed {

namespace {

void check_spec(const ModelSpec& spec) {
    if (spec.input_dim <= 0 || spec.num_classes < 2)
        throw ConfigError("model spec requires input_dim > 0 and num_classes >= 2");
    if (spec.family == ModelFamily::Mlp1Hidden && spec.hidden_dim <= 0)
        throw ConfigError("Mlp1Hidden requires hidden_dim > 0");
}

void check_compat(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    check_spec(spec);
    if (params.size() != param_dim(spec))
        throw ConfigError("parameter dim " + std::to_string(params.size()) +
                          " does not match spec dim " + std::to_string(param_dim(spec)));
    if (batch.features.rows() != static_cast<Eigen::Index>(batch.labels.size()) ||
        batch.features.rows() < 1)
        throw ConfigError("batch feature/label counts disagree or batch is empty");
    if (batch.features.cols() != spec.input_dim)
        throw ConfigError("batch feature dim " + std::to_string(batch.features.cols()) +
                          " does not match spec input_dim " + std::to_string(spec.input_dim));
    for (int y : batch.labels)
        if (y < 0 || y >= spec.num_classes)
            throw ConfigError("label " + std::to_string(y) + " out of range");
}

// Parameter layout (column-major weight blocks, then biases):
//   LinearSoftmax: [W (d x C)] [b (C)]
//   Mlp1Hidden:    [W1 (d x h)] [b1 (h)] [W2 (h x C)] [b2 (C)]
struct LinearView {
    Eigen::Map<const Eigen::MatrixXd> w;
    Eigen::Map<const Eigen::VectorXd> b;
};

LinearView linear_view(const ModelSpec& spec, const ParamVector& p) {
    const int d = spec.input_dim, c = spec.num_classes;
    return {Eigen::Map<const Eigen::MatrixXd>(p.data(), d, c),
            Eigen::Map<const Eigen::VectorXd>(p.data() + d * c, c)};
}

struct MlpView {
    Eigen::Map<const Eigen::MatrixXd> w1;
    Eigen::Map<const Eigen::VectorXd> b1;
    Eigen::Map<const Eigen::MatrixXd> w2;
    Eigen::Map<const Eigen::VectorXd> b2;
};

MlpView mlp_view(const ModelSpec& spec, const ParamVector& p) {
    const int d = spec.input_dim, h = spec.hidden_dim, c = spec.num_classes;
    const double* q = p.data();
    return {Eigen::Map<const Eigen::MatrixXd>(q, d, h),
            Eigen::Map<const Eigen::VectorXd>(q + d * h, h),
            Eigen::Map<const Eigen::MatrixXd>(q + d * h + h, h, c),
            Eigen::Map<const Eigen::VectorXd>(q + d * h + h + h * c, c)};
}

// Row-stable softmax probabilities plus mean cross-entropy loss.
double softmax_xent(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                    Eigen::MatrixXd& probs) {
    const Eigen::Index n = logits.rows();
    probs = logits;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = probs.row(i).maxCoeff();
        probs.row(i) = (probs.row(i).array() - m).exp();
        const double z = probs.row(i).sum();
        probs.row(i) /= z;
        loss -= std::log(probs(i, labels[static_cast<std::size_t>(i)]));
    }
    return loss / static_cast<double>(n);
}

}  // namespace

int param_dim(const ModelSpec& spec) {
    check_spec(spec);
    if (spec.family == ModelFamily::LinearSoftmax)
        return (spec.input_dim + 1) * spec.num_classes;
    return (spec.input_dim + 1) * spec.hidden_dim + (spec.hidden_dim + 1) * spec.num_classes;
}

Eigen::MatrixXd forward_logits(const ModelSpec& spec, const ParamVector& params,
                               const Batch& batch) {
    check_compat(spec, params, batch);
    if (spec.family == ModelFamily::LinearSoftmax) {
        const auto v = linear_view(spec, params);
        return (batch.features * v.w).rowwise() + v.b.transpose();
    }
    const auto v = mlp_view(spec, params);
    Eigen::MatrixXd hidden =
        ((batch.features * v.w1).rowwise() + v.b1.transpose()).cwiseMax(0.0);
    return (hidden * v.w2).rowwise() + v.b2.transpose();
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    check_compat(spec, params, batch);
    const Eigen::Index n = batch.features.rows();
    LossGrad out;
    out.grad = ParamVector::Zero(params.size());

    if (spec.family == ModelFamily::LinearSoftmax) {
        const auto v = linear_view(spec, params);
        Eigen::MatrixXd logits = (batch.features * v.w).rowwise() + v.b.transpose();
        Eigen::MatrixXd dlogits;
        out.loss = softmax_xent(logits, batch.labels, dlogits);
        for (Eigen::Index i = 0; i < n; ++i)
            dlogits(i, batch.labels[static_cast<std::size_t>(i)]) -= 1.0;
        dlogits /= static_cast<double>(n);

        const int d = spec.input_dim, c = spec.num_classes;
        Eigen::Map<Eigen::MatrixXd>(out.grad.data(), d, c) =
            batch.features.transpose() * dlogits;
        Eigen::Map<Eigen::VectorXd>(out.grad.data() + d * c, c) =
            dlogits.colwise().sum().transpose();
        return out;
    }

    const auto v = mlp_view(spec, params);
    Eigen::MatrixXd pre = (batch.features * v.w1).rowwise() + v.b1.transpose();
    Eigen::MatrixXd hidden = pre.cwiseMax(0.0);
    Eigen::MatrixXd logits = (hidden * v.w2).rowwise() + v.b2.transpose();
    Eigen::MatrixXd dlogits;
    out.loss = softmax_xent(logits, batch.labels, dlogits);
    for (Eigen::Index i = 0; i < n; ++i)
        dlogits(i, batch.labels[static_cast<std::size_t>(i)]) -= 1.0;
    dlogits /= static_cast<double>(n);

    const int d = spec.input_dim, h = spec.hidden_dim, c = spec.num_classes;
    double* g = out.grad.data();
    Eigen::Map<Eigen::MatrixXd>(g + d * h + h, h, c) = hidden.transpose() * dlogits;
    Eigen::Map<Eigen::VectorXd>(g + d * h + h + h * c, c) =
        dlogits.colwise().sum().transpose();
    Eigen::MatrixXd dhidden = dlogits * v.w2.transpose();
    dhidden = (pre.array() > 0.0).select(dhidden, 0.0);
    Eigen::Map<Eigen::MatrixXd>(g, d, h) = batch.features.transpose() * dhidden;
    Eigen::Map<Eigen::VectorXd>(g + d * h, h) = dhidden.colwise().sum().transpose();
    return out;
}

double batch_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    Eigen::MatrixXd logits = forward_logits(spec, params, batch);
    Eigen::MatrixXd probs;
    return softmax_xent(logits, batch.labels, probs);
}

std::vector<int> predict(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    Eigen::MatrixXd logits = forward_logits(spec, params, batch);
    std::vector<int> preds(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best;
        logits.row(i).maxCoeff(&best);
        preds[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return preds;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr, double scale) {
    if (params.size() != grad.size())
        throw ConfigError("sgd_step dim mismatch");
    return params - (lr * scale) * grad;
}

ParamVector average_params(const std::vector<ParamVector>& params) {
    if (params.empty())
        throw UsageError("average_params requires a non-empty list");
    ParamVector sum = params[0];
    for (std::size_t k = 1; k < params.size(); ++k) {
        if (params[k].size() != sum.size())
            throw ConfigError("average_params dim mismatch");
        sum += params[k];
    }
    return sum / static_cast<double>(params.size());
}

ParamVector init_params(const ModelSpec& spec, std::mt19937_64& rng) {
    const int dim = param_dim(spec);
    ParamVector p = ParamVector::Zero(dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill_block = [&](int offset, int rows, int cols) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
        for (int i = 0; i < rows * cols; ++i) p[offset + i] = scale * normal(rng);
    };
    if (spec.family == ModelFamily::LinearSoftmax) {
        fill_block(0, spec.input_dim, spec.num_classes);
    } else {
        const int d = spec.input_dim, h = spec.hidden_dim, c = spec.num_classes;
        fill_block(0, d, h);
        fill_block(d * h + h, h, c);
    }
    return p;
}

}  // namespace fairfed
