#include "fairfed/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "fairfed/errors.hpp"
#include "fairfed/fairness.hpp"
#include "fairfed/federation.hpp"

#include <nlohmann/json.hpp>

namespace fairfed {

namespace {

// 10 significant digits so CSV diffs are stable across platforms.
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

double balanced_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                         int num_classes) {
    if (labels.empty() || predictions.size() != labels.size())
        throw UsageError("balanced_accuracy needs non-empty, aligned predictions and labels");
    std::vector<long> correct(static_cast<std::size_t>(num_classes), 0);
    std::vector<long> total(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= num_classes)
            throw UsageError("label " + std::to_string(y) + " out of range");
        total[static_cast<std::size_t>(y)]++;
        if (predictions[i] == y) correct[static_cast<std::size_t>(y)]++;
    }
    double recall_sum = 0.0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        if (total[static_cast<std::size_t>(c)] == 0) continue;
        recall_sum += static_cast<double>(correct[static_cast<std::size_t>(c)]) /
                      static_cast<double>(total[static_cast<std::size_t>(c)]);
        present++;
    }
    return recall_sum / present;
}

MetricsRecord summarize_round(int round, const std::vector<double>& val_losses,
                              const std::vector<double>& gaps,
                              const std::vector<double>& applied_weights,
                              double balanced_acc, double lambda, double gamma) {
    const std::size_t k = gaps.size();
    if (k == 0 || val_losses.size() != k || applied_weights.size() != k)
        throw UsageError("summarize_round: missing client evaluations");
    MetricsRecord rec;
    rec.round = round;
    rec.client_val_loss = val_losses;
    rec.client_gap = gaps;
    rec.client_weight = applied_weights;
    rec.balanced_accuracy = balanced_acc;
    rec.gamma_estimate = gamma;
    if (k >= 2) {
        GapVector gv;
        gv.gaps = Eigen::Map<const Eigen::VectorXd>(gaps.data(), static_cast<Eigen::Index>(k));
        gv.optimal_losses = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
        rec.gap_max = gv.gaps.maxCoeff();
        rec.gap_min = gv.gaps.minCoeff();
        rec.gap_variance = gap_variance(gv);
        rec.objective_f = objective_value(
            Eigen::Map<const Eigen::VectorXd>(val_losses.data(), static_cast<Eigen::Index>(k)),
            gv, lambda);
    } else {
        rec.gap_max = rec.gap_min = gaps[0];
        rec.objective_f = val_losses[0];
    }
    return rec;
}

std::string emit_csv(const TrainingTrace& trace) {
    if (trace.records.empty())
        throw UsageError("emit_csv: empty trace");
    const std::size_t k = trace.records.front().client_gap.size();

    std::ostringstream out;
    out << "round,gap_max,gap_min,gap_variance,balanced_accuracy,objective_f,"
           "gamma_estimate,grad_f_norm_sq";
    for (std::size_t i = 0; i < k; ++i) out << ",val_loss_" << i;
    for (std::size_t i = 0; i < k; ++i) out << ",gap_" << i;
    for (std::size_t i = 0; i < k; ++i) out << ",weight_" << i;
    out << "\n";

    for (const MetricsRecord& r : trace.records) {
        out << r.round << ',' << fmt(r.gap_max) << ',' << fmt(r.gap_min) << ','
            << fmt(r.gap_variance) << ',' << fmt(r.balanced_accuracy) << ','
            << fmt(r.objective_f) << ',' << fmt(r.gamma_estimate) << ',';
        if (r.grad_f_norm_sq) out << fmt(*r.grad_f_norm_sq);
        for (double v : r.client_val_loss) out << ',' << fmt(v);
        for (double v : r.client_gap) out << ',' << fmt(v);
        for (double v : r.client_weight) out << ',' << fmt(v);
        out << "\n";
    }
    return out.str();
}

std::string emit_json(const TrainingTrace& trace, const std::string& config_echo_json) {
    if (trace.records.empty())
        throw UsageError("emit_json: empty trace");
    nlohmann::json j;
    j["config"] = config_echo_json.empty() ? nlohmann::json::object()
                                           : nlohmann::json::parse(config_echo_json);
    j["gamma_estimate"] = trace.gamma.value;
    j["gamma_observations"] = trace.gamma.num_observations;
    j["optimal_losses"] = std::vector<double>(
        trace.optimal_losses.data(), trace.optimal_losses.data() + trace.optimal_losses.size());
    nlohmann::json records = nlohmann::json::array();
    for (const MetricsRecord& r : trace.records) {
        nlohmann::json rec{{"round", r.round},
                           {"gap_max", r.gap_max},
                           {"gap_min", r.gap_min},
                           {"gap_variance", r.gap_variance},
                           {"balanced_accuracy", r.balanced_accuracy},
                           {"objective_f", r.objective_f},
                           {"gamma_estimate", r.gamma_estimate},
                           {"val_loss", r.client_val_loss},
                           {"gap", r.client_gap},
                           {"weight", r.client_weight}};
        if (r.grad_f_norm_sq) rec["grad_f_norm_sq"] = *r.grad_f_norm_sq;
        records.push_back(std::move(rec));
    }
    j["records"] = std::move(records);
    return j.dump(2) + "\n";
}

}  // namespace fairfed
