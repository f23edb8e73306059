#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace fairfed {

struct MetricsRecord {
    int round = 0;
    std::vector<double> client_val_loss;
    std::vector<double> client_gap;
    std::vector<double> client_weight;  // weights actually applied this round
    double gap_max = 0.0;
    double gap_min = 0.0;
    double gap_variance = 0.0;
    double balanced_accuracy = 0.0;
    double objective_f = 0.0;
    double gamma_estimate = 0.0;
    std::optional<double> grad_f_norm_sq;  // diagnostic; present when recorded
};

// Mean per-class recall over the classes present in `labels`.
double balanced_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                         int num_classes);

// Assemble one round's record; all per-client vectors must cover every
// client. Gap statistics and the objective use the fairness definitions.
MetricsRecord summarize_round(int round, const std::vector<double>& val_losses,
                              const std::vector<double>& gaps,
                              const std::vector<double>& applied_weights,
                              double balanced_acc, double lambda, double gamma);

// CSV: header + one row per round, 10 significant digits, per-client columns
// suffixed _k. JSON: {"config": <echo>, "records": [...]}.
struct TrainingTrace;  // federation.hpp
std::string emit_csv(const TrainingTrace& trace);
std::string emit_json(const TrainingTrace& trace, const std::string& config_echo_json);

}  // namespace fairfed
