#pragma once

#include <cstdint>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/fairness.hpp"
#include "fairfed/metrics.hpp"
#include "fairfed/model.hpp"

namespace fairfed {

enum class Algorithm { FedAvg, Eagle, QFfl, Afl };
enum class GapSplit { Train, Validation };

// Full-batch local steps when batch_size == 0.
constexpr int kFullBatch = 0;

struct LocalOptimaParams {
    int max_epochs = 2000;
    int window = 20;         // sliding window W for the flattening test
    double tol = 1e-5;       // relative improvement threshold over the window
    double lr = 0.1;
};

struct ExperimentConfig {
    Algorithm algorithm = Algorithm::FedAvg;
    int num_clients = 0;     // K; derived from the datasets when 0
    int rounds = 300;        // T
    int local_epochs = 1;    // I
    double eta = 0.1;
    int batch_size = kFullBatch;
    double lambda = 0.0;     // Eagle
    double q = 0.0;          // QFfl
    double afl_step = 0.1;   // Afl
    NormMode normalization = NormMode::L2UnitNorm;
    GapSplit gap_eval_split = GapSplit::Validation;
    std::uint64_t seed = 0;
    ModelSpec model;
    LocalOptimaParams local_optima;
    bool record_grad_norm = false;  // per-round ||grad F||^2 diagnostic
};

struct RoundState {
    int round = 0;
    ParamVector global_params;
    GapVector gaps;
    WeightVector weights;       // weights applied during the round
    Eigen::VectorXd afl_mixture;  // Afl only; on the K-simplex
};

struct TrainingTrace {
    std::vector<MetricsRecord> records;
    std::vector<Eigen::VectorXd> raw_weights;  // unnormalized, per round
    ParamVector final_params;
    GammaEstimate gamma;
    Eigen::VectorXd optimal_losses;  // L*_k used throughout the run
};

// Initialization phase: full-batch descent per client from the shared init,
// stopping at max_epochs or when the train-loss curve flattens. Returns the
// loss on the configured gap split at the stopping point.
Eigen::VectorXd estimate_local_optima(const std::vector<ClientDataset>& datasets,
                                      const ModelSpec& spec, const LocalOptimaParams& params,
                                      GapSplit eval_split, const ParamVector& init);

struct ClientResult {
    ParamVector params;
    double gap = 0.0;
    double observed_loss = 0.0;  // loss on the gap split at the arrival model
};

// Gap evaluated on the arrival model before any local step, then
// local_epochs passes of minibatch SGD with per-step scale `weight`.
ClientResult client_update(int client, const ParamVector& global_params, double weight,
                           const ExperimentConfig& config, const ClientDataset& dataset,
                           double optimal_loss, int round);

TrainingTrace run_fedavg(const ExperimentConfig& config, const std::vector<ClientDataset>& datasets,
                         const Eigen::VectorXd& optimal_losses);
TrainingTrace run_eagle(const ExperimentConfig& config, const std::vector<ClientDataset>& datasets,
                        const Eigen::VectorXd& optimal_losses);
TrainingTrace run_qffl(const ExperimentConfig& config, const std::vector<ClientDataset>& datasets,
                       const Eigen::VectorXd& optimal_losses);
TrainingTrace run_afl(const ExperimentConfig& config, const std::vector<ClientDataset>& datasets,
                      const Eigen::VectorXd& optimal_losses);

// Dispatch on config.algorithm.
TrainingTrace run_algorithm(const ExperimentConfig& config,
                            const std::vector<ClientDataset>& datasets,
                            const Eigen::VectorXd& optimal_losses);

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

// The shared per-seed initialization used by both the local-optimum phase
// and the federated drivers.
ParamVector initial_params_for_seed(const ModelSpec& spec, std::uint64_t seed);

}  // namespace fairfed
