#include "fairfed/federation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <thread>

#include "fairfed/errors.hpp"
#include "fairfed/rng.hpp"

namespace fairfed {

namespace {

constexpr std::uint64_t kInitTag = 0xfeed0001;
constexpr std::uint64_t kLocalTag = 0xfeed0002;

const Batch& eval_batch(const ClientDataset& ds, GapSplit split) {
    return split == GapSplit::Train ? ds.train : ds.validation;
}

void check_finite(const ParamVector& p, int client, int round) {
    if (!p.allFinite())
        throw TrainingError("non-finite parameters for client " + std::to_string(client) +
                            " at round " + std::to_string(round));
}

double q_power(double loss, double q) {
    if (q == 0.0) return 1.0;
    return std::pow(loss, q);
}

// Parallel map over clients; results folded by ascending index so the
// outcome is independent of worker scheduling.
template <typename Fn>
std::vector<ClientResult> map_clients(int num_clients, Fn&& fn) {
    std::vector<ClientResult> results(static_cast<std::size_t>(num_clients));
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    if (workers == 1 || num_clients == 1) {
        for (int k = 0; k < num_clients; ++k) results[static_cast<std::size_t>(k)] = fn(k);
        return results;
    }
    std::vector<std::future<ClientResult>> futures;
    futures.reserve(static_cast<std::size_t>(num_clients));
    for (int k = 0; k < num_clients; ++k)
        futures.push_back(std::async(std::launch::async, fn, k));
    for (int k = 0; k < num_clients; ++k)
        results[static_cast<std::size_t>(k)] = futures[static_cast<std::size_t>(k)].get();
    return results;
}

}  // namespace

ParamVector initial_params_for_seed(const ModelSpec& spec, std::uint64_t seed) {
    auto rng = make_rng(seed, kInitTag);
    return init_params(spec, rng);
}

Eigen::VectorXd estimate_local_optima(const std::vector<ClientDataset>& datasets,
                                      const ModelSpec& spec, const LocalOptimaParams& params,
                                      GapSplit eval_split, const ParamVector& init) {
    if (params.max_epochs < 1 || params.window < 1 || params.lr <= 0.0)
        throw ConfigError("local optima estimation needs max_epochs >= 1, window >= 1, lr > 0");
    Eigen::VectorXd optima(static_cast<Eigen::Index>(datasets.size()));
    for (std::size_t k = 0; k < datasets.size(); ++k) {
        const ClientDataset& ds = datasets[k];
        if (ds.train.size() < 1 || ds.validation.size() < 1)
            throw ConfigError("client " + std::to_string(k) + " has an empty train or val split");
        ParamVector theta = init;
        std::vector<double> history;
        for (int epoch = 0; epoch < params.max_epochs; ++epoch) {
            const LossGrad lg = loss_and_grad(spec, theta, ds.train);
            if (!std::isfinite(lg.loss))
                throw TrainingError("diverged while estimating the local optimum of client " +
                                    std::to_string(k));
            history.push_back(lg.loss);
            theta = sgd_step(theta, lg.grad, params.lr, 1.0);
            check_finite(theta, static_cast<int>(k), epoch);
            if (static_cast<int>(history.size()) >= params.window + 1) {
                const double prev = history[history.size() - 1 - params.window];
                const double rel = (prev - history.back()) / std::max(std::abs(prev), 1e-12);
                if (!(rel >= params.tol)) break;
            }
        }
        optima[static_cast<Eigen::Index>(k)] = batch_loss(spec, theta, eval_batch(ds, eval_split));
    }
    return optima;
}

ClientResult client_update(int client, const ParamVector& global_params, double weight,
                           const ExperimentConfig& config, const ClientDataset& dataset,
                           double optimal_loss, int round) {
    if (!std::isfinite(weight))
        throw TrainingError("non-finite weight for client " + std::to_string(client));

    ClientResult out;
    // Gap on the arrival model, before any local step.
    out.observed_loss = batch_loss(config.model, global_params,
                                   eval_batch(dataset, config.gap_eval_split));
    out.gap = out.observed_loss - optimal_loss;

    ParamVector theta = global_params;
    const int n = dataset.train.size();
    auto rng = make_rng(config.seed, kLocalTag,
                        derive_seed(static_cast<std::uint64_t>(round), 0,
                                    static_cast<std::uint64_t>(client)));
    for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
        if (config.batch_size == kFullBatch || config.batch_size >= n) {
            const LossGrad lg = loss_and_grad(config.model, theta, dataset.train);
            theta = sgd_step(theta, lg.grad, config.eta, weight);
        } else {
            std::vector<int> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            for (int start = 0; start < n; start += config.batch_size) {
                const int stop = std::min(start + config.batch_size, n);
                Batch mini;
                mini.features.resize(stop - start, dataset.train.features.cols());
                mini.labels.reserve(static_cast<std::size_t>(stop - start));
                for (int i = start; i < stop; ++i) {
                    mini.features.row(i - start) =
                        dataset.train.features.row(order[static_cast<std::size_t>(i)]);
                    mini.labels.push_back(
                        dataset.train.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
                }
                const LossGrad lg = loss_and_grad(config.model, theta, mini);
                theta = sgd_step(theta, lg.grad, config.eta, weight);
            }
        }
        check_finite(theta, client, round);
    }
    out.params = std::move(theta);
    return out;
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<double> sorted(v.data(), v.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cumsum = 0.0, tau = 0.0;
    int rho = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        cumsum += sorted[static_cast<std::size_t>(i)];
        const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
        if (sorted[static_cast<std::size_t>(i)] - t > 0.0) {
            rho = static_cast<int>(i + 1);
            tau = t;
        }
    }
    (void)rho;
    return (v.array() - tau).max(0.0);
}

namespace {

TrainingTrace run_generic(const ExperimentConfig& config,
                          const std::vector<ClientDataset>& datasets,
                          const Eigen::VectorXd& optimal_losses) {
    const int num_clients = static_cast<int>(datasets.size());
    if (num_clients < 1)
        throw ConfigError("no client datasets");
    if (config.num_clients != 0 && config.num_clients != num_clients)
        throw ConfigError("config.num_clients disagrees with the dataset count");
    if (optimal_losses.size() != num_clients)
        throw ConfigError("optimal loss vector does not match the client count");
    if (config.rounds < 0 || config.local_epochs < 1 || config.eta <= 0.0)
        throw ConfigError("need rounds >= 0, local_epochs >= 1, eta > 0");
    if (config.algorithm == Algorithm::Eagle && num_clients < 2)
        throw ConfigError("EAGLE weights are undefined for a single client");
    if (config.algorithm == Algorithm::QFfl && config.q < 0.0)
        throw ConfigError("q must be nonnegative");
    if (config.algorithm == Algorithm::Afl && config.afl_step < 0.0)
        throw ConfigError("afl_step must be nonnegative");
    if (config.algorithm == Algorithm::Eagle && config.lambda < 0.0)
        throw ConfigError("lambda must be nonnegative");

    ParamVector theta = initial_params_for_seed(config.model, config.seed);

    TrainingTrace trace;
    trace.optimal_losses = optimal_losses;

    Eigen::VectorXd applied = Eigen::VectorXd::Ones(num_clients);
    Eigen::VectorXd mixture = Eigen::VectorXd::Constant(num_clients, 1.0 / num_clients);
    GapVector prev_gaps;

    for (int t = 0; t < config.rounds; ++t) {
        switch (config.algorithm) {
            case Algorithm::FedAvg:
                applied.setOnes();
                break;
            case Algorithm::Eagle:
                if (t == 0) {
                    applied.setOnes();
                } else {
                    const WeightVector raw = eagle_weights(prev_gaps, config.lambda);
                    applied = normalize_weights(raw, config.normalization).weights;
                }
                break;
            case Algorithm::QFfl: {
                Eigen::VectorXd losses(num_clients);
                for (int k = 0; k < num_clients; ++k)
                    losses[k] = batch_loss(config.model, theta,
                                           eval_batch(datasets[static_cast<std::size_t>(k)],
                                                      config.gap_eval_split));
                Eigen::VectorXd powered(num_clients);
                for (int k = 0; k < num_clients; ++k) powered[k] = q_power(losses[k], config.q);
                const double mean = powered.mean();
                applied = mean > 0.0 ? (powered / mean).eval() : Eigen::VectorXd::Ones(num_clients);
                break;
            }
            case Algorithm::Afl:
                applied = static_cast<double>(num_clients) * mixture;
                break;
        }

        auto results = map_clients(num_clients, [&](int k) {
            return client_update(k, theta, applied[k], config, datasets[static_cast<std::size_t>(k)],
                                 optimal_losses[k], t);
        });

        GapVector gaps;
        gaps.optimal_losses = optimal_losses;
        gaps.gaps.resize(num_clients);
        Eigen::VectorXd observed(num_clients);
        for (int k = 0; k < num_clients; ++k) {
            gaps.gaps[k] = results[static_cast<std::size_t>(k)].gap;
            observed[k] = results[static_cast<std::size_t>(k)].observed_loss;
        }
        if (num_clients >= 2)
            trace.gamma = gamma_update(trace.gamma, gaps);

        std::vector<double> val_losses(static_cast<std::size_t>(num_clients));
        double acc_sum = 0.0;
        for (int k = 0; k < num_clients; ++k) {
            const ClientDataset& ds = datasets[static_cast<std::size_t>(k)];
            val_losses[static_cast<std::size_t>(k)] =
                config.gap_eval_split == GapSplit::Validation
                    ? observed[k]
                    : batch_loss(config.model, theta, ds.validation);
            acc_sum += balanced_accuracy(predict(config.model, theta, ds.test), ds.test.labels,
                                         config.model.num_classes);
        }
        MetricsRecord rec = summarize_round(
            t, val_losses, {gaps.gaps.data(), gaps.gaps.data() + num_clients},
            {applied.data(), applied.data() + num_clients}, acc_sum / num_clients, config.lambda,
            trace.gamma.value);
        if (config.gap_eval_split == GapSplit::Train && num_clients >= 2)
            rec.objective_f = objective_value(observed, gaps, config.lambda);

        if (config.record_grad_norm && num_clients >= 2) {
            std::vector<ParamVector> grads;
            grads.reserve(static_cast<std::size_t>(num_clients));
            for (int k = 0; k < num_clients; ++k)
                grads.push_back(
                    loss_and_grad(config.model, theta, datasets[static_cast<std::size_t>(k)].train)
                        .grad);
            rec.grad_f_norm_sq = grad_objective(grads, gaps, config.lambda).squaredNorm();
        }
        trace.records.push_back(std::move(rec));

        // Unnormalized weights from this round's gaps; applied next round by EAGLE.
        if (num_clients >= 2) {
            trace.raw_weights.push_back(eagle_weights(gaps, config.lambda).weights);
        } else {
            trace.raw_weights.push_back(Eigen::VectorXd::Ones(1));
        }

        if (config.algorithm == Algorithm::Afl)
            mixture = project_simplex(mixture + config.afl_step * observed);

        std::vector<ParamVector> client_params;
        client_params.reserve(static_cast<std::size_t>(num_clients));
        for (int k = 0; k < num_clients; ++k)
            client_params.push_back(std::move(results[static_cast<std::size_t>(k)].params));
        theta = average_params(client_params);
        prev_gaps = std::move(gaps);
    }

    trace.final_params = std::move(theta);
    return trace;
}

void require_algorithm(const ExperimentConfig& config, Algorithm expected, const char* name) {
    if (config.algorithm != expected)
        throw ConfigError(std::string("config.algorithm is not ") + name);
}

}  // namespace

TrainingTrace run_fedavg(const ExperimentConfig& config, const std::vector<ClientDataset>& datasets,
                         const Eigen::VectorXd& optimal_losses) {
    require_algorithm(config, Algorithm::FedAvg, "FedAvg");
    return run_generic(config, datasets, optimal_losses);
}

TrainingTrace run_eagle(const ExperimentConfig& config, const std::vector<ClientDataset>& datasets,
                        const Eigen::VectorXd& optimal_losses) {
    require_algorithm(config, Algorithm::Eagle, "Eagle");
    return run_generic(config, datasets, optimal_losses);
}

TrainingTrace run_qffl(const ExperimentConfig& config, const std::vector<ClientDataset>& datasets,
                       const Eigen::VectorXd& optimal_losses) {
    require_algorithm(config, Algorithm::QFfl, "QFfl");
    return run_generic(config, datasets, optimal_losses);
}

TrainingTrace run_afl(const ExperimentConfig& config, const std::vector<ClientDataset>& datasets,
                      const Eigen::VectorXd& optimal_losses) {
    require_algorithm(config, Algorithm::Afl, "Afl");
    return run_generic(config, datasets, optimal_losses);
}

TrainingTrace run_algorithm(const ExperimentConfig& config,
                            const std::vector<ClientDataset>& datasets,
                            const Eigen::VectorXd& optimal_losses) {
    return run_generic(config, datasets, optimal_losses);
}

}  // namespace fairfed
