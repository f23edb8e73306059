#include <benchmark/benchmark.h>

#include <random>

#include "fairfed/data.hpp"
#include "fairfed/fairness.hpp"
#include "fairfed/federation.hpp"
#include "fairfed/model.hpp"
#include "fairfed/rng.hpp"

namespace {

using namespace fairfed;

Batch random_batch(int n, int dim, int classes, std::uint64_t seed) {
    auto rng = make_rng(seed, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, classes - 1);
    Batch b;
    b.features.resize(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) b.features(i, j) = gauss(rng);
    b.labels.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) b.labels.push_back(label(rng));
    return b;
}

// Softmax loss + gradient at image-corpus scale (one client, one round).
void BM_LossAndGrad(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const ModelSpec spec{ModelFamily::LinearSoftmax, 784, 62, 0};
    const Batch batch = random_batch(n, spec.input_dim, spec.num_classes, 1);
    auto rng = make_rng(1, 1);
    const ParamVector theta = init_params(spec, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_and_grad(spec, theta, batch));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_LossAndGrad)->Arg(200)->Arg(1400)->Unit(benchmark::kMillisecond);

// One full federated round on the built-in synthetic task.
void BM_SyntheticRound(benchmark::State& state) {
    const auto data = gen_synthetic(SyntheticSpec{}, 0);
    ExperimentConfig config;
    config.algorithm = Algorithm::Eagle;
    config.lambda = 2.0;
    config.rounds = 1;
    config.model = {ModelFamily::LinearSoftmax, 2, 2, 0};
    const Eigen::VectorXd optima = Eigen::VectorXd::Constant(3, 0.1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_eagle(config, data, optima));
    }
}
BENCHMARK(BM_SyntheticRound)->Unit(benchmark::kMicrosecond);

// Weight computation alone, across client counts.
void BM_EagleWeights(benchmark::State& state) {
    const int K = static_cast<int>(state.range(0));
    auto rng = make_rng(2, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    GapVector gaps;
    gaps.gaps.resize(K);
    gaps.optimal_losses = Eigen::VectorXd::Zero(K);
    for (int k = 0; k < K; ++k) gaps.gaps[k] = gauss(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(eagle_weights(gaps, 1.0));
    }
}
BENCHMARK(BM_EagleWeights)->Arg(10)->Arg(100)->Arg(10000);

// Dirichlet partition of a 20k-label pool into 10 clients.
void BM_DirichletSplit(benchmark::State& state) {
    std::vector<int> labels(20000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 62);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dirichlet_split(labels, 10, 0.1, 0));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(labels.size()));
}
BENCHMARK(BM_DirichletSplit)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
