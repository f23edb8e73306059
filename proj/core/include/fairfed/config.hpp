#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fairfed/data.hpp"
#include "fairfed/federation.hpp"

namespace fairfed {

enum class DatasetKind { Synthetic, Emnist };

// Resolved experiment description. Re-running the same manifest reproduces
// every artifact byte-identically.
struct RunManifest {
    ExperimentConfig base;  // per-seed copies get their seed filled in
    DatasetKind dataset = DatasetKind::Synthetic;
    SyntheticSpec synthetic;
    std::string emnist_images;
    std::string emnist_labels;
    double alpha = 0.1;
    int emnist_subset = 0;  // 0 = all samples
    int num_clients = 0;
    std::vector<std::uint64_t> seeds = {0, 42, 100, 200};
    std::string out_dir;
};

// Flat key=value config text plus flag overrides (overrides win). Unknown
// keys, missing required keys, and type mismatches raise ConfigError.
RunManifest parse_config(const std::string& config_text,
                         const std::map<std::string, std::string>& overrides);

// JSON echo of every resolved manifest value.
std::string manifest_json(const RunManifest& manifest);

// Per seed: build datasets, estimate local optima, run the algorithm, write
// {algorithm}_{param}_{seed}.csv/json; finally write summary.json with
// mean/std of final-round metrics over the seeds that succeeded.
// Returns a process exit code: 0 ok, 1 config, 2 ingestion, 3 training.
int run_experiment(const RunManifest& manifest);

std::string algorithm_name(Algorithm a);

}  // namespace fairfed
