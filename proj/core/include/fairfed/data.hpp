#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fairfed/model.hpp"

namespace fairfed {

struct ClientDataset {
    int client_id = 0;
    Batch train;
    Batch validation;
    Batch test;
};

struct SplitFractions {
    double train = 0.7;
    double validation = 0.15;
    double test = 0.15;
};

// Three-client 2-d Gaussian task: class-conditional means +-m_k with identity
// covariance, balanced labels, optional rotation about the origin.
struct SyntheticSpec {
    std::vector<std::array<double, 2>> class_means = {{2.0, 2.0}, {0.5, 0.5}, {0.1, 0.1}};
    std::vector<double> rotation_degrees = {0.0, 0.0, 45.0};
    int samples_per_client = 100;
    SplitFractions fractions;
};

std::vector<ClientDataset> gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Per-sample client assignment; exhaustive and disjoint over raw indices.
struct DirichletPartition {
    double alpha = 0.0;
    std::vector<int> assignment;
};

// IDX loader (plain or gzip). Features are raw bytes / 255, flattened row-major.
struct IdxData {
    Eigen::MatrixXd features;
    std::vector<int> labels;
    int rows = 0;
    int cols = 0;
};
IdxData load_idx(const std::string& images_path, const std::string& labels_path);

// IDX writers, used by tests and dataset preparation. A ".gz" suffix selects
// gzip output.
void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      int count, int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

// For each class, draw p ~ Dirichlet(alpha * 1_K) and hand out that class's
// samples to clients in contiguous blocks sized by largest-remainder rounding.
DirichletPartition dirichlet_split(const std::vector<int>& labels, int num_clients, double alpha,
                                   std::uint64_t seed);

// Shuffled deterministic split of one client's raw data.
ClientDataset split_train_val_test(int client_id, const Batch& raw, const SplitFractions& fractions,
                                   std::uint64_t seed);

// Assemble per-client datasets from a raw pool and a partition.
std::vector<ClientDataset> partition_to_datasets(const IdxData& data,
                                                 const DirichletPartition& partition,
                                                 int num_clients, const SplitFractions& fractions,
                                                 std::uint64_t seed);

}  // namespace fairfed
