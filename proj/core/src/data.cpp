#include "fairfed/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fairfed/errors.hpp"
#include "fairfed/rng.hpp"

namespace fairfed {

namespace {

constexpr double kPi = 3.14159265358979323846;

Batch take_rows(const Batch& src, const std::vector<int>& idx) {
    Batch out;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), src.features.cols());
    out.labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = src.features.row(idx[i]);
        out.labels.push_back(src.labels[static_cast<std::size_t>(idx[i])]);
    }
    return out;
}

// Largest-remainder integerization of n * p so the counts sum to n exactly.
std::vector<int> largest_remainder_counts(const Eigen::VectorXd& proportions, int n) {
    const int k = static_cast<int>(proportions.size());
    std::vector<int> counts(static_cast<std::size_t>(k));
    std::vector<std::pair<double, int>> remainders;
    int assigned = 0;
    for (int i = 0; i < k; ++i) {
        const double exact = proportions[i] * n;
        counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact));
        assigned += counts[static_cast<std::size_t>(i)];
        remainders.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int j = 0; j < n - assigned; ++j)
        counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(j)].second)]++;
    return counts;
}

// Sequential gz-transparent reader with byte-offset tracking for diagnostics.
class IdxReader {
  public:
    explicit IdxReader(const std::string& path) : path_(path) {
        file_ = gzopen(path.c_str(), "rb");
        if (file_ == nullptr)
            throw IngestError("cannot open " + path);
    }
    ~IdxReader() {
        if (file_ != nullptr) gzclose(file_);
    }
    IdxReader(const IdxReader&) = delete;
    IdxReader& operator=(const IdxReader&) = delete;

    void read(void* dst, std::size_t n) {
        const int got = gzread(file_, dst, static_cast<unsigned>(n));
        if (got < 0 || static_cast<std::size_t>(got) != n)
            throw IngestError(path_ + ": truncated at byte offset " + std::to_string(offset_) +
                              " (wanted " + std::to_string(n) + " bytes)");
        offset_ += n;
    }

    std::uint32_t read_u32be() {
        std::uint8_t buf[4];
        read(buf, 4);
        return (static_cast<std::uint32_t>(buf[0]) << 24) |
               (static_cast<std::uint32_t>(buf[1]) << 16) |
               (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
    }

    bool at_eof() {
        // gzeof only trips after a failed read; probe one byte instead.
        std::uint8_t probe;
        const int got = gzread(file_, &probe, 1);
        return got == 0;
    }

    std::size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

  private:
    gzFile file_ = nullptr;
    std::string path_;
    std::size_t offset_ = 0;
};

void write_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    const bool gz = path.size() > 3 && path.substr(path.size() - 3) == ".gz";
    gzFile f = gzopen(path.c_str(), gz ? "wb" : "wbT");  // T = no compression wrapper
    if (f == nullptr)
        throw IngestError("cannot open " + path + " for writing");
    const int wrote = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    if (wrote != static_cast<int>(bytes.size()))
        throw IngestError("short write to " + path);
}

}  // namespace

std::vector<ClientDataset> gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.class_means.size() != spec.rotation_degrees.size() || spec.class_means.empty())
        throw ConfigError("synthetic spec: means and rotations must align and be non-empty");
    if (spec.samples_per_client < 2)
        throw ConfigError("synthetic spec: need at least 2 samples per client");

    std::vector<ClientDataset> out;
    for (std::size_t k = 0; k < spec.class_means.size(); ++k) {
        auto rng = make_rng(seed, 0x5f4e7a11, k);
        std::normal_distribution<double> noise(0.0, 1.0);

        const int n = spec.samples_per_client;
        const int n_pos = n / 2;
        Batch raw;
        raw.features.resize(n, 2);
        raw.labels.resize(static_cast<std::size_t>(n));
        const double rad = spec.rotation_degrees[k] * kPi / 180.0;
        const double c = std::cos(rad), s = std::sin(rad);
        for (int i = 0; i < n; ++i) {
            const bool positive = i < n_pos;
            const double sign = positive ? 1.0 : -1.0;
            double x = sign * spec.class_means[k][0] + noise(rng);
            double y = sign * spec.class_means[k][1] + noise(rng);
            raw.features(i, 0) = c * x - s * y;
            raw.features(i, 1) = s * x + c * y;
            raw.labels[static_cast<std::size_t>(i)] = positive ? 1 : 0;
        }
        out.push_back(split_train_val_test(static_cast<int>(k), raw, spec.fractions,
                                           derive_seed(seed, 0x73b1c2, k)));
    }
    return out;
}

IdxData load_idx(const std::string& images_path, const std::string& labels_path) {
    IdxReader images(images_path);
    const std::uint32_t image_magic = images.read_u32be();
    if (image_magic != 0x00000803u)
        throw IngestError(images_path + ": bad image magic 0x" + std::to_string(image_magic) +
                          " at byte offset 0 (expected 0x00000803)");
    const std::uint32_t n_images = images.read_u32be();
    const std::uint32_t rows = images.read_u32be();
    const std::uint32_t cols = images.read_u32be();
    if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
        throw IngestError(images_path + ": implausible image dims " + std::to_string(rows) + "x" +
                          std::to_string(cols));

    IdxReader labels(labels_path);
    const std::uint32_t label_magic = labels.read_u32be();
    if (label_magic != 0x00000801u)
        throw IngestError(labels_path + ": bad label magic 0x" + std::to_string(label_magic) +
                          " at byte offset 0 (expected 0x00000801)");
    const std::uint32_t n_labels = labels.read_u32be();
    if (n_images != n_labels)
        throw IngestError("image/label count mismatch: " + std::to_string(n_images) + " images in " +
                          images_path + " vs " + std::to_string(n_labels) + " labels in " +
                          labels_path);

    IdxData out;
    out.rows = static_cast<int>(rows);
    out.cols = static_cast<int>(cols);
    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    out.features.resize(n_images, static_cast<Eigen::Index>(dim));
    out.labels.resize(n_images);

    std::vector<std::uint8_t> buf(dim);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        images.read(buf.data(), dim);
        for (std::size_t j = 0; j < dim; ++j)
            out.features(i, static_cast<Eigen::Index>(j)) = buf[j] / 255.0;
        std::uint8_t y;
        labels.read(&y, 1);
        out.labels[i] = y;
    }
    if (!images.at_eof())
        throw IngestError(images_path + ": trailing bytes after offset " +
                          std::to_string(images.offset()));
    return out;
}

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels, int count,
                      int rows, int cols) {
    if (count < 0 || static_cast<std::size_t>(count) * rows * cols != pixels.size())
        throw UsageError("write_idx_images: pixel buffer does not match count*rows*cols");
    std::vector<std::uint8_t> bytes;
    bytes.reserve(16 + pixels.size());
    write_u32be(bytes, 0x00000803u);
    write_u32be(bytes, static_cast<std::uint32_t>(count));
    write_u32be(bytes, static_cast<std::uint32_t>(rows));
    write_u32be(bytes, static_cast<std::uint32_t>(cols));
    bytes.insert(bytes.end(), pixels.begin(), pixels.end());
    write_bytes(path, bytes);
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(8 + labels.size());
    write_u32be(bytes, 0x00000801u);
    write_u32be(bytes, static_cast<std::uint32_t>(labels.size()));
    bytes.insert(bytes.end(), labels.begin(), labels.end());
    write_bytes(path, bytes);
}

DirichletPartition dirichlet_split(const std::vector<int>& labels, int num_clients, double alpha,
                                   std::uint64_t seed) {
    if (num_clients < 2)
        throw ConfigError("dirichlet_split requires at least 2 clients");
    if (alpha <= 0.0)
        throw ConfigError("dirichlet_split requires alpha > 0");
    if (labels.empty())
        throw ConfigError("dirichlet_split: empty label vector");

    const int num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<int>> class_indices(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i)
        class_indices[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));

    DirichletPartition part;
    part.alpha = alpha;
    part.assignment.assign(labels.size(), -1);

    for (int c = 0; c < num_classes; ++c) {
        const auto& idx = class_indices[static_cast<std::size_t>(c)];
        if (idx.empty())
            continue;
        auto rng = make_rng(seed, 0xd1a1c4e7, static_cast<std::uint64_t>(c));
        // Dirichlet via normalized Gamma(alpha, 1) draws.
        std::gamma_distribution<double> gamma(alpha, 1.0);
        Eigen::VectorXd p(num_clients);
        for (int k = 0; k < num_clients; ++k) p[k] = gamma(rng);
        const double total = p.sum();
        if (total <= 0.0) {
            p.setConstant(1.0 / num_clients);
        } else {
            p /= total;
        }
        const std::vector<int> counts = largest_remainder_counts(p, static_cast<int>(idx.size()));
        std::size_t pos = 0;
        for (int k = 0; k < num_clients; ++k)
            for (int j = 0; j < counts[static_cast<std::size_t>(k)]; ++j)
                part.assignment[static_cast<std::size_t>(idx[pos++])] = k;
    }
    return part;
}

ClientDataset split_train_val_test(int client_id, const Batch& raw, const SplitFractions& fractions,
                                   std::uint64_t seed) {
    if (fractions.train <= 0.0 || fractions.validation <= 0.0 || fractions.test <= 0.0)
        throw ConfigError("split fractions must be positive");
    if (std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
    const int n = raw.size();
    if (n < 3)
        throw ConfigError("client " + std::to_string(client_id) + " has only " +
                          std::to_string(n) + " samples; need at least 3 for a 3-way split");

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(seed, 0x517a9f, static_cast<std::uint64_t>(client_id));
    std::shuffle(order.begin(), order.end(), rng);

    Eigen::VectorXd props(3);
    props << fractions.train, fractions.validation, fractions.test;
    std::vector<int> sizes = largest_remainder_counts(props, n);
    for (int s : sizes)
        if (s < 1)
            throw ConfigError("client " + std::to_string(client_id) +
                              ": allocation too small for non-empty train/val/test splits");

    ClientDataset out;
    out.client_id = client_id;
    auto it = order.begin();
    std::vector<int> train_idx(it, it + sizes[0]); it += sizes[0];
    std::vector<int> val_idx(it, it + sizes[1]); it += sizes[1];
    std::vector<int> test_idx(it, it + sizes[2]);
    out.train = take_rows(raw, train_idx);
    out.validation = take_rows(raw, val_idx);
    out.test = take_rows(raw, test_idx);
    return out;
}

std::vector<ClientDataset> partition_to_datasets(const IdxData& data,
                                                 const DirichletPartition& partition,
                                                 int num_clients, const SplitFractions& fractions,
                                                 std::uint64_t seed) {
    if (partition.assignment.size() != data.labels.size())
        throw ConfigError("partition does not cover the dataset");
    std::vector<std::vector<int>> per_client(static_cast<std::size_t>(num_clients));
    for (std::size_t i = 0; i < partition.assignment.size(); ++i) {
        const int k = partition.assignment[i];
        if (k < 0 || k >= num_clients)
            throw ConfigError("partition assigns sample " + std::to_string(i) +
                              " to invalid client " + std::to_string(k));
        per_client[static_cast<std::size_t>(k)].push_back(static_cast<int>(i));
    }
    std::vector<ClientDataset> out;
    for (int k = 0; k < num_clients; ++k) {
        Batch raw;
        const auto& idx = per_client[static_cast<std::size_t>(k)];
        raw.features.resize(static_cast<Eigen::Index>(idx.size()), data.features.cols());
        raw.labels.reserve(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            raw.features.row(static_cast<Eigen::Index>(i)) = data.features.row(idx[i]);
            raw.labels.push_back(data.labels[static_cast<std::size_t>(idx[i])]);
        }
        out.push_back(split_train_val_test(k, raw, fractions, derive_seed(seed, 0x9e11, k)));
    }
    return out;
}

}  // namespace fairfed
