#include "fairfed/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "fairfed/errors.hpp"
#include "fairfed/metrics.hpp"

#include <nlohmann/json.hpp>

namespace fairfed {

namespace {

const std::set<std::string> kKnownKeys = {
    "algorithm",   "dataset",       "lambda",        "q",           "afl_step",
    "alpha",       "clients",       "rounds",        "local_epochs", "eta",
    "batch_size",  "seeds",         "out",           "emnist_images", "emnist_labels",
    "emnist_subset", "gap_split",   "norm",          "model",       "hidden_dim",
    "samples_per_client", "train_frac", "val_frac",  "test_frac",
    "lstar_max_epochs", "lstar_window", "lstar_tol", "lstar_eta",   "record_grad_norm",
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

class Resolver {
  public:
    explicit Resolver(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {
        for (const auto& [key, _] : kv_)
            if (!kKnownKeys.count(key))
                throw ConfigError("unknown config key: " + key);
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    std::string required(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end() || it->second.empty())
            throw ConfigError("missing required config key: " + key);
        return it->second;
    }

    double real(const std::string& key, double fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        return parse_real(key, it->second);
    }

    double required_real(const std::string& key) const { return parse_real(key, required(key)); }

    long integer(const std::string& key, long fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        return parse_int(key, it->second);
    }

    bool boolean(const std::string& key, bool fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError("key " + key + ": expected a boolean, got '" + it->second + "'");
    }

  private:
    static double parse_real(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return x;
        } catch (const std::exception&) {
            throw ConfigError("key " + key + ": expected a number, got '" + v + "'");
        }
    }
    static long parse_int(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const long x = std::stol(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return x;
        } catch (const std::exception&) {
            throw ConfigError("key " + key + ": expected an integer, got '" + v + "'");
        }
    }

    std::map<std::string, std::string> kv_;
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            seeds.push_back(std::stoull(tok));
        } catch (const std::exception&) {
            throw ConfigError("seeds: expected a comma-separated integer list, got '" + tok + "'");
        }
    }
    if (seeds.empty())
        throw ConfigError("seeds: empty list");
    return seeds;
}

std::string norm_name(NormMode m) {
    switch (m) {
        case NormMode::None: return "none";
        case NormMode::L2UnitNorm: return "l2unit";
        case NormMode::L2SqrtKNorm: return "l2sqrtk";
    }
    return "?";
}

std::string trimmed_param(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

struct SeedOutcome {
    std::uint64_t seed;
    MetricsRecord final_record;
};

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestError("cannot open " + path + " for writing");
    out << contents;
    if (!out) throw IngestError("failed writing " + path);
}

}  // namespace

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::FedAvg: return "fedavg";
        case Algorithm::Eagle: return "eagle";
        case Algorithm::QFfl: return "qffl";
        case Algorithm::Afl: return "afl";
    }
    return "?";
}

RunManifest parse_config(const std::string& config_text,
                         const std::map<std::string, std::string>& overrides) {
    auto kv = parse_kv(config_text);
    for (const auto& [key, value] : overrides) kv[key] = value;
    Resolver r(std::move(kv));

    RunManifest m;

    const std::string algo = r.required("algorithm");
    if (algo == "fedavg") m.base.algorithm = Algorithm::FedAvg;
    else if (algo == "eagle") m.base.algorithm = Algorithm::Eagle;
    else if (algo == "qffl") m.base.algorithm = Algorithm::QFfl;
    else if (algo == "afl") m.base.algorithm = Algorithm::Afl;
    else throw ConfigError("algorithm must be one of fedavg|eagle|qffl|afl, got '" + algo + "'");

    const std::string ds = r.required("dataset");
    if (ds == "synthetic") m.dataset = DatasetKind::Synthetic;
    else if (ds == "emnist") m.dataset = DatasetKind::Emnist;
    else throw ConfigError("dataset must be synthetic|emnist, got '" + ds + "'");

    if (m.base.algorithm == Algorithm::Eagle) m.base.lambda = r.required_real("lambda");
    else m.base.lambda = r.real("lambda", 0.0);
    if (m.base.algorithm == Algorithm::QFfl) m.base.q = r.required_real("q");
    else m.base.q = r.real("q", 0.0);
    m.base.afl_step = r.real("afl_step", 0.1);

    m.base.rounds = static_cast<int>(r.integer("rounds", 300));
    m.base.local_epochs = static_cast<int>(r.integer("local_epochs", 1));
    m.base.eta = r.real("eta", 0.1);

    const std::string bs = r.str("batch_size", "full");
    if (bs == "full") m.base.batch_size = kFullBatch;
    else m.base.batch_size = static_cast<int>(Resolver({{"batch_size", bs}}).integer("batch_size", 0));
    if (m.base.batch_size < 0)
        throw ConfigError("batch_size must be 'full' or a positive integer");

    const std::string gs = r.str("gap_split", "validation");
    if (gs == "train") m.base.gap_eval_split = GapSplit::Train;
    else if (gs == "validation") m.base.gap_eval_split = GapSplit::Validation;
    else throw ConfigError("gap_split must be train|validation, got '" + gs + "'");

    const std::string nm = r.str("norm", "l2unit");
    if (nm == "none") m.base.normalization = NormMode::None;
    else if (nm == "l2unit") m.base.normalization = NormMode::L2UnitNorm;
    else if (nm == "l2sqrtk") m.base.normalization = NormMode::L2SqrtKNorm;
    else throw ConfigError("norm must be none|l2unit|l2sqrtk, got '" + nm + "'");

    const std::string model = r.str("model", "linear");
    if (model == "linear") m.base.model.family = ModelFamily::LinearSoftmax;
    else if (model == "mlp") m.base.model.family = ModelFamily::Mlp1Hidden;
    else throw ConfigError("model must be linear|mlp, got '" + model + "'");
    m.base.model.hidden_dim = static_cast<int>(r.integer("hidden_dim", 64));

    m.base.local_optima.max_epochs = static_cast<int>(r.integer("lstar_max_epochs", 2000));
    m.base.local_optima.window = static_cast<int>(r.integer("lstar_window", 20));
    m.base.local_optima.tol = r.real("lstar_tol", 1e-5);
    m.base.local_optima.lr = r.real("lstar_eta", m.base.eta);
    m.base.record_grad_norm = r.boolean("record_grad_norm", false);

    SplitFractions fractions;
    fractions.train = r.real("train_frac", 0.7);
    fractions.validation = r.real("val_frac", 0.15);
    fractions.test = r.real("test_frac", 0.15);

    if (m.dataset == DatasetKind::Synthetic) {
        m.synthetic.samples_per_client = static_cast<int>(r.integer("samples_per_client", 100));
        m.synthetic.fractions = fractions;
        m.num_clients = static_cast<int>(m.synthetic.class_means.size());
        m.base.model.input_dim = 2;
        m.base.model.num_classes = 2;
    } else {
        m.emnist_images = r.required("emnist_images");
        m.emnist_labels = r.required("emnist_labels");
        m.alpha = r.real("alpha", 0.1);
        if (m.alpha <= 0.0) throw ConfigError("alpha must be positive");
        m.emnist_subset = static_cast<int>(r.integer("emnist_subset", 0));
        m.num_clients = static_cast<int>(r.integer("clients", 10));
        m.synthetic.fractions = fractions;
        // input_dim/num_classes resolved at load time from the IDX files.
    }
    m.base.num_clients = m.num_clients;

    m.seeds = parse_seeds(r.str("seeds", "0,42,100,200"));

    std::string out = r.str("out", "");
    if (out.empty()) {
        const char* env = std::getenv("FAIRFED_OUT");
        if (env != nullptr) out = env;
    }
    if (out.empty())
        throw ConfigError("missing output directory: set out= or the FAIRFED_OUT env var");
    m.out_dir = out;
    return m;
}

std::string manifest_json(const RunManifest& m) {
    nlohmann::json j;
    j["algorithm"] = algorithm_name(m.base.algorithm);
    j["dataset"] = m.dataset == DatasetKind::Synthetic ? "synthetic" : "emnist";
    j["lambda"] = m.base.lambda;
    j["q"] = m.base.q;
    j["afl_step"] = m.base.afl_step;
    j["rounds"] = m.base.rounds;
    j["local_epochs"] = m.base.local_epochs;
    j["eta"] = m.base.eta;
    j["batch_size"] = m.base.batch_size == kFullBatch ? "full" : std::to_string(m.base.batch_size);
    j["gap_split"] = m.base.gap_eval_split == GapSplit::Train ? "train" : "validation";
    j["norm"] = norm_name(m.base.normalization);
    j["model"] = m.base.model.family == ModelFamily::LinearSoftmax ? "linear" : "mlp";
    j["hidden_dim"] = m.base.model.hidden_dim;
    j["clients"] = m.num_clients;
    j["seeds"] = m.seeds;
    j["out"] = m.out_dir;
    j["train_frac"] = m.synthetic.fractions.train;
    j["val_frac"] = m.synthetic.fractions.validation;
    j["test_frac"] = m.synthetic.fractions.test;
    j["lstar_max_epochs"] = m.base.local_optima.max_epochs;
    j["lstar_window"] = m.base.local_optima.window;
    j["lstar_tol"] = m.base.local_optima.tol;
    j["lstar_eta"] = m.base.local_optima.lr;
    j["record_grad_norm"] = m.base.record_grad_norm;
    if (m.dataset == DatasetKind::Synthetic) {
        j["samples_per_client"] = m.synthetic.samples_per_client;
    } else {
        j["emnist_images"] = m.emnist_images;
        j["emnist_labels"] = m.emnist_labels;
        j["alpha"] = m.alpha;
        j["emnist_subset"] = m.emnist_subset;
    }
    return j.dump(2);
}

int run_experiment(const RunManifest& manifest) {
    namespace fs = std::filesystem;
    fs::create_directories(manifest.out_dir);

    // EMNIST files are shared across seeds; load them once.
    std::optional<IdxData> pool;
    if (manifest.dataset == DatasetKind::Emnist) {
        IdxData all = load_idx(manifest.emnist_images, manifest.emnist_labels);
        if (manifest.emnist_subset > 0 &&
            manifest.emnist_subset < static_cast<int>(all.labels.size())) {
            IdxData sub;
            sub.rows = all.rows;
            sub.cols = all.cols;
            sub.features = all.features.topRows(manifest.emnist_subset);
            sub.labels.assign(all.labels.begin(), all.labels.begin() + manifest.emnist_subset);
            pool = std::move(sub);
        } else {
            pool = std::move(all);
        }
    }

    double param = 0.0;
    switch (manifest.base.algorithm) {
        case Algorithm::Eagle: param = manifest.base.lambda; break;
        case Algorithm::QFfl: param = manifest.base.q; break;
        case Algorithm::Afl: param = manifest.base.afl_step; break;
        case Algorithm::FedAvg: param = 0.0; break;
    }
    const std::string stem_prefix =
        algorithm_name(manifest.base.algorithm) + "_" + trimmed_param(param) + "_";

    std::vector<SeedOutcome> outcomes;
    int failure_code = 0;
    for (const std::uint64_t seed : manifest.seeds) {
        try {
            ExperimentConfig config = manifest.base;
            config.seed = seed;

            std::vector<ClientDataset> datasets;
            if (manifest.dataset == DatasetKind::Synthetic) {
                datasets = gen_synthetic(manifest.synthetic, seed);
            } else {
                config.model.input_dim = pool->rows * pool->cols;
                config.model.num_classes =
                    *std::max_element(pool->labels.begin(), pool->labels.end()) + 1;
                const DirichletPartition part =
                    dirichlet_split(pool->labels, manifest.num_clients, manifest.alpha, seed);
                datasets = partition_to_datasets(*pool, part, manifest.num_clients,
                                                 manifest.synthetic.fractions, seed);
            }

            const ParamVector init = initial_params_for_seed(config.model, seed);
            const Eigen::VectorXd optima = estimate_local_optima(
                datasets, config.model, config.local_optima, config.gap_eval_split, init);

            const TrainingTrace trace = run_algorithm(config, datasets, optima);

            const std::string stem = stem_prefix + std::to_string(seed);
            nlohmann::json echo = nlohmann::json::parse(manifest_json(manifest));
            echo["seed"] = seed;
            write_file((fs::path(manifest.out_dir) / (stem + ".csv")).string(),
                       emit_csv(trace));
            write_file((fs::path(manifest.out_dir) / (stem + ".json")).string(),
                       emit_json(trace, echo.dump()));
            outcomes.push_back({seed, trace.records.back()});
        } catch (const ConfigError& e) {
            std::cerr << "seed " << seed << " failed (config): " << e.what() << "\n";
            failure_code = failure_code == 0 ? 1 : failure_code;
        } catch (const IngestError& e) {
            std::cerr << "seed " << seed << " failed (ingestion): " << e.what() << "\n";
            failure_code = failure_code == 0 ? 2 : failure_code;
        } catch (const TrainingError& e) {
            std::cerr << "seed " << seed << " failed (training): " << e.what() << "\n";
            failure_code = failure_code == 0 ? 3 : failure_code;
        }
    }

    if (!outcomes.empty()) {
        auto stat = [&](auto getter) {
            std::vector<double> values;
            for (const auto& o : outcomes) values.push_back(getter(o.final_record));
            const double n = static_cast<double>(values.size());
            double mean = 0.0;
            for (double v : values) mean += v;
            mean /= n;
            double var = 0.0;
            for (double v : values) var += (v - mean) * (v - mean);
            const double sd = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
            return nlohmann::json{{"mean", mean}, {"std", sd}};
        };
        nlohmann::json summary;
        summary["config"] = nlohmann::json::parse(manifest_json(manifest));
        summary["seeds_succeeded"] = [&] {
            std::vector<std::uint64_t> s;
            for (const auto& o : outcomes) s.push_back(o.seed);
            return s;
        }();
        summary["final_round"] = nlohmann::json{
            {"gap_max", stat([](const MetricsRecord& r) { return r.gap_max; })},
            {"gap_min", stat([](const MetricsRecord& r) { return r.gap_min; })},
            {"gap_variance", stat([](const MetricsRecord& r) { return r.gap_variance; })},
            {"balanced_accuracy",
             stat([](const MetricsRecord& r) { return r.balanced_accuracy; })},
            {"objective_f", stat([](const MetricsRecord& r) { return r.objective_f; })},
        };
        write_file((fs::path(manifest.out_dir) / (stem_prefix + "summary.json")).string(),
                   summary.dump(2) + "\n");
    }

    return failure_code;
}

}  // namespace fairfed
