// fairfed: federated fairness experiment runner.
//
// Reads a flat key=value config file, applies flag overrides, then runs the
// configured algorithm over the seed list, writing per-seed CSV/JSON traces
// and a cross-seed summary to the output directory.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fairfed/config.hpp"
#include "fairfed/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"federated loss-gap-parity experiment runner"};

    std::string config_path;
    app.add_option("--config", config_path, "key=value config file");

    // Every flag maps onto a config key; flags override file values.
    std::map<std::string, std::string> overrides;
    const std::vector<std::pair<std::string, std::string>> flags = {
        {"--algorithm", "algorithm"},
        {"--dataset", "dataset"},
        {"--lambda", "lambda"},
        {"--q", "q"},
        {"--afl-step", "afl_step"},
        {"--alpha", "alpha"},
        {"--clients", "clients"},
        {"--rounds", "rounds"},
        {"--local-epochs", "local_epochs"},
        {"--eta", "eta"},
        {"--batch-size", "batch_size"},
        {"--seeds", "seeds"},
        {"--out", "out"},
        {"--emnist-images", "emnist_images"},
        {"--emnist-labels", "emnist_labels"},
        {"--emnist-subset", "emnist_subset"},
        {"--gap-split", "gap_split"},
        {"--norm", "norm"},
        {"--model", "model"},
        {"--hidden-dim", "hidden_dim"},
        {"--samples-per-client", "samples_per_client"},
        {"--lstar-max-epochs", "lstar_max_epochs"},
        {"--lstar-window", "lstar_window"},
        {"--lstar-tol", "lstar_tol"},
        {"--lstar-eta", "lstar_eta"},
        {"--record-grad-norm", "record_grad_norm"},
    };
    std::map<std::string, std::string> values;
    for (const auto& [flag, key] : flags)
        app.add_option(flag, values[key], "override config key " + key);

    bool print_manifest = false;
    app.add_flag("--print-manifest", print_manifest,
                 "print the resolved manifest as JSON and exit");

    CLI11_PARSE(app, argc, argv);

    try {
        std::string text;
        if (!config_path.empty()) {
            std::ifstream in(config_path, std::ios::binary);
            if (!in) throw fairfed::ConfigError("cannot open config file " + config_path);
            std::ostringstream buf;
            buf << in.rdbuf();
            text = buf.str();
        }
        for (const auto& [key, value] : values)
            if (!value.empty()) overrides[key] = value;

        const fairfed::RunManifest manifest = fairfed::parse_config(text, overrides);
        if (print_manifest) {
            std::cout << fairfed::manifest_json(manifest) << "\n";
            return 0;
        }
        return fairfed::run_experiment(manifest);
    } catch (const fairfed::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const fairfed::IngestError& e) {
        std::cerr << "ingestion error: " << e.what() << "\n";
        return 2;
    } catch (const fairfed::TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 3;
    }
}
