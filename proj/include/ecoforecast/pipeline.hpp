#pragma once

// End-to-end orchestration: flat key=value configuration, the stage
// functions behind every CLI subcommand, and the artifact manifest. All
// stage randomness derives from config.seed via rng::derive_seed with
// per-stage tags, so a full run is a pure function of (config, inputs).

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecoforecast/model_lstm.hpp"
#include "ecoforecast/traffic_sim.hpp"

namespace ecoforecast::pipeline {

/// Bad configuration (unknown key, unparsable value, invalid combination).
/// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A stage body failed (missing input, numeric failure, I/O error). Partial
/// outputs of the failing stage are removed first. CLI exit code 3.
struct StageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScenarioSpec {
    int id = 1;  // 1-based position in the scenario list
    double demand_factor = 1.0;
    DepartureDistribution distribution = DepartureDistribution::exponential;
};

struct Config {
    std::uint64_t seed = 42;
    std::string out_dir = "out";

    // network
    std::string network_file;  // blank: generate a grid
    int grid_rows = 6;
    int grid_cols = 6;
    double spacing_m = 500.0;
    std::vector<int> lane_choices = {1, 2};
    std::vector<double> ffs_choices = {40.0, 50.0, 60.0};

    // sim
    double horizon_s = 4800.0;
    int base_vehicles = 800;
    int od_pairs = 24;
    int reroute_interval_s = 60;
    std::vector<ScenarioSpec> scenarios;  // defaults set in default_config()

    // emissions
    std::string opmode_file;  // blank: built-in default table

    // aggregation and datasets
    int interval_s = 60;
    int n_seq = 3;
    int correlate_window = 6;

    // lstm
    std::vector<std::string> lstm_presets = {"lstm1", "lstm3"};
    int lstm_hidden_units = 16;
    Solver lstm_solver = Solver::adam;
    double lstm_initial_learning_rate = 0.01;
    double lstm_momentum = 0.9;
    int lstm_max_epochs = 25;
    double lstm_lr_drop_factor = 0.5;
    int lstm_lr_drop_period = 10;
    int lstm_minibatch_size = 128;

    // arimax
    int arimax_links = 4;
    bool arimax_auto_order = true;
    int arimax_p = 1;
    int arimax_d = 0;
    int arimax_q = 0;
    std::vector<std::string> arimax_exog = {"speed", "density"};
    bool arimax_clamp = true;

    // kmeans
    std::vector<int> kmeans_k_list = {5, 10, 15};
    int kmeans_elbow_max = 15;

    // tune
    int tune_budget = 5;
    std::string tune_space = "narrow";
    std::string tune_preset = "lstm1";
    int tune_max_rows = 2000;
    Solver tune_solver = Solver::sgdm;
};

/// The built-in defaults (a desk-scale corpus: 6x6 grid, five Table-1-style
/// demand scenarios, 1-minute interval).
Config default_config();

/// Parses key=value lines ('#' comments allowed) on top of the defaults.
/// Unknown keys and unparsable values raise ConfigError.
Config parse_config(const std::string& text);

/// parse_config over a file, then the ECOFORECAST_OUT environment override.
Config load_config(const std::string& path);

/// Applies the ECOFORECAST_OUT override to an in-memory config.
void apply_env_overrides(Config& cfg);

/// One line per key: name, default, description.
std::string config_help();

// Artifact names inside the output directory.
inline std::string network_file_name() { return "network.txt"; }
inline std::string opmode_file_name() { return "opmode.csv"; }
inline std::string sim_summary_name() { return "sim_summary.csv"; }
inline std::string emissions_file_name(int scenario_id) {
    return "emissions_s" + std::to_string(scenario_id) + ".csv";
}
inline std::string link_records_name(int interval_s) {
    return "link_records_" + std::to_string(interval_s) + ".csv";
}
inline std::string lag_matrix_name() { return "lag_matrix.csv"; }
inline std::string ranking_name() { return "predictor_ranking.txt"; }
inline std::string lstm_model_name(const std::string& preset) {
    return preset + ".txt";
}
inline std::string lstm_loss_name(const std::string& preset) {
    return preset + "_loss.csv";
}
inline std::string preds_name(const std::string& model) {
    return "preds_" + model + ".csv";
}
inline std::string arimax_fits_name() { return "arimax_fits.txt"; }
inline std::string arimax_forecast_name() { return "arimax_forecast.csv"; }
inline std::string kmeans_model_name(int k) {
    return "kmeans_k" + std::to_string(k) + ".txt";
}
inline std::string elbow_name() { return "elbow.csv"; }
inline std::string kmeans_validation_name() { return "kmeans_validation.csv"; }
inline std::string tune_trials_name() { return "tune_trials.csv"; }
inline std::string tuned_config_name() { return "tuned_config.txt"; }
inline std::string metrics_name() { return "metrics.csv"; }
inline std::string report_name() { return "report.txt"; }
inline std::string manifest_name() { return "manifest.json"; }

// Stage functions. Each writes its artifacts into cfg.out_dir and appends a
// stage entry (artifact content hashes) to manifest.json. On failure the
// stage's partial outputs are deleted and a StageError is thrown.
void stage_gen_network(const Config& cfg);
void stage_simulate(const Config& cfg, int jobs);
// interval_override == 0 uses cfg.interval_s.
void stage_aggregate(const Config& cfg, int jobs, int interval_override = 0);
void stage_correlate(const Config& cfg);
// preset_override empty: trains every preset in cfg.lstm_presets.
void stage_train_lstm(const Config& cfg, int jobs,
                      const std::string& preset_override = "");
void stage_train_arimax(const Config& cfg, int jobs);
void stage_train_kmeans(const Config& cfg, int jobs);
void stage_tune(const Config& cfg, int jobs);
void stage_evaluate(const Config& cfg);

/// All stages in order: gen-network, simulate, aggregate, correlate,
/// train-lstm, train-arimax, train-kmeans, tune, evaluate.
void run_pipeline(const Config& cfg, int jobs,
                  const std::function<void(const std::string&)>& progress = {});

}  // namespace ecoforecast::pipeline
