// Command-line front end: one subcommand per pipeline stage plus a full
// `pipeline` run. Exit codes: 0 success, 2 configuration/usage error,
// 3 stage failure.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "ecoforecast/pipeline.hpp"

namespace pl = ecoforecast::pipeline;

int main(int argc, char** argv) {
    CLI::App app{"ecoforecast: synthesize road-traffic GHG corpora and "
                 "predict next-interval link emission rates"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand
    app.footer(pl::config_help());

    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    int jobs = 1;
    app.add_option("--config", config_path, "config file (key=value lines)")
        ->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_option("--seed", seed, "root seed (overrides config)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--jobs", jobs, "worker threads")
        ->check(CLI::Range(1, 256));

    int interval = 0;
    std::string preset;

    CLI::App* c_gen = app.add_subcommand("gen-network",
                                         "generate or import the network");
    CLI::App* c_sim = app.add_subcommand(
        "simulate", "run every demand scenario and annotate emissions");
    CLI::App* c_agg = app.add_subcommand(
        "aggregate", "aggregate per-second records to link intervals");
    c_agg->add_option("--interval", interval, "interval seconds (30 or 60)")
        ->check(CLI::IsMember({30, 60}));
    CLI::App* c_corr = app.add_subcommand(
        "correlate", "lag correlations and predictor ranking");
    CLI::App* c_lstm =
        app.add_subcommand("train-lstm", "train LSTM preset(s)");
    c_lstm->add_option("--preset", preset,
                       "single preset to train (default: config list)");
    CLI::App* c_arimax = app.add_subcommand(
        "train-arimax", "fit per-link ARIMAX models and forecast");
    CLI::App* c_kmeans = app.add_subcommand(
        "train-kmeans", "fit k-means predictors and the elbow curve");
    CLI::App* c_tune = app.add_subcommand(
        "tune", "Bayesian hyperparameter search for an LSTM preset");
    CLI::App* c_eval = app.add_subcommand(
        "evaluate", "score every trained model into metrics.csv");
    CLI::App* c_pipe =
        app.add_subcommand("pipeline", "run all stages in order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    pl::Config cfg;
    try {
        if (config_path.empty()) {
            cfg = pl::default_config();
            pl::apply_env_overrides(cfg);
        } else {
            cfg = pl::load_config(config_path);
        }
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    } catch (const pl::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    try {
        if (*c_gen) pl::stage_gen_network(cfg);
        if (*c_sim) pl::stage_simulate(cfg, jobs);
        if (*c_agg) pl::stage_aggregate(cfg, jobs, interval);
        if (*c_corr) pl::stage_correlate(cfg);
        if (*c_lstm) pl::stage_train_lstm(cfg, jobs, preset);
        if (*c_arimax) pl::stage_train_arimax(cfg, jobs);
        if (*c_kmeans) pl::stage_train_kmeans(cfg, jobs);
        if (*c_tune) pl::stage_tune(cfg, jobs);
        if (*c_eval) pl::stage_evaluate(cfg);
        if (*c_pipe)
            pl::run_pipeline(cfg, jobs, [](const std::string& line) {
                std::fprintf(stderr, "%s\n", line.c_str());
            });
    } catch (const pl::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const pl::StageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
