#include "ecoforecast/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

#include "json.hpp"

#include "ecoforecast/correlation.hpp"
#include "ecoforecast/emissions.hpp"
#include "ecoforecast/evaluation.hpp"
#include "ecoforecast/hyperopt.hpp"
#include "ecoforecast/io.hpp"
#include "ecoforecast/model_arimax.hpp"
#include "ecoforecast/model_kmeans.hpp"
#include "ecoforecast/parallel.hpp"
#include "ecoforecast/rng.hpp"

namespace ecoforecast::pipeline {

namespace {

constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::runtime_error("expected true/false");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& s, Parse parse) {
    std::vector<T> out;
    for (const std::string& part : io::split(s, ',')) {
        const std::string t = io::trim(part);
        if (t.empty()) throw std::runtime_error("empty list element");
        out.push_back(parse(t));
    }
    return out;
}

template <typename T, typename Fmt>
std::string join_list(const std::vector<T>& v, Fmt fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt(v[i]);
    }
    return out;
}

std::vector<ScenarioSpec> parse_scenarios(const std::string& s) {
    std::vector<ScenarioSpec> out;
    int id = 1;
    for (const std::string& part : io::split(s, ',')) {
        const std::vector<std::string> f = io::split(io::trim(part), ':');
        if (f.size() != 2)
            throw std::runtime_error(
                "scenario entries are <demand_factor>:<distribution>");
        ScenarioSpec sc;
        sc.id = id++;
        sc.demand_factor = io::parse_double(f[0]);
        sc.distribution = departure_distribution_from_string(f[1]);
        out.push_back(sc);
    }
    return out;
}

std::string scenarios_str(const std::vector<ScenarioSpec>& v) {
    return join_list(v, [](const ScenarioSpec& sc) {
        return io::fmt_double(sc.demand_factor) + ":" +
               std::string(to_string(sc.distribution));
    });
}

struct KeyHandler {
    std::string key;
    std::string doc;
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

const std::vector<KeyHandler>& key_handlers() {
    static const std::vector<KeyHandler> handlers = {
        {"seed", "root seed; every stage derives its own stream from it",
         [](Config& c, const std::string& v) {
             c.seed = static_cast<std::uint64_t>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.seed); }},
        {"out", "output directory (ECOFORECAST_OUT overrides)",
         [](Config& c, const std::string& v) { c.out_dir = v; },
         [](const Config& c) { return c.out_dir; }},
        {"network.file", "load this network file instead of generating a grid",
         [](Config& c, const std::string& v) { c.network_file = v; },
         [](const Config& c) { return c.network_file; }},
        {"network.grid_rows", "grid height in nodes",
         [](Config& c, const std::string& v) {
             c.grid_rows = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.grid_rows); }},
        {"network.grid_cols", "grid width in nodes",
         [](Config& c, const std::string& v) {
             c.grid_cols = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.grid_cols); }},
        {"network.spacing_m", "grid link length in meters",
         [](Config& c, const std::string& v) {
             c.spacing_m = io::parse_double(v);
         },
         [](const Config& c) { return io::fmt_double(c.spacing_m); }},
        {"network.lane_choices", "lane counts drawn per generated link",
         [](Config& c, const std::string& v) {
             c.lane_choices = parse_list<int>(v, [](const std::string& t) {
                 return static_cast<int>(io::parse_int(t));
             });
         },
         [](const Config& c) {
             return join_list(c.lane_choices,
                              [](int x) { return std::to_string(x); });
         }},
        {"network.ffs_choices", "free-flow speeds (km/h) drawn per link",
         [](Config& c, const std::string& v) {
             c.ffs_choices = parse_list<double>(v, [](const std::string& t) {
                 return io::parse_double(t);
             });
         },
         [](const Config& c) {
             return join_list(c.ffs_choices,
                              [](double x) { return io::fmt_double(x); });
         }},
        {"sim.horizon_s", "departure horizon in seconds",
         [](Config& c, const std::string& v) {
             c.horizon_s = io::parse_double(v);
         },
         [](const Config& c) { return io::fmt_double(c.horizon_s); }},
        {"sim.base_vehicles", "vehicle count at demand factor 1",
         [](Config& c, const std::string& v) {
             c.base_vehicles = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.base_vehicles); }},
        {"sim.od_pairs", "size of the seeded origin-destination table",
         [](Config& c, const std::string& v) {
             c.od_pairs = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.od_pairs); }},
        {"sim.reroute_interval_s", "dynamic rerouting period in seconds",
         [](Config& c, const std::string& v) {
             c.reroute_interval_s = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.reroute_interval_s); }},
        {"sim.scenarios",
         "comma list of <demand_factor>:<exponential|uniform|normal>",
         [](Config& c, const std::string& v) { c.scenarios = parse_scenarios(v); },
         [](const Config& c) { return scenarios_str(c.scenarios); }},
        {"emissions.opmode_file",
         "operating-mode table CSV (blank: built-in default)",
         [](Config& c, const std::string& v) { c.opmode_file = v; },
         [](const Config& c) { return c.opmode_file; }},
        {"agg.interval_s", "updating interval in seconds (30 or 60)",
         [](Config& c, const std::string& v) {
             c.interval_s = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.interval_s); }},
        {"dataset.n_seq", "lagged intervals per sequence window",
         [](Config& c, const std::string& v) {
             c.n_seq = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.n_seq); }},
        {"correlate.window", "correlation window length in intervals",
         [](Config& c, const std::string& v) {
             c.correlate_window = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.correlate_window); }},
        {"lstm.presets", "comma list from {lstm1, lstm2, lstm3}",
         [](Config& c, const std::string& v) {
             c.lstm_presets = parse_list<std::string>(
                 v, [](const std::string& t) { return t; });
         },
         [](const Config& c) {
             return join_list(c.lstm_presets,
                              [](const std::string& s) { return s; });
         }},
        {"lstm.hidden_units", "hidden units per layer",
         [](Config& c, const std::string& v) {
             c.lstm_hidden_units = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.lstm_hidden_units); }},
        {"lstm.solver", "sgdm or adam",
         [](Config& c, const std::string& v) {
             c.lstm_solver = solver_from_string(v);
         },
         [](const Config& c) { return std::string(to_string(c.lstm_solver)); }},
        {"lstm.initial_learning_rate", "initial step size",
         [](Config& c, const std::string& v) {
             c.lstm_initial_learning_rate = io::parse_double(v);
         },
         [](const Config& c) {
             return io::fmt_double(c.lstm_initial_learning_rate);
         }},
        {"lstm.momentum", "sgdm momentum in [0,1)",
         [](Config& c, const std::string& v) {
             c.lstm_momentum = io::parse_double(v);
         },
         [](const Config& c) { return io::fmt_double(c.lstm_momentum); }},
        {"lstm.max_epochs", "training epochs",
         [](Config& c, const std::string& v) {
             c.lstm_max_epochs = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.lstm_max_epochs); }},
        {"lstm.lr_drop_factor", "step-decay multiplier in (0,1]",
         [](Config& c, const std::string& v) {
             c.lstm_lr_drop_factor = io::parse_double(v);
         },
         [](const Config& c) { return io::fmt_double(c.lstm_lr_drop_factor); }},
        {"lstm.lr_drop_period", "epochs between rate drops",
         [](Config& c, const std::string& v) {
             c.lstm_lr_drop_period = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.lstm_lr_drop_period); }},
        {"lstm.minibatch_size", "sequences per gradient step",
         [](Config& c, const std::string& v) {
             c.lstm_minibatch_size = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.lstm_minibatch_size); }},
        {"arimax.links", "number of representative links",
         [](Config& c, const std::string& v) {
             c.arimax_links = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.arimax_links); }},
        {"arimax.auto_order", "pick (p,d,q) by unit root + AIC",
         [](Config& c, const std::string& v) {
             c.arimax_auto_order = parse_bool(v);
         },
         [](const Config& c) { return bool_str(c.arimax_auto_order); }},
        {"arimax.p", "AR order when auto_order=false",
         [](Config& c, const std::string& v) {
             c.arimax_p = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.arimax_p); }},
        {"arimax.d", "differencing order when auto_order=false",
         [](Config& c, const std::string& v) {
             c.arimax_d = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.arimax_d); }},
        {"arimax.q", "MA order when auto_order=false",
         [](Config& c, const std::string& v) {
             c.arimax_q = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.arimax_q); }},
        {"arimax.exog", "comma list of lag-1 exogenous feature names",
         [](Config& c, const std::string& v) {
             c.arimax_exog = parse_list<std::string>(
                 v, [](const std::string& t) { return t; });
         },
         [](const Config& c) {
             return join_list(c.arimax_exog,
                              [](const std::string& s) { return s; });
         }},
        {"arimax.clamp", "clamp forecasts at 0 g/s",
         [](Config& c, const std::string& v) { c.arimax_clamp = parse_bool(v); },
         [](const Config& c) { return bool_str(c.arimax_clamp); }},
        {"kmeans.k_list", "cluster counts to fit",
         [](Config& c, const std::string& v) {
             c.kmeans_k_list = parse_list<int>(v, [](const std::string& t) {
                 return static_cast<int>(io::parse_int(t));
             });
         },
         [](const Config& c) {
             return join_list(c.kmeans_k_list,
                              [](int x) { return std::to_string(x); });
         }},
        {"kmeans.elbow_max", "largest k on the elbow curve",
         [](Config& c, const std::string& v) {
             c.kmeans_elbow_max = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.kmeans_elbow_max); }},
        {"tune.budget", "total tuning trials (>= 4)",
         [](Config& c, const std::string& v) {
             c.tune_budget = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.tune_budget); }},
        {"tune.space", "search-space preset: manual or narrow",
         [](Config& c, const std::string& v) { c.tune_space = v; },
         [](const Config& c) { return c.tune_space; }},
        {"tune.preset", "LSTM preset whose hyperparameters are tuned",
         [](Config& c, const std::string& v) { c.tune_preset = v; },
         [](const Config& c) { return c.tune_preset; }},
        {"tune.max_rows", "training-row cap per trial (0: no cap)",
         [](Config& c, const std::string& v) {
             c.tune_max_rows = static_cast<int>(io::parse_int(v));
         },
         [](const Config& c) { return std::to_string(c.tune_max_rows); }},
        {"tune.solver", "solver used by tuning trials",
         [](Config& c, const std::string& v) {
             c.tune_solver = solver_from_string(v);
         },
         [](const Config& c) { return std::string(to_string(c.tune_solver)); }},
    };
    return handlers;
}

void check(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
}

void validate(const Config& c) {
    check(c.network_file.empty() ? c.grid_rows >= 2 && c.grid_cols >= 2 : true,
          "grid must be at least 2x2");
    check(c.spacing_m > 0, "network.spacing_m must be positive");
    check(!c.lane_choices.empty(), "network.lane_choices is empty");
    check(!c.ffs_choices.empty(), "network.ffs_choices is empty");
    for (int l : c.lane_choices) check(l >= 1, "lane counts must be >= 1");
    for (double f : c.ffs_choices) check(f > 0, "ffs choices must be positive");
    check(c.horizon_s > 0, "sim.horizon_s must be positive");
    check(c.base_vehicles >= 1, "sim.base_vehicles must be >= 1");
    check(c.od_pairs >= 1, "sim.od_pairs must be >= 1");
    check(c.reroute_interval_s >= 1, "sim.reroute_interval_s must be >= 1");
    check(!c.scenarios.empty(), "sim.scenarios is empty");
    for (const ScenarioSpec& sc : c.scenarios)
        check(sc.demand_factor > 0, "demand factors must be positive");
    check(c.interval_s == 30 || c.interval_s == 60,
          "agg.interval_s must be 30 or 60");
    check(c.n_seq >= 1, "dataset.n_seq must be >= 1");
    check(c.correlate_window >= 2, "correlate.window must be >= 2");
    check(!c.lstm_presets.empty(), "lstm.presets is empty");
    for (const std::string& p : c.lstm_presets) {
        try {
            lstm_preset(p);
        } catch (const std::exception& e) {
            check(false, e.what());
        }
    }
    check(c.lstm_hidden_units >= 1, "lstm.hidden_units must be >= 1");
    check(c.lstm_initial_learning_rate > 0,
          "lstm.initial_learning_rate must be positive");
    check(c.lstm_momentum >= 0 && c.lstm_momentum < 1,
          "lstm.momentum must be in [0,1)");
    check(c.lstm_max_epochs >= 0, "lstm.max_epochs must be >= 0");
    check(c.lstm_lr_drop_factor > 0 && c.lstm_lr_drop_factor <= 1,
          "lstm.lr_drop_factor must be in (0,1]");
    check(c.lstm_lr_drop_period >= 1, "lstm.lr_drop_period must be >= 1");
    check(c.lstm_minibatch_size >= 1, "lstm.minibatch_size must be >= 1");
    check(c.arimax_links >= 1, "arimax.links must be >= 1");
    check(c.arimax_p >= 0 && c.arimax_q >= 0, "arimax orders must be >= 0");
    check(c.arimax_d >= 0 && c.arimax_d <= 2, "arimax.d must be in 0..2");
    const auto& names = feature_names_all();
    for (const std::string& e : c.arimax_exog)
        check(std::find(names.begin(), names.end(), e) != names.end(),
              "unknown arimax.exog feature '" + e + "'");
    check(!c.kmeans_k_list.empty(), "kmeans.k_list is empty");
    for (int k : c.kmeans_k_list) check(k >= 1, "k values must be >= 1");
    check(c.kmeans_elbow_max >= 1, "kmeans.elbow_max must be >= 1");
    check(c.tune_budget >= 4, "tune.budget must be >= 4");
    check(c.tune_space == "manual" || c.tune_space == "narrow",
          "tune.space must be manual or narrow");
    try {
        lstm_preset(c.tune_preset);
    } catch (const std::exception& e) {
        check(false, e.what());
    }
    check(c.tune_max_rows >= 0, "tune.max_rows must be >= 0");
}

// ------------------------------------------------------------- manifest

std::string path_of(const Config& cfg, const std::string& name) {
    return cfg.out_dir + "/" + name;
}

void update_manifest(const Config& cfg, const std::string& stage,
                     const std::vector<std::string>& artifacts) {
    const std::string path = path_of(cfg, manifest_name());
    json m = json::object();
    if (fs::exists(path)) m = json::parse(io::read_file(path));
    m["version"] = kVersion;
    m["root_seed"] = cfg.seed;
    json arts = json::object();
    for (const std::string& a : artifacts)
        arts[a] = "fnv1a64:" +
                  io::hex64(io::fnv1a64_bytes(io::read_file(path_of(cfg, a))));
    m["stages"][stage]["artifacts"] = arts;
    io::write_file(path, m.dump(2) + "\n");
}

void run_stage(const Config& cfg, const std::string& name,
               const std::vector<std::string>& artifacts,
               const std::function<void()>& body) {
    fs::create_directories(cfg.out_dir);
    try {
        body();
    } catch (const std::exception& e) {
        for (const std::string& a : artifacts) {
            std::error_code ec;
            fs::remove(path_of(cfg, a), ec);
        }
        throw StageError(name + ": " + e.what());
    }
    update_manifest(cfg, name, artifacts);
}

std::string need_file(const Config& cfg, const std::string& name,
                      const std::string& producer) {
    const std::string path = path_of(cfg, name);
    if (!fs::exists(path))
        throw std::runtime_error("missing input " + name + " (run " +
                                 producer + " first)");
    return io::read_file(path);
}

// ------------------------------------------------------ shared helpers

Network load_net(const Config& cfg) {
    return load_network(need_file(cfg, network_file_name(), "gen-network"));
}

std::vector<LinkIntervalRecord> load_link_records(const Config& cfg,
                                                  int interval_s) {
    return link_records_from_csv(
        need_file(cfg, link_records_name(interval_s), "aggregate"));
}

int preset_ordinal(const std::string& preset) {
    if (preset == "lstm1") return 0;
    if (preset == "lstm2") return 1;
    return 2;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

double rmse_of(const std::vector<double>& y_true,
               const std::vector<double>& y_pred) {
    double ss = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double d = y_pred[i] - y_true[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(y_true.size()));
}

void read_preds_csv(const std::string& text, std::vector<double>& y_true,
                    std::vector<double>& y_pred) {
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = io::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty()) continue;
        if (header) {
            if (line != "y_true,y_pred")
                throw std::runtime_error("bad predictions header: " + line);
            header = false;
            continue;
        }
        const std::vector<std::string> f = io::split(line, ',');
        if (f.size() != 2)
            throw std::runtime_error("bad predictions row: " + line);
        y_true.push_back(io::parse_double(f[0]));
        y_pred.push_back(io::parse_double(f[1]));
    }
}

// Dataset for one predictor set over the configured corpus.
SequenceDataset make_dataset(const Config& cfg,
                             const std::vector<LinkIntervalRecord>& rows,
                             const std::vector<std::string>& predictors) {
    return build_sequences(rows, predictors, cfg.n_seq);
}

}  // namespace

// ------------------------------------------------------------ config API

Config default_config() {
    Config c;
    c.scenarios = parse_scenarios(
        "0.7:exponential,1:uniform,1.3:normal,1.5:exponential,2:exponential");
    validate(c);
    return c;
}

Config parse_config(const std::string& text) {
    Config c = default_config();
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = io::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = io::trim(line.substr(0, eq));
        const std::string value = io::trim(line.substr(eq + 1));
        const auto& handlers = key_handlers();
        const auto it =
            std::find_if(handlers.begin(), handlers.end(),
                         [&](const KeyHandler& h) { return h.key == key; });
        if (it == handlers.end())
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": unknown key '" + key + "'");
        try {
            it->set(c, value);
        } catch (const std::exception& e) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": bad value for " + key + ": " + e.what());
        }
    }
    validate(c);
    return c;
}

Config load_config(const std::string& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    Config c = parse_config(text);
    apply_env_overrides(c);
    return c;
}

void apply_env_overrides(Config& cfg) {
    if (const char* out = std::getenv("ECOFORECAST_OUT"); out && *out)
        cfg.out_dir = out;
}

std::string config_help() {
    const Config defaults = default_config();
    std::string out = "Config keys (key = default):\n";
    for (const KeyHandler& h : key_handlers()) {
        std::string line = "  " + h.key + " = " + h.get(defaults);
        if (line.size() < 46) line.resize(46, ' ');
        out += line + " " + h.doc + "\n";
    }
    return out;
}

// ---------------------------------------------------------------- stages

void stage_gen_network(const Config& cfg) {
    run_stage(cfg, "gen-network", {network_file_name()}, [&] {
        const Network net =
            cfg.network_file.empty()
                ? generate_grid(cfg.grid_rows, cfg.grid_cols, cfg.spacing_m,
                                cfg.lane_choices, cfg.ffs_choices, cfg.seed)
                : load_network(io::read_file(cfg.network_file));
        io::write_file(path_of(cfg, network_file_name()),
                       export_network(net));
    });
}

void stage_simulate(const Config& cfg, int jobs) {
    std::vector<std::string> artifacts = {opmode_file_name(),
                                          sim_summary_name()};
    for (const ScenarioSpec& sc : cfg.scenarios)
        artifacts.push_back(emissions_file_name(sc.id));

    run_stage(cfg, "simulate", artifacts, [&] {
        const Network net = load_net(cfg);
        const OpModeTable table =
            cfg.opmode_file.empty()
                ? default_opmode_table()
                : opmode_table_from_csv(io::read_file(cfg.opmode_file));
        io::write_file(path_of(cfg, opmode_file_name()),
                       opmode_table_to_csv(table));

        // One OD table shared by every scenario; demand factors scale the
        // vehicle count, not the spatial pattern.
        std::vector<OdPair> od;
        {
            rng::Engine eng(rng::derive_seed(cfg.seed, "od_table", 0));
            const std::vector<int>& nodes = net.nodes();
            double total = 0.0;
            for (int i = 0; i < cfg.od_pairs; ++i) {
                OdPair p;
                p.origin = nodes[eng.below(nodes.size())];
                do {
                    p.destination = nodes[eng.below(nodes.size())];
                } while (p.destination == p.origin);
                p.weight = eng.uniform01();
                total += p.weight;
                od.push_back(p);
            }
            if (total <= 0.0) {
                for (OdPair& p : od) p.weight = 1.0 / od.size();
            } else {
                for (OdPair& p : od) p.weight /= total;
            }
        }

        const std::size_t n_sc = cfg.scenarios.size();
        std::vector<std::string> summary(n_sc);
        parallel_for(n_sc, jobs, [&](std::size_t i) {
            const ScenarioSpec& sc = cfg.scenarios[i];
            DemandScenario demand;
            demand.demand_factor = sc.demand_factor;
            demand.n_vehicles = static_cast<int>(std::max<long long>(
                1, std::llround(cfg.base_vehicles * sc.demand_factor)));
            demand.departure_distribution = sc.distribution;
            demand.horizon_s = cfg.horizon_s;
            demand.od_pairs = od;

            const SimResult res = run_scenario(
                net, demand, IdmParams{}, cfg.reroute_interval_s,
                rng::derive_seed(cfg.seed, "scenario",
                                 static_cast<std::uint64_t>(sc.id)));
            const std::vector<EmissionRecord> em =
                annotate(res.records, VehicleSpec{}, table);
            io::write_file(path_of(cfg, emissions_file_name(sc.id)),
                           emissions_to_csv(em));
            summary[i] = std::to_string(sc.id) + "," +
                         io::fmt_double(sc.demand_factor) + "," +
                         to_string(sc.distribution) + "," +
                         std::to_string(demand.n_vehicles) + "," +
                         std::to_string(res.end_time_s) + "," +
                         std::to_string(res.vehicles_arrived) + "," +
                         std::to_string(res.vehicles_unarrived);
        });
        std::string csv =
            "scenario_id,demand_factor,distribution,n_vehicles,end_time_s,"
            "arrived,unarrived\n";
        for (const std::string& row : summary) csv += row + "\n";
        io::write_file(path_of(cfg, sim_summary_name()), csv);
    });
}

void stage_aggregate(const Config& cfg, int jobs, int interval_override) {
    const int interval = interval_override ? interval_override : cfg.interval_s;
    if (interval != 30 && interval != 60)
        throw ConfigError("aggregate interval must be 30 or 60");

    run_stage(cfg, "aggregate", {link_records_name(interval)}, [&] {
        const Network net = load_net(cfg);
        const std::size_t n_sc = cfg.scenarios.size();
        std::vector<std::vector<LinkIntervalRecord>> per(n_sc);
        parallel_for(n_sc, jobs, [&](std::size_t i) {
            const int sid = cfg.scenarios[i].id;
            const std::vector<EmissionRecord> em = emissions_from_csv(
                need_file(cfg, emissions_file_name(sid), "simulate"));
            per[i] = aggregate(em, net, interval, sid);
        });
        std::vector<LinkIntervalRecord> all;
        for (std::vector<LinkIntervalRecord>& rows : per) {
            all.insert(all.end(), rows.begin(), rows.end());
            rows.clear();
        }
        io::write_file(path_of(cfg, link_records_name(interval)),
                       link_records_to_csv(all));
    });
}

void stage_correlate(const Config& cfg) {
    run_stage(cfg, "correlate", {lag_matrix_name(), ranking_name()}, [&] {
        const std::vector<LinkIntervalRecord> rows =
            load_link_records(cfg, cfg.interval_s);
        const LagCorrelationMatrix m =
            lag_matrix(rows, feature_names_all(), cfg.correlate_window);
        io::write_file(path_of(cfg, lag_matrix_name()), lag_matrix_to_csv(m));
        io::write_file(path_of(cfg, ranking_name()), rank_report(m));
    });
}

void stage_train_lstm(const Config& cfg, int jobs,
                      const std::string& preset_override) {
    std::vector<std::string> presets;
    if (preset_override.empty()) {
        presets = cfg.lstm_presets;
    } else {
        presets = {lower(preset_override)};
        lstm_preset(presets[0]);  // reject unknown names before running
    }

    std::vector<std::string> artifacts;
    for (const std::string& p : presets) {
        artifacts.push_back(lstm_model_name(p));
        artifacts.push_back(lstm_loss_name(p));
        artifacts.push_back(preds_name("lstm_" + p));
    }

    run_stage(cfg, "train-lstm", artifacts, [&] {
        const std::vector<LinkIntervalRecord> rows =
            load_link_records(cfg, cfg.interval_s);

        struct Out {
            std::string model_text;
            std::string loss_csv;
            std::string preds_csv;
        };
        std::vector<Out> outs(presets.size());
        parallel_for(presets.size(), jobs, [&](std::size_t i) {
            const LstmPreset preset = lstm_preset(presets[i]);
            SequenceDataset ds = make_dataset(cfg, rows, preset.predictors);
            split(ds, SplitScheme::lstm_80_20, cfg.seed);
            normalize(ds);

            LstmSpec spec;
            spec.n_layers = preset.n_layers;
            spec.hidden_units.assign(preset.n_layers, cfg.lstm_hidden_units);
            spec.n_seq = cfg.n_seq;
            spec.features = preset.predictors;

            TrainConfig tc;
            tc.solver = cfg.lstm_solver;
            tc.initial_learning_rate = cfg.lstm_initial_learning_rate;
            tc.momentum = cfg.lstm_momentum;
            tc.max_epochs = cfg.lstm_max_epochs;
            tc.lr_drop_factor = cfg.lstm_lr_drop_factor;
            tc.lr_drop_period = cfg.lstm_lr_drop_period;
            tc.minibatch_size = cfg.lstm_minibatch_size;
            tc.seed = rng::derive_seed(
                cfg.seed, "lstm_train",
                static_cast<std::uint64_t>(preset_ordinal(preset.name)));

            const TrainResult res = train(ds, spec, tc);
            outs[i].model_text = lstm_to_text(res.model);

            std::string loss = "epoch,train_loss\n";
            for (std::size_t e = 0; e < res.train_loss.size(); ++e)
                loss += std::to_string(e) + "," +
                        io::fmt_double(res.train_loss[e]) + "\n";
            outs[i].loss_csv = loss;

            const std::vector<double> preds =
                predict(res.model, ds, ds.split.test);
            std::vector<double> y_true;
            y_true.reserve(ds.split.test.size());
            for (std::size_t idx : ds.split.test)
                y_true.push_back(ds.targets[idx]);
            outs[i].preds_csv = scatter_csv(y_true, preds);
        });
        for (std::size_t i = 0; i < presets.size(); ++i) {
            io::write_file(path_of(cfg, lstm_model_name(presets[i])),
                           outs[i].model_text);
            io::write_file(path_of(cfg, lstm_loss_name(presets[i])),
                           outs[i].loss_csv);
            io::write_file(path_of(cfg, preds_name("lstm_" + presets[i])),
                           outs[i].preds_csv);
        }
    });
}

void stage_train_arimax(const Config& cfg, int jobs) {
    run_stage(
        cfg, "train-arimax",
        {arimax_fits_name(), arimax_forecast_name(), preds_name("arimax")},
        [&] {
            const std::vector<LinkIntervalRecord> rows =
                load_link_records(cfg, cfg.interval_s);

            // Representative links: quantile positions of the mean-GHG
            // ordering within the continuously trafficked pool. Mostly idle
            // links carry near-constant series that say nothing about the
            // estimator, so the pool prefers links active in most intervals.
            struct LinkStat {
                double ghg_sum = 0.0;
                long count = 0;
                long active = 0;
            };
            std::map<int, LinkStat> stats;
            for (const LinkIntervalRecord& r : rows) {
                LinkStat& st = stats[r.link_id];
                st.ghg_sum += r.ghg_gps;
                ++st.count;
                if (r.ghg_gps > 0.0) ++st.active;
            }
            std::vector<std::pair<double, int>> order;  // (mean, link_id)
            for (double min_activity : {0.9, 0.5, 0.0}) {
                for (const auto& [link, st] : stats) {
                    const double activity =
                        static_cast<double>(st.active) / st.count;
                    if (st.ghg_sum > 0.0 && activity >= min_activity)
                        order.emplace_back(st.ghg_sum / st.count, link);
                }
                if (static_cast<int>(order.size()) >= cfg.arimax_links) break;
                order.clear();
            }
            if (order.empty())
                throw std::runtime_error(
                    "every link has zero emissions; nothing to model");
            std::sort(order.begin(), order.end());
            const int n_links =
                std::min<int>(cfg.arimax_links, static_cast<int>(order.size()));
            std::set<std::size_t> picked_idx;
            for (int i = 0; i < n_links; ++i) {
                const double q =
                    static_cast<double>(i + 1) / (n_links + 1);
                std::size_t idx = static_cast<std::size_t>(
                    std::llround(q * (order.size() - 1)));
                while (picked_idx.count(idx)) idx = (idx + 1) % order.size();
                picked_idx.insert(idx);
            }
            std::vector<int> links;
            for (std::size_t idx : picked_idx) links.push_back(order[idx].second);
            std::sort(links.begin(), links.end());

            // Per (scenario, link) series, sorted by t.
            std::map<std::pair<int, int>, std::vector<LinkIntervalRecord>>
                series;
            for (const LinkIntervalRecord& r : rows)
                if (std::find(links.begin(), links.end(), r.link_id) !=
                    links.end())
                    series[{r.scenario_id, r.link_id}].push_back(r);

            struct Task {
                int link = 0;
                int scenario = 0;
                const std::vector<LinkIntervalRecord>* rows = nullptr;
            };
            std::vector<Task> tasks;
            for (int link : links)
                for (const ScenarioSpec& sc : cfg.scenarios) {
                    const auto it = series.find({sc.id, link});
                    if (it != series.end())
                        tasks.push_back({link, sc.id, &it->second});
                }

            struct TaskOut {
                std::string report;
                std::string forecast_rows;
                std::vector<double> y_true, y_pred;
            };
            std::vector<TaskOut> outs(tasks.size());
            parallel_for(tasks.size(), jobs, [&](std::size_t ti) {
                const Task& task = tasks[ti];
                const std::vector<LinkIntervalRecord>& lr = *task.rows;

                // Lag-1 exogenous alignment drops the first interval.
                std::vector<double> y;
                std::vector<std::vector<double>> ex(cfg.arimax_exog.size());
                for (std::size_t t = 1; t < lr.size(); ++t) {
                    y.push_back(lr[t].ghg_gps);
                    for (std::size_t k = 0; k < cfg.arimax_exog.size(); ++k)
                        ex[k].push_back(
                            feature_value(lr[t - 1], cfg.arimax_exog[k]));
                }
                const std::size_t n = y.size();
                const std::size_t ntr = n * 7 / 10;

                // Z-score each exog column with training statistics. A
                // near-constant raw column (speed pinned at free flow) makes
                // the intercept and its coefficient cancel each other at
                // arbitrary magnitude; standardized columns keep the
                // optimum at sane scale.
                for (std::vector<double>& col : ex) {
                    double m = 0.0;
                    for (std::size_t t = 0; t < ntr; ++t) m += col[t];
                    m /= static_cast<double>(ntr);
                    double var = 0.0;
                    for (std::size_t t = 0; t < ntr; ++t)
                        var += (col[t] - m) * (col[t] - m);
                    const double sd =
                        std::max(1e-8, std::sqrt(var / static_cast<double>(ntr)));
                    for (double& v : col) v = (v - m) / sd;
                }

                const std::vector<double> ytr(y.begin(), y.begin() + ntr);
                std::vector<std::vector<double>> extr;
                for (const std::vector<double>& col : ex)
                    extr.emplace_back(col.begin(), col.begin() + ntr);

                arimax::ArimaxSpec spec;
                if (cfg.arimax_auto_order) {
                    spec = arimax::auto_order(ytr, extr);
                } else {
                    spec.p = cfg.arimax_p;
                    spec.d = cfg.arimax_d;
                    spec.q = cfg.arimax_q;
                    spec.r = static_cast<int>(extr.size());
                }
                const arimax::ArimaxFit fit = arimax::fit(ytr, extr, spec);

                std::string rep = "link " + std::to_string(task.link) +
                                  " scenario " + std::to_string(task.scenario) +
                                  " (train n=" + std::to_string(ntr) + ")\n";
                for (int d = 0; d <= 2; ++d) {
                    rep += "unit_root d=" + std::to_string(d) + ": ";
                    try {
                        const arimax::UnitRootResult ur =
                            arimax::unit_root_score(arimax::difference(ytr, d));
                        rep += "t=" + io::fmt_double(ur.t_stat) +
                               (ur.stationary ? " stationary" : " non-stationary");
                    } catch (const std::exception&) {
                        rep += "n/a (series too short)";
                    }
                    rep += "\n";
                }
                rep += arimax::fit_report(fit);
                if (!fit.converged)
                    rep += "warning: simplex search hit its budget\n";
                if (!fit.ar_stationary)
                    rep += "warning: AR roots inside the unit circle\n";
                outs[ti].report = rep + "\n";

                for (std::size_t j = ntr; j < n; ++j) {
                    const std::vector<double> hist(y.begin(), y.begin() + j);
                    std::vector<std::vector<double>> exf;
                    for (const std::vector<double>& col : ex)
                        exf.emplace_back(col.begin(), col.begin() + j + 1);
                    const double pred = arimax::forecast(fit, hist, exf,
                                                         cfg.arimax_clamp);
                    outs[ti].forecast_rows +=
                        std::to_string(task.link) + "," +
                        std::to_string(j + 1) + "," + io::fmt_double(y[j]) +
                        "," + io::fmt_double(pred) + "\n";
                    outs[ti].y_true.push_back(y[j]);
                    outs[ti].y_pred.push_back(pred);
                }
            });

            std::string reports;
            std::string forecast = "link_id,t_index,y_true,y_pred\n";
            std::vector<double> y_true, y_pred;
            for (const TaskOut& o : outs) {
                reports += o.report;
                forecast += o.forecast_rows;
                y_true.insert(y_true.end(), o.y_true.begin(), o.y_true.end());
                y_pred.insert(y_pred.end(), o.y_pred.begin(), o.y_pred.end());
            }
            io::write_file(path_of(cfg, arimax_fits_name()), reports);
            io::write_file(path_of(cfg, arimax_forecast_name()), forecast);
            io::write_file(path_of(cfg, preds_name("arimax")),
                           scatter_csv(y_true, y_pred));
        });
}

void stage_train_kmeans(const Config& cfg, int jobs) {
    std::vector<std::string> artifacts = {elbow_name(),
                                          kmeans_validation_name()};
    for (int k : cfg.kmeans_k_list) {
        artifacts.push_back(kmeans_model_name(k));
        artifacts.push_back(preds_name("kmeans_k" + std::to_string(k)));
    }

    run_stage(cfg, "train-kmeans", artifacts, [&] {
        const std::vector<std::string> trio = {"speed", "density", "ghg_er"};
        const std::vector<LinkIntervalRecord> rows =
            load_link_records(cfg, cfg.interval_s);
        SequenceDataset ds = make_dataset(cfg, rows, trio);
        split(ds, SplitScheme::cluster_70_10_20, cfg.seed);

        const std::size_t dim = trio.size();
        const int last = cfg.n_seq - 1;  // lag-1 values sit in the last step

        // Normalization stats over the training points only.
        std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
        for (std::size_t idx : ds.split.train) {
            const double* p = ds.step(idx, last);
            for (std::size_t d = 0; d < dim; ++d) mean[d] += p[d];
        }
        for (double& m : mean) m /= static_cast<double>(ds.split.train.size());
        for (std::size_t idx : ds.split.train) {
            const double* p = ds.step(idx, last);
            for (std::size_t d = 0; d < dim; ++d)
                sd[d] += (p[d] - mean[d]) * (p[d] - mean[d]);
        }
        for (double& s : sd)
            s = std::max(1e-8, std::sqrt(s / static_cast<double>(
                                                 ds.split.train.size())));

        const auto points_of = [&](const std::vector<std::size_t>& idx) {
            std::vector<double> pts;
            pts.reserve(idx.size() * dim);
            for (std::size_t i : idx) {
                const double* p = ds.step(i, last);
                for (std::size_t d = 0; d < dim; ++d)
                    pts.push_back((p[d] - mean[d]) / sd[d]);
            }
            return pts;
        };
        const std::vector<double> xtr = points_of(ds.split.train);
        const std::vector<double> xval = points_of(ds.split.val);
        const std::vector<double> xte = points_of(ds.split.test);
        std::vector<double> ghg_tr;
        for (std::size_t i : ds.split.train) ghg_tr.push_back(ds.targets[i]);

        const std::size_t n_tr = ds.split.train.size();
        std::vector<kmeans::KmeansModel> models(cfg.kmeans_k_list.size());
        parallel_for(cfg.kmeans_k_list.size(), jobs, [&](std::size_t i) {
            const int k = cfg.kmeans_k_list[i];
            kmeans::KmeansModel m = kmeans::fit(
                xtr, n_tr, dim, k,
                rng::derive_seed(cfg.seed, "kmeans_fit",
                                 static_cast<std::uint64_t>(k)));
            kmeans::assign_cluster_ghg(m, xtr, n_tr, ghg_tr);
            m.feature_names = trio;
            m.norm_mean = mean;
            m.norm_sd = sd;
            models[i] = std::move(m);
        });

        const auto predict_all = [&](const kmeans::KmeansModel& m,
                                     const std::vector<double>& pts,
                                     std::size_t n) {
            std::vector<double> out(n);
            const std::vector<int> labels = kmeans::assign(m, pts, n);
            for (std::size_t i = 0; i < n; ++i)
                out[i] = m.cluster_ghg[labels[i]];
            return out;
        };

        std::string val_csv = "k,val_rmse\n";
        for (std::size_t i = 0; i < models.size(); ++i) {
            const kmeans::KmeansModel& m = models[i];
            io::write_file(path_of(cfg, kmeans_model_name(m.k)),
                           kmeans::model_to_text(m));

            std::vector<double> yv;
            for (std::size_t idx : ds.split.val) yv.push_back(ds.targets[idx]);
            const std::vector<double> pv =
                predict_all(m, xval, ds.split.val.size());
            val_csv += std::to_string(m.k) + "," +
                       io::fmt_double(rmse_of(yv, pv)) + "\n";

            std::vector<double> yt;
            for (std::size_t idx : ds.split.test) yt.push_back(ds.targets[idx]);
            const std::vector<double> pt =
                predict_all(m, xte, ds.split.test.size());
            io::write_file(
                path_of(cfg, preds_name("kmeans_k" + std::to_string(m.k))),
                scatter_csv(yt, pt));
        }
        io::write_file(path_of(cfg, kmeans_validation_name()), val_csv);

        const auto curve = kmeans::elbow_curve(
            xtr, n_tr, dim, 1, cfg.kmeans_elbow_max,
            rng::derive_seed(cfg.seed, "kmeans_elbow", 0), jobs);
        io::write_file(path_of(cfg, elbow_name()), kmeans::elbow_to_csv(curve));
    });
}

void stage_tune(const Config& cfg, int jobs) {
    run_stage(cfg, "tune", {tune_trials_name(), tuned_config_name()}, [&] {
        const LstmPreset preset = lstm_preset(cfg.tune_preset);
        const std::vector<LinkIntervalRecord> rows =
            load_link_records(cfg, cfg.interval_s);
        SequenceDataset base = make_dataset(cfg, rows, preset.predictors);
        split(base, SplitScheme::lstm_80_20, cfg.seed);

        // Objective: RMSE on a 10% carve-out of the training split. The
        // test split stays untouched.
        std::vector<std::size_t> carve = base.split.train;
        {
            rng::Engine eng(rng::derive_seed(cfg.seed, "tune_carve", 0));
            eng.shuffle(carve);
        }
        const std::size_t n_val = std::max<std::size_t>(1, carve.size() / 10);
        std::vector<std::size_t> val_idx(carve.begin(), carve.begin() + n_val);
        std::vector<std::size_t> train_idx(carve.begin() + n_val, carve.end());
        if (cfg.tune_max_rows > 0 &&
            train_idx.size() > static_cast<std::size_t>(cfg.tune_max_rows))
            train_idx.resize(cfg.tune_max_rows);
        std::sort(val_idx.begin(), val_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
        base.split.train = train_idx;
        base.split.val = val_idx;
        base.split.test.clear();

        const hyperopt::SearchSpace space =
            hyperopt::preset_space(cfg.tune_space, preset.n_layers == 2);
        const auto param_index = [&](const std::string& name) {
            for (std::size_t i = 0; i < space.params.size(); ++i)
                if (space.params[i].name == name) return i;
            throw std::runtime_error("search space lacks parameter " + name);
        };
        const std::size_t i_lr = param_index("initial_learning_rate");
        const std::size_t i_mom = param_index("momentum");
        const std::size_t i_epochs = param_index("max_epochs");
        const std::size_t i_drop = param_index("lr_drop_factor");
        const std::size_t i_period = param_index("lr_drop_period");
        const std::size_t i_h1 = param_index("hidden_units_layer1");
        const std::size_t i_h2 =
            preset.n_layers == 2 ? param_index("hidden_units_layer2") : 0;

        const std::uint64_t train_seed =
            rng::derive_seed(cfg.seed, "tune_train", 0);
        const auto objective = [&](const std::vector<double>& v) {
            TrainConfig tc;
            tc.solver = cfg.tune_solver;
            tc.initial_learning_rate = v[i_lr];
            tc.momentum = v[i_mom];
            tc.max_epochs = static_cast<int>(v[i_epochs]);
            tc.lr_drop_factor = v[i_drop];
            tc.lr_drop_period = static_cast<int>(v[i_period]);
            tc.minibatch_size = cfg.lstm_minibatch_size;
            tc.seed = train_seed;

            LstmSpec spec;
            spec.n_layers = preset.n_layers;
            spec.hidden_units = {static_cast<int>(v[i_h1])};
            if (preset.n_layers == 2)
                spec.hidden_units.push_back(static_cast<int>(v[i_h2]));
            spec.n_seq = cfg.n_seq;
            spec.features = preset.predictors;

            SequenceDataset ds = base;
            normalize(ds);
            const TrainResult res = train(ds, spec, tc);
            const std::vector<double> preds =
                predict(res.model, ds, ds.split.val);
            std::vector<double> y;
            for (std::size_t idx : ds.split.val) y.push_back(ds.targets[idx]);
            return rmse_of(y, preds);
        };

        const hyperopt::OptimizeResult result = hyperopt::optimize(
            objective, space, cfg.tune_budget,
            rng::derive_seed(cfg.seed, "tune", 0), jobs);

        io::write_file(path_of(cfg, tune_trials_name()),
                       hyperopt::trials_to_csv(space, result.history));

        std::string best = "preset=" + preset.name + "\n";
        best += "space=" + cfg.tune_space + "\n";
        best += "solver=" + std::string(to_string(cfg.tune_solver)) + "\n";
        for (std::size_t i = 0; i < space.params.size(); ++i)
            best += space.params[i].name + "=" +
                    io::fmt_double(result.best.values[i]) + "\n";
        best += "val_rmse=" + io::fmt_double(result.best.objective) + "\n";
        io::write_file(path_of(cfg, tuned_config_name()), best);
    });
}

void stage_evaluate(const Config& cfg) {
    run_stage(cfg, "evaluate", {metrics_name(), report_name()}, [&] {
        std::vector<ModelPredictions> models;
        const auto add = [&](const std::string& name,
                             const std::string& cohort,
                             const std::string& file,
                             const std::string& producer) {
            ModelPredictions mp;
            mp.name = name;
            mp.cohort = cohort;
            read_preds_csv(need_file(cfg, file, producer), mp.y_true,
                           mp.y_pred);
            models.push_back(std::move(mp));
        };
        for (const std::string& p : cfg.lstm_presets)
            add(p, "network", preds_name("lstm_" + p), "train-lstm");
        for (int k : cfg.kmeans_k_list)
            add("kmeans_k" + std::to_string(k), "network",
                preds_name("kmeans_k" + std::to_string(k)), "train-kmeans");
        add("arimax", "links4", preds_name("arimax"), "train-arimax");

        const std::vector<CompareRow> rows = compare(models);
        io::write_file(path_of(cfg, metrics_name()),
                       compare_rows_to_csv(rows));
        io::write_file(path_of(cfg, report_name()),
                       compare_report(rows, true));
    });
}

void run_pipeline(const Config& cfg, int jobs,
                  const std::function<void(const std::string&)>& progress) {
    using clock = std::chrono::steady_clock;
    const auto timed = [&](const char* name, const std::function<void()>& fn) {
        const auto t0 = clock::now();
        fn();
        if (progress) {
            const double secs =
                std::chrono::duration<double>(clock::now() - t0).count();
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.1fs", secs);
            progress(std::string(name) + " (" + buf + ")");
        }
    };
    timed("gen-network", [&] { stage_gen_network(cfg); });
    timed("simulate", [&] { stage_simulate(cfg, jobs); });
    timed("aggregate", [&] { stage_aggregate(cfg, jobs); });
    timed("correlate", [&] { stage_correlate(cfg); });
    timed("train-lstm", [&] { stage_train_lstm(cfg, jobs); });
    timed("train-arimax", [&] { stage_train_arimax(cfg, jobs); });
    timed("train-kmeans", [&] { stage_train_kmeans(cfg, jobs); });
    timed("tune", [&] { stage_tune(cfg, jobs); });
    timed("evaluate", [&] { stage_evaluate(cfg); });
}

}  // namespace ecoforecast::pipeline
