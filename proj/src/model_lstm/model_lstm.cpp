#include "ecoforecast/model_lstm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ecoforecast/io.hpp"
#include "ecoforecast/kernels.hpp"
#include "ecoforecast/rng.hpp"

namespace ecoforecast {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("lstm: " + msg);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_spec(const LstmSpec& spec) {
    if (spec.n_layers != 1 && spec.n_layers != 2)
        fail("layer count must be 1 or 2");
    if (static_cast<int>(spec.hidden_units.size()) != spec.n_layers)
        fail("hidden_units must list one size per layer");
    for (int h : spec.hidden_units)
        if (h < 1) fail("hidden units must be positive");
    if (spec.n_seq < 1) fail("n_seq must be positive");
    if (spec.features.empty()) fail("feature list is empty");
}

// Per-sample forward caches, one CellCache per (layer, step).
using LayerCaches = std::vector<std::vector<CellCache>>;

double forward_cached(const LstmModel& model, const LstmLayout& layout,
                      const double* sequence, LayerCaches& caches) {
    const int n_seq = model.spec.n_seq;
    const int nf = static_cast<int>(model.spec.features.size());
    for (int l = 0; l < model.spec.n_layers; ++l) {
        const LstmLayout::Layer& ly = layout.layers[l];
        const double* w = model.theta.data() + ly.w_off;
        const double* b = model.theta.data() + ly.b_off;
        std::vector<CellCache>& steps = caches[l];
        steps.resize(n_seq);
        const std::vector<double> zeros(ly.hidden, 0.0);
        for (int t = 0; t < n_seq; ++t) {
            const double* x = l == 0 ? sequence + t * nf
                                     : caches[l - 1][t].h.data();
            const double* h_prev = t == 0 ? zeros.data()
                                          : steps[t - 1].h.data();
            const double* c_prev = t == 0 ? zeros.data()
                                          : steps[t - 1].c.data();
            cell_forward(w, b, ly.hidden, ly.input_dim, x, h_prev, c_prev,
                         steps[t]);
        }
    }
    const LstmLayout::Layer& top = layout.layers.back();
    const double* head_w = model.theta.data() + layout.head_w_off;
    const double head_b = model.theta[layout.head_b_off];
    return kernels::dot(head_w, caches.back()[n_seq - 1].h.data(), top.hidden) +
           head_b;
}

}  // namespace

LstmPreset lstm_preset(const std::string& name) {
    std::string key = name;
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (key == "lstm1") return {"lstm1", {"speed", "density", "ghg_er"}, 1};
    if (key == "lstm2")
        return {"lstm2", {"speed", "density", "ghg_er", "in_speed"}, 1};
    if (key == "lstm3")
        return {"lstm3", {"speed", "density", "ghg_er", "in_speed"}, 2};
    fail("unknown preset '" + name + "' (expected lstm1, lstm2, or lstm3)");
}

LstmLayout layout_of(const LstmSpec& spec) {
    check_spec(spec);
    LstmLayout layout;
    std::size_t off = 0;
    int input_dim = static_cast<int>(spec.features.size());
    for (int l = 0; l < spec.n_layers; ++l) {
        LstmLayout::Layer ly;
        ly.hidden = spec.hidden_units[l];
        ly.input_dim = input_dim;
        ly.w_off = off;
        off += static_cast<std::size_t>(4) * ly.hidden *
               (ly.hidden + ly.input_dim);
        ly.b_off = off;
        off += static_cast<std::size_t>(4) * ly.hidden;
        layout.layers.push_back(ly);
        input_dim = ly.hidden;
    }
    layout.head_w_off = off;
    off += spec.hidden_units.back();
    layout.head_b_off = off;
    layout.total = off + 1;
    return layout;
}

LstmModel init_model(const LstmSpec& spec, const NormStats& norm,
                     std::uint64_t seed) {
    const LstmLayout layout = layout_of(spec);
    LstmModel model;
    model.spec = spec;
    model.norm = norm;
    model.theta.assign(layout.total, 0.0);
    rng::Engine eng(rng::derive_seed(seed, "lstm_init", 0));
    for (const LstmLayout::Layer& ly : layout.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(ly.hidden));
        const std::size_t n_w =
            static_cast<std::size_t>(4) * ly.hidden * (ly.hidden + ly.input_dim);
        for (std::size_t i = 0; i < n_w; ++i)
            model.theta[ly.w_off + i] = eng.uniform(-bound, bound);
        // Forget-gate bias starts open so early training keeps memory.
        for (int u = 0; u < ly.hidden; ++u)
            model.theta[ly.b_off + ly.hidden + u] = 1.0;
    }
    const double bound =
        1.0 / std::sqrt(static_cast<double>(spec.hidden_units.back()));
    for (int u = 0; u < spec.hidden_units.back(); ++u)
        model.theta[layout.head_w_off + u] = eng.uniform(-bound, bound);
    return model;
}

void cell_forward(const double* w, const double* b, int hidden, int input_dim,
                  const double* x, const double* h_prev, const double* c_prev,
                  CellCache& cache) {
    const int H = hidden;
    const int D = input_dim;
    for (int i = 0; i < D; ++i)
        if (!std::isfinite(x[i])) fail("non-finite cell input");
    for (int i = 0; i < H; ++i)
        if (!std::isfinite(h_prev[i]) || !std::isfinite(c_prev[i]))
            fail("non-finite cell state");

    cache.xcat.resize(H + D);
    std::copy(h_prev, h_prev + H, cache.xcat.begin());
    std::copy(x, x + D, cache.xcat.begin() + H);

    std::vector<double> a(4 * H);
    kernels::matvec(w, cache.xcat.data(), b, a.data(), 4 * H, H + D);

    cache.i.resize(H);
    cache.f.resize(H);
    cache.o.resize(H);
    cache.g.resize(H);
    cache.c.resize(H);
    cache.tanh_c.resize(H);
    cache.h.resize(H);
    for (int u = 0; u < H; ++u) {
        cache.i[u] = sigmoid(a[u]);
        cache.f[u] = sigmoid(a[H + u]);
        cache.o[u] = sigmoid(a[2 * H + u]);
        cache.g[u] = std::tanh(a[3 * H + u]);
        cache.c[u] = cache.f[u] * c_prev[u] + cache.i[u] * cache.g[u];
        cache.tanh_c[u] = std::tanh(cache.c[u]);
        cache.h[u] = cache.o[u] * cache.tanh_c[u];
    }
}

double forward(const LstmModel& model, const double* sequence) {
    const LstmLayout layout = layout_of(model.spec);
    LayerCaches caches(model.spec.n_layers);
    return forward_cached(model, layout, sequence, caches);
}

double batch_loss(const LstmModel& model, const SequenceDataset& dataset,
                  const std::vector<std::size_t>& indices) {
    if (indices.empty()) return 0.0;
    const LstmLayout layout = layout_of(model.spec);
    LayerCaches caches(model.spec.n_layers);
    double loss = 0.0;
    for (std::size_t idx : indices) {
        const double pred = forward_cached(model, layout, dataset.row(idx),
                                           caches);
        const double e = pred - dataset.targets[idx];
        loss += 0.5 * e * e;
    }
    return loss / indices.size();
}

std::vector<double> batch_gradient(const LstmModel& model,
                                   const SequenceDataset& dataset,
                                   const std::vector<std::size_t>& indices,
                                   double* loss_out) {
    const LstmLayout layout = layout_of(model.spec);
    std::vector<double> grad(layout.total, 0.0);
    if (indices.empty()) {
        if (loss_out) *loss_out = 0.0;
        return grad;
    }
    if (static_cast<int>(dataset.n_features()) !=
            static_cast<int>(model.spec.features.size()) ||
        dataset.n_seq != model.spec.n_seq)
        fail("dataset shape does not match the model");

    const int n_seq = model.spec.n_seq;
    const int n_layers = model.spec.n_layers;
    LayerCaches caches(n_layers);
    // dh_ext[l][t]: gradient flowing into layer l's h_t from above (head or
    // the next layer's input slot).
    std::vector<std::vector<std::vector<double>>> dh_ext(n_layers);
    for (int l = 0; l < n_layers; ++l) {
        dh_ext[l].assign(n_seq,
                         std::vector<double>(layout.layers[l].hidden, 0.0));
    }

    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(indices.size());
    for (std::size_t idx : indices) {
        const double pred =
            forward_cached(model, layout, dataset.row(idx), caches);
        const double err = pred - dataset.targets[idx];
        loss += 0.5 * err * err;
        const double dy = err * inv_b;

        for (int l = 0; l < n_layers; ++l)
            for (int t = 0; t < n_seq; ++t)
                std::fill(dh_ext[l][t].begin(), dh_ext[l][t].end(), 0.0);

        const LstmLayout::Layer& top = layout.layers.back();
        const double* head_w = model.theta.data() + layout.head_w_off;
        const double* h_last = caches.back()[n_seq - 1].h.data();
        kernels::axpy(dy, h_last, grad.data() + layout.head_w_off, top.hidden);
        grad[layout.head_b_off] += dy;
        kernels::axpy(dy, head_w, dh_ext[n_layers - 1][n_seq - 1].data(),
                      top.hidden);

        for (int l = n_layers - 1; l >= 0; --l) {
            const LstmLayout::Layer& ly = layout.layers[l];
            const int H = ly.hidden;
            const int D = ly.input_dim;
            const double* w = model.theta.data() + ly.w_off;
            double* gw = grad.data() + ly.w_off;
            double* gb = grad.data() + ly.b_off;

            std::vector<double> dh_rec(H, 0.0);
            std::vector<double> dc_rec(H, 0.0);
            std::vector<double> da(4 * H);
            std::vector<double> dxcat(H + D);
            for (int t = n_seq - 1; t >= 0; --t) {
                const CellCache& cc = caches[l][t];
                const double* c_prev =
                    t == 0 ? nullptr : caches[l][t - 1].c.data();
                for (int u = 0; u < H; ++u) {
                    const double dh = dh_ext[l][t][u] + dh_rec[u];
                    const double th = cc.tanh_c[u];
                    const double dc =
                        dc_rec[u] + dh * cc.o[u] * (1.0 - th * th);
                    const double do_ = dh * th;
                    const double di = dc * cc.g[u];
                    const double df = dc * (c_prev ? c_prev[u] : 0.0);
                    const double dg = dc * cc.i[u];
                    da[u] = di * cc.i[u] * (1.0 - cc.i[u]);
                    da[H + u] = df * cc.f[u] * (1.0 - cc.f[u]);
                    da[2 * H + u] = do_ * cc.o[u] * (1.0 - cc.o[u]);
                    da[3 * H + u] = dg * (1.0 - cc.g[u] * cc.g[u]);
                    dc_rec[u] = dc * cc.f[u];
                }
                std::fill(dxcat.begin(), dxcat.end(), 0.0);
                for (int r = 0; r < 4 * H; ++r) {
                    const double* w_row =
                        w + static_cast<std::size_t>(r) * (H + D);
                    double* gw_row =
                        gw + static_cast<std::size_t>(r) * (H + D);
                    kernels::axpy(da[r], cc.xcat.data(), gw_row, H + D);
                    kernels::axpy(da[r], w_row, dxcat.data(), H + D);
                    gb[r] += da[r];
                }
                std::copy(dxcat.begin(), dxcat.begin() + H, dh_rec.begin());
                if (l > 0) {
                    for (int u = 0; u < D; ++u)
                        dh_ext[l - 1][t][u] += dxcat[H + u];
                }
            }
        }
    }
    if (loss_out) *loss_out = loss * inv_b;
    return grad;
}

Solver solver_from_string(const std::string& s) {
    if (s == "sgdm") return Solver::sgdm;
    if (s == "adam") return Solver::adam;
    fail("unknown solver '" + s + "'");
}

const char* to_string(Solver s) {
    return s == Solver::sgdm ? "sgdm" : "adam";
}

double effective_learning_rate(const TrainConfig& config, int epoch) {
    if (config.lr_drop_period < 1) fail("lr_drop_period must be positive");
    const int drops = epoch / config.lr_drop_period;
    return config.initial_learning_rate *
           std::pow(config.lr_drop_factor, drops);
}

void solver_step(std::vector<double>& theta, const std::vector<double>& grad,
                 SolverState& state, const TrainConfig& config, int epoch) {
    if (theta.size() != grad.size()) fail("gradient shape mismatch");
    const std::size_t n = theta.size();
    const double lr = effective_learning_rate(config, epoch);
    if (config.solver == Solver::sgdm) {
        if (state.velocity.size() != n) state.velocity.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            state.velocity[i] = config.momentum * state.velocity[i] -
                                lr * grad[i];
            theta[i] += state.velocity[i];
        }
        return;
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    if (state.m.size() != n) state.m.assign(n, 0.0);
    if (state.v.size() != n) state.v.assign(n, 0.0);
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

TrainResult train(const SequenceDataset& dataset, const LstmSpec& spec,
                  const TrainConfig& config) {
    if (config.minibatch_size < 1) fail("minibatch size must be positive");
    if (config.max_epochs < 0) fail("max_epochs must be >= 0");
    if (dataset.split.train.empty()) fail("dataset has no training split");
    if (dataset.norm.mean.empty())
        fail("dataset must be normalized before training");

    TrainResult result;
    result.model = init_model(spec, dataset.norm, config.seed);
    if (config.max_epochs == 0) return result;

    SolverState state;
    std::vector<std::size_t> order = dataset.split.train;
    std::vector<double> best_theta;
    double best_val = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        rng::Engine eng(rng::derive_seed(config.seed, "lstm_epoch",
                                         static_cast<std::uint64_t>(epoch)));
        eng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += config.minibatch_size) {
            const std::size_t stop =
                std::min(order.size(),
                         start + static_cast<std::size_t>(config.minibatch_size));
            const std::vector<std::size_t> batch(order.begin() + start,
                                                 order.begin() + stop);
            double loss = 0.0;
            const std::vector<double> grad =
                batch_gradient(result.model, dataset, batch, &loss);
            if (!std::isfinite(loss))
                fail("non-finite training loss at epoch " +
                     std::to_string(epoch) + " (diverging learning rate?)");
            epoch_loss += loss * batch.size();
            seen += batch.size();
            solver_step(result.model.theta, grad, state, config, epoch);
        }
        result.train_loss.push_back(epoch_loss / seen);
        if (!dataset.split.val.empty()) {
            const double vl =
                batch_loss(result.model, dataset, dataset.split.val);
            result.val_loss.push_back(vl);
            if (vl < best_val) {
                best_val = vl;
                best_theta = result.model.theta;
                result.best_epoch = epoch;
            }
        }
    }
    if (!best_theta.empty()) {
        result.model.theta = std::move(best_theta);
    } else {
        result.best_epoch = config.max_epochs - 1;
    }
    return result;
}

std::vector<double> predict(const LstmModel& model,
                            const SequenceDataset& dataset,
                            const std::vector<std::size_t>& indices) {
    const LstmLayout layout = layout_of(model.spec);
    LayerCaches caches(model.spec.n_layers);
    std::vector<double> out;
    out.reserve(indices.size());
    for (std::size_t idx : indices) {
        const double raw =
            forward_cached(model, layout, dataset.row(idx), caches);
        out.push_back(std::max(0.0, raw));
    }
    return out;
}

std::string lstm_to_text(const LstmModel& model) {
    std::string out = "lstm_model_v1\n";
    out += "n_layers," + std::to_string(model.spec.n_layers) + "\n";
    out += "hidden_units";
    for (int h : model.spec.hidden_units) out += "," + std::to_string(h);
    out += "\n";
    out += "n_seq," + std::to_string(model.spec.n_seq) + "\n";
    out += "features";
    for (const std::string& f : model.spec.features) out += "," + f;
    out += "\n";
    out += "norm_mean";
    for (double v : model.norm.mean) out += "," + io::fmt_double(v);
    out += "\n";
    out += "norm_sd";
    for (double v : model.norm.sd) out += "," + io::fmt_double(v);
    out += "\n";
    out += "theta," + std::to_string(model.theta.size()) + "\n";
    for (double v : model.theta) out += io::fmt_double(v) + "\n";
    out += "end\n";
    return out;
}

LstmModel lstm_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    const auto next_line = [&](const std::string& what) {
        if (!std::getline(in, line)) fail("truncated model file at " + what);
        return io::trim(line);
    };
    if (next_line("header") != "lstm_model_v1")
        fail("not an lstm model file");

    LstmModel model;
    std::vector<std::string> f = io::split(next_line("n_layers"), ',');
    if (f.size() != 2 || f[0] != "n_layers") fail("bad n_layers line");
    model.spec.n_layers = io::parse_int(f[1]);

    f = io::split(next_line("hidden_units"), ',');
    if (f.size() < 2 || f[0] != "hidden_units") fail("bad hidden_units line");
    for (std::size_t i = 1; i < f.size(); ++i)
        model.spec.hidden_units.push_back(io::parse_int(f[i]));

    f = io::split(next_line("n_seq"), ',');
    if (f.size() != 2 || f[0] != "n_seq") fail("bad n_seq line");
    model.spec.n_seq = io::parse_int(f[1]);

    f = io::split(next_line("features"), ',');
    if (f.size() < 2 || f[0] != "features") fail("bad features line");
    for (std::size_t i = 1; i < f.size(); ++i)
        model.spec.features.push_back(f[i]);

    f = io::split(next_line("norm_mean"), ',');
    if (f.empty() || f[0] != "norm_mean") fail("bad norm_mean line");
    for (std::size_t i = 1; i < f.size(); ++i)
        model.norm.mean.push_back(io::parse_double(f[i]));

    f = io::split(next_line("norm_sd"), ',');
    if (f.empty() || f[0] != "norm_sd") fail("bad norm_sd line");
    for (std::size_t i = 1; i < f.size(); ++i)
        model.norm.sd.push_back(io::parse_double(f[i]));

    f = io::split(next_line("theta"), ',');
    if (f.size() != 2 || f[0] != "theta") fail("bad theta line");
    const long count = io::parse_int(f[1]);
    model.theta.reserve(count);
    for (long i = 0; i < count; ++i)
        model.theta.push_back(io::parse_double(next_line("theta values")));
    if (next_line("trailer") != "end") fail("missing end marker");

    const LstmLayout layout = layout_of(model.spec);
    if (layout.total != model.theta.size())
        fail("parameter count does not match the declared shape");
    return model;
}

}  // namespace ecoforecast
