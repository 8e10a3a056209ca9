#pragma once

// From-scratch exogenous-variable LSTM regressor: forward pass, exact BPTT
// gradients, sgdm/adam solvers with a step-decay schedule, and a linear head
// mapping the final hidden state to g/s.

#include <cstdint>
#include <string>
#include <vector>

#include "ecoforecast/features.hpp"

namespace ecoforecast {

struct LstmSpec {
    int n_layers = 1;                 // 1 or 2
    std::vector<int> hidden_units;    // one entry per layer
    int n_seq = 3;
    std::vector<std::string> features;
};

/// Named configurations: lstm1 = {speed, density, ghg_er} x 1 layer,
/// lstm2 = lstm1 + in_speed, lstm3 = lstm2 with a second layer.
struct LstmPreset {
    std::string name;
    std::vector<std::string> predictors;
    int n_layers = 1;
};
LstmPreset lstm_preset(const std::string& name);

/// All parameters live in one flat vector. Per layer, the four gate weight
/// matrices (order i, f, o, g) are stacked into a (4H x (H+D)) block acting
/// on [h_prev, x], followed by the 4H biases; the head (H_last weights plus
/// one bias) sits at the end.
struct LstmModel {
    LstmSpec spec;
    NormStats norm;  // feature scaling the model was trained with
    std::vector<double> theta;
};

struct LstmLayout {
    struct Layer {
        int hidden = 0;
        int input_dim = 0;
        std::size_t w_off = 0;  // 4H x (H+D), row-major
        std::size_t b_off = 0;  // 4H
    };
    std::vector<Layer> layers;
    std::size_t head_w_off = 0;
    std::size_t head_b_off = 0;
    std::size_t total = 0;
};
LstmLayout layout_of(const LstmSpec& spec);

/// Seeded initialization: weights uniform(-1/sqrt(H), +1/sqrt(H)) per layer,
/// biases 0 except the forget-gate bias at 1.
LstmModel init_model(const LstmSpec& spec, const NormStats& norm,
                     std::uint64_t seed);

/// One cell step. w is the stacked (4*hidden x (hidden+input_dim)) gate
/// matrix, b the 4*hidden biases. Gate activations and states are written to
/// the cache for reuse by the backward pass. Rejects non-finite inputs.
struct CellCache {
    std::vector<double> xcat;    // hidden + input_dim
    std::vector<double> i, f, o, g;
    std::vector<double> c, tanh_c, h;
};
void cell_forward(const double* w, const double* b, int hidden, int input_dim,
                  const double* x, const double* h_prev, const double* c_prev,
                  CellCache& cache);

/// Raw head output (no clamp) for one (n_seq x n_features) sequence,
/// unrolled from zero initial states.
double forward(const LstmModel& model, const double* sequence);

/// Mean over the index set of 0.5*(prediction - target)^2.
double batch_loss(const LstmModel& model, const SequenceDataset& dataset,
                  const std::vector<std::size_t>& indices);

/// Exact BPTT gradient of batch_loss with respect to every parameter.
std::vector<double> batch_gradient(const LstmModel& model,
                                   const SequenceDataset& dataset,
                                   const std::vector<std::size_t>& indices,
                                   double* loss_out = nullptr);

enum class Solver { sgdm, adam };
Solver solver_from_string(const std::string& s);
const char* to_string(Solver s);

struct TrainConfig {
    Solver solver = Solver::adam;
    double initial_learning_rate = 0.01;
    double momentum = 0.9;  // sgdm only
    int max_epochs = 30;
    double lr_drop_factor = 0.5;
    int lr_drop_period = 10;
    int minibatch_size = 128;
    std::uint64_t seed = 1;
};

/// initial_learning_rate * lr_drop_factor^floor(epoch / lr_drop_period),
/// epochs counted from 0.
double effective_learning_rate(const TrainConfig& config, int epoch);

struct SolverState {
    std::vector<double> velocity;  // sgdm
    std::vector<double> m, v;      // adam moments
    long step = 0;
};

/// In-place parameter update. sgdm: v <- mu*v - eta*g, theta <- theta + v.
/// adam: bias-corrected moment update with beta1=0.9, beta2=0.999, eps=1e-8.
void solver_step(std::vector<double>& theta, const std::vector<double>& grad,
                 SolverState& state, const TrainConfig& config, int epoch);

struct TrainResult {
    LstmModel model;
    std::vector<double> train_loss;  // per epoch, mean 0.5*err^2 over batches
    std::vector<double> val_loss;    // per epoch; empty without a val split
    int best_epoch = -1;             // epoch whose params were kept
};

/// Trains on dataset.split.train with seeded minibatch shuffling. When a
/// validation split exists the parameters from the best validation epoch are
/// returned, otherwise the final ones. Throws if the loss goes non-finite.
TrainResult train(const SequenceDataset& dataset, const LstmSpec& spec,
                  const TrainConfig& config);

/// One clamped (>= 0 g/s) prediction per index.
std::vector<double> predict(const LstmModel& model,
                            const SequenceDataset& dataset,
                            const std::vector<std::size_t>& indices);

/// Exact round-trip model serialization (%.17g decimal).
std::string lstm_to_text(const LstmModel& model);
LstmModel lstm_from_text(const std::string& text);

}  // namespace ecoforecast
