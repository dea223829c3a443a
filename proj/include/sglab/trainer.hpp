#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sglab/checkpoint.hpp"
#include "sglab/data.hpp"
#include "sglab/network.hpp"
#include "sglab/sg.hpp"

namespace sglab {

// Boundary k (1-based) sits after block k; the activation there is block k's
// output. k = #blocks means "between the last block and the loss", so with
// the loss counted as a node, valid boundaries span [1, N-1], N = blocks + 1.
std::size_t default_boundary(std::size_t blocks); // ceil((blocks + 1) / 2)

struct NetworkSpec {
    std::vector<std::size_t> layer_dims;    // [in, hidden..., out]
    std::optional<ActKind> activation;      // nullopt = deep linear stack
    bool batchnorm = false;
    LossKind loss = LossKind::mse;
    std::vector<std::size_t> sg_insertions; // sorted unique boundaries; empty = none
    SGKind sg_kind = SGKind::linear;
    GradientMethod method;                  // how learning signals are produced

    std::size_t blocks() const { return layer_dims.size() - 1; }
};

// All boundaries strictly between consecutive blocks: 1..blocks-1.
std::vector<std::size_t> every_boundary(std::size_t blocks);

void validate_spec(const NetworkSpec& spec);

struct TrainConfig {
    std::int64_t iterations = 1000;
    std::size_t batch_size = 50;
    double lr_main = 3e-5;
    double lr_sg = 3e-5;
    std::uint64_t seed = 0;
    double l2_penalty = 0.0;     // applied to dense weights when > 0
    bool eps_monitor = false;    // record eps_ratio at logging intervals
    std::int64_t log_every = 10;
    double grad_norm_stop = 0.0; // stop when ||grad|| drops below; 0 disables
};

void validate_config(const TrainConfig& config);

// Everything a run owns. Batches are drawn from a per-iteration child stream
// of the seed, so state + iteration fully determine the remaining run.
struct TrainState {
    NetworkSpec spec;
    Network net;
    NetAdam adam;
    std::vector<SGModule> sgs; // parallel to spec.sg_insertions
    std::int64_t iteration = 0;

    // Test hook: when set, single-SG steps feed the lower segment this
    // instead of the module's prediction (e.g. an oracle returning the true
    // gradient). Never used by production paths.
    std::function<Matrix(const Matrix& h, const Matrix& y, const Matrix& dl_dh)> sg_oracle;
};

TrainState make_train_state(const NetworkSpec& spec, const TrainConfig& config);

// What one optimization step reports. train_loss and sg_losses are pre-step
// values; grad_sq_norms are the squared norms of the applied gradients.
struct StepMetrics {
    double train_loss = 0.0;
    std::vector<double> sg_losses;
    std::vector<double> grad_sq_norms; // per dense block
};

// All step functions use within-step snapshot semantics: every gradient and
// every SG target is computed from pre-step parameters, then all updates are
// applied. The three decoupled updates of a single-SG step therefore commute.
StepMetrics train_step_backprop(TrainState& state, const TrainConfig& config, const Matrix& x,
                                const Matrix& y);
StepMetrics train_step_single_sg(TrainState& state, const TrainConfig& config, const Matrix& x,
                                 const Matrix& y);
StepMetrics train_step_every_layer_sg(TrainState& state, const TrainConfig& config,
                                      const Matrix& x, const Matrix& y);
// fa / dfa / kickback.
StepMetrics train_step_conspiring(TrainState& state, const TrainConfig& config, const Matrix& x,
                                  const Matrix& y);
// Dispatches on spec.method / spec.sg_insertions and advances state.iteration.
StepMetrics train_step(TrainState& state, const TrainConfig& config, const Matrix& x,
                       const Matrix& y);

// The norm ratio ||SG - dl_dh|| * ||dh/dtheta||_F / ||dL/dtheta_lower||:
// the tracking quantity whose smallness the descent lemma needs. Exact
// per-unit Jacobian, so only run it on small nets.
double eps_ratio(const TrainState& state, const Matrix& x, const Matrix& y);

// Squared Frobenius norms of the dense weight matrices, per block.
std::vector<double> weight_sq_norms(const Network& net);

// ---------------------------------------------------------------------------

struct TrainResult {
    TrainState state;
    std::vector<ExperimentRecord> records;
    std::string metrics_path;    // empty when out_dir was empty
    std::string checkpoint_path; // empty when out_dir was empty
};

using SnapshotFn =
    std::function<void(const TrainState& state, std::int64_t iteration)>;

// Runs config.iterations steps (continuing from state.iteration when resumed),
// logging every config.log_every iterations plus the final one. When out_dir
// is non-empty, writes metrics.jsonl and checkpoint.sgck there. snapshot_every
// > 0 invokes the callback at that cadence (and at iteration 0).
TrainResult run_experiment(const NetworkSpec& spec, const TrainConfig& config,
                           const Dataset& train, const Dataset* test = nullptr,
                           const std::string& out_dir = "", SnapshotFn snapshot = {},
                           std::int64_t snapshot_every = 0);
// Same loop, but continuing from an existing state (e.g. one restored from a
// checkpoint).
TrainResult run_from(TrainState state, const TrainConfig& config, const Dataset& train,
                     const Dataset* test = nullptr, const std::string& out_dir = "",
                     SnapshotFn snapshot = {}, std::int64_t snapshot_every = 0);

// Checkpoint round trip: parameters, Adam states, SG modules, fixed feedback
// matrices, and enough metadata to rebuild the architecture without the
// original spec.
BlobMap state_to_blobs(const TrainState& state);
TrainState state_from_blobs(const BlobMap& blobs);
void save_train_state(const TrainState& state, const std::string& path);
TrainState load_train_state(const std::string& path);

} // namespace sglab
