#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sglab/data.hpp"
#include "sglab/matrix.hpp"
#include "sglab/network.hpp"
#include "sglab/sg.hpp"
#include "sglab/trainer.hpp"

namespace sglab {

// Spearman rank correlation with average ranks on ties. A constant input has
// no ordering information; the correlation is defined as 0 for that case.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Per-sample loss, one value per row. The mse path matches loss_value's mean
// reduction up to the 1/n factor: 0.5 ||p_i - y_i||^2 per row, and the
// logloss path is the per-row cross entropy under a row-wise softmax.
std::vector<double> per_row_loss(LossKind kind, const Matrix& pred, const Matrix& target);

// ---------------------------------------------------------------------------
// Implicit loss shape carried by a linear gradient model: integrating
// SG(h, y) = hA + yB + C over h gives 0.5 h A h^T + (yB + C) h^T up to a
// constant, which is fixed to 0 (only the shape is comparable). h and y are
// single rows. Works for the full linear module and both ablations; sigmoid
// and constant modules have no closed-form potential here and raise
// ValueError.
double reconstruct_loss(const SGModule& sg, const Matrix& h, const Matrix& y);

// ---------------------------------------------------------------------------
// Loss-surface experiment: train on a 2-D grid dataset and, every
// snapshot_every iterations, record the true per-point loss next to each
// gradient model's reconstructed loss over the whole grid.

struct LossSurface {
    std::int64_t iteration = 0;
    std::vector<double> xs, ys;                     // grid coordinates per point
    std::vector<double> true_loss;                  // per point
    std::vector<std::vector<double>> reconstructed; // [module][point], boundary order
};

struct LossSurfaceRun {
    std::vector<LossSurface> surfaces;
    TrainResult result;
};

LossSurfaceRun loss_surface_experiment(const NetworkSpec& spec, const TrainConfig& config,
                                       const GridDataset& grid, std::int64_t snapshot_every);

// One surface from an existing state (e.g. a restored checkpoint), tagged
// with the state's iteration counter.
LossSurface loss_surface_snapshot(const TrainState& state, const GridDataset& grid);

// Rank fidelity of each module's reconstruction against the true loss,
// [module] order as in the surface.
std::vector<double> surface_rank_correlations(const LossSurface& surface);

// CSV: x,y,true,recon_0,...,recon_{m-1}; resolution^2 rows per surface.
void write_loss_surface_csv(const std::string& path, const LossSurface& surface);

// ---------------------------------------------------------------------------
// Representational dissimilarity: entry (i, j) = 1 - pearson(row i, row j).
// Rows with no variance correlate with nothing: their correlation is treated
// as 0 (entry 1). Diagonal is 0 by definition, entries clamped to [0, 2].
// Needs at least 2 feature columns.
Matrix compute_rdm(const Matrix& activations);

struct RdmBlockStats {
    double mean_within = 0.0;  // average dissimilarity across same-label pairs
    double mean_between = 0.0; // across different-label pairs
};
RdmBlockStats rdm_block_stats(const Matrix& rdm, const std::vector<int>& labels);

// Distance of each layer's within-class (same-label) dissimilarity pattern
// from the final layer's: sqrt of the summed squared differences over all
// same-label pairs. Last entry is 0 by construction.
std::vector<double> rdm_distance_profile(const std::vector<Matrix>& rdms,
                                         const std::vector<int>& labels);

void write_rdm_csv(const std::string& path, const Matrix& rdm);

// ---------------------------------------------------------------------------
// Linear probes on frozen activations. The probe owns its own parameters and
// never touches the producing network. Budget: 2000 Adam steps at lr 1e-3,
// minibatches of at most 256 rows, deterministic.

struct ClassifierProbeResult {
    double accuracy = 0.0;      // on the full probed set
    bool degenerate = false;    // every feature column was constant
};
ClassifierProbeResult linear_probe_classifier(const Matrix& activations,
                                              const std::vector<int>& labels);

struct RegressorProbeResult {
    double mse = 0.0;           // mean-reduction mse on the full probed set
    bool degenerate = false;
};
RegressorProbeResult linear_probe_regressor(const Matrix& activations, const Matrix& inputs);

// Output of every block on x (eval mode, the network is copied internally):
// entry b is the representation after blocks 0..b.
std::vector<Matrix> layer_activations(const Network& net, const Matrix& x);

// ---------------------------------------------------------------------------
// ||W_l||_F^2 per dense layer, normalized to sum to 1. All-zero networks have
// no profile and raise ValueError.
std::vector<double> weight_norm_profile(const Network& net);

// CSV: layer,<name> with one row per entry.
void write_profile_csv(const std::string& path, const std::string& name,
                       const std::vector<double>& values);

} // namespace sglab
