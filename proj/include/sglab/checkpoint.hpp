#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sglab/matrix.hpp"

namespace sglab {

// Versioned container of named f64 blobs. Layout: "SGCK" magic, u32 version,
// u64 blob count, then per blob (in map order, so files are deterministic):
// u32 name length, name bytes, u64 rows, u64 cols, row-major f64 payload.
// All integers and doubles little-endian. load -> save is byte-identical.
using BlobMap = std::map<std::string, Matrix>;

void save_blobs(const std::string& path, const BlobMap& blobs);
BlobMap load_blobs(const std::string& path);

// Scalars ride along as 1x1 blobs.
Matrix scalar_blob(double v);
double blob_scalar(const BlobMap& blobs, const std::string& key);
const Matrix& blob_at(const BlobMap& blobs, const std::string& key);

// ---------------------------------------------------------------------------
// Metrics log: JSONL, one object per logging interval, keys fixed:
// iteration, train_loss, sg_losses, w_sq_norms, grad_sq_norms, and optionally
// test_loss and eps_ratio. Keys are emitted sorted, so reruns are
// byte-identical.

struct ExperimentRecord {
    std::int64_t iteration = 0;
    double train_loss = 0.0;
    std::optional<double> test_loss;
    std::vector<double> sg_losses;     // per insertion, ascending boundary
    std::optional<double> eps_ratio;
    std::vector<double> w_sq_norms;    // per dense block, ||W||_F^2
    std::vector<double> grad_sq_norms; // per dense block, applied-gradient norm^2
};

std::string to_json_line(const ExperimentRecord& r);
ExperimentRecord record_from_json_line(const std::string& line);

// Writer validates finiteness of every field before emitting.
void write_jsonl(const std::string& path, const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> read_jsonl(const std::string& path);

} // namespace sglab
