#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sglab/matrix.hpp"
#include "sglab/rng.hpp"

namespace sglab {

enum class ActKind { relu, sigmoid };
ActKind act_kind_from_string(const std::string& s);
std::string to_string(ActKind k);

enum class Mode { train, eval };

struct DenseLayer {
    Matrix W; // [in, out]
    Matrix b; // [1, out]
    DenseLayer() = default;
    // W ~ N(0, 1/in), b = 0
    DenseLayer(std::size_t in, std::size_t out, Rng& rng);
    std::size_t in_dim() const { return W.rows(); }
    std::size_t out_dim() const { return W.cols(); }
};

Matrix dense_forward(const DenseLayer& layer, const Matrix& x);

struct DenseGrads {
    Matrix dW, db;
};
// upstream = dL/d(output); returns dL/d(input) and fills grads.
Matrix dense_backward(const DenseLayer& layer, const Matrix& x, const Matrix& upstream,
                      DenseGrads& grads);

Matrix act_forward(ActKind kind, const Matrix& x);
// x: forward input, out: forward output (whichever the derivative needs).
Matrix act_backward(ActKind kind, const Matrix& x, const Matrix& out, const Matrix& upstream);

struct BatchNormLayer {
    Matrix gamma, beta;              // [1, d]
    Matrix running_mean, running_var; // population estimates, momentum-averaged
    double momentum = 0.9;
    double eps = 1e-5;
    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t d, double momentum = 0.9, double eps = 1e-5);
    std::size_t dim() const { return gamma.cols(); }
};

struct BnCache {
    Matrix xhat;    // normalized, pre-scale
    Matrix inv_std; // [1, d], the normalizer actually applied
    Mode mode = Mode::train;
};

// Train mode normalizes by batch statistics and folds them into the running
// estimates; eval mode applies the frozen affine map. Mode is always explicit.
Matrix bn_forward(BatchNormLayer& layer, const Matrix& x, Mode mode, BnCache& cache);

struct BnGrads {
    Matrix dgamma, dbeta;
};
Matrix bn_backward(const BatchNormLayer& layer, const BnCache& cache, const Matrix& upstream,
                   BnGrads& grads);

enum class LossKind { mse, logloss };
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

enum class Reduction { mean, sum };

Matrix softmax_rows(const Matrix& p);
// Every row must be exactly one-hot (entries 0/1, summing to 1).
void check_one_hot(const Matrix& y);

// mse: (1/n) * sum_rows 0.5 ||p - y||^2 ; logloss: mean softmax cross-entropy.
// Reduction::sum drops the 1/n (the dynamics module uses that convention).
double loss_value(LossKind kind, const Matrix& pred, const Matrix& target,
                  Reduction red = Reduction::mean);
Matrix loss_grad(LossKind kind, const Matrix& pred, const Matrix& target,
                 Reduction red = Reduction::mean);

// Fraction of rows where argmax(pred) == argmax(onehot).
double accuracy(const Matrix& pred, const Matrix& onehot);

struct AdamConfig {
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Matrix m, v;
    std::int64_t t = 0;
    static AdamState like(const Matrix& param) {
        return AdamState{Matrix(param.rows(), param.cols()), Matrix(param.rows(), param.cols()), 0};
    }
};

// Standard bias-corrected Adam. Throws NumericError naming `name` on a
// non-finite gradient.
void adam_step(AdamState& state, Matrix& param, const Matrix& grad, const AdamConfig& cfg,
               const std::string& name);

// One block: dense, then optional batchnorm, then optional activation.
// Output blocks are plain dense; softmax lives inside the logloss.
struct Block {
    DenseLayer dense;
    std::optional<BatchNormLayer> bn;
    std::optional<ActKind> act;
    std::size_t in_dim() const { return dense.in_dim(); }
    std::size_t out_dim() const { return dense.out_dim(); }
};

struct Network {
    std::vector<Block> blocks;
    LossKind loss = LossKind::mse;
    std::size_t in_dim() const { return blocks.front().in_dim(); }
    std::size_t out_dim() const { return blocks.back().out_dim(); }
};

// dims = [in, hidden..., out]; every hidden block gets bn/act per the flags
// (act = nullopt builds a deep linear stack).
Network build_network(const std::vector<std::size_t>& dims, std::optional<ActKind> act,
                      bool batchnorm, LossKind loss, Rng& rng);

struct BlockCache {
    Matrix x;      // block input
    Matrix z;      // dense output
    BnCache bn;
    Matrix act_in; // activation input (z or bn output)
    Matrix out;    // block output
};

// Caches for a contiguous block range [first, first + blocks.size()).
struct ForwardCache {
    std::vector<BlockCache> blocks;
    std::size_t first = 0;
};

// Runs blocks [first, last) on x. Train mode updates BN running statistics.
Matrix forward_blocks(Network& net, const Matrix& x, Mode mode, std::size_t first,
                      std::size_t last, ForwardCache& cache);
Matrix forward_all(Network& net, const Matrix& x, Mode mode, ForwardCache& cache);
// Eval-mode forward that provably leaves the network untouched.
Matrix predict(const Network& net, const Matrix& x);

struct BlockGrads {
    DenseGrads dense;
    BnGrads bn;
};

struct SegmentGrads {
    std::vector<BlockGrads> blocks;
    std::size_t first = 0;
};

// upstream = dL/d(output of the cached range); returns dL/d(range input).
Matrix backward_blocks(const Network& net, const ForwardCache& cache, const Matrix& upstream,
                       SegmentGrads& grads);

struct BlockAdam {
    AdamState W, b, gamma, beta;
};
struct NetAdam {
    std::vector<BlockAdam> blocks;
};
NetAdam make_adam(const Network& net);

// One Adam step on every parameter covered by grads; l2 > 0 adds l2*W to the
// dense weight gradients (weights only, not biases or batchnorm).
void apply_grads(Network& net, NetAdam& adam, const SegmentGrads& grads, const AdamConfig& cfg,
                 double l2 = 0.0);

double grads_sq_norm(const SegmentGrads& grads);

} // namespace sglab
