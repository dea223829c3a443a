#include "sglab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "sglab/errors.hpp"
#include "sglab/rng.hpp"

namespace sglab {

namespace {

// Child-stream layout: stream i < 2^62 draws batch i; the top streams cover
// initialization and the frozen feedback matrices.
constexpr std::uint64_t kInitStream = 1ull << 62;
constexpr std::uint64_t kFixedStreamBase = (1ull << 62) + 1;

} // namespace

std::size_t default_boundary(std::size_t blocks) {
    if (blocks == 0) throw ValueError("network has no blocks");
    return (blocks + 2) / 2; // ceil((blocks + 1) / 2)
}

std::vector<std::size_t> every_boundary(std::size_t blocks) {
    std::vector<std::size_t> ks;
    for (std::size_t k = 1; k < blocks; ++k) ks.push_back(k);
    return ks;
}

void validate_spec(const NetworkSpec& spec) {
    if (spec.layer_dims.size() < 2) {
        throw ConfigError("layer_dims needs at least an input and an output width");
    }
    for (std::size_t d : spec.layer_dims) {
        if (d == 0) throw ConfigError("layer widths must be positive");
    }
    const std::size_t blocks = spec.blocks();
    std::size_t prev = 0;
    for (std::size_t k : spec.sg_insertions) {
        if (k < 1 || k > blocks) {
            throw ConfigError("sg boundary " + std::to_string(k) + " outside [1, " +
                              std::to_string(blocks) + "]");
        }
        if (k <= prev) throw ConfigError("sg boundaries must be strictly increasing");
        prev = k;
    }
    using V = GradientMethod::Variant;
    switch (spec.method.variant) {
    case V::sg:
        if (spec.sg_insertions.empty()) {
            throw ConfigError("the sg method needs at least one boundary");
        }
        break;
    case V::sgprop:
        if (spec.sg_insertions.size() != 1) {
            throw ConfigError("sgprop supports exactly one boundary");
        }
        break;
    default:
        if (!spec.sg_insertions.empty()) {
            throw ConfigError(to_string(spec.method.variant) + " does not take sg boundaries");
        }
    }
}

void validate_config(const TrainConfig& config) {
    if (config.iterations <= 0) throw ConfigError("iterations must be positive");
    if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (config.lr_main <= 0.0 || config.lr_sg <= 0.0) {
        throw ConfigError("learning rates must be positive");
    }
    if (config.l2_penalty < 0.0) throw ConfigError("l2_penalty must be nonnegative");
    if (config.log_every <= 0) throw ConfigError("log_every must be positive");
    if (config.grad_norm_stop < 0.0) throw ConfigError("grad_norm_stop must be nonnegative");
}

TrainState make_train_state(const NetworkSpec& spec, const TrainConfig& config) {
    validate_spec(spec);
    validate_config(config);
    TrainState state;
    state.spec = spec;
    Rng init = Rng(config.seed).child(kInitStream);
    state.net = build_network(spec.layer_dims, spec.activation, spec.batchnorm, spec.loss, init);
    state.adam = make_adam(state.net);

    AdamConfig sg_opt;
    sg_opt.lr = config.lr_sg;
    for (std::size_t k : spec.sg_insertions) {
        state.sgs.push_back(make_sg(spec.sg_kind, spec.layer_dims[k], spec.layer_dims.back(),
                                    sg_opt));
    }

    using V = GradientMethod::Variant;
    const std::size_t blocks = spec.blocks();
    if (state.spec.method.fixed.empty()) {
        if (spec.method.variant == V::fa) {
            // per dense layer, same shape as its W; fixed[0] is never read
            for (std::size_t b = 0; b < blocks; ++b) {
                Rng r = Rng(config.seed).child(kFixedStreamBase + b);
                state.spec.method.fixed.push_back(
                    gaussian_matrix(r, spec.layer_dims[b], spec.layer_dims[b + 1], 0.0,
                                    1.0 / std::sqrt(static_cast<double>(spec.layer_dims[b]))));
            }
        } else if (spec.method.variant == V::dfa) {
            // per hidden block: delivers the output error to that block's output
            for (std::size_t b = 0; b + 1 < blocks; ++b) {
                Rng r = Rng(config.seed).child(kFixedStreamBase + b);
                state.spec.method.fixed.push_back(gaussian_matrix(
                    r, spec.layer_dims[b + 1], spec.layer_dims.back(), 0.0,
                    1.0 / std::sqrt(static_cast<double>(spec.layer_dims[b + 1]))));
            }
        }
    }
    return state;
}

namespace {

double checked_loss(const TrainState& state, const Matrix& pred, const Matrix& y) {
    const double loss = loss_value(state.net.loss, pred, y);
    if (!std::isfinite(loss)) {
        throw NumericError("training diverged: non-finite loss at iteration " +
                           std::to_string(state.iteration));
    }
    return loss;
}

// Backward through one block; when `feedback` is given, the dense layer's
// input gradient flows through it instead of W (feedback alignment).
Matrix block_backward(const Block& block, const BlockCache& cache, const Matrix& upstream,
                      BlockGrads& grads, const Matrix* feedback) {
    Matrix g = upstream;
    if (block.act) g = act_backward(*block.act, cache.act_in, cache.out, g);
    if (block.bn) g = bn_backward(*block.bn, cache.bn, g, grads.bn);
    Matrix dx = dense_backward(block.dense, cache.x, g, grads.dense);
    if (feedback) dx = matmul(g, transpose(*feedback));
    return dx;
}

double block_grads_sq(const BlockGrads& g) {
    return sum_sq(g.dense.dW) + sum_sq(g.dense.db) + sum_sq(g.bn.dgamma) + sum_sq(g.bn.dbeta);
}

void collect_grad_norms(const SegmentGrads& seg, std::vector<double>& out) {
    for (std::size_t i = 0; i < seg.blocks.size(); ++i) {
        out[seg.first + i] = block_grads_sq(seg.blocks[i]);
    }
}

} // namespace

std::vector<double> weight_sq_norms(const Network& net) {
    std::vector<double> out;
    out.reserve(net.blocks.size());
    for (const Block& b : net.blocks) out.push_back(sum_sq(b.dense.W));
    return out;
}

StepMetrics train_step_backprop(TrainState& state, const TrainConfig& config, const Matrix& x,
                                const Matrix& y) {
    Network& net = state.net;
    ForwardCache cache;
    Matrix pred = forward_all(net, x, Mode::train, cache);
    StepMetrics metrics;
    metrics.train_loss = checked_loss(state, pred, y);
    SegmentGrads grads;
    backward_blocks(net, cache, loss_grad(net.loss, pred, y), grads);
    metrics.grad_sq_norms.assign(net.blocks.size(), 0.0);
    collect_grad_norms(grads, metrics.grad_sq_norms);
    AdamConfig cfg;
    cfg.lr = config.lr_main;
    apply_grads(net, state.adam, grads, cfg, config.l2_penalty);
    return metrics;
}

namespace {

// Shared decoupled step for any set of SG boundaries. The network splits into
// segments between consecutive boundaries; each segment updates from the
// signal at its top (the SG there, or the true loss gradient for the topmost
// segment), and each SG trains against the signal backpropagated through the
// segment above it — the true gradient for the topmost SG, bootstrapped
// predictions below. Everything reads pre-step parameters.
StepMetrics sg_decoupled_step(TrainState& state, const TrainConfig& config, const Matrix& x,
                              const Matrix& y) {
    Network& net = state.net;
    const std::vector<std::size_t>& ks = state.spec.sg_insertions;
    const std::size_t blocks = net.blocks.size();
    const std::size_t m = ks.size();

    // segment j = [cut[j], cut[j+1]); boundary ks[j] = cut[j+1] for j < m
    std::vector<std::size_t> cut;
    cut.push_back(0);
    cut.insert(cut.end(), ks.begin(), ks.end());
    cut.push_back(blocks);

    // forward, keeping each boundary activation
    std::vector<ForwardCache> caches(m + 1);
    std::vector<Matrix> seg_out(m + 1); // output of segment j
    Matrix h = x;
    for (std::size_t j = 0; j <= m; ++j) {
        if (cut[j] < cut[j + 1]) {
            h = forward_blocks(net, h, Mode::train, cut[j], cut[j + 1], caches[j]);
        }
        seg_out[j] = h;
    }
    const Matrix& pred = seg_out[m];

    StepMetrics metrics;
    metrics.train_loss = checked_loss(state, pred, y);
    Matrix g_out = loss_grad(net.loss, pred, y);

    // boundary activation for sg j: output of segment j
    auto boundary_act = [&](std::size_t j) -> const Matrix& { return seg_out[j]; };

    // walk top -> bottom: each segment's backward yields both its parameter
    // gradients and the training target for the SG below it
    std::vector<SegmentGrads> grads(m + 1);
    std::vector<Matrix> target(m); // target[j] for sgs[j]
    for (std::size_t jj = m + 1; jj-- > 0;) {
        Matrix upstream;
        if (jj == m) {
            upstream = g_out;
        } else {
            // signal produced by sg jj at its boundary, pre-update parameters
            const Matrix& hj = boundary_act(jj);
            if (state.sg_oracle) {
                upstream = state.sg_oracle(hj, y, target[jj]);
            } else {
                ConspiringInputs in;
                in.sg = &state.sgs[jj];
                in.dl_dh = &target[jj];
                in.sg_target = &target[jj];
                upstream = conspiring_signal(state.spec.method, hj, y, in);
            }
        }
        Matrix in_grad = cut[jj] == cut[jj + 1]
                             ? upstream
                             : backward_blocks(net, caches[jj], upstream, grads[jj]);
        if (jj > 0) target[jj - 1] = std::move(in_grad);
    }

    // SG updates (targets and signals all captured above)
    for (std::size_t j = 0; j < m; ++j) {
        metrics.sg_losses.push_back(sg_train_step(state.sgs[j], boundary_act(j), y, target[j]));
    }

    // network updates
    metrics.grad_sq_norms.assign(blocks, 0.0);
    AdamConfig cfg;
    cfg.lr = config.lr_main;
    for (std::size_t j = 0; j <= m; ++j) {
        if (cut[j] < cut[j + 1]) {
            collect_grad_norms(grads[j], metrics.grad_sq_norms);
            apply_grads(net, state.adam, grads[j], cfg, config.l2_penalty);
        }
    }
    return metrics;
}

} // namespace

StepMetrics train_step_single_sg(TrainState& state, const TrainConfig& config, const Matrix& x,
                                 const Matrix& y) {
    if (state.spec.sg_insertions.size() != 1) {
        throw ConfigError("single-sg step needs exactly one boundary");
    }
    return sg_decoupled_step(state, config, x, y);
}

StepMetrics train_step_every_layer_sg(TrainState& state, const TrainConfig& config,
                                      const Matrix& x, const Matrix& y) {
    if (state.spec.sg_insertions != every_boundary(state.spec.blocks())) {
        throw ConfigError("every-layer step needs a boundary between every two blocks");
    }
    return sg_decoupled_step(state, config, x, y);
}

StepMetrics train_step_conspiring(TrainState& state, const TrainConfig& config, const Matrix& x,
                                  const Matrix& y) {
    using V = GradientMethod::Variant;
    const V variant = state.spec.method.variant;
    Network& net = state.net;
    const std::size_t blocks = net.blocks.size();

    ForwardCache cache;
    Matrix pred = forward_all(net, x, Mode::train, cache);
    StepMetrics metrics;
    metrics.train_loss = checked_loss(state, pred, y);
    Matrix e = loss_grad(net.loss, pred, y);

    SegmentGrads grads;
    grads.first = 0;
    grads.blocks.resize(blocks);
    if (variant == V::fa) {
        Matrix g = e;
        for (std::size_t b = blocks; b-- > 0;) {
            const Matrix* feedback =
                b > 0 && b < state.spec.method.fixed.size() ? &state.spec.method.fixed[b] : nullptr;
            g = block_backward(net.blocks[b], cache.blocks[b], g, grads.blocks[b], feedback);
        }
    } else if (variant == V::dfa || variant == V::kickback) {
        for (std::size_t b = 0; b < blocks; ++b) {
            Matrix upstream;
            if (b + 1 == blocks) {
                upstream = e; // output block sees the error directly
            } else if (variant == V::kickback) {
                upstream = matmul(e, transpose(ones(net.blocks[b].out_dim(), e.cols())));
            } else {
                if (b >= state.spec.method.fixed.size()) {
                    throw ConfigError("dfa is missing the feedback matrix for block " +
                                      std::to_string(b));
                }
                upstream = matmul(e, transpose(state.spec.method.fixed[b]));
            }
            block_backward(net.blocks[b], cache.blocks[b], upstream, grads.blocks[b], nullptr);
        }
    } else {
        throw ConfigError("conspiring step does not handle " + to_string(variant));
    }

    metrics.grad_sq_norms.assign(blocks, 0.0);
    collect_grad_norms(grads, metrics.grad_sq_norms);
    AdamConfig cfg;
    cfg.lr = config.lr_main;
    apply_grads(net, state.adam, grads, cfg, config.l2_penalty);
    return metrics;
}

StepMetrics train_step(TrainState& state, const TrainConfig& config, const Matrix& x,
                       const Matrix& y) {
    using V = GradientMethod::Variant;
    StepMetrics metrics;
    switch (state.spec.method.variant) {
    case V::backprop: metrics = train_step_backprop(state, config, x, y); break;
    case V::sg:
    case V::sgprop: metrics = sg_decoupled_step(state, config, x, y); break;
    case V::fa:
    case V::dfa:
    case V::kickback: metrics = train_step_conspiring(state, config, x, y); break;
    }
    state.iteration += 1;
    return metrics;
}

double eps_ratio(const TrainState& state, const Matrix& x, const Matrix& y) {
    if (state.spec.sg_insertions.size() != 1) {
        throw ValueError("eps_ratio needs exactly one sg boundary");
    }
    Network net = state.net; // train-mode statistics updates stay local
    const std::size_t k = state.spec.sg_insertions[0];
    const std::size_t blocks = net.blocks.size();

    ForwardCache lower_cache;
    Matrix h = forward_blocks(net, x, Mode::train, 0, k, lower_cache);
    Matrix dl_dh;
    if (k < blocks) {
        ForwardCache upper_cache;
        Matrix pred = forward_blocks(net, h, Mode::train, k, blocks, upper_cache);
        SegmentGrads upper;
        dl_dh = backward_blocks(net, upper_cache, loss_grad(net.loss, pred, y), upper);
    } else {
        dl_dh = loss_grad(net.loss, h, y);
    }

    const double eps = frobenius_norm(sub(sg_forward(state.sgs[0], h, y), dl_dh));

    SegmentGrads lower;
    backward_blocks(net, lower_cache, dl_dh, lower);
    const double denom = std::sqrt(grads_sq_norm(lower));

    // exact Frobenius norm of dh/dtheta: one backward pass per unit of h
    double k_sq = 0.0;
    Matrix basis(h.rows(), h.cols());
    for (std::size_t i = 0; i < basis.size(); ++i) {
        basis.data()[i] = 1.0;
        SegmentGrads g;
        backward_blocks(net, lower_cache, basis, g);
        k_sq += grads_sq_norm(g);
        basis.data()[i] = 0.0;
    }
    return eps * std::sqrt(k_sq) / denom;
}

// ---------------------------------------------------------------------------

namespace {

std::pair<Matrix, Matrix> gather_batch(const Dataset& ds, const TrainConfig& config,
                                       std::int64_t iteration, std::size_t bsize) {
    std::vector<std::size_t> idx;
    if (bsize >= ds.n()) {
        idx.resize(ds.n());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
    } else {
        Rng r = Rng(config.seed).child(static_cast<std::uint64_t>(iteration));
        idx = r.sample_without_replacement(ds.n(), bsize);
    }
    Matrix bx(idx.size(), ds.d()), by(idx.size(), ds.c());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < ds.d(); ++j) bx(i, j) = ds.X(idx[i], j);
        for (std::size_t j = 0; j < ds.c(); ++j) by(i, j) = ds.Y(idx[i], j);
    }
    return {std::move(bx), std::move(by)};
}

} // namespace

TrainResult run_from(TrainState state, const TrainConfig& config, const Dataset& train,
                     const Dataset* test, const std::string& out_dir, SnapshotFn snapshot,
                     std::int64_t snapshot_every) {
    validate_config(config);
    if (train.d() != state.net.in_dim() || train.c() != state.net.out_dim()) {
        throw ConfigError("dataset is " + std::to_string(train.d()) + "->" +
                          std::to_string(train.c()) + " but the network is " +
                          std::to_string(state.net.in_dim()) + "->" +
                          std::to_string(state.net.out_dim()));
    }
    const std::size_t bsize = std::min(config.batch_size, train.n());

    TrainResult result;
    while (state.iteration < config.iterations) {
        const std::int64_t it = state.iteration;
        auto [bx, by] = gather_batch(train, config, it, bsize);

        if (snapshot && snapshot_every > 0 && it % snapshot_every == 0) snapshot(state, it);

        const bool log = it % config.log_every == 0 || it + 1 == config.iterations;
        std::optional<double> eps;
        std::vector<double> wnorms;
        if (log) {
            wnorms = weight_sq_norms(state.net);
            if (config.eps_monitor && state.spec.sg_insertions.size() == 1) {
                const double ratio = eps_ratio(state, bx, by);
                if (std::isfinite(ratio)) eps = ratio;
            }
        }

        StepMetrics sm = train_step(state, config, bx, by);

        if (log) {
            ExperimentRecord r;
            r.iteration = it;
            r.train_loss = sm.train_loss;
            if (test) r.test_loss = loss_value(state.net.loss, predict(state.net, test->X), test->Y);
            r.sg_losses = std::move(sm.sg_losses);
            r.eps_ratio = eps;
            r.w_sq_norms = std::move(wnorms);
            r.grad_sq_norms = sm.grad_sq_norms;
            result.records.push_back(std::move(r));
        }

        if (config.grad_norm_stop > 0.0) {
            double total = 0.0;
            for (double g : sm.grad_sq_norms) total += g;
            if (std::sqrt(total) < config.grad_norm_stop) break;
        }
    }

    // closing row: the settled model evaluated on the full sets
    ExperimentRecord last;
    last.iteration = state.iteration;
    last.train_loss = loss_value(state.net.loss, predict(state.net, train.X), train.Y);
    if (test) last.test_loss = loss_value(state.net.loss, predict(state.net, test->X), test->Y);
    last.w_sq_norms = weight_sq_norms(state.net);
    result.records.push_back(std::move(last));

    if (!out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        result.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
        write_jsonl(result.metrics_path, result.records);
        result.checkpoint_path = (fs::path(out_dir) / "checkpoint.sgck").string();
        save_train_state(state, result.checkpoint_path);
    }
    result.state = std::move(state);
    return result;
}

TrainResult run_experiment(const NetworkSpec& spec, const TrainConfig& config,
                           const Dataset& train, const Dataset* test, const std::string& out_dir,
                           SnapshotFn snapshot, std::int64_t snapshot_every) {
    return run_from(make_train_state(spec, config), config, train, test, out_dir,
                    std::move(snapshot), snapshot_every);
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {

Matrix vec_blob(const std::vector<std::size_t>& v) {
    Matrix m(1, v.size());
    for (std::size_t i = 0; i < v.size(); ++i) m(0, i) = static_cast<double>(v[i]);
    return m;
}

std::vector<std::size_t> blob_vec(const Matrix& m) {
    std::vector<std::size_t> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) v[i] = static_cast<std::size_t>(m.data()[i]);
    return v;
}

void put_adam(BlobMap& b, const std::string& pre, const AdamState& s) {
    b[pre + ".m"] = s.m;
    b[pre + ".v"] = s.v;
    b[pre + ".t"] = scalar_blob(static_cast<double>(s.t));
}

AdamState get_adam(const BlobMap& b, const std::string& pre) {
    AdamState s;
    s.m = blob_at(b, pre + ".m");
    s.v = blob_at(b, pre + ".v");
    s.t = static_cast<std::int64_t>(blob_scalar(b, pre + ".t"));
    return s;
}

void put_sg_param(BlobMap& b, const std::string& name, const SGParam& p) {
    b[name] = p.value;
    put_adam(b, name, p.state);
}

SGParam get_sg_param(const BlobMap& b, const std::string& name) {
    return {blob_at(b, name), get_adam(b, name)};
}

Matrix opt_blob(const AdamConfig& c) {
    Matrix m(1, 4);
    m(0, 0) = c.lr;
    m(0, 1) = c.beta1;
    m(0, 2) = c.beta2;
    m(0, 3) = c.eps;
    return m;
}

AdamConfig blob_opt(const Matrix& m) {
    if (m.rows() != 1 || m.cols() != 4) throw IoError("optimizer blob has the wrong shape");
    return {m(0, 0), m(0, 1), m(0, 2), m(0, 3)};
}

} // namespace

BlobMap state_to_blobs(const TrainState& state) {
    BlobMap b;
    const NetworkSpec& spec = state.spec;
    b["meta.layer_dims"] = vec_blob(spec.layer_dims);
    b["meta.act"] =
        scalar_blob(spec.activation ? static_cast<double>(static_cast<int>(*spec.activation))
                                    : -1.0);
    b["meta.bn"] = scalar_blob(spec.batchnorm ? 1.0 : 0.0);
    b["meta.loss"] = scalar_blob(static_cast<double>(static_cast<int>(spec.loss)));
    b["meta.variant"] = scalar_blob(static_cast<double>(static_cast<int>(spec.method.variant)));
    b["meta.alpha"] = scalar_blob(spec.method.alpha);
    b["meta.sg_kind"] = scalar_blob(static_cast<double>(static_cast<int>(spec.sg_kind)));
    b["meta.boundaries"] = vec_blob(spec.sg_insertions);
    b["meta.iteration"] = scalar_blob(static_cast<double>(state.iteration));
    b["meta.fixed_count"] = scalar_blob(static_cast<double>(spec.method.fixed.size()));
    for (std::size_t i = 0; i < spec.method.fixed.size(); ++i) {
        b["fixed" + std::to_string(i)] = spec.method.fixed[i];
    }

    for (std::size_t i = 0; i < state.net.blocks.size(); ++i) {
        const Block& block = state.net.blocks[i];
        const std::string pre = "net.block" + std::to_string(i);
        b[pre + ".W"] = block.dense.W;
        b[pre + ".b"] = block.dense.b;
        if (block.bn) {
            b[pre + ".bn.gamma"] = block.bn->gamma;
            b[pre + ".bn.beta"] = block.bn->beta;
            b[pre + ".bn.rmean"] = block.bn->running_mean;
            b[pre + ".bn.rvar"] = block.bn->running_var;
            Matrix cfg(1, 2);
            cfg(0, 0) = block.bn->momentum;
            cfg(0, 1) = block.bn->eps;
            b[pre + ".bn.cfg"] = cfg;
        }
        const BlockAdam& adam = state.adam.blocks[i];
        put_adam(b, pre + ".adam.W", adam.W);
        put_adam(b, pre + ".adam.b", adam.b);
        put_adam(b, pre + ".adam.gamma", adam.gamma);
        put_adam(b, pre + ".adam.beta", adam.beta);
    }

    for (std::size_t j = 0; j < state.sgs.size(); ++j) {
        const std::string pre = "sg" + std::to_string(j);
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                b[pre + ".opt"] = opt_blob(m.opt);
                if constexpr (std::is_same_v<T, LinearSG>) {
                    put_sg_param(b, pre + ".A", m.A);
                    put_sg_param(b, pre + ".B", m.B);
                    put_sg_param(b, pre + ".C", m.C);
                } else if constexpr (std::is_same_v<T, SigmoidSG>) {
                    put_sg_param(b, pre + ".d", m.d);
                    put_sg_param(b, pre + ".A", m.A);
                    put_sg_param(b, pre + ".B", m.B);
                    put_sg_param(b, pre + ".C", m.C);
                } else if constexpr (std::is_same_v<T, AblatedSG>) {
                    if (m.kind == AblationKind::activation_only) put_sg_param(b, pre + ".A", m.A);
                    else put_sg_param(b, pre + ".B", m.B);
                    put_sg_param(b, pre + ".C", m.C);
                } else { // ConstantSG
                    put_sg_param(b, pre + ".c", m.c);
                }
            },
            state.sgs[j]);
    }
    return b;
}

TrainState state_from_blobs(const BlobMap& b) {
    NetworkSpec spec;
    spec.layer_dims = blob_vec(blob_at(b, "meta.layer_dims"));
    const double act = blob_scalar(b, "meta.act");
    spec.activation = act < 0.0 ? std::nullopt
                                : std::optional<ActKind>(static_cast<ActKind>(static_cast<int>(act)));
    spec.batchnorm = blob_scalar(b, "meta.bn") != 0.0;
    spec.loss = static_cast<LossKind>(static_cast<int>(blob_scalar(b, "meta.loss")));
    spec.method.variant =
        static_cast<GradientMethod::Variant>(static_cast<int>(blob_scalar(b, "meta.variant")));
    spec.method.alpha = blob_scalar(b, "meta.alpha");
    spec.sg_kind = static_cast<SGKind>(static_cast<int>(blob_scalar(b, "meta.sg_kind")));
    spec.sg_insertions = blob_vec(blob_at(b, "meta.boundaries"));
    const auto fixed_count = static_cast<std::size_t>(blob_scalar(b, "meta.fixed_count"));
    for (std::size_t i = 0; i < fixed_count; ++i) {
        spec.method.fixed.push_back(blob_at(b, "fixed" + std::to_string(i)));
    }
    validate_spec(spec);

    TrainState state;
    state.spec = spec;
    Rng scratch(0); // structure only; every parameter is overwritten below
    state.net = build_network(spec.layer_dims, spec.activation, spec.batchnorm, spec.loss, scratch);
    state.adam = make_adam(state.net);
    for (std::size_t i = 0; i < state.net.blocks.size(); ++i) {
        Block& block = state.net.blocks[i];
        const std::string pre = "net.block" + std::to_string(i);
        block.dense.W = blob_at(b, pre + ".W");
        block.dense.b = blob_at(b, pre + ".b");
        if (block.bn) {
            block.bn->gamma = blob_at(b, pre + ".bn.gamma");
            block.bn->beta = blob_at(b, pre + ".bn.beta");
            block.bn->running_mean = blob_at(b, pre + ".bn.rmean");
            block.bn->running_var = blob_at(b, pre + ".bn.rvar");
            const Matrix& cfg = blob_at(b, pre + ".bn.cfg");
            block.bn->momentum = cfg(0, 0);
            block.bn->eps = cfg(0, 1);
        }
        BlockAdam& adam = state.adam.blocks[i];
        adam.W = get_adam(b, pre + ".adam.W");
        adam.b = get_adam(b, pre + ".adam.b");
        adam.gamma = get_adam(b, pre + ".adam.gamma");
        adam.beta = get_adam(b, pre + ".adam.beta");
    }

    for (std::size_t j = 0; j < spec.sg_insertions.size(); ++j) {
        const std::string pre = "sg" + std::to_string(j);
        const AdamConfig opt = blob_opt(blob_at(b, pre + ".opt"));
        const std::size_t k = spec.sg_insertions[j];
        SGModule sg = make_sg(spec.sg_kind, spec.layer_dims[k], spec.layer_dims.back(), opt);
        std::visit(
            [&](auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, LinearSG>) {
                    m.A = get_sg_param(b, pre + ".A");
                    m.B = get_sg_param(b, pre + ".B");
                    m.C = get_sg_param(b, pre + ".C");
                } else if constexpr (std::is_same_v<T, SigmoidSG>) {
                    m.d = get_sg_param(b, pre + ".d");
                    m.A = get_sg_param(b, pre + ".A");
                    m.B = get_sg_param(b, pre + ".B");
                    m.C = get_sg_param(b, pre + ".C");
                } else if constexpr (std::is_same_v<T, AblatedSG>) {
                    if (m.kind == AblationKind::activation_only) m.A = get_sg_param(b, pre + ".A");
                    else m.B = get_sg_param(b, pre + ".B");
                    m.C = get_sg_param(b, pre + ".C");
                } else { // ConstantSG
                    m.c = get_sg_param(b, pre + ".c");
                }
            },
            sg);
        state.sgs.push_back(std::move(sg));
    }

    state.iteration = static_cast<std::int64_t>(blob_scalar(b, "meta.iteration"));
    return state;
}

void save_train_state(const TrainState& state, const std::string& path) {
    save_blobs(path, state_to_blobs(state));
}

TrainState load_train_state(const std::string& path) {
    return state_from_blobs(load_blobs(path));
}

} // namespace sglab
