#include <cmath>

#include "sglab/network.hpp"

namespace sglab {

ActKind act_kind_from_string(const std::string& s) {
    if (s == "relu") return ActKind::relu;
    if (s == "sigmoid") return ActKind::sigmoid;
    throw ValueError("unknown activation \"" + s + "\" (want relu|sigmoid)");
}

std::string to_string(ActKind k) { return k == ActKind::relu ? "relu" : "sigmoid"; }

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "mse") return LossKind::mse;
    if (s == "logloss") return LossKind::logloss;
    throw ValueError("unknown loss \"" + s + "\" (want mse|logloss)");
}

std::string to_string(LossKind k) { return k == LossKind::mse ? "mse" : "logloss"; }

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Rng& rng) {
    if (in == 0 || out == 0) throw ValueError("dense layer dims must be positive");
    W = gaussian_matrix(rng, in, out, 0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    b = Matrix(1, out);
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& x) {
    if (x.cols() != layer.in_dim())
        throw ShapeError("dense_forward: input " + shape_str(x) + " vs W " + shape_str(layer.W));
    Matrix y = matmul(x, layer.W);
    add_row_in_place(y, layer.b);
    return y;
}

Matrix dense_backward(const DenseLayer& layer, const Matrix& x, const Matrix& upstream,
                      DenseGrads& grads) {
    if (upstream.rows() != x.rows() || upstream.cols() != layer.out_dim())
        throw ShapeError("dense_backward: upstream " + shape_str(upstream) + " vs output [" +
                         std::to_string(x.rows()) + " x " + std::to_string(layer.out_dim()) + "]");
    grads.dW = matmul(transpose(x), upstream);
    grads.db = col_sums(upstream);
    return matmul(upstream, transpose(layer.W));
}

Matrix act_forward(ActKind kind, const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    if (kind == ActKind::relu) {
        for (std::size_t i = 0; i < x.size(); ++i)
            out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = x.data()[i];
            // branch keeps exp() from overflowing for large |v|
            out.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                     : std::exp(v) / (1.0 + std::exp(v));
        }
    }
    return out;
}

Matrix act_backward(ActKind kind, const Matrix& x, const Matrix& out, const Matrix& upstream) {
    if (!upstream.same_shape(x))
        throw ShapeError("act_backward: upstream " + shape_str(upstream) + " vs " + shape_str(x));
    Matrix g(x.rows(), x.cols());
    if (kind == ActKind::relu) {
        // derivative at exactly 0 is taken as 0
        for (std::size_t i = 0; i < x.size(); ++i)
            g.data()[i] = x.data()[i] > 0.0 ? upstream.data()[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = out.data()[i];
            g.data()[i] = upstream.data()[i] * s * (1.0 - s);
        }
    }
    return g;
}

BatchNormLayer::BatchNormLayer(std::size_t d, double momentum_, double eps_) {
    if (d == 0) throw ValueError("batchnorm dim must be positive");
    if (momentum_ <= 0.0 || momentum_ >= 1.0) throw ValueError("batchnorm momentum must be in (0,1)");
    if (eps_ < 0.0) throw ValueError("batchnorm eps must be >= 0");
    gamma = ones(1, d);
    beta = Matrix(1, d);
    running_mean = Matrix(1, d);
    running_var = ones(1, d);
    momentum = momentum_;
    eps = eps_;
}

Matrix bn_forward(BatchNormLayer& layer, const Matrix& x, Mode mode, BnCache& cache) {
    const std::size_t d = layer.dim();
    if (x.cols() != d)
        throw ShapeError("bn_forward: input " + shape_str(x) + " vs dim " + std::to_string(d));
    if (x.rows() == 0) throw ValueError("bn_forward: empty batch");

    Matrix mean(1, d), var(1, d);
    if (mode == Mode::train) {
        mean = col_means(x);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double dev = x(i, j) - mean(0, j);
                var(0, j) += dev * dev;
            }
        scale_in_place(var, 1.0 / static_cast<double>(x.rows())); // population variance
        for (std::size_t j = 0; j < d; ++j) {
            layer.running_mean(0, j) = layer.momentum * layer.running_mean(0, j) +
                                       (1.0 - layer.momentum) * mean(0, j);
            layer.running_var(0, j) = layer.momentum * layer.running_var(0, j) +
                                      (1.0 - layer.momentum) * var(0, j);
        }
    } else {
        mean = layer.running_mean;
        var = layer.running_var;
    }

    cache.mode = mode;
    cache.inv_std = Matrix(1, d);
    for (std::size_t j = 0; j < d; ++j)
        cache.inv_std(0, j) = 1.0 / std::sqrt(var(0, j) + layer.eps);

    cache.xhat = Matrix(x.rows(), d);
    Matrix out(x.rows(), d);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (x(i, j) - mean(0, j)) * cache.inv_std(0, j);
            cache.xhat(i, j) = xh;
            out(i, j) = layer.gamma(0, j) * xh + layer.beta(0, j);
        }
    return out;
}

Matrix bn_backward(const BatchNormLayer& layer, const BnCache& cache, const Matrix& upstream,
                   BnGrads& grads) {
    if (cache.xhat.empty()) throw ValueError("bn_backward: forward cache missing");
    if (!upstream.same_shape(cache.xhat))
        throw ShapeError("bn_backward: upstream " + shape_str(upstream) + " vs " +
                         shape_str(cache.xhat));
    const std::size_t n = upstream.rows();
    const std::size_t d = upstream.cols();

    grads.dgamma = Matrix(1, d);
    grads.dbeta = Matrix(1, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            grads.dgamma(0, j) += upstream(i, j) * cache.xhat(i, j);
            grads.dbeta(0, j) += upstream(i, j);
        }

    Matrix dx(n, d);
    if (cache.mode == Mode::eval) {
        // frozen statistics: a plain affine map per feature
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                dx(i, j) = upstream(i, j) * layer.gamma(0, j) * cache.inv_std(0, j);
        return dx;
    }

    // train mode: batch mean/variance depend on every row
    Matrix sum_dxhat(1, d), sum_dxhat_xhat(1, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = upstream(i, j) * layer.gamma(0, j);
            sum_dxhat(0, j) += dxhat;
            sum_dxhat_xhat(0, j) += dxhat * cache.xhat(i, j);
        }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = upstream(i, j) * layer.gamma(0, j);
            dx(i, j) = cache.inv_std(0, j) * inv_n *
                       (static_cast<double>(n) * dxhat - sum_dxhat(0, j) -
                        cache.xhat(i, j) * sum_dxhat_xhat(0, j));
        }
    return dx;
}

Matrix softmax_rows(const Matrix& p) {
    Matrix out(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double m = p(i, 0);
        for (std::size_t j = 1; j < p.cols(); ++j) m = std::max(m, p(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            out(i, j) = std::exp(p(i, j) - m);
            denom += out(i, j);
        }
        for (std::size_t j = 0; j < p.cols(); ++j) out(i, j) /= denom;
    }
    return out;
}

void check_one_hot(const Matrix& y) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double rowsum = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) {
            const double v = y(i, j);
            if (v != 0.0 && v != 1.0)
                throw ValueError("target row " + std::to_string(i) + " is not one-hot (entry " +
                                 std::to_string(v) + ")");
            rowsum += v;
        }
        if (rowsum != 1.0)
            throw ValueError("target row " + std::to_string(i) + " is not one-hot (sum " +
                             std::to_string(rowsum) + ")");
    }
}

namespace {

void require_pred_target(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target))
        throw ShapeError("loss: pred " + shape_str(pred) + " vs target " + shape_str(target));
    if (pred.rows() == 0) throw ValueError("loss: empty batch");
}

} // namespace

double loss_value(LossKind kind, const Matrix& pred, const Matrix& target, Reduction red) {
    require_pred_target(pred, target);
    const double norm = red == Reduction::mean ? 1.0 / static_cast<double>(pred.rows()) : 1.0;
    if (kind == LossKind::mse) {
        const Matrix diff = sub(pred, target);
        return 0.5 * sum_sq(diff) * norm;
    }
    check_one_hot(target);
    double total = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i) {
        double m = pred(i, 0);
        for (std::size_t j = 1; j < pred.cols(); ++j) m = std::max(m, pred(i, j));
        double lse = 0.0;
        double picked = 0.0;
        for (std::size_t j = 0; j < pred.cols(); ++j) {
            lse += std::exp(pred(i, j) - m);
            if (target(i, j) == 1.0) picked = pred(i, j) - m;
        }
        total += std::log(lse) - picked;
    }
    return total * norm;
}

Matrix loss_grad(LossKind kind, const Matrix& pred, const Matrix& target, Reduction red) {
    require_pred_target(pred, target);
    const double norm = red == Reduction::mean ? 1.0 / static_cast<double>(pred.rows()) : 1.0;
    if (kind == LossKind::mse) {
        Matrix g = sub(pred, target);
        scale_in_place(g, norm);
        return g;
    }
    check_one_hot(target);
    Matrix g = softmax_rows(pred);
    for (std::size_t i = 0; i < g.size(); ++i)
        g.data()[i] = (g.data()[i] - target.data()[i]) * norm;
    return g;
}

double accuracy(const Matrix& pred, const Matrix& onehot) {
    require_pred_target(pred, onehot);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.rows(); ++i) {
        std::size_t ap = 0, ay = 0;
        for (std::size_t j = 1; j < pred.cols(); ++j) {
            if (pred(i, j) > pred(i, ap)) ap = j;
            if (onehot(i, j) > onehot(i, ay)) ay = j;
        }
        if (ap == ay) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.rows());
}

void adam_step(AdamState& state, Matrix& param, const Matrix& grad, const AdamConfig& cfg,
               const std::string& name) {
    if (!param.same_shape(grad))
        throw ShapeError("adam_step(" + name + "): param " + shape_str(param) + " vs grad " +
                         shape_str(grad));
    if (!all_finite(grad)) throw NumericError("adam_step: non-finite gradient for " + name);
    if (state.m.empty()) state = AdamState::like(param);

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad.data()[i];
        double& m = state.m.data()[i];
        double& v = state.v.data()[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        param.data()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

Network build_network(const std::vector<std::size_t>& dims, std::optional<ActKind> act,
                      bool batchnorm, LossKind loss, Rng& rng) {
    if (dims.size() < 2) throw ValueError("build_network: need at least [in, out] dims");
    for (std::size_t d : dims)
        if (d == 0) throw ValueError("build_network: zero dimension");
    Network net;
    net.loss = loss;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Block blk;
        blk.dense = DenseLayer(dims[i], dims[i + 1], rng);
        const bool hidden = i + 2 < dims.size();
        if (hidden && batchnorm) blk.bn = BatchNormLayer(dims[i + 1]);
        if (hidden && act) blk.act = *act;
        net.blocks.push_back(std::move(blk));
    }
    return net;
}

Matrix forward_blocks(Network& net, const Matrix& x, Mode mode, std::size_t first,
                      std::size_t last, ForwardCache& cache) {
    if (first > last || last > net.blocks.size())
        throw ValueError("forward_blocks: bad range [" + std::to_string(first) + ", " +
                         std::to_string(last) + ") of " + std::to_string(net.blocks.size()));
    cache.first = first;
    cache.blocks.assign(last - first, BlockCache{});
    Matrix h = x;
    for (std::size_t i = first; i < last; ++i) {
        Block& blk = net.blocks[i];
        BlockCache& bc = cache.blocks[i - first];
        bc.x = h;
        bc.z = dense_forward(blk.dense, h);
        if (blk.bn) bc.act_in = bn_forward(*blk.bn, bc.z, mode, bc.bn);
        else bc.act_in = bc.z;
        if (blk.act) bc.out = act_forward(*blk.act, bc.act_in);
        else bc.out = bc.act_in;
        h = bc.out;
    }
    return h;
}

Matrix forward_all(Network& net, const Matrix& x, Mode mode, ForwardCache& cache) {
    return forward_blocks(net, x, mode, 0, net.blocks.size(), cache);
}

Matrix predict(const Network& net, const Matrix& x) {
    // eval mode never touches running statistics, so the const_cast is sound
    ForwardCache cache;
    return forward_all(const_cast<Network&>(net), x, Mode::eval, cache);
}

Matrix backward_blocks(const Network& net, const ForwardCache& cache, const Matrix& upstream,
                       SegmentGrads& grads) {
    if (cache.blocks.empty()) throw ValueError("backward_blocks: empty forward cache");
    grads.first = cache.first;
    grads.blocks.assign(cache.blocks.size(), BlockGrads{});
    Matrix g = upstream;
    for (std::size_t idx = cache.blocks.size(); idx-- > 0;) {
        const Block& blk = net.blocks[cache.first + idx];
        const BlockCache& bc = cache.blocks[idx];
        BlockGrads& bg = grads.blocks[idx];
        if (!g.same_shape(bc.out))
            throw ShapeError("backward_blocks: upstream " + shape_str(g) + " vs cached output " +
                             shape_str(bc.out));
        if (blk.act) g = act_backward(*blk.act, bc.act_in, bc.out, g);
        if (blk.bn) g = bn_backward(*blk.bn, bc.bn, g, bg.bn);
        g = dense_backward(blk.dense, bc.x, g, bg.dense);
    }
    return g;
}

NetAdam make_adam(const Network& net) {
    NetAdam adam;
    adam.blocks.resize(net.blocks.size());
    return adam;
}

void apply_grads(Network& net, NetAdam& adam, const SegmentGrads& grads, const AdamConfig& cfg,
                 double l2) {
    if (adam.blocks.size() != net.blocks.size())
        throw ValueError("apply_grads: optimizer built for a different network");
    for (std::size_t idx = 0; idx < grads.blocks.size(); ++idx) {
        const std::size_t bi = grads.first + idx;
        if (bi >= net.blocks.size()) throw ValueError("apply_grads: gradient range out of bounds");
        Block& blk = net.blocks[bi];
        BlockAdam& ba = adam.blocks[bi];
        const BlockGrads& bg = grads.blocks[idx];
        const std::string tag = "block" + std::to_string(bi);
        if (l2 > 0.0) {
            Matrix dW = bg.dense.dW;
            axpy_in_place(dW, l2, blk.dense.W);
            adam_step(ba.W, blk.dense.W, dW, cfg, tag + ".W");
        } else {
            adam_step(ba.W, blk.dense.W, bg.dense.dW, cfg, tag + ".W");
        }
        adam_step(ba.b, blk.dense.b, bg.dense.db, cfg, tag + ".b");
        if (blk.bn) {
            adam_step(ba.gamma, blk.bn->gamma, bg.bn.dgamma, cfg, tag + ".gamma");
            adam_step(ba.beta, blk.bn->beta, bg.bn.dbeta, cfg, tag + ".beta");
        }
    }
}

double grads_sq_norm(const SegmentGrads& grads) {
    double acc = 0.0;
    for (const BlockGrads& bg : grads.blocks) {
        acc += sum_sq(bg.dense.dW) + sum_sq(bg.dense.db);
        if (!bg.bn.dgamma.empty()) acc += sum_sq(bg.bn.dgamma) + sum_sq(bg.bn.dbeta);
    }
    return acc;
}

} // namespace sglab
