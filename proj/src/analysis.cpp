#include "sglab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <variant>

#include "sglab/errors.hpp"
#include "sglab/rng.hpp"

namespace sglab {

namespace {

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0; // mean of positions i..j, 1-based
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double pearson_or_zero(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

} // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValueError("spearman inputs must have equal length");
    if (a.size() < 2) throw ValueError("spearman needs at least 2 points");
    return pearson_or_zero(average_ranks(a), average_ranks(b));
}

std::vector<double> per_row_loss(LossKind kind, const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) throw ShapeError("per_row_loss: prediction/target shape mismatch");
    const std::size_t n = pred.rows(), c = pred.cols();
    std::vector<double> out(n, 0.0);
    if (kind == LossKind::mse) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                const double d = pred(i, j) - target(i, j);
                s += d * d;
            }
            out[i] = 0.5 * s;
        }
        return out;
    }
    check_one_hot(target);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = pred(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, pred(i, j));
        double lse = 0.0, picked = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            lse += std::exp(pred(i, j) - mx);
            if (target(i, j) == 1.0) picked = pred(i, j);
        }
        out[i] = mx + std::log(lse) - picked;
    }
    return out;
}

namespace {

void check_recon_row(const Matrix& h, const Matrix& y) {
    if (h.rows() != 1 || y.rows() != 1)
        throw ShapeError("reconstruct_loss takes single-row h and y");
}

// 0.5 h A h^T
double quad_term(const Matrix& a, const Matrix& h) {
    if (a.rows() != h.cols() || a.cols() != h.cols())
        throw ShapeError("reconstruct_loss: A does not match h");
    return 0.5 * dot(matmul(h, a), h);
}

// (yB) h^T
double label_term(const Matrix& b, const Matrix& y, const Matrix& h) {
    if (b.rows() != y.cols() || b.cols() != h.cols())
        throw ShapeError("reconstruct_loss: B does not match y/h");
    return dot(matmul(y, b), h);
}

double bias_term(const Matrix& c, const Matrix& h) {
    if (c.rows() != 1 || c.cols() != h.cols())
        throw ShapeError("reconstruct_loss: C does not match h");
    return dot(c, h);
}

} // namespace

double reconstruct_loss(const SGModule& sg, const Matrix& h, const Matrix& y) {
    check_recon_row(h, y);
    if (const auto* lin = std::get_if<LinearSG>(&sg))
        return quad_term(lin->A.value, h) + label_term(lin->B.value, y, h) +
               bias_term(lin->C.value, h);
    if (const auto* abl = std::get_if<AblatedSG>(&sg)) {
        if (abl->kind == AblationKind::activation_only)
            return quad_term(abl->A.value, h) + bias_term(abl->C.value, h);
        return label_term(abl->B.value, y, h) + bias_term(abl->C.value, h);
    }
    throw ValueError("loss reconstruction needs a gradient model that is linear in h and y");
}

std::vector<Matrix> layer_activations(const Network& net, const Matrix& x) {
    Network copy = net;
    std::vector<Matrix> outs;
    outs.reserve(copy.blocks.size());
    Matrix h = x;
    for (std::size_t b = 0; b < copy.blocks.size(); ++b) {
        ForwardCache cache;
        h = forward_blocks(copy, h, Mode::eval, b, b + 1, cache);
        outs.push_back(h);
    }
    return outs;
}

namespace {

Matrix row_of(const Matrix& m, std::size_t i) {
    Matrix r(1, m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j) r(0, j) = m(i, j);
    return r;
}

LossSurface snapshot_surface(const TrainState& state, const GridDataset& grid,
                             std::int64_t iteration) {
    LossSurface s;
    s.iteration = iteration;
    const Matrix& x = grid.data.X;
    const Matrix& y = grid.data.Y;
    const std::size_t n = x.rows();
    s.xs.resize(n);
    s.ys.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.xs[i] = x(i, 0);
        s.ys[i] = x(i, 1);
    }
    s.true_loss = per_row_loss(state.net.loss, predict(state.net, x), y);
    const std::vector<Matrix> acts = layer_activations(state.net, x);
    s.reconstructed.reserve(state.sgs.size());
    for (std::size_t m = 0; m < state.sgs.size(); ++m) {
        const std::size_t boundary = state.spec.sg_insertions[m];
        const Matrix& h = acts[boundary - 1]; // output after the first `boundary` blocks
        std::vector<double> recon(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            recon[i] = reconstruct_loss(state.sgs[m], row_of(h, i), row_of(y, i));
            if (!std::isfinite(recon[i]))
                throw NumericError("reconstructed loss is not finite at iteration " +
                                   std::to_string(iteration));
        }
        s.reconstructed.push_back(std::move(recon));
    }
    return s;
}

} // namespace

LossSurface loss_surface_snapshot(const TrainState& state, const GridDataset& grid) {
    if (grid.data.d() != 2) throw ValueError("loss-surface grids must have 2-D inputs");
    return snapshot_surface(state, grid, state.iteration);
}

LossSurfaceRun loss_surface_experiment(const NetworkSpec& spec, const TrainConfig& config,
                                       const GridDataset& grid, std::int64_t snapshot_every) {
    if (grid.data.d() != 2) throw ValueError("loss-surface grids must have 2-D inputs");
    if (snapshot_every <= 0) throw ValueError("snapshot_every must be positive");
    if (!spec.sg_insertions.empty() && spec.sg_kind != SGKind::linear &&
        spec.sg_kind != SGKind::activation_only && spec.sg_kind != SGKind::label_only)
        throw ValueError("loss reconstruction needs a gradient model that is linear in h and y");
    LossSurfaceRun run;
    SnapshotFn hook = [&](const TrainState& state, std::int64_t iteration) {
        run.surfaces.push_back(snapshot_surface(state, grid, iteration));
    };
    run.result = run_experiment(spec, config, grid.data, nullptr, "", hook, snapshot_every);
    return run;
}

std::vector<double> surface_rank_correlations(const LossSurface& surface) {
    std::vector<double> out;
    out.reserve(surface.reconstructed.size());
    for (const std::vector<double>& recon : surface.reconstructed)
        out.push_back(spearman(recon, surface.true_loss));
    return out;
}

void write_loss_surface_csv(const std::string& path, const LossSurface& surface) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "x,y,true";
    for (std::size_t m = 0; m < surface.reconstructed.size(); ++m) out << ",recon_" << m;
    out << '\n';
    char buf[32];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf << sep;
    };
    for (std::size_t i = 0; i < surface.true_loss.size(); ++i) {
        put(surface.xs[i], ',');
        put(surface.ys[i], ',');
        put(surface.true_loss[i], surface.reconstructed.empty() ? '\n' : ',');
        for (std::size_t m = 0; m < surface.reconstructed.size(); ++m)
            put(surface.reconstructed[m][i], m + 1 == surface.reconstructed.size() ? '\n' : ',');
    }
    if (!out) throw IoError("failed writing " + path);
}

Matrix compute_rdm(const Matrix& activations) {
    if (activations.cols() < 2) throw ValueError("compute_rdm needs at least 2 feature columns");
    const std::size_t n = activations.rows(), d = activations.cols();
    std::vector<std::vector<double>> centered(n, std::vector<double>(d, 0.0));
    std::vector<double> norms(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += activations(i, j);
        mean /= static_cast<double>(d);
        double ss = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            centered[i][j] = activations(i, j) - mean;
            ss += centered[i][j] * centered[i][j];
        }
        norms[i] = std::sqrt(ss);
    }
    Matrix rdm(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double corr = 0.0;
            if (norms[i] > 0.0 && norms[j] > 0.0) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) s += centered[i][k] * centered[j][k];
                corr = std::clamp(s / (norms[i] * norms[j]), -1.0, 1.0);
            }
            const double entry = std::clamp(1.0 - corr, 0.0, 2.0);
            rdm(i, j) = entry;
            rdm(j, i) = entry;
        }
    }
    return rdm;
}

namespace {

void check_rdm_labels(const Matrix& rdm, const std::vector<int>& labels) {
    if (rdm.rows() != rdm.cols()) throw ShapeError("RDM must be square");
    if (labels.size() != rdm.rows()) throw ShapeError("labels must match RDM rows");
}

} // namespace

RdmBlockStats rdm_block_stats(const Matrix& rdm, const std::vector<int>& labels) {
    check_rdm_labels(rdm, labels);
    double within = 0.0, between = 0.0;
    std::size_t n_within = 0, n_between = 0;
    for (std::size_t i = 0; i < rdm.rows(); ++i) {
        for (std::size_t j = i + 1; j < rdm.cols(); ++j) {
            if (labels[i] == labels[j]) {
                within += rdm(i, j);
                ++n_within;
            } else {
                between += rdm(i, j);
                ++n_between;
            }
        }
    }
    if (n_within == 0) throw ValueError("labels admit no same-label pairs");
    if (n_between == 0) throw ValueError("labels admit no different-label pairs");
    return RdmBlockStats{within / static_cast<double>(n_within),
                         between / static_cast<double>(n_between)};
}

std::vector<double> rdm_distance_profile(const std::vector<Matrix>& rdms,
                                         const std::vector<int>& labels) {
    if (rdms.empty()) throw ValueError("rdm_distance_profile needs at least one RDM");
    for (const Matrix& rdm : rdms) check_rdm_labels(rdm, labels);
    const Matrix& ref = rdms.back();
    std::vector<double> out;
    out.reserve(rdms.size());
    for (const Matrix& rdm : rdms) {
        double ss = 0.0;
        for (std::size_t i = 0; i < rdm.rows(); ++i)
            for (std::size_t j = 0; j < rdm.cols(); ++j)
                if (i != j && labels[i] == labels[j]) {
                    const double d = rdm(i, j) - ref(i, j);
                    ss += d * d;
                }
        out.push_back(std::sqrt(ss));
    }
    return out;
}

void write_rdm_csv(const std::string& path, const Matrix& rdm) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "i,j,value\n";
    char buf[32];
    for (std::size_t i = 0; i < rdm.rows(); ++i)
        for (std::size_t j = 0; j < rdm.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", rdm(i, j));
            out << i << ',' << j << ',' << buf << '\n';
        }
    if (!out) throw IoError("failed writing " + path);
}

namespace {

constexpr std::int64_t kProbeSteps = 2000;
constexpr double kProbeLr = 1e-3;
constexpr std::size_t kProbeBatch = 256;
constexpr std::uint64_t kProbeSeed = 0x9e3779b97f4a7c15ull;

bool all_columns_constant(const Matrix& x) {
    for (std::size_t j = 0; j < x.cols(); ++j)
        for (std::size_t i = 1; i < x.rows(); ++i)
            if (x(i, j) != x(0, j)) return false;
    return true;
}

Matrix rows_subset(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < m.cols(); ++j) out(r, j) = m(idx[r], j);
    return out;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix p = matmul(x, w);
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j) p(i, j) += b(0, j);
    return p;
}

// Zero-init softmax/least-squares probe: convex in (W, b), so the budget is
// the only tuning knob.
void fit_probe(const Matrix& x, const Matrix& y, LossKind kind, Matrix& w, Matrix& b) {
    w = Matrix(x.cols(), y.cols());
    b = Matrix(1, y.cols());
    AdamState st_w = AdamState::like(w);
    AdamState st_b = AdamState::like(b);
    const AdamConfig cfg{kProbeLr, 0.9, 0.999, 1e-8};
    Rng rng(kProbeSeed);
    const std::size_t n = x.rows();
    for (std::int64_t step = 0; step < kProbeSteps; ++step) {
        Matrix xb, yb;
        if (n > kProbeBatch) {
            const std::vector<std::size_t> idx = rng.sample_without_replacement(n, kProbeBatch);
            xb = rows_subset(x, idx);
            yb = rows_subset(y, idx);
        } else {
            xb = x;
            yb = y;
        }
        const Matrix g = loss_grad(kind, affine(xb, w, b), yb, Reduction::mean);
        const Matrix dw = matmul(transpose(xb), g);
        Matrix db(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
        adam_step(st_w, w, dw, cfg, "probe.W");
        adam_step(st_b, b, db, cfg, "probe.b");
    }
}

} // namespace

ClassifierProbeResult linear_probe_classifier(const Matrix& activations,
                                              const std::vector<int>& labels) {
    if (activations.rows() == 0) throw ValueError("probe needs at least one row");
    if (labels.size() != activations.rows()) throw ShapeError("labels must match activation rows");
    int max_label = 0;
    for (int l : labels) {
        if (l < 0) throw ValueError("labels must be nonnegative");
        max_label = std::max(max_label, l);
    }
    const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
    Matrix onehot(activations.rows(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i)
        onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
    ClassifierProbeResult res;
    res.degenerate = all_columns_constant(activations);
    Matrix w, b;
    fit_probe(activations, onehot, LossKind::logloss, w, b);
    res.accuracy = accuracy(affine(activations, w, b), onehot);
    return res;
}

RegressorProbeResult linear_probe_regressor(const Matrix& activations, const Matrix& inputs) {
    if (activations.rows() == 0) throw ValueError("probe needs at least one row");
    if (inputs.rows() != activations.rows()) throw ShapeError("inputs must match activation rows");
    RegressorProbeResult res;
    res.degenerate = all_columns_constant(activations);
    Matrix w, b;
    fit_probe(activations, inputs, LossKind::mse, w, b);
    res.mse = loss_value(LossKind::mse, affine(activations, w, b), inputs, Reduction::mean);
    return res;
}

std::vector<double> weight_norm_profile(const Network& net) {
    std::vector<double> norms = weight_sq_norms(net);
    const double total = std::accumulate(norms.begin(), norms.end(), 0.0);
    if (total <= 0.0) throw ValueError("weight_norm_profile: all dense weights are zero");
    for (double& v : norms) v /= total;
    return norms;
}

void write_profile_csv(const std::string& path, const std::string& name,
                       const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "layer," << name << '\n';
    char buf[32];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
        out << i << ',' << buf << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
}

} // namespace sglab
