#include "sglab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sglab/analysis.hpp"
#include "sglab/data.hpp"
#include "sglab/dynamics.hpp"
#include "sglab/errors.hpp"
#include "sglab/trainer.hpp"

namespace sglab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------
// Config machinery: JSON experiment files, validated completely (including
// rejection of unknown keys, reported with their full path) before any work.

json parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path + " must be an object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("config key " + path + "." + item.key() + " is not recognized");
    }
}

template <typename T>
T get_as(const json& j, const std::string& path, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key " + path + "." + key + " has the wrong type");
    }
}

std::string get_str(const json& j, const std::string& path, const char* key,
                    const std::string& fallback) {
    return get_as<std::string>(j, path, key, fallback);
}

const json& require_obj(const json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) throw ConfigError("config key " + path + "." + key + " is missing");
    if (!j.at(key).is_object())
        throw ConfigError("config key " + path + "." + key + " must be an object");
    return j.at(key);
}

NetworkSpec parse_network(const json& j, const std::string& path) {
    check_keys(j, path,
               {"layer_dims", "activation", "batchnorm", "loss", "sg_insertions", "sg_kind",
                "method", "alpha"});
    NetworkSpec spec;
    if (!j.contains("layer_dims"))
        throw ConfigError("config key " + path + ".layer_dims is missing");
    try {
        spec.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    } catch (const json::exception&) {
        throw ConfigError("config key " + path + ".layer_dims has the wrong type");
    }
    const std::string act = get_str(j, path, "activation", "none");
    if (act != "none") spec.activation = act_kind_from_string(act);
    spec.batchnorm = get_as<bool>(j, path, "batchnorm", false);
    spec.loss = loss_kind_from_string(get_str(j, path, "loss", "mse"));
    if (j.contains("sg_insertions")) {
        const json& ins = j.at("sg_insertions");
        if (ins.is_string() && ins.get<std::string>() == "every") {
            spec.sg_insertions = every_boundary(spec.blocks());
        } else {
            try {
                spec.sg_insertions = ins.get<std::vector<std::size_t>>();
            } catch (const json::exception&) {
                throw ConfigError("config key " + path +
                                  ".sg_insertions must be an index array or \"every\"");
            }
        }
    }
    spec.sg_kind = sg_kind_from_string(get_str(j, path, "sg_kind", "linear"));
    spec.method.variant = variant_from_string(get_str(j, path, "method", "backprop"));
    spec.method.alpha = get_as<double>(j, path, "alpha", 1.0);
    return spec;
}

TrainConfig parse_train(const json& j, const std::string& path) {
    check_keys(j, path,
               {"iterations", "batch_size", "lr_main", "lr_sg", "seed", "l2_penalty",
                "eps_monitor", "log_every", "grad_norm_stop"});
    TrainConfig cfg;
    cfg.iterations = get_as<std::int64_t>(j, path, "iterations", cfg.iterations);
    cfg.batch_size = get_as<std::size_t>(j, path, "batch_size", cfg.batch_size);
    cfg.lr_main = get_as<double>(j, path, "lr_main", cfg.lr_main);
    cfg.lr_sg = get_as<double>(j, path, "lr_sg", cfg.lr_sg);
    cfg.seed = get_as<std::uint64_t>(j, path, "seed", cfg.seed);
    cfg.l2_penalty = get_as<double>(j, path, "l2_penalty", cfg.l2_penalty);
    cfg.eps_monitor = get_as<bool>(j, path, "eps_monitor", cfg.eps_monitor);
    cfg.log_every = get_as<std::int64_t>(j, path, "log_every", cfg.log_every);
    cfg.grad_norm_stop = get_as<double>(j, path, "grad_norm_stop", cfg.grad_norm_stop);
    return cfg;
}

struct DataRequest {
    std::string kind = "linear"; // linear | noisy | random | grid | mnist | csv
    std::size_t k = 2;
    std::uint64_t seed = 0;
    double noise_rate = 0.1;
    std::size_t resolution = 20;       // grid
    double lo = -2.0, hi = 2.0;        // grid
    std::string labeler = "linear_with_noise";
    std::string dir;                   // mnist; empty = $SGLAB_MNIST_DIR or data/mnist
    std::size_t subset_n = 0;          // mnist; 0 = full set
    std::string path;                  // csv
};

void validate_data_request(const DataRequest& r, const std::string& path) {
    const bool known = r.kind == "linear" || r.kind == "noisy" || r.kind == "random" ||
                       r.kind == "grid" || r.kind == "mnist" || r.kind == "csv";
    if (!known)
        throw ConfigError(path + ".kind must be one of linear|noisy|random|grid|mnist|csv");
    if (r.kind == "csv" && r.path.empty())
        throw ConfigError(path + ".path is required for csv datasets");
    if (r.kind == "grid") {
        if (r.resolution < 2) throw ConfigError(path + ".resolution must be at least 2");
        if (!(r.lo < r.hi)) throw ConfigError(path + ".lo must be below .hi");
        if (r.labeler != "linear_with_noise" && r.labeler != "random")
            throw ConfigError(path + ".labeler must be linear_with_noise or random");
    }
    if (r.noise_rate < 0.0 || r.noise_rate > 1.0)
        throw ConfigError(path + ".noise_rate must lie in [0, 1]");
    if (r.k == 0) throw ConfigError(path + ".k must be positive");
}

DataRequest parse_data(const json& j, const std::string& path) {
    check_keys(j, path,
               {"kind", "k", "seed", "noise_rate", "resolution", "lo", "hi", "labeler", "dir",
                "subset", "path"});
    DataRequest r;
    r.kind = get_str(j, path, "kind", r.kind);
    r.k = get_as<std::size_t>(j, path, "k", r.k);
    r.seed = get_as<std::uint64_t>(j, path, "seed", r.seed);
    r.noise_rate = get_as<double>(j, path, "noise_rate", r.noise_rate);
    r.resolution = get_as<std::size_t>(j, path, "resolution", r.resolution);
    r.lo = get_as<double>(j, path, "lo", r.lo);
    r.hi = get_as<double>(j, path, "hi", r.hi);
    r.labeler = get_str(j, path, "labeler", r.labeler);
    r.dir = get_str(j, path, "dir", r.dir);
    r.subset_n = get_as<std::size_t>(j, path, "subset", r.subset_n);
    r.path = get_str(j, path, "path", r.path);
    validate_data_request(r, path);
    return r;
}

std::string digits_dir(const DataRequest& r) {
    if (!r.dir.empty()) return r.dir;
    if (const char* env = std::getenv("SGLAB_MNIST_DIR"); env && *env) return env;
    return "data/mnist";
}

struct LoadedData {
    Dataset train;
    std::optional<Dataset> test;
    std::optional<GridDataset> grid;
};

LoadedData build_data(const DataRequest& r) {
    LoadedData out;
    if (r.kind == "linear") {
        out.train = gen_linear(r.k, r.seed);
    } else if (r.kind == "noisy") {
        out.train = gen_noisy(r.k, r.seed);
    } else if (r.kind == "random") {
        out.train = gen_random(r.k, r.seed);
    } else if (r.kind == "grid") {
        const GridLabeler labeler = r.labeler == "random" ? GridLabeler::random
                                                          : GridLabeler::linear_with_noise;
        GridDataset grid = grid_2d(r.resolution, {r.lo, r.hi}, labeler, r.seed, r.noise_rate);
        out.train = grid.data;
        out.grid = std::move(grid);
    } else if (r.kind == "mnist") {
        const std::string dir = digits_dir(r);
        DigitCorpus corpus = load_digits(dir, r.seed);
        if (corpus.surrogate)
            std::cout << "note: no IDX digit files under " << dir
                      << "; generated a procedural surrogate corpus there.\n"
                         "note: to use the real corpus, place train-images-idx3-ubyte, "
                         "train-labels-idx1-ubyte,\n"
                         "note: t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte in that "
                         "directory (or set SGLAB_MNIST_DIR).\n";
        out.train = r.subset_n > 0 ? subset(corpus.train, r.subset_n, r.seed)
                                   : std::move(corpus.train);
        out.test = std::move(corpus.test);
    } else { // csv
        out.train = read_csv(r.path);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run directories: <out_root>/<hash8>-s<seed>, hash over the canonical dump
// of the effective config so identical experiments share a directory and
// rerun byte-identically.

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

std::string config_hash8(const std::string& canonical) {
    return fmt("%08llx",
               static_cast<unsigned long long>(fnv1a64(canonical) >> 32));
}

namespace {

fs::path run_directory(const std::string& out_root, const json& effective,
                       std::uint64_t seed, const std::string& suffix = "") {
    return fs::path(out_root) /
           (config_hash8(effective.dump()) + "-s" + std::to_string(seed) + suffix);
}

// ---------------------------------------------------------------------------
// Shared post-run analyses, usable both from `analyze` and from a config's
// "analyze" block.

void analyze_norms(const TrainState& state, const fs::path& out_dir) {
    const std::vector<double> profile = weight_norm_profile(state.net);
    fs::create_directories(out_dir);
    write_profile_csv((out_dir / "weight_norms.csv").string(), "weight_norm", profile);
    std::cout << "weight norm profile (sums to 1):\n";
    for (std::size_t i = 0; i < profile.size(); ++i)
        std::cout << fmt("  layer %zu: %.6f\n", i, profile[i]);
    std::cout << "wrote " << (out_dir / "weight_norms.csv").string() << "\n";
}

void analyze_rdm(const TrainState& state, const Dataset& ds, std::size_t samples,
                 std::uint64_t seed, const fs::path& out_dir) {
    const std::size_t total = std::min(samples, ds.n());
    Dataset sorted = sample_sorted(ds, total, seed);
    const std::vector<Matrix> acts = layer_activations(state.net, sorted.X);
    fs::create_directories(out_dir);
    std::vector<Matrix> rdms;
    rdms.reserve(acts.size());
    for (std::size_t l = 0; l < acts.size(); ++l) {
        rdms.push_back(compute_rdm(acts[l]));
        write_rdm_csv((out_dir / fmt("rdm_layer_%zu.csv", l)).string(), rdms.back());
    }
    const std::vector<double> profile = rdm_distance_profile(rdms, sorted.labels);
    write_profile_csv((out_dir / "rdm_distance_profile.csv").string(), "distance_to_final",
                      profile);
    const RdmBlockStats stats = rdm_block_stats(rdms.back(), sorted.labels);
    std::cout << fmt("rdm: %zu layers on %zu label-sorted points\n", rdms.size(), total);
    std::cout << "distance-to-final profile:";
    for (double v : profile) std::cout << fmt(" %.4f", v);
    std::cout << "\n";
    std::cout << fmt("final layer dissimilarity: mean within-class %.4f, between-class %.4f\n",
                     stats.mean_within, stats.mean_between);
    std::cout << "wrote " << (out_dir / "rdm_layer_*.csv").string() << " and "
              << (out_dir / "rdm_distance_profile.csv").string() << "\n";
}

void analyze_probes(const TrainState& state, const Dataset& ds, std::size_t samples,
                    std::uint64_t seed, const fs::path& out_dir) {
    const Dataset probed = (samples > 0 && samples < ds.n()) ? subset(ds, samples, seed) : ds;
    const std::vector<Matrix> acts = layer_activations(state.net, probed.X);
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "probe_accuracy.csv", std::ios::binary);
    if (!out) throw IoError("cannot open " + (out_dir / "probe_accuracy.csv").string());
    out << "layer,accuracy,degenerate\n";
    std::cout << fmt("linear probes on %zu points:\n", probed.n());
    for (std::size_t l = 0; l < acts.size(); ++l) {
        const ClassifierProbeResult res = linear_probe_classifier(acts[l], probed.labels);
        out << l << ',' << fmt("%.17g", res.accuracy) << ',' << (res.degenerate ? 1 : 0)
            << '\n';
        std::cout << fmt("  layer %zu: accuracy %.4f%s\n", l, res.accuracy,
                         res.degenerate ? " (degenerate features)" : "");
    }
    if (!out) throw IoError("failed writing probe_accuracy.csv");
    std::cout << "wrote " << (out_dir / "probe_accuracy.csv").string() << "\n";
}

void analyze_surface(const TrainState& state, const GridDataset& grid, const fs::path& out_dir) {
    const LossSurface surface = loss_surface_snapshot(state, grid);
    fs::create_directories(out_dir);
    write_loss_surface_csv((out_dir / "loss_surface.csv").string(), surface);
    const std::vector<double> corr = surface_rank_correlations(surface);
    std::cout << fmt("loss surface at iteration %lld:", static_cast<long long>(surface.iteration));
    for (std::size_t m = 0; m < corr.size(); ++m)
        std::cout << fmt(" module_%zu corr %.4f", m, corr[m]);
    std::cout << "\nwrote " << (out_dir / "loss_surface.csv").string() << "\n";
}

void check_net_matches_data(const TrainState& state, const Dataset& ds) {
    if (ds.d() != state.net.in_dim() || ds.c() != state.net.out_dim())
        throw ConfigError(fmt("checkpoint network expects %zu->%zu but the dataset is %zu->%zu",
                              state.net.in_dim(), state.net.out_dim(), ds.d(), ds.c()));
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const DataRequest& req, const std::string& out_path) {
    LoadedData data = build_data(req);
    write_csv(data.train, out_path);
    std::vector<std::size_t> counts;
    for (int l : data.train.labels) {
        if (static_cast<std::size_t>(l) >= counts.size()) counts.resize(l + 1, 0);
        ++counts[static_cast<std::size_t>(l)];
    }
    std::cout << "wrote " << out_path << ": n=" << data.train.n() << " d=" << data.train.d()
              << " classes:";
    for (std::size_t c = 0; c < counts.size(); ++c) std::cout << fmt(" %zu=%zu", c, counts[c]);
    std::cout << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train: experiments "train", "gap-table", "loss-surface"

struct TrainOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> iterations;
    std::optional<std::string> method;
    std::string out_root; // empty = config's out_dir, else "runs"
    std::string resume;   // checkpoint path
    bool dry_run = false;
};

void apply_overrides(json& cfg, const TrainOverrides& ov) {
    if (ov.seed) cfg["train"]["seed"] = *ov.seed;
    if (ov.iterations) cfg["train"]["iterations"] = *ov.iterations;
    if (ov.method) cfg["network"]["method"] = *ov.method;
}

std::string out_root_of(const json& cfg, const TrainOverrides& ov) {
    if (!ov.out_root.empty()) return ov.out_root;
    return get_str(cfg, "config", "out_dir", "runs");
}

double final_full_loss(const TrainResult& result) {
    return result.records.back().train_loss; // closing record: full-set loss
}

void print_run_summary(const std::string& tag, const TrainResult& result,
                       const LoadedData& data) {
    const ExperimentRecord& last = result.records.back();
    std::cout << tag << ": final train loss " << fmt("%.6g", last.train_loss);
    if (last.test_loss) std::cout << ", test loss " << fmt("%.6g", *last.test_loss);
    const Network& net = result.state.net;
    if (net.loss == LossKind::logloss) {
        const double acc = accuracy(predict(net, data.train.X), data.train.Y);
        std::cout << fmt(", train accuracy %.4f", acc);
    }
    if (!last.sg_losses.empty()) {
        std::cout << ", sg fit losses";
        for (double v : last.sg_losses) std::cout << fmt(" %.3g", v);
    }
    std::cout << "\n";
}

int run_single_train(json cfg, const TrainOverrides& ov) {
    check_keys(cfg, "config",
               {"experiment", "out_dir", "network", "train", "data", "compare_backprop",
                "analyze"});
    apply_overrides(cfg, ov);
    const NetworkSpec spec = parse_network(require_obj(cfg, "config", "network"), "network");
    const TrainConfig train_cfg = parse_train(require_obj(cfg, "config", "train"), "train");
    const DataRequest data_req = parse_data(require_obj(cfg, "config", "data"), "data");
    const bool compare = get_as<bool>(cfg, "config", "compare_backprop", false);
    json analyze_block = cfg.contains("analyze") ? cfg.at("analyze") : json();
    if (!analyze_block.is_null()) {
        check_keys(analyze_block, "analyze", {"kinds", "samples", "seed"});
        for (const json& kind : analyze_block.value("kinds", json::array()))
            if (kind != "rdm" && kind != "probes" && kind != "norms")
                throw ConfigError("analyze.kinds entries must be rdm|probes|norms");
    }
    validate_spec(spec);
    validate_config(train_cfg);
    if (ov.dry_run) {
        std::cout << "config OK\n";
        return kExitOk;
    }

    LoadedData data = build_data(data_req);
    const std::string out_root = out_root_of(cfg, ov);
    const Dataset* test = data.test ? &*data.test : nullptr;

    TrainResult result;
    if (!ov.resume.empty()) {
        TrainState state = load_train_state(ov.resume);
        const fs::path dir = run_directory(out_root, cfg, train_cfg.seed,
                                           "-r" + std::to_string(state.iteration));
        result = run_from(std::move(state), train_cfg, data.train, test, dir.string());
        std::cout << "resumed from " << ov.resume << " into " << dir.string() << "\n";
    } else {
        const fs::path dir = run_directory(out_root, cfg, train_cfg.seed);
        result = run_experiment(spec, train_cfg, data.train, test, dir.string());
        std::cout << "run directory: " << dir.string() << "\n";
    }
    print_run_summary(to_string(spec.method.variant), result, data);

    if (compare) {
        NetworkSpec bp_spec = spec;
        bp_spec.method.variant = GradientMethod::Variant::backprop;
        bp_spec.sg_insertions.clear();
        const fs::path bp_dir = run_directory(out_root, cfg, train_cfg.seed, "-bp");
        TrainResult bp = run_experiment(bp_spec, train_cfg, data.train, test, bp_dir.string());
        print_run_summary("backprop baseline", bp, data);
        std::cout << fmt("final-loss gap vs backprop: %.6g\n",
                         final_full_loss(result) - final_full_loss(bp));
        if (spec.loss == LossKind::logloss) {
            const double a = accuracy(predict(result.state.net, data.train.X), data.train.Y);
            const double b = accuracy(predict(bp.state.net, data.train.X), data.train.Y);
            std::cout << fmt("train-accuracy gap vs backprop: %.4f\n", a - b);
        }
    }

    if (!analyze_block.is_null()) {
        const fs::path dir =
            run_directory(out_root, cfg, train_cfg.seed) / "analysis";
        const std::size_t samples = get_as<std::size_t>(analyze_block, "analyze", "samples", 400);
        const std::uint64_t sample_seed =
            get_as<std::uint64_t>(analyze_block, "analyze", "seed", 0);
        for (const json& kind : analyze_block.value("kinds", json::array())) {
            if (kind == "norms") analyze_norms(result.state, dir);
            if (kind == "rdm") analyze_rdm(result.state, data.train, samples, sample_seed, dir);
            if (kind == "probes")
                analyze_probes(result.state, data.train, samples, sample_seed, dir);
        }
    }
    return kExitOk;
}

int run_gap_table(json cfg, const TrainOverrides& ov) {
    check_keys(cfg, "config", {"experiment", "out_dir", "seeds", "rows"});
    const std::size_t seeds = get_as<std::size_t>(cfg, "config", "seeds", 10);
    if (seeds == 0) throw ConfigError("config key config.seeds must be positive");
    if (!cfg.contains("rows") || !cfg.at("rows").is_array() || cfg.at("rows").empty())
        throw ConfigError("config key config.rows must be a non-empty array");

    struct Row {
        std::string name;
        NetworkSpec spec;
        TrainConfig train;
        DataRequest data;
    };
    std::vector<Row> rows;
    std::size_t idx = 0;
    for (const json& jr : cfg.at("rows")) {
        const std::string path = "rows[" + std::to_string(idx++) + "]";
        check_keys(jr, path, {"name", "network", "train", "data"});
        Row row;
        row.name = get_str(jr, path, "name", path);
        row.spec = parse_network(require_obj(jr, path, "network"), path + ".network");
        row.train = parse_train(require_obj(jr, path, "train"), path + ".train");
        row.data = parse_data(require_obj(jr, path, "data"), path + ".data");
        validate_spec(row.spec);
        validate_config(row.train);
        rows.push_back(std::move(row));
    }
    if (ov.dry_run) {
        std::cout << "config OK\n";
        return kExitOk;
    }

    std::ostringstream md;
    md << "| experiment | method | mean final loss | mean baseline loss | mean abs gap | max "
          "abs gap |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const Row& row : rows) {
        double sum_m = 0.0, sum_b = 0.0, sum_gap = 0.0, max_gap = 0.0;
        for (std::size_t s = 0; s < seeds; ++s) {
            DataRequest dr = row.data;
            dr.seed += s;
            LoadedData data = build_data(dr);
            TrainConfig tc = row.train;
            tc.seed += s;

            TrainResult cand = run_experiment(row.spec, tc, data.train);
            NetworkSpec bp = row.spec;
            bp.method.variant = GradientMethod::Variant::backprop;
            bp.sg_insertions.clear();
            TrainResult base = run_experiment(bp, tc, data.train);

            const double m = final_full_loss(cand), b = final_full_loss(base);
            sum_m += m;
            sum_b += b;
            const double gap = std::abs(m - b);
            sum_gap += gap;
            max_gap = std::max(max_gap, gap);
        }
        const double n = static_cast<double>(seeds);
        md << "| " << row.name << " | " << to_string(row.spec.method.variant) << " | "
           << fmt("%.6g | %.6g | %.6g | %.6g |", sum_m / n, sum_b / n, sum_gap / n, max_gap)
           << "\n";
        std::cout << row.name << fmt(": mean |gap| %.6g over %zu seeds\n", sum_gap / n, seeds);
    }

    const std::string out_root = out_root_of(cfg, ov);
    const fs::path dir = run_directory(out_root, cfg, 0);
    fs::create_directories(dir);
    std::ofstream out(dir / "gap_table.md", std::ios::binary);
    if (!out) throw IoError("cannot open " + (dir / "gap_table.md").string());
    out << md.str();
    if (!out) throw IoError("failed writing gap_table.md");
    std::cout << "\n" << md.str();
    std::cout << "wrote " << (dir / "gap_table.md").string() << "\n";
    return kExitOk;
}

int run_loss_surface(json cfg, const TrainOverrides& ov) {
    check_keys(cfg, "config",
               {"experiment", "out_dir", "network", "train", "data", "snapshot_every",
                "compare_kinds"});
    apply_overrides(cfg, ov);
    NetworkSpec spec = parse_network(require_obj(cfg, "config", "network"), "network");
    const TrainConfig train_cfg = parse_train(require_obj(cfg, "config", "train"), "train");
    const DataRequest data_req = parse_data(require_obj(cfg, "config", "data"), "data");
    if (data_req.kind != "grid")
        throw ConfigError("config key data.kind must be \"grid\" for loss-surface experiments");
    const std::int64_t every = get_as<std::int64_t>(cfg, "config", "snapshot_every", 0);
    if (every <= 0) throw ConfigError("config key config.snapshot_every must be positive");
    std::vector<std::string> kinds;
    if (cfg.contains("compare_kinds")) {
        try {
            kinds = cfg.at("compare_kinds").get<std::vector<std::string>>();
        } catch (const json::exception&) {
            throw ConfigError("config key config.compare_kinds must be a string array");
        }
    } else {
        kinds = {to_string(spec.sg_kind)};
    }
    for (const std::string& k : kinds) (void)sg_kind_from_string(k);
    validate_spec(spec);
    validate_config(train_cfg);
    if (ov.dry_run) {
        std::cout << "config OK\n";
        return kExitOk;
    }

    LoadedData data = build_data(data_req);
    const fs::path dir = run_directory(out_root_of(cfg, ov), cfg, train_cfg.seed);
    fs::create_directories(dir);

    for (const std::string& kind : kinds) {
        NetworkSpec variant = spec;
        variant.sg_kind = sg_kind_from_string(kind);
        const LossSurfaceRun run = loss_surface_experiment(variant, train_cfg, *data.grid, every);
        std::cout << "sg kind " << kind << ":\n";
        double first_half_top = 0.0;
        const std::size_t half = (run.surfaces.size() + 1) / 2;
        for (std::size_t i = 0; i < run.surfaces.size(); ++i) {
            const LossSurface& s = run.surfaces[i];
            write_loss_surface_csv(
                (dir / fmt("surface_%s_%06lld.csv", kind.c_str(),
                           static_cast<long long>(s.iteration)))
                    .string(),
                s);
            const std::vector<double> corr = surface_rank_correlations(s);
            std::cout << fmt("  iteration %6lld:", static_cast<long long>(s.iteration));
            for (double c : corr) std::cout << fmt(" %+.4f", c);
            std::cout << "\n";
            if (i < half && !corr.empty()) first_half_top += corr.back();
        }
        std::cout << fmt("  topmost module, mean correlation over first half: %.4f\n",
                         first_half_top / static_cast<double>(half));
    }
    std::cout << "wrote surfaces under " << dir.string() << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, const TrainOverrides& ov) {
    json cfg = parse_config_file(config_path);
    const std::string experiment = get_str(cfg, "config", "experiment", "train");
    if (experiment == "train") return run_single_train(std::move(cfg), ov);
    if (experiment == "gap-table") return run_gap_table(std::move(cfg), ov);
    if (experiment == "loss-surface") return run_loss_surface(std::move(cfg), ov);
    throw ConfigError("config key config.experiment must be train|gap-table|loss-surface");
}

// ---------------------------------------------------------------------------
// dynamics: the linear-regression + linear-gradient-model simulator

struct DynamicsArgs {
    std::size_t S = 20, d = 5;
    std::uint64_t seed = 1;
    double tol = 1e-6;
    std::int64_t max_iters = 100000;
    std::string out_root = "runs";
};

int cmd_dynamics(const DynamicsArgs& a) {
    Rng rng(a.seed);
    Matrix x = gaussian_matrix(rng, a.S, a.d);
    Matrix y = gaussian_matrix(rng, a.S, 1);
    SGRegressionState state = sg_regression_init(x, y, rng);
    const SGRegressionRun run = sg_regression_run(state, a.tol, a.max_iters);

    json canonical = {{"experiment", "sg-regression"}, {"S", a.S},     {"d", a.d},
                      {"seed", a.seed},                {"tol", a.tol}, {"max_iters", a.max_iters}};
    const fs::path dir = run_directory(a.out_root, canonical, a.seed);
    fs::create_directories(dir);
    write_sg_regression_csv((dir / "trace.csv").string(), run);

    bool monotone = true;
    for (std::size_t i = 1; i < run.trace.size(); ++i) {
        const double prev = run.trace[i - 1].f_norm + run.trace[i - 1].xi_norm;
        const double cur = run.trace[i].f_norm + run.trace[i].xi_norm;
        if (!(cur < prev)) monotone = false;
    }
    const SGRegressionTracePoint& last = run.trace.back();
    const double w_rel = last.w_err / std::max(1e-300, frobenius_norm(state.W_ols));

    std::cout << fmt("problem: S=%zu d=%zu seed=%llu\n", a.S, a.d,
                     static_cast<unsigned long long>(a.seed));
    std::cout << (run.converged ? fmt("converged in %lld iterations\n",
                                      static_cast<long long>(run.iterations))
                                : fmt("did not converge within %lld iterations%s\n",
                                      static_cast<long long>(a.max_iters),
                                      run.stalled ? " (line search stalled)" : ""));
    std::cout << fmt("final combined norm: %.3e\n", last.f_norm + last.xi_norm);
    std::cout << fmt("final coefficients: alpha=%.3e beta=%.3e gamma=%.3e\n", last.alpha,
                     last.beta, last.gamma);
    std::cout << fmt("distance to least-squares solution: %.3e (relative %.3e)\n", last.w_err,
                     w_rel);
    std::cout << "monotone decrease of the combined norm: " << (monotone ? "yes" : "NO") << "\n";
    std::cout << "trace: " << (dir / "trace.csv").string() << "\n";

    if (run.converged && monotone) {
        std::cout << "verdict: PASS\n";
        return kExitOk;
    }
    std::cout << "verdict: FAIL ("
              << (!run.converged ? "no convergence within budget" : "non-monotone trace")
              << ")\n";
    return kExitVerdictFailed;
}

// ---------------------------------------------------------------------------
// critical-point: the constant-gradient-model equilibrium demonstration

struct CriticalPointArgs {
    double a0 = 1.0, b0 = 0.0;
    double lr_model = 1e-3, lr_sg = 0.1;
    std::int64_t iters = 2000;
    bool use_true_grad = false;
    std::string out_root = "runs";
};

void write_critical_point_csv(const std::string& path,
                              const std::vector<CriticalPointTracePoint>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "iteration,a,b,c,loss,true_grad_norm\n";
    for (const CriticalPointTracePoint& t : trace)
        out << t.iteration << ','
            << fmt("%.17g,%.17g,%.17g,%.17g,%.17g", t.a, t.b, t.c, t.loss, t.true_grad_norm)
            << '\n';
    if (!out) throw IoError("failed writing " + path);
}

int cmd_critical_point(const CriticalPointArgs& a) {
    json canonical = {{"experiment", "critical-point"},
                      {"a0", a.a0},
                      {"b0", a.b0},
                      {"lr_model", a.lr_model},
                      {"lr_sg", a.lr_sg},
                      {"iters", a.iters},
                      {"use_true_grad", a.use_true_grad}};
    const fs::path dir = run_directory(a.out_root, canonical, 0);
    fs::create_directories(dir);

    if (a.use_true_grad) {
        const SubgradientDescentResult res =
            true_subgradient_descent(a.a0, a.b0, a.lr_model, a.iters);
        std::cout << fmt("true-subgradient descent from (%.3g, %.3g): a=%.3e b=%.3e loss=%.3e\n",
                         a.a0, a.b0, res.a, res.b, res.loss);
        std::ofstream out(dir / "subgradient_final.csv", std::ios::binary);
        if (!out) throw IoError("cannot open " + (dir / "subgradient_final.csv").string());
        out << "a,b,loss\n" << fmt("%.17g,%.17g,%.17g\n", res.a, res.b, res.loss);
        if (std::abs(res.a) < 1e-2 && std::abs(res.b) < 1e-2) {
            std::cout << "verdict: converged to the true minimum\n";
            return kExitOk;
        }
        std::cout << "verdict: FAIL (did not reach the minimum)\n";
        return kExitVerdictFailed;
    }

    const CriticalPointResult res =
        critical_point_demo(a.a0, a.b0, a.lr_model, a.lr_sg, a.iters);
    write_critical_point_csv((dir / "trace.csv").string(), res.trace);
    std::cout << fmt("terminal point: a=%.6g b=%.6g c=%.6g\n", res.a, res.b, res.c);
    std::cout << fmt("model drive norm: %.3e, model fit gradient: %.3e\n", res.sg_drive_norm,
                     res.sg_fit_grad);
    std::cout << fmt("true gradient at terminal point: (%.6g, %.6g), norm %.6g\n",
                     res.true_grad_a, res.true_grad_b, res.true_grad_norm);
    std::cout << "trace: " << (dir / "trace.csv").string() << "\n";
    if (res.spurious_equilibrium) {
        std::cout << fmt("verdict: spurious equilibrium reached; true gradient norm %.6g\n",
                         res.true_grad_norm);
        return kExitOk;
    }
    std::cout << "verdict: no spurious equilibrium at the terminal point\n";
    return kExitVerdictFailed;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
    std::string kind; // rdm | probes | norms | loss-surface
    std::string checkpoint;
    std::string out_dir;
    std::size_t samples = 400;
    DataRequest data;
    bool has_data = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
    TrainState state = load_train_state(a.checkpoint);
    const fs::path out =
        a.out_dir.empty() ? fs::path(a.checkpoint).parent_path() / "analysis" : fs::path(a.out_dir);

    if (a.kind == "norms") {
        analyze_norms(state, out);
        return kExitOk;
    }
    if (!a.has_data)
        throw ConfigError("--data-kind is required for " + a.kind + " analysis");
    validate_data_request(a.data, "data");
    LoadedData data = build_data(a.data);
    if (a.kind == "loss-surface") {
        if (!data.grid) throw ConfigError("loss-surface analysis needs --data-kind grid");
        check_net_matches_data(state, data.grid->data);
        analyze_surface(state, *data.grid, out);
        return kExitOk;
    }
    check_net_matches_data(state, data.train);
    if (a.kind == "rdm") {
        analyze_rdm(state, data.train, a.samples, a.data.seed, out);
        return kExitOk;
    }
    if (a.kind == "probes") {
        analyze_probes(state, data.train, a.samples, a.data.seed, out);
        return kExitOk;
    }
    throw ConfigError("--kind must be one of rdm|probes|norms|loss-surface");
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const std::string& run_dir, std::string out_path) {
    const fs::path metrics = fs::path(run_dir) / "metrics.jsonl";
    if (!fs::exists(metrics)) throw IoError("no metrics.jsonl under " + run_dir);
    const std::vector<ExperimentRecord> records = read_jsonl(metrics.string());
    if (records.empty()) throw IoError(metrics.string() + " is empty");

    std::ostringstream md;
    md << "# Run report: " << fs::path(run_dir).filename().string() << "\n\n";
    md << "| metric | value |\n|---|---|\n";
    const ExperimentRecord& first = records.front();
    const ExperimentRecord& last = records.back();
    md << "| logged records | " << records.size() << " |\n";
    md << "| final iteration | " << last.iteration << " |\n";
    md << fmt("| first logged train loss | %.6g |\n", first.train_loss);
    md << fmt("| final train loss (full set) | %.6g |\n", last.train_loss);
    if (last.test_loss) md << fmt("| final test loss | %.6g |\n", *last.test_loss);
    if (!last.sg_losses.empty()) {
        md << "| final sg fit losses | ";
        for (std::size_t i = 0; i < last.sg_losses.size(); ++i)
            md << fmt(i ? ", %.3g" : "%.3g", last.sg_losses[i]);
        md << " |\n";
    }

    const fs::path ckpt = fs::path(run_dir) / "checkpoint.sgck";
    if (fs::exists(ckpt)) {
        const TrainState state = load_train_state(ckpt.string());
        const std::vector<double> profile = weight_norm_profile(state.net);
        md << "| weight norm profile | ";
        for (std::size_t i = 0; i < profile.size(); ++i)
            md << fmt(i ? ", %.4f" : "%.4f", profile[i]);
        md << " |\n";
    }

    if (out_path.empty()) out_path = (fs::path(run_dir) / "report.md").string();
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot open " + out_path + " for writing");
    out << md.str();
    if (!out) throw IoError("failed writing " + out_path);
    std::cout << md.str() << "wrote " << out_path << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

void load_dynamics_preset(const std::string& path, DynamicsArgs& a) {
    json cfg = parse_config_file(path);
    check_keys(cfg, "config", {"experiment", "S", "d", "seed", "tol", "max_iters", "out_dir"});
    if (get_str(cfg, "config", "experiment", "sg-regression") != "sg-regression")
        throw ConfigError("config key config.experiment must be \"sg-regression\"");
    a.S = get_as<std::size_t>(cfg, "config", "S", a.S);
    a.d = get_as<std::size_t>(cfg, "config", "d", a.d);
    a.seed = get_as<std::uint64_t>(cfg, "config", "seed", a.seed);
    a.tol = get_as<double>(cfg, "config", "tol", a.tol);
    a.max_iters = get_as<std::int64_t>(cfg, "config", "max_iters", a.max_iters);
    a.out_root = get_str(cfg, "config", "out_dir", a.out_root);
}

void load_critical_point_preset(const std::string& path, CriticalPointArgs& a) {
    json cfg = parse_config_file(path);
    check_keys(cfg, "config",
               {"experiment", "a0", "b0", "lr_model", "lr_sg", "iters", "use_true_grad",
                "out_dir"});
    if (get_str(cfg, "config", "experiment", "critical-point") != "critical-point")
        throw ConfigError("config key config.experiment must be \"critical-point\"");
    a.a0 = get_as<double>(cfg, "config", "a0", a.a0);
    a.b0 = get_as<double>(cfg, "config", "b0", a.b0);
    a.lr_model = get_as<double>(cfg, "config", "lr_model", a.lr_model);
    a.lr_sg = get_as<double>(cfg, "config", "lr_sg", a.lr_sg);
    a.iters = get_as<std::int64_t>(cfg, "config", "iters", a.iters);
    a.use_true_grad = get_as<bool>(cfg, "config", "use_true_grad", a.use_true_grad);
    a.out_root = get_str(cfg, "config", "out_dir", a.out_root);
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"synthetic-gradient laboratory: decoupled training, dynamics simulators, and "
                 "representation analyses"};
    app.require_subcommand(1);

    // gen-data ---------------------------------------------------------------
    DataRequest gen_req;
    std::string gen_out = "dataset.csv";
    CLI::App* gen = app.add_subcommand("gen-data", "generate a dataset and write it as CSV");
    gen->add_option("--kind", gen_req.kind, "linear | noisy | random | grid")->required();
    gen->add_option("--k", gen_req.k, "input dimensionality");
    gen->add_option("--seed", gen_req.seed, "generation seed");
    gen->add_option("--noise-rate", gen_req.noise_rate, "label flip fraction (grid)");
    gen->add_option("--resolution", gen_req.resolution, "grid resolution");
    gen->add_option("--lo", gen_req.lo, "grid lower bound");
    gen->add_option("--hi", gen_req.hi, "grid upper bound");
    gen->add_option("--labeler", gen_req.labeler, "grid labeler: linear_with_noise | random");
    gen->add_option("--out", gen_out, "output CSV path");

    // train -------------------------------------------------------------------
    std::string train_config;
    TrainOverrides ov;
    std::uint64_t ov_seed = 0;
    std::int64_t ov_iters = 0;
    std::string ov_method;
    CLI::App* train = app.add_subcommand(
        "train", "run a configured experiment (train | gap-table | loss-surface)");
    train->add_option("--config", train_config, "JSON experiment config")->required();
    CLI::Option* seed_opt = train->add_option("--seed", ov_seed, "override train.seed");
    CLI::Option* iter_opt = train->add_option("--iterations", ov_iters, "override iterations");
    CLI::Option* method_opt = train->add_option("--method", ov_method, "override network.method");
    train->add_option("--out-root", ov.out_root, "root directory for run outputs");
    train->add_option("--resume", ov.resume, "continue training from a checkpoint file");
    train->add_flag("--dry-run", ov.dry_run, "validate the config and exit");

    // dynamics ----------------------------------------------------------------
    DynamicsArgs dyn;
    std::string dyn_config;
    CLI::App* dynamics = app.add_subcommand(
        "dynamics", "simulate gradient-model-driven linear regression to convergence");
    dynamics->add_option("--config", dyn_config, "JSON preset (flags override it)");
    CLI::Option* dyn_s = dynamics->add_option("--S", dyn.S, "number of samples");
    CLI::Option* dyn_d = dynamics->add_option("--d", dyn.d, "input dimensionality");
    CLI::Option* dyn_seed = dynamics->add_option("--seed", dyn.seed, "problem seed");
    CLI::Option* dyn_tol = dynamics->add_option("--tol", dyn.tol, "combined-norm target");
    CLI::Option* dyn_budget =
        dynamics->add_option("--max-iters", dyn.max_iters, "iteration budget");
    CLI::Option* dyn_out = dynamics->add_option("--out-root", dyn.out_root, "output root");

    // critical-point ----------------------------------------------------------
    CriticalPointArgs cp;
    std::string cp_config;
    CLI::App* critical = app.add_subcommand(
        "critical-point",
        "drive an absolute-value model with a constant gradient model into its frozen point");
    critical->add_option("--config", cp_config, "JSON preset (flags override it)");
    CLI::Option* cp_a0 = critical->add_option("--a0", cp.a0, "initial slope");
    CLI::Option* cp_b0 = critical->add_option("--b0", cp.b0, "initial offset");
    CLI::Option* cp_lrm = critical->add_option("--lr-model", cp.lr_model, "model learning rate");
    CLI::Option* cp_lrs =
        critical->add_option("--lr-sg", cp.lr_sg, "gradient-model learning rate");
    CLI::Option* cp_iters = critical->add_option("--iters", cp.iters, "iterations");
    CLI::Option* cp_true = critical->add_flag("--use-true-grad", cp.use_true_grad,
                                              "run true-subgradient descent instead");
    CLI::Option* cp_out = critical->add_option("--out-root", cp.out_root, "output root");

    // analyze -----------------------------------------------------------------
    AnalyzeArgs an;
    CLI::App* analyze =
        app.add_subcommand("analyze", "run analyses against a training checkpoint");
    analyze->add_option("--kind", an.kind, "rdm | probes | norms | loss-surface")->required();
    analyze->add_option("--checkpoint", an.checkpoint, "checkpoint.sgck path")->required();
    analyze->add_option("--out", an.out_dir, "output directory (default: <ckpt dir>/analysis)");
    analyze->add_option("--samples", an.samples, "points to sample for rdm/probes");
    CLI::Option* an_kind =
        analyze->add_option("--data-kind", an.data.kind, "linear|noisy|random|grid|mnist|csv");
    analyze->add_option("--k", an.data.k, "input dimensionality");
    analyze->add_option("--data-seed", an.data.seed, "dataset seed");
    analyze->add_option("--noise-rate", an.data.noise_rate, "noise rate");
    analyze->add_option("--resolution", an.data.resolution, "grid resolution");
    analyze->add_option("--lo", an.data.lo, "grid lower bound");
    analyze->add_option("--hi", an.data.hi, "grid upper bound");
    analyze->add_option("--labeler", an.data.labeler, "grid labeler");
    analyze->add_option("--mnist-dir", an.data.dir, "IDX directory");
    analyze->add_option("--subset", an.data.subset_n, "dataset subset size");
    analyze->add_option("--csv-path", an.data.path, "CSV dataset path");

    // report ------------------------------------------------------------------
    std::string report_run, report_out;
    CLI::App* report = app.add_subcommand("report", "summarize a run directory as Markdown");
    report->add_option("--run", report_run, "run directory with metrics.jsonl")->required();
    report->add_option("--out", report_out, "output file (default: <run>/report.md)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            if (gen_req.kind == "mnist" || gen_req.kind == "csv")
                throw ConfigError("gen-data handles generated kinds only "
                                  "(linear|noisy|random|grid)");
            validate_data_request(gen_req, "flags");
            return cmd_gen_data(gen_req, gen_out);
        }
        if (*train) {
            if (*seed_opt) ov.seed = ov_seed;
            if (*iter_opt) ov.iterations = ov_iters;
            if (*method_opt) ov.method = ov_method;
            return cmd_train(train_config, ov);
        }
        if (*dynamics) {
            DynamicsArgs merged;
            if (!dyn_config.empty()) load_dynamics_preset(dyn_config, merged);
            if (*dyn_s) merged.S = dyn.S;
            if (*dyn_d) merged.d = dyn.d;
            if (*dyn_seed) merged.seed = dyn.seed;
            if (*dyn_tol) merged.tol = dyn.tol;
            if (*dyn_budget) merged.max_iters = dyn.max_iters;
            if (*dyn_out) merged.out_root = dyn.out_root;
            return cmd_dynamics(merged);
        }
        if (*critical) {
            CriticalPointArgs merged;
            if (!cp_config.empty()) load_critical_point_preset(cp_config, merged);
            if (*cp_a0) merged.a0 = cp.a0;
            if (*cp_b0) merged.b0 = cp.b0;
            if (*cp_lrm) merged.lr_model = cp.lr_model;
            if (*cp_lrs) merged.lr_sg = cp.lr_sg;
            if (*cp_iters) merged.iters = cp.iters;
            if (*cp_true) merged.use_true_grad = cp.use_true_grad;
            if (*cp_out) merged.out_root = cp.out_root;
            return cmd_critical_point(merged);
        }
        if (*analyze) {
            an.has_data = static_cast<bool>(*an_kind);
            return cmd_analyze(an);
        }
        if (*report) return cmd_report(report_run, report_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}

} // namespace sglab
