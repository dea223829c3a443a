#include "sglab/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "sglab/errors.hpp"

namespace sglab {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::ifstream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw IoError("checkpoint '" + path + "' is truncated");
    }
    return v;
}

} // namespace

void save_blobs(const std::string& path, const BlobMap& blobs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out.write(kMagic, 4);
    put(out, kVersion);
    put(out, static_cast<std::uint64_t>(blobs.size()));
    for (const auto& [name, m] : blobs) {
        put(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put(out, static_cast<std::uint64_t>(m.rows()));
        put(out, static_cast<std::uint64_t>(m.cols()));
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw IoError("write to checkpoint '" + path + "' failed");
}

BlobMap load_blobs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("'" + path + "' is not a checkpoint (bad magic)");
    }
    const auto version = take<std::uint32_t>(in, path);
    if (version != kVersion) {
        throw IoError("checkpoint '" + path + "' has version " + std::to_string(version) +
                      ", expected " + std::to_string(kVersion));
    }
    const auto count = take<std::uint64_t>(in, path);
    BlobMap blobs;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = take<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) {
            throw IoError("checkpoint '" + path + "' is truncated");
        }
        const auto rows = take<std::uint64_t>(in, path);
        const auto cols = take<std::uint64_t>(in, path);
        Matrix m(rows, cols);
        if (!in.read(reinterpret_cast<char*>(m.data()),
                     static_cast<std::streamsize>(m.size() * sizeof(double)))) {
            throw IoError("checkpoint '" + path + "' is truncated in blob '" + name + "'");
        }
        if (!blobs.emplace(std::move(name), std::move(m)).second) {
            throw IoError("checkpoint '" + path + "' has a duplicate blob name");
        }
    }
    return blobs;
}

Matrix scalar_blob(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return m;
}

const Matrix& blob_at(const BlobMap& blobs, const std::string& key) {
    auto it = blobs.find(key);
    if (it == blobs.end()) throw IoError("checkpoint is missing blob '" + key + "'");
    return it->second;
}

double blob_scalar(const BlobMap& blobs, const std::string& key) {
    const Matrix& m = blob_at(blobs, key);
    if (m.size() != 1) {
        throw IoError("checkpoint blob '" + key + "' has shape " + shape_str(m) +
                      ", expected a scalar");
    }
    return m(0, 0);
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw NumericError(std::string("metrics record has non-finite ") + what);
    }
}

} // namespace

std::string to_json_line(const ExperimentRecord& r) {
    require_finite(static_cast<double>(r.iteration), "iteration");
    require_finite(r.train_loss, "train_loss");
    if (r.test_loss) require_finite(*r.test_loss, "test_loss");
    if (r.eps_ratio) require_finite(*r.eps_ratio, "eps_ratio");
    for (double v : r.sg_losses) require_finite(v, "sg_losses entry");
    for (double v : r.w_sq_norms) require_finite(v, "w_sq_norms entry");
    for (double v : r.grad_sq_norms) require_finite(v, "grad_sq_norms entry");

    json j;
    j["iteration"] = r.iteration;
    j["train_loss"] = r.train_loss;
    if (r.test_loss) j["test_loss"] = *r.test_loss;
    j["sg_losses"] = r.sg_losses;
    if (r.eps_ratio) j["eps_ratio"] = *r.eps_ratio;
    j["w_sq_norms"] = r.w_sq_norms;
    j["grad_sq_norms"] = r.grad_sq_norms;
    return j.dump(); // nlohmann objects iterate sorted by key
}

ExperimentRecord record_from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("bad metrics line: ") + e.what());
    }
    ExperimentRecord r;
    r.iteration = j.at("iteration").get<std::int64_t>();
    r.train_loss = j.at("train_loss").get<double>();
    if (j.contains("test_loss")) r.test_loss = j.at("test_loss").get<double>();
    r.sg_losses = j.at("sg_losses").get<std::vector<double>>();
    if (j.contains("eps_ratio")) r.eps_ratio = j.at("eps_ratio").get<double>();
    r.w_sq_norms = j.at("w_sq_norms").get<std::vector<double>>();
    r.grad_sq_norms = j.at("grad_sq_norms").get<std::vector<double>>();
    return r;
}

void write_jsonl(const std::string& path, const std::vector<ExperimentRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write metrics '" + path + "'");
    for (const auto& r : records) out << to_json_line(r) << "\n";
    if (!out) throw IoError("write to metrics '" + path + "' failed");
}

std::vector<ExperimentRecord> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics '" + path + "'");
    std::vector<ExperimentRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) records.push_back(record_from_json_line(line));
    }
    return records;
}

} // namespace sglab
