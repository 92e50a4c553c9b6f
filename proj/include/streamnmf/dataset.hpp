#pragma once

#include "streamnmf/basis_selection.hpp"
#include "streamnmf/em_engine.hpp"
#include "streamnmf/relaxed_basis.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace streamnmf {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// FNV-1a over a file's bytes, rendered as "fnv1a64:<hex>".
inline std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open file for hashing: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char chunk[4096];
    while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(chunk[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016" PRIx64, h);
    return buf;
}

// ---------------------------------------------------------------------------
// flat key = value files (manifests, parameter estimates, run configs)

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw data_error(context + ": not a number: '" + s + "'");
    }
}

inline long long parse_integer(const std::string& s, const std::string& context) {
    try {
        size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw data_error(context + ": not an integer: '" + s + "'");
    }
}

/// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
inline std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open file: " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    long line_no = 0;
    auto trim = [](std::string s) {
        const auto begin = s.find_first_not_of(" \t\r");
        const auto end = s.find_last_not_of(" \t\r");
        return begin == std::string::npos ? std::string{} : s.substr(begin, end - begin + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw data_error(path.string() + ":" + std::to_string(line_no) +
                             ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw data_error(path.string() + ":" + std::to_string(line_no) + ": empty key");
        out[key] = value;
    }
    return out;
}

inline void write_kv_file(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write file: " + path.string());
    for (const auto& [key, value] : entries) out << key << " = " << value << "\n";
}

// ---------------------------------------------------------------------------
// observation streams

enum class ObservationFormat { csv, ndjson };

/// Streams observation rows from disk with bounded memory. CSV rows are
/// comma-separated integers; NDJSON rows are JSON arrays of integers.
class FileObservationSource final : public ObservationSource {
  public:
    FileObservationSource(std::filesystem::path path,
                          ObservationFormat format = ObservationFormat::csv,
                          Eigen::Index expected_cols = 0)
        : path_(std::move(path)), format_(format), expected_cols_(expected_cols),
          in_(path_) {
        if (!in_) throw data_error("cannot open observations: " + path_.string());
    }

    std::optional<Vector> next() override {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (line.empty()) continue;
            return format_ == ObservationFormat::csv ? parse_csv(line) : parse_ndjson(line);
        }
        return std::nullopt;
    }

  private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw data_error(path_.string() + ":" + std::to_string(line_no_) + ": " + msg);
    }

    void check_width(Eigen::Index n) {
        if (expected_cols_ == 0) expected_cols_ = n;
        if (n != expected_cols_)
            fail("expected " + std::to_string(expected_cols_) + " fields, found " +
                 std::to_string(n));
    }

    Vector parse_csv(const std::string& line) {
        std::vector<double> values;
        const char* ptr = line.data();
        const char* end = line.data() + line.size();
        while (true) {
            long long v = 0;
            auto [next, ec] = std::from_chars(ptr, end, v);
            if (ec != std::errc{} || (next != end && *next != ','))
                fail("malformed count field");
            if (v < 0) fail("negative count");
            values.push_back(static_cast<double>(v));
            if (next == end) break;
            ptr = next + 1;
            if (ptr == end) fail("trailing comma");
        }
        check_width(static_cast<Eigen::Index>(values.size()));
        return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
    }

    Vector parse_ndjson(const std::string& line) {
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(std::string("invalid JSON: ") + e.what());
        }
        if (!row.is_array()) fail("expected a JSON array of counts");
        Vector y(static_cast<Eigen::Index>(row.size()));
        Eigen::Index i = 0;
        for (const auto& cell : row) {
            if (!cell.is_number_unsigned())
                fail("counts must be nonnegative integers");
            y(i++) = cell.get<double>();
        }
        check_width(y.size());
        return y;
    }

    std::filesystem::path path_;
    ObservationFormat format_;
    Eigen::Index expected_cols_;
    std::ifstream in_;
    long line_no_ = 0;
};

inline void write_observations_csv(const std::filesystem::path& path,
                                   std::span<const Vector> ys) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write observations: " + path.string());
    for (const Vector& y : ys) {
        for (Eigen::Index m = 0; m < y.size(); ++m) {
            if (m) out << ',';
            out << static_cast<long long>(y(m));
        }
        out << '\n';
    }
}

inline void write_latents_csv(const std::filesystem::path& path, std::span<const Vector> xs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write latents: " + path.string());
    for (const Vector& x : xs) {
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            if (k) out << ',';
            out << format_double(x(k));
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// dataset manifests

constexpr const char* model_name(const BasisSelectionModel&) { return "basis"; }
constexpr const char* model_name(const RelaxedBasisModel&) { return "relaxed"; }

inline void append_psi(std::vector<std::pair<std::string, std::string>>& kv,
                       const BasisSelectionParams& psi) {
    kv.emplace_back("p", format_double(psi.p));
    kv.emplace_back("q", format_double(psi.q));
}
inline void append_psi(std::vector<std::pair<std::string, std::string>>& kv,
                       const RelaxedParams& psi) {
    kv.emplace_back("alpha", format_double(psi.alpha));
}

/// Description of one simulated dataset: generating parameters, dimensions,
/// file names (relative to the manifest) and content hashes.
struct DatasetManifest {
    std::string model;
    Eigen::Index m = 0;
    int k = 0;
    long t = 0;
    std::uint64_t seed = 0;
    Matrix true_B;
    std::optional<BasisSelectionParams> basis_psi;
    std::optional<RelaxedParams> relaxed_psi;
    std::string observations_file;
    std::string observations_hash;
    std::string latents_file; // empty when latents were not dumped
    std::string latents_hash;
};

inline void save_manifest(const DatasetManifest& man, const std::filesystem::path& path) {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("model", man.model);
    kv.emplace_back("m", std::to_string(man.m));
    kv.emplace_back("k", std::to_string(man.k));
    kv.emplace_back("t", std::to_string(man.t));
    kv.emplace_back("seed", std::to_string(man.seed));
    if (man.basis_psi) append_psi(kv, *man.basis_psi);
    if (man.relaxed_psi) append_psi(kv, *man.relaxed_psi);
    for (Eigen::Index r = 0; r < man.true_B.rows(); ++r)
        for (Eigen::Index c = 0; c < man.true_B.cols(); ++c)
            kv.emplace_back("b_" + std::to_string(r + 1) + "_" + std::to_string(c + 1),
                            format_double(man.true_B(r, c)));
    kv.emplace_back("observations", man.observations_file);
    kv.emplace_back("observations_hash", man.observations_hash);
    if (!man.latents_file.empty()) {
        kv.emplace_back("latents", man.latents_file);
        kv.emplace_back("latents_hash", man.latents_hash);
    }
    write_kv_file(path, kv);
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    const auto kv = read_kv_file(path);
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end())
            throw data_error(path.string() + ": missing manifest key '" + key + "'");
        return it->second;
    };
    const std::string ctx = path.string();
    DatasetManifest man;
    man.model = need("model");
    man.m = static_cast<Eigen::Index>(parse_integer(need("m"), ctx));
    man.k = static_cast<int>(parse_integer(need("k"), ctx));
    man.t = static_cast<long>(parse_integer(need("t"), ctx));
    man.seed = static_cast<std::uint64_t>(parse_integer(need("seed"), ctx));
    if (man.m < 1 || man.k < 1 || man.t < 0)
        throw data_error(ctx + ": manifest dimensions out of range");
    man.true_B.resize(man.m, man.k);
    for (Eigen::Index r = 0; r < man.m; ++r)
        for (Eigen::Index c = 0; c < man.k; ++c)
            man.true_B(r, c) = parse_double(
                need("b_" + std::to_string(r + 1) + "_" + std::to_string(c + 1)), ctx);
    if (man.model == "basis") {
        man.basis_psi =
            BasisSelectionParams{parse_double(need("p"), ctx), parse_double(need("q"), ctx)};
    } else if (man.model == "relaxed") {
        man.relaxed_psi = RelaxedParams{parse_double(need("alpha"), ctx)};
    } else {
        throw data_error(path.string() + ": unknown model '" + man.model + "'");
    }
    man.observations_file = need("observations");
    man.observations_hash = need("observations_hash");
    if (auto it = kv.find("latents"); it != kv.end()) {
        man.latents_file = it->second;
        man.latents_hash = need("latents_hash");
    }
    return man;
}

// ---------------------------------------------------------------------------
// simulators

template <StateProcess P>
struct SimulatedSequences {
    std::vector<Vector> xs;
    std::vector<Vector> ys;
};

/// Draws T steps of the chain and its observations.
template <StateProcess P>
SimulatedSequences<P> simulate_sequences(const P& model, const Theta<P>& theta, long t_len,
                                         Rng& rng) {
    require(t_len >= 0, "simulate_sequences: negative length");
    SimulatedSequences<P> out;
    out.xs.reserve(static_cast<size_t>(t_len));
    out.ys.reserve(static_cast<size_t>(t_len));
    Vector x;
    for (long t = 1; t <= t_len; ++t) {
        x = t == 1 ? model.sample_initial(theta.psi, rng)
                   : model.sample_transition(theta.psi, x, rng);
        out.xs.push_back(x);
        out.ys.push_back(simulate_observation(theta.B, x, rng).second);
    }
    return out;
}

/// Simulates a dataset and writes observations (plus latents when asked) and
/// the manifest into `dir`. Deterministic per seed.
template <StateProcess P>
DatasetManifest simulate_dataset(const P& model, const Theta<P>& theta, long t_len,
                                 std::uint64_t seed, const std::filesystem::path& dir,
                                 bool dump_latents = false) {
    require(theta.B.cols() == model.dim(), "simulate_dataset: B column count must equal K");
    require((theta.B.array() >= 0.0).all(), "simulate_dataset: B must be nonnegative");
    std::filesystem::create_directories(dir);
    Rng rng(seed);
    SimulatedSequences<P> seq = simulate_sequences(model, theta, t_len, rng);

    DatasetManifest man;
    man.model = model_name(model);
    man.m = theta.B.rows();
    man.k = model.dim();
    man.t = t_len;
    man.seed = seed;
    man.true_B = theta.B;
    if constexpr (std::is_same_v<P, BasisSelectionModel>) man.basis_psi = theta.psi;
    if constexpr (std::is_same_v<P, RelaxedBasisModel>) man.relaxed_psi = theta.psi;

    man.observations_file = "observations.csv";
    write_observations_csv(dir / man.observations_file, seq.ys);
    man.observations_hash = file_hash(dir / man.observations_file);
    if (dump_latents) {
        man.latents_file = "latents.csv";
        write_latents_csv(dir / man.latents_file, seq.xs);
        man.latents_hash = file_hash(dir / man.latents_file);
    }
    save_manifest(man, dir / "manifest.txt");
    return man;
}

// ---------------------------------------------------------------------------
// final parameter estimates

template <StateProcess P>
void save_estimate(const std::filesystem::path& path, const P& model, const Theta<P>& theta,
                   long t_final) {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("model", model_name(model));
    kv.emplace_back("m", std::to_string(theta.B.rows()));
    kv.emplace_back("k", std::to_string(theta.B.cols()));
    kv.emplace_back("t", std::to_string(t_final));
    append_psi(kv, theta.psi);
    for (Eigen::Index r = 0; r < theta.B.rows(); ++r)
        for (Eigen::Index c = 0; c < theta.B.cols(); ++c)
            kv.emplace_back("b_" + std::to_string(r + 1) + "_" + std::to_string(c + 1),
                            format_double(theta.B(r, c)));
    write_kv_file(path, kv);
}

struct EstimateFile {
    std::string model;
    Matrix B;
    std::optional<BasisSelectionParams> basis_psi;
    std::optional<RelaxedParams> relaxed_psi;
    long t = 0;
};

inline EstimateFile load_estimate(const std::filesystem::path& path) {
    const auto kv = read_kv_file(path);
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end())
            throw data_error(path.string() + ": missing key '" + key + "'");
        return it->second;
    };
    EstimateFile est;
    const std::string ctx = path.string();
    est.model = need("model");
    const auto m = static_cast<Eigen::Index>(parse_integer(need("m"), ctx));
    const auto k = static_cast<Eigen::Index>(parse_integer(need("k"), ctx));
    est.t = static_cast<long>(parse_integer(need("t"), ctx));
    est.B.resize(m, k);
    for (Eigen::Index r = 0; r < m; ++r)
        for (Eigen::Index c = 0; c < k; ++c)
            est.B(r, c) = parse_double(
                need("b_" + std::to_string(r + 1) + "_" + std::to_string(c + 1)), ctx);
    if (est.model == "basis")
        est.basis_psi =
            BasisSelectionParams{parse_double(need("p"), ctx), parse_double(need("q"), ctx)};
    else if (est.model == "relaxed")
        est.relaxed_psi = RelaxedParams{parse_double(need("alpha"), ctx)};
    return est;
}

} // namespace streamnmf
