#pragma once

#include <cardiodg/error.hpp>
#include <cardiodg/model.hpp>
#include <cardiodg/version.hpp>

#include <json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace cardiodg {

namespace fs = std::filesystem;

/// Seven target rhythm/conduction classes. The ordinals are part of every
/// serialized artifact and must never be reordered.
enum class ArrhythmiaClass : int { N = 0, AF = 1, PAC = 2, PVC = 3, LBBB = 4, RBBB = 5, IAVB = 6 };

inline constexpr std::size_t kNumClasses = 7;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames{"N", "AF", "PAC", "PVC", "LBBB", "RBBB", "IAVB"};

inline std::string class_name(ArrhythmiaClass c) { return std::string(kClassNames.at(static_cast<std::size_t>(c))); }
inline std::string class_name(int c) { return std::string(kClassNames.at(static_cast<std::size_t>(c))); }

inline std::optional<ArrhythmiaClass> parse_class(std::string_view s)
{
    if (s == "I-AVB")
        return ArrhythmiaClass::IAVB;
    for (std::size_t i = 0; i < kNumClasses; ++i)
        if (kClassNames[i] == s)
            return static_cast<ArrhythmiaClass>(i);
    return std::nullopt;
}

/// Lead-major signal matrix: lead i occupies samples [i*n_samples, (i+1)*n_samples).
struct SignalMatrix {
    std::size_t n_leads = 0;
    std::size_t n_samples = 0;
    std::vector<float> data;

    SignalMatrix() = default;
    SignalMatrix(std::size_t leads, std::size_t samples, float fill = 0.0f)
        : n_leads(leads), n_samples(samples), data(leads * samples, fill)
    {
    }

    std::span<float> lead(std::size_t i) { return {data.data() + i * n_samples, n_samples}; }
    std::span<const float> lead(std::size_t i) const { return {data.data() + i * n_samples, n_samples}; }
    bool operator==(const SignalMatrix &) const = default;
};

struct EcgRecord {
    std::string id;
    std::string domain;
    double fs = 500.0;
    SignalMatrix leads;
    ArrhythmiaClass label = ArrhythmiaClass::N;

    /// Ingestion invariants: 12 leads, positive rate, finite samples.
    void validate() const
    {
        if (leads.n_leads != 12)
            throw DataError("record " + id + ": lead count mismatch (has " + std::to_string(leads.n_leads) +
                            ", expected 12)");
        if (!(fs > 0))
            throw DataError("record " + id + ": sampling rate must be positive");
        if (leads.data.size() != leads.n_leads * leads.n_samples)
            throw DataError("record " + id + ": signal storage does not match its shape");
        for (float v : leads.data)
            if (!std::isfinite(v))
                throw DataError("record " + id + ": non-finite sample value");
    }
};

struct ManifestEntry {
    std::string id;
    std::string path; ///< relative to the manifest's directory
    std::string domain;
    ArrhythmiaClass label = ArrhythmiaClass::N;
    double fs = 500.0;
    std::size_t n_leads = 12;
    std::size_t n_samples = 0;
};

struct DatasetManifest {
    int format_version = 1;
    std::vector<ManifestEntry> records;
    fs::path base_dir; ///< directory the relative paths resolve against

    std::set<std::string> domains() const
    {
        std::set<std::string> d;
        for (const auto &r : records)
            d.insert(r.domain);
        return d;
    }

    const ManifestEntry *find(const std::string &id) const
    {
        for (const auto &r : records)
            if (r.id == id)
                return &r;
        return nullptr;
    }

    fs::path resolve(const ManifestEntry &e) const { return base_dir / e.path; }
};

namespace detail {

inline void put_u32(std::string &out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string &out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(const unsigned char *p)
{
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

inline std::string read_file(const fs::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path &path, const std::string &bytes)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("write failed for " + path.string());
}

} // namespace detail

/// 64-bit FNV-1a; used for provenance hashes and per-record seed derivation.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 1469598103934665603ull)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Independent stream seed for a named item under a global seed (splitmix64 of
/// the mixed words), so per-record randomness does not depend on visit order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key)
{
    std::uint64_t z = seed ^ fnv1a64(key);
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string hash_file(const fs::path &path) { return hex64(fnv1a64(detail::read_file(path))); }

// ---------------------------------------------------------------------------
// ECG1 signal files
//
//   "ECG1" | u32 format_version=1 | u32 n_leads | u32 n_samples | u32 fs |
//   n_leads*n_samples float32, lead-major; all little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kSignalFormatVersion = 1;

inline std::string encode_signal(const SignalMatrix &m, std::uint32_t fs_hz)
{
    std::string out = "ECG1";
    detail::put_u32(out, kSignalFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(m.n_leads));
    detail::put_u32(out, static_cast<std::uint32_t>(m.n_samples));
    detail::put_u32(out, fs_hz);
    out.reserve(out.size() + 4 * m.data.size());
    for (float v : m.data)
        detail::put_f32(out, v);
    return out;
}

inline void write_signal(const fs::path &path, const SignalMatrix &m, std::uint32_t fs_hz)
{
    detail::write_file(path, encode_signal(m, fs_hz));
}

struct SignalHeader {
    std::uint32_t version = 0;
    std::uint32_t n_leads = 0;
    std::uint32_t n_samples = 0;
    std::uint32_t fs = 0;
};

inline SignalHeader decode_signal_header(std::string_view bytes)
{
    if (bytes.size() < 4 || bytes.substr(0, 4) != "ECG1")
        throw DataError("bad magic");
    if (bytes.size() < 20)
        throw DataError("truncated header");
    const auto *p = reinterpret_cast<const unsigned char *>(bytes.data());
    SignalHeader h{detail::get_u32(p + 4), detail::get_u32(p + 8), detail::get_u32(p + 12), detail::get_u32(p + 16)};
    if (h.version != kSignalFormatVersion)
        throw DataError("unsupported ECG1 format version " + std::to_string(h.version));
    return h;
}

inline SignalMatrix decode_signal(std::string_view bytes, SignalHeader *header = nullptr)
{
    const SignalHeader h = decode_signal_header(bytes);
    const std::size_t count = std::size_t(h.n_leads) * h.n_samples;
    if (bytes.size() != 20 + 4 * count)
        throw DataError("truncated payload: expected " + std::to_string(20 + 4 * count) + " bytes, found " +
                        std::to_string(bytes.size()));
    SignalMatrix m(h.n_leads, h.n_samples);
    const auto *p = reinterpret_cast<const unsigned char *>(bytes.data()) + 20;
    for (std::size_t i = 0; i < count; ++i)
        m.data[i] = std::bit_cast<float>(detail::get_u32(p + 4 * i));
    if (header)
        *header = h;
    return m;
}

/// CSV fallback: one row per sample, one column per lead, no header.
inline SignalMatrix parse_csv_signal(std::string_view text)
{
    std::vector<std::vector<float>> rows;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (line.empty())
            continue;
        std::vector<float> row;
        std::size_t col = 0;
        for (;;) {
            const std::size_t comma = line.find(',');
            std::string_view cell = line.substr(0, comma);
            ++col;
            while (!cell.empty() && cell.front() == ' ')
                cell.remove_prefix(1);
            while (!cell.empty() && cell.back() == ' ')
                cell.remove_suffix(1);
            float v = 0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
                throw DataError("non-numeric CSV cell at row " + std::to_string(line_no) + ", column " +
                                std::to_string(col) + ": '" + std::string(cell) + "'");
            row.push_back(v);
            if (comma == std::string_view::npos)
                break;
            line.remove_prefix(comma + 1);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw DataError("ragged CSV: row " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                            " columns, expected " + std::to_string(rows.front().size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        return SignalMatrix();
    SignalMatrix m(rows.front().size(), rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t l = 0; l < m.n_leads; ++l)
            m.data[l * m.n_samples + t] = rows[t][l];
    return m;
}

struct ExpectedShape {
    std::size_t n_leads = 0;
    std::size_t n_samples = 0;
};

inline void check_shape(const SignalMatrix &m, const ExpectedShape &e, const std::string &what)
{
    if (m.n_leads != e.n_leads)
        throw DataError(what + ": lead count mismatch (file has " + std::to_string(m.n_leads) + ", expected " +
                        std::to_string(e.n_leads) + ")");
    if (m.n_samples != e.n_samples)
        throw DataError(what + ": sample count mismatch (file has " + std::to_string(m.n_samples) + ", expected " +
                        std::to_string(e.n_samples) + ")");
}

/// Reads an ECG1 file, or a CSV file when the path ends in ".csv". Any other
/// file must start with the ECG1 magic.
inline SignalMatrix read_signal(const fs::path &path, std::optional<ExpectedShape> expected = std::nullopt)
{
    const std::string bytes = detail::read_file(path);
    SignalMatrix m;
    if (path.extension() == ".csv" && bytes.rfind("ECG1", 0) != 0)
        m = parse_csv_signal(bytes);
    else
        m = decode_signal(bytes);
    for (float v : m.data)
        if (!std::isfinite(v))
            throw DataError(path.string() + ": non-finite sample value");
    if (expected)
        check_shape(m, *expected, path.string());
    return m;
}

// ---------------------------------------------------------------------------
// Manifest (JSON)
// ---------------------------------------------------------------------------

inline nlohmann::json manifest_to_json(const DatasetManifest &m)
{
    nlohmann::json recs = nlohmann::json::array();
    for (const auto &r : m.records)
        recs.push_back({{"id", r.id},
                        {"path", r.path},
                        {"domain", r.domain},
                        {"label", class_name(r.label)},
                        {"fs", r.fs},
                        {"n_leads", r.n_leads},
                        {"n_samples", r.n_samples}});
    return {{"format_version", m.format_version}, {"records", recs}};
}

inline void save_manifest(const DatasetManifest &m, const fs::path &path)
{
    detail::write_file(path, manifest_to_json(m).dump(2) + "\n");
}

/// Parses and validates a manifest. With `check_files`, every referenced
/// signal file is opened and its shape compared to the declared one.
inline DatasetManifest load_manifest(const fs::path &path, bool check_files = true)
{
    if (!fs::exists(path))
        throw DataError("manifest not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error &e) {
        throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    DatasetManifest m;
    m.base_dir = path.parent_path();
    if (!j.is_object() || !j.contains("records") || !j.at("records").is_array())
        throw DataError("manifest " + path.string() + " has no records array");
    m.format_version = j.value("format_version", 0);
    if (m.format_version != 1)
        throw DataError("unsupported manifest format_version " + std::to_string(m.format_version));
    std::set<std::string> seen;
    for (const auto &r : j.at("records")) {
        ManifestEntry e;
        try {
            e.id = r.at("id").get<std::string>();
        } catch (const nlohmann::json::exception &) {
            throw DataError("manifest record without an id");
        }
        try {
            e.path = r.at("path").get<std::string>();
            e.domain = r.at("domain").get<std::string>();
            e.fs = r.at("fs").get<double>();
            e.n_leads = r.at("n_leads").get<std::size_t>();
            e.n_samples = r.at("n_samples").get<std::size_t>();
        } catch (const nlohmann::json::exception &ex) {
            throw DataError("record " + e.id + ": malformed entry (" + ex.what() + ")");
        }
        const std::string label = r.value("label", std::string());
        const auto cls = parse_class(label);
        if (!cls)
            throw DataError("record " + e.id + ": unknown label '" + label + "'");
        e.label = *cls;
        if (!(e.fs > 0))
            throw DataError("record " + e.id + ": sampling rate must be positive");
        if (!seen.insert(e.id).second)
            throw DataError("record " + e.id + ": duplicate id");
        if (check_files) {
            const fs::path file = m.base_dir / e.path;
            if (!fs::exists(file))
                throw DataError("record " + e.id + ": missing file " + file.string());
            SignalMatrix sig;
            try {
                if (file.extension() == ".csv") {
                    sig = read_signal(file);
                } else {
                    // header-only check; the payload length is verified on read
                    std::ifstream in(file, std::ios::binary);
                    std::string head(20, '\0');
                    in.read(head.data(), 20);
                    head.resize(static_cast<std::size_t>(in.gcount()));
                    const SignalHeader h = decode_signal_header(head);
                    sig.n_leads = h.n_leads;
                    sig.n_samples = h.n_samples;
                }
                check_shape(sig, {e.n_leads, e.n_samples}, "record " + e.id);
            } catch (const DataError &err) {
                const std::string msg = err.what();
                throw DataError(msg.rfind("record ", 0) == 0 ? msg : "record " + e.id + ": " + msg);
            }
        }
        m.records.push_back(std::move(e));
    }
    return m;
}

/// Loads one record's signal through the manifest, checking the declared shape.
inline EcgRecord load_record(const DatasetManifest &m, const ManifestEntry &e)
{
    EcgRecord r;
    r.id = e.id;
    r.domain = e.domain;
    r.fs = e.fs;
    r.label = e.label;
    try {
        r.leads = read_signal(m.resolve(e), ExpectedShape{e.n_leads, e.n_samples});
    } catch (const DataError &err) {
        throw DataError("record " + e.id + ": " + err.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "HBAI" | u32 version | u32 blob_len | blob (JSON: {"model": ModelConfig,
//   "training": metadata}) | u32 param_count | param_count float32.
//
// The flat payload is every trainable tensor in model registration order
// (stem, stages, concentration, head) followed by the batch-norm running
// statistics in the same layer order.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMetadata {
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_macro_f1 = 0;
    std::uint64_t seed = 42;
    std::string protocol;
    std::vector<std::string> source_domains;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::string manifest_hash;
    std::string tool_version = kToolVersion;
    nlohmann::json train_config = nlohmann::json::object();

    bool operator==(const TrainingMetadata &) const = default;
};

inline void to_json(nlohmann::json &j, const TrainingMetadata &m)
{
    j = nlohmann::json{{"epochs_run", m.epochs_run},
                       {"best_epoch", m.best_epoch},
                       {"best_val_macro_f1", m.best_val_macro_f1},
                       {"seed", m.seed},
                       {"protocol", m.protocol},
                       {"source_domains", m.source_domains},
                       {"train_ids", m.train_ids},
                       {"val_ids", m.val_ids},
                       {"manifest_hash", m.manifest_hash},
                       {"tool_version", m.tool_version},
                       {"train_config", m.train_config}};
}

inline void from_json(const nlohmann::json &j, TrainingMetadata &m)
{
    m.epochs_run = j.value("epochs_run", std::size_t{0});
    m.best_epoch = j.value("best_epoch", std::size_t{0});
    m.best_val_macro_f1 = j.value("best_val_macro_f1", 0.0);
    m.seed = j.value("seed", std::uint64_t{42});
    m.protocol = j.value("protocol", std::string());
    m.source_domains = j.value("source_domains", std::vector<std::string>{});
    m.train_ids = j.value("train_ids", std::vector<std::string>{});
    m.val_ids = j.value("val_ids", std::vector<std::string>{});
    m.manifest_hash = j.value("manifest_hash", std::string());
    m.tool_version = j.value("tool_version", std::string());
    m.train_config = j.value("train_config", nlohmann::json::object());
}

struct Checkpoint {
    ModelConfig config;
    std::vector<float> params;
    TrainingMetadata meta;
};

/// Number of floats a checkpoint for `config` carries: trainable parameters
/// plus two running statistics per batch-norm channel.
inline std::size_t checkpoint_value_count(const ModelConfig &c)
{
    std::size_t bn_channels = c.stage_widths.front();
    for (std::size_t w : c.stage_widths)
        bn_channels += 2 * w * c.blocks_per_stage;
    return count_params(c) + 2 * bn_channels;
}

template <typename Real>
Checkpoint make_checkpoint(const Model<Real> &model, TrainingMetadata meta = {})
{
    return Checkpoint{model.config(), model.params().template flatten<float>(), std::move(meta)};
}

template <typename Real>
void load_into(Model<Real> &model, const Checkpoint &cp)
{
    model.params().unflatten(std::span<const float>(cp.params));
}

inline std::string encode_checkpoint(const Checkpoint &cp)
{
    cp.config.validate();
    if (cp.params.size() != checkpoint_value_count(cp.config))
        throw DataError("parameter count " + std::to_string(cp.params.size()) + " does not match config (" +
                        std::to_string(checkpoint_value_count(cp.config)) + ")");
    const std::string blob = nlohmann::json{{"model", cp.config}, {"training", cp.meta}}.dump();
    std::string out = "HBAI";
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(blob.size()));
    out += blob;
    detail::put_u32(out, static_cast<std::uint32_t>(cp.params.size()));
    out.reserve(out.size() + 4 * cp.params.size());
    for (float v : cp.params)
        detail::put_f32(out, v);
    return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes)
{
    if (bytes.size() < 4 || bytes.substr(0, 4) != "HBAI")
        throw DataError("corrupt header: bad magic");
    if (bytes.size() < 12)
        throw DataError("corrupt header: truncated");
    const auto *p = reinterpret_cast<const unsigned char *>(bytes.data());
    const std::uint32_t version = detail::get_u32(p + 4);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t blob_len = detail::get_u32(p + 8);
    if (bytes.size() < 12ull + blob_len + 4)
        throw DataError("corrupt header: config blob truncated");
    Checkpoint cp;
    try {
        const auto j = nlohmann::json::parse(bytes.substr(12, blob_len));
        cp.config = j.at("model").get<ModelConfig>();
        cp.meta = j.at("training").get<TrainingMetadata>();
    } catch (const nlohmann::json::exception &e) {
        throw DataError(std::string("corrupt header: ") + e.what());
    }
    cp.config.validate();
    const std::size_t off = 12 + blob_len;
    const std::uint32_t count = detail::get_u32(p + off);
    if (bytes.size() != off + 4 + 4ull * count)
        throw DataError("truncated parameters: header declares " + std::to_string(count) + " values, payload holds " +
                        std::to_string((bytes.size() - off - 4) / 4));
    if (count != checkpoint_value_count(cp.config))
        throw DataError("parameter count " + std::to_string(count) + " does not match config (" +
                        std::to_string(checkpoint_value_count(cp.config)) + ")");
    cp.params.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        cp.params[i] = std::bit_cast<float>(detail::get_u32(p + off + 4 + 4 * i));
    return cp;
}

inline void save_checkpoint(const Checkpoint &cp, const fs::path &path)
{
    detail::write_file(path, encode_checkpoint(cp));
}

inline Checkpoint load_checkpoint(const fs::path &path) { return decode_checkpoint(detail::read_file(path)); }

} // namespace cardiodg
