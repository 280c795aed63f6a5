// Serialization: JSON forms for the data records, JSONL manifests, digest
// helpers, and a binary checkpoint for model parameters plus optimizer state.
//
// The checkpoint stores tensors by name in the canonical parameter order and
// carries an FNV-1a digest of everything before the trailer, so a truncated
// or bit-flipped file fails loudly instead of producing a subtly wrong model.
#pragma once

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniss/common.hpp"
#include "uniss/model.hpp"
#include "uniss/packing.hpp"
#include "uniss/pipeline.hpp"

namespace uniss {

using Json = nlohmann::json;

// --- JSON forms --------------------------------------------------------------

inline void to_json(Json& j, const SyntheticWaveform& w) {
    j = Json{{"text", w.text}, {"speaker_id", w.speaker_id}, {"duration_s", w.duration_s}};
}
inline void from_json(const Json& j, SyntheticWaveform& w) {
    j.at("text").get_to(w.text);
    j.at("speaker_id").get_to(w.speaker_id);
    j.at("duration_s").get_to(w.duration_s);
}

inline void to_json(Json& j, const SourceRecord& r) {
    j = Json{{"id", r.id}, {"lang", lang_name(r.lang)}, {"transcript", r.transcript},
             {"waveform", r.waveform}};
}
inline void from_json(const Json& j, SourceRecord& r) {
    j.at("id").get_to(r.id);
    r.lang = lang_from_name(j.at("lang").get<std::string>());
    j.at("transcript").get_to(r.transcript);
    j.at("waveform").get_to(r.waveform);
}

inline void to_json(Json& j, const AuditEntry& a) {
    j = Json{{"stage", a.stage}, {"decision", a.decision}, {"detail", a.detail}, {"value", a.value}};
}
inline void from_json(const Json& j, AuditEntry& a) {
    j.at("stage").get_to(a.stage);
    j.at("decision").get_to(a.decision);
    j.at("detail").get_to(a.detail);
    j.at("value").get_to(a.value);
}

inline void to_json(Json& j, const Discard& d) {
    j = Json{{"id", d.id}, {"stage", d.stage}, {"reason", d.reason}, {"detail", d.detail},
             {"value", d.value}};
}
inline void from_json(const Json& j, Discard& d) {
    j.at("id").get_to(d.id);
    j.at("stage").get_to(d.stage);
    j.at("reason").get_to(d.reason);
    j.at("detail").get_to(d.detail);
    j.at("value").get_to(d.value);
}

inline void to_json(Json& j, const StageCount& s) {
    j = Json{{"stage", s.stage}, {"in", s.in}, {"kept", s.kept}, {"discarded", s.discarded}};
}
inline void from_json(const Json& j, StageCount& s) {
    j.at("stage").get_to(s.stage);
    j.at("in").get_to(s.in);
    j.at("kept").get_to(s.kept);
    j.at("discarded").get_to(s.discarded);
}

inline void to_json(Json& j, const ParallelSample& s) {
    j = Json{{"id", s.id},
             {"source", s.source},
             {"target_text", s.target_text},
             {"target_waveform", s.target_waveform},
             {"ratio", s.ratio},
             {"bucket_tenths", s.bucket.tenths},
             {"audit", s.audit}};
}
inline void from_json(const Json& j, ParallelSample& s) {
    j.at("id").get_to(s.id);
    j.at("source").get_to(s.source);
    j.at("target_text").get_to(s.target_text);
    j.at("target_waveform").get_to(s.target_waveform);
    j.at("ratio").get_to(s.ratio);
    s.bucket.tenths = j.at("bucket_tenths").get<int>();
    j.at("audit").get_to(s.audit);
}

inline void to_json(Json& j, const TrainingExample& ex) {
    j = Json{{"id", ex.id},
             {"task", task_name(ex.task)},
             {"tokens", ex.tokens},
             {"loss_mask", std::vector<int>(ex.loss_mask.begin(), ex.loss_mask.end())}};
}
inline void from_json(const Json& j, TrainingExample& ex) {
    j.at("id").get_to(ex.id);
    ex.task = task_from_name(j.at("task").get<std::string>());
    j.at("tokens").get_to(ex.tokens);
    const auto mask = j.at("loss_mask").get<std::vector<int>>();
    ex.loss_mask.assign(mask.begin(), mask.end());
}

inline void to_json(Json& j, const PackedSegment& s) {
    j = Json{{"id", s.id}, {"task", task_name(s.task)}, {"start", s.start}, {"length", s.length}};
}
inline void from_json(const Json& j, PackedSegment& s) {
    j.at("id").get_to(s.id);
    s.task = task_from_name(j.at("task").get<std::string>());
    j.at("start").get_to(s.start);
    j.at("length").get_to(s.length);
}

inline void to_json(Json& j, const PackedSequence& p) {
    j = Json{{"capacity", p.capacity},
             {"tokens", p.tokens},
             {"loss_mask", std::vector<int>(p.loss_mask.begin(), p.loss_mask.end())},
             {"segments", p.segments}};
}
inline void from_json(const Json& j, PackedSequence& p) {
    j.at("capacity").get_to(p.capacity);
    j.at("tokens").get_to(p.tokens);
    const auto mask = j.at("loss_mask").get<std::vector<int>>();
    p.loss_mask.assign(mask.begin(), mask.end());
    j.at("segments").get_to(p.segments);
}

namespace detail {

inline Json int_map_to_json(const std::map<int, int>& m) {
    Json j = Json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
}

}  // namespace detail

inline void to_json(Json& j, const DatasetStats& st) {
    j = Json{{"n_samples", st.n_samples},
             {"ratio_tenth_bins", detail::int_map_to_json(st.ratio_tenth_bins)},
             {"bucket_counts", detail::int_map_to_json(st.bucket_counts)},
             {"src_duration_bins", detail::int_map_to_json(st.src_duration_bins)},
             {"tgt_duration_bins", detail::int_map_to_json(st.tgt_duration_bins)},
             {"mean_ratio", st.mean_ratio},
             {"duration_bin_width", st.duration_bin_width}};
}

inline void to_json(Json& j, const ModelConfig& c) {
    j = Json{{"vocab", c.vocab},       {"layers", c.layers},
             {"width", c.width},       {"heads", c.heads},
             {"ff", c.ff},             {"max_positions", c.max_positions},
             {"init_std", c.init_std}, {"rope_base", c.rope_base},
             {"ln_eps", c.ln_eps}};
}
inline void from_json(const Json& j, ModelConfig& c) {
    j.at("vocab").get_to(c.vocab);
    j.at("layers").get_to(c.layers);
    j.at("width").get_to(c.width);
    j.at("heads").get_to(c.heads);
    j.at("ff").get_to(c.ff);
    j.at("max_positions").get_to(c.max_positions);
    j.at("init_std").get_to(c.init_std);
    j.at("rope_base").get_to(c.rope_base);
    j.at("ln_eps").get_to(c.ln_eps);
}

// --- files -------------------------------------------------------------------

inline void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

// `allow_comments` accepts // and /* */ so hand-edited configs can be annotated.
inline Json read_json_file(const std::string& path, bool allow_comments = false) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    return Json::parse(in, nullptr, true, allow_comments);
}

inline void write_jsonl(const std::string& path, const std::vector<Json>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& r : rows) out << r.dump() << "\n";
    if (!out) throw IoError("write failed: " + path);
}

inline std::vector<Json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<Json> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(Json::parse(line));
    }
    return rows;
}

template <typename T>
inline void write_jsonl_records(const std::string& path, const std::vector<T>& records) {
    std::vector<Json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(Json(r));
    write_jsonl(path, rows);
}

template <typename T>
inline std::vector<T> read_jsonl_records(const std::string& path) {
    std::vector<T> out;
    for (const auto& row : read_jsonl(path)) out.push_back(row.get<T>());
    return out;
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::uint64_t file_digest(const std::string& path) { return fnv1a64(read_file_bytes(path)); }

// --- checkpoint --------------------------------------------------------------

struct Checkpoint {
    Json meta;  // at least {"model": ModelConfig}; training code adds progress
    Params params;
    bool has_optimizer = false;
    long long opt_step = 0;
    Params opt_m, opt_v;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'U', 'N', 'I', 'S', 'S', 'C', 'P', '1'};

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(buf, v);
}

inline void put_str(std::string& buf, const std::string& s) {
    put_u64(buf, s.size());
    buf += s;
}

struct ByteReader {
    const std::string* buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf->size()) throw IoError("checkpoint truncated");
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>((*buf)[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = buf->substr(pos, n);
        pos += n;
        return s;
    }
};

inline void put_tensors(std::string& buf, const Params& p) {
    put_u64(buf, p.tensors.size());
    for (const auto& t : p.tensors) {
        put_str(buf, t.name);
        put_u64(buf, static_cast<std::uint64_t>(t.rows));
        put_u64(buf, static_cast<std::uint64_t>(t.cols));
        for (double d : t.v) put_f64(buf, d);
    }
}

inline Params get_tensors(ByteReader& r) {
    Params p;
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::string name = r.str();
        const auto rows = static_cast<int>(r.u64());
        const auto cols = static_cast<int>(r.u64());
        if (rows <= 0 || cols <= 0) throw IoError("checkpoint tensor with bad shape: " + name);
        Tensor& t = p.add(name, rows, cols, InitKind::Zero);
        for (double& d : t.v) d = r.f64();
    }
    return p;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string buf;
    buf.reserve(64 + ckpt.params.total_size() * 8 * (ckpt.has_optimizer ? 3 : 1));
    buf.append(detail::kCheckpointMagic, 8);
    detail::put_str(buf, ckpt.meta.dump());
    detail::put_tensors(buf, ckpt.params);
    buf.push_back(ckpt.has_optimizer ? '\1' : '\0');
    if (ckpt.has_optimizer) {
        detail::put_u64(buf, static_cast<std::uint64_t>(ckpt.opt_step));
        detail::put_tensors(buf, ckpt.opt_m);
        detail::put_tensors(buf, ckpt.opt_v);
    }
    detail::put_u64(buf, fnv1a64(buf));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    const std::string buf = read_file_bytes(path);
    if (buf.size() < 16 || std::memcmp(buf.data(), detail::kCheckpointMagic, 8) != 0)
        throw IoError("not a checkpoint file: " + path);
    const std::string payload = buf.substr(0, buf.size() - 8);
    detail::ByteReader trailer{&buf, buf.size() - 8};
    if (trailer.u64() != fnv1a64(payload)) throw IoError("checkpoint digest mismatch: " + path);

    detail::ByteReader r{&payload, 8};
    Checkpoint ckpt;
    ckpt.meta = Json::parse(r.str());
    ckpt.params = detail::get_tensors(r);
    r.need(1);
    ckpt.has_optimizer = payload[r.pos++] != '\0';
    if (ckpt.has_optimizer) {
        ckpt.opt_step = static_cast<long long>(r.u64());
        ckpt.opt_m = detail::get_tensors(r);
        ckpt.opt_v = detail::get_tensors(r);
    }
    if (r.pos != payload.size()) throw IoError("checkpoint has trailing bytes: " + path);
    return ckpt;
}

// Confirms loaded tensors match the canonical layout for `cfg` name for name.
inline void check_params_match(const ModelConfig& cfg, const Params& params) {
    const Params expect = make_params(cfg);
    if (params.tensors.size() != expect.tensors.size())
        throw IoError("checkpoint tensor count does not match the model config");
    for (std::size_t i = 0; i < expect.tensors.size(); ++i) {
        const auto& a = expect.tensors[i];
        const auto& b = params.tensors[i];
        if (a.name != b.name || a.rows != b.rows || a.cols != b.cols)
            throw IoError("checkpoint tensor mismatch at " + a.name);
    }
}

}  // namespace uniss
