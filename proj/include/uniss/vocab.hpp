// Token id space: contiguous sub-ranges for the two text alphabets, the
// linguistic and semantic audio codebooks, speaker codes, and control codes.
//
// Layout order is fixed: [text_a][text_b][linguistic][semantic][speaker][control].
// Control codes are fixed in count and order; everything else is sized by
// configuration.  Ids are dense: every id below total_size() belongs to
// exactly one sub-range.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniss/common.hpp"

namespace uniss {

using TokenId = std::int32_t;

enum class Lang { A, B };

inline Lang other(Lang l) { return l == Lang::A ? Lang::B : Lang::A; }

inline const char* lang_name(Lang l) { return l == Lang::A ? "a" : "b"; }

inline Lang lang_from_name(const std::string& s) {
    if (s == "a") return Lang::A;
    if (s == "b") return Lang::B;
    throw ConfigError("unknown language tag: " + s);
}

enum class TaskMode {
    Asr,
    S2tt,
    Tts,
    Mt,
    S2stQuality,
    S2stPerformance,
    S2stDirect,
};

inline const char* task_name(TaskMode m) {
    switch (m) {
        case TaskMode::Asr: return "asr";
        case TaskMode::S2tt: return "s2tt";
        case TaskMode::Tts: return "tts";
        case TaskMode::Mt: return "mt";
        case TaskMode::S2stQuality: return "s2st_quality";
        case TaskMode::S2stPerformance: return "s2st_performance";
        case TaskMode::S2stDirect: return "s2st_direct";
    }
    throw ConfigError("bad TaskMode");
}

inline TaskMode task_from_name(const std::string& s) {
    for (TaskMode m : {TaskMode::Asr, TaskMode::S2tt, TaskMode::Tts, TaskMode::Mt,
                       TaskMode::S2stQuality, TaskMode::S2stPerformance, TaskMode::S2stDirect}) {
        if (s == task_name(m)) return m;
    }
    throw ConfigError("unknown task: " + s);
}

// Speed control buckets cover 0.5x..2.0x in 0.1 steps, stored as tenths.
struct SpeedBucket {
    int tenths = 10;

    double ratio() const { return tenths / 10.0; }
    bool operator==(const SpeedBucket&) const = default;
};

inline constexpr int kSpeedBucketMin = 5;
inline constexpr int kSpeedBucketMax = 20;
inline constexpr int kNumSpeedBuckets = kSpeedBucketMax - kSpeedBucketMin + 1;  // 16

// Control code order.  Appending is allowed; reordering breaks every saved
// token stream, so don't.
enum class Control : int {
    TaskAsr = 0,
    TaskS2tt,
    TaskTts,
    TaskMt,
    TaskS2stQuality,
    TaskS2stPerformance,
    TaskS2stDirect,
    LangA,
    LangB,
    Speed0,   // 0.5x; Speed0 + k is the bucket (5 + k) tenths
    SpeedLast = Speed0 + kNumSpeedBuckets - 1,
    Bot,      // end of prompt, start of generated output
    Eod,      // end of output
    Count,
};

inline constexpr int kNumControls = static_cast<int>(Control::Count);  // 27

inline Control task_control(TaskMode m) {
    switch (m) {
        case TaskMode::Asr: return Control::TaskAsr;
        case TaskMode::S2tt: return Control::TaskS2tt;
        case TaskMode::Tts: return Control::TaskTts;
        case TaskMode::Mt: return Control::TaskMt;
        case TaskMode::S2stQuality: return Control::TaskS2stQuality;
        case TaskMode::S2stPerformance: return Control::TaskS2stPerformance;
        case TaskMode::S2stDirect: return Control::TaskS2stDirect;
    }
    throw ConfigError("bad TaskMode");
}

inline Control lang_control(Lang l) { return l == Lang::A ? Control::LangA : Control::LangB; }

inline std::string control_name(Control c) {
    const int i = static_cast<int>(c);
    if (c == Control::Bot) return "bot";
    if (c == Control::Eod) return "eod";
    if (i >= static_cast<int>(Control::Speed0) && i <= static_cast<int>(Control::SpeedLast)) {
        const int tenths = kSpeedBucketMin + i - static_cast<int>(Control::Speed0);
        return "speed_" + std::to_string(tenths / 10) + "_" + std::to_string(tenths % 10);
    }
    switch (c) {
        case Control::TaskAsr: return "task_asr";
        case Control::TaskS2tt: return "task_s2tt";
        case Control::TaskTts: return "task_tts";
        case Control::TaskMt: return "task_mt";
        case Control::TaskS2stQuality: return "task_s2st_quality";
        case Control::TaskS2stPerformance: return "task_s2st_performance";
        case Control::TaskS2stDirect: return "task_s2st_direct";
        case Control::LangA: return "lang_a";
        case Control::LangB: return "lang_b";
        default: throw ConfigError("bad Control");
    }
}

enum class TokenKind { TextA, TextB, Linguistic, Semantic, Speaker, ControlCode };

struct VocabConfig {
    int text_a = 13;
    int text_b = 12;
    int linguistic = 25;
    int semantic = 300;
    int speaker = 16;

    bool operator==(const VocabConfig&) const = default;
};

class VocabLayout {
public:
    explicit VocabLayout(VocabConfig cfg) : cfg_(cfg) {
        auto need_positive = [](int v, const char* what) {
            if (v <= 0) throw ConfigError(std::string("vocab sub-range must be positive: ") + what);
        };
        need_positive(cfg.text_a, "text_a");
        need_positive(cfg.text_b, "text_b");
        need_positive(cfg.linguistic, "linguistic");
        need_positive(cfg.semantic, "semantic");
        need_positive(cfg.speaker, "speaker");
        text_a_start_ = 0;
        text_b_start_ = text_a_start_ + cfg.text_a;
        ling_start_ = text_b_start_ + cfg.text_b;
        sem_start_ = ling_start_ + cfg.linguistic;
        spk_start_ = sem_start_ + cfg.semantic;
        control_start_ = spk_start_ + cfg.speaker;
        total_ = control_start_ + kNumControls;
    }

    const VocabConfig& config() const { return cfg_; }
    int total_size() const { return total_; }

    int text_start(Lang l) const { return l == Lang::A ? text_a_start_ : text_b_start_; }
    int text_size(Lang l) const { return l == Lang::A ? cfg_.text_a : cfg_.text_b; }
    int linguistic_start() const { return ling_start_; }
    int semantic_start() const { return sem_start_; }
    int speaker_start() const { return spk_start_; }
    int control_start() const { return control_start_; }

    TokenId text_token(Lang l, int idx) const {
        check_index(idx, text_size(l), "text");
        return text_start(l) + idx;
    }
    TokenId linguistic_token(int idx) const {
        check_index(idx, cfg_.linguistic, "linguistic");
        return ling_start_ + idx;
    }
    TokenId semantic_token(int idx) const {
        check_index(idx, cfg_.semantic, "semantic");
        return sem_start_ + idx;
    }
    TokenId speaker_token(int idx) const {
        check_index(idx, cfg_.speaker, "speaker");
        return spk_start_ + idx;
    }
    TokenId control_token(Control c) const {
        return control_start_ + static_cast<int>(c);
    }
    TokenId speed_token(SpeedBucket b) const {
        if (b.tenths < kSpeedBucketMin || b.tenths > kSpeedBucketMax)
            throw OutOfRange("speed bucket out of range: " + std::to_string(b.tenths));
        return control_start_ + static_cast<int>(Control::Speed0) + (b.tenths - kSpeedBucketMin);
    }

    bool contains(TokenId id) const { return id >= 0 && id < total_; }

    TokenKind kind_of(TokenId id) const {
        if (!contains(id)) throw OutOfRange("token id outside vocabulary: " + std::to_string(id));
        if (id < text_b_start_) return TokenKind::TextA;
        if (id < ling_start_) return TokenKind::TextB;
        if (id < sem_start_) return TokenKind::Linguistic;
        if (id < spk_start_) return TokenKind::Semantic;
        if (id < control_start_) return TokenKind::Speaker;
        return TokenKind::ControlCode;
    }

    bool is_text(TokenId id, Lang l) const {
        return id >= text_start(l) && id < text_start(l) + text_size(l);
    }

    // Index of the id within its own sub-range.
    int index_of(TokenId id) const {
        switch (kind_of(id)) {
            case TokenKind::TextA: return id - text_a_start_;
            case TokenKind::TextB: return id - text_b_start_;
            case TokenKind::Linguistic: return id - ling_start_;
            case TokenKind::Semantic: return id - sem_start_;
            case TokenKind::Speaker: return id - spk_start_;
            case TokenKind::ControlCode: return id - control_start_;
        }
        throw OutOfRange("unreachable");
    }

    Control control_of(TokenId id) const {
        if (kind_of(id) != TokenKind::ControlCode)
            throw OutOfRange("not a control token: " + std::to_string(id));
        return static_cast<Control>(id - control_start_);
    }

    std::optional<SpeedBucket> speed_of(TokenId id) const {
        if (kind_of(id) != TokenKind::ControlCode) return std::nullopt;
        const int i = id - control_start_;
        if (i < static_cast<int>(Control::Speed0) || i > static_cast<int>(Control::SpeedLast))
            return std::nullopt;
        return SpeedBucket{kSpeedBucketMin + i - static_cast<int>(Control::Speed0)};
    }

    bool is_control(TokenId id, Control c) const {
        return contains(id) && id == control_start_ + static_cast<int>(c);
    }

    nlohmann::json to_json() const {
        nlohmann::json ranges;
        ranges["text_a"] = {text_a_start_, cfg_.text_a};
        ranges["text_b"] = {text_b_start_, cfg_.text_b};
        ranges["linguistic"] = {ling_start_, cfg_.linguistic};
        ranges["semantic"] = {sem_start_, cfg_.semantic};
        ranges["speaker"] = {spk_start_, cfg_.speaker};
        ranges["control"] = {control_start_, kNumControls};
        std::vector<std::string> names;
        for (int i = 0; i < kNumControls; ++i) names.push_back(control_name(static_cast<Control>(i)));
        return nlohmann::json{{"version", 1},
                              {"total_size", total_},
                              {"ranges", ranges},
                              {"control_names", names}};
    }

    static VocabLayout from_json(const nlohmann::json& j) {
        if (!j.contains("version") || j.at("version").get<int>() != 1)
            throw ConfigError("vocab layout: unsupported version");
        const auto& r = j.at("ranges");
        VocabConfig cfg;
        cfg.text_a = r.at("text_a").at(1).get<int>();
        cfg.text_b = r.at("text_b").at(1).get<int>();
        cfg.linguistic = r.at("linguistic").at(1).get<int>();
        cfg.semantic = r.at("semantic").at(1).get<int>();
        cfg.speaker = r.at("speaker").at(1).get<int>();
        VocabLayout out(cfg);
        // Starts are derived; stored values must agree or the file is corrupt.
        if (r.at("control").at(0).get<int>() != out.control_start() ||
            r.at("control").at(1).get<int>() != kNumControls ||
            j.at("total_size").get<int>() != out.total_size())
            throw ConfigError("vocab layout: ranges do not reconcile");
        return out;
    }

    bool operator==(const VocabLayout& o) const { return cfg_ == o.cfg_; }

private:
    static void check_index(int idx, int size, const char* what) {
        if (idx < 0 || idx >= size)
            throw OutOfRange(std::string(what) + " index out of range: " + std::to_string(idx));
    }

    VocabConfig cfg_;
    int text_a_start_, text_b_start_, ling_start_, sem_start_, spk_start_, control_start_, total_;
};

// Nearest 0.1 bucket for a measured rate ratio; ties resolve toward 1.0x.
// Returns nullopt when the ratio falls outside [lo_tenths, hi_tenths]/10.
inline std::optional<SpeedBucket> try_discretize_speed(double ratio,
                                                       int lo_tenths = kSpeedBucketMin,
                                                       int hi_tenths = kSpeedBucketMax) {
    if (lo_tenths < kSpeedBucketMin || hi_tenths > kSpeedBucketMax || lo_tenths > hi_tenths)
        throw ConfigError("speed range must sit inside the bucket grid");
    if (!(ratio >= lo_tenths / 10.0) || !(ratio <= hi_tenths / 10.0)) return std::nullopt;
    int k = static_cast<int>(std::floor(ratio * 10.0));
    if (k < lo_tenths) k = lo_tenths;
    if (k >= hi_tenths) k = hi_tenths - 1;
    // Compare against the exact midpoint between buckets k and k+1.  The
    // midpoints (2k+1)/20 round to distinct doubles, so a literal like 1.05
    // compares equal here and takes the tie branch.
    const double mid = (2 * k + 1) / 20.0;
    if (ratio < mid) return SpeedBucket{k};
    if (ratio > mid) return SpeedBucket{k + 1};
    const int da = std::abs(k - 10), db = std::abs(k + 1 - 10);
    return SpeedBucket{da <= db ? k : k + 1};
}

inline SpeedBucket discretize_speed(double ratio,
                                    int lo_tenths = kSpeedBucketMin,
                                    int hi_tenths = kSpeedBucketMax) {
    auto b = try_discretize_speed(ratio, lo_tenths, hi_tenths);
    if (!b) throw OutOfRange("speed ratio outside supported range");
    return *b;
}

// Exact-arithmetic variant for ratios that arise as integer length quotients
// num/den.  Threshold decisions never depend on floating-point rounding.
inline std::optional<SpeedBucket> try_discretize_speed_exact(std::int64_t num, std::int64_t den,
                                                             int lo_tenths = kSpeedBucketMin,
                                                             int hi_tenths = kSpeedBucketMax) {
    if (den <= 0 || num < 0) throw OutOfRange("ratio must be nonnegative/positive");
    if (lo_tenths < kSpeedBucketMin || hi_tenths > kSpeedBucketMax || lo_tenths > hi_tenths)
        throw ConfigError("speed range must sit inside the bucket grid");
    if (10 * num < lo_tenths * den || 10 * num > hi_tenths * den) return std::nullopt;
    std::int64_t k = (10 * num) / den;
    if (k < lo_tenths) k = lo_tenths;
    if (k >= hi_tenths) k = hi_tenths - 1;
    const std::int64_t lhs = 20 * num, mid = (2 * k + 1) * den;
    if (lhs < mid) return SpeedBucket{static_cast<int>(k)};
    if (lhs > mid) return SpeedBucket{static_cast<int>(k + 1)};
    const std::int64_t da = std::abs(k - 10), db = std::abs(k + 1 - 10);
    return SpeedBucket{static_cast<int>(da <= db ? k : k + 1)};
}

}  // namespace uniss
