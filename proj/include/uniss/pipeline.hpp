// Parallel-data construction: source speech -> transcript check -> machine
// translation -> translation cleanup -> target synthesis -> rate and quality
// filters.  Produces the general dataset, and a high-quality subset with
// silence-trimmed audio and a tighter rate gate.
//
// Every record leaves the pipeline exactly once: either as a kept sample or
// as a Discard naming the stage and reason.  Per-stage counts reconcile by
// construction and are checked in the tests.
#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "uniss/codec.hpp"
#include "uniss/common.hpp"
#include "uniss/metrics.hpp"
#include "uniss/vocab.hpp"

namespace uniss {

struct SourceRecord {
    std::string id;
    Lang lang = Lang::A;
    std::string transcript;  // normalized spoken content of the waveform
    SyntheticWaveform waveform;
};

struct AuditEntry {
    std::string stage;
    std::string decision;  // "keep" or "discard"
    std::string detail;
    double value = 0.0;    // the measured quantity the decision was based on
};

struct Discard {
    std::string id;
    std::string stage;
    std::string reason;
    std::string detail;
    double value = 0.0;
};

struct ParallelSample {
    std::string id;
    SourceRecord source;
    std::string target_text;
    SyntheticWaveform target_waveform;
    double ratio = 1.0;  // target waveform chars / source waveform chars
    SpeedBucket bucket;
    std::vector<AuditEntry> audit;
};

struct AsrResult {
    bool ok = true;
    std::string text;
    std::string error;
};

using AsrOracle = std::function<AsrResult(const SyntheticWaveform&)>;
using TranslateFn = std::function<std::string(const std::string&)>;

// --- translation cleanup -----------------------------------------------------

struct SanitizeConfig {
    // Boilerplate an over-helpful translator may wrap around the payload.
    std::vector<std::string> strip_prefixes = {
        "sure, here is the translation:",
        "here is the translation:",
        "translation:",
    };
    std::vector<std::string> note_markers = {"note:"};
};

struct SanitizeResult {
    bool ok = false;
    std::string text;
    std::string reason;  // "empty", "mixed_language", "invalid_chars" when !ok
};

namespace detail {

inline std::string lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string collapse_ws(const std::string& s) {
    std::string out;
    bool in_space = true;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!in_space) out += ' ';
            in_space = true;
        } else {
            out += c;
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// Rotates every letter one step within `letters`; yields a word that is
// guaranteed to differ from the input when the input uses those letters.
inline std::string shift_word(std::string word, const std::string& letters) {
    for (char& c : word) {
        const std::size_t p = letters.find(c);
        if (p != std::string::npos) c = letters[(p + 1) % letters.size()];
    }
    return word;
}

}  // namespace detail

// Strips translator boilerplate and validates the payload against the target
// alphabet.  Runs before any alphabet-typed code touches the string.
inline SanitizeResult sanitize_translation(const std::string& raw, Direction dir,
                                           const Codec& codec, const SanitizeConfig& cfg = {}) {
    std::string text = detail::collapse_ws(raw);
    std::string low = detail::lower(text);
    for (const auto& prefix : cfg.strip_prefixes) {
        if (low.size() >= prefix.size() && low.compare(0, prefix.size(), prefix) == 0) {
            text = detail::collapse_ws(text.substr(prefix.size()));
            low = detail::lower(text);
            break;
        }
    }
    for (const auto& marker : cfg.note_markers) {
        const auto pos = low.find(marker);
        if (pos != std::string::npos) {
            text = detail::collapse_ws(text.substr(0, pos));
            low = detail::lower(text);
        }
    }
    if (text.empty()) return {false, "", "empty"};
    if (codec.is_valid_text(text, target_lang(dir))) return {true, text, ""};
    // Classify the failure: payload in the wrong language vs. junk characters.
    bool has_source_char = false;
    for (char c : text)
        if (c != ' ' && codec.is_valid_text(std::string(1, c), source_lang(dir))) has_source_char = true;
    return {false, text, has_source_char ? "mixed_language" : "invalid_chars"};
}

// --- oracles -----------------------------------------------------------------

// Perfect transcription: the spoken content, silence stripped.
inline AsrOracle make_exact_asr(const Codec& codec) {
    return [&codec](const SyntheticWaveform& w) -> AsrResult { return {true, codec.spoken_text(w), ""}; };
}

struct NoisyAsrConfig {
    std::uint64_t seed = 0;
    double word_sub_rate = 0.0;  // chance a word is mis-heard
    double fail_rate = 0.0;      // chance the oracle errors out entirely
};

// Deterministic noisy transcription keyed by waveform content: the same
// waveform always yields the same hypothesis.  A substituted word has every
// letter shifted one step inside the language's own alphabet, so it always
// differs from the original and stays inside the charset.
inline AsrOracle make_noisy_asr(const Codec& codec, Lang lang, NoisyAsrConfig cfg) {
    const std::string letters = lang == Lang::A
                                    ? codec.config().lang_a_letters
                                    : codec.config().lang_b_singles + codec.config().lang_b_marker;
    return [&codec, letters, cfg](const SyntheticWaveform& w) -> AsrResult {
        Rng rng(derive_seed(cfg.seed, "asr_noise", waveform_key(w)));
        if (rng.uniform() < cfg.fail_rate) return {false, "", "decoder gave up"};
        std::string out;
        const std::string spoken = codec.spoken_text(w);
        std::size_t i = 0;
        while (i <= spoken.size()) {
            std::size_t j = spoken.find(' ', i);
            if (j == std::string::npos) j = spoken.size();
            std::string word = spoken.substr(i, j - i);
            if (!word.empty() && rng.uniform() < cfg.word_sub_rate)
                word = detail::shift_word(std::move(word), letters);
            if (!out.empty() && !word.empty()) out += ' ';
            out += word;
            i = j + 1;
            if (j == spoken.size()) break;
        }
        return {true, out, ""};
    };
}

struct NoisyTranslatorConfig {
    std::uint64_t seed = 0;
    double prefix_rate = 0.0;
    double note_rate = 0.0;
    double mixed_rate = 0.0;  // chance of leaving source-language words in place
    std::vector<std::string> prefixes = {"Sure, here is the translation:", "Here is the translation:"};
    std::string note = "Note: register and tone were preserved.";
};

// Wraps the clean cipher translator with the kinds of wrapping text and
// mistakes the cleanup stage exists to handle.
inline TranslateFn make_noisy_translator(const Codec& codec, Direction dir,
                                         NoisyTranslatorConfig cfg) {
    return [&codec, dir, cfg](const std::string& text) -> std::string {
        std::string out = codec.translate(text, dir);
        Rng rng(derive_seed(cfg.seed, "translator_noise", fnv1a64(text)));
        if (!cfg.prefixes.empty() && rng.uniform() < cfg.prefix_rate)
            out = cfg.prefixes[rng.below(cfg.prefixes.size())] + " " + out;
        if (rng.uniform() < cfg.note_rate) out += " " + cfg.note;
        if (rng.uniform() < cfg.mixed_rate) out += " " + text.substr(0, text.find(' '));
        return out;
    };
}

// --- pipeline ----------------------------------------------------------------

struct PipelineConfig {
    Direction direction = Direction::AtoB;
    double src_wer_max = 0.05;
    double tgt_wer_max = 0.01;
    int general_ratio_lo_tenths = 5;   // keep ratio in [0.5, 2.0]
    int general_ratio_hi_tenths = 20;
    int hq_ratio_lo_tenths = 7;        // keep post-trim ratio in [0.7, 1.5]
    int hq_ratio_hi_tenths = 15;
    int tgt_pad_min = 1;               // silence pads per side on synthesized targets
    int tgt_pad_max = 2;
    TextUnit wer_unit = TextUnit::Word;
    std::uint64_t seed = 0;
    SanitizeConfig sanitize;
};

struct PipelineOracles {
    AsrOracle source_asr;
    AsrOracle target_asr;
    TranslateFn translator;  // defaults to the clean cipher translator
};

struct StageCount {
    std::string stage;
    int in = 0, kept = 0, discarded = 0;
};

struct PipelineResult {
    std::vector<ParallelSample> samples;
    std::vector<Discard> discards;
    std::vector<StageCount> stages;
};

namespace detail {

struct StageTracker {
    std::vector<StageCount>* stages;
    std::map<std::string, std::size_t> index;

    void ensure(const std::string& stage) {
        if (index.find(stage) == index.end()) {
            index[stage] = stages->size();
            stages->push_back({stage, 0, 0, 0});
        }
    }

    void record(const std::string& stage, bool kept) {
        ensure(stage);
        auto& s = (*stages)[index[stage]];
        ++s.in;
        if (kept) ++s.kept;
        else ++s.discarded;
    }
};

}  // namespace detail

inline const std::vector<std::string>& general_stage_order() {
    static const std::vector<std::string> order = {"src_asr",  "src_wer", "translate", "sanitize",
                                                   "ratio",    "tgt_asr", "tgt_wer"};
    return order;
}

inline const std::vector<std::string>& hq_stage_order() {
    static const std::vector<std::string> order = {"trim", "hq_ratio"};
    return order;
}

inline PipelineResult build_general(const std::vector<SourceRecord>& records,
                                    const PipelineOracles& oracles, const Codec& codec,
                                    const PipelineConfig& cfg) {
    if (!oracles.source_asr || !oracles.target_asr)
        throw ConfigError("build_general: both recognition oracles are required");
    TranslateFn translate = oracles.translator;
    if (!translate) {
        const Direction dir = cfg.direction;
        translate = [&codec, dir](const std::string& t) { return codec.translate(t, dir); };
    }
    const Lang src = source_lang(cfg.direction);

    PipelineResult result;
    detail::StageTracker track{&result.stages, {}};
    for (const auto& name : general_stage_order()) track.ensure(name);
    std::set<std::string> seen_ids;

    for (const auto& rec : records) {
        if (!seen_ids.insert(rec.id).second) throw InputError("duplicate record id: " + rec.id);
        if (rec.lang != src) throw InputError("record " + rec.id + " is not in the source language");
        if (rec.transcript.empty()) throw InputError("record " + rec.id + " has an empty transcript");

        std::vector<AuditEntry> audit;
        auto discard = [&](const std::string& stage, const std::string& reason,
                           const std::string& detail, double value) {
            track.record(stage, false);
            audit.push_back({stage, "discard", reason, value});
            result.discards.push_back({rec.id, stage, reason, detail, value});
        };
        auto keep = [&](const std::string& stage, const std::string& detail, double value) {
            track.record(stage, true);
            audit.push_back({stage, "keep", detail, value});
        };

        // Source transcript verification.
        const AsrResult sh = oracles.source_asr(rec.waveform);
        if (!sh.ok) {
            discard("src_asr", "oracle_error", sh.error, 0.0);
            continue;
        }
        keep("src_asr", "", 0.0);
        const double src_wer = error_rate(rec.transcript, sh.text, cfg.wer_unit);
        if (src_wer > cfg.src_wer_max) {
            discard("src_wer", "wer_above_threshold", sh.text, src_wer);
            continue;
        }
        keep("src_wer", "", src_wer);

        // Translation plus cleanup.
        std::string raw;
        try {
            raw = translate(rec.transcript);
        } catch (const Error& e) {
            discard("translate", "translator_error", e.what(), 0.0);
            continue;
        }
        keep("translate", "", 0.0);
        const SanitizeResult clean = sanitize_translation(raw, cfg.direction, codec, cfg.sanitize);
        if (!clean.ok) {
            discard("sanitize", clean.reason, raw, 0.0);
            continue;
        }
        keep("sanitize", "", 0.0);

        // Target synthesis in the source speaker's voice, with a little edge
        // silence so the trim stage has real work to do.
        Rng pad_rng(derive_seed(cfg.seed, "tgt_pad", fnv1a64(rec.id)));
        const int lead = pad_rng.range(cfg.tgt_pad_min, cfg.tgt_pad_max);
        const int trail = pad_rng.range(cfg.tgt_pad_min, cfg.tgt_pad_max);
        const SyntheticWaveform tgt_wave =
            codec.synthesize(clean.text, target_lang(cfg.direction), rec.waveform.speaker_id, lead, trail);

        // Rate gate on exact character counts.
        const auto num = static_cast<std::int64_t>(tgt_wave.text.size());
        const auto den = static_cast<std::int64_t>(rec.waveform.text.size());
        const double ratio = static_cast<double>(num) / static_cast<double>(den);
        const auto bucket = try_discretize_speed_exact(num, den, cfg.general_ratio_lo_tenths,
                                                       cfg.general_ratio_hi_tenths);
        if (!bucket) {
            discard("ratio", "outside_range", "", ratio);
            continue;
        }
        keep("ratio", "", ratio);

        // Back-transcription check on the synthesized target.
        const AsrResult th = oracles.target_asr(tgt_wave);
        if (!th.ok) {
            discard("tgt_asr", "oracle_error", th.error, 0.0);
            continue;
        }
        keep("tgt_asr", "", 0.0);
        const double tgt_wer = error_rate(clean.text, th.text, cfg.wer_unit);
        if (tgt_wer > cfg.tgt_wer_max) {
            discard("tgt_wer", "wer_above_threshold", th.text, tgt_wer);
            continue;
        }
        keep("tgt_wer", "", tgt_wer);

        result.samples.push_back(
            {rec.id, rec, clean.text, tgt_wave, ratio, *bucket, std::move(audit)});
    }
    return result;
}

// High-quality subset: silence-trimmed audio, tighter rate gate, buckets
// recomputed from the trimmed lengths.
inline PipelineResult build_hq(const std::vector<ParallelSample>& general, const Codec& codec,
                               const PipelineConfig& cfg) {
    PipelineResult result;
    detail::StageTracker track{&result.stages, {}};
    for (const auto& name : hq_stage_order()) track.ensure(name);

    for (const auto& s : general) {
        std::vector<AuditEntry> audit = s.audit;
        auto discard = [&](const std::string& stage, const std::string& reason, double value) {
            track.record(stage, false);
            audit.push_back({stage, "discard", reason, value});
            result.discards.push_back({s.id, stage, reason, "", value});
        };

        const auto src_trim = codec.trim_silence(s.source.waveform);
        const auto tgt_trim = codec.trim_silence(s.target_waveform);
        if (!src_trim || !tgt_trim) {
            discard("trim", "all_silence", 0.0);
            continue;
        }
        track.record("trim", true);
        audit.push_back({"trim", "keep", "", 0.0});

        const auto num = static_cast<std::int64_t>(tgt_trim->text.size());
        const auto den = static_cast<std::int64_t>(src_trim->text.size());
        const double ratio = static_cast<double>(num) / static_cast<double>(den);
        const auto bucket =
            try_discretize_speed_exact(num, den, cfg.hq_ratio_lo_tenths, cfg.hq_ratio_hi_tenths);
        if (!bucket) {
            discard("hq_ratio", "outside_range", ratio);
            continue;
        }
        track.record("hq_ratio", true);
        audit.push_back({"hq_ratio", "keep", "", ratio});

        ParallelSample out = s;
        out.source.waveform = *src_trim;
        out.target_waveform = *tgt_trim;
        out.ratio = ratio;
        out.bucket = *bucket;
        out.audit = std::move(audit);
        result.samples.push_back(std::move(out));
    }
    return result;
}

// --- dataset statistics ------------------------------------------------------

struct DatasetStats {
    int n_samples = 0;
    std::map<int, int> ratio_tenth_bins;   // floor(ratio * 10)
    std::map<int, int> bucket_counts;      // speed bucket tenths
    std::map<int, int> src_duration_bins;  // floor(duration / bin_width)
    std::map<int, int> tgt_duration_bins;
    double mean_ratio = 0.0;
    double duration_bin_width = 0.5;
};

inline DatasetStats compute_stats(const std::vector<ParallelSample>& samples,
                                  double duration_bin_width = 0.5) {
    if (!(duration_bin_width > 0)) throw ConfigError("duration_bin_width must be positive");
    DatasetStats st;
    st.duration_bin_width = duration_bin_width;
    st.n_samples = static_cast<int>(samples.size());
    double sum_ratio = 0.0;
    for (const auto& s : samples) {
        // Exact integer binning: floor(10 * num / den) never wobbles off a
        // bin edge the way floor(10 * (num/den)) in floating point can.
        const auto num = static_cast<std::int64_t>(s.target_waveform.text.size());
        const auto den = static_cast<std::int64_t>(s.source.waveform.text.size());
        ++st.ratio_tenth_bins[static_cast<int>((10 * num) / den)];
        ++st.bucket_counts[s.bucket.tenths];
        ++st.src_duration_bins[static_cast<int>(std::floor(s.source.waveform.duration_s / duration_bin_width))];
        ++st.tgt_duration_bins[static_cast<int>(std::floor(s.target_waveform.duration_s / duration_bin_width))];
        sum_ratio += s.ratio;
    }
    if (st.n_samples > 0) st.mean_ratio = sum_ratio / st.n_samples;
    return st;
}

}  // namespace uniss
