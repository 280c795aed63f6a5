// Seeded generator for source-language speech corpora, with optional planted
// defects whose fate in the data pipeline is known analytically.
//
// Clean records keep their cipher expansion at or below half the letters of
// every word, which pins each derived pair strictly inside both rate gates.
// Each defect class is built so that it fails exactly one gate for every
// possible draw of the pipeline's own padding noise (assumed to stay within
// [assumed_tgt_pad_min, assumed_tgt_pad_max] per side), so tests can predict
// the surviving id sets without running a reference pipeline.
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "uniss/codec.hpp"
#include "uniss/common.hpp"
#include "uniss/pipeline.hpp"

namespace uniss {

struct CorpusDefects {
    int bad_src_wer = 0;     // transcription oracle mis-hears well above the source gate
    int bad_tgt_wer = 0;     // back-transcription oracle mis-hears one target word
    int bad_ratio_low = 0;   // heavy source padding pushes the rate below the general gate
    int bad_ratio_high = 0;  // short all-expansion text pushes the rate above the general gate
    int bad_ratio_hq = 0;    // passes the general gate, trips the post-trim gate
    int oracle_fail = 0;     // transcription oracle reports failure outright

    int total() const {
        return bad_src_wer + bad_tgt_wer + bad_ratio_low + bad_ratio_high + bad_ratio_hq + oracle_fail;
    }
};

struct CorpusSpec {
    int n_records = 100;
    std::uint64_t seed = 1;
    int words_min = 4, words_max = 8;
    int word_len_min = 2, word_len_max = 6;
    int src_pad_max = 3;          // clean records: silence chars per side
    int assumed_tgt_pad_min = 1;  // what the pipeline will pad targets with
    int assumed_tgt_pad_max = 2;
    std::string id_prefix = "r";
    CorpusDefects defects;
};

// Records are language-a sources for the a->b direction.  The oracles hold a
// reference to the codec they were generated with; keep it alive alongside.
struct ToyCorpus {
    std::vector<SourceRecord> records;
    std::set<std::string> bad_src_wer, bad_tgt_wer, bad_ratio_general, bad_ratio_hq, oracle_fail;
    AsrOracle source_asr;  // exact except on the planted records
    AsrOracle target_asr;

    std::set<std::string> expected_general_kept() const {
        std::set<std::string> out;
        for (const auto& r : records) out.insert(r.id);
        for (const auto& id : bad_src_wer) out.erase(id);
        for (const auto& id : bad_tgt_wer) out.erase(id);
        for (const auto& id : bad_ratio_general) out.erase(id);
        for (const auto& id : oracle_fail) out.erase(id);
        return out;
    }

    std::set<std::string> expected_hq_kept() const {
        auto out = expected_general_kept();
        for (const auto& id : bad_ratio_hq) out.erase(id);
        return out;
    }
};

namespace detail {

// Number of cipher-expanding letters in an a-language word.
inline int expansion_count(const std::string& word, const CodecConfig& cfg) {
    int n = 0;
    for (char c : word)
        if (cfg.lang_a_letters.find(c) >= cfg.lang_b_singles.size()) ++n;
    return n;
}

}  // namespace detail

inline ToyCorpus generate_corpus(const Codec& codec, const CorpusSpec& spec) {
    const CodecConfig& cc = codec.config();
    if (spec.n_records <= 0) throw ConfigError("corpus: n_records must be positive");
    if (spec.defects.total() > spec.n_records)
        throw ConfigError("corpus: more planted defects than records");
    if (spec.words_min < 2 || spec.words_max < spec.words_min || spec.word_len_min < 2 ||
        spec.word_len_max < spec.word_len_min)
        throw ConfigError("corpus: bad word shape bounds");
    if (spec.assumed_tgt_pad_min < 0 || spec.assumed_tgt_pad_max < spec.assumed_tgt_pad_min)
        throw ConfigError("corpus: bad assumed target pad bounds");
    if ((spec.defects.bad_ratio_high > 0 || spec.defects.bad_ratio_hq > 0) &&
        spec.assumed_tgt_pad_min < 1)
        throw ConfigError("corpus: high-rate plants need assumed_tgt_pad_min >= 1");
    const std::size_t n_singles = cc.lang_b_singles.size();
    if (cc.lang_a_letters.size() <= n_singles)
        throw ConfigError("corpus: the cipher has no expanding letters to plant rate defects with");

    Rng rng(derive_seed(spec.seed, "corpus"));
    const std::string plain_letters = cc.lang_a_letters.substr(0, n_singles);
    const std::string expand_letters = cc.lang_a_letters.substr(n_singles);

    std::set<std::string> used_texts;
    auto fresh = [&](auto&& make) {
        for (int tries = 0; tries < 1000; ++tries) {
            std::string t = make();
            if (used_texts.insert(t).second) return t;
        }
        throw ConfigError("corpus: cannot draw enough distinct texts");
    };

    // Clean text: uniform letters, but at most half of each word may expand
    // under the cipher, which keeps the pair inside every gate.
    auto make_clean = [&]() {
        const int words = rng.range(spec.words_min, spec.words_max);
        std::string text;
        for (int w = 0; w < words; ++w) {
            const int len = rng.range(spec.word_len_min, spec.word_len_max);
            std::string word;
            do {
                word.clear();
                for (int i = 0; i < len; ++i)
                    word += cc.lang_a_letters[rng.below(cc.lang_a_letters.size())];
            } while (detail::expansion_count(word, cc) > len / 2);
            if (w) text += ' ';
            text += word;
        }
        return text;
    };
    // One short all-expansion word: the target outgrows twice the source.
    auto make_ratio_high = [&]() {
        const int len = rng.range(2, 6);
        std::string word;
        for (int i = 0; i < len; ++i) word += expand_letters[rng.below(expand_letters.size())];
        return word;
    };
    // A few non-expanding short words; padding does the rest.
    auto make_ratio_low = [&]() {
        const int words = rng.range(2, 3);
        std::string text;
        for (int w = 0; w < words; ++w) {
            if (w) text += ' ';
            const int len = rng.range(2, 3);
            for (int i = 0; i < len; ++i) text += plain_letters[rng.below(plain_letters.size())];
        }
        return text;
    };
    // All-expansion words WITH spaces: the trimmed ratio lands in (1.5, 2.0)
    // while padding keeps the untrimmed ratio inside the general gate.
    auto make_ratio_hq = [&]() {
        const int words = rng.range(2, 3);
        std::string text;
        for (int w = 0; w < words; ++w) {
            if (w) text += ' ';
            const int len = rng.range(2, 3);
            for (int i = 0; i < len; ++i) text += expand_letters[rng.below(expand_letters.size())];
        }
        return text;
    };

    enum class Kind { Clean, SrcWer, TgtWer, RatioLow, RatioHigh, RatioHq, OracleFail };
    std::vector<Kind> kinds(static_cast<std::size_t>(spec.n_records), Kind::Clean);
    {
        std::vector<std::size_t> order(kinds.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        std::size_t at = 0;
        auto assign = [&](int count, Kind k) {
            for (int i = 0; i < count; ++i) kinds[order[at++]] = k;
        };
        assign(spec.defects.bad_src_wer, Kind::SrcWer);
        assign(spec.defects.bad_tgt_wer, Kind::TgtWer);
        assign(spec.defects.bad_ratio_low, Kind::RatioLow);
        assign(spec.defects.bad_ratio_high, Kind::RatioHigh);
        assign(spec.defects.bad_ratio_hq, Kind::RatioHq);
        assign(spec.defects.oracle_fail, Kind::OracleFail);
    }

    ToyCorpus corpus;
    std::set<std::string> src_sub_texts, tgt_sub_texts, fail_texts;
    int width = 1;
    for (int n = spec.n_records - 1; n >= 10; n /= 10) ++width;

    for (int i = 0; i < spec.n_records; ++i) {
        const Kind kind = kinds[static_cast<std::size_t>(i)];
        const std::string num = std::to_string(i);
        std::string id = spec.id_prefix;
        id.append(static_cast<std::size_t>(width) - num.size(), '0');
        id += num;
        const int speaker = static_cast<int>(rng.below(static_cast<std::uint64_t>(cc.num_speakers)));

        std::string text;
        int lead = 0, trail = 0;
        switch (kind) {
            case Kind::Clean:
            case Kind::SrcWer:
            case Kind::TgtWer:
            case Kind::OracleFail:
                text = fresh(make_clean);
                lead = rng.range(0, spec.src_pad_max);
                trail = rng.range(0, spec.src_pad_max);
                break;
            case Kind::RatioHigh:
                text = fresh(make_ratio_high);
                break;
            case Kind::RatioLow: {
                text = fresh(make_ratio_low);
                // Source long enough that even maximal target padding stays
                // strictly below the lower general gate.
                const auto tgt_len = static_cast<int>(text.size());  // cipher is 1:1 here
                const int need = 2 * tgt_len + 4 * spec.assumed_tgt_pad_max -
                                 static_cast<int>(text.size()) + 1;
                lead = need / 2;
                trail = need - lead;
                break;
            }
            case Kind::RatioHq: {
                text = fresh(make_ratio_hq);
                // Padding centers the untrimmed ratio near 1, so only the
                // post-trim gate trips.
                const int tgt_len = static_cast<int>(codec.translate(text, Direction::AtoB).size());
                const int need = tgt_len - static_cast<int>(text.size()) + 2;
                lead = need / 2;
                trail = need - lead;
                break;
            }
        }

        SourceRecord rec;
        rec.id = id;
        rec.lang = Lang::A;
        rec.transcript = text;
        rec.waveform = codec.synthesize(text, Lang::A, speaker, lead, trail);
        corpus.records.push_back(std::move(rec));

        switch (kind) {
            case Kind::Clean: break;
            case Kind::SrcWer:
                corpus.bad_src_wer.insert(id);
                src_sub_texts.insert(text);
                break;
            case Kind::TgtWer:
                corpus.bad_tgt_wer.insert(id);
                tgt_sub_texts.insert(codec.translate(text, Direction::AtoB));
                break;
            case Kind::RatioLow:
            case Kind::RatioHigh:
                corpus.bad_ratio_general.insert(id);
                break;
            case Kind::RatioHq:
                corpus.bad_ratio_hq.insert(id);
                break;
            case Kind::OracleFail:
                corpus.oracle_fail.insert(id);
                fail_texts.insert(text);
                break;
        }
    }

    // Oracles are exact except on the planted spoken texts.  Keying on the
    // spoken content keeps them stable across padding and trimming.
    const std::string a_letters = cc.lang_a_letters;
    const std::string b_letters = cc.lang_b_singles + cc.lang_b_marker;
    auto substitute = [](const std::string& spoken, const std::string& letters, int n_words) {
        std::string out;
        int done = 0;
        std::size_t i = 0;
        while (i <= spoken.size()) {
            std::size_t j = spoken.find(' ', i);
            if (j == std::string::npos) j = spoken.size();
            std::string word = spoken.substr(i, j - i);
            if (done < n_words) {
                word = detail::shift_word(std::move(word), letters);
                ++done;
            }
            if (!out.empty()) out += ' ';
            out += word;
            if (j == spoken.size()) break;
            i = j + 1;
        }
        return out;
    };

    corpus.source_asr = [&codec, src_sub_texts, fail_texts, a_letters,
                         substitute](const SyntheticWaveform& w) -> AsrResult {
        const std::string spoken = codec.spoken_text(w);
        if (fail_texts.count(spoken)) return {false, "", "planted oracle failure"};
        if (src_sub_texts.count(spoken)) {
            int words = 1;
            for (char c : spoken)
                if (c == ' ') ++words;
            return {true, substitute(spoken, a_letters, (words + 3) / 4), ""};
        }
        return {true, spoken, ""};
    };
    corpus.target_asr = [&codec, tgt_sub_texts, b_letters,
                         substitute](const SyntheticWaveform& w) -> AsrResult {
        const std::string spoken = codec.spoken_text(w);
        if (tgt_sub_texts.count(spoken)) return {true, substitute(spoken, b_letters, 1), ""};
        return {true, spoken, ""};
    };
    return corpus;
}

}  // namespace uniss
