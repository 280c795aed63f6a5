// Deterministic synthetic speech codec over a pair of constructed languages.
//
// A "waveform" is a character string (letters, word spaces, '_' silence) plus
// a speaker id; duration is chars / chars_per_second.  The tokenizer emits
// three aligned streams per waveform:
//   speaker     fixed-length code of the speaker identity (kSpeakerSeqLen ids)
//   linguistic  one id per character           (chars_per_second tokens/sec)
//   semantic    sem_per_char ids per character (4x the linguistic rate)
// Semantic ids additionally carry the speaker id modulo parity_classes, so two
// speakers generally produce different semantic streams for the same text, yet
// the text decodes from the semantic stream alone.  detokenize takes its
// speaker identity from the speaker codes, which is what makes voice transfer
// exact: decode(spk_a, semantic-of-b-saying-w) speaks w as speaker a.
//
// Language b is language a under a per-word cipher followed by in-word
// reversal.  Two of the twelve a-letters map to two-character codewords, so
// translation lengthens text by a content-dependent factor in [1.0, 2.0].
#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "uniss/common.hpp"
#include "uniss/protocol.hpp"
#include "uniss/vocab.hpp"

namespace uniss {

enum class Direction { AtoB, BtoA };

inline Lang source_lang(Direction d) { return d == Direction::AtoB ? Lang::A : Lang::B; }
inline Lang target_lang(Direction d) { return d == Direction::AtoB ? Lang::B : Lang::A; }

struct SyntheticWaveform {
    std::string text;       // letters + spaces + '_' silence, never empty
    int speaker_id = 0;
    double duration_s = 0;  // text.size() / chars_per_second
};

struct AudioTokens {
    std::vector<TokenId> speaker;
    std::vector<TokenId> linguistic;
    std::vector<TokenId> semantic;
};

struct CodecConfig {
    std::string lang_a_letters = "abcdefghijkl";
    std::string lang_b_singles = "mnopqrstuv";   // cipher images of the first 10 a-letters
    char lang_b_marker = 'z';                    // prefix of the two-char codewords
    std::string lang_b_pair_seconds = "mn";      // second char of codewords for the remaining a-letters
    char silence = '_';
    int num_speakers = 12;
    int speaker_range = 16;    // size of the speaker id sub-range
    int sem_per_char = 4;
    int parity_classes = 3;    // speaker id survives mod this in the semantic stream
    double chars_per_second = 12.5;
};

class Codec {
public:
    explicit Codec(CodecConfig cfg = {}) : cfg_(std::move(cfg)), layout_(derive_vocab(cfg_)) {
        validate_config(cfg_);
        charset_ = cfg_.lang_a_letters;
        charset_ += cfg_.lang_b_singles;
        charset_ += cfg_.lang_b_marker;
        charset_ += ' ';
        charset_ += cfg_.silence;
        char_index_.fill(-1);
        for (std::size_t i = 0; i < charset_.size(); ++i)
            char_index_[static_cast<unsigned char>(charset_[i])] = static_cast<int>(i);
    }

    const CodecConfig& config() const { return cfg_; }
    const VocabLayout& layout() const { return layout_; }

    static VocabConfig derive_vocab(const CodecConfig& cfg) {
        validate_config(cfg);
        const int n_a = static_cast<int>(cfg.lang_a_letters.size());
        const int n_b = static_cast<int>(cfg.lang_b_singles.size()) + 1;  // + marker
        const int charset = n_a + n_b + 2;                                // + space + silence
        VocabConfig v;
        v.text_a = n_a + 1;  // letters + space
        v.text_b = n_b + 1;
        v.linguistic = charset;
        v.semantic = charset * cfg.sem_per_char * cfg.parity_classes;
        v.speaker = cfg.speaker_range;
        return v;
    }

    double duration_of(std::size_t n_chars) const {
        return static_cast<double>(n_chars) / cfg_.chars_per_second;
    }

    SyntheticWaveform make_waveform(std::string text, int speaker_id) const {
        if (text.empty()) throw InputError("waveform text must be non-empty");
        if (speaker_id < 0 || speaker_id >= cfg_.num_speakers)
            throw OutOfRange("speaker id out of range: " + std::to_string(speaker_id));
        for (char c : text)
            if (char_index_[static_cast<unsigned char>(c)] < 0)
                throw AlphabetError(std::string("waveform holds a non-codec character: '") + c + "'");
        SyntheticWaveform w{std::move(text), speaker_id, 0.0};
        w.duration_s = duration_of(w.text.size());
        return w;
    }

    std::vector<TokenId> speaker_tokens(int speaker_id) const {
        if (speaker_id < 0 || speaker_id >= cfg_.num_speakers)
            throw OutOfRange("speaker id out of range: " + std::to_string(speaker_id));
        std::vector<TokenId> out(kSpeakerSeqLen);
        for (int j = 0; j < kSpeakerSeqLen; ++j)
            out[j] = layout_.speaker_token((speaker_id + j) % cfg_.speaker_range);
        return out;
    }

    int decode_speaker(const std::vector<TokenId>& spk) const {
        if (static_cast<int>(spk.size()) != kSpeakerSeqLen)
            throw DecodeError("speaker code must have " + std::to_string(kSpeakerSeqLen) + " ids");
        for (TokenId t : spk)
            if (!layout_.contains(t) || layout_.kind_of(t) != TokenKind::Speaker)
                throw DecodeError("non-speaker id in speaker code");
        const int id0 = layout_.index_of(spk[0]);
        for (int j = 1; j < kSpeakerSeqLen; ++j)
            if (layout_.index_of(spk[j]) != (id0 + j) % cfg_.speaker_range)
                throw DecodeError("speaker code is not a rotation sequence");
        if (id0 >= cfg_.num_speakers)
            throw DecodeError("speaker code names an unknown speaker: " + std::to_string(id0));
        return id0;
    }

    AudioTokens tokenize(const SyntheticWaveform& w) const {
        validate_waveform(w);
        AudioTokens out;
        out.speaker = speaker_tokens(w.speaker_id);
        out.linguistic.reserve(w.text.size());
        out.semantic.reserve(w.text.size() * cfg_.sem_per_char);
        const int K = cfg_.parity_classes;
        const int q = w.speaker_id % K;
        for (char c : w.text) {
            const int ci = char_index_[static_cast<unsigned char>(c)];
            out.linguistic.push_back(layout_.linguistic_token(ci));
            for (int p = 0; p < cfg_.sem_per_char; ++p)
                out.semantic.push_back(layout_.semantic_token((ci * cfg_.sem_per_char + p) * K + q));
        }
        return out;
    }

    // Reconstructs a waveform from speaker + semantic codes.  The semantic
    // stream must be whole char groups with a consistent in-group phase and a
    // single parity class across the utterance; anything else is undecodable.
    SyntheticWaveform detokenize(const std::vector<TokenId>& spk,
                                 const std::vector<TokenId>& semantic) const {
        const int speaker_id = decode_speaker(spk);
        if (semantic.empty()) throw DecodeError("empty semantic stream");
        const int S = cfg_.sem_per_char;
        if (semantic.size() % static_cast<std::size_t>(S) != 0)
            throw DecodeError("semantic stream is not whole char groups");
        const int K = cfg_.parity_classes;
        int parity = -1;
        std::string text;
        text.reserve(semantic.size() / static_cast<std::size_t>(S));
        for (std::size_t g = 0; g < semantic.size(); g += static_cast<std::size_t>(S)) {
            int char_idx = -1;
            for (int p = 0; p < S; ++p) {
                const TokenId t = semantic[g + static_cast<std::size_t>(p)];
                if (!layout_.contains(t) || layout_.kind_of(t) != TokenKind::Semantic)
                    throw DecodeError("non-semantic id in semantic stream");
                const int idx = layout_.index_of(t);
                const int q = idx % K;
                const int phase = (idx / K) % S;
                const int ci = idx / K / S;
                if (parity < 0) parity = q;
                if (q != parity) throw DecodeError("semantic stream mixes parity classes");
                if (phase != p) throw DecodeError("semantic char group out of phase");
                if (p == 0) char_idx = ci;
                else if (ci != char_idx) throw DecodeError("semantic char group mixes characters");
            }
            text += charset_[static_cast<std::size_t>(char_idx)];
        }
        SyntheticWaveform w{std::move(text), speaker_id, 0.0};
        w.duration_s = duration_of(w.text.size());
        return w;
    }

    // --- text <-> text tokens ------------------------------------------------

    std::vector<TokenId> text_tokens(const std::string& text, Lang lang) const {
        validate_text(text, lang);
        std::vector<TokenId> out;
        out.reserve(text.size());
        for (char c : text) out.push_back(layout_.text_token(lang, text_index(c, lang)));
        return out;
    }

    std::string text_from_tokens(const std::vector<TokenId>& tokens, Lang lang) const {
        std::string out;
        out.reserve(tokens.size());
        for (TokenId t : tokens) {
            if (!layout_.contains(t) || !layout_.is_text(t, lang))
                throw DecodeError("id is not text of the requested language");
            out += text_char(layout_.index_of(t), lang);
        }
        return out;
    }

    // --- translation ---------------------------------------------------------

    // Per-word cipher plus in-word reversal.  Exact inverse pair.
    std::string translate(const std::string& text, Direction dir) const {
        validate_text(text, source_lang(dir));
        std::string out;
        std::size_t i = 0;
        while (i < text.size()) {
            std::size_t j = i;
            while (j < text.size() && text[j] != ' ') ++j;
            if (!out.empty()) out += ' ';
            out += dir == Direction::AtoB ? encode_word(text.substr(i, j - i))
                                          : decode_word(text.substr(i, j - i));
            i = j + 1;
        }
        return out;
    }

    // --- synthesis and silence -----------------------------------------------

    SyntheticWaveform synthesize(const std::string& text, Lang lang, int speaker_id,
                                 int lead_silence = 0, int trail_silence = 0) const {
        validate_text(text, lang);
        if (lead_silence < 0 || trail_silence < 0) throw OutOfRange("negative silence pad");
        std::string s(static_cast<std::size_t>(lead_silence), cfg_.silence);
        s += text;
        s.append(static_cast<std::size_t>(trail_silence), cfg_.silence);
        return make_waveform(std::move(s), speaker_id);
    }

    // Strips leading/trailing silence runs; nullopt when nothing remains.
    std::optional<SyntheticWaveform> trim_silence(const SyntheticWaveform& w) const {
        validate_waveform(w);
        std::size_t b = 0, e = w.text.size();
        while (b < e && w.text[b] == cfg_.silence) ++b;
        while (e > b && w.text[e - 1] == cfg_.silence) --e;
        if (b == e) return std::nullopt;
        SyntheticWaveform out{w.text.substr(b, e - b), w.speaker_id, 0.0};
        out.duration_s = duration_of(out.text.size());
        return out;
    }

    bool is_valid_text(const std::string& text, Lang lang) const {
        try {
            validate_text(text, lang);
            return true;
        } catch (const Error&) {
            return false;
        }
    }

    // Normalized spoken content: the waveform text with silence removed and
    // word spacing collapsed.  Empty string for all-silence waveforms.
    std::string spoken_text(const SyntheticWaveform& w) const {
        std::string out;
        bool in_space = true;
        for (char c : w.text) {
            if (c == cfg_.silence || c == ' ') {
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

private:
    static void validate_config(const CodecConfig& cfg) {
        auto dup_free = [](const std::string& s) {
            std::string t = s;
            std::sort(t.begin(), t.end());
            return std::adjacent_find(t.begin(), t.end()) == t.end();
        };
        if (cfg.lang_a_letters.empty() || cfg.lang_b_singles.empty())
            throw ConfigError("alphabets must be non-empty");
        if (!dup_free(cfg.lang_a_letters) || !dup_free(cfg.lang_b_singles) ||
            !dup_free(cfg.lang_b_pair_seconds))
            throw ConfigError("alphabet has duplicate characters");
        const std::size_t need_pairs = cfg.lang_a_letters.size() > cfg.lang_b_singles.size()
                                           ? cfg.lang_a_letters.size() - cfg.lang_b_singles.size()
                                           : 0;
        if (cfg.lang_b_pair_seconds.size() != need_pairs)
            throw ConfigError("pair_seconds must cover exactly the a-letters beyond the singles");
        for (char c : cfg.lang_b_pair_seconds)
            if (cfg.lang_b_singles.find(c) == std::string::npos)
                throw ConfigError("pair second chars must come from the singles alphabet");
        std::string all = cfg.lang_a_letters + cfg.lang_b_singles + cfg.lang_b_marker;
        all += ' ';
        all += cfg.silence;
        if (!dup_free(all)) throw ConfigError("alphabets, marker, space and silence must be disjoint");
        if (cfg.num_speakers <= 0 || cfg.speaker_range <= 0 || cfg.num_speakers > cfg.speaker_range)
            throw ConfigError("need 0 < num_speakers <= speaker_range");
        if (cfg.sem_per_char <= 0 || cfg.parity_classes <= 0)
            throw ConfigError("sem_per_char and parity_classes must be positive");
        if (!(cfg.chars_per_second > 0)) throw ConfigError("chars_per_second must be positive");
    }

    void validate_waveform(const SyntheticWaveform& w) const {
        if (w.text.empty()) throw InputError("waveform text must be non-empty");
        if (w.speaker_id < 0 || w.speaker_id >= cfg_.num_speakers)
            throw OutOfRange("speaker id out of range: " + std::to_string(w.speaker_id));
        for (char c : w.text)
            if (char_index_[static_cast<unsigned char>(c)] < 0)
                throw AlphabetError(std::string("waveform holds a non-codec character: '") + c + "'");
    }

    // Text must be normalized: single spaces, no edge spaces, no silence.
    void validate_text(const std::string& text, Lang lang) const {
        if (text.empty()) throw AlphabetError("text must be non-empty");
        if (text.front() == ' ' || text.back() == ' ')
            throw AlphabetError("text has leading or trailing space");
        char prev = 0;
        for (char c : text) {
            if (c == ' ' && prev == ' ') throw AlphabetError("text has a double space");
            if (c != ' ' && !letter_of(c, lang))
                throw AlphabetError(std::string("character outside the ") + lang_name(lang) +
                                    " alphabet: '" + c + "'");
            prev = c;
        }
    }

    bool letter_of(char c, Lang lang) const {
        if (lang == Lang::A) return cfg_.lang_a_letters.find(c) != std::string::npos;
        return c == cfg_.lang_b_marker || cfg_.lang_b_singles.find(c) != std::string::npos;
    }

    int text_index(char c, Lang lang) const {
        if (lang == Lang::A) {
            if (c == ' ') return static_cast<int>(cfg_.lang_a_letters.size());
            return static_cast<int>(cfg_.lang_a_letters.find(c));
        }
        if (c == ' ') return static_cast<int>(cfg_.lang_b_singles.size()) + 1;
        if (c == cfg_.lang_b_marker) return static_cast<int>(cfg_.lang_b_singles.size());
        return static_cast<int>(cfg_.lang_b_singles.find(c));
    }

    char text_char(int idx, Lang lang) const {
        if (lang == Lang::A) {
            if (idx == static_cast<int>(cfg_.lang_a_letters.size())) return ' ';
            return cfg_.lang_a_letters[static_cast<std::size_t>(idx)];
        }
        const int n = static_cast<int>(cfg_.lang_b_singles.size());
        if (idx == n + 1) return ' ';
        if (idx == n) return cfg_.lang_b_marker;
        return cfg_.lang_b_singles[static_cast<std::size_t>(idx)];
    }

    std::string encode_word(const std::string& word) const {
        std::string mapped;
        for (char c : word) {
            const std::size_t i = cfg_.lang_a_letters.find(c);
            if (i < cfg_.lang_b_singles.size()) {
                mapped += cfg_.lang_b_singles[i];
            } else {
                mapped += cfg_.lang_b_marker;
                mapped += cfg_.lang_b_pair_seconds[i - cfg_.lang_b_singles.size()];
            }
        }
        std::reverse(mapped.begin(), mapped.end());
        return mapped;
    }

    std::string decode_word(const std::string& word) const {
        std::string mapped(word.rbegin(), word.rend());
        std::string out;
        for (std::size_t i = 0; i < mapped.size(); ++i) {
            if (mapped[i] == cfg_.lang_b_marker) {
                if (i + 1 >= mapped.size())
                    throw AlphabetError("dangling marker in b-language word: " + word);
                const std::size_t p = cfg_.lang_b_pair_seconds.find(mapped[i + 1]);
                if (p == std::string::npos)
                    throw AlphabetError("marker followed by a non-codeword char in: " + word);
                out += cfg_.lang_a_letters[cfg_.lang_b_singles.size() + p];
                ++i;
            } else {
                out += cfg_.lang_a_letters[cfg_.lang_b_singles.find(mapped[i])];
            }
        }
        return out;
    }

    CodecConfig cfg_;
    VocabLayout layout_;
    std::string charset_;
    std::array<int, 256> char_index_{};
};

// Stable identity of a waveform's content, used to key deterministic
// per-record noise without threading record ids through every interface.
inline std::uint64_t waveform_key(const SyntheticWaveform& w) {
    return fnv1a64(w.text + '\x1f' + std::to_string(w.speaker_id));
}

}  // namespace uniss
