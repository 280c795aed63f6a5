// Prompt assembly and output parsing for the control-token protocol.
//
// A prompt is [task, target-or-source language, optional speed, speaker codes,
// body, BOT].  The model's emission after BOT is a fixed per-task sequence of
// segments terminated by EOD.  parse_output is the single authority on what a
// well-formed emission looks like; everything downstream (training targets,
// evaluation, the CLI) goes through it.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uniss/common.hpp"
#include "uniss/vocab.hpp"

namespace uniss {

// Length of the speaker code sequence the audio tokenizer emits.
inline constexpr int kSpeakerSeqLen = 32;

// `lang` names the language of the PROMPT's language control token: the
// source language for ASR and TTS, the target language for everything else.
struct Prompt {
    TaskMode mode = TaskMode::Asr;
    Lang lang = Lang::A;
    std::optional<SpeedBucket> speed;
    std::vector<TokenId> speaker;  // empty for MT, else exactly kSpeakerSeqLen codes
    std::vector<TokenId> body;     // linguistic codes, or text for TTS / MT
};

namespace detail {

inline bool needs_speed(TaskMode m) {
    return m == TaskMode::S2stQuality || m == TaskMode::S2stPerformance || m == TaskMode::S2stDirect;
}

inline bool needs_speaker(TaskMode m) { return m != TaskMode::Mt; }

// Expected kind of the prompt body.
enum class BodyKind { Linguistic, TextOfLang, TextOfOther };

inline BodyKind body_kind(TaskMode m) {
    switch (m) {
        case TaskMode::Asr:
        case TaskMode::S2tt:
        case TaskMode::S2stQuality:
        case TaskMode::S2stPerformance:
        case TaskMode::S2stDirect:
            return BodyKind::Linguistic;
        case TaskMode::Tts:
            return BodyKind::TextOfLang;   // prompt lang is the source language
        case TaskMode::Mt:
            return BodyKind::TextOfOther;  // prompt lang is the target language
    }
    throw ConfigError("bad TaskMode");
}

}  // namespace detail

inline std::vector<TokenId> assemble_prompt(const Prompt& p, const VocabLayout& layout) {
    const std::string where = std::string("assemble_prompt(") + task_name(p.mode) + "): ";

    if (detail::needs_speed(p.mode) != p.speed.has_value())
        throw PromptShapeError(where + (p.speed ? "unexpected speed token" : "missing speed token"));
    if (p.speed && (p.speed->tenths < kSpeedBucketMin || p.speed->tenths > kSpeedBucketMax))
        throw PromptShapeError(where + "speed bucket outside grid");

    if (detail::needs_speaker(p.mode)) {
        if (static_cast<int>(p.speaker.size()) != kSpeakerSeqLen)
            throw PromptShapeError(where + "speaker sequence must have " +
                                   std::to_string(kSpeakerSeqLen) + " codes, got " +
                                   std::to_string(p.speaker.size()));
        for (TokenId t : p.speaker)
            if (!layout.contains(t) || layout.kind_of(t) != TokenKind::Speaker)
                throw PromptShapeError(where + "speaker slot holds a non-speaker id");
    } else if (!p.speaker.empty()) {
        throw PromptShapeError(where + "task takes no speaker codes");
    }

    if (p.body.empty()) throw PromptShapeError(where + "empty body");
    const detail::BodyKind bk = detail::body_kind(p.mode);
    for (TokenId t : p.body) {
        if (!layout.contains(t)) throw PromptShapeError(where + "body id outside vocabulary");
        const TokenKind k = layout.kind_of(t);
        const bool ok = bk == detail::BodyKind::Linguistic ? k == TokenKind::Linguistic
                        : bk == detail::BodyKind::TextOfLang ? layout.is_text(t, p.lang)
                                                             : layout.is_text(t, other(p.lang));
        if (!ok) throw PromptShapeError(where + "body id has the wrong kind for this task");
    }

    std::vector<TokenId> out;
    out.reserve(3 + p.speaker.size() + p.body.size() + 1);
    out.push_back(layout.control_token(task_control(p.mode)));
    out.push_back(layout.control_token(lang_control(p.lang)));
    if (p.speed) out.push_back(layout.speed_token(*p.speed));
    out.insert(out.end(), p.speaker.begin(), p.speaker.end());
    out.insert(out.end(), p.body.begin(), p.body.end());
    out.push_back(layout.control_token(Control::Bot));
    return out;
}

// The segments a task emits, in emission order.
struct OutputSegments {
    std::optional<std::vector<TokenId>> source_text;
    std::optional<std::vector<TokenId>> target_text;
    std::optional<std::vector<TokenId>> semantic;
};

struct OutputParse {
    TaskMode mode = TaskMode::Asr;
    std::optional<std::vector<TokenId>> source_text;
    std::optional<std::vector<TokenId>> target_text;
    std::optional<std::vector<TokenId>> semantic;
    bool terminated = false;
};

namespace detail {

enum class SegField { SourceText, TargetText, Semantic };

struct SegSpec {
    SegField field;
    bool text = false;     // else semantic codes
    Lang text_lang = Lang::A;
};

// Emission grammar per task.  `lang` follows the Prompt convention above.
inline std::vector<SegSpec> emission_specs(TaskMode mode, Lang lang) {
    switch (mode) {
        case TaskMode::Asr:
            return {{SegField::SourceText, true, lang}};
        case TaskMode::S2tt:
        case TaskMode::Mt:
            return {{SegField::TargetText, true, lang}};
        case TaskMode::Tts:
        case TaskMode::S2stDirect:
            return {{SegField::Semantic}};
        case TaskMode::S2stPerformance:
            return {{SegField::TargetText, true, lang}, {SegField::Semantic}};
        case TaskMode::S2stQuality:
            return {{SegField::SourceText, true, other(lang)},
                    {SegField::TargetText, true, lang},
                    {SegField::Semantic}};
    }
    throw ConfigError("bad TaskMode");
}

inline std::optional<std::vector<TokenId>>& field_of(OutputParse& p, SegField f) {
    switch (f) {
        case SegField::SourceText: return p.source_text;
        case SegField::TargetText: return p.target_text;
        case SegField::Semantic: return p.semantic;
    }
    throw ConfigError("bad SegField");
}

inline const std::optional<std::vector<TokenId>>& field_of(const OutputSegments& s, SegField f) {
    switch (f) {
        case SegField::SourceText: return s.source_text;
        case SegField::TargetText: return s.target_text;
        case SegField::Semantic: return s.semantic;
    }
    throw ConfigError("bad SegField");
}

inline bool matches(const SegSpec& s, TokenId t, const VocabLayout& layout) {
    if (s.text) return layout.is_text(t, s.text_lang);
    return layout.kind_of(t) == TokenKind::Semantic;
}

}  // namespace detail

// Parses the emission that followed BOT.  `tokens` must not include BOT.
// A well-formed emission is the task's segments in order, each nonempty, then
// EOD.  Running out of tokens mid-way yields terminated == false; any token
// that fits no position of the grammar raises MalformedOutput.
inline OutputParse parse_output(TaskMode mode, Lang lang, const std::vector<TokenId>& tokens,
                                const VocabLayout& layout) {
    const std::string where = std::string("parse_output(") + task_name(mode) + "): ";
    const auto specs = detail::emission_specs(mode, lang);

    OutputParse out;
    out.mode = mode;
    std::size_t seg = 0;           // index of the segment currently being filled
    std::vector<TokenId> current;

    auto flush = [&](std::size_t idx) {
        detail::field_of(out, specs[idx].field) = std::move(current);
        current.clear();
    };

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const TokenId t = tokens[i];
        if (!layout.contains(t)) throw MalformedOutput(where + "id outside vocabulary");

        if (layout.is_control(t, Control::Eod)) {
            if (seg + 1 != specs.size() || current.empty())
                throw MalformedOutput(where + "terminator before all segments were emitted");
            flush(seg);
            out.terminated = true;
            if (i + 1 != tokens.size()) throw MalformedOutput(where + "tokens after terminator");
            return out;
        }

        if (detail::matches(specs[seg], t, layout)) {
            current.push_back(t);
            continue;
        }
        // Kind changed: only a hand-off to the next segment is legal, and only
        // once the current segment holds at least one token.
        if (seg + 1 < specs.size() && !current.empty() && detail::matches(specs[seg + 1], t, layout)) {
            flush(seg);
            ++seg;
            current.push_back(t);
            continue;
        }
        throw MalformedOutput(where + "token " + std::to_string(t) + " fits no segment at position " +
                              std::to_string(i));
    }

    // Ran out of tokens before EOD: keep the prefix, flag as unterminated.
    if (!current.empty()) flush(seg);
    out.terminated = false;
    return out;
}

// Builds the supervised emission for a task: segments in order plus EOD.
// Inverse of parse_output for well-formed segment sets.
inline std::vector<TokenId> assemble_target(TaskMode mode, Lang lang, const OutputSegments& segs,
                                            const VocabLayout& layout) {
    const std::string where = std::string("assemble_target(") + task_name(mode) + "): ";
    const auto specs = detail::emission_specs(mode, lang);

    std::size_t provided = 0;
    if (segs.source_text) ++provided;
    if (segs.target_text) ++provided;
    if (segs.semantic) ++provided;
    if (provided != specs.size()) throw PromptShapeError(where + "wrong segment set for this task");

    std::vector<TokenId> out;
    for (const auto& spec : specs) {
        const auto& seg = detail::field_of(segs, spec.field);
        if (!seg) throw PromptShapeError(where + "missing segment");
        if (seg->empty()) throw PromptShapeError(where + "empty segment");
        for (TokenId t : *seg) {
            if (!layout.contains(t) || !detail::matches(spec, t, layout))
                throw PromptShapeError(where + "segment holds an id of the wrong kind");
        }
        out.insert(out.end(), seg->begin(), seg->end());
    }
    out.push_back(layout.control_token(Control::Eod));
    return out;
}

}  // namespace uniss
