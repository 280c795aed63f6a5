// Objective evaluation of an emitter (usually a trained model, sometimes an
// oracle) on one task mode.
//
// Every sample contributes a hypothesis to the text and speech corpora: a
// failed parse or an undecodable semantic stream contributes an empty one,
// so grammar violations lower the corpus scores instead of vanishing from
// them.  Length compliance and speaker identity are only measurable on
// decoded audio and are reported over that subset, next to the failure
// counts.
#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uniss/codec.hpp"
#include "uniss/io.hpp"
#include "uniss/metrics.hpp"
#include "uniss/pipeline.hpp"
#include "uniss/protocol.hpp"
#include "uniss/sampler.hpp"
#include "uniss/tasks.hpp"

namespace uniss {

// Produces the emission token stream (EOD included when reached) for a
// prompt.  The sample is passed alongside so oracle emitters can cheat.
using Emitter = std::function<std::vector<TokenId>(const ParallelSample&, const Prompt&)>;

struct EvalRow {
    std::string id;
    int emitted = 0;
    bool parsed = false;
    bool decoded = false;
    std::string hyp_text;
    std::string hyp_speech;
    double hyp_duration_s = 0.0;
};

struct EvalReport {
    TaskMode mode = TaskMode::Asr;
    int n = 0;
    int parsed = 0;
    int decode_failures = 0;  // parsed, but the codec refused the semantic stream
    double parse_validity = 0.0;
    std::optional<double> text_bleu;
    std::optional<double> speech_bleu;
    std::optional<double> speaker_preservation;  // over decoded audio
    std::optional<double> slc_02, slc_04;        // output vs. source duration
    double wall_seconds = 0.0;                   // emitter time only
    double mean_emitted_tokens = 0.0;
    std::vector<EvalRow> rows;
};

namespace detail {

inline bool mode_has_text_metric(TaskMode m) {
    return m != TaskMode::Tts && m != TaskMode::S2stDirect;
}

inline bool mode_has_speech_metric(TaskMode m) {
    return m == TaskMode::Tts || m == TaskMode::S2stQuality || m == TaskMode::S2stPerformance ||
           m == TaskMode::S2stDirect;
}

}  // namespace detail

inline EvalReport evaluate(TaskMode mode, const std::vector<ParallelSample>& samples,
                           const Emitter& emitter, const Codec& codec) {
    if (samples.empty()) throw InputError("evaluate: no samples");
    const VocabLayout& layout = codec.layout();
    const bool want_text = detail::mode_has_text_metric(mode);
    const bool want_speech = detail::mode_has_speech_metric(mode);

    EvalReport rep;
    rep.mode = mode;
    rep.n = static_cast<int>(samples.size());

    std::vector<std::string> text_hyps, text_refs, speech_hyps, speech_refs;
    std::vector<std::pair<double, double>> durations;  // (source, output)
    long long emitted_total = 0;
    int speaker_ok = 0, decoded_total = 0;

    for (const auto& s : samples) {
        EvalRow row;
        row.id = s.id;
        const Prompt prompt = make_prompt(mode, s, codec);

        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<TokenId> emission = emitter(s, prompt);
        rep.wall_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        row.emitted = static_cast<int>(emission.size());
        emitted_total += row.emitted;

        OutputParse parse;
        bool ok = true;
        try {
            parse = parse_output(mode, prompt.lang, emission, layout);
        } catch (const MalformedOutput&) {
            ok = false;
        }
        ok = ok && parse.terminated;
        row.parsed = ok;
        rep.parsed += ok ? 1 : 0;

        if (want_text) {
            // ASR's sole text segment is the source transcript; every other
            // text-bearing mode is scored on the translation.
            const auto& seg = mode == TaskMode::Asr ? parse.source_text : parse.target_text;
            const Lang text_lang = mode == TaskMode::Asr ? s.source.lang : other(s.source.lang);
            if (ok && seg) row.hyp_text = codec.text_from_tokens(*seg, text_lang);
            text_hyps.push_back(row.hyp_text);
            text_refs.push_back(mode == TaskMode::Asr ? s.source.transcript : s.target_text);
        }

        if (want_speech) {
            if (ok && parse.semantic) {
                try {
                    const SyntheticWaveform w = codec.detokenize(prompt.speaker, *parse.semantic);
                    row.decoded = true;
                    row.hyp_speech = codec.spoken_text(w);
                    row.hyp_duration_s = w.duration_s;
                    ++decoded_total;
                    if (w.speaker_id == s.source.waveform.speaker_id) ++speaker_ok;
                    durations.emplace_back(s.source.waveform.duration_s, w.duration_s);
                } catch (const DecodeError&) {
                    ++rep.decode_failures;
                }
            }
            speech_hyps.push_back(row.hyp_speech);
            speech_refs.push_back(mode == TaskMode::Tts ? s.source.transcript : s.target_text);
        }
        rep.rows.push_back(std::move(row));
    }

    rep.parse_validity = static_cast<double>(rep.parsed) / rep.n;
    rep.mean_emitted_tokens = static_cast<double>(emitted_total) / rep.n;
    if (want_text) rep.text_bleu = corpus_bleu(text_hyps, text_refs, TextUnit::Word);
    if (want_speech) {
        rep.speech_bleu = corpus_bleu(speech_hyps, speech_refs, TextUnit::Word);
        if (decoded_total > 0) {
            rep.speaker_preservation = static_cast<double>(speaker_ok) / decoded_total;
            rep.slc_02 = speech_length_compliance(durations, 0.2);
            rep.slc_04 = speech_length_compliance(durations, 0.4);
        }
    }
    return rep;
}

// Wraps a trained model as an Emitter.  The draw is seeded per prompt, so a
// report is reproducible and independent of evaluation order.  The params
// must outlive the returned closure.
inline Emitter make_model_emitter(const ModelConfig& model_cfg, const Params& params,
                                  const SamplerConfig& sampler_cfg, const VocabLayout& layout,
                                  std::uint64_t seed) {
    sampler_cfg.validate();
    const TokenId eod = layout.control_token(Control::Eod);
    const Params* p = &params;
    return [model_cfg, p, sampler_cfg, layout, eod, seed](const ParallelSample&,
                                                          const Prompt& prompt) {
        const std::vector<TokenId> tokens = assemble_prompt(prompt, layout);
        const auto bytes = std::string_view(reinterpret_cast<const char*>(tokens.data()),
                                            tokens.size() * sizeof(TokenId));
        Rng rng(derive_seed(seed, "emit", fnv1a64(bytes)));
        SamplerConfig sc = sampler_cfg;
        const int room = model_cfg.max_positions - static_cast<int>(tokens.size());
        if (room <= 0) throw InputError("prompt leaves no room to generate");
        if (sc.max_new_tokens > room) sc.max_new_tokens = room;
        return generate(model_cfg, *p, tokens, eod, sc, rng).tokens;
    };
}

// The emission a perfect model would produce; useful as an oracle in tests.
inline Emitter make_reference_emitter(const Codec& codec) {
    const Codec* c = &codec;
    return [c](const ParallelSample& s, const Prompt& prompt) {
        return assemble_target(prompt.mode, prompt.lang,
                               make_reference_segments(prompt.mode, s, *c), c->layout());
    };
}

inline void to_json(Json& j, const EvalRow& r) {
    j = Json{{"id", r.id},           {"emitted", r.emitted},
             {"parsed", r.parsed},   {"decoded", r.decoded},
             {"hyp_text", r.hyp_text}, {"hyp_speech", r.hyp_speech},
             {"hyp_duration_s", r.hyp_duration_s}};
}

inline void to_json(Json& j, const EvalReport& r) {
    j = Json{{"mode", task_name(r.mode)},
             {"n", r.n},
             {"parsed", r.parsed},
             {"decode_failures", r.decode_failures},
             {"parse_validity", r.parse_validity},
             {"wall_seconds", r.wall_seconds},
             {"mean_emitted_tokens", r.mean_emitted_tokens},
             {"rows", r.rows}};
    if (r.text_bleu) j["text_bleu"] = *r.text_bleu;
    if (r.speech_bleu) j["speech_bleu"] = *r.speech_bleu;
    if (r.speaker_preservation) j["speaker_preservation"] = *r.speaker_preservation;
    if (r.slc_02) j["slc_02"] = *r.slc_02;
    if (r.slc_04) j["slc_04"] = *r.slc_04;
}

}  // namespace uniss
