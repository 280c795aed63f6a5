// Turns parallel samples into prompts and supervised training examples for
// each task the model learns.
#pragma once

#include <string>
#include <vector>

#include "uniss/codec.hpp"
#include "uniss/packing.hpp"
#include "uniss/pipeline.hpp"
#include "uniss/protocol.hpp"

namespace uniss {

// The inference-time prompt for running `mode` on this sample's source side.
inline Prompt make_prompt(TaskMode mode, const ParallelSample& s, const Codec& codec) {
    const Lang src = s.source.lang;
    const Lang tgt = other(src);
    Prompt p;
    p.mode = mode;
    switch (mode) {
        case TaskMode::Asr:
            p.lang = src;
            p.speaker = codec.speaker_tokens(s.source.waveform.speaker_id);
            p.body = codec.tokenize(s.source.waveform).linguistic;
            break;
        case TaskMode::S2tt:
            p.lang = tgt;
            p.speaker = codec.speaker_tokens(s.source.waveform.speaker_id);
            p.body = codec.tokenize(s.source.waveform).linguistic;
            break;
        case TaskMode::Tts:
            p.lang = src;
            p.speaker = codec.speaker_tokens(s.source.waveform.speaker_id);
            p.body = codec.text_tokens(s.source.transcript, src);
            break;
        case TaskMode::Mt:
            p.lang = tgt;
            p.body = codec.text_tokens(s.source.transcript, src);
            break;
        case TaskMode::S2stQuality:
        case TaskMode::S2stPerformance:
        case TaskMode::S2stDirect:
            p.lang = tgt;
            p.speed = s.bucket;
            p.speaker = codec.speaker_tokens(s.source.waveform.speaker_id);
            p.body = codec.tokenize(s.source.waveform).linguistic;
            break;
    }
    return p;
}

// The reference emission segments for `mode` on this sample.
inline OutputSegments make_reference_segments(TaskMode mode, const ParallelSample& s,
                                              const Codec& codec) {
    const Lang src = s.source.lang;
    const Lang tgt = other(src);
    OutputSegments segs;
    switch (mode) {
        case TaskMode::Asr:
            segs.source_text = codec.text_tokens(s.source.transcript, src);
            break;
        case TaskMode::S2tt:
        case TaskMode::Mt:
            segs.target_text = codec.text_tokens(s.target_text, tgt);
            break;
        case TaskMode::Tts: {
            // Speech for exactly the written text: no edge silence.
            const auto trimmed = codec.trim_silence(s.source.waveform);
            if (!trimmed) throw InputError("sample " + s.id + " has an all-silence source");
            segs.semantic = codec.tokenize(*trimmed).semantic;
            break;
        }
        case TaskMode::S2stDirect:
            segs.semantic = codec.tokenize(s.target_waveform).semantic;
            break;
        case TaskMode::S2stPerformance:
            segs.target_text = codec.text_tokens(s.target_text, tgt);
            segs.semantic = codec.tokenize(s.target_waveform).semantic;
            break;
        case TaskMode::S2stQuality:
            segs.source_text = codec.text_tokens(s.source.transcript, src);
            segs.target_text = codec.text_tokens(s.target_text, tgt);
            segs.semantic = codec.tokenize(s.target_waveform).semantic;
            break;
    }
    return segs;
}

inline TrainingExample make_example(TaskMode mode, const ParallelSample& s, const Codec& codec) {
    const Prompt prompt = make_prompt(mode, s, codec);
    const Lang lang = prompt.lang;
    const auto prompt_tokens = assemble_prompt(prompt, codec.layout());
    const auto target_tokens =
        assemble_target(mode, lang, make_reference_segments(mode, s, codec), codec.layout());

    TrainingExample ex;
    ex.id = s.id + ":" + task_name(mode);
    ex.task = mode;
    ex.tokens = prompt_tokens;
    ex.tokens.insert(ex.tokens.end(), target_tokens.begin(), target_tokens.end());
    ex.loss_mask.assign(prompt_tokens.size(), 0);
    ex.loss_mask.insert(ex.loss_mask.end(), target_tokens.size(), 1);
    return ex;
}

}  // namespace uniss
