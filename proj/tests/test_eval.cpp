#include "uniss/eval.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "uniss/codec.hpp"
#include "uniss/common.hpp"
#include "uniss/corpus.hpp"
#include "uniss/pipeline.hpp"

using namespace uniss;

namespace {

const Codec& codec() {
    static Codec c;
    return c;
}

// Transcripts of at least four words, so an exact hypothesis corpus has
// matching 4-grams and identity BLEU comes out at exactly 100.
const std::vector<ParallelSample>& samples() {
    static const std::vector<ParallelSample> v = [] {
        CorpusSpec spec;
        spec.n_records = 8;
        spec.seed = 31;
        spec.words_min = 4;
        spec.words_max = 6;
        spec.word_len_min = 2;
        spec.word_len_max = 4;
        const auto corpus = generate_corpus(codec(), spec);
        PipelineConfig cfg;
        cfg.seed = 32;
        return build_general(corpus.records,
                             {corpus.source_asr, corpus.target_asr, {}}, codec(), cfg)
            .samples;
    }();
    return v;
}

const std::vector<TaskMode> kAllModes = {
    TaskMode::Asr,           TaskMode::S2tt,
    TaskMode::Tts,           TaskMode::Mt,
    TaskMode::S2stQuality,   TaskMode::S2stPerformance,
    TaskMode::S2stDirect};

}  // namespace

TEST(Evaluate, ReferenceEmitterAcesEveryMode) {
    ASSERT_GE(samples().size(), 4u);
    const Emitter ref = make_reference_emitter(codec());
    for (TaskMode mode : kAllModes) {
        SCOPED_TRACE(task_name(mode));
        const EvalReport rep = evaluate(mode, samples(), ref, codec());

        EXPECT_EQ(rep.mode, mode);
        EXPECT_EQ(rep.n, static_cast<int>(samples().size()));
        EXPECT_EQ(rep.parsed, rep.n);
        EXPECT_DOUBLE_EQ(rep.parse_validity, 1.0);
        EXPECT_EQ(rep.decode_failures, 0);
        ASSERT_EQ(rep.rows.size(), samples().size());
        EXPECT_GT(rep.mean_emitted_tokens, 0.0);

        const bool text = mode != TaskMode::Tts && mode != TaskMode::S2stDirect;
        const bool speech = mode == TaskMode::Tts || mode == TaskMode::S2stQuality ||
                            mode == TaskMode::S2stPerformance || mode == TaskMode::S2stDirect;

        EXPECT_EQ(rep.text_bleu.has_value(), text);
        EXPECT_EQ(rep.speech_bleu.has_value(), speech);
        EXPECT_EQ(rep.speaker_preservation.has_value(), speech);
        EXPECT_EQ(rep.slc_02.has_value(), speech);
        EXPECT_EQ(rep.slc_04.has_value(), speech);
        if (text) {
            EXPECT_NEAR(*rep.text_bleu, 100.0, 1e-9);
        }
        if (speech) {
            EXPECT_NEAR(*rep.speech_bleu, 100.0, 1e-9);
            EXPECT_DOUBLE_EQ(*rep.speaker_preservation, 1.0);
            EXPECT_GE(*rep.slc_02, 0.0);
            EXPECT_LE(*rep.slc_02, 1.0);
            EXPECT_GE(*rep.slc_04, *rep.slc_02);
        }

        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
            const EvalRow& row = rep.rows[i];
            EXPECT_EQ(row.id, samples()[i].id);
            EXPECT_TRUE(row.parsed);
            EXPECT_GT(row.emitted, 0);
            if (text) {
                EXPECT_FALSE(row.hyp_text.empty());
            }
            if (speech) {
                EXPECT_TRUE(row.decoded);
                EXPECT_FALSE(row.hyp_speech.empty());
                EXPECT_GT(row.hyp_duration_s, 0.0);
            } else {
                EXPECT_FALSE(row.decoded);
            }
        }

        // The per-row hypotheses equal the references they are scored against.
        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
            const ParallelSample& s = samples()[i];
            if (text) {
                EXPECT_EQ(rep.rows[i].hyp_text,
                          mode == TaskMode::Asr ? s.source.transcript : s.target_text);
            }
            if (speech) {
                EXPECT_EQ(rep.rows[i].hyp_speech,
                          mode == TaskMode::Tts ? s.source.transcript : s.target_text);
            }
        }
    }
}

TEST(Evaluate, GrammaticalButWrongTranslationsScoreLow) {
    // Emit the reference for the *next* sample: every emission still parses,
    // so a low score here comes from the metric and nothing else.
    const auto& v = samples();
    const Emitter rotated = [&v](const ParallelSample& s, const Prompt& prompt) {
        std::size_t i = 0;
        while (v[i].id != s.id) ++i;
        const ParallelSample& wrong = v[(i + 1) % v.size()];
        return assemble_target(prompt.mode, prompt.lang,
                               make_reference_segments(prompt.mode, wrong, codec()),
                               codec().layout());
    };
    const EvalReport rep = evaluate(TaskMode::Mt, samples(), rotated, codec());
    EXPECT_DOUBLE_EQ(rep.parse_validity, 1.0);
    ASSERT_TRUE(rep.text_bleu.has_value());
    EXPECT_LT(*rep.text_bleu, 30.0);
}

TEST(Evaluate, UnterminatedEmissionsCountAgainstValidity) {
    const Emitter ref = make_reference_emitter(codec());
    const Emitter flaky = [&ref](const ParallelSample& s, const Prompt& prompt) {
        auto tokens = ref(s, prompt);
        std::size_t i = 0;
        while (samples()[i].id != s.id) ++i;
        if (i % 2 == 1) tokens.pop_back();  // drop the terminator
        return tokens;
    };
    const EvalReport rep = evaluate(TaskMode::S2tt, samples(), flaky, codec());

    const int n = rep.n;
    const int expect_parsed = (n + 1) / 2;
    EXPECT_EQ(rep.parsed, expect_parsed);
    EXPECT_DOUBLE_EQ(rep.parse_validity, static_cast<double>(expect_parsed) / n);
    ASSERT_TRUE(rep.text_bleu.has_value());
    EXPECT_LT(*rep.text_bleu, 100.0);
    EXPECT_GT(*rep.text_bleu, 0.0);  // the intact half still matches

    long long total = 0;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        EXPECT_EQ(rep.rows[i].parsed, i % 2 == 0);
        if (i % 2 == 1) {
            EXPECT_TRUE(rep.rows[i].hyp_text.empty());
        }
        total += rep.rows[i].emitted;
    }
    EXPECT_DOUBLE_EQ(rep.mean_emitted_tokens, static_cast<double>(total) / n);
}

TEST(Evaluate, MalformedEmissionsAreScoredAsEmpty) {
    const VocabLayout& layout = codec().layout();
    const Emitter junk = [&layout](const ParallelSample&, const Prompt&) {
        // A lone EOD has no segments at all: parse_output rejects it.
        return std::vector<TokenId>{layout.control_token(Control::Eod)};
    };
    const EvalReport rep = evaluate(TaskMode::Asr, samples(), junk, codec());
    EXPECT_EQ(rep.parsed, 0);
    EXPECT_DOUBLE_EQ(rep.parse_validity, 0.0);
    ASSERT_TRUE(rep.text_bleu.has_value());
    EXPECT_DOUBLE_EQ(*rep.text_bleu, 0.0);
    for (const auto& row : rep.rows) EXPECT_TRUE(row.hyp_text.empty());
}

TEST(Evaluate, UndecodableSemanticsCountAsDecodeFailures) {
    // Drop one semantic code from one sample's emission: every token is still
    // the right kind so the grammar passes, but the char groups come out
    // ragged and the codec refuses the stream.
    const auto& v = samples();
    const std::string bad_id = v[0].id;
    const Emitter ref = make_reference_emitter(codec());
    const Emitter clipped = [&, bad_id](const ParallelSample& s, const Prompt& prompt) {
        if (s.id != bad_id) return ref(s, prompt);
        OutputSegments segs = make_reference_segments(prompt.mode, s, codec());
        segs.semantic->pop_back();
        return assemble_target(prompt.mode, prompt.lang, segs, codec().layout());
    };
    const EvalReport rep = evaluate(TaskMode::S2stDirect, samples(), clipped, codec());

    EXPECT_DOUBLE_EQ(rep.parse_validity, 1.0);  // grammar was fine everywhere
    EXPECT_EQ(rep.decode_failures, 1);
    ASSERT_TRUE(rep.rows[0].parsed);
    EXPECT_FALSE(rep.rows[0].decoded);
    EXPECT_TRUE(rep.rows[0].hyp_speech.empty());
    for (std::size_t i = 1; i < rep.rows.size(); ++i) EXPECT_TRUE(rep.rows[i].decoded);

    ASSERT_TRUE(rep.speech_bleu.has_value());
    EXPECT_LT(*rep.speech_bleu, 100.0);
    // Identity and length are reported over the decoded subset, which is clean.
    ASSERT_TRUE(rep.speaker_preservation.has_value());
    EXPECT_DOUBLE_EQ(*rep.speaker_preservation, 1.0);
}

TEST(Evaluate, NothingDecodedMeansNoAudioMetrics) {
    const VocabLayout& layout = codec().layout();
    const Emitter never_terminates = [&layout](const ParallelSample&, const Prompt&) {
        return std::vector<TokenId>{layout.semantic_token(0)};
    };
    const EvalReport rep = evaluate(TaskMode::S2stDirect, samples(), never_terminates, codec());
    EXPECT_EQ(rep.parsed, 0);
    EXPECT_EQ(rep.decode_failures, 0);  // nothing parsed, so nothing reached the codec
    ASSERT_TRUE(rep.speech_bleu.has_value());
    EXPECT_DOUBLE_EQ(*rep.speech_bleu, 0.0);
    EXPECT_FALSE(rep.speaker_preservation.has_value());
    EXPECT_FALSE(rep.slc_02.has_value());
    EXPECT_FALSE(rep.slc_04.has_value());
}

TEST(Evaluate, RejectsAnEmptySampleList) {
    EXPECT_THROW(evaluate(TaskMode::Asr, {}, make_reference_emitter(codec()), codec()),
                 InputError);
}

TEST(ModelEmitter, ReportsDoNotDependOnEvaluationOrder) {
    ModelConfig cfg;
    cfg.vocab = codec().layout().total_size();
    cfg.layers = 1;
    cfg.width = 32;
    cfg.heads = 4;
    cfg.ff = 48;
    cfg.max_positions = 256;
    Params params = make_params(cfg);
    Rng rng(derive_seed(7, "eval-model"));
    init_params(params, cfg, rng);

    SamplerConfig sc;
    sc.max_new_tokens = 24;
    const Emitter em = make_model_emitter(cfg, params, sc, codec().layout(), 41);

    std::vector<ParallelSample> fwd(samples().begin(), samples().begin() + 3);
    std::vector<ParallelSample> rev(fwd.rbegin(), fwd.rend());
    const EvalReport a = evaluate(TaskMode::Mt, fwd, em, codec());
    const EvalReport b = evaluate(TaskMode::Mt, fwd, em, codec());
    const EvalReport c = evaluate(TaskMode::Mt, rev, em, codec());

    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].emitted, b.rows[i].emitted);
        EXPECT_EQ(a.rows[i].hyp_text, b.rows[i].hyp_text);
    }
    EXPECT_EQ(a.text_bleu, b.text_bleu);

    // Per-prompt seeding: the same sample draws the same emission wherever
    // it sits in the list.
    for (const auto& row : c.rows) {
        const auto it = std::find_if(a.rows.begin(), a.rows.end(),
                                     [&](const EvalRow& r) { return r.id == row.id; });
        ASSERT_NE(it, a.rows.end());
        EXPECT_EQ(row.emitted, it->emitted);
        EXPECT_EQ(row.hyp_text, it->hyp_text);
    }
}

TEST(ModelEmitter, RefusesPromptsThatFillTheContext) {
    ModelConfig cfg;
    cfg.vocab = codec().layout().total_size();
    cfg.layers = 1;
    cfg.width = 32;
    cfg.heads = 4;
    cfg.ff = 48;
    cfg.max_positions = 4;  // shorter than any prompt
    Params params = make_params(cfg);
    Rng rng(derive_seed(7, "eval-model"));
    init_params(params, cfg, rng);

    const Emitter em = make_model_emitter(cfg, params, SamplerConfig{}, codec().layout(), 1);
    const ParallelSample& s = samples().front();
    EXPECT_THROW(em(s, make_prompt(TaskMode::Mt, s, codec())), InputError);
}

TEST(ModelEmitter, ChecksTheSamplerConfigUpFront) {
    ModelConfig cfg;
    cfg.vocab = 64;
    cfg.layers = 1;
    cfg.width = 16;
    cfg.heads = 2;
    cfg.ff = 16;
    Params params = make_params(cfg);
    SamplerConfig sc;
    sc.temperature = 0.0;
    EXPECT_THROW(make_model_emitter(cfg, params, sc, codec().layout(), 1), ConfigError);
}

TEST(ReportJson, CarriesOnlyTheMetricsItComputed) {
    const Emitter ref = make_reference_emitter(codec());

    Json asr;
    to_json(asr, evaluate(TaskMode::Asr, samples(), ref, codec()));
    EXPECT_EQ(asr.at("mode"), "asr");
    EXPECT_EQ(asr.at("n").get<int>(), static_cast<int>(samples().size()));
    EXPECT_TRUE(asr.contains("text_bleu"));
    EXPECT_FALSE(asr.contains("speech_bleu"));
    EXPECT_FALSE(asr.contains("speaker_preservation"));
    EXPECT_FALSE(asr.contains("slc_02"));
    ASSERT_TRUE(asr.contains("rows"));
    ASSERT_EQ(asr.at("rows").size(), samples().size());
    const Json& row = asr.at("rows").at(0);
    for (const char* key : {"id", "emitted", "parsed", "decoded", "hyp_text", "hyp_speech",
                            "hyp_duration_s"}) {
        EXPECT_TRUE(row.contains(key)) << key;
    }

    Json direct;
    to_json(direct, evaluate(TaskMode::S2stDirect, samples(), ref, codec()));
    EXPECT_EQ(direct.at("mode"), "s2st_direct");
    EXPECT_FALSE(direct.contains("text_bleu"));
    EXPECT_TRUE(direct.contains("speech_bleu"));
    EXPECT_TRUE(direct.contains("speaker_preservation"));
    EXPECT_TRUE(direct.contains("slc_02"));
    EXPECT_TRUE(direct.contains("slc_04"));
}
