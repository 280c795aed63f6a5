#include "uniss/pipeline.hpp"

#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include "uniss/codec.hpp"
#include "uniss/common.hpp"
#include "uniss/corpus.hpp"

using namespace uniss;

namespace {

const Codec& codec() {
    static Codec c;
    return c;
}

std::set<std::string> ids_of(const std::vector<ParallelSample>& samples) {
    std::set<std::string> out;
    for (const auto& s : samples) out.insert(s.id);
    return out;
}

const Discard* find_discard(const PipelineResult& r, const std::string& id) {
    for (const auto& d : r.discards)
        if (d.id == id) return &d;
    return nullptr;
}

}  // namespace

TEST(Sanitize, PassesCleanTextThrough) {
    const auto r = sanitize_translation("nm op", Direction::AtoB, codec());
    ASSERT_TRUE(r.ok);
    EXPECT_EQ(r.text, "nm op");
}

TEST(Sanitize, StripsBoilerplate) {
    auto r = sanitize_translation("Sure, here is the translation: nm op", Direction::AtoB, codec());
    ASSERT_TRUE(r.ok);
    EXPECT_EQ(r.text, "nm op");

    r = sanitize_translation("TRANSLATION:  nm", Direction::AtoB, codec());
    ASSERT_TRUE(r.ok);
    EXPECT_EQ(r.text, "nm");

    r = sanitize_translation("nm op Note: register and tone were preserved.", Direction::AtoB,
                             codec());
    ASSERT_TRUE(r.ok);
    EXPECT_EQ(r.text, "nm op");

    r = sanitize_translation("Here is the translation: nm Note: thanks", Direction::AtoB, codec());
    ASSERT_TRUE(r.ok);
    EXPECT_EQ(r.text, "nm");

    r = sanitize_translation("  nm \t op \n", Direction::AtoB, codec());
    ASSERT_TRUE(r.ok);
    EXPECT_EQ(r.text, "nm op");
}

TEST(Sanitize, ClassifiesFailures) {
    auto r = sanitize_translation("Translation:", Direction::AtoB, codec());
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.reason, "empty");

    r = sanitize_translation("nm ab", Direction::AtoB, codec());
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.reason, "mixed_language");

    r = sanitize_translation("nm x!", Direction::AtoB, codec());
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.reason, "invalid_chars");
}

TEST(Oracles, ExactAsrReadsSpokenContent) {
    const auto asr = make_exact_asr(codec());
    const auto w = codec().synthesize("ab cd", Lang::A, 3, 2, 1);
    const auto r = asr(w);
    ASSERT_TRUE(r.ok);
    EXPECT_EQ(r.text, "ab cd");
}

TEST(Oracles, NoisyAsrIsDeterministicPerWaveform) {
    NoisyAsrConfig cfg;
    cfg.seed = 42;
    cfg.word_sub_rate = 0.5;
    const auto asr1 = make_noisy_asr(codec(), Lang::A, cfg);
    const auto asr2 = make_noisy_asr(codec(), Lang::A, cfg);
    const auto w = codec().synthesize("ab cd ef gh", Lang::A, 0);
    EXPECT_EQ(asr1(w).text, asr1(w).text);
    EXPECT_EQ(asr1(w).text, asr2(w).text);

    // Padding changes the waveform key, so noise may differ, but content
    // stays in-alphabet either way.
    cfg.word_sub_rate = 1.0;
    const auto always = make_noisy_asr(codec(), Lang::A, cfg);
    const auto r = always(w);
    ASSERT_TRUE(r.ok);
    EXPECT_NE(r.text, "ab cd ef gh");
    EXPECT_TRUE(codec().is_valid_text(r.text, Lang::A));
    EXPECT_DOUBLE_EQ(error_rate("ab cd ef gh", r.text, TextUnit::Word), 1.0);

    cfg.word_sub_rate = 0.0;
    cfg.fail_rate = 1.0;
    EXPECT_FALSE(make_noisy_asr(codec(), Lang::A, cfg)(w).ok);
}

TEST(Oracles, NoisyTranslatorWrapsRecoverably) {
    NoisyTranslatorConfig cfg;
    cfg.seed = 9;
    cfg.prefix_rate = 1.0;
    cfg.note_rate = 1.0;
    const auto noisy = make_noisy_translator(codec(), Direction::AtoB, cfg);
    const std::string raw = noisy("ab cd");
    EXPECT_NE(raw, codec().translate("ab cd", Direction::AtoB));
    const auto clean = sanitize_translation(raw, Direction::AtoB, codec());
    ASSERT_TRUE(clean.ok);
    EXPECT_EQ(clean.text, codec().translate("ab cd", Direction::AtoB));

    // Leftover source words are a real failure, not recoverable wrapping.
    NoisyTranslatorConfig mixed;
    mixed.seed = 9;
    mixed.mixed_rate = 1.0;
    const auto leaky = make_noisy_translator(codec(), Direction::AtoB, mixed);
    const auto bad = sanitize_translation(leaky("ab cd"), Direction::AtoB, codec());
    EXPECT_FALSE(bad.ok);
    EXPECT_EQ(bad.reason, "mixed_language");
}

namespace {

CorpusSpec planted_spec() {
    CorpusSpec spec;
    spec.n_records = 60;
    spec.seed = 17;
    spec.defects.bad_src_wer = 4;
    spec.defects.bad_tgt_wer = 4;
    spec.defects.bad_ratio_low = 3;
    spec.defects.bad_ratio_high = 3;
    spec.defects.bad_ratio_hq = 4;
    spec.defects.oracle_fail = 2;
    return spec;
}

PipelineConfig pipe_cfg() {
    PipelineConfig cfg;
    cfg.seed = 23;
    return cfg;
}

}  // namespace

TEST(Pipeline, PlantedDefectsFailTheirOwnStageExactly) {
    const auto corpus = generate_corpus(codec(), planted_spec());
    ASSERT_EQ(corpus.records.size(), 60u);
    const auto cfg = pipe_cfg();
    const auto general =
        build_general(corpus.records, {corpus.source_asr, corpus.target_asr, {}}, codec(), cfg);

    EXPECT_EQ(ids_of(general.samples), corpus.expected_general_kept());

    auto expect_stage = [&](const std::set<std::string>& ids, const std::string& stage,
                            const std::string& reason) {
        for (const auto& id : ids) {
            const Discard* d = find_discard(general, id);
            ASSERT_NE(d, nullptr) << id;
            EXPECT_EQ(d->stage, stage) << id;
            EXPECT_EQ(d->reason, reason) << id;
        }
    };
    expect_stage(corpus.oracle_fail, "src_asr", "oracle_error");
    expect_stage(corpus.bad_src_wer, "src_wer", "wer_above_threshold");
    expect_stage(corpus.bad_ratio_general, "ratio", "outside_range");
    expect_stage(corpus.bad_tgt_wer, "tgt_wer", "wer_above_threshold");

    const auto hq = build_hq(general.samples, codec(), cfg);
    EXPECT_EQ(ids_of(hq.samples), corpus.expected_hq_kept());
    for (const auto& id : corpus.bad_ratio_hq) {
        const Discard* d = find_discard(hq, id);
        ASSERT_NE(d, nullptr) << id;
        EXPECT_EQ(d->stage, "hq_ratio") << id;
    }
}

TEST(Pipeline, StageCountsReconcile) {
    const auto corpus = generate_corpus(codec(), planted_spec());
    const auto cfg = pipe_cfg();
    const auto general =
        build_general(corpus.records, {corpus.source_asr, corpus.target_asr, {}}, codec(), cfg);

    ASSERT_EQ(general.stages.size(), general_stage_order().size());
    for (std::size_t i = 0; i < general.stages.size(); ++i) {
        const auto& st = general.stages[i];
        EXPECT_EQ(st.stage, general_stage_order()[i]);
        EXPECT_EQ(st.in, st.kept + st.discarded);
        if (i > 0) {
            EXPECT_EQ(st.in, general.stages[i - 1].kept);
        }
    }
    EXPECT_EQ(general.stages.front().in, 60);
    EXPECT_EQ(general.stages.back().kept, static_cast<int>(general.samples.size()));
    EXPECT_EQ(general.samples.size() + general.discards.size(), 60u);

    const auto hq = build_hq(general.samples, codec(), cfg);
    ASSERT_EQ(hq.stages.size(), hq_stage_order().size());
    EXPECT_EQ(hq.stages.front().in, static_cast<int>(general.samples.size()));
    EXPECT_EQ(hq.samples.size() + hq.discards.size(), general.samples.size());
}

TEST(Pipeline, KeptSamplesSatisfyTheirGates) {
    const auto corpus = generate_corpus(codec(), planted_spec());
    const auto cfg = pipe_cfg();
    const auto general =
        build_general(corpus.records, {corpus.source_asr, corpus.target_asr, {}}, codec(), cfg);

    for (const auto& s : general.samples) {
        const auto num = static_cast<std::int64_t>(s.target_waveform.text.size());
        const auto den = static_cast<std::int64_t>(s.source.waveform.text.size());
        const auto bucket = try_discretize_speed_exact(num, den, cfg.general_ratio_lo_tenths,
                                                       cfg.general_ratio_hi_tenths);
        ASSERT_TRUE(bucket.has_value()) << s.id;
        EXPECT_EQ(bucket->tenths, s.bucket.tenths) << s.id;
        EXPECT_DOUBLE_EQ(s.ratio, static_cast<double>(num) / static_cast<double>(den));
        // Target speaks the translated transcript in the source voice.
        EXPECT_EQ(codec().spoken_text(s.target_waveform), s.target_text);
        EXPECT_EQ(codec().translate(s.source.transcript, Direction::AtoB), s.target_text);
        EXPECT_EQ(s.target_waveform.speaker_id, s.source.waveform.speaker_id);
    }

    const auto hq = build_hq(general.samples, codec(), cfg);
    for (const auto& s : hq.samples) {
        EXPECT_NE(s.source.waveform.text.front(), codec().config().silence) << s.id;
        EXPECT_NE(s.source.waveform.text.back(), codec().config().silence) << s.id;
        EXPECT_NE(s.target_waveform.text.front(), codec().config().silence) << s.id;
        EXPECT_NE(s.target_waveform.text.back(), codec().config().silence) << s.id;
        const auto num = static_cast<std::int64_t>(s.target_waveform.text.size());
        const auto den = static_cast<std::int64_t>(s.source.waveform.text.size());
        const auto bucket =
            try_discretize_speed_exact(num, den, cfg.hq_ratio_lo_tenths, cfg.hq_ratio_hi_tenths);
        ASSERT_TRUE(bucket.has_value()) << s.id;
        EXPECT_EQ(bucket->tenths, s.bucket.tenths) << s.id;
    }
}

TEST(Pipeline, RunsAreDeterministic) {
    const auto corpus = generate_corpus(codec(), planted_spec());
    const auto cfg = pipe_cfg();
    const auto a =
        build_general(corpus.records, {corpus.source_asr, corpus.target_asr, {}}, codec(), cfg);
    const auto b =
        build_general(corpus.records, {corpus.source_asr, corpus.target_asr, {}}, codec(), cfg);
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        EXPECT_EQ(a.samples[i].id, b.samples[i].id);
        EXPECT_EQ(a.samples[i].target_waveform.text, b.samples[i].target_waveform.text);
        EXPECT_EQ(a.samples[i].bucket.tenths, b.samples[i].bucket.tenths);
    }
}

TEST(Pipeline, RejectsMalformedInput) {
    const auto asr = make_exact_asr(codec());
    const PipelineConfig cfg;
    SourceRecord rec{"x", Lang::A, "ab", codec().synthesize("ab", Lang::A, 0)};

    EXPECT_THROW(build_general({rec, rec}, {asr, asr, {}}, codec(), cfg), InputError);

    SourceRecord wrong_lang = rec;
    wrong_lang.id = "y";
    wrong_lang.lang = Lang::B;
    EXPECT_THROW(build_general({wrong_lang}, {asr, asr, {}}, codec(), cfg), InputError);

    SourceRecord no_transcript = rec;
    no_transcript.id = "z";
    no_transcript.transcript.clear();
    EXPECT_THROW(build_general({no_transcript}, {asr, asr, {}}, codec(), cfg), InputError);

    EXPECT_THROW(build_general({rec}, {{}, asr, {}}, codec(), cfg), ConfigError);
}

TEST(Corpus, RejectsImpossibleSpecs) {
    CorpusSpec spec;
    spec.n_records = 2;
    spec.defects.bad_src_wer = 3;
    EXPECT_THROW(generate_corpus(codec(), spec), ConfigError);
    spec = CorpusSpec{};
    spec.words_min = 1;
    EXPECT_THROW(generate_corpus(codec(), spec), ConfigError);
    spec = CorpusSpec{};
    spec.assumed_tgt_pad_min = 0;
    spec.defects.bad_ratio_high = 1;
    EXPECT_THROW(generate_corpus(codec(), spec), ConfigError);
}

TEST(Stats, HandComputedBins) {
    ParallelSample s1;
    s1.id = "s1";
    s1.source.waveform = codec().make_waveform("ab cd", 0);
    s1.target_waveform = codec().make_waveform("mn op_", 0);
    s1.ratio = 6.0 / 5.0;
    s1.bucket = SpeedBucket{12};

    ParallelSample s2;
    s2.id = "s2";
    s2.source.waveform = codec().make_waveform("abcd", 0);
    s2.target_waveform = codec().make_waveform("mnopmnop", 0);
    s2.ratio = 2.0;
    s2.bucket = SpeedBucket{20};

    const auto st = compute_stats({s1, s2});
    EXPECT_EQ(st.n_samples, 2);
    EXPECT_DOUBLE_EQ(st.mean_ratio, 1.6);
    EXPECT_EQ(st.ratio_tenth_bins.at(12), 1);
    EXPECT_EQ(st.ratio_tenth_bins.at(20), 1);
    EXPECT_EQ(st.bucket_counts.at(12), 1);
    EXPECT_EQ(st.bucket_counts.at(20), 1);
    // 0.4 s and 0.48 s land in bin 0; 0.32 s in bin 0; 0.64 s in bin 1.
    EXPECT_EQ(st.src_duration_bins.at(0), 2);
    EXPECT_EQ(st.tgt_duration_bins.at(0), 1);
    EXPECT_EQ(st.tgt_duration_bins.at(1), 1);

    EXPECT_THROW(compute_stats({s1}, 0.0), ConfigError);
}
