#include "uniss/protocol.hpp"

#include <gtest/gtest.h>

#include "uniss/common.hpp"

using namespace uniss;

namespace {

const VocabLayout& layout() {
    static VocabLayout l{VocabConfig{}};
    return l;
}

std::vector<TokenId> speaker_codes(int start = 0) {
    std::vector<TokenId> out;
    for (int i = 0; i < kSpeakerSeqLen; ++i)
        out.push_back(layout().speaker_token((start + i) % layout().config().speaker));
    return out;
}

std::vector<TokenId> text_of(Lang l, std::initializer_list<int> idx) {
    std::vector<TokenId> out;
    for (int i : idx) out.push_back(layout().text_token(l, i));
    return out;
}

std::vector<TokenId> ling(std::initializer_list<int> idx) {
    std::vector<TokenId> out;
    for (int i : idx) out.push_back(layout().linguistic_token(i));
    return out;
}

std::vector<TokenId> sem(std::initializer_list<int> idx) {
    std::vector<TokenId> out;
    for (int i : idx) out.push_back(layout().semantic_token(i));
    return out;
}

Prompt valid_prompt(TaskMode mode, Lang lang) {
    Prompt p;
    p.mode = mode;
    p.lang = lang;
    switch (mode) {
        case TaskMode::Asr:
        case TaskMode::S2tt:
            p.speaker = speaker_codes();
            p.body = ling({0, 1, 2});
            break;
        case TaskMode::Tts:
            p.speaker = speaker_codes();
            p.body = text_of(lang, {0, 1});
            break;
        case TaskMode::Mt:
            p.body = text_of(other(lang), {0, 1});
            break;
        default:
            p.speed = SpeedBucket{12};
            p.speaker = speaker_codes();
            p.body = ling({3, 4});
            break;
    }
    return p;
}

// A well-formed emission for (mode, lang), without the prompt.
std::vector<TokenId> valid_emission(TaskMode mode, Lang lang) {
    OutputSegments segs;
    switch (mode) {
        case TaskMode::Asr:
            segs.source_text = text_of(lang, {0, 2});
            break;
        case TaskMode::S2tt:
        case TaskMode::Mt:
            segs.target_text = text_of(lang, {1, 3});
            break;
        case TaskMode::Tts:
        case TaskMode::S2stDirect:
            segs.semantic = sem({5, 6, 7});
            break;
        case TaskMode::S2stPerformance:
            segs.target_text = text_of(lang, {1});
            segs.semantic = sem({8, 9});
            break;
        case TaskMode::S2stQuality:
            segs.source_text = text_of(other(lang), {0});
            segs.target_text = text_of(lang, {2, 4});
            segs.semantic = sem({10});
            break;
    }
    return assemble_target(mode, lang, segs, layout());
}

constexpr TaskMode kAllModes[] = {TaskMode::Asr,  TaskMode::S2tt,
                                  TaskMode::Tts,  TaskMode::Mt,
                                  TaskMode::S2stQuality, TaskMode::S2stPerformance,
                                  TaskMode::S2stDirect};

}  // namespace

// Hand-checkable shapes: MT is the shortest prompt (no speaker, no speed).
TEST(Prompt, HandSizedExamples) {
    Prompt mt;
    mt.mode = TaskMode::Mt;
    mt.lang = Lang::B;  // target
    mt.body = text_of(Lang::A, {0, 1, 2, 3});
    const auto mt_tokens = assemble_prompt(mt, layout());
    // task + lang + 4 body + BOT
    EXPECT_EQ(mt_tokens.size(), 7u);
    EXPECT_EQ(mt_tokens[0], layout().control_token(Control::TaskMt));
    EXPECT_EQ(mt_tokens[1], layout().control_token(Control::LangB));
    EXPECT_EQ(mt_tokens.back(), layout().control_token(Control::Bot));

    Prompt q;
    q.mode = TaskMode::S2stQuality;
    q.lang = Lang::B;
    q.speed = SpeedBucket{10};
    q.speaker = speaker_codes(3);
    q.body = ling({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const auto q_tokens = assemble_prompt(q, layout());
    // task + lang + speed + 32 speaker + 10 body + BOT
    EXPECT_EQ(q_tokens.size(), 46u);
    EXPECT_EQ(q_tokens[2], layout().speed_token(SpeedBucket{10}));
    EXPECT_EQ(q_tokens[3], layout().speaker_token(3));
}

TEST(Prompt, ShapeViolations) {
    // Speed is for the speech translation modes only, and mandatory there.
    auto p = valid_prompt(TaskMode::Asr, Lang::A);
    p.speed = SpeedBucket{10};
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);
    p = valid_prompt(TaskMode::S2stDirect, Lang::B);
    p.speed.reset();
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);
    p = valid_prompt(TaskMode::S2stDirect, Lang::B);
    p.speed = SpeedBucket{3};
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);

    // Speaker codes: exactly 32 where required, none for MT.
    p = valid_prompt(TaskMode::Asr, Lang::A);
    p.speaker.pop_back();
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);
    p = valid_prompt(TaskMode::Asr, Lang::A);
    p.speaker[0] = layout().semantic_token(0);
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);
    p = valid_prompt(TaskMode::Mt, Lang::B);
    p.speaker = speaker_codes();
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);

    // Body: nonempty and of the task's kind.
    p = valid_prompt(TaskMode::S2tt, Lang::B);
    p.body.clear();
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);
    p = valid_prompt(TaskMode::S2tt, Lang::B);
    p.body.push_back(layout().text_token(Lang::B, 0));
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);
    p = valid_prompt(TaskMode::Tts, Lang::A);
    p.body.push_back(layout().text_token(Lang::B, 0));  // wrong language text
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);
    p = valid_prompt(TaskMode::Mt, Lang::B);
    p.body.push_back(layout().text_token(Lang::B, 0));  // body must be the source side
    EXPECT_THROW(assemble_prompt(p, layout()), PromptShapeError);
}

TEST(Parse, RoundTripsEveryMode) {
    for (TaskMode mode : kAllModes) {
        for (Lang lang : {Lang::A, Lang::B}) {
            const auto emission = valid_emission(mode, lang);
            const auto parse = parse_output(mode, lang, emission, layout());
            EXPECT_TRUE(parse.terminated);
            OutputSegments back;
            back.source_text = parse.source_text;
            back.target_text = parse.target_text;
            back.semantic = parse.semantic;
            EXPECT_EQ(assemble_target(mode, lang, back, layout()), emission) << task_name(mode);
        }
    }
}

TEST(Parse, QualitySegmentsLandInTheRightFields) {
    const auto emission = valid_emission(TaskMode::S2stQuality, Lang::B);
    const auto parse = parse_output(TaskMode::S2stQuality, Lang::B, emission, layout());
    ASSERT_TRUE(parse.source_text && parse.target_text && parse.semantic);
    EXPECT_EQ(*parse.source_text, text_of(Lang::A, {0}));
    EXPECT_EQ(*parse.target_text, text_of(Lang::B, {2, 4}));
    EXPECT_EQ(*parse.semantic, sem({10}));
}

TEST(Parse, TruncationKeepsThePrefix) {
    auto emission = valid_emission(TaskMode::S2stQuality, Lang::B);
    emission.resize(2);  // source text + first target token, no semantic, no EOD
    const auto parse = parse_output(TaskMode::S2stQuality, Lang::B, emission, layout());
    EXPECT_FALSE(parse.terminated);
    ASSERT_TRUE(parse.source_text);
    ASSERT_TRUE(parse.target_text);
    EXPECT_FALSE(parse.semantic.has_value());
    EXPECT_EQ(parse.target_text->size(), 1u);

    const auto empty = parse_output(TaskMode::Asr, Lang::A, {}, layout());
    EXPECT_FALSE(empty.terminated);
    EXPECT_FALSE(empty.source_text.has_value());
}

TEST(Parse, Malformations) {
    const TokenId eod = layout().control_token(Control::Eod);
    // Terminator before the grammar is satisfied.
    EXPECT_THROW(parse_output(TaskMode::Asr, Lang::A, {eod}, layout()), MalformedOutput);
    auto perf = valid_emission(TaskMode::S2stPerformance, Lang::B);
    std::vector<TokenId> early(perf.begin(), perf.begin() + 1);
    early.push_back(eod);  // text, EOD: semantic never arrived
    EXPECT_THROW(parse_output(TaskMode::S2stPerformance, Lang::B, early, layout()), MalformedOutput);

    // Tokens after the terminator.
    auto trailing = valid_emission(TaskMode::Asr, Lang::A);
    trailing.push_back(layout().text_token(Lang::A, 0));
    EXPECT_THROW(parse_output(TaskMode::Asr, Lang::A, trailing, layout()), MalformedOutput);

    // Ids that fit no segment: controls, speaker codes, out-of-vocab.
    EXPECT_THROW(parse_output(TaskMode::Asr, Lang::A, {layout().control_token(Control::Bot)}, layout()),
                 MalformedOutput);
    EXPECT_THROW(parse_output(TaskMode::Asr, Lang::A, {layout().speaker_token(0)}, layout()),
                 MalformedOutput);
    EXPECT_THROW(parse_output(TaskMode::Asr, Lang::A, {layout().total_size()}, layout()),
                 MalformedOutput);

    // Segment order cannot run backwards.
    auto q = valid_emission(TaskMode::S2stQuality, Lang::B);
    q.insert(q.end() - 1, layout().text_token(Lang::B, 0));  // text after semantic began
    EXPECT_THROW(parse_output(TaskMode::S2stQuality, Lang::B, q, layout()), MalformedOutput);
}

TEST(Target, RejectsWrongSegmentSets) {
    OutputSegments segs;
    segs.semantic = sem({0});
    EXPECT_THROW(assemble_target(TaskMode::Asr, Lang::A, segs, layout()), PromptShapeError);
    segs.source_text = text_of(Lang::A, {0});
    EXPECT_THROW(assemble_target(TaskMode::Asr, Lang::A, segs, layout()), PromptShapeError);

    OutputSegments empty_seg;
    empty_seg.source_text = std::vector<TokenId>{};
    EXPECT_THROW(assemble_target(TaskMode::Asr, Lang::A, empty_seg, layout()), PromptShapeError);

    OutputSegments wrong_kind;
    wrong_kind.source_text = sem({1});
    EXPECT_THROW(assemble_target(TaskMode::Asr, Lang::A, wrong_kind, layout()), PromptShapeError);
}

// Emissions of some tasks are indistinguishable by token kinds alone: a lone
// text segment could have come from ASR, S2TT, or MT; a lone semantic stream
// from TTS or Direct.  The task control token in the prompt is what separates
// them.  This table pins the exact confusion structure so it cannot drift.
TEST(Parse, CrossModeAcceptance) {
    auto accepts = [&](TaskMode parse_as, TaskMode emitted) {
        try {
            return parse_output(parse_as, Lang::B, valid_emission(emitted, Lang::B), layout())
                .terminated;
        } catch (const MalformedOutput&) {
            return false;
        }
    };

    auto same_group = [](TaskMode a, TaskMode b) {
        auto group = [](TaskMode m) {
            switch (m) {
                case TaskMode::Asr:
                case TaskMode::S2tt:
                case TaskMode::Mt: return 0;       // one text segment in the prompt language
                case TaskMode::Tts:
                case TaskMode::S2stDirect: return 1;  // one semantic segment
                case TaskMode::S2stPerformance: return 2;
                case TaskMode::S2stQuality: return 3;
            }
            return -1;
        };
        return group(a) == group(b);
    };

    for (TaskMode parse_as : kAllModes)
        for (TaskMode emitted : kAllModes)
            EXPECT_EQ(accepts(parse_as, emitted), same_group(parse_as, emitted))
                << task_name(parse_as) << " reading " << task_name(emitted);
}

TEST(Parse, LanguageMismatchRejectsText) {
    const auto emission = valid_emission(TaskMode::S2tt, Lang::B);
    EXPECT_THROW(parse_output(TaskMode::S2tt, Lang::A, emission, layout()), MalformedOutput);
}

// Randomized round trip over all modes; the acceptance gate runs the full-size
// version of this with 10,000 pairs.
TEST(Parse, FuzzRoundTrip) {
    Rng rng(101);
    for (int iter = 0; iter < 500; ++iter) {
        const TaskMode mode = kAllModes[rng.below(7)];
        const Lang lang = rng.below(2) ? Lang::B : Lang::A;
        auto rand_text = [&](Lang l) {
            std::vector<TokenId> v;
            const int n = rng.range(1, 12);
            for (int i = 0; i < n; ++i)
                v.push_back(layout().text_token(l, rng.range(0, layout().text_size(l) - 1)));
            return v;
        };
        auto rand_sem = [&] {
            std::vector<TokenId> v;
            const int n = rng.range(1, 30);
            for (int i = 0; i < n; ++i)
                v.push_back(layout().semantic_token(rng.range(0, layout().config().semantic - 1)));
            return v;
        };
        OutputSegments segs;
        switch (mode) {
            case TaskMode::Asr: segs.source_text = rand_text(lang); break;
            case TaskMode::S2tt:
            case TaskMode::Mt: segs.target_text = rand_text(lang); break;
            case TaskMode::Tts:
            case TaskMode::S2stDirect: segs.semantic = rand_sem(); break;
            case TaskMode::S2stPerformance:
                segs.target_text = rand_text(lang);
                segs.semantic = rand_sem();
                break;
            case TaskMode::S2stQuality:
                segs.source_text = rand_text(other(lang));
                segs.target_text = rand_text(lang);
                segs.semantic = rand_sem();
                break;
        }
        const auto emission = assemble_target(mode, lang, segs, layout());
        const auto parse = parse_output(mode, lang, emission, layout());
        ASSERT_TRUE(parse.terminated);
        OutputSegments back{parse.source_text, parse.target_text, parse.semantic};
        ASSERT_EQ(assemble_target(mode, lang, back, layout()), emission);
    }
}
