#include "uniss/packing.hpp"

#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "uniss/common.hpp"

using namespace uniss;

namespace {

TrainingExample example(const std::string& id, std::size_t len, TokenId fill = 1) {
    TrainingExample ex;
    ex.id = id;
    ex.tokens.assign(len, fill);
    ex.loss_mask.assign(len, 0);
    if (len > 1) ex.loss_mask.back() = 1;
    return ex;
}

}  // namespace

TEST(Packing, FirstFitFillsEarlierGaps) {
    // 100 opens a pack; 50 does not fit next to it, so a second pack opens;
    // 20 then REVISITS the first pack rather than extending the second.
    const auto r = pack_examples({example("a", 100), example("b", 50), example("c", 20)}, 128);
    EXPECT_TRUE(r.overflow.empty());
    ASSERT_EQ(r.packs.size(), 2u);
    ASSERT_EQ(r.packs[0].segments.size(), 2u);
    EXPECT_EQ(r.packs[0].segments[0].id, "a");
    EXPECT_EQ(r.packs[0].segments[1].id, "c");
    EXPECT_EQ(r.packs[0].segments[1].start, 100u);
    EXPECT_EQ(r.packs[0].filled(), 120u);
    ASSERT_EQ(r.packs[1].segments.size(), 1u);
    EXPECT_EQ(r.packs[1].segments[0].id, "b");
    EXPECT_EQ(r.packs[1].padding(), 78u);
}

TEST(Packing, ExactFitLeavesNoPadding) {
    const auto r = pack_examples({example("a", 64), example("b", 64)}, 128);
    ASSERT_EQ(r.packs.size(), 1u);
    EXPECT_EQ(r.packs[0].padding(), 0u);
}

TEST(Packing, OversizedExamplesOverflowInsteadOfTruncating) {
    const auto r = pack_examples({example("big", 129), example("ok", 10)}, 128);
    EXPECT_EQ(r.overflow, std::vector<std::string>{"big"});
    ASSERT_EQ(r.packs.size(), 1u);
    EXPECT_EQ(r.packs[0].segments[0].id, "ok");
}

TEST(Packing, RejectsBadInput) {
    EXPECT_THROW(pack_examples({example("a", 4)}, 0), ConfigError);
    TrainingExample empty;
    empty.id = "e";
    EXPECT_THROW(pack_examples({empty}, 16), InputError);
    auto skewed = example("s", 4);
    skewed.loss_mask.pop_back();
    EXPECT_THROW(pack_examples({skewed}, 16), InputError);
}

TEST(Packing, FuzzConservesEveryExample) {
    Rng rng(77);
    for (int iter = 0; iter < 100; ++iter) {
        const int capacity = rng.range(16, 200);
        const int n = rng.range(1, 60);
        std::vector<TrainingExample> examples;
        for (int i = 0; i < n; ++i) {
            auto ex = example("ex" + std::to_string(i),
                              static_cast<std::size_t>(rng.range(1, capacity + capacity / 4)),
                              static_cast<TokenId>(rng.below(100)));
            // Distinctive content so reassembly checks catch misalignment.
            for (auto& t : ex.tokens) t = static_cast<TokenId>(rng.below(500));
            examples.push_back(std::move(ex));
        }
        const auto r = pack_examples(examples, capacity);

        std::map<std::string, TrainingExample> recovered;
        for (const auto& p : r.packs) {
            EXPECT_LE(p.filled(), static_cast<std::size_t>(capacity));
            validate_pack(p);
            for (auto& ex : unpack(p)) recovered.emplace(ex.id, std::move(ex));
        }
        std::size_t expected_kept = 0;
        for (const auto& ex : examples) {
            if (ex.tokens.size() > static_cast<std::size_t>(capacity)) {
                EXPECT_TRUE(std::find(r.overflow.begin(), r.overflow.end(), ex.id) !=
                            r.overflow.end());
                continue;
            }
            ++expected_kept;
            const auto it = recovered.find(ex.id);
            ASSERT_NE(it, recovered.end()) << ex.id;
            EXPECT_EQ(it->second.tokens, ex.tokens);
            EXPECT_EQ(it->second.loss_mask, ex.loss_mask);
        }
        EXPECT_EQ(recovered.size(), expected_kept);
    }
}

TEST(Packing, ValidatePackCatchesCorruption) {
    auto r = pack_examples({example("a", 10), example("b", 10)}, 32);
    ASSERT_EQ(r.packs.size(), 1u);
    auto p = r.packs[0];
    validate_pack(p);

    auto gap = p;
    gap.segments[1].start = 11;
    EXPECT_THROW(validate_pack(gap), InputError);

    auto short_cover = p;
    short_cover.segments.pop_back();
    EXPECT_THROW(validate_pack(short_cover), InputError);

    auto ragged = p;
    ragged.loss_mask.pop_back();
    EXPECT_THROW(validate_pack(ragged), InputError);

    auto overfull = p;
    overfull.capacity = 19;
    EXPECT_THROW(validate_pack(overfull), InputError);
}

TEST(Packing, SegmentBeginsMarkIsolationBoundaries) {
    const auto r = pack_examples({example("a", 3), example("b", 2), example("c", 4)}, 16);
    ASSERT_EQ(r.packs.size(), 1u);
    const auto begins = segment_begins(r.packs[0]);
    EXPECT_EQ(begins, (std::vector<std::size_t>{0, 0, 0, 3, 3, 5, 5, 5, 5}));
}
