// First-fit packing of training examples into fixed-capacity sequences.
//
// Examples are never split.  An arriving example goes into the first open
// pack that still has room; packs stay open for the whole run, so a later
// short example can fill a gap an earlier long one left behind.  Examples
// longer than the capacity are reported as overflow, not truncated.
#pragma once

#include <string>
#include <vector>

#include "uniss/common.hpp"
#include "uniss/vocab.hpp"

namespace uniss {

struct TrainingExample {
    std::string id;
    TaskMode task = TaskMode::Asr;
    std::vector<TokenId> tokens;          // prompt + emission, BOT and EOD included
    std::vector<std::uint8_t> loss_mask;  // 1 on supervised (emission) positions
};

struct PackedSegment {
    std::string id;
    TaskMode task = TaskMode::Asr;
    std::size_t start = 0;
    std::size_t length = 0;
};

struct PackedSequence {
    int capacity = 0;
    std::vector<TokenId> tokens;          // filled prefix; the tail is implicit padding
    std::vector<std::uint8_t> loss_mask;
    std::vector<PackedSegment> segments;

    std::size_t filled() const { return tokens.size(); }
    std::size_t padding() const { return static_cast<std::size_t>(capacity) - tokens.size(); }
};

struct PackingResult {
    std::vector<PackedSequence> packs;
    std::vector<std::string> overflow;  // ids of examples longer than the capacity
};

inline void validate_example(const TrainingExample& ex) {
    if (ex.tokens.empty()) throw InputError("example " + ex.id + " has no tokens");
    if (ex.tokens.size() != ex.loss_mask.size())
        throw InputError("example " + ex.id + " has mismatched token/mask lengths");
}

inline PackingResult pack_examples(const std::vector<TrainingExample>& examples, int capacity) {
    if (capacity <= 0) throw ConfigError("pack capacity must be positive");
    PackingResult result;
    for (const auto& ex : examples) {
        validate_example(ex);
        if (ex.tokens.size() > static_cast<std::size_t>(capacity)) {
            result.overflow.push_back(ex.id);
            continue;
        }
        PackedSequence* home = nullptr;
        for (auto& p : result.packs) {
            if (p.padding() >= ex.tokens.size()) {
                home = &p;
                break;
            }
        }
        if (!home) {
            result.packs.push_back(PackedSequence{capacity, {}, {}, {}});
            home = &result.packs.back();
        }
        home->segments.push_back({ex.id, ex.task, home->tokens.size(), ex.tokens.size()});
        home->tokens.insert(home->tokens.end(), ex.tokens.begin(), ex.tokens.end());
        home->loss_mask.insert(home->loss_mask.end(), ex.loss_mask.begin(), ex.loss_mask.end());
    }
    return result;
}

inline void validate_pack(const PackedSequence& p) {
    if (p.capacity <= 0 || p.tokens.size() > static_cast<std::size_t>(p.capacity) ||
        p.tokens.size() != p.loss_mask.size())
        throw InputError("malformed pack");
    std::size_t at = 0;
    for (const auto& seg : p.segments) {
        if (seg.start != at || seg.length == 0) throw InputError("pack segments do not tile the prefix");
        at += seg.length;
    }
    if (at != p.tokens.size()) throw InputError("pack segments do not cover the filled prefix");
}

inline std::vector<TrainingExample> unpack(const PackedSequence& p) {
    validate_pack(p);
    std::vector<TrainingExample> out;
    for (const auto& seg : p.segments) {
        TrainingExample ex;
        ex.id = seg.id;
        ex.task = seg.task;
        ex.tokens.assign(p.tokens.begin() + static_cast<std::ptrdiff_t>(seg.start),
                         p.tokens.begin() + static_cast<std::ptrdiff_t>(seg.start + seg.length));
        ex.loss_mask.assign(p.loss_mask.begin() + static_cast<std::ptrdiff_t>(seg.start),
                            p.loss_mask.begin() + static_cast<std::ptrdiff_t>(seg.start + seg.length));
        out.push_back(std::move(ex));
    }
    return out;
}

// segment_begin[i] = first position that position i may attend to.  Attention
// never crosses a segment boundary, which is what keeps co-packed examples
// invisible to each other.
inline std::vector<std::size_t> segment_begins(const PackedSequence& p) {
    validate_pack(p);
    std::vector<std::size_t> begins(p.tokens.size());
    for (const auto& seg : p.segments)
        for (std::size_t i = 0; i < seg.length; ++i) begins[seg.start + i] = seg.start;
    return begins;
}

}  // namespace uniss
