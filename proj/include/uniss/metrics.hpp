// Text-level objective metrics: corpus BLEU, word/char error rate, and
// speech-length compliance.
//
// BLEU follows the standard corpus formulation: clipped n-gram precisions
// pooled over the whole corpus for n = 1..4, geometric mean, brevity penalty
// exp(1 - r/c) when the hypothesis side is shorter.  No smoothing: any empty
// precision bucket zeroes the score.  Identical corpora score exactly 100.
#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uniss/common.hpp"

namespace uniss {

enum class TextUnit { Word, Char };

inline const char* text_unit_name(TextUnit u) { return u == TextUnit::Word ? "word" : "char"; }

inline TextUnit text_unit_from_name(const std::string& s) {
    if (s == "word") return TextUnit::Word;
    if (s == "char") return TextUnit::Char;
    throw ConfigError("unknown text unit: " + s);
}

// Case-folds, collapses runs of whitespace, and splits into scoring units.
// Char mode drops the spaces entirely.
inline std::vector<std::string> split_units(const std::string& text, TextUnit unit) {
    std::string norm;
    norm.reserve(text.size());
    bool in_space = true;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!in_space) norm += ' ';
            in_space = true;
        } else {
            norm += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            in_space = false;
        }
    }
    while (!norm.empty() && norm.back() == ' ') norm.pop_back();

    std::vector<std::string> units;
    if (unit == TextUnit::Word) {
        std::size_t i = 0;
        while (i < norm.size()) {
            std::size_t j = norm.find(' ', i);
            if (j == std::string::npos) j = norm.size();
            units.push_back(norm.substr(i, j - i));
            i = j + 1;
        }
    } else {
        for (char c : norm)
            if (c != ' ') units.emplace_back(1, c);
    }
    return units;
}

namespace detail {

inline std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& units, int n) {
    std::unordered_map<std::string, int> counts;
    if (static_cast<int>(units.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= units.size(); ++i) {
        std::string key;
        for (int k = 0; k < n; ++k) {
            if (k) key += '\x1f';
            key += units[i + static_cast<std::size_t>(k)];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace detail

inline constexpr int kBleuMaxOrder = 4;

// Corpus BLEU with a single reference per segment, on a 0..100 scale.
inline double corpus_bleu(const std::vector<std::string>& hypotheses,
                          const std::vector<std::string>& references, TextUnit unit) {
    if (hypotheses.empty()) throw InputError("corpus_bleu: empty corpus");
    if (hypotheses.size() != references.size())
        throw InputError("corpus_bleu: hypothesis/reference count mismatch");

    long long c = 0, r = 0;
    long long matched[kBleuMaxOrder] = {0}, total[kBleuMaxOrder] = {0};
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto hyp = split_units(hypotheses[i], unit);
        const auto ref = split_units(references[i], unit);
        c += static_cast<long long>(hyp.size());
        r += static_cast<long long>(ref.size());
        for (int n = 1; n <= kBleuMaxOrder; ++n) {
            const auto hc = detail::ngram_counts(hyp, n);
            const auto rc = detail::ngram_counts(ref, n);
            for (const auto& [key, count] : hc) {
                const auto it = rc.find(key);
                matched[n - 1] += std::min(count, it == rc.end() ? 0 : it->second);
                total[n - 1] += count;
            }
        }
    }

    if (c == 0) return 0.0;
    double log_prec = 0.0;
    for (int n = 0; n < kBleuMaxOrder; ++n) {
        if (matched[n] == 0) return 0.0;
        log_prec += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    }
    const double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    return bp * std::exp(log_prec / kBleuMaxOrder) * 100.0;
}

// Edit distance over units divided by reference length.  Exceeds 1 when the
// hypothesis is much longer than the reference.
inline double error_rate(const std::string& reference, const std::string& hypothesis, TextUnit unit) {
    const auto ref = split_units(reference, unit);
    const auto hyp = split_units(hypothesis, unit);
    if (ref.empty()) throw InputError("error_rate: empty reference");
    std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
    for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= ref.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= hyp.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[hyp.size()]) / static_cast<double>(ref.size());
}

// One source/target duration pair is compliant at tolerance `tol` when the
// target deviates from the source by at most tol relatively (inclusive).
inline bool length_compliant(double src_duration, double tgt_duration, double tol) {
    if (!(src_duration > 0.0)) throw InputError("length_compliant: source duration must be positive");
    if (!(tgt_duration >= 0.0)) throw InputError("length_compliant: negative target duration");
    if (!(tol >= 0.0)) throw OutOfRange("length_compliant: negative tolerance");
    return std::fabs(tgt_duration / src_duration - 1.0) <= tol;
}

// Fraction of pairs whose target duration stays within the tolerance band.
inline double speech_length_compliance(const std::vector<std::pair<double, double>>& src_tgt,
                                       double tol) {
    if (src_tgt.empty()) throw InputError("speech_length_compliance: empty corpus");
    std::size_t ok = 0;
    for (const auto& [s, t] : src_tgt)
        if (length_compliant(s, t, tol)) ++ok;
    return static_cast<double>(ok) / static_cast<double>(src_tgt.size());
}

}  // namespace uniss
