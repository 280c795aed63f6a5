// Stochastic decoding: temperature, repetition penalty, top-k, nucleus
// truncation, then an inverse-CDF draw.
//
// The repetition penalty covers only tokens the current generation has
// already produced, not the prompt: positive logits are divided by the
// penalty, negative ones multiplied.  Ties in the probability ordering
// resolve toward the lower token id, which keeps truncation deterministic.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "uniss/common.hpp"
#include "uniss/model.hpp"

namespace uniss {

struct SamplerConfig {
    double temperature = 0.7;
    double top_p = 0.8;
    int top_k = -1;  // -1 disables the cutoff
    double repetition_penalty = 1.1;
    int max_new_tokens = 256;

    void validate() const {
        if (!(temperature > 0)) throw ConfigError("sampler: temperature must be positive");
        if (!(top_p > 0 && top_p <= 1)) throw ConfigError("sampler: top_p must lie in (0, 1]");
        if (top_k == 0 || top_k < -1) throw ConfigError("sampler: top_k must be positive or -1");
        if (!(repetition_penalty >= 1)) throw ConfigError("sampler: repetition penalty below 1");
        if (max_new_tokens <= 0) throw ConfigError("sampler: max_new_tokens must be positive");
    }
};

// One draw from the filtered next-token distribution.  `generated` marks the
// token ids emitted so far in this continuation (size = vocab).
inline TokenId sample_token(const std::vector<double>& logits, const SamplerConfig& cfg,
                            const std::vector<std::uint8_t>& generated, Rng& rng) {
    cfg.validate();
    if (logits.empty()) throw InputError("sampler: empty logits");
    if (generated.size() != logits.size()) throw InputError("sampler: generated mask size mismatch");
    const int V = static_cast<int>(logits.size());

    std::vector<double> z(logits);
    for (int i = 0; i < V; ++i) {
        z[static_cast<std::size_t>(i)] /= cfg.temperature;
        if (generated[static_cast<std::size_t>(i)]) {
            double& l = z[static_cast<std::size_t>(i)];
            l = l > 0 ? l / cfg.repetition_penalty : l * cfg.repetition_penalty;
        }
    }

    std::vector<int> order(static_cast<std::size_t>(V));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return z[static_cast<std::size_t>(a)] > z[static_cast<std::size_t>(b)];
    });
    std::size_t keep = order.size();
    if (cfg.top_k > 0 && static_cast<std::size_t>(cfg.top_k) < keep)
        keep = static_cast<std::size_t>(cfg.top_k);

    // softmax over the survivors, in descending order
    const double mx = z[static_cast<std::size_t>(order[0])];
    std::vector<double> p(keep);
    double denom = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        p[i] = std::exp(z[static_cast<std::size_t>(order[i])] - mx);
        denom += p[i];
    }

    // nucleus: the shortest prefix whose mass reaches top_p
    std::size_t cut = keep;
    double cum = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        cum += p[i] / denom;
        if (cum >= cfg.top_p) {
            cut = i + 1;
            break;
        }
    }

    double total = 0.0;
    for (std::size_t i = 0; i < cut; ++i) total += p[i];
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < cut; ++i) {
        if (u < p[i] || i + 1 == cut) return order[i];
        u -= p[i];
    }
    return order[cut - 1];  // unreachable
}

struct GenerateResult {
    std::vector<TokenId> tokens;  // the continuation; includes `stop` when reached
    bool terminated = false;      // true when `stop` was produced
};

// Feeds `prompt` through an incremental decoder and samples until the stop
// token, the new-token cap, or the model's position budget.
inline GenerateResult generate(const ModelConfig& model_cfg, const Params& params,
                               const std::vector<TokenId>& prompt, TokenId stop,
                               const SamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    if (prompt.empty()) throw InputError("generate: empty prompt");
    if (prompt.size() > static_cast<std::size_t>(model_cfg.max_positions))
        throw InputError("generate: prompt longer than the position budget");

    Decoder dec(model_cfg, params);
    const std::vector<double>* logits = nullptr;
    for (TokenId t : prompt) logits = &dec.step(t);

    GenerateResult out;
    std::vector<std::uint8_t> generated(static_cast<std::size_t>(model_cfg.vocab), 0);
    while (true) {
        const TokenId id = sample_token(*logits, cfg, generated, rng);
        out.tokens.push_back(id);
        generated[static_cast<std::size_t>(id)] = 1;
        if (id == stop) {
            out.terminated = true;
            break;
        }
        if (out.tokens.size() >= static_cast<std::size_t>(cfg.max_new_tokens)) break;
        if (dec.position() >= model_cfg.max_positions) break;
        logits = &dec.step(id);
    }
    return out;
}

}  // namespace uniss
