// A small decoder-only transformer in plain double precision.
//
// Pre-norm blocks, rotary position encoding on q/k, exact-erf GELU, untied
// output head, explicit backward pass.  No BLAS, no threads: every reduction
// runs in a fixed order, so a given (params, batch) pair produces the same
// bits on every run, and the incremental decoder reproduces the batched
// forward pass exactly (the kernels iterate rows outermost, so row t sees
// identical arithmetic whether computed alone or in a batch).
//
// Positions are segment-relative: token i in a packed sequence sits at
// position i - segment_begin(i) and attends only within its own segment.
// A sequence therefore computes identically wherever it lands in a pack,
// and generation (one segment starting at 0) matches training bit for bit.
#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include "uniss/common.hpp"
#include "uniss/packing.hpp"
#include "uniss/vocab.hpp"

namespace uniss {

struct ModelConfig {
    int vocab = 0;
    int layers = 2;
    int width = 128;
    int heads = 4;
    int ff = 512;
    int max_positions = 512;
    double init_std = 0.02;
    double rope_base = 10000.0;
    double ln_eps = 1e-5;

    int head_dim() const { return width / heads; }

    void validate() const {
        if (vocab <= 0) throw ConfigError("model: vocab must be positive");
        if (layers <= 0 || width <= 0 || heads <= 0 || ff <= 0 || max_positions <= 0)
            throw ConfigError("model: all dimensions must be positive");
        if (width % heads != 0) throw ConfigError("model: width must divide into heads");
        if (head_dim() % 2 != 0) throw ConfigError("model: head dim must be even for rotation");
        if (!(init_std > 0) || !(rope_base > 1) || !(ln_eps > 0))
            throw ConfigError("model: bad numeric settings");
    }
};

enum class InitKind { Zero, One, Normal };

struct Tensor {
    std::string name;
    int rows = 0, cols = 1;
    InitKind init = InitKind::Zero;
    std::vector<double> v;

    std::size_t size() const { return v.size(); }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
};

// Named parameter set with a fixed tensor order.  Gradients and optimizer
// moments reuse the same structure.
struct Params {
    std::vector<Tensor> tensors;
    std::unordered_map<std::string, std::size_t> index;

    Tensor& add(const std::string& name, int rows, int cols, InitKind init) {
        index[name] = tensors.size();
        tensors.push_back({name, rows, cols, init,
                           std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0)});
        return tensors.back();
    }

    Tensor& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("no such tensor: " + name);
        return tensors[it->second];
    }
    const Tensor& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("no such tensor: " + name);
        return tensors[it->second];
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }

    void zero() {
        for (auto& t : tensors) std::fill(t.v.begin(), t.v.end(), 0.0);
    }
};

inline Params make_params(const ModelConfig& cfg) {
    cfg.validate();
    Params p;
    const int d = cfg.width, V = cfg.vocab, F = cfg.ff;
    p.add("tok_emb", V, d, InitKind::Normal);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string pre = "l" + std::to_string(l) + ".";
        p.add(pre + "ln1.g", d, 1, InitKind::One);
        p.add(pre + "ln1.b", d, 1, InitKind::Zero);
        p.add(pre + "attn.wq", d, d, InitKind::Normal);
        p.add(pre + "attn.bq", d, 1, InitKind::Zero);
        p.add(pre + "attn.wk", d, d, InitKind::Normal);
        p.add(pre + "attn.bk", d, 1, InitKind::Zero);
        p.add(pre + "attn.wv", d, d, InitKind::Normal);
        p.add(pre + "attn.bv", d, 1, InitKind::Zero);
        p.add(pre + "attn.wo", d, d, InitKind::Normal);
        p.add(pre + "attn.bo", d, 1, InitKind::Zero);
        p.add(pre + "ln2.g", d, 1, InitKind::One);
        p.add(pre + "ln2.b", d, 1, InitKind::Zero);
        p.add(pre + "mlp.w1", d, F, InitKind::Normal);
        p.add(pre + "mlp.b1", F, 1, InitKind::Zero);
        p.add(pre + "mlp.w2", F, d, InitKind::Normal);
        p.add(pre + "mlp.b2", d, 1, InitKind::Zero);
    }
    p.add("lnf.g", d, 1, InitKind::One);
    p.add("lnf.b", d, 1, InitKind::Zero);
    p.add("head.w", d, V, InitKind::Normal);
    p.add("head.b", V, 1, InitKind::Zero);
    return p;
}

inline void init_params(Params& p, const ModelConfig& cfg, Rng& rng) {
    for (auto& t : p.tensors) {
        switch (t.init) {
            case InitKind::Zero: std::fill(t.v.begin(), t.v.end(), 0.0); break;
            case InitKind::One: std::fill(t.v.begin(), t.v.end(), 1.0); break;
            case InitKind::Normal:
                for (double& x : t.v) x = rng.normal() * cfg.init_std;
                break;
        }
    }
}

inline std::size_t param_count(const ModelConfig& cfg) {
    const auto d = static_cast<std::size_t>(cfg.width);
    const auto V = static_cast<std::size_t>(cfg.vocab);
    const auto F = static_cast<std::size_t>(cfg.ff);
    const std::size_t per_layer = 2 * d              // ln1
                                  + 4 * (d * d + d)  // q, k, v, o projections
                                  + 2 * d            // ln2
                                  + d * F + F + F * d + d;
    return V * d + static_cast<std::size_t>(cfg.layers) * per_layer + 2 * d + d * V + V;
}

// --- kernels -----------------------------------------------------------------
// One accumulation order per shape; the batched forward, the backward, and
// the incremental decoder all go through these.

namespace kern {

// C[M,N] += A[M,K] * B[K,N]
inline void matmul_acc(const double* A, const double* B, double* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * K;
        double* c = C + static_cast<std::size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const double av = a[k];
            const double* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// W[K,N] += X[M,K]^T * dY[M,N]
inline void matmul_at_b_acc(const double* X, const double* dY, double* W, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const double* x = X + static_cast<std::size_t>(m) * K;
        const double* dy = dY + static_cast<std::size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const double xv = x[k];
            double* w = W + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) w[j] += xv * dy[j];
        }
    }
}

// dX[M,K] += dY[M,N] * B[K,N]^T
inline void matmul_a_bt_acc(const double* dY, const double* B, double* dX, int M, int N, int K) {
    for (int m = 0; m < M; ++m) {
        const double* dy = dY + static_cast<std::size_t>(m) * N;
        double* dx = dX + static_cast<std::size_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            const double* b = B + static_cast<std::size_t>(k) * N;
            double acc = 0.0;
            for (int j = 0; j < N; ++j) acc += dy[j] * b[j];
            dx[k] += acc;
        }
    }
}

inline void add_bias_rows(double* Y, const double* b, int M, int N) {
    for (int i = 0; i < M; ++i) {
        double* y = Y + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) y[j] += b[j];
    }
}

inline void bias_grad_acc(const double* dY, double* db, int M, int N) {
    for (int i = 0; i < M; ++i) {
        const double* dy = dY + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) db[j] += dy[j];
    }
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0x1.6a09e667f3bcdp-1)); }

inline double gelu_grad(double x) {
    // d/dx [x * Phi(x)] = Phi(x) + x * phi(x)
    const double phi = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    return 0.5 * (1.0 + std::erf(x * 0x1.6a09e667f3bcdp-1)) + x * phi;
}

// y = g * (x - mu) * rstd + b, per row; xhat is cached for the backward pass.
inline void layernorm_rows(const double* X, const double* g, const double* b, double* Y,
                           double* Xhat, double* rstd_out, int M, int N, double eps) {
    for (int i = 0; i < M; ++i) {
        const double* x = X + static_cast<std::size_t>(i) * N;
        double* y = Y + static_cast<std::size_t>(i) * N;
        double* xh = Xhat + static_cast<std::size_t>(i) * N;
        double mu = 0.0;
        for (int j = 0; j < N; ++j) mu += x[j];
        mu /= N;
        double var = 0.0;
        for (int j = 0; j < N; ++j) {
            const double c = x[j] - mu;
            var += c * c;
        }
        var /= N;
        const double rstd = 1.0 / std::sqrt(var + eps);
        rstd_out[i] = rstd;
        for (int j = 0; j < N; ++j) {
            xh[j] = (x[j] - mu) * rstd;
            y[j] = g[j] * xh[j] + b[j];
        }
    }
}

inline void layernorm_backward_rows(const double* dY, const double* Xhat, const double* rstd,
                                    const double* g, double* dX, double* dg, double* db, int M,
                                    int N) {
    for (int i = 0; i < M; ++i) {
        const double* dy = dY + static_cast<std::size_t>(i) * N;
        const double* xh = Xhat + static_cast<std::size_t>(i) * N;
        double* dx = dX + static_cast<std::size_t>(i) * N;
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < N; ++j) {
            const double dxh = dy[j] * g[j];
            m1 += dxh;
            m2 += dxh * xh[j];
        }
        m1 /= N;
        m2 /= N;
        for (int j = 0; j < N; ++j) {
            const double dxh = dy[j] * g[j];
            dx[j] += (dxh - m1 - xh[j] * m2) * rstd[i];
            dg[j] += dy[j] * xh[j];
            db[j] += dy[j];
        }
    }
}

// In-place rotary encoding of one head row (hd even): pairs (2m, 2m+1) rotate
// by pos * base^(-2m/hd).  `sign` = -1 undoes a rotation (used in backward).
inline void rope_row(double* q, int hd, int pos, double base, double sign) {
    for (int m = 0; m < hd / 2; ++m) {
        const double theta = static_cast<double>(pos) * std::pow(base, -2.0 * m / hd);
        const double c = std::cos(theta), s = std::sin(theta) * sign;
        const double a = q[2 * m], b = q[2 * m + 1];
        q[2 * m] = a * c - b * s;
        q[2 * m + 1] = a * s + b * c;
    }
}

}  // namespace kern

// --- forward / backward ------------------------------------------------------

struct PackView {
    const std::vector<TokenId>* tokens = nullptr;
    const std::vector<std::uint8_t>* mask = nullptr;
    const std::vector<std::size_t>* begins = nullptr;

    PackView() = default;
    PackView(const std::vector<TokenId>& t, const std::vector<std::uint8_t>& m,
             const std::vector<std::size_t>& b)
        : tokens(&t), mask(&m), begins(&b) {}
};

struct LossResult {
    double loss = 0.0;
    long long supervised = 0;
};

namespace detail_model {

struct LayerRefs {
    const double *ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    const double *ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
};

inline LayerRefs layer_refs(const Params& p, int l) {
    const std::string pre = "l" + std::to_string(l) + ".";
    return {p.at(pre + "ln1.g").data(), p.at(pre + "ln1.b").data(), p.at(pre + "attn.wq").data(),
            p.at(pre + "attn.bq").data(), p.at(pre + "attn.wk").data(), p.at(pre + "attn.bk").data(),
            p.at(pre + "attn.wv").data(), p.at(pre + "attn.bv").data(), p.at(pre + "attn.wo").data(),
            p.at(pre + "attn.bo").data(), p.at(pre + "ln2.g").data(), p.at(pre + "ln2.b").data(),
            p.at(pre + "mlp.w1").data(), p.at(pre + "mlp.b1").data(), p.at(pre + "mlp.w2").data(),
            p.at(pre + "mlp.b2").data()};
}

struct LayerCache {
    std::vector<double> x_in, xhat1, rstd1, a;   // pre-attention norm
    std::vector<double> q, k, v;                 // post-rotation q/k
    std::vector<double> probs;                   // ragged softmax rows, all heads
    std::vector<std::size_t> prob_off;           // offset of row (t * H + h)
    std::vector<double> ctx;                     // concatenated head outputs
    std::vector<double> x_mid, xhat2, rstd2, b;  // post-attention norm
    std::vector<double> u, g;                    // mlp pre/post activation
};

// The transformer stack over one packed sequence.  On return `x` holds the
// final hidden rows (pre final-norm) and `caches` everything backward needs.
inline void run_stack(const ModelConfig& cfg, const Params& params,
                      const std::vector<TokenId>& tokens, const std::vector<std::size_t>& begins,
                      std::vector<LayerCache>& caches, std::vector<double>& x) {
    const int d = cfg.width, H = cfg.heads, hd = cfg.head_dim(), F = cfg.ff;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const int T = static_cast<int>(tokens.size());
    const std::size_t Td = static_cast<std::size_t>(T) * d;
    const Tensor& emb = params.at("tok_emb");

    x.resize(Td);
    for (int t = 0; t < T; ++t)
        std::memcpy(&x[static_cast<std::size_t>(t) * d],
                    emb.data() + static_cast<std::size_t>(tokens[static_cast<std::size_t>(t)]) * d,
                    sizeof(double) * static_cast<std::size_t>(d));

    caches.resize(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
        auto R = layer_refs(params, l);
        auto& C = caches[static_cast<std::size_t>(l)];
        C.x_in = x;
        C.xhat1.resize(Td);
        C.rstd1.resize(static_cast<std::size_t>(T));
        C.a.resize(Td);
        kern::layernorm_rows(C.x_in.data(), R.ln1_g, R.ln1_b, C.a.data(), C.xhat1.data(),
                             C.rstd1.data(), T, d, cfg.ln_eps);

        C.q.assign(Td, 0.0);
        C.k.assign(Td, 0.0);
        C.v.assign(Td, 0.0);
        kern::matmul_acc(C.a.data(), R.wq, C.q.data(), T, d, d);
        kern::add_bias_rows(C.q.data(), R.bq, T, d);
        kern::matmul_acc(C.a.data(), R.wk, C.k.data(), T, d, d);
        kern::add_bias_rows(C.k.data(), R.bk, T, d);
        kern::matmul_acc(C.a.data(), R.wv, C.v.data(), T, d, d);
        kern::add_bias_rows(C.v.data(), R.bv, T, d);
        for (int t = 0; t < T; ++t) {
            const int pos = t - static_cast<int>(begins[static_cast<std::size_t>(t)]);
            for (int h = 0; h < H; ++h) {
                kern::rope_row(&C.q[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(h) * hd],
                               hd, pos, cfg.rope_base, 1.0);
                kern::rope_row(&C.k[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(h) * hd],
                               hd, pos, cfg.rope_base, 1.0);
            }
        }

        C.prob_off.assign(static_cast<std::size_t>(T) * H + 1, 0);
        std::size_t total = 0;
        for (int t = 0; t < T; ++t) {
            const std::size_t span = static_cast<std::size_t>(t) - begins[static_cast<std::size_t>(t)] + 1;
            for (int h = 0; h < H; ++h) {
                C.prob_off[static_cast<std::size_t>(t) * H + static_cast<std::size_t>(h)] = total;
                total += span;
            }
        }
        C.prob_off[static_cast<std::size_t>(T) * H] = total;
        C.probs.resize(total);
        C.ctx.assign(Td, 0.0);

        for (int t = 0; t < T; ++t) {
            const std::size_t b0 = begins[static_cast<std::size_t>(t)];
            const std::size_t span = static_cast<std::size_t>(t) - b0 + 1;
            for (int h = 0; h < H; ++h) {
                const double* qrow = &C.q[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(h) * hd];
                double* prow = &C.probs[C.prob_off[static_cast<std::size_t>(t) * H + static_cast<std::size_t>(h)]];
                double mx = -1e300;
                for (std::size_t j = 0; j < span; ++j) {
                    const double* krow = &C.k[(b0 + j) * d + static_cast<std::size_t>(h) * hd];
                    double s = 0.0;
                    for (int e = 0; e < hd; ++e) s += qrow[e] * krow[e];
                    s *= scale;
                    prow[j] = s;
                    if (s > mx) mx = s;
                }
                double denom = 0.0;
                for (std::size_t j = 0; j < span; ++j) {
                    prow[j] = std::exp(prow[j] - mx);
                    denom += prow[j];
                }
                double* crow = &C.ctx[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(h) * hd];
                for (int e = 0; e < hd; ++e) crow[e] = 0.0;
                for (std::size_t j = 0; j < span; ++j) {
                    prow[j] /= denom;
                    const double* vrow = &C.v[(b0 + j) * d + static_cast<std::size_t>(h) * hd];
                    for (int e = 0; e < hd; ++e) crow[e] += prow[j] * vrow[e];
                }
            }
        }

        std::vector<double> o(Td, 0.0);
        kern::matmul_acc(C.ctx.data(), R.wo, o.data(), T, d, d);
        kern::add_bias_rows(o.data(), R.bo, T, d);
        C.x_mid.resize(Td);
        for (std::size_t i = 0; i < Td; ++i) C.x_mid[i] = C.x_in[i] + o[i];

        C.xhat2.resize(Td);
        C.rstd2.resize(static_cast<std::size_t>(T));
        C.b.resize(Td);
        kern::layernorm_rows(C.x_mid.data(), R.ln2_g, R.ln2_b, C.b.data(), C.xhat2.data(),
                             C.rstd2.data(), T, d, cfg.ln_eps);
        const std::size_t Tf = static_cast<std::size_t>(T) * F;
        C.u.assign(Tf, 0.0);
        kern::matmul_acc(C.b.data(), R.w1, C.u.data(), T, d, F);
        kern::add_bias_rows(C.u.data(), R.b1, T, F);
        C.g.resize(Tf);
        for (std::size_t i = 0; i < Tf; ++i) C.g[i] = kern::gelu(C.u[i]);
        std::vector<double> m(Td, 0.0);
        kern::matmul_acc(C.g.data(), R.w2, m.data(), T, F, d);
        kern::add_bias_rows(m.data(), R.b2, T, d);
        for (std::size_t i = 0; i < Td; ++i) x[i] = C.x_mid[i] + m[i];
    }
}

}  // namespace detail_model

// Runs loss (and, when `grads` is non-null, gradient accumulation) over a set
// of packed sequences.  Loss is the mean negative log-likelihood over all
// supervised positions of the whole batch; grads hold d(loss)/d(param).
inline LossResult forward_backward(const ModelConfig& cfg, const Params& params,
                                   const std::vector<PackView>& packs, Params* grads) {
    cfg.validate();
    const int d = cfg.width, H = cfg.heads, hd = cfg.head_dim(), F = cfg.ff, V = cfg.vocab;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    long long supervised = 0;
    for (const auto& pv : packs) {
        if (!pv.tokens || !pv.mask || !pv.begins) throw InputError("null pack view");
        const auto& tokens = *pv.tokens;
        const auto& mask = *pv.mask;
        const auto& begins = *pv.begins;
        if (tokens.size() != mask.size() || tokens.size() != begins.size())
            throw InputError("pack arrays disagree in length");
        if (tokens.size() > static_cast<std::size_t>(cfg.max_positions))
            throw InputError("pack longer than the model's position budget");
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (tokens[t] < 0 || tokens[t] >= V) throw InputError("token id outside model vocab");
            if (mask[t]) {
                if (begins[t] == t)
                    throw InputError("supervised token at a segment start has no context");
                ++supervised;
            }
        }
    }
    if (supervised == 0) throw DegenerateBatch("batch has no supervised positions");

    const double* lnf_g = params.at("lnf.g").data();
    const double* lnf_b = params.at("lnf.b").data();
    const double* head_w = params.at("head.w").data();
    const double* head_b = params.at("head.b").data();

    double total_nll = 0.0;

    for (const auto& pv : packs) {
        const auto& tokens = *pv.tokens;
        const auto& mask = *pv.mask;
        const auto& begins = *pv.begins;
        const int T = static_cast<int>(tokens.size());
        if (T == 0) continue;
        const std::size_t Td = static_cast<std::size_t>(T) * d;

        std::vector<detail_model::LayerCache> caches;
        std::vector<double> x;
        detail_model::run_stack(cfg, params, tokens, begins, caches, x);

        // final norm over every row; logits only where a prediction is scored
        std::vector<double> f(Td), fhat(Td), frstd(static_cast<std::size_t>(T));
        kern::layernorm_rows(x.data(), lnf_g, lnf_b, f.data(), fhat.data(), frstd.data(), T, d,
                             cfg.ln_eps);

        std::vector<int> pred_rows;  // row i scores token i+1
        for (int t = 1; t < T; ++t)
            if (mask[static_cast<std::size_t>(t)]) pred_rows.push_back(t - 1);

        const int P = static_cast<int>(pred_rows.size());
        std::vector<double> frows(static_cast<std::size_t>(P) * d);
        for (int r = 0; r < P; ++r)
            std::memcpy(&frows[static_cast<std::size_t>(r) * d],
                        &f[static_cast<std::size_t>(pred_rows[static_cast<std::size_t>(r)]) * d],
                        sizeof(double) * static_cast<std::size_t>(d));
        std::vector<double> logits(static_cast<std::size_t>(P) * V, 0.0);
        kern::matmul_acc(frows.data(), head_w, logits.data(), P, d, V);
        kern::add_bias_rows(logits.data(), head_b, P, V);

        // softmax cross-entropy; dlogits reuses the logits buffer
        for (int r = 0; r < P; ++r) {
            double* row = &logits[static_cast<std::size_t>(r) * V];
            const TokenId target =
                tokens[static_cast<std::size_t>(pred_rows[static_cast<std::size_t>(r)]) + 1];
            double mx = row[0];
            for (int j = 1; j < V; ++j)
                if (row[j] > mx) mx = row[j];
            double denom = 0.0;
            for (int j = 0; j < V; ++j) denom += std::exp(row[j] - mx);
            const double lse = mx + std::log(denom);
            total_nll += lse - row[target];
            if (grads) {
                const double inv = 1.0 / static_cast<double>(supervised);
                for (int j = 0; j < V; ++j) row[j] = std::exp(row[j] - lse) * inv;
                row[target] -= inv;
            }
        }
        if (!grads) continue;

        // ---- backward ----
        std::vector<double> dfrows(static_cast<std::size_t>(P) * d, 0.0);
        kern::matmul_at_b_acc(frows.data(), logits.data(), grads->at("head.w").data(), P, d, V);
        kern::bias_grad_acc(logits.data(), grads->at("head.b").data(), P, V);
        kern::matmul_a_bt_acc(logits.data(), head_w, dfrows.data(), P, V, d);

        std::vector<double> df(Td, 0.0);
        for (int r = 0; r < P; ++r)
            for (int j = 0; j < d; ++j)
                df[static_cast<std::size_t>(pred_rows[static_cast<std::size_t>(r)]) * d +
                   static_cast<std::size_t>(j)] +=
                    dfrows[static_cast<std::size_t>(r) * d + static_cast<std::size_t>(j)];

        std::vector<double> dx(Td, 0.0);
        kern::layernorm_backward_rows(df.data(), fhat.data(), frstd.data(), lnf_g, dx.data(),
                                      grads->at("lnf.g").data(), grads->at("lnf.b").data(), T, d);

        for (int l = cfg.layers - 1; l >= 0; --l) {
            auto R = detail_model::layer_refs(params, l);
            const std::string pre = "l" + std::to_string(l) + ".";
            auto& C = caches[static_cast<std::size_t>(l)];
            const std::size_t Tf = static_cast<std::size_t>(T) * F;

            // mlp backward; dx here is d(x_mid + m)
            std::vector<double> dg(Tf, 0.0);
            kern::matmul_at_b_acc(C.g.data(), dx.data(), grads->at(pre + "mlp.w2").data(), T, F, d);
            kern::bias_grad_acc(dx.data(), grads->at(pre + "mlp.b2").data(), T, d);
            kern::matmul_a_bt_acc(dx.data(), R.w2, dg.data(), T, d, F);
            for (std::size_t i = 0; i < Tf; ++i) dg[i] *= kern::gelu_grad(C.u[i]);
            std::vector<double> db_rows(Td, 0.0);
            kern::matmul_at_b_acc(C.b.data(), dg.data(), grads->at(pre + "mlp.w1").data(), T, d, F);
            kern::bias_grad_acc(dg.data(), grads->at(pre + "mlp.b1").data(), T, F);
            kern::matmul_a_bt_acc(dg.data(), R.w1, db_rows.data(), T, F, d);

            std::vector<double> dx_mid(Td, 0.0);
            kern::layernorm_backward_rows(db_rows.data(), C.xhat2.data(), C.rstd2.data(), R.ln2_g,
                                          dx_mid.data(), grads->at(pre + "ln2.g").data(),
                                          grads->at(pre + "ln2.b").data(), T, d);
            for (std::size_t i = 0; i < Td; ++i) dx_mid[i] += dx[i];  // residual branch

            // attention backward: x_mid = x_in + ctx * Wo + bo
            std::vector<double> dctx(Td, 0.0);
            kern::matmul_at_b_acc(C.ctx.data(), dx_mid.data(), grads->at(pre + "attn.wo").data(), T,
                                  d, d);
            kern::bias_grad_acc(dx_mid.data(), grads->at(pre + "attn.bo").data(), T, d);
            kern::matmul_a_bt_acc(dx_mid.data(), R.wo, dctx.data(), T, d, d);

            std::vector<double> dq(Td, 0.0), dk(Td, 0.0), dv(Td, 0.0);
            for (int t = 0; t < T; ++t) {
                const std::size_t b0 = begins[static_cast<std::size_t>(t)];
                const std::size_t span = static_cast<std::size_t>(t) - b0 + 1;
                for (int h = 0; h < H; ++h) {
                    const double* prow =
                        &C.probs[C.prob_off[static_cast<std::size_t>(t) * H + static_cast<std::size_t>(h)]];
                    const double* dcrow =
                        &dctx[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(h) * hd];
                    const double* qrow =
                        &C.q[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(h) * hd];
                    double dot = 0.0;
                    std::vector<double> dp(span);
                    for (std::size_t j = 0; j < span; ++j) {
                        const double* vrow = &C.v[(b0 + j) * d + static_cast<std::size_t>(h) * hd];
                        double e = 0.0;
                        for (int c = 0; c < hd; ++c) e += dcrow[c] * vrow[c];
                        dp[j] = e;
                        dot += prow[j] * e;
                        double* dvrow = &dv[(b0 + j) * d + static_cast<std::size_t>(h) * hd];
                        for (int c = 0; c < hd; ++c) dvrow[c] += prow[j] * dcrow[c];
                    }
                    double* dqrow = &dq[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(h) * hd];
                    for (std::size_t j = 0; j < span; ++j) {
                        const double ds = prow[j] * (dp[j] - dot) * scale;
                        const double* krow = &C.k[(b0 + j) * d + static_cast<std::size_t>(h) * hd];
                        double* dkrow = &dk[(b0 + j) * d + static_cast<std::size_t>(h) * hd];
                        for (int c = 0; c < hd; ++c) {
                            dqrow[c] += ds * krow[c];
                            dkrow[c] += ds * qrow[c];
                        }
                    }
                }
            }
            // undo the rotation (its transpose is the reverse rotation)
            for (int t = 0; t < T; ++t) {
                const int pos = t - static_cast<int>(begins[static_cast<std::size_t>(t)]);
                for (int h = 0; h < H; ++h) {
                    kern::rope_row(&dq[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(h) * hd],
                                   hd, pos, cfg.rope_base, -1.0);
                    kern::rope_row(&dk[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(h) * hd],
                                   hd, pos, cfg.rope_base, -1.0);
                }
            }

            std::vector<double> da(Td, 0.0);
            kern::matmul_at_b_acc(C.a.data(), dq.data(), grads->at(pre + "attn.wq").data(), T, d, d);
            kern::bias_grad_acc(dq.data(), grads->at(pre + "attn.bq").data(), T, d);
            kern::matmul_a_bt_acc(dq.data(), R.wq, da.data(), T, d, d);
            kern::matmul_at_b_acc(C.a.data(), dk.data(), grads->at(pre + "attn.wk").data(), T, d, d);
            kern::bias_grad_acc(dk.data(), grads->at(pre + "attn.bk").data(), T, d);
            kern::matmul_a_bt_acc(dk.data(), R.wk, da.data(), T, d, d);
            kern::matmul_at_b_acc(C.a.data(), dv.data(), grads->at(pre + "attn.wv").data(), T, d, d);
            kern::bias_grad_acc(dv.data(), grads->at(pre + "attn.bv").data(), T, d);
            kern::matmul_a_bt_acc(dv.data(), R.wv, da.data(), T, d, d);

            std::vector<double> dx_in(Td, 0.0);
            kern::layernorm_backward_rows(da.data(), C.xhat1.data(), C.rstd1.data(), R.ln1_g,
                                          dx_in.data(), grads->at(pre + "ln1.g").data(),
                                          grads->at(pre + "ln1.b").data(), T, d);
            for (std::size_t i = 0; i < Td; ++i) dx_in[i] += dx_mid[i];  // residual branch
            dx = std::move(dx_in);
        }

        double* demb = grads->at("tok_emb").data();
        for (int t = 0; t < T; ++t) {
            double* row = demb + static_cast<std::size_t>(tokens[static_cast<std::size_t>(t)]) * d;
            for (int j = 0; j < d; ++j)
                row[j] += dx[static_cast<std::size_t>(t) * d + static_cast<std::size_t>(j)];
        }
    }

    return {total_nll / static_cast<double>(supervised), supervised};
}

inline LossResult eval_loss(const ModelConfig& cfg, const Params& params,
                            const std::vector<PackView>& packs) {
    return forward_backward(cfg, params, packs, nullptr);
}

// Full-sequence logits at every filled position via the batched stack.  Row t
// predicts the token at position t + 1 of its segment.
inline std::vector<std::vector<double>> forward_logits(const ModelConfig& cfg, const Params& params,
                                                       const std::vector<TokenId>& tokens,
                                                       const std::vector<std::size_t>& begins) {
    cfg.validate();
    if (tokens.size() != begins.size()) throw InputError("forward_logits: length mismatch");
    const int d = cfg.width, V = cfg.vocab;
    const int T = static_cast<int>(tokens.size());
    std::vector<detail_model::LayerCache> caches;
    std::vector<double> x;
    detail_model::run_stack(cfg, params, tokens, begins, caches, x);
    std::vector<double> f(static_cast<std::size_t>(T) * d), fhat(static_cast<std::size_t>(T) * d),
        frstd(static_cast<std::size_t>(T));
    kern::layernorm_rows(x.data(), params.at("lnf.g").data(), params.at("lnf.b").data(), f.data(),
                         fhat.data(), frstd.data(), T, d, cfg.ln_eps);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        out[static_cast<std::size_t>(t)].assign(static_cast<std::size_t>(V), 0.0);
        kern::matmul_acc(&f[static_cast<std::size_t>(t) * d], params.at("head.w").data(),
                         out[static_cast<std::size_t>(t)].data(), 1, d, V);
        kern::add_bias_rows(out[static_cast<std::size_t>(t)].data(), params.at("head.b").data(), 1, V);
    }
    return out;
}

// --- incremental decoding ----------------------------------------------------

// Feeds one token at a time against a growing k/v cache.  Runs the same
// kernels over the same data as the batched forward (positions start at 0,
// one segment), so its logits are bit-identical to forward_logits on the
// same prefix.
class Decoder {
public:
    Decoder(const ModelConfig& cfg, const Params& params) : cfg_(cfg), params_(&params) {
        cfg_.validate();
        k_.resize(static_cast<std::size_t>(cfg_.layers));
        v_.resize(static_cast<std::size_t>(cfg_.layers));
        logits_.resize(static_cast<std::size_t>(cfg_.vocab));
    }

    int position() const { return pos_; }

    // Processes `t` at the next position and returns logits for what follows.
    const std::vector<double>& step(TokenId t) {
        if (t < 0 || t >= cfg_.vocab) throw InputError("token id outside model vocab");
        if (pos_ >= cfg_.max_positions) throw OutOfRange("decoder ran past the position budget");
        const int d = cfg_.width, H = cfg_.heads, hd = cfg_.head_dim(), F = cfg_.ff, V = cfg_.vocab;
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

        std::vector<double> x(static_cast<std::size_t>(d));
        std::memcpy(x.data(), params_->at("tok_emb").data() + static_cast<std::size_t>(t) * d,
                    sizeof(double) * static_cast<std::size_t>(d));

        std::vector<double> xhat(static_cast<std::size_t>(d)), rstd(1);
        for (int l = 0; l < cfg_.layers; ++l) {
            auto R = detail_model::layer_refs(*params_, l);
            std::vector<double> a(static_cast<std::size_t>(d));
            kern::layernorm_rows(x.data(), R.ln1_g, R.ln1_b, a.data(), xhat.data(), rstd.data(), 1,
                                 d, cfg_.ln_eps);

            std::vector<double> q(static_cast<std::size_t>(d), 0.0);
            std::vector<double> krow(static_cast<std::size_t>(d), 0.0);
            std::vector<double> vrow(static_cast<std::size_t>(d), 0.0);
            kern::matmul_acc(a.data(), R.wq, q.data(), 1, d, d);
            kern::add_bias_rows(q.data(), R.bq, 1, d);
            kern::matmul_acc(a.data(), R.wk, krow.data(), 1, d, d);
            kern::add_bias_rows(krow.data(), R.bk, 1, d);
            kern::matmul_acc(a.data(), R.wv, vrow.data(), 1, d, d);
            kern::add_bias_rows(vrow.data(), R.bv, 1, d);
            for (int h = 0; h < H; ++h) {
                kern::rope_row(&q[static_cast<std::size_t>(h) * hd], hd, pos_, cfg_.rope_base, 1.0);
                kern::rope_row(&krow[static_cast<std::size_t>(h) * hd], hd, pos_, cfg_.rope_base, 1.0);
            }
            auto& K = k_[static_cast<std::size_t>(l)];
            auto& Vc = v_[static_cast<std::size_t>(l)];
            K.insert(K.end(), krow.begin(), krow.end());
            Vc.insert(Vc.end(), vrow.begin(), vrow.end());
            const std::size_t span = static_cast<std::size_t>(pos_) + 1;

            std::vector<double> ctx(static_cast<std::size_t>(d));
            std::vector<double> prow(span);
            for (int h = 0; h < H; ++h) {
                const double* qrow = &q[static_cast<std::size_t>(h) * hd];
                double mx = -1e300;
                for (std::size_t j = 0; j < span; ++j) {
                    const double* kj = &K[j * static_cast<std::size_t>(d) + static_cast<std::size_t>(h) * hd];
                    double s = 0.0;
                    for (int e = 0; e < hd; ++e) s += qrow[e] * kj[e];
                    s *= scale;
                    prow[j] = s;
                    if (s > mx) mx = s;
                }
                double denom = 0.0;
                for (std::size_t j = 0; j < span; ++j) {
                    prow[j] = std::exp(prow[j] - mx);
                    denom += prow[j];
                }
                double* crow = &ctx[static_cast<std::size_t>(h) * hd];
                for (int e = 0; e < hd; ++e) crow[e] = 0.0;
                for (std::size_t j = 0; j < span; ++j) {
                    prow[j] /= denom;
                    const double* vj = &Vc[j * static_cast<std::size_t>(d) + static_cast<std::size_t>(h) * hd];
                    for (int e = 0; e < hd; ++e) crow[e] += prow[j] * vj[e];
                }
            }

            std::vector<double> o(static_cast<std::size_t>(d), 0.0);
            kern::matmul_acc(ctx.data(), R.wo, o.data(), 1, d, d);
            kern::add_bias_rows(o.data(), R.bo, 1, d);
            for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(j)] += o[static_cast<std::size_t>(j)];

            std::vector<double> b(static_cast<std::size_t>(d));
            kern::layernorm_rows(x.data(), R.ln2_g, R.ln2_b, b.data(), xhat.data(), rstd.data(), 1,
                                 d, cfg_.ln_eps);
            std::vector<double> u(static_cast<std::size_t>(F), 0.0);
            kern::matmul_acc(b.data(), R.w1, u.data(), 1, d, F);
            kern::add_bias_rows(u.data(), R.b1, 1, F);
            for (double& e : u) e = kern::gelu(e);
            std::vector<double> m(static_cast<std::size_t>(d), 0.0);
            kern::matmul_acc(u.data(), R.w2, m.data(), 1, F, d);
            kern::add_bias_rows(m.data(), R.b2, 1, d);
            for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(j)] += m[static_cast<std::size_t>(j)];
        }

        std::vector<double> f(static_cast<std::size_t>(d));
        kern::layernorm_rows(x.data(), params_->at("lnf.g").data(), params_->at("lnf.b").data(),
                             f.data(), xhat.data(), rstd.data(), 1, d, cfg_.ln_eps);
        std::fill(logits_.begin(), logits_.end(), 0.0);
        kern::matmul_acc(f.data(), params_->at("head.w").data(), logits_.data(), 1, d, V);
        kern::add_bias_rows(logits_.data(), params_->at("head.b").data(), 1, V);
        ++pos_;
        return logits_;
    }

private:
    ModelConfig cfg_;
    const Params* params_;
    std::vector<std::vector<double>> k_, v_;  // per layer, row-appended
    std::vector<double> logits_;
    int pos_ = 0;
};

}  // namespace uniss
