// AdamW with decoupled weight decay.
//
// Per element: m = b1*m + (1-b1)*g, v = b2*v + (1-b2)*g^2, both bias-corrected
// by the step count, then theta -= lr * (mhat / (sqrt(vhat) + eps) + wd*theta).
// Decay applies to every tensor uniformly, norm gains and biases included.
#pragma once

#include <cmath>

#include "uniss/common.hpp"
#include "uniss/model.hpp"

namespace uniss {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.1;

    void validate() const {
        if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
            throw ConfigError("adamw: betas must lie in [0, 1)");
        if (!(eps > 0)) throw ConfigError("adamw: eps must be positive");
        if (weight_decay < 0) throw ConfigError("adamw: negative weight decay");
    }
};

class AdamW {
public:
    AdamW(const ModelConfig& model_cfg, AdamWConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        m_ = make_params(model_cfg);
        v_ = make_params(model_cfg);
        m_.zero();
        v_.zero();
    }

    long long step_count() const { return t_; }
    Params& moment1() { return m_; }
    Params& moment2() { return v_; }
    const AdamWConfig& config() const { return cfg_; }

    // For checkpoint restore.
    void set_step_count(long long t) {
        if (t < 0) throw ConfigError("adamw: negative step count");
        t_ = t;
    }

    void step(Params& params, const Params& grads, double lr) {
        if (!(lr > 0)) throw ConfigError("adamw: step needs a positive learning rate");
        if (params.tensors.size() != grads.tensors.size())
            throw InputError("adamw: params and grads disagree in shape");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
            auto& p = params.tensors[ti].v;
            const auto& g = grads.tensors[ti].v;
            auto& m = m_.tensors[ti].v;
            auto& v = v_.tensors[ti].v;
            if (p.size() != g.size()) throw InputError("adamw: tensor size mismatch");
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
            }
        }
    }

private:
    AdamWConfig cfg_;
    Params m_, v_;
    long long t_ = 0;
};

}  // namespace uniss
