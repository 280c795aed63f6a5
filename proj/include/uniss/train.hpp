// The three-phase curriculum.
//
// Phase 1 teaches the foundation tasks (transcribe, translate speech to text,
// read text aloud, translate text).  Phase 2 introduces end-to-end speech
// translation in all three modes, each batch carrying new and old examples at
// a fixed count ratio so the foundations are rehearsed, not overwritten.
// Phase 3 refines on the high-quality subset with a cosine-decayed rate and
// keeps the parameters from the lowest smoothed-loss step.
//
// Determinism: every shuffle draws from an Rng derived from (seed, phase), so
// a run resumed at a phase boundary replays the exact batch sequence of an
// uninterrupted run, bit for bit.
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uniss/codec.hpp"
#include "uniss/common.hpp"
#include "uniss/model.hpp"
#include "uniss/optim.hpp"
#include "uniss/packing.hpp"
#include "uniss/pipeline.hpp"
#include "uniss/tasks.hpp"

namespace uniss {

enum class LrCurve { Constant, Cosine };

struct PhaseConfig {
    std::vector<TaskMode> new_tasks;  // every (sample, task) pair enters the phase's new stream
    int epochs = 1;                   // passes over the new stream
    long long max_steps = 0;          // 0: bounded by epochs alone
    LrCurve curve = LrCurve::Constant;
    double lr_start = 0.0;
    double lr_end = 0.0;  // cosine floor; unused for constant
    double warmup_frac = 0.0;
    int new_per_batch = 3;
    int old_per_batch = 0;            // drawn from the previous phases' examples
    bool select_best_smoothed = false;
    int smooth_window = 50;

    void validate() const {
        if (new_tasks.empty()) throw ConfigError("phase: no tasks");
        if (epochs <= 0 && max_steps <= 0) throw ConfigError("phase: no step budget");
        if (max_steps < 0) throw ConfigError("phase: negative max_steps");
        if (!(lr_start > 0)) throw ConfigError("phase: lr_start must be positive");
        if (curve == LrCurve::Cosine && !(lr_end > 0 && lr_end <= lr_start))
            throw ConfigError("phase: cosine needs 0 < lr_end <= lr_start");
        if (warmup_frac < 0 || warmup_frac >= 1) throw ConfigError("phase: warmup_frac outside [0, 1)");
        if (new_per_batch <= 0 || old_per_batch < 0) throw ConfigError("phase: bad batch counts");
        if (smooth_window <= 0) throw ConfigError("phase: smooth_window must be positive");
    }
};

inline PhaseConfig default_phase1() {
    PhaseConfig p;
    p.new_tasks = {TaskMode::Asr, TaskMode::S2tt, TaskMode::Tts, TaskMode::Mt};
    p.epochs = 3;
    p.lr_start = p.lr_end = 8e-4;
    return p;
}

inline PhaseConfig default_phase2() {
    PhaseConfig p;
    p.new_tasks = {TaskMode::S2stQuality, TaskMode::S2stPerformance, TaskMode::S2stDirect};
    p.epochs = 1;
    p.lr_start = p.lr_end = 2e-4;
    p.warmup_frac = 0.05;
    p.new_per_batch = 2;
    p.old_per_batch = 1;  // new:old stays 2:1 in every batch
    return p;
}

inline PhaseConfig default_phase3() {
    PhaseConfig p;
    p.new_tasks = {TaskMode::S2stQuality, TaskMode::S2stPerformance};
    p.epochs = 2;
    p.curve = LrCurve::Cosine;
    p.lr_start = 5e-5;
    p.lr_end = 5e-6;
    p.select_best_smoothed = true;
    return p;
}

// Learning rate for 0-based `step` of `planned` total steps.
inline double phase_lr(const PhaseConfig& pc, long long step, long long planned) {
    if (planned <= 0 || step < 0 || step >= planned) throw ScheduleError("lr query outside the phase");
    const auto warmup = static_cast<long long>(std::llround(pc.warmup_frac * static_cast<double>(planned)));
    if (step < warmup) return pc.lr_start * static_cast<double>(step + 1) / static_cast<double>(warmup);
    if (pc.curve == LrCurve::Constant) return pc.lr_start;
    const long long span = planned - warmup;
    const double progress = span <= 1 ? 1.0 : static_cast<double>(step - warmup) / static_cast<double>(span - 1);
    return pc.lr_end + 0.5 * (pc.lr_start - pc.lr_end) * (1.0 + std::cos(progress * 3.14159265358979323846));
}

struct TrainerConfig {
    ModelConfig model;
    AdamWConfig adamw;
    std::uint64_t seed = 0;
    int pack_capacity = 512;
    PhaseConfig phase1 = default_phase1();
    PhaseConfig phase2 = default_phase2();
    PhaseConfig phase3 = default_phase3();
};

struct StepLog {
    int phase = 0;
    long long step = 0;  // 0-based within the phase
    double lr = 0.0;
    double loss = 0.0;
    long long supervised = 0;
    int new_examples = 0;
    int old_examples = 0;
};

class Trainer {
public:
    Trainer(const Codec& codec, TrainerConfig cfg, std::vector<ParallelSample> general,
            std::vector<ParallelSample> hq)
        : codec_(&codec), cfg_(std::move(cfg)), general_(std::move(general)), hq_(std::move(hq)),
          opt_(cfg_.model, cfg_.adamw) {
        cfg_.model.validate();
        cfg_.phase1.validate();
        cfg_.phase2.validate();
        cfg_.phase3.validate();
        if (cfg_.pack_capacity <= 0 || cfg_.pack_capacity > cfg_.model.max_positions)
            throw ConfigError("pack capacity must fit the model's position budget");
        if (cfg_.model.vocab != codec.layout().total_size())
            throw ConfigError("model vocab does not match the codec's token space");
        params_ = make_params(cfg_.model);
        grads_ = make_params(cfg_.model);
        Rng init_rng(derive_seed(cfg_.seed, "init"));
        init_params(params_, cfg_.model, init_rng);
    }

    Params& params() { return params_; }
    const Params& params() const { return params_; }
    AdamW& optimizer() { return opt_; }
    const std::vector<StepLog>& log() const { return log_; }
    const ModelConfig& model_config() const { return cfg_.model; }
    const TrainerConfig& config() const { return cfg_; }

    void run_phase(int phase) {
        const PhaseConfig& pc = phase_config(phase);
        const std::vector<TrainingExample> fresh = new_pool(phase);
        const std::vector<TrainingExample> replay = old_pool(phase);
        if (fresh.empty()) throw ScheduleError("phase has no training data");
        if (pc.old_per_batch > 0 && replay.empty())
            throw ScheduleError("phase mixes old data but earlier phases provide none");

        long long planned =
            (static_cast<long long>(pc.epochs) * static_cast<long long>(fresh.size()) +
             pc.new_per_batch - 1) / pc.new_per_batch;
        if (pc.max_steps > 0 && pc.max_steps < planned) planned = pc.max_steps;
        if (planned <= 0) throw ScheduleError("phase schedule plans zero steps");

        Rng rng(derive_seed(cfg_.seed, "train_phase", static_cast<std::uint64_t>(phase)));
        Stream fresh_stream(fresh, rng);
        Stream replay_stream(replay, rng);

        // best-smoothed-loss tracking (only consulted when the phase opts in)
        std::vector<double> window(static_cast<std::size_t>(pc.smooth_window), 0.0);
        double window_sum = 0.0;
        double best_smoothed = 0.0;
        bool have_best = false;
        Params best_params;

        for (long long step = 0; step < planned; ++step) {
            std::vector<TrainingExample> batch;
            batch.reserve(static_cast<std::size_t>(pc.new_per_batch + pc.old_per_batch));
            for (int i = 0; i < pc.new_per_batch; ++i) batch.push_back(fresh_stream.draw());
            for (int i = 0; i < pc.old_per_batch; ++i) batch.push_back(replay_stream.draw());

            const PackingResult packed = pack_examples(batch, cfg_.pack_capacity);
            if (!packed.overflow.empty())
                throw ScheduleError("example exceeds pack capacity: " + packed.overflow.front());

            std::vector<std::vector<std::size_t>> begins;
            std::vector<PackView> views;
            begins.reserve(packed.packs.size());
            views.reserve(packed.packs.size());
            for (const auto& p : packed.packs) {
                begins.push_back(segment_begins(p));
                views.emplace_back(p.tokens, p.loss_mask, begins.back());
            }

            grads_.zero();
            const LossResult res = forward_backward(cfg_.model, params_, views, &grads_);
            const double lr = phase_lr(pc, step, planned);
            opt_.step(params_, grads_, lr);
            log_.push_back({phase, step, lr, res.loss, res.supervised, pc.new_per_batch,
                            pc.old_per_batch});

            const auto slot = static_cast<std::size_t>(step % pc.smooth_window);
            window_sum += res.loss - window[slot];
            window[slot] = res.loss;
            if (step + 1 >= pc.smooth_window) {
                const double smoothed = window_sum / pc.smooth_window;
                if (!have_best || smoothed < best_smoothed) {
                    best_smoothed = smoothed;
                    have_best = true;
                    if (pc.select_best_smoothed) best_params = params_;
                }
            }
        }

        if (pc.select_best_smoothed && have_best) params_ = std::move(best_params);
    }

    // The examples a phase trains on, in construction order (before shuffling).
    std::vector<TrainingExample> new_pool(int phase) const {
        const PhaseConfig& pc = phase_config(phase);
        const std::vector<ParallelSample>& data = phase == 3 ? hq_ : general_;
        std::vector<TrainingExample> out;
        out.reserve(data.size() * pc.new_tasks.size());
        for (const auto& s : data)
            for (TaskMode m : pc.new_tasks) out.push_back(make_example(m, s, *codec_));
        return out;
    }

private:
    struct Stream {
        const std::vector<TrainingExample>* pool;
        Rng* rng;
        std::vector<std::size_t> order;
        std::size_t next = 0;

        Stream(const std::vector<TrainingExample>& p, Rng& r) : pool(&p), rng(&r) {
            order.resize(p.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            next = order.size();  // force a shuffle on the first draw
        }

        const TrainingExample& draw() {
            if (next == order.size()) {
                rng->shuffle(order);
                next = 0;
            }
            return (*pool)[order[next++]];
        }
    };

    const PhaseConfig& phase_config(int phase) const {
        switch (phase) {
            case 1: return cfg_.phase1;
            case 2: return cfg_.phase2;
            case 3: return cfg_.phase3;
            default: throw ScheduleError("no such phase: " + std::to_string(phase));
        }
    }

    std::vector<TrainingExample> old_pool(int phase) const {
        if (phase_config(phase).old_per_batch == 0) return {};
        // Replay rehearses the foundation tasks on the same general data.
        std::vector<TrainingExample> out;
        if (phase >= 2) {
            out.reserve(general_.size() * cfg_.phase1.new_tasks.size());
            for (const auto& s : general_)
                for (TaskMode m : cfg_.phase1.new_tasks) out.push_back(make_example(m, s, *codec_));
        }
        return out;
    }

    const Codec* codec_;
    TrainerConfig cfg_;
    std::vector<ParallelSample> general_, hq_;
    Params params_, grads_;
    AdamW opt_;
    std::vector<StepLog> log_;
};

}  // namespace uniss
