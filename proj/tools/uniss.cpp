// Command-line front end.  One binary with a subcommand per workflow stage;
// a JSONC config file is the single source of truth and --set flags override
// individual values.  Every output lands under the run directory next to the
// fully resolved config and a digest manifest, so two runs with the same
// config and seed can be compared byte for byte.
//
// Exit codes: 0 success, 1 validation failure, 2 usage or IO error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "uniss/corpus.hpp"
#include "uniss/eval.hpp"
#include "uniss/io.hpp"
#include "uniss/train.hpp"

namespace fs = std::filesystem;
using namespace uniss;

namespace {

std::string fmt(double d) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// --- config file -------------------------------------------------------------

struct RunConfig {
    std::uint64_t seed = 7;
    std::string run_dir = "runs/default";
    CodecConfig codec;
    CorpusSpec corpus;        // seed falls out of the root seed unless given
    PipelineConfig pipeline;  // likewise
    int pack_capacity = 512;
    ModelConfig model;        // vocab 0 resolves to the codec's token space
    AdamWConfig adamw;
    PhaseConfig phase1 = default_phase1();
    PhaseConfig phase2 = default_phase2();
    PhaseConfig phase3 = default_phase3();
    SamplerConfig sampler;
    double stats_bin_width = 0.5;
};

// Reads known keys off a JSON object and rejects the rest, so a typo in a
// config file fails loudly instead of silently keeping a default.
class Fields {
public:
    Fields(const Json& j, std::string where) : j_(&j), where_(std::move(where)) {
        if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_->contains(key)) return;
        try {
            j_->at(key).get_to(out);
        } catch (const Json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_->contains(key);
    }

    const Json& at(const char* key) {
        seen_.insert(key);
        return j_->at(key);
    }

    std::string sub(const char* key) const { return where_ + "." + key; }

    void done() const {
        for (const auto& item : j_->items())
            if (!seen_.count(item.key()))
                throw ConfigError(where_ + ": unknown key '" + item.key() + "'");
    }

private:
    const Json* j_;
    std::string where_;
    std::set<std::string> seen_;
};

char single_char(const Json& j, const std::string& where) {
    const auto s = j.get<std::string>();
    if (s.size() != 1) throw ConfigError(where + ": expected a single character");
    return s[0];
}

void apply_codec(const Json& j, const std::string& where, CodecConfig& c) {
    Fields f(j, where);
    f.get("lang_a_letters", c.lang_a_letters);
    f.get("lang_b_singles", c.lang_b_singles);
    if (f.has("lang_b_marker")) c.lang_b_marker = single_char(f.at("lang_b_marker"), f.sub("lang_b_marker"));
    f.get("lang_b_pair_seconds", c.lang_b_pair_seconds);
    if (f.has("silence")) c.silence = single_char(f.at("silence"), f.sub("silence"));
    f.get("num_speakers", c.num_speakers);
    f.get("speaker_range", c.speaker_range);
    f.get("sem_per_char", c.sem_per_char);
    f.get("parity_classes", c.parity_classes);
    f.get("chars_per_second", c.chars_per_second);
    f.done();
}

void apply_corpus(const Json& j, const std::string& where, CorpusSpec& s, bool& seed_given) {
    Fields f(j, where);
    seed_given = f.has("seed");
    f.get("seed", s.seed);
    f.get("n_records", s.n_records);
    f.get("words_min", s.words_min);
    f.get("words_max", s.words_max);
    f.get("word_len_min", s.word_len_min);
    f.get("word_len_max", s.word_len_max);
    f.get("src_pad_max", s.src_pad_max);
    f.get("assumed_tgt_pad_min", s.assumed_tgt_pad_min);
    f.get("assumed_tgt_pad_max", s.assumed_tgt_pad_max);
    f.get("id_prefix", s.id_prefix);
    if (f.has("defects")) {
        Fields d(f.at("defects"), f.sub("defects"));
        d.get("bad_src_wer", s.defects.bad_src_wer);
        d.get("bad_tgt_wer", s.defects.bad_tgt_wer);
        d.get("bad_ratio_low", s.defects.bad_ratio_low);
        d.get("bad_ratio_high", s.defects.bad_ratio_high);
        d.get("bad_ratio_hq", s.defects.bad_ratio_hq);
        d.get("oracle_fail", s.defects.oracle_fail);
        d.done();
    }
    f.done();
}

void apply_pipeline(const Json& j, const std::string& where, PipelineConfig& p, bool& seed_given) {
    Fields f(j, where);
    seed_given = f.has("seed");
    f.get("seed", p.seed);
    if (f.has("direction")) {
        const auto name = f.at("direction").get<std::string>();
        if (name == "a_to_b") p.direction = Direction::AtoB;
        else if (name == "b_to_a") p.direction = Direction::BtoA;
        else throw ConfigError(f.sub("direction") + ": expected a_to_b or b_to_a");
    }
    f.get("src_wer_max", p.src_wer_max);
    f.get("tgt_wer_max", p.tgt_wer_max);
    f.get("general_ratio_lo_tenths", p.general_ratio_lo_tenths);
    f.get("general_ratio_hi_tenths", p.general_ratio_hi_tenths);
    f.get("hq_ratio_lo_tenths", p.hq_ratio_lo_tenths);
    f.get("hq_ratio_hi_tenths", p.hq_ratio_hi_tenths);
    f.get("tgt_pad_min", p.tgt_pad_min);
    f.get("tgt_pad_max", p.tgt_pad_max);
    if (f.has("wer_unit")) {
        const auto name = f.at("wer_unit").get<std::string>();
        if (name == "word") p.wer_unit = TextUnit::Word;
        else if (name == "char") p.wer_unit = TextUnit::Char;
        else throw ConfigError(f.sub("wer_unit") + ": expected word or char");
    }
    if (f.has("sanitize")) {
        Fields s(f.at("sanitize"), f.sub("sanitize"));
        s.get("strip_prefixes", p.sanitize.strip_prefixes);
        s.get("note_markers", p.sanitize.note_markers);
        s.done();
    }
    f.done();
}

void apply_model(const Json& j, const std::string& where, ModelConfig& m) {
    Fields f(j, where);
    f.get("vocab", m.vocab);
    f.get("layers", m.layers);
    f.get("width", m.width);
    f.get("heads", m.heads);
    f.get("ff", m.ff);
    f.get("max_positions", m.max_positions);
    f.get("init_std", m.init_std);
    f.get("rope_base", m.rope_base);
    f.get("ln_eps", m.ln_eps);
    f.done();
}

void apply_adamw(const Json& j, const std::string& where, AdamWConfig& a) {
    Fields f(j, where);
    f.get("beta1", a.beta1);
    f.get("beta2", a.beta2);
    f.get("eps", a.eps);
    f.get("weight_decay", a.weight_decay);
    f.done();
}

void apply_phase(const Json& j, const std::string& where, PhaseConfig& p) {
    Fields f(j, where);
    if (f.has("new_tasks")) {
        p.new_tasks.clear();
        for (const auto& t : f.at("new_tasks"))
            p.new_tasks.push_back(task_from_name(t.get<std::string>()));
    }
    f.get("epochs", p.epochs);
    f.get("max_steps", p.max_steps);
    if (f.has("curve")) {
        const auto name = f.at("curve").get<std::string>();
        if (name == "constant") p.curve = LrCurve::Constant;
        else if (name == "cosine") p.curve = LrCurve::Cosine;
        else throw ConfigError(f.sub("curve") + ": expected constant or cosine");
    }
    f.get("lr_start", p.lr_start);
    f.get("lr_end", p.lr_end);
    f.get("warmup_frac", p.warmup_frac);
    f.get("new_per_batch", p.new_per_batch);
    f.get("old_per_batch", p.old_per_batch);
    f.get("select_best_smoothed", p.select_best_smoothed);
    f.get("smooth_window", p.smooth_window);
    f.done();
}

void apply_sampler(const Json& j, const std::string& where, SamplerConfig& s) {
    Fields f(j, where);
    f.get("temperature", s.temperature);
    f.get("top_p", s.top_p);
    f.get("top_k", s.top_k);
    f.get("repetition_penalty", s.repetition_penalty);
    f.get("max_new_tokens", s.max_new_tokens);
    f.done();
}

// `--set dotted.path=value`; the value is parsed as JSON when it is JSON,
// otherwise taken as a bare string.
void apply_set(Json& j, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects dotted.path=value, got: " + spec);
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(raw);
    } catch (const Json::exception&) {
        value = raw;
    }
    Json* cur = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key =
            dot == std::string::npos ? path.substr(start) : path.substr(start, dot - start);
        if (key.empty()) throw ConfigError("--set path has an empty segment: " + spec);
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        if (cur->contains(key) && !(*cur)[key].is_object())
            throw ConfigError("--set path crosses a non-object value at '" + key + "': " + spec);
        cur = &(*cur)[key];
        start = dot + 1;
    }
}

RunConfig load_config(const std::string& config_path, const std::vector<std::string>& sets,
                      const std::string& run_dir_flag) {
    Json j = Json::object();
    if (!config_path.empty()) j = read_json_file(config_path, /*allow_comments=*/true);
    if (!j.is_object()) throw ConfigError("config root must be an object");
    for (const auto& s : sets) apply_set(j, s);

    RunConfig rc;
    bool corpus_seed = false, pipeline_seed = false;
    Fields f(j, "config");
    f.get("seed", rc.seed);
    f.get("run_dir", rc.run_dir);
    if (f.has("codec")) apply_codec(f.at("codec"), "config.codec", rc.codec);
    if (f.has("corpus")) apply_corpus(f.at("corpus"), "config.corpus", rc.corpus, corpus_seed);
    if (f.has("pipeline")) apply_pipeline(f.at("pipeline"), "config.pipeline", rc.pipeline, pipeline_seed);
    f.get("pack_capacity", rc.pack_capacity);
    if (f.has("model")) apply_model(f.at("model"), "config.model", rc.model);
    if (f.has("adamw")) apply_adamw(f.at("adamw"), "config.adamw", rc.adamw);
    if (f.has("phase1")) apply_phase(f.at("phase1"), "config.phase1", rc.phase1);
    if (f.has("phase2")) apply_phase(f.at("phase2"), "config.phase2", rc.phase2);
    if (f.has("phase3")) apply_phase(f.at("phase3"), "config.phase3", rc.phase3);
    if (f.has("sampler")) apply_sampler(f.at("sampler"), "config.sampler", rc.sampler);
    f.get("stats_bin_width", rc.stats_bin_width);
    f.done();

    if (!run_dir_flag.empty()) rc.run_dir = run_dir_flag;
    if (!corpus_seed) rc.corpus.seed = derive_seed(rc.seed, "corpus");
    if (!pipeline_seed) rc.pipeline.seed = derive_seed(rc.seed, "pipeline");
    return rc;
}

Json phase_json(const PhaseConfig& p) {
    Json tasks = Json::array();
    for (TaskMode m : p.new_tasks) tasks.push_back(task_name(m));
    return Json{{"new_tasks", tasks},
                {"epochs", p.epochs},
                {"max_steps", p.max_steps},
                {"curve", p.curve == LrCurve::Cosine ? "cosine" : "constant"},
                {"lr_start", p.lr_start},
                {"lr_end", p.lr_end},
                {"warmup_frac", p.warmup_frac},
                {"new_per_batch", p.new_per_batch},
                {"old_per_batch", p.old_per_batch},
                {"select_best_smoothed", p.select_best_smoothed},
                {"smooth_window", p.smooth_window}};
}

// The fully expanded settings a command actually ran with.  run_dir is
// deliberately absent: artifacts must not depend on where the run lives.
Json resolved_json(const RunConfig& rc) {
    const CodecConfig& c = rc.codec;
    const CorpusSpec& s = rc.corpus;
    const PipelineConfig& p = rc.pipeline;
    return Json{
        {"seed", rc.seed},
        {"codec",
         {{"lang_a_letters", c.lang_a_letters},
          {"lang_b_singles", c.lang_b_singles},
          {"lang_b_marker", std::string(1, c.lang_b_marker)},
          {"lang_b_pair_seconds", c.lang_b_pair_seconds},
          {"silence", std::string(1, c.silence)},
          {"num_speakers", c.num_speakers},
          {"speaker_range", c.speaker_range},
          {"sem_per_char", c.sem_per_char},
          {"parity_classes", c.parity_classes},
          {"chars_per_second", c.chars_per_second}}},
        {"corpus",
         {{"seed", s.seed},
          {"n_records", s.n_records},
          {"words_min", s.words_min},
          {"words_max", s.words_max},
          {"word_len_min", s.word_len_min},
          {"word_len_max", s.word_len_max},
          {"src_pad_max", s.src_pad_max},
          {"assumed_tgt_pad_min", s.assumed_tgt_pad_min},
          {"assumed_tgt_pad_max", s.assumed_tgt_pad_max},
          {"id_prefix", s.id_prefix},
          {"defects",
           {{"bad_src_wer", s.defects.bad_src_wer},
            {"bad_tgt_wer", s.defects.bad_tgt_wer},
            {"bad_ratio_low", s.defects.bad_ratio_low},
            {"bad_ratio_high", s.defects.bad_ratio_high},
            {"bad_ratio_hq", s.defects.bad_ratio_hq},
            {"oracle_fail", s.defects.oracle_fail}}}}},
        {"pipeline",
         {{"seed", p.seed},
          {"direction", p.direction == Direction::AtoB ? "a_to_b" : "b_to_a"},
          {"src_wer_max", p.src_wer_max},
          {"tgt_wer_max", p.tgt_wer_max},
          {"general_ratio_lo_tenths", p.general_ratio_lo_tenths},
          {"general_ratio_hi_tenths", p.general_ratio_hi_tenths},
          {"hq_ratio_lo_tenths", p.hq_ratio_lo_tenths},
          {"hq_ratio_hi_tenths", p.hq_ratio_hi_tenths},
          {"tgt_pad_min", p.tgt_pad_min},
          {"tgt_pad_max", p.tgt_pad_max},
          {"wer_unit", p.wer_unit == TextUnit::Word ? "word" : "char"},
          {"sanitize",
           {{"strip_prefixes", p.sanitize.strip_prefixes},
            {"note_markers", p.sanitize.note_markers}}}}},
        {"pack_capacity", rc.pack_capacity},
        {"model", rc.model},
        {"adamw",
         {{"beta1", rc.adamw.beta1},
          {"beta2", rc.adamw.beta2},
          {"eps", rc.adamw.eps},
          {"weight_decay", rc.adamw.weight_decay}}},
        {"phase1", phase_json(rc.phase1)},
        {"phase2", phase_json(rc.phase2)},
        {"phase3", phase_json(rc.phase3)},
        {"sampler",
         {{"temperature", rc.sampler.temperature},
          {"top_p", rc.sampler.top_p},
          {"top_k", rc.sampler.top_k},
          {"repetition_penalty", rc.sampler.repetition_penalty},
          {"max_new_tokens", rc.sampler.max_new_tokens}}},
        {"stats_bin_width", rc.stats_bin_width}};
}

// --- run directory -----------------------------------------------------------

// Collects the files a command writes, then refreshes the digest manifest so
// the run directory always describes its own contents.
class RunDir {
public:
    RunDir(fs::path root, Json resolved) : root_(std::move(root)), resolved_(std::move(resolved)) {
        fs::create_directories(root_);
    }

    const fs::path& root() const { return root_; }

    std::string file(const std::string& rel) {
        const fs::path p = root_ / rel;
        fs::create_directories(p.parent_path());
        written_.push_back(rel);
        return p.string();
    }

    void finish() {
        write_json_file(file("resolved_config.json"), resolved_);
        Json digests = Json::object();
        const fs::path manifest = root_ / "digests.json";
        if (fs::exists(manifest)) digests = read_json_file(manifest.string());
        for (const auto& rel : written_) digests[rel] = hex64(file_digest((root_ / rel).string()));
        write_json_file(manifest.string(), digests);
    }

private:
    fs::path root_;
    Json resolved_;
    std::vector<std::string> written_;
};

void write_csv(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& line : lines) out << line << "\n";
    if (!out) throw IoError("write failed: " + path);
}

// --- shared command plumbing -------------------------------------------------

struct Ctx {
    RunConfig rc;
    Codec codec;

    explicit Ctx(RunConfig r) : rc(std::move(r)), codec(rc.codec) {
        if (rc.model.vocab == 0) rc.model.vocab = codec.layout().total_size();
        rc.model.validate();
        rc.adamw.validate();
        rc.sampler.validate();
        rc.phase1.validate();
        rc.phase2.validate();
        rc.phase3.validate();
        if (rc.pack_capacity <= 0) throw ConfigError("pack_capacity must be positive");
        if (!(rc.stats_bin_width > 0)) throw ConfigError("stats_bin_width must be positive");
    }

    RunDir open_run_dir() const { return RunDir(fs::path(rc.run_dir), resolved_json(rc)); }

    std::string manifest_path(const std::string& variant) const {
        return (fs::path(rc.run_dir) / variant / "manifest.jsonl").string();
    }

    std::string checkpoint_path(int phase) const {
        return (fs::path(rc.run_dir) / "checkpoints" /
                ("phase" + std::to_string(phase) + ".ckpt"))
            .string();
    }
};

std::vector<ParallelSample> read_samples(const std::string& path) {
    return read_jsonl_records<ParallelSample>(path);
}

void write_stats_files(RunDir& run, const std::string& variant,
                       const std::vector<ParallelSample>& samples, double bin_width) {
    const DatasetStats st = compute_stats(samples, bin_width);
    write_json_file(run.file(variant + "/stats.json"), Json(st));
    std::vector<std::string> lines = {"kind,bin,count"};
    const auto emit = [&lines](const char* kind, const std::map<int, int>& bins) {
        for (const auto& [bin, count] : bins)
            lines.push_back(std::string(kind) + "," + std::to_string(bin) + "," +
                            std::to_string(count));
    };
    emit("ratio_tenths", st.ratio_tenth_bins);
    emit("bucket_tenths", st.bucket_counts);
    emit("src_duration", st.src_duration_bins);
    emit("tgt_duration", st.tgt_duration_bins);
    write_csv(run.file(variant + "/stats.csv"), lines);
}

void write_variant(RunDir& run, const std::string& variant, const PipelineResult& result,
                   double bin_width) {
    write_jsonl_records(run.file(variant + "/manifest.jsonl"), result.samples);
    write_jsonl_records(run.file(variant + "/discards.jsonl"), result.discards);
    write_json_file(run.file(variant + "/stage_counts.json"), Json(result.stages));
    write_stats_files(run, variant, result.samples, bin_width);
}

Params load_model_params(const Ctx& ctx, const std::string& ckpt_path) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (Json(ctx.rc.model) != ckpt.meta.at("model"))
        throw IoError("checkpoint was trained with a different model config: " + ckpt_path);
    check_params_match(ctx.rc.model, ckpt.params);
    return ckpt.params;
}

std::vector<TaskMode> parse_task_list(const std::string& csv) {
    std::vector<TaskMode> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const auto comma = csv.find(',', start);
        const std::string name =
            comma == std::string::npos ? csv.substr(start) : csv.substr(start, comma - start);
        if (!name.empty()) out.push_back(task_from_name(name));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ConfigError("no tasks named in: " + csv);
    return out;
}

// --- subcommands -------------------------------------------------------------

int cmd_build_data(const Ctx& ctx, const std::string& variant) {
    RunDir run = ctx.open_run_dir();
    std::vector<ParallelSample> general;
    if (variant == "hq") {
        general = read_samples(ctx.manifest_path("general"));
    } else {
        const ToyCorpus corpus = generate_corpus(ctx.codec, ctx.rc.corpus);
        write_jsonl_records(run.file("data/records.jsonl"), corpus.records);
        const PipelineResult res =
            build_general(corpus.records, {corpus.source_asr, corpus.target_asr, {}}, ctx.codec,
                          ctx.rc.pipeline);
        write_variant(run, "general", res, ctx.rc.stats_bin_width);
        general = res.samples;
        std::cout << "general: kept " << res.samples.size() << ", discarded "
                  << res.discards.size() << "\n";
    }
    if (variant != "general") {
        const PipelineResult res = build_hq(general, ctx.codec, ctx.rc.pipeline);
        write_variant(run, "hq", res, ctx.rc.stats_bin_width);
        std::cout << "hq: kept " << res.samples.size() << ", discarded " << res.discards.size()
                  << "\n";
    }
    run.finish();
    return 0;
}

int cmd_pack(const Ctx& ctx, const std::string& variant, const std::string& tasks_csv) {
    RunDir run = ctx.open_run_dir();
    const auto samples = read_samples(ctx.manifest_path(variant));
    const auto tasks = parse_task_list(tasks_csv);

    std::vector<TrainingExample> examples;
    examples.reserve(samples.size() * tasks.size());
    for (const auto& s : samples)
        for (TaskMode m : tasks) examples.push_back(make_example(m, s, ctx.codec));

    const PackingResult packed = pack_examples(examples, ctx.rc.pack_capacity);
    write_jsonl_records(run.file("packs/" + variant + ".jsonl"), packed.packs);

    std::size_t filled = 0;
    for (const auto& p : packed.packs) filled += p.filled();
    const double capacity_total =
        static_cast<double>(packed.packs.size()) * ctx.rc.pack_capacity;
    Json summary{{"variant", variant},
                 {"examples", examples.size()},
                 {"packs", packed.packs.size()},
                 {"capacity", ctx.rc.pack_capacity},
                 {"fill_fraction", packed.packs.empty() ? 0.0 : filled / capacity_total},
                 {"overflow_ids", packed.overflow}};
    write_json_file(run.file("packs/" + variant + "_summary.json"), summary);
    run.finish();
    std::cout << "packed " << examples.size() << " examples into " << packed.packs.size()
              << " sequences (" << packed.overflow.size() << " overflow)\n";
    return 0;
}

std::vector<int> parse_phase_list(const std::string& csv) {
    std::vector<int> out;
    for (char c : csv) {
        if (c == ',') continue;
        if (c < '1' || c > '3') throw ConfigError("--phases expects digits 1-3, got: " + csv);
        out.push_back(c - '0');
    }
    if (out.empty()) throw ConfigError("--phases named no phases");
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i] != out[i - 1] + 1)
            throw ConfigError("--phases must be consecutive ascending, got: " + csv);
    return out;
}

int cmd_train(const Ctx& ctx, const std::string& phases_csv) {
    RunDir run = ctx.open_run_dir();
    const std::vector<int> phases = parse_phase_list(phases_csv);

    TrainerConfig tcfg;
    tcfg.model = ctx.rc.model;
    tcfg.adamw = ctx.rc.adamw;
    tcfg.seed = ctx.rc.seed;
    tcfg.pack_capacity = ctx.rc.pack_capacity;
    tcfg.phase1 = ctx.rc.phase1;
    tcfg.phase2 = ctx.rc.phase2;
    tcfg.phase3 = ctx.rc.phase3;

    Trainer trainer(ctx.codec, tcfg, read_samples(ctx.manifest_path("general")),
                    read_samples(ctx.manifest_path("hq")));

    if (phases.front() > 1) {
        // Picking up at a phase boundary: restore the previous phase's params
        // and optimizer moments, then replay the exact batch sequence.
        const std::string prev = ctx.checkpoint_path(phases.front() - 1);
        const Checkpoint ckpt = load_checkpoint(prev);
        if (ckpt.meta.at("phase").get<int>() != phases.front() - 1)
            throw IoError("checkpoint is not a phase " + std::to_string(phases.front() - 1) +
                          " boundary: " + prev);
        if (Json(ctx.rc.model) != ckpt.meta.at("model"))
            throw IoError("checkpoint was trained with a different model config: " + prev);
        if (ckpt.meta.at("seed").get<std::uint64_t>() != tcfg.seed)
            throw IoError("checkpoint was trained with a different seed: " + prev);
        if (!ckpt.has_optimizer)
            throw IoError("checkpoint lacks optimizer state needed to resume: " + prev);
        check_params_match(ctx.rc.model, ckpt.params);
        check_params_match(ctx.rc.model, ckpt.opt_m);
        check_params_match(ctx.rc.model, ckpt.opt_v);
        trainer.params() = ckpt.params;
        trainer.optimizer().moment1() = ckpt.opt_m;
        trainer.optimizer().moment2() = ckpt.opt_v;
        trainer.optimizer().set_step_count(ckpt.opt_step);
    }

    for (int phase : phases) {
        trainer.run_phase(phase);

        std::vector<std::string> lines = {"phase,step,lr,loss,supervised,new_examples,old_examples"};
        double last_loss = 0.0;
        long long steps = 0;
        for (const StepLog& e : trainer.log()) {
            if (e.phase != phase) continue;
            lines.push_back(std::to_string(e.phase) + "," + std::to_string(e.step) + "," +
                            fmt(e.lr) + "," + fmt(e.loss) + "," + std::to_string(e.supervised) +
                            "," + std::to_string(e.new_examples) + "," +
                            std::to_string(e.old_examples));
            last_loss = e.loss;
            ++steps;
        }
        write_csv(run.file("train/loss_phase" + std::to_string(phase) + ".csv"), lines);

        Checkpoint ckpt;
        ckpt.meta = Json{{"model", ctx.rc.model}, {"phase", phase}, {"seed", tcfg.seed}};
        ckpt.params = trainer.params();
        ckpt.has_optimizer = true;
        ckpt.opt_step = trainer.optimizer().step_count();
        ckpt.opt_m = trainer.optimizer().moment1();
        ckpt.opt_v = trainer.optimizer().moment2();
        save_checkpoint(run.file("checkpoints/phase" + std::to_string(phase) + ".ckpt"), ckpt);
        std::cout << "phase " << phase << ": " << steps << " steps, final loss " << fmt(last_loss)
                  << "\n";
    }
    run.finish();
    return 0;
}

int cmd_infer(const Ctx& ctx, const std::string& task, const std::string& ckpt_path,
              const std::string& input_path, int limit) {
    RunDir run = ctx.open_run_dir();
    const TaskMode mode = task_from_name(task);
    auto samples = read_samples(input_path);
    if (limit > 0 && static_cast<int>(samples.size()) > limit)
        samples.resize(static_cast<std::size_t>(limit));
    if (samples.empty()) throw InputError("no samples to run inference on: " + input_path);

    const Params params = load_model_params(ctx, ckpt_path);
    const Emitter emit =
        make_model_emitter(ctx.rc.model, params, ctx.rc.sampler, ctx.codec.layout(),
                           derive_seed(ctx.rc.seed, "infer", static_cast<std::uint64_t>(mode)));

    const VocabLayout& layout = ctx.codec.layout();
    std::vector<Json> rows;
    rows.reserve(samples.size());
    int parsed_count = 0, decoded_count = 0;
    for (const auto& s : samples) {
        const Prompt prompt = make_prompt(mode, s, ctx.codec);
        const std::vector<TokenId> emission = emit(s, prompt);
        Json row{{"id", s.id}, {"task", task}, {"emitted", emission.size()}, {"tokens", emission},
                 {"parsed", false}};
        try {
            const OutputParse parse = parse_output(mode, prompt.lang, emission, layout);
            if (parse.terminated) {
                row["parsed"] = true;
                ++parsed_count;
                if (parse.source_text)
                    row["source_text"] = ctx.codec.text_from_tokens(*parse.source_text, s.source.lang);
                if (parse.target_text)
                    row["target_text"] =
                        ctx.codec.text_from_tokens(*parse.target_text, other(s.source.lang));
                if (parse.semantic) {
                    try {
                        const SyntheticWaveform w = ctx.codec.detokenize(prompt.speaker, *parse.semantic);
                        row["waveform"] = w;
                        row["spoken_text"] = ctx.codec.spoken_text(w);
                        ++decoded_count;
                    } catch (const DecodeError& e) {
                        row["decode_error"] = e.what();
                    }
                }
            }
        } catch (const MalformedOutput&) {
        }
        rows.push_back(std::move(row));
    }
    write_jsonl(run.file("infer/" + task + ".jsonl"), rows);
    run.finish();
    std::cout << task << ": " << samples.size() << " samples, " << parsed_count << " parsed, "
              << decoded_count << " decoded\n";
    return 0;
}

int cmd_eval(const Ctx& ctx, const std::string& tasks_csv, const std::string& ckpt_path,
             const std::string& input_path, int limit, bool timing, bool oracle) {
    RunDir run = ctx.open_run_dir();
    auto samples = read_samples(input_path);
    if (limit > 0 && static_cast<int>(samples.size()) > limit)
        samples.resize(static_cast<std::size_t>(limit));

    Params params;
    if (!oracle) params = load_model_params(ctx, ckpt_path);

    for (TaskMode mode : parse_task_list(tasks_csv)) {
        const Emitter emit =
            oracle ? make_reference_emitter(ctx.codec)
                   : make_model_emitter(ctx.rc.model, params, ctx.rc.sampler, ctx.codec.layout(),
                                        derive_seed(ctx.rc.seed, "eval",
                                                    static_cast<std::uint64_t>(mode)));
        const EvalReport rep = evaluate(mode, samples, emit, ctx.codec);

        Json jr = rep;
        if (!timing) jr.erase("wall_seconds");
        write_json_file(run.file("eval/" + std::string(task_name(mode)) + ".json"), jr);

        std::vector<std::string> lines = {"metric,value"};
        lines.push_back("n," + std::to_string(rep.n));
        lines.push_back("parsed," + std::to_string(rep.parsed));
        lines.push_back("decode_failures," + std::to_string(rep.decode_failures));
        lines.push_back("parse_validity," + fmt(rep.parse_validity));
        lines.push_back("mean_emitted_tokens," + fmt(rep.mean_emitted_tokens));
        if (rep.text_bleu) lines.push_back("text_bleu," + fmt(*rep.text_bleu));
        if (rep.speech_bleu) lines.push_back("speech_bleu," + fmt(*rep.speech_bleu));
        if (rep.speaker_preservation)
            lines.push_back("speaker_preservation," + fmt(*rep.speaker_preservation));
        if (rep.slc_02) lines.push_back("slc_02," + fmt(*rep.slc_02));
        if (rep.slc_04) lines.push_back("slc_04," + fmt(*rep.slc_04));
        if (timing) lines.push_back("wall_seconds," + fmt(rep.wall_seconds));
        write_csv(run.file("eval/" + std::string(task_name(mode)) + ".csv"), lines);

        std::cout << task_name(mode) << ": parse_validity=" << fmt(rep.parse_validity);
        if (rep.text_bleu) std::cout << " text_bleu=" << fmt(*rep.text_bleu);
        if (rep.speech_bleu) std::cout << " speech_bleu=" << fmt(*rep.speech_bleu);
        if (timing)
            std::cout << " wall_seconds=" << fmt(rep.wall_seconds)
                      << " mean_emitted=" << fmt(rep.mean_emitted_tokens);
        std::cout << "\n";
    }
    run.finish();
    return 0;
}

int cmd_stats(const Ctx& ctx, const std::string& variant) {
    RunDir run = ctx.open_run_dir();
    const auto samples = read_samples(ctx.manifest_path(variant));
    write_stats_files(run, variant, samples, ctx.rc.stats_bin_width);
    run.finish();
    std::cout << variant << ": " << samples.size() << " samples\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale speech-to-speech translation workbench"};
    app.require_subcommand(1);

    std::string config_path, run_dir_flag;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "JSONC config file");
    app.add_option("--set", sets, "override a config value: dotted.path=value");
    app.add_option("--run-dir", run_dir_flag, "run directory (overrides config)");

    auto* build = app.add_subcommand("build-data", "generate the corpus and build datasets");
    std::string build_variant = "both";
    build->add_option("--variant", build_variant, "which dataset to build")
        ->check(CLI::IsMember({"both", "general", "hq"}));

    auto* pack = app.add_subcommand("pack", "pack training examples into fixed-capacity sequences");
    std::string pack_variant = "general";
    std::string pack_tasks = "asr,s2tt,tts,mt";
    pack->add_option("--variant", pack_variant)->check(CLI::IsMember({"general", "hq"}));
    pack->add_option("--tasks", pack_tasks, "comma-separated task names");

    auto* train = app.add_subcommand("train", "run the training curriculum");
    std::string train_phases = "1,2,3";
    train->add_option("--phases", train_phases, "consecutive phases to run, e.g. 1,2,3 or 2");

    auto* infer = app.add_subcommand("infer", "run one task over a manifest and dump emissions");
    std::string infer_task = "s2st_quality", infer_ckpt, infer_input;
    int infer_limit = 0;
    infer->add_option("--task", infer_task);
    infer->add_option("--checkpoint", infer_ckpt);
    infer->add_option("--input", infer_input, "samples manifest (.jsonl)");
    infer->add_option("--limit", infer_limit, "evaluate at most this many samples");

    auto* eval = app.add_subcommand("eval", "score a model (or the oracle) on task modes");
    std::string eval_tasks = "s2st_quality", eval_ckpt, eval_input;
    int eval_limit = 0;
    bool eval_timing = false, eval_oracle = false;
    eval->add_option("--tasks", eval_tasks, "comma-separated task names");
    eval->add_option("--checkpoint", eval_ckpt);
    eval->add_option("--input", eval_input, "samples manifest (.jsonl)");
    eval->add_option("--limit", eval_limit);
    eval->add_flag("--timing", eval_timing, "include wall-clock seconds in reports");
    eval->add_flag("--oracle", eval_oracle, "score reference emissions instead of a model");

    auto* stats = app.add_subcommand("stats", "recompute histograms for a built dataset");
    std::string stats_variant = "general";
    stats->add_option("--variant", stats_variant)->check(CLI::IsMember({"general", "hq"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const Ctx ctx(load_config(config_path, sets, run_dir_flag));
        const auto default_ckpt = [&ctx](std::string& path) {
            if (path.empty()) path = ctx.checkpoint_path(3);
        };
        const auto default_input = [&ctx](std::string& path) {
            if (path.empty()) path = ctx.manifest_path("hq");
        };
        if (build->parsed()) return cmd_build_data(ctx, build_variant);
        if (pack->parsed()) return cmd_pack(ctx, pack_variant, pack_tasks);
        if (train->parsed()) return cmd_train(ctx, train_phases);
        if (infer->parsed()) {
            default_ckpt(infer_ckpt);
            default_input(infer_input);
            return cmd_infer(ctx, infer_task, infer_ckpt, infer_input, infer_limit);
        }
        if (eval->parsed()) {
            default_ckpt(eval_ckpt);
            default_input(eval_input);
            return cmd_eval(ctx, eval_tasks, eval_ckpt, eval_input, eval_limit, eval_timing,
                            eval_oracle);
        }
        if (stats->parsed()) return cmd_stats(ctx, stats_variant);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ScheduleError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
