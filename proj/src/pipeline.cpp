#include "ultraif/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <utility>

#include "ultraif/augment.hpp"
#include "ultraif/backend.hpp"
#include "ultraif/decompose.hpp"
#include "ultraif/errors.hpp"
#include "ultraif/hashing.hpp"
#include "ultraif/http_backend.hpp"
#include "ultraif/synthesize.hpp"

namespace ultraif {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDecompose = "decompose";
constexpr const char* kComposerData = "composer-data";
constexpr const char* kAugment = "augment";
constexpr const char* kSynthesize = "synthesize";
constexpr const char* kEmit = "emit";
constexpr const char* kDecontam = "decontam";
constexpr const char* kStats = "stats";

fs::path decomposed_path(const fs::path& out) { return out / "decomposed.jsonl"; }
fs::path composer_train_path(const fs::path& out) { return out / "composer_train.jsonl"; }
fs::path augmented_path(const fs::path& out) { return out / "augmented.jsonl"; }
fs::path outcomes_path(const fs::path& out) { return out / "outcomes.jsonl"; }
fs::path stats_path(const fs::path& out) { return out / "stats.json"; }
fs::path summary_path(const fs::path& out) { return out / "summary.json"; }
fs::path report_path(const fs::path& out) { return out / "decontam_report.json"; }

// Every backend a run needs, keyed by role. Roles sharing a base URL share
// one HTTP client; replay mode shares one transcript across all roles.
struct BackendSet {
    std::shared_ptr<SharedTranscript> store;  // non-null when recording
    std::string record_path;
    std::map<Role, std::shared_ptr<ChatBackend>> per_role;

    ChatBackend* role(Role r) const { return per_role.at(r).get(); }

    void flush_record() const {
        if (!store || record_path.empty()) return;
        std::lock_guard<std::mutex> lock(store->mu);
        store->transcript.save(record_path);
    }
};

BackendSet build_backends(const PipelineConfig& cfg, const std::set<Role>& needed) {
    BackendSet set;
    set.record_path = cfg.record_path;
    if (needed.empty()) return set;
    if (!cfg.record_path.empty()) set.store = std::make_shared<SharedTranscript>();

    if (!cfg.replay_path.empty()) {
        std::shared_ptr<ChatBackend> replay =
            std::make_shared<ReplayBackend>(ReplayTranscript::load(cfg.replay_path));
        if (set.store) {
            set.store->transcript.source_backend = replay->id();
            replay = std::make_shared<RecordingBackend>(std::move(replay), set.store);
        }
        for (Role r : needed) set.per_role[r] = replay;
        return set;
    }

    std::map<std::string, std::shared_ptr<ChatBackend>> by_url;
    std::string sources;
    for (Role r : needed) {
        const std::string url = cfg.role_base_url(r);
        const std::string role_name(to_string(r));
        if (url.empty()) {
            throw ConfigError("role " + role_name +
                              " has no endpoint; set backend.base_url, roles." + role_name +
                              ".base_url, or replay");
        }
        if (cfg.role_model(r).empty()) {
            throw ConfigError("role " + role_name + " has no model; set backend.model or roles." +
                              role_name + ".model");
        }
        auto it = by_url.find(url);
        if (it == by_url.end()) {
            HttpBackendConfig http;
            http.base_url = url;
            http.max_retries = cfg.max_retries;
            std::shared_ptr<ChatBackend> backend = std::make_shared<HttpBackend>(http);
            if (!sources.empty()) sources += ",";
            sources += backend->id();
            if (set.store) backend = std::make_shared<RecordingBackend>(std::move(backend), set.store);
            it = by_url.emplace(url, std::move(backend)).first;
        }
        set.per_role[r] = it->second;
    }
    if (set.store) set.store->transcript.source_backend = sources;
    return set;
}

RoleEndpoint role_endpoint(const PipelineConfig& cfg, const BackendSet& backends, Role r) {
    RoleEndpoint endpoint;
    endpoint.backend = backends.role(r);
    endpoint.model_id = cfg.role_model(r);
    endpoint.temperature = cfg.role_temperature(r);
    endpoint.max_tokens = cfg.role_max_tokens(r);
    return endpoint;
}

StagePolicy stage_policy(const PipelineConfig& cfg, const char* stage) {
    StagePolicy policy;
    policy.retries = cfg.retries;
    policy.stage_seed = derive_seed(cfg.seed, stage);
    policy.parallelism = cfg.parallelism;
    return policy;
}

struct RecordResult {
    json line;
    std::int64_t retried = 0;
    std::int64_t dropped = 0;
    ChatUsage usage;
};

void accumulate_committed(StageCounters& counters, const json& line) {
    if (line.contains("skipped")) {
        ++counters.skipped;
        return;
    }
    ++counters.processed;
    counters.retried += line.value("retried", std::int64_t{0});
    counters.dropped_questions += line.value("dropped_triples", std::int64_t{0});
    if (line.contains("usage") && line["usage"].is_object()) {
        counters.usage.prompt_tokens += line["usage"].value("prompt_tokens", std::int64_t{0});
        counters.usage.completion_tokens +=
            line["usage"].value("completion_tokens", std::int64_t{0});
    }
}

// Shared shape of the sampling stages: one committed output line per input
// record, written in input order so an interrupted file is always a prefix of
// the uninterrupted one. Workers run in parallel; the writer does not.
StageCounters drive_records(std::size_t count,
                            const std::function<std::string(std::size_t)>& id_at,
                            const std::function<RecordResult(std::size_t)>& process,
                            const fs::path& out_file, bool fresh, const char* id_key,
                            int parallelism) {
    StageCounters counters;
    std::set<std::string> committed;
    if (!fresh && fs::exists(out_file)) {
        truncate_torn_tail(out_file);
        for (const json& line : read_committed_lines(out_file)) {
            if (!line.is_object() || !line.contains(id_key) || !line[id_key].is_string()) {
                throw IoError(out_file.string() + ": committed line lacks a string " +
                              std::string(id_key));
            }
            committed.insert(line[id_key].get<std::string>());
            accumulate_committed(counters, line);
        }
    }

    std::vector<std::size_t> todo;
    todo.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!committed.contains(id_at(i))) todo.push_back(i);
    }

    JsonlWriter writer(out_file, /*append=*/!fresh && !committed.empty());

    const auto threads = static_cast<std::size_t>(std::max(1, parallelism));
    const std::size_t block = threads * 4;
    for (std::size_t base = 0; base < todo.size(); base += block) {
        const std::size_t n = std::min(block, todo.size() - base);
        std::vector<std::optional<RecordResult>> results(n);
        std::vector<std::optional<std::string>> failures(n);
        std::exception_ptr fatal;
        std::mutex fatal_mu;
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t slot = next.fetch_add(1);
                if (slot >= n) return;
                try {
                    results[slot] = process(todo[base + slot]);
                } catch (const Error& ex) {
                    failures[slot] = ex.what();
                } catch (...) {
                    std::lock_guard<std::mutex> lock(fatal_mu);
                    if (!fatal) fatal = std::current_exception();
                    return;
                }
            }
        };
        const std::size_t pool_size = std::min(threads, n);
        if (pool_size <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(pool_size);
            for (std::size_t t = 0; t < pool_size; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        if (fatal) std::rethrow_exception(fatal);

        for (std::size_t slot = 0; slot < n; ++slot) {
            if (failures[slot]) {
                writer.write(json{{id_key, id_at(todo[base + slot])},
                                  {"skipped", true},
                                  {"reason", *failures[slot]}});
                ++counters.skipped;
            } else {
                RecordResult& rr = *results[slot];
                writer.write(rr.line);
                ++counters.processed;
                counters.retried += rr.retried;
                counters.dropped_questions += rr.dropped;
                counters.usage += rr.usage;
            }
        }
    }
    writer.close();
    return counters;
}

struct PipelineCtx {
    const PipelineConfig& cfg;
    fs::path out;
    RunManifest manifest;
    fs::path manifest_path;
    BackendSet backends;
    std::optional<std::vector<SourceInstruction>> corpus;

    void save() { save_manifest(manifest, manifest_path.string()); }
};

const std::vector<SourceInstruction>& corpus_sorted(PipelineCtx& ctx) {
    if (!ctx.corpus) {
        if (ctx.cfg.input_path.empty()) {
            throw ConfigError("paths.input is required for this stage");
        }
        std::vector<SourceInstruction> items = load_corpus(ctx.cfg.input_path);
        std::sort(items.begin(), items.end(),
                  [](const SourceInstruction& a, const SourceInstruction& b) { return a.id < b.id; });
        ctx.corpus = std::move(items);
    }
    return *ctx.corpus;
}

std::vector<SynthesisOutcome> load_outcomes(const fs::path& file) {
    if (!fs::exists(file)) {
        throw ConfigError("missing " + file.string() + "; run synthesize first");
    }
    std::vector<SynthesisOutcome> out;
    for (const json& line : read_committed_lines(file)) {
        if (line.contains("skipped")) continue;
        out.push_back(outcome_from_json(line));
    }
    return out;
}

StageCounters stage_decompose(PipelineCtx& ctx, bool fresh) {
    const auto& corpus = corpus_sorted(ctx);
    const RoleEndpoint decomposer = role_endpoint(ctx.cfg, ctx.backends, Role::Decomposer);
    const RoleEndpoint question_gen = role_endpoint(ctx.cfg, ctx.backends, Role::QuestionGen);
    const StagePolicy policy = stage_policy(ctx.cfg, kDecompose);
    return drive_records(
        corpus.size(), [&](std::size_t i) { return corpus[i].id; },
        [&](std::size_t i) {
            DecompositionRecord rec = decompose_instruction(decomposer, corpus[i], policy);
            if (rec.complex && !rec.triples.empty()) {
                rec = attach_questions(question_gen, std::move(rec), corpus[i], policy);
            }
            RecordResult rr;
            rr.retried = rec.retried;
            rr.dropped = rec.dropped_triples;
            rr.usage = rec.usage;
            rr.line = decomposition_record_to_json(rec);
            return rr;
        },
        decomposed_path(ctx.out), fresh, "source_id", policy.parallelism);
}

StageCounters stage_composer_data(PipelineCtx& ctx) {
    const auto& corpus = corpus_sorted(ctx);
    std::map<std::string, const SourceInstruction*> by_id;
    for (const auto& inst : corpus) by_id[inst.id] = &inst;

    const fs::path in_file = decomposed_path(ctx.out);
    if (!fs::exists(in_file)) {
        throw ConfigError("missing " + in_file.string() + "; run decompose first");
    }

    StageCounters counters;
    JsonlWriter out(composer_train_path(ctx.out));
    for (const json& line : read_committed_lines(in_file)) {
        if (line.contains("skipped")) continue;
        const DecompositionRecord rec = decomposition_record_from_json(line);
        auto it = by_id.find(rec.source_id);
        if (it == by_id.end()) {
            throw ConfigError(in_file.string() + " references unknown instruction id " +
                              rec.source_id);
        }
        for (const ComposerExample& example : build_composer_examples(rec, *it->second)) {
            out.write(composer_example_to_json(example));
        }
        ++counters.processed;
    }
    out.close();
    return counters;
}

StageCounters stage_augment(PipelineCtx& ctx, bool fresh) {
    const auto& corpus = corpus_sorted(ctx);
    const RoleEndpoint composer = role_endpoint(ctx.cfg, ctx.backends, Role::Composer);
    const StagePolicy policy = stage_policy(ctx.cfg, kAugment);

    std::vector<int> targets;
    if (ctx.cfg.augment_mix.empty()) {
        targets.assign(corpus.size(), ctx.cfg.augment_iterations);
    } else {
        targets = distribute_complexity(corpus.size(), ctx.cfg.augment_mix, policy.stage_seed);
    }

    return drive_records(
        corpus.size(), [&](std::size_t i) { return corpus[i].id; },
        [&](std::size_t i) {
            const AugmentedInstruction aug =
                compose_iterative(composer, corpus[i], targets[i], policy);
            RecordResult rr;
            rr.retried = aug.retried;
            rr.usage = aug.usage;
            rr.line = augmented_to_json(aug);
            return rr;
        },
        augmented_path(ctx.out), fresh, "root_id", policy.parallelism);
}

StageCounters stage_synthesize(PipelineCtx& ctx, bool fresh) {
    const fs::path in_file = augmented_path(ctx.out);
    if (!fs::exists(in_file)) {
        throw ConfigError("missing " + in_file.string() + "; run augment first");
    }
    std::vector<AugmentedInstruction> augs;
    for (const json& line : read_committed_lines(in_file)) {
        if (line.contains("skipped")) continue;
        augs.push_back(augmented_from_json(line));
    }

    const RoleEndpoint responder = role_endpoint(ctx.cfg, ctx.backends, Role::Responder);
    const RoleEndpoint judge = role_endpoint(ctx.cfg, ctx.backends, Role::Judge);
    const StagePolicy policy = stage_policy(ctx.cfg, kSynthesize);

    StageCounters counters = drive_records(
        augs.size(), [&](std::size_t i) { return augs[i].root_id; },
        [&](std::size_t i) {
            const SynthesisOutcome outcome = synthesize_record(
                responder, judge, augs[i], ctx.cfg.k, ctx.cfg.use_n_samples, policy);
            RecordResult rr;
            rr.retried = outcome.retried;
            rr.usage = outcome.usage;
            rr.line = outcome_to_json(outcome);
            return rr;
        },
        outcomes_path(ctx.out), fresh, "root_id", policy.parallelism);

    const std::vector<SynthesisOutcome> outcomes = load_outcomes(outcomes_path(ctx.out));
    const json stats{{"pass_rate", pass_rate_to_json(pass_rate(outcomes))},
                     {"reference_rates", reference_rates_json()}};
    write_text_file_atomic(stats_path(ctx.out), stats.dump(2) + "\n");
    return counters;
}

StageCounters stage_emit(PipelineCtx& ctx, StageEntry& entry) {
    const std::vector<SynthesisOutcome> outcomes = load_outcomes(outcomes_path(ctx.out));

    std::vector<DataSlice> slices;
    for (int i = 1; i <= ctx.cfg.emit_iterations; ++i) {
        slices.push_back(DataSlice{"c=" + std::to_string(i), i});
    }
    const IterationPlan plan =
        plan_iterations(ctx.cfg.emit_iterations, ctx.cfg.nca_final, std::move(slices));
    const EmitResult result = emit_training_files(outcomes, plan, ctx.out, ctx.cfg.emit_format);

    StageCounters counters;
    counters.processed = static_cast<std::int64_t>(outcomes.size());
    entry.extra["sft_records"] = result.sft_records;
    std::int64_t pairs = 0;
    for (const auto& [index, record_count] : result.pref_records_per_iteration) {
        entry.extra["pref_iter" + std::to_string(index)] = record_count;
        pairs += record_count;
    }
    entry.extra["pref_pairs"] = pairs;
    entry.extra["unassigned_pairs"] = result.unassigned_pairs;
    return counters;
}

StageCounters stage_decontam(PipelineCtx& ctx, StageEntry& entry) {
    std::vector<fs::path> train;
    if (fs::exists(ctx.out / "sft.jsonl")) train.push_back(ctx.out / "sft.jsonl");
    for (int i = 1; i <= ctx.cfg.emit_iterations; ++i) {
        fs::path pref = ctx.out / ("pref_iter" + std::to_string(i) + ".jsonl");
        if (fs::exists(pref)) train.push_back(std::move(pref));
    }
    if (train.empty()) {
        throw ConfigError("no training files in " + ctx.out.string() + "; run emit first");
    }

    std::vector<std::pair<std::string, fs::path>> benchmarks;
    for (const auto& [name, path] : ctx.cfg.benchmarks) benchmarks.emplace_back(name, path);

    const ContaminationReport report =
        scan_many(train, benchmarks, ctx.cfg.decontam_n, ctx.cfg.decontam_fields,
                  static_cast<std::size_t>(ctx.cfg.decontam_max_flagged));
    write_text_file_atomic(report_path(ctx.out), report_to_json(report).dump(2) + "\n");

    StageCounters counters;
    counters.processed = report.train_documents;
    entry.extra["benchmarks"] = static_cast<std::int64_t>(report.per_benchmark.size());
    entry.extra["flagged_ngrams"] = static_cast<std::int64_t>(report.flagged.size());
    return counters;
}

StageCounters stage_stats(PipelineCtx& ctx, StageEntry& entry) {
    const std::vector<SynthesisOutcome> outcomes = load_outcomes(outcomes_path(ctx.out));
    const PassRateReport rates = pass_rate(outcomes);

    std::int64_t pairs = 0;
    std::int64_t with_chosen = 0;
    for (const auto& outcome : outcomes) {
        if (outcome.status == OutcomeStatus::SftAndDpo) ++pairs;
        if (outcome.chosen) ++with_chosen;
    }
    const auto total = static_cast<std::int64_t>(outcomes.size());
    const auto rate = [](std::int64_t num, std::int64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };

    json training_files = json::object();
    if (auto it = ctx.manifest.stages.find(kEmit); it != ctx.manifest.stages.end()) {
        for (const auto& [key, value] : it->second.extra) training_files[key] = value;
    }

    json stage_counters = json::object();
    for (const auto& [name, st] : ctx.manifest.stages) {
        if (name == kStats) continue;
        stage_counters[name] = json{
            {"state", to_string(st.state)},
            {"processed", st.counters.processed},
            {"skipped", st.counters.skipped},
            {"retried", st.counters.retried},
            {"dropped_questions", st.counters.dropped_questions},
            {"usage",
             {{"prompt_tokens", st.counters.usage.prompt_tokens},
              {"completion_tokens", st.counters.usage.completion_tokens}}},
        };
    }

    const json summary{
        {"run_id", ctx.manifest.run_id},
        {"pass_rate", pass_rate_to_json(rates)},
        // The pair rate is reported against both plausible denominators;
        // neither is privileged downstream.
        {"pair_yield",
         {{"instructions_total", total},
          {"with_chosen", with_chosen},
          {"with_pair", pairs},
          {"sft_rate", rate(with_chosen, total)},
          {"pair_rate_per_instruction", rate(pairs, total)},
          {"pair_rate_among_sft", rate(pairs, with_chosen)}}},
        {"training_files", training_files},
        {"stage_counters", stage_counters},
        {"reference_rates", reference_rates_json()},
    };
    write_text_file_atomic(summary_path(ctx.out), summary.dump(2) + "\n");

    StageCounters counters;
    counters.processed = total;
    entry.extra["instructions"] = total;
    return counters;
}

std::vector<std::string> stage_outputs(const PipelineCtx& ctx, const std::string& stage) {
    if (stage == kDecompose) return {"decomposed.jsonl"};
    if (stage == kComposerData) return {"composer_train.jsonl"};
    if (stage == kAugment) return {"augmented.jsonl"};
    if (stage == kSynthesize) return {"outcomes.jsonl", "stats.json"};
    if (stage == kEmit) {
        std::vector<std::string> files;
        if (ctx.cfg.emit_format != EmitFormat::Pref) files.push_back("sft.jsonl");
        if (ctx.cfg.emit_format != EmitFormat::Sft) {
            for (int i = 1; i <= ctx.cfg.emit_iterations; ++i) {
                files.push_back("pref_iter" + std::to_string(i) + ".jsonl");
            }
            files.push_back("plan.json");
        }
        return files;
    }
    if (stage == kDecontam) return {"decontam_report.json"};
    if (stage == kStats) return {"summary.json"};
    return {};
}

void execute_stage(PipelineCtx& ctx, const std::string& stage, bool fresh) {
    StageEntry& entry = ctx.manifest.stage(stage);
    entry.state = StageState::Running;
    entry.output_digests.clear();
    ctx.save();

    try {
        StageCounters counters;
        if (stage == kDecompose) {
            counters = stage_decompose(ctx, fresh);
        } else if (stage == kComposerData) {
            counters = stage_composer_data(ctx);
        } else if (stage == kAugment) {
            counters = stage_augment(ctx, fresh);
        } else if (stage == kSynthesize) {
            counters = stage_synthesize(ctx, fresh);
        } else if (stage == kEmit) {
            counters = stage_emit(ctx, entry);
        } else if (stage == kDecontam) {
            counters = stage_decontam(ctx, entry);
        } else if (stage == kStats) {
            counters = stage_stats(ctx, entry);
        } else {
            throw ConfigError("unknown stage: " + stage);
        }

        entry.counters = counters;
        for (const std::string& file : stage_outputs(ctx, stage)) {
            const fs::path path = ctx.out / file;
            if (fs::exists(path)) entry.output_digests[file] = file_sha256_hex(path);
        }
        if (entry.output_digests.empty()) {
            throw StageFailure(stage + " produced no outputs");
        }
        entry.state = StageState::Done;
        ctx.save();
        ctx.backends.flush_record();
        // Progress belongs on stderr; stdout stays clean for reports.
        std::fprintf(stderr, "[%s] done: processed=%lld skipped=%lld retried=%lld\n",
                     stage.c_str(), static_cast<long long>(counters.processed),
                     static_cast<long long>(counters.skipped),
                     static_cast<long long>(counters.retried));
    } catch (...) {
        entry.state = StageState::Failed;
        try {
            ctx.save();
        } catch (...) {
        }
        try {
            ctx.backends.flush_record();
        } catch (...) {
        }
        throw;
    }
}

std::set<Role> roles_for(const std::vector<std::string>& stages) {
    std::set<Role> roles;
    for (const auto& stage : stages) {
        if (stage == kDecompose) {
            roles.insert(Role::Decomposer);
            roles.insert(Role::QuestionGen);
        } else if (stage == kAugment) {
            roles.insert(Role::Composer);
        } else if (stage == kSynthesize) {
            roles.insert(Role::Responder);
            roles.insert(Role::Judge);
        }
    }
    return roles;
}

// Records (and on later runs, re-checks) the digests of files the run reads.
void check_inputs(const PipelineConfig& cfg, RunManifest& manifest, bool resuming) {
    const auto verify = [&](const std::string& name, const std::string& path) {
        if (path.empty() || !fs::exists(path)) return;
        const std::string digest = file_sha256_hex(path);
        auto it = manifest.input_digests.find(name);
        if (it != manifest.input_digests.end() && it->second != digest) {
            const std::string message =
                name + " at " + path + " has changed since this run directory was created";
            if (resuming) throw DigestMismatch(message);
            throw ConfigError(message);
        }
        manifest.input_digests[name] = digest;
    };
    verify("corpus", cfg.input_path);
    verify("replay_transcript", cfg.replay_path);
}

bool stage_should_append(const RunManifest& manifest, const std::string& stage) {
    auto it = manifest.stages.find(stage);
    if (it == manifest.stages.end()) return false;
    return it->second.state == StageState::Running || it->second.state == StageState::Failed;
}

}  // namespace

const std::vector<std::string>& all_stage_names() {
    static const std::vector<std::string> names{kDecompose, kComposerData, kAugment,
                                                kSynthesize, kEmit,         kDecontam,
                                                kStats};
    return names;
}

bool is_stage_name(const std::string& name) {
    const auto& names = all_stage_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

const std::vector<std::string>& stage_dependencies(const std::string& name) {
    static const std::map<std::string, std::vector<std::string>> deps{
        {kDecompose, {}},
        {kComposerData, {kDecompose}},
        {kAugment, {}},
        {kSynthesize, {kAugment}},
        {kEmit, {kSynthesize}},
        {kDecontam, {kEmit}},
        {kStats, {kSynthesize, kEmit}},
    };
    static const std::vector<std::string> none;
    auto it = deps.find(name);
    return it == deps.end() ? none : it->second;
}

OutDirLock::OutDirLock(const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path lock_path = dir / ".lock";
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw IoError("cannot open " + lock_path.string());
    }
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw IoError("another process is already working in " + dir.string());
    }
}

OutDirLock::~OutDirLock() {
    if (fd_ >= 0) ::close(fd_);
}

OutDirLock::OutDirLock(OutDirLock&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

OutDirLock& OutDirLock::operator=(OutDirLock&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

json reference_rates_json() {
    return json{
        {"note",
         "published reference values, shown for comparison only; nothing in this pipeline "
         "asserts or tunes toward them"},
        {"response_pass_rate_percent",
         {{"strong_to_weak", {{"c=1", 91.76}, {"c=2", 86.41}, {"c=3", 79.44}}},
          {"self_alignment", {{"c=1", 92.46}, {"c=2", 89.57}, {"c=3", 85.79}}}}},
        {"synthesis_yield_percent",
         {{"sft", 85.0},
          {"preference_pairs", 60.0},
          {"preference_pairs_denominator",
           "the published figure leaves the denominator open; summary.json reports the pair "
           "rate both per instruction and among instructions with a chosen response"}}},
    };
}

RunManifest run_pipeline(const PipelineConfig& cfg, std::vector<std::string> stages) {
    cfg.validate();
    if (cfg.out_dir.empty()) throw ConfigError("paths.out_dir is required");

    if (stages.empty()) stages = all_stage_names();
    for (const auto& stage : stages) {
        if (!is_stage_name(stage)) throw ConfigError("unknown stage: " + stage);
    }
    std::vector<std::string> ordered;
    for (const auto& name : all_stage_names()) {
        if (std::find(stages.begin(), stages.end(), name) != stages.end()) ordered.push_back(name);
    }

    const fs::path out(cfg.out_dir);
    OutDirLock lock(out);

    const std::string digest = cfg.digest();
    const fs::path manifest_path = out / "manifest.json";
    RunManifest manifest;
    if (fs::exists(manifest_path)) {
        manifest = load_manifest(manifest_path.string());
        if (manifest.config_digest != digest) {
            throw ConfigError("out_dir " + cfg.out_dir +
                              " was created by a different config; use a fresh out_dir or the "
                              "original config");
        }
    } else {
        manifest.config_digest = digest;
        manifest.seed = cfg.seed;
        manifest.run_id = make_run_id(digest, cfg.seed);
    }
    manifest.requested_stages = ordered;
    check_inputs(cfg, manifest, /*resuming=*/false);

    const std::set<std::string> will_run(ordered.begin(), ordered.end());
    for (const auto& stage : ordered) {
        for (const auto& dep : stage_dependencies(stage)) {
            if (!will_run.contains(dep) && !manifest.stage_done(dep)) {
                throw ConfigError("stage '" + stage + "' needs '" + dep +
                                  "' first; add it to --stages or run it in this out_dir");
            }
        }
    }

    PipelineCtx ctx{cfg, out, std::move(manifest), manifest_path};
    ctx.save();
    ctx.backends = build_backends(cfg, roles_for(ordered));

    for (const auto& stage : ordered) {
        execute_stage(ctx, stage, /*fresh=*/!stage_should_append(ctx.manifest, stage));
    }
    ctx.backends.flush_record();
    return std::move(ctx.manifest);
}

RunManifest resume_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    if (cfg.out_dir.empty()) throw ConfigError("paths.out_dir is required");

    const fs::path out(cfg.out_dir);
    const fs::path manifest_path = out / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw CorruptManifest("nothing to resume: no manifest at " + manifest_path.string());
    }

    OutDirLock lock(out);
    RunManifest manifest = load_manifest(manifest_path.string());
    if (manifest.config_digest != cfg.digest()) {
        throw DigestMismatch("the supplied config digests to " + cfg.digest() +
                             " but this run directory was created from " + manifest.config_digest);
    }
    check_inputs(cfg, manifest, /*resuming=*/true);

    std::vector<std::string> pending;
    for (const auto& stage : manifest.requested_stages) {
        if (!manifest.stage_done(stage)) pending.push_back(stage);
    }
    const std::set<std::string> pending_set(pending.begin(), pending.end());
    for (const auto& stage : pending) {
        for (const auto& dep : stage_dependencies(stage)) {
            if (!manifest.stage_done(dep) && !pending_set.contains(dep)) {
                throw ConfigError("stage '" + stage + "' needs '" + dep +
                                  "', which this run never requested");
            }
        }
    }

    PipelineCtx ctx{cfg, out, std::move(manifest), manifest_path};
    ctx.backends = build_backends(cfg, roles_for(pending));

    for (const auto& stage : pending) {
        execute_stage(ctx, stage, /*fresh=*/!stage_should_append(ctx.manifest, stage));
    }
    ctx.backends.flush_record();
    ctx.save();
    return std::move(ctx.manifest);
}

}  // namespace ultraif
