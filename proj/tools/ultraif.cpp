#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "ultraif/config.hpp"
#include "ultraif/decontam.hpp"
#include "ultraif/errors.hpp"
#include "ultraif/pipeline.hpp"

namespace {

using ultraif::ConfigError;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string replay;
    std::string record;
    std::string input;
    std::optional<int> parallelism;
    std::vector<std::string> endpoints;  // role=base_url
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "pipeline config JSON")->required();
    cmd->add_option("--seed", opts.seed, "override the run seed");
    cmd->add_option("--out-dir", opts.out_dir, "override paths.out_dir");
    cmd->add_option("--replay", opts.replay, "serve every model call from this transcript");
    cmd->add_option("--record", opts.record, "capture live model traffic to this transcript");
    cmd->add_option("--in", opts.input, "override paths.input");
    cmd->add_option("--parallelism", opts.parallelism, "worker threads for model calls");
    cmd->add_option("--model-endpoint", opts.endpoints,
                    "role=base_url override, e.g. responder=http://host:8000/v1")
        ->take_all();
}

ultraif::Role role_by_name(const std::string& name) {
    for (ultraif::Role role : ultraif::all_roles()) {
        if (name == ultraif::to_string(role)) return role;
    }
    throw ConfigError("unknown role: " + name);
}

ultraif::PipelineConfig effective_config(const CommonOpts& opts) {
    ultraif::PipelineConfig cfg = ultraif::PipelineConfig::load(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (!opts.replay.empty()) cfg.replay_path = opts.replay;
    if (!opts.record.empty()) cfg.record_path = opts.record;
    if (!opts.input.empty()) cfg.input_path = opts.input;
    if (opts.parallelism) cfg.parallelism = *opts.parallelism;
    for (const std::string& entry : opts.endpoints) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= entry.size()) {
            throw ConfigError("--model-endpoint expects role=base_url, got: " + entry);
        }
        cfg.roles[role_by_name(entry.substr(0, eq))].base_url = entry.substr(eq + 1);
    }
    return cfg;
}

std::map<int, double> parse_mix(const std::string& text) {
    std::map<int, double> mix;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        const std::string part = text.substr(start, comma - start);
        start = comma + 1;
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--mix expects level=share pairs, got: " + part);
        }
        try {
            std::size_t used = 0;
            const int level = std::stoi(part.substr(0, eq), &used);
            if (used != eq) throw std::invalid_argument(part);
            const std::string share_text = part.substr(eq + 1);
            const double share = std::stod(share_text, &used);
            if (used != share_text.size()) throw std::invalid_argument(part);
            mix[level] = share;
        } catch (const std::exception&) {
            throw ConfigError("--mix has a malformed entry: " + part);
        }
    }
    if (mix.empty()) throw ConfigError("--mix is empty");
    return mix;
}

std::vector<std::pair<std::string, std::filesystem::path>> parse_benches(
    const std::vector<std::string>& entries) {
    std::vector<std::pair<std::string, std::filesystem::path>> benches;
    for (const std::string& entry : entries) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= entry.size()) {
            throw ConfigError("--bench expects name=path, got: " + entry);
        }
        benches.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
    }
    return benches;
}

void print_run_result(const ultraif::RunManifest& manifest, const std::string& out_dir) {
    std::printf("run %s complete; manifest: %s/manifest.json\n", manifest.run_id.c_str(),
                out_dir.c_str());
}

int dispatch(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ultraif::DigestMismatch& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 4;
    } catch (const ultraif::CorruptManifest& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 4;
    } catch (const ultraif::BadMix& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    } catch (const ConfigError& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    } catch (const ultraif::Error& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 3;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"instruction-following data synthesis pipeline"};
    app.require_subcommand(1);
    std::function<int()> action;

    // run / resume
    CommonOpts run_opts;
    std::vector<std::string> run_stages;
    CLI::App* run_cmd = app.add_subcommand("run", "execute pipeline stages");
    add_common(run_cmd, run_opts);
    run_cmd->add_option("--stages", run_stages, "subset of stages, in any order")
        ->delimiter(',');
    run_cmd->callback([&] {
        action = [&]() {
            return dispatch([&] {
                ultraif::PipelineConfig cfg = effective_config(run_opts);
                const auto manifest = ultraif::run_pipeline(cfg, run_stages);
                print_run_result(manifest, cfg.out_dir);
            });
        };
    });

    CommonOpts resume_opts;
    CLI::App* resume_cmd = app.add_subcommand("resume", "finish an interrupted run");
    add_common(resume_cmd, resume_opts);
    resume_cmd->callback([&] {
        action = [&]() {
            return dispatch([&] {
                ultraif::PipelineConfig cfg = effective_config(resume_opts);
                const auto manifest = ultraif::resume_pipeline(cfg);
                print_run_result(manifest, cfg.out_dir);
            });
        };
    });

    // Single-stage shortcuts.
    struct StageCmd {
        const char* name;
        const char* help;
    };
    const StageCmd plain_stages[] = {
        {"decompose", "split instructions into constraints and simpler queries"},
        {"composer-data", "build composer training pairs from decompositions"},
        {"stats", "write summary.json for a finished run"},
    };
    std::vector<CommonOpts> plain_opts(std::size(plain_stages));
    for (std::size_t i = 0; i < std::size(plain_stages); ++i) {
        CLI::App* cmd = app.add_subcommand(plain_stages[i].name, plain_stages[i].help);
        add_common(cmd, plain_opts[i]);
        const std::string stage_name = plain_stages[i].name;
        CommonOpts* opts = &plain_opts[i];
        cmd->callback([&action, opts, stage_name] {
            action = [opts, stage_name]() {
                return dispatch([&] {
                    ultraif::PipelineConfig cfg = effective_config(*opts);
                    const auto manifest = ultraif::run_pipeline(cfg, {stage_name});
                    print_run_result(manifest, cfg.out_dir);
                });
            };
        });
    }

    CommonOpts augment_opts;
    std::optional<int> augment_iterations;
    std::string augment_mix;
    CLI::App* augment_cmd =
        app.add_subcommand("augment", "fold constraints into instructions iteratively");
    add_common(augment_cmd, augment_opts);
    augment_cmd->add_option("--iterations", augment_iterations,
                            "constraints to fold into every instruction (0-3)");
    augment_cmd->add_option("--mix", augment_mix,
                            "complexity mix, e.g. 1=0.3,2=0.4,3=0.3 (overrides --iterations)");
    augment_cmd->callback([&] {
        action = [&]() {
            return dispatch([&] {
                ultraif::PipelineConfig cfg = effective_config(augment_opts);
                if (augment_iterations) {
                    cfg.augment_iterations = *augment_iterations;
                    cfg.augment_mix.clear();
                }
                if (!augment_mix.empty()) cfg.augment_mix = parse_mix(augment_mix);
                const auto manifest = ultraif::run_pipeline(cfg, {"augment"});
                print_run_result(manifest, cfg.out_dir);
            });
        };
    });

    CommonOpts synth_opts;
    std::optional<int> synth_k;
    CLI::App* synth_cmd =
        app.add_subcommand("synthesize", "sample responses and judge them against questions");
    add_common(synth_cmd, synth_opts);
    synth_cmd->add_option("--k", synth_k, "responses sampled per instruction");
    synth_cmd->callback([&] {
        action = [&]() {
            return dispatch([&] {
                ultraif::PipelineConfig cfg = effective_config(synth_opts);
                if (synth_k) cfg.k = *synth_k;
                const auto manifest = ultraif::run_pipeline(cfg, {"synthesize"});
                print_run_result(manifest, cfg.out_dir);
            });
        };
    });

    CommonOpts emit_opts;
    std::string emit_format;
    std::optional<int> emit_iter_plan;
    bool emit_nca_on = false;
    bool emit_nca_off = false;
    CLI::App* emit_cmd = app.add_subcommand("emit", "write SFT and preference training files");
    add_common(emit_cmd, emit_opts);
    emit_cmd->add_option("--format", emit_format, "sft, pref, or both (default both)");
    emit_cmd->add_option("--iter-plan", emit_iter_plan, "preference iterations (slices c=1..N)");
    emit_cmd->add_flag("--nca-final", emit_nca_on,
                       "switch the final preference iteration to the NCA objective");
    emit_cmd->add_flag("--no-nca-final", emit_nca_off, "keep DPO for every iteration");
    emit_cmd->callback([&] {
        action = [&]() {
            return dispatch([&] {
                if (emit_nca_on && emit_nca_off) {
                    throw ConfigError("--nca-final and --no-nca-final are mutually exclusive");
                }
                ultraif::PipelineConfig cfg = effective_config(emit_opts);
                if (!emit_format.empty()) cfg.emit_format = ultraif::emit_format_from_string(emit_format);
                if (emit_iter_plan) cfg.emit_iterations = *emit_iter_plan;
                if (emit_nca_on) cfg.nca_final = true;
                if (emit_nca_off) cfg.nca_final = false;
                const auto manifest = ultraif::run_pipeline(cfg, {"emit"});
                print_run_result(manifest, cfg.out_dir);
            });
        };
    });

    // decontam runs standalone when --train is given, otherwise as a stage.
    CommonOpts decontam_opts;
    std::vector<std::string> train_files;
    std::vector<std::string> bench_entries;
    std::optional<int> decontam_n;
    std::string decontam_fields;
    std::optional<int> decontam_max_flagged;
    std::string decontam_report;
    CLI::App* decontam_cmd =
        app.add_subcommand("decontam", "n-gram overlap scan of training data against benchmarks");
    decontam_cmd->add_option("--config", decontam_opts.config_path,
                             "pipeline config JSON (stage mode)");
    decontam_cmd->add_option("--seed", decontam_opts.seed, "override the run seed");
    decontam_cmd->add_option("--out-dir", decontam_opts.out_dir, "override paths.out_dir");
    decontam_cmd->add_option("--train", train_files,
                             "training JSONL; standalone mode, repeatable")
        ->take_all();
    decontam_cmd->add_option("--bench", bench_entries, "benchmark as name=path, repeatable")
        ->take_all();
    decontam_cmd->add_option("--n", decontam_n, "n-gram size (default 13)");
    decontam_cmd->add_option("--fields", decontam_fields, "prompt, response, or both");
    decontam_cmd->add_option("--max-flagged", decontam_max_flagged,
                             "cap on flagged examples kept in the report");
    decontam_cmd->add_option("--report", decontam_report, "write the JSON report here");
    decontam_cmd->callback([&] {
        action = [&]() {
            return dispatch([&] {
                if (!train_files.empty()) {
                    std::vector<std::filesystem::path> train(train_files.begin(),
                                                             train_files.end());
                    const auto benches = parse_benches(bench_entries);
                    const int n = decontam_n.value_or(13);
                    const ultraif::FieldMode mode =
                        decontam_fields.empty() ? ultraif::FieldMode::Both
                                                : ultraif::field_mode_from_string(decontam_fields);
                    const auto cap = static_cast<std::size_t>(
                        std::max(0, decontam_max_flagged.value_or(20)));
                    const ultraif::ContaminationReport report =
                        ultraif::scan_many(train, benches, n, mode, cap);
                    std::fputs(ultraif::format_report_table(report).c_str(), stdout);
                    if (!decontam_report.empty()) {
                        ultraif::write_text_file_atomic(
                            decontam_report, ultraif::report_to_json(report).dump(2) + "\n");
                    }
                    return;
                }
                if (decontam_opts.config_path.empty()) {
                    throw ConfigError("decontam needs --train files or --config");
                }
                ultraif::PipelineConfig cfg = effective_config(decontam_opts);
                if (!bench_entries.empty()) {
                    cfg.benchmarks.clear();
                    for (const auto& [name, path] : parse_benches(bench_entries)) {
                        cfg.benchmarks.emplace_back(name, path.string());
                    }
                }
                if (decontam_n) cfg.decontam_n = *decontam_n;
                if (!decontam_fields.empty()) {
                    cfg.decontam_fields = ultraif::field_mode_from_string(decontam_fields);
                }
                if (decontam_max_flagged) cfg.decontam_max_flagged = *decontam_max_flagged;
                const auto manifest = ultraif::run_pipeline(cfg, {"decontam"});
                print_run_result(manifest, cfg.out_dir);
            });
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    return action ? action() : 0;
}
