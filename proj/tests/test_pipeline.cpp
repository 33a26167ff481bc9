#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "ultraif/pipeline.hpp"

#include "ultraif/errors.hpp"
#include "ultraif/hashing.hpp"
#include "ultraif/jsonl.hpp"
#include "support.hpp"

using namespace ultraif;
using namespace testsupport;

namespace {

// Data files whose bytes must match between two runs of the same fixture.
// summary.json is excluded: its run_id hashes the config, which embeds the
// out_dir path.
const std::vector<std::string> kDataFiles = {
    "decomposed.jsonl", "composer_train.jsonl", "augmented.jsonl",
    "outcomes.jsonl",   "stats.json",           "sft.jsonl",
    "pref_iter1.jsonl", "pref_iter2.jsonl",     "pref_iter3.jsonl",
    "plan.json",        "decontam_report.json",
};

json summary_without_run_id(const fs::path& out_dir) {
    json doc = json::parse(read_bytes(out_dir / "summary.json"));
    doc.erase("run_id");
    return doc;
}

void expect_same_outputs(const fs::path& a, const fs::path& b) {
    for (const auto& name : kDataFiles) {
        INFO("comparing ", name);
        CHECK(read_bytes(a / name) == read_bytes(b / name));
    }
    CHECK(summary_without_run_id(a) == summary_without_run_id(b));
}

}  // namespace

TEST_CASE("stage names are ordered and recognized") {
    const auto& names = all_stage_names();
    const std::vector<std::string> expected{"decompose", "composer-data", "augment",
                                            "synthesize", "emit",          "decontam",
                                            "stats"};
    CHECK(names == expected);
    for (const auto& name : names) CHECK(is_stage_name(name));
    CHECK_FALSE(is_stage_name("decontaminate"));
    CHECK_FALSE(is_stage_name(""));
}

TEST_CASE("stage dependencies form the expected graph") {
    CHECK(stage_dependencies("decompose").empty());
    CHECK(stage_dependencies("augment").empty());
    CHECK(stage_dependencies("composer-data") == std::vector<std::string>{"decompose"});
    CHECK(stage_dependencies("synthesize") == std::vector<std::string>{"augment"});
    CHECK(stage_dependencies("emit") == std::vector<std::string>{"synthesize"});
    CHECK(stage_dependencies("decontam") == std::vector<std::string>{"emit"});
    CHECK(stage_dependencies("stats") == std::vector<std::string>{"synthesize", "emit"});
    CHECK(stage_dependencies("no-such-stage").empty());
}

TEST_CASE("out-dir lock excludes a second holder and releases on destruction") {
    TempDir dir;
    {
        OutDirLock first(dir.path);
        CHECK(first.held());
        CHECK_THROWS_AS(OutDirLock{dir.path}, IoError);

        OutDirLock moved(std::move(first));
        CHECK(moved.held());
        CHECK_FALSE(first.held());
        CHECK_THROWS_AS(OutDirLock{dir.path}, IoError);
    }
    OutDirLock again(dir.path);
    CHECK(again.held());
}

TEST_CASE("full replay run produces every output and a done manifest") {
    TempDir dir;
    const auto scenarios = standard_scenarios();
    PipelineConfig cfg = stage_fixture_run(dir, scenarios, 42, 2);

    const RunManifest manifest = run_pipeline(cfg);

    CHECK(manifest.requested_stages == all_stage_names());
    for (const auto& stage : all_stage_names()) {
        INFO("stage ", stage);
        CHECK(manifest.stage_done(stage));
    }

    const fs::path out = cfg.out_dir;
    for (const auto& name : kDataFiles) {
        INFO("output ", name);
        CHECK(fs::exists(out / name));
    }
    CHECK(fs::exists(out / "summary.json"));
    CHECK(fs::exists(out / "manifest.json"));

    // inst-001 earns a pair, inst-003 passes vacuously, inst-002 is dropped.
    // Records keep corpus order, so the first is inst-001, the second inst-003.
    const auto sft = read_committed_lines(out / "sft.jsonl");
    REQUIRE(sft.size() == 2);
    CHECK(sft[0]["messages"].back()["content"] == "Merkle tree answer variant 1.");
    CHECK(sft[0]["questions"].size() == 2);

    // inst-003's two-turn history must survive into the prompt messages.
    const json& conv = sft[1]["messages"];
    REQUIRE(conv.size() == 4);
    CHECK(conv[0]["role"] == "user");
    CHECK(conv[0]["content"] == "I am building a signup page.");
    CHECK(conv[2]["content"] ==
          "Design a html form with form tags, a submit button, and labels.");
    CHECK(conv[3]["role"] == "assistant");
    CHECK(conv[3]["content"] == "<form>variant 1</form>");

    // Both fixtures ran two compose iterations, so the one pair lands in c=2.
    CHECK(read_committed_lines(out / "pref_iter1.jsonl").empty());
    CHECK(read_committed_lines(out / "pref_iter3.jsonl").empty());
    const auto pairs = read_committed_lines(out / "pref_iter2.jsonl");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0]["chosen"] == "Merkle tree answer variant 1.");
    CHECK(pairs[0]["rejected"] == "Merkle tree answer variant 2.");
    CHECK(pairs[0]["prompt_messages"].back()["role"] == "user");

    const json summary = json::parse(read_bytes(out / "summary.json"));
    CHECK(summary["run_id"] == manifest.run_id);
    CHECK(summary["pair_yield"]["instructions_total"] == 3);
    CHECK(summary["pair_yield"]["with_chosen"] == 2);
    CHECK(summary["pair_yield"]["with_pair"] == 1);
    CHECK(summary["training_files"]["sft_records"] == 2);
    CHECK(summary["training_files"]["pref_iter2"] == 1);
    CHECK(summary["training_files"]["unassigned_pairs"] == 0);
    CHECK(summary.contains("reference_rates"));

    // All six candidate responses sit at complexity 2; three pass.
    const json stats = json::parse(read_bytes(out / "stats.json"));
    const json& c2 = stats["pass_rate"]["per_constraint_level"]["c=2"];
    CHECK(c2["responses_total"] == 6);
    CHECK(c2["responses_all_yes"] == 3);
    CHECK(c2["rate"] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(stats["pass_rate"]["instruction_level"]["with_chosen"] == 2);
}

TEST_CASE("two runs of the same fixture are byte-identical") {
    TempDir dir;
    const auto scenarios = standard_scenarios();
    PipelineConfig first = stage_fixture_run(dir, scenarios, 7, 2, "out-a");
    run_pipeline(first);

    PipelineConfig second = stage_fixture_run(dir, scenarios, 7, 2, "out-b");
    run_pipeline(second);

    expect_same_outputs(first.out_dir, second.out_dir);
}

TEST_CASE("interrupted synthesize resumes from the last committed record") {
    TempDir dir;
    const auto scenarios = standard_scenarios();

    PipelineConfig reference = stage_fixture_run(dir, scenarios, 11, 2, "pristine");
    run_pipeline(reference);

    PipelineConfig cfg = stage_fixture_run(dir, scenarios, 11, 2, "crashed");
    run_pipeline(cfg);
    const fs::path out = cfg.out_dir;

    // Rewind the directory to what a crash mid-synthesize leaves behind:
    // one committed outcome gone, a torn half-line at the tail, the stage
    // marked running, and nothing downstream.
    {
        auto outcomes = read_committed_lines(out / "outcomes.jsonl");
        REQUIRE(outcomes.size() == 3);
        JsonlWriter rewrite(out / "outcomes.jsonl");
        rewrite.write(outcomes[0]);
        rewrite.write(outcomes[1]);
        rewrite.close();
        std::ofstream torn(out / "outcomes.jsonl", std::ios::app | std::ios::binary);
        torn << "{\"root_id\": \"inst-0";
    }
    {
        json doc = json::parse(read_bytes(out / "manifest.json"));
        doc["stages"]["synthesize"]["state"] = "running";
        doc["stages"]["synthesize"]["outputs"] = json::object();
        doc["stages"].erase("emit");
        doc["stages"].erase("decontam");
        doc["stages"].erase("stats");
        write_text_file_atomic(out / "manifest.json", doc.dump(2) + "\n");
    }
    for (const auto& name : {"stats.json", "sft.jsonl", "pref_iter1.jsonl", "pref_iter2.jsonl",
                             "pref_iter3.jsonl", "plan.json", "decontam_report.json",
                             "summary.json"}) {
        fs::remove(out / name);
    }

    const RunManifest resumed = resume_pipeline(cfg);
    for (const auto& stage : all_stage_names()) CHECK(resumed.stage_done(stage));

    // Two records were already committed, so the resumed stage only had to
    // produce the third.
    CHECK(resumed.stages.at("synthesize").counters.processed == 3);
    CHECK(resumed.stages.at("synthesize").counters.skipped == 0);

    expect_same_outputs(out, reference.out_dir);
}

TEST_CASE("resume with everything done is a no-op") {
    TempDir dir;
    PipelineConfig cfg = stage_fixture_run(dir, standard_scenarios(), 5, 2);
    run_pipeline(cfg);

    const std::string before = read_bytes(fs::path(cfg.out_dir) / "outcomes.jsonl");
    const RunManifest manifest = resume_pipeline(cfg);
    for (const auto& stage : all_stage_names()) CHECK(manifest.stage_done(stage));
    CHECK(read_bytes(fs::path(cfg.out_dir) / "outcomes.jsonl") == before);
}

TEST_CASE("a locked out_dir rejects a concurrent run") {
    TempDir dir;
    PipelineConfig cfg = stage_fixture_run(dir, standard_scenarios(), 3, 2);
    OutDirLock holder{fs::path(cfg.out_dir)};
    CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("already working"), IoError);
    CHECK_THROWS_AS(resume_pipeline(cfg), CorruptManifest);  // no manifest yet wins
}

TEST_CASE("stage selection validates names and dependencies") {
    TempDir dir;
    PipelineConfig cfg = stage_fixture_run(dir, standard_scenarios(), 9, 2);

    CHECK_THROWS_WITH_AS(run_pipeline(cfg, {"polish"}), doctest::Contains("unknown stage"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(run_pipeline(cfg, {"emit"}),
                         doctest::Contains("needs 'synthesize'"), ConfigError);
    CHECK_THROWS_WITH_AS(run_pipeline(cfg, {"composer-data"}),
                         doctest::Contains("needs 'decompose'"), ConfigError);

    // Listing a stage with its dependency works, in either order.
    const RunManifest partial = run_pipeline(cfg, {"composer-data", "decompose"});
    CHECK(partial.stage_done("decompose"));
    CHECK(partial.stage_done("composer-data"));
    CHECK_FALSE(partial.stage_done("augment"));

    // Once a dependency is recorded done, a later invocation may build on it.
    const RunManifest extended = run_pipeline(cfg, {"augment", "synthesize"});
    CHECK(extended.stage_done("synthesize"));
    CHECK(extended.stage_done("decompose"));  // carried over from before

    // The final derived stages complete the directory.
    const RunManifest finished = run_pipeline(cfg, {"emit", "decontam", "stats"});
    for (const auto& stage : all_stage_names()) CHECK(finished.stage_done(stage));
}

TEST_CASE("an out_dir refuses a config it was not created with") {
    TempDir dir;
    PipelineConfig cfg = stage_fixture_run(dir, standard_scenarios(), 21, 2);
    run_pipeline(cfg, {"decompose"});

    PipelineConfig other = cfg;
    other.seed = 22;
    CHECK_THROWS_WITH_AS(run_pipeline(other, {"decompose"}),
                         doctest::Contains("different config"), ConfigError);
    CHECK_THROWS_AS(resume_pipeline(other), DigestMismatch);
}

TEST_CASE("resume without a manifest reports nothing to resume") {
    TempDir dir;
    PipelineConfig cfg = stage_fixture_run(dir, standard_scenarios(), 2, 2);
    CHECK_THROWS_WITH_AS(resume_pipeline(cfg), doctest::Contains("nothing to resume"),
                         CorruptManifest);
}

TEST_CASE("a corpus edited after the first run is refused") {
    TempDir dir;
    PipelineConfig cfg = stage_fixture_run(dir, standard_scenarios(), 13, 2);
    run_pipeline(cfg, {"decompose"});

    {
        std::ofstream tweak(cfg.input_path, std::ios::app | std::ios::binary);
        tweak << json{{"id", "inst-999"}, {"text", "Another instruction."}}.dump() << "\n";
    }
    CHECK_THROWS_WITH_AS(run_pipeline(cfg, {"augment"}), doctest::Contains("has changed"),
                         ConfigError);
    CHECK_THROWS_AS(resume_pipeline(cfg), DigestMismatch);
}

TEST_CASE("per-record replay misses become skipped lines, not a failed stage") {
    TempDir dir;
    const auto scenarios = standard_scenarios();
    PipelineConfig cfg = stage_fixture_run(dir, scenarios, 31, 2);
    cfg.seed = 32;  // every request now fingerprints off-transcript

    const RunManifest manifest = run_pipeline(cfg, {"decompose"});
    CHECK(manifest.stage_done("decompose"));
    CHECK(manifest.stages.at("decompose").counters.processed == 0);
    CHECK(manifest.stages.at("decompose").counters.skipped == 3);

    const auto lines = read_committed_lines(fs::path(cfg.out_dir) / "decomposed.jsonl");
    REQUIRE(lines.size() == 3);
    for (const auto& line : lines) {
        CHECK(line["skipped"] == true);
        CHECK(line["reason"].get<std::string>().find("no transcript entry") !=
              std::string::npos);
    }
}

TEST_CASE("a recorded transcript replays into identical outputs") {
    TempDir dir;
    const auto scenarios = standard_scenarios();
    PipelineConfig cfg = stage_fixture_run(dir, scenarios, 17, 2, "out-live");
    cfg.record_path = dir.file("recorded.jsonl").string();
    run_pipeline(cfg);

    ReplayTranscript recorded = ReplayTranscript::load(cfg.record_path);
    CHECK(recorded.source_backend == "replay");
    // 3 decompositions + 2 questions + 6 compositions + 3 responses + 4 judgments
    CHECK(recorded.size() == 18);

    PipelineConfig again = stage_fixture_run(dir, scenarios, 17, 2, "out-replayed");
    again.replay_path = cfg.record_path;
    run_pipeline(again);

    expect_same_outputs(cfg.out_dir, again.out_dir);
}

TEST_CASE("reference rates are annotations with an explicit disclaimer") {
    const json rates = reference_rates_json();
    CHECK(rates["note"].get<std::string>().find("comparison only") != std::string::npos);
    CHECK(rates["response_pass_rate_percent"]["strong_to_weak"]["c=1"] == 91.76);
    CHECK(rates["response_pass_rate_percent"]["self_alignment"]["c=3"] == 85.79);
    CHECK(rates["synthesis_yield_percent"]["sft"] == 85.0);
    CHECK(rates["synthesis_yield_percent"]["preference_pairs"] == 60.0);
}

TEST_CASE("the command line tool maps failures to distinct exit codes") {
    TempDir dir;
    const auto scenarios = standard_scenarios();
    PipelineConfig cfg = stage_fixture_run(dir, scenarios, 23, 2, "cli-out");
    const std::string config = dir.file("config.json").string();
    write_text_file_atomic(config, cfg.to_json().dump(2) + "\n");

    const auto run_cli = [&](const std::string& args) {
        const std::string cmd = std::string(ULTRAIF_CLI_PATH) + " " + args + " >" +
                                dir.file("stdout.txt").string() + " 2>" +
                                dir.file("stderr.txt").string();
        const int status = std::system(cmd.c_str());
        REQUIRE(status != -1);
        REQUIRE(WIFEXITED(status));
        return WEXITSTATUS(status);
    };

    CHECK(run_cli("run --config " + config) == 0);
    CHECK(read_bytes(dir.file("stdout.txt")).find("complete; manifest:") != std::string::npos);
    CHECK(fs::exists(dir.file("cli-out") / "sft.jsonl"));

    // A finished run resumes as a no-op.
    CHECK(run_cli("resume --config " + config) == 0);

    // Bad invocations and rejected configs share code 2: fix the command line.
    CHECK(run_cli("run") == 2);
    write_text_file_atomic(dir.file("typo.json"), "{\"sed\": 7}\n");
    CHECK(run_cli("run --config " + dir.file("typo.json").string()) == 2);

    // Runtime failure that is not a config mistake: the transcript is gone.
    CHECK(run_cli("run --config " + config + " --out-dir " +
                  dir.file("cli-out2").string() + " --replay " +
                  dir.file("missing.jsonl").string()) == 3);

    // Stale-state conflicts get their own code so wrappers can clean up.
    CHECK(run_cli("resume --config " + config + " --out-dir " +
                  dir.file("never-ran").string()) == 4);
    CHECK(run_cli("resume --config " + config + " --seed 999") == 4);
}

TEST_CASE("standalone overlap scans print a table without touching a run") {
    TempDir dir;
    {
        JsonlWriter train(dir.file("train.jsonl"));
        train.write(json{{"text", "the cat sat on the mat"}});
        JsonlWriter bench(dir.file("bench.jsonl"));
        bench.write(json{{"text", "the cat ran"}});
    }

    const std::string cmd = std::string(ULTRAIF_CLI_PATH) + " decontam --train " +
                            dir.file("train.jsonl").string() + " --bench mini=" +
                            dir.file("bench.jsonl").string() + " --n 2 --report " +
                            dir.file("report.json").string() + " >" +
                            dir.file("table.txt").string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    CHECK(WEXITSTATUS(status) == 0);

    // "the cat" matches, "cat ran" does not.
    const std::string table = read_bytes(dir.file("table.txt"));
    CHECK(table.find("mini") != std::string::npos);
    CHECK(table.find("0.5000") != std::string::npos);

    const json report = json::parse(read_bytes(dir.file("report.json")));
    CHECK(report["n"] == 2);
    CHECK(report["train_documents"] == 1);
    CHECK(report["per_benchmark"]["mini"]["ratio"] == 0.5);
}
