#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ultraif/config.hpp"
#include "ultraif/manifest.hpp"

namespace ultraif {

// Stage names in canonical execution order.
const std::vector<std::string>& all_stage_names();
bool is_stage_name(const std::string& name);

// Direct prerequisites of a stage (stage names).
const std::vector<std::string>& stage_dependencies(const std::string& name);

// Holds an exclusive advisory lock on <dir>/.lock for the lifetime of the
// object. A second locker on the same directory fails fast (IoError), and a
// killed process releases the lock automatically.
class OutDirLock {
public:
    OutDirLock() = default;
    explicit OutDirLock(const std::filesystem::path& dir);
    ~OutDirLock();
    OutDirLock(OutDirLock&& other) noexcept;
    OutDirLock& operator=(OutDirLock&& other) noexcept;
    OutDirLock(const OutDirLock&) = delete;
    OutDirLock& operator=(const OutDirLock&) = delete;

    bool held() const { return fd_ >= 0; }

private:
    int fd_ = -1;
};

// Runs the requested stages (all stages when the list is empty) against
// cfg.out_dir, creating or extending manifest.json there. Stage outputs are
// committed line by line, so an interrupted run leaves a resumable directory.
RunManifest run_pipeline(const PipelineConfig& cfg, std::vector<std::string> stages = {});

// Finishes the run recorded in <out_dir>/manifest.json: completed stages are
// skipped, interrupted sampling stages continue from their last committed
// record, and derived stages are rebuilt. The supplied config must digest to
// the manifest's config_digest (DigestMismatch otherwise).
RunManifest resume_pipeline(const PipelineConfig& cfg);

// Published reference rates emitted alongside computed statistics. These are
// annotations for eyeballing, never assertions.
json reference_rates_json();

}  // namespace ultraif
