#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace modev {

struct ConfigKey {
    const char* key;
    const char* fallback;
    const char* help;
};

/// Every accepted config key with its default, in manifest order.
const std::vector<ConfigKey>& config_keys();

/// Experiment kinds, one per CLI subcommand (report excluded).
const std::vector<std::string>& experiment_kinds();

/// Plain `key = value` experiment description. Unknown keys are rejected
/// with a ConfigError naming the key.
class ExperimentConfig {
public:
    /// Lines of `key = value`; '#' starts a comment.
    static ExperimentConfig from_text(const std::string& text);
    /// The "config" object of a manifest written by run_experiment.
    static ExperimentConfig from_manifest(const std::string& json_text);
    /// Reads a file in either format (a manifest starts with '{').
    static ExperimentConfig load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    [[nodiscard]] const std::string& get(const std::string& key) const;
    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) > 0; }
    /// All keys with defaults filled in, in config_keys() order.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> resolved() const;

private:
    std::map<std::string, std::string> values_;
};

struct RunOptions {
    /// Subcommand; must agree with an `experiment` key when the config has one.
    std::string experiment;
    /// Worker threads; unset means the hardware concurrency. Never recorded.
    std::optional<unsigned> workers;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_dir;
    bool quiet = false;
};

struct RunResult {
    std::string output_dir;
    std::vector<std::string> artifacts;
    std::string manifest_path;
};

/// Validates the whole config, runs the experiment and writes its artifacts
/// plus manifest.json. Throws ConfigError before any compute on bad input.
RunResult run_experiment(ExperimentConfig config, const RunOptions& options);

/// CLI wrapper: 0 on success, 2 on ConfigError, 1 on any other failure.
/// Messages go to standard error.
int run_config(const std::string& path, const RunOptions& options);

/// Aggregates every manifest and results CSV under `results_dir` into
/// summary.json (written to `out_dir`, default `results_dir`) and returns
/// its text. Throws EmptyDirError when no CSV is found.
std::string emit_report(const std::string& results_dir, const std::optional<std::string>& out_dir = std::nullopt);

}  // namespace modev
