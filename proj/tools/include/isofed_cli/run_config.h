#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "isofed/errors.h"
#include "isofed/orchestrator.h"

namespace isofed::cli {

/// Error at a specific line of a run-config document.
class ConfigLineError : public ConfigError {
 public:
  ConfigLineError(std::size_t line, const std::string& what)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Everything one `run` or `partition` invocation needs.
///
/// The file format is flat INI: `[section]` headers, `key = value` lines,
/// `#` or `;` comments. Unknown sections or keys are rejected. Relative
/// paths are resolved against the config file's directory.
struct RunConfig {
  ExperimentConfig experiment;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path out_dir;
  /// Whether [partition] seed was given; otherwise it follows experiment.seed.
  bool partition_seed_set = false;

  /// Sets the experiment seed, and the partition seed unless pinned.
  void set_seed(std::uint64_t seed);
};

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Every field with its effective value, in the same format the parser
/// reads, so the output can be fed back in.
std::string render_run_config(const RunConfig& config);

}  // namespace isofed::cli
