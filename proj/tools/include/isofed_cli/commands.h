#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace isofed::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,  // bad config, bad file format, shape mismatch, refusal
  kExitIo = 3,
};

struct RunOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool force = false;
};

struct PartitionOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
};

struct SynthOptions {
  std::filesystem::path out;
  std::size_t classes = 8;
  std::size_t samples = 8000;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
};

// Each command reports to `out` and diagnostics to `err`; exceptions are
// mapped to exit codes, never propagated.
int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_partition(const PartitionOptions& opts, std::ostream& out, std::ostream& err);
int cmd_synth(const SynthOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);

inline constexpr const char* kResolvedConfigFile = "resolved_config.ini";
inline constexpr const char* kPartitionFile = "partition.csv";

}  // namespace isofed::cli
