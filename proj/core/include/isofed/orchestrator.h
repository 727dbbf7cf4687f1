#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "isofed/aggregation.h"
#include "isofed/data.h"
#include "isofed/metrics.h"
#include "isofed/model.h"
#include "isofed/training.h"

namespace isofed {

enum class Method {
  kIsoFed,             // isolated two-phase aggregation with IM pretraining
  kIsoFedNoPT,         // the same without pretraining
  kMtWFedAvg,          // mean teacher + one joint dynamic-weighted aggregation
  kSupervisedWFedAvg,  // every client labeled, CE everywhere
};

const char* method_name(Method method);
Method parse_method(std::string_view text);

enum class PretrainScope { kAll, kUnlabeledOnly };

const char* pretrain_scope_name(PretrainScope scope);
PretrainScope parse_pretrain_scope(std::string_view text);

enum class Phase { kInit, kUnlabeled, kLabeled, kJoint };

const char* phase_name(Phase phase);

struct ExperimentConfig {
  Method method = Method::kIsoFed;
  std::size_t rounds = 100;
  std::size_t labeled_epochs = 1;
  std::size_t unlabeled_epochs = 1;
  /// Shared local-training settings; local_epochs is taken from the
  /// per-group counts above.
  TrainerConfig trainer;
  /// Overrides trainer.lr for unlabeled clients when set.
  std::optional<double> unlabeled_lr;
  AggregationConfig aggregation;
  PartitionSpec partition;
  /// Layer widths. Input channels, class count and image size are taken
  /// from the training data.
  ModelConfig model;
  std::size_t eval_every = 1;
  bool eval_initial = true;
  std::uint64_t seed = 0;
  PretrainScope pretrain_scope = PretrainScope::kAll;
  bool allow_flip = true;
  std::size_t threads = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// IM pretraining epochs actually applied for a client of `role`.
  std::size_t pretrain_epochs_for(ClientRole role) const;
  /// Trainer settings for a client of `role`.
  TrainerConfig trainer_for(ClientRole role) const;
};

/// One aggregation barrier, as recorded in the round trace.
struct PhaseTrace {
  std::size_t round = 0;
  Phase phase = Phase::kJoint;
  std::vector<std::size_t> client_ids;
  std::vector<ClientRole> roles;
  std::vector<std::size_t> sample_counts;
  AggregationScheme scheme = AggregationScheme::kDynamicWeighted;
  std::vector<double> coefficients;
  double pre_norm = 0.0;
  double post_norm = 0.0;
};

/// JSON object on one line.
std::string trace_json_line(const PhaseTrace& trace);

struct GlobalState {
  ModelParams global;
  /// Last teacher/student pair of each client (empty for labeled ones).
  /// Teachers are re-initialized from the incoming global model each round;
  /// this is kept for inspection only.
  std::vector<TeacherStudent> teachers;
  std::size_t round = 0;
  std::vector<PhaseTrace> trace;
};

/// Server plus simulated clients for one run. Client training within a
/// phase runs on up to `threads` workers; each client's generator is keyed by
/// (seed, round, client, purpose), so results do not depend on scheduling.
class Federation {
 public:
  Federation(ExperimentConfig config, const Dataset& train, std::vector<ClientShard> shards,
             NormStats stats);

  const ExperimentConfig& config() const { return config_; }
  const std::vector<ClientShard>& shards() const { return shards_; }
  const NormStats& stats() const { return stats_; }
  const ModelConfig& model_config() const { return model_; }

  /// Round-0 state with the seeded random initial model.
  GlobalState initial_state() const;

  /// Unlabeled phase (pretrain, mean-teacher, aggregate unlabeled uploads)
  /// followed by labeled phase (pretrain, CE, aggregate labeled uploads).
  void run_isofed_round(GlobalState& state) const;
  /// Every client trains from the same global model; one joint aggregation.
  void run_mt_wfedavg_round(GlobalState& state) const;
  /// All clients labeled; CE everywhere and one aggregation.
  void run_supervised_round(GlobalState& state) const;
  /// Dispatches on config().method.
  void run_round(GlobalState& state) const;

  /// Phase label attached to metrics after a round of this method.
  Phase final_phase() const;

 private:
  enum class Purpose : std::uint64_t { kPretrain = 1, kLocal = 2 };

  ClientModel train_client(const ModelParams& start, std::size_t client, std::size_t round,
                           bool pretrain, GlobalState& state) const;
  void run_phase(GlobalState& state, Phase phase, const std::vector<std::size_t>& clients,
                 bool pretrain) const;

  ExperimentConfig config_;
  const Dataset& train_;
  std::vector<ClientShard> shards_;
  NormStats stats_;
  ModelConfig model_;
  CounterRng root_;
};

struct ExperimentResult {
  std::vector<MetricReport> history;
  ModelParams final_params;
  std::vector<PhaseTrace> trace;
  NormStats stats;
  std::vector<ClientShard> shards;
};

using EvalObserver = std::function<void(const MetricReport&)>;

/// Partition, initialize, run `rounds` rounds of the configured method and
/// evaluate the global model on `test` every eval_every rounds (and after the
/// last one). Deterministic given (config, train, test).
ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& train,
                                const Dataset& test, const EvalObserver& on_eval = {});

/// Checkpoint entries: the model parameters followed by "norm.mean" and
/// "norm.std".
std::vector<ParamEntry> checkpoint_entries(const ModelParams& params, const NormStats& stats);
/// Inverse of checkpoint_entries.
std::pair<ModelParams, NormStats> split_checkpoint(std::vector<ParamEntry> entries);

inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kTraceFile = "trace.jsonl";
inline constexpr const char* kCheckpointFile = "final.isop";

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricReport>& history);
void write_trace_jsonl(const std::filesystem::path& path, const std::vector<PhaseTrace>& trace);
/// Writes metrics, trace and final checkpoint into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const ExperimentResult& result);

/// Runs `fn(i)` for i in [0, count) on up to `threads` workers and rethrows
/// the first exception.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace isofed
