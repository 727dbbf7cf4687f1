#include "isofed/orchestrator.h"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "isofed/errors.h"
#include "isofed/log.h"

namespace isofed {

const char* method_name(Method method) {
  switch (method) {
    case Method::kIsoFed: return "isofed";
    case Method::kIsoFedNoPT: return "isofed_no_pt";
    case Method::kMtWFedAvg: return "mt_wfedavg";
    case Method::kSupervisedWFedAvg: return "supervised_wfedavg";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  for (Method m : {Method::kIsoFed, Method::kIsoFedNoPT, Method::kMtWFedAvg,
                   Method::kSupervisedWFedAvg})
    if (text == method_name(m)) return m;
  throw ConfigError("unknown method '" + std::string(text) +
                    "' (expected isofed|isofed_no_pt|mt_wfedavg|supervised_wfedavg)");
}

const char* pretrain_scope_name(PretrainScope scope) {
  return scope == PretrainScope::kAll ? "all" : "unlabeled_only";
}

PretrainScope parse_pretrain_scope(std::string_view text) {
  if (text == "all") return PretrainScope::kAll;
  if (text == "unlabeled_only") return PretrainScope::kUnlabeledOnly;
  throw ConfigError("unknown pretrain_scope '" + std::string(text) +
                    "' (expected all|unlabeled_only)");
}

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::kInit: return "init";
    case Phase::kUnlabeled: return "unlabeled";
    case Phase::kLabeled: return "labeled";
    case Phase::kJoint: return "joint";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (rounds < 1) throw ConfigError("experiment.rounds must be >= 1");
  if (eval_every < 1) throw ConfigError("experiment.eval_every must be >= 1");
  if (threads < 1) throw ConfigError("experiment.threads must be >= 1");
  trainer.validate();
  if (unlabeled_lr && !(*unlabeled_lr >= 0.0))
    throw ConfigError("trainer.unlabeled_lr must be >= 0");
  aggregation.validate();
  partition.validate();
  switch (method) {
    case Method::kIsoFed:
    case Method::kIsoFedNoPT:
      if (partition.labeled_count < 1 || partition.unlabeled_count() < 1)
        throw ConfigError(std::string(method_name(method)) +
                          " needs at least one labeled and one unlabeled client");
      break;
    case Method::kSupervisedWFedAvg:
      if (partition.unlabeled_count() != 0)
        throw ConfigError("supervised_wfedavg requires every client to be labeled");
      break;
    case Method::kMtWFedAvg:
      break;
  }
}

std::size_t ExperimentConfig::pretrain_epochs_for(ClientRole role) const {
  if (method != Method::kIsoFed) return 0;
  if (role == ClientRole::kLabeled && pretrain_scope == PretrainScope::kUnlabeledOnly) return 0;
  return trainer.pretrain_epochs;
}

TrainerConfig ExperimentConfig::trainer_for(ClientRole role) const {
  TrainerConfig t = trainer;
  t.local_epochs = role == ClientRole::kLabeled ? labeled_epochs : unlabeled_epochs;
  t.pretrain_epochs = pretrain_epochs_for(role);
  if (role == ClientRole::kUnlabeled && unlabeled_lr) t.lr = *unlabeled_lr;
  return t;
}

std::string trace_json_line(const PhaseTrace& t) {
  nlohmann::json j;
  j["round"] = t.round;
  j["phase"] = phase_name(t.phase);
  j["client_ids"] = t.client_ids;
  std::vector<std::string> roles;
  for (ClientRole r : t.roles) roles.emplace_back(role_name(r));
  j["roles"] = roles;
  j["sample_counts"] = t.sample_counts;
  j["agg_scheme"] = scheme_name(t.scheme);
  j["coefficients"] = t.coefficients;
  j["pre_norm"] = t.pre_norm;
  j["post_norm"] = t.post_norm;
  return j.dump();
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(count, std::max<std::size_t>(threads, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
}

Federation::Federation(ExperimentConfig config, const Dataset& train,
                       std::vector<ClientShard> shards, NormStats stats)
    : config_(std::move(config)),
      train_(train),
      shards_(std::move(shards)),
      stats_(std::move(stats)),
      root_(config_.seed) {
  config_.validate();
  if (shards_.size() != config_.partition.total_clients)
    throw ConfigError("federation: " + std::to_string(shards_.size()) + " shards for " +
                      std::to_string(config_.partition.total_clients) + " clients");
  if (train.height != train.width) throw ConfigError("federation: images must be square");
  model_ = config_.model;
  model_.in_channels = train.channels;
  model_.num_classes = train.num_classes;
  model_.image_size = train.height;
  model_.validate();
}

GlobalState Federation::initial_state() const {
  GlobalState s;
  s.global = CnnClassifier::init(config_.seed, model_).extract_params();
  s.teachers.resize(shards_.size());
  return s;
}

Phase Federation::final_phase() const {
  switch (config_.method) {
    case Method::kIsoFed:
    case Method::kIsoFedNoPT:
      return Phase::kLabeled;
    default:
      return Phase::kJoint;
  }
}

ClientModel Federation::train_client(const ModelParams& start, std::size_t client,
                                     std::size_t round, bool pretrain, GlobalState& state) const {
  const ClientShard& shard = shards_[client];
  const ClientData data{train_, shard, stats_, config_.allow_flip};
  TrainerConfig cfg = config_.trainer_for(shard.role);
  if (!pretrain) cfg.pretrain_epochs = 0;

  ModelParams init = start;
  if (cfg.pretrain_epochs > 0)
    init = im_pretrain(start, data, cfg,
                       root_.derive({round, client, std::uint64_t(Purpose::kPretrain)}));

  const CounterRng rng = root_.derive({round, client, std::uint64_t(Purpose::kLocal)});
  ClientModel upload;
  upload.sample_count = shard.sample_count();
  if (shard.role == ClientRole::kLabeled) {
    upload.params = train_labeled_client(init, data, cfg, rng);
  } else {
    upload.params = train_unlabeled_client(init, state.teachers[client], data, cfg, rng);
  }
  return upload;
}

void Federation::run_phase(GlobalState& state, Phase phase,
                           const std::vector<std::size_t>& clients, bool pretrain) const {
  const std::size_t round = state.round + 1;
  std::vector<ClientModel> uploads(clients.size());
  const ModelParams start = state.global;
  parallel_for(clients.size(), config_.threads, [&](std::size_t i) {
    uploads[i] = train_client(start, clients[i], round, pretrain, state);
  });

  PhaseTrace t;
  t.round = round;
  t.phase = phase;
  t.client_ids = clients;
  for (std::size_t c : clients) {
    t.roles.push_back(shards_[c].role);
    t.sample_counts.push_back(shards_[c].sample_count());
  }
  t.scheme = config_.aggregation.scheme;
  t.pre_norm = params_norm(state.global);
  AggregationResult agg = aggregate(uploads, config_.aggregation);
  state.global = std::move(agg.global);
  t.coefficients = std::move(agg.coefficients);
  t.post_norm = params_norm(state.global);
  log::debug("round {} {} phase: clients={} post_norm={:.6f}", round, phase_name(phase),
             clients.size(), t.post_norm);
  state.trace.push_back(std::move(t));
}

void Federation::run_isofed_round(GlobalState& state) const {
  std::vector<std::size_t> labeled, unlabeled;
  for (const auto& s : shards_)
    (s.role == ClientRole::kLabeled ? labeled : unlabeled).push_back(s.client_id);
  if (labeled.empty() || unlabeled.empty())
    throw ConfigError("isofed round needs both labeled and unlabeled clients");
  run_phase(state, Phase::kUnlabeled, unlabeled, true);
  run_phase(state, Phase::kLabeled, labeled, true);
  ++state.round;
}

void Federation::run_mt_wfedavg_round(GlobalState& state) const {
  std::vector<std::size_t> all;
  for (const auto& s : shards_) all.push_back(s.client_id);
  run_phase(state, Phase::kJoint, all, false);
  ++state.round;
}

void Federation::run_supervised_round(GlobalState& state) const {
  std::vector<std::size_t> all;
  for (const auto& s : shards_) {
    if (s.role != ClientRole::kLabeled)
      throw ConfigError("supervised round: client " + std::to_string(s.client_id) +
                        " is unlabeled");
    all.push_back(s.client_id);
  }
  run_phase(state, Phase::kJoint, all, false);
  ++state.round;
}

void Federation::run_round(GlobalState& state) const {
  switch (config_.method) {
    case Method::kIsoFed:
    case Method::kIsoFedNoPT:
      run_isofed_round(state);
      break;
    case Method::kMtWFedAvg:
      run_mt_wfedavg_round(state);
      break;
    case Method::kSupervisedWFedAvg:
      run_supervised_round(state);
      break;
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& train,
                                const Dataset& test, const EvalObserver& on_eval) {
  config.validate();
  if (test.num_classes != train.num_classes)
    throw ConfigError("train and test splits disagree on num_classes");
  if (test.height != train.height || test.width != train.width || test.channels != train.channels)
    throw ConfigError("train and test splits disagree on image dimensions");

  PartitionSpec spec = config.partition;
  NormStats stats = compute_norm_stats(train);
  Federation fed(config, train, dirichlet_partition(train, spec), stats);

  ExperimentResult result;
  GlobalState state = fed.initial_state();
  auto record = [&](Phase phase) {
    MetricReport m = evaluate(state.global, test, fed.stats());
    m.round = state.round;
    m.phase = phase_name(phase);
    log::info("{} round {:>3}: acc {:.2f} auc {:.2f} prec {:.2f} rec {:.2f}",
              method_name(config.method), m.round, 100 * m.accuracy, 100 * m.auc,
              100 * m.precision, 100 * m.recall);
    if (on_eval) on_eval(m);
    result.history.push_back(std::move(m));
  };

  if (config.eval_initial) record(Phase::kInit);
  for (std::size_t r = 1; r <= config.rounds; ++r) {
    fed.run_round(state);
    if (r % config.eval_every == 0 || r == config.rounds) record(fed.final_phase());
  }
  result.final_params = std::move(state.global);
  result.trace = std::move(state.trace);
  result.stats = fed.stats();
  result.shards = fed.shards();
  return result;
}

std::vector<ParamEntry> checkpoint_entries(const ModelParams& params, const NormStats& stats) {
  std::vector<ParamEntry> entries = params.entries();
  entries.push_back({"norm.mean", {stats.mean.size()}, stats.mean});
  entries.push_back({"norm.std", {stats.stddev.size()}, stats.stddev});
  return entries;
}

std::pair<ModelParams, NormStats> split_checkpoint(std::vector<ParamEntry> entries) {
  NormStats stats;
  std::vector<ParamEntry> params;
  for (auto& e : entries) {
    if (e.name == "norm.mean")
      stats.mean = std::move(e.values);
    else if (e.name == "norm.std")
      stats.stddev = std::move(e.values);
    else
      params.push_back(std::move(e));
  }
  if (stats.mean.empty() || stats.mean.size() != stats.stddev.size())
    throw FormatError("checkpoint lacks normalization statistics");
  return {ModelParams(std::move(params)), std::move(stats)};
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricReport>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << kMetricsCsvHeader << '\n';
  for (const auto& m : history) out << metrics_csv_row(m) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

void write_trace_jsonl(const std::filesystem::path& path, const std::vector<PhaseTrace>& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  for (const auto& t : trace) out << trace_json_line(t) << '\n';
  if (!out) throw IoError(path.string(), "write failed");
}

void write_run_outputs(const std::filesystem::path& dir, const ExperimentResult& result) {
  write_metrics_csv(dir / kMetricsFile, result.history);
  write_trace_jsonl(dir / kTraceFile, result.trace);
  checkpoint::write(dir / kCheckpointFile, checkpoint_entries(result.final_params, result.stats));
}

}  // namespace isofed
