#include "isofed_cli/commands.h"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <fstream>
#include <ostream>

#include "isofed/model.h"
#include "isofed/data.h"
#include "isofed/log.h"
#include "isofed/metrics.h"
#include "isofed/orchestrator.h"
#include "isofed_cli/run_config.h"
#include "isofed_cli/synth.h"

namespace isofed::cli {
namespace {

namespace fs = std::filesystem;

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const IoError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitIo;
  } catch (const ConfigError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const FormatError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const ShapeError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitFailure;
  }
}

Dataset read_dataset(const fs::path& path, const char* what) {
  if (path.empty()) throw ConfigError(fmt::format("[data] {} is not set", what));
  if (!fs::exists(path)) throw IoError(path.string(), "dataset file not found");
  return mds1::read(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string(), "cannot open for writing");
  f << text;
  if (!f) throw IoError(path.string(), "write failed");
}

void prepare_out_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw IoError(dir.string(), "output path is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw ConfigError(fmt::format("output directory {} is not empty (use --force)", dir.string()));
    return;
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create output directory: " + ec.message());
}

std::string partition_table_csv(const Dataset& train, const std::vector<ClientShard>& shards) {
  const auto counts = shard_class_counts(train, shards);
  std::string out = "client,role";
  for (std::size_t c = 0; c < train.num_classes; ++c) out += fmt::format(",class_{}", c);
  out += ",total\n";
  for (std::size_t k = 0; k < shards.size(); ++k) {
    out += fmt::format("{},{}", shards[k].client_id, role_name(shards[k].role));
    for (std::size_t v : counts[k]) out += fmt::format(",{}", v);
    out += fmt::format(",{}\n", shards[k].sample_count());
  }
  return out;
}

std::string partition_table_text(const Dataset& train, const std::vector<ClientShard>& shards) {
  const auto counts = shard_class_counts(train, shards);
  std::string out = fmt::format("{:>6} {:>9}", "client", "role");
  for (std::size_t c = 0; c < train.num_classes; ++c) out += fmt::format(" {:>6}", fmt::format("c{}", c));
  out += fmt::format(" {:>7}\n", "total");
  for (std::size_t k = 0; k < shards.size(); ++k) {
    out += fmt::format("{:>6} {:>9}", shards[k].client_id, role_name(shards[k].role));
    for (std::size_t v : counts[k]) out += fmt::format(" {:>6}", v);
    out += fmt::format(" {:>7}\n", shards[k].sample_count());
  }
  return out;
}

}  // namespace

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_run_config(opts.config);
    if (opts.seed) cfg.set_seed(*opts.seed);
    if (opts.threads) cfg.experiment.threads = *opts.threads;
    if (opts.out_dir) cfg.out_dir = *opts.out_dir;
    if (cfg.out_dir.empty()) throw ConfigError("no output directory ([output] dir or --out)");
    cfg.experiment.validate();

    const Dataset train = read_dataset(cfg.train_path, "train");
    const Dataset test = read_dataset(cfg.test_path, "test");
    prepare_out_dir(cfg.out_dir, opts.force);
    write_text(cfg.out_dir / kResolvedConfigFile, render_run_config(cfg));

    log::info("run method={} rounds={} clients={} seed={}", method_name(cfg.experiment.method),
              cfg.experiment.rounds, cfg.experiment.partition.total_clients, cfg.experiment.seed);
    const auto result = run_experiment(cfg.experiment, train, test, [&](const MetricReport& r) {
      log::info("eval {}", metrics_csv_row(r));
    });
    write_run_outputs(cfg.out_dir, result);
    if (!result.history.empty()) fmt::print(out, "{}\n{}\n", kMetricsCsvHeader, metrics_csv_row(result.history.back()));
    return int(kExitOk);
  });
}

int cmd_partition(const PartitionOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_run_config(opts.config);
    if (opts.seed) cfg.set_seed(*opts.seed);
    if (opts.out_dir) cfg.out_dir = *opts.out_dir;
    const Dataset train = read_dataset(cfg.train_path, "train");
    const auto shards = dirichlet_partition(train, cfg.experiment.partition);
    fmt::print(out, "{}", partition_table_text(train, shards));
    if (!cfg.out_dir.empty()) {
      std::error_code ec;
      fs::create_directories(cfg.out_dir, ec);
      if (ec) throw IoError(cfg.out_dir.string(), "cannot create output directory: " + ec.message());
      write_text(cfg.out_dir / kPartitionFile, partition_table_csv(train, shards));
    }
    return int(kExitOk);
  });
}

int cmd_synth(const SynthOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.out.empty()) throw ConfigError("synth needs --out");
    BlobSpec spec;
    spec.classes = opts.classes;
    spec.samples = opts.samples;
    spec.seed = opts.seed;
    const Dataset ds = make_blob_dataset(spec);
    if (opts.out.has_parent_path()) fs::create_directories(opts.out.parent_path());
    mds1::write(opts.out, ds);
    fmt::print(out, "wrote {} samples, {} classes to {}\n", ds.size(), ds.num_classes, opts.out.string());
    return int(kExitOk);
  });
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::exists(opts.checkpoint)) throw IoError(opts.checkpoint.string(), "checkpoint not found");
    auto [params, stats] = split_checkpoint(checkpoint::read(opts.checkpoint));
    const Dataset test = read_dataset(opts.data, "test");
    MetricReport report = evaluate(params, test, stats);
    report.phase = "eval";
    fmt::print(out, "{}\n{}\n", kMetricsCsvHeader, metrics_csv_row(report));
    return int(kExitOk);
  });
}

}  // namespace isofed::cli
