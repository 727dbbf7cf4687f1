#include "isofed_cli/run_config.h"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace isofed::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true|false, got '" + v + "'");
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(const char* section, const char* key, T ExperimentConfig::*member) {
  return {section, key,
          [member](RunConfig& c, const std::string& v, const auto&) {
            c.experiment.*member = parse_number<T>(v);
          },
          [member](const RunConfig& c) { return std::to_string(c.experiment.*member); }};
}

template <typename T>
Field trainer_field(const char* key, T TrainerConfig::*member) {
  return {"trainer", key,
          [member](RunConfig& c, const std::string& v, const auto&) {
            c.experiment.trainer.*member = parse_number<T>(v);
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return fmt_double(c.experiment.trainer.*member);
            else
              return std::to_string(c.experiment.trainer.*member);
          }};
}

Field model_field(const char* key, std::size_t ModelConfig::*member) {
  return {"model", key,
          [member](RunConfig& c, const std::string& v, const auto&) {
            c.experiment.model.*member = parse_number<std::size_t>(v);
          },
          [member](const RunConfig& c) { return std::to_string(c.experiment.model.*member); }};
}

Field path_field(const char* section, const char* key, std::filesystem::path RunConfig::*member) {
  return {section, key,
          [member](RunConfig& c, const std::string& v, const std::filesystem::path& base) {
            std::filesystem::path p(v);
            c.*member = !p.empty() && p.is_relative() && !base.empty() ? base / p : p;
          },
          [member](const RunConfig& c) {
            return (c.*member).empty() ? std::string()
                                       : std::filesystem::absolute(c.*member).lexically_normal().string();
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"experiment", "method",
       [](RunConfig& c, const std::string& v, const auto&) { c.experiment.method = parse_method(v); },
       [](const RunConfig& c) { return std::string(method_name(c.experiment.method)); }},
      size_field("experiment", "rounds", &ExperimentConfig::rounds),
      size_field("experiment", "eval_every", &ExperimentConfig::eval_every),
      {"experiment", "eval_initial",
       [](RunConfig& c, const std::string& v, const auto&) { c.experiment.eval_initial = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.experiment.eval_initial ? "true" : "false"); }},
      {"experiment", "seed",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.experiment.seed = parse_number<std::uint64_t>(v);
         if (!c.partition_seed_set) c.experiment.partition.seed = c.experiment.seed;
       },
       [](const RunConfig& c) { return std::to_string(c.experiment.seed); }},
      {"experiment", "pretrain_scope",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.experiment.pretrain_scope = parse_pretrain_scope(v);
       },
       [](const RunConfig& c) { return std::string(pretrain_scope_name(c.experiment.pretrain_scope)); }},
      size_field("experiment", "threads", &ExperimentConfig::threads),

      path_field("data", "train", &RunConfig::train_path),
      path_field("data", "test", &RunConfig::test_path),
      {"data", "allow_flip",
       [](RunConfig& c, const std::string& v, const auto&) { c.experiment.allow_flip = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.experiment.allow_flip ? "true" : "false"); }},

      {"partition", "clients",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.experiment.partition.total_clients = parse_number<std::size_t>(v);
       },
       [](const RunConfig& c) { return std::to_string(c.experiment.partition.total_clients); }},
      {"partition", "labeled",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.experiment.partition.labeled_count = parse_number<std::size_t>(v);
       },
       [](const RunConfig& c) { return std::to_string(c.experiment.partition.labeled_count); }},
      {"partition", "gamma",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.experiment.partition.gamma = parse_number<double>(v);
       },
       [](const RunConfig& c) { return fmt_double(c.experiment.partition.gamma); }},
      {"partition", "seed",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.experiment.partition.seed = parse_number<std::uint64_t>(v);
         c.partition_seed_set = true;
       },
       [](const RunConfig& c) { return std::to_string(c.experiment.partition.seed); }},

      model_field("conv1_channels", &ModelConfig::conv1_channels),
      model_field("conv2_channels", &ModelConfig::conv2_channels),
      model_field("feature_dim", &ModelConfig::feature_dim),
      model_field("mlp_hidden", &ModelConfig::mlp_hidden),

      trainer_field("lr", &TrainerConfig::lr),
      {"trainer", "unlabeled_lr",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.experiment.unlabeled_lr = parse_number<double>(v);
       },
       [](const RunConfig& c) {
         return c.experiment.unlabeled_lr ? fmt_double(*c.experiment.unlabeled_lr)
                                          : fmt_double(c.experiment.trainer.lr);
       }},
      trainer_field("momentum", &TrainerConfig::momentum),
      trainer_field("batch_size", &TrainerConfig::batch_size),
      size_field("trainer", "labeled_epochs", &ExperimentConfig::labeled_epochs),
      size_field("trainer", "unlabeled_epochs", &ExperimentConfig::unlabeled_epochs),
      trainer_field("ema_alpha", &TrainerConfig::ema_alpha),
      trainer_field("sharpen_tau", &TrainerConfig::sharpen_tau),
      trainer_field("pretrain_epochs", &TrainerConfig::pretrain_epochs),
      trainer_field("pretrain_lr", &TrainerConfig::pretrain_lr),

      {"aggregation", "scheme",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.experiment.aggregation.scheme = parse_scheme(v);
       },
       [](const RunConfig& c) { return std::string(scheme_name(c.experiment.aggregation.scheme)); }},
      {"aggregation", "lambda_c",
       [](RunConfig& c, const std::string& v, const auto&) {
         c.experiment.aggregation.lambda_c = parse_number<double>(v);
       },
       [](const RunConfig& c) { return fmt_double(c.experiment.aggregation.lambda_c); }},

      path_field("output", "dir", &RunConfig::out_dir),
  };
  return table;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t seed) {
  experiment.seed = seed;
  if (!partition_seed_set) experiment.partition.seed = seed;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigLineError(line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      const bool known = std::any_of(fields().begin(), fields().end(),
                                     [&](const Field& f) { return section == f.section; });
      if (!known) throw ConfigLineError(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigLineError(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigLineError(line_no, "key '" + key + "' outside any section");
    auto it = std::find_if(fields().begin(), fields().end(),
                           [&](const Field& f) { return section == f.section && key == f.key; });
    if (it == fields().end())
      throw ConfigLineError(line_no, "unknown key '" + key + "' in [" + section + "]");
    try {
      it->set(cfg, value, base_dir);
    } catch (const ConfigLineError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigLineError(line_no, section + "." + key + ": " + e.what());
    }
  }
  try {
    cfg.experiment.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_run_config(buf.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string render_run_config(const RunConfig& config) {
  std::string out = "# resolved isofed run configuration\n";
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace isofed::cli
