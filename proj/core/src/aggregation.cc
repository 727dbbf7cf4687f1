#include "isofed/aggregation.h"

#include <cmath>
#include <string>

#include "isofed/errors.h"

namespace isofed {

const char* scheme_name(AggregationScheme scheme) {
  return scheme == AggregationScheme::kPlainFedAvg ? "fedavg" : "dynamic_weighted";
}

AggregationScheme parse_scheme(std::string_view text) {
  if (text == "fedavg") return AggregationScheme::kPlainFedAvg;
  if (text == "dynamic_weighted") return AggregationScheme::kDynamicWeighted;
  throw ConfigError("unknown aggregation scheme '" + std::string(text) +
                    "' (expected fedavg|dynamic_weighted)");
}

void AggregationConfig::validate() const {
  if (!std::isfinite(lambda_c) || lambda_c < 0.0)
    throw ConfigError("aggregation: lambda_c must be finite and >= 0");
}

namespace {

void check_inputs(std::span<const ClientModel> models, const char* context) {
  if (models.empty()) throw Error(std::string(context) + ": no client models");
  for (std::size_t k = 0; k < models.size(); ++k) {
    if (models[k].sample_count < 1)
      throw Error(std::string(context) + ": client " + std::to_string(k) + " has no samples");
    models[0].params.check_layout(models[k].params, context);
  }
}

// Computed as W_0 + sum_k w_k (W_k - W_0) / sum_k w_k, which equals
// sum_k w_k W_k / sum_k w_k but returns W_0 exactly when every input equals it.
ModelParams weighted_mean(std::span<const ClientModel> models, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  ModelParams out = models[0].params;
  std::vector<double> acc;
  for (std::size_t e = 0; e < out.size(); ++e) {
    auto& dst = out.entries()[e].values;
    const auto& ref = models[0].params.entries()[e].values;
    acc.assign(dst.size(), 0.0);
    for (std::size_t k = 1; k < models.size(); ++k) {
      const auto& src = models[k].params.entries()[e].values;
      for (std::size_t i = 0; i < dst.size(); ++i) acc[i] += weights[k] * (src[i] - ref[i]);
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = ref[i] + acc[i] / total;
  }
  return out;
}

}  // namespace

ModelParams fedavg(std::span<const ClientModel> models) {
  check_inputs(models, "fedavg");
  std::vector<double> n;
  for (const auto& m : models) n.push_back(static_cast<double>(m.sample_count));
  return weighted_mean(models, n);
}

AggregationResult dynamic_weighted_agg(std::span<const ClientModel> models,
                                       const AggregationConfig& cfg) {
  cfg.validate();
  const ModelParams avg = fedavg(models);
  double n_total = 0.0;
  for (const auto& m : models) n_total += static_cast<double>(m.sample_count);

  // The common 1/sum(n) factor of c_k cancels in the quotient; averaging with
  // the unscaled weights makes lambda_c = 0 reproduce fedavg bit for bit.
  AggregationResult r;
  std::vector<double> unscaled;
  for (const auto& m : models) {
    const double n = static_cast<double>(m.sample_count);
    const double dist = params_distance(m.params, avg);
    unscaled.push_back(n * std::exp(-cfg.lambda_c * dist / n));
    r.coefficients.push_back(unscaled.back() / n_total);
  }
  r.global = weighted_mean(models, unscaled);
  return r;
}

AggregationResult aggregate(std::span<const ClientModel> models, const AggregationConfig& cfg) {
  if (cfg.scheme == AggregationScheme::kDynamicWeighted) return dynamic_weighted_agg(models, cfg);
  AggregationResult r;
  r.global = fedavg(models);
  double n_total = 0.0;
  for (const auto& m : models) n_total += static_cast<double>(m.sample_count);
  for (const auto& m : models) r.coefficients.push_back(static_cast<double>(m.sample_count) / n_total);
  return r;
}

}  // namespace isofed
