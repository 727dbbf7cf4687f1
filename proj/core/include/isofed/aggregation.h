#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "isofed/model.h"

namespace isofed {

enum class AggregationScheme { kPlainFedAvg, kDynamicWeighted };

const char* scheme_name(AggregationScheme scheme);
AggregationScheme parse_scheme(std::string_view text);

struct AggregationConfig {
  AggregationScheme scheme = AggregationScheme::kDynamicWeighted;
  double lambda_c = 1.0;

  void validate() const;
};

/// One uploaded client model and the size of the shard it was trained on.
struct ClientModel {
  ModelParams params;
  std::size_t sample_count = 0;
};

struct AggregationResult {
  ModelParams global;
  /// Per-client weights actually used: n_k / sum(n) for plain FedAvg, the
  /// distance-decayed c_k for the dynamic scheme.
  std::vector<double> coefficients;
};

/// Sample-count weighted mean: sum_k n_k W_k / sum_k n_k.
ModelParams fedavg(std::span<const ClientModel> models);

/// Distance-decayed re-aggregation. With W_avg = fedavg(models) and
/// d_k = ||W_k - W_avg||_2:
///   c_k = n_k exp(-lambda_c d_k / n_k) / sum_j n_j
///   W_glob = sum_k c_k W_k / sum_k c_k
AggregationResult dynamic_weighted_agg(std::span<const ClientModel> models,
                                       const AggregationConfig& cfg);

/// Dispatches on cfg.scheme.
AggregationResult aggregate(std::span<const ClientModel> models, const AggregationConfig& cfg);

}  // namespace isofed
