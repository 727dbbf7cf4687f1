#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "isofed/data.h"
#include "isofed/model.h"

namespace isofed {

/// Global-model test metrics. Values are fractions in [0, 1]; outputs
/// print them as percentages. AUC, precision and recall are macro averages
/// over the classes present in the test labels.
struct MetricReport {
  std::size_t round = 0;
  std::string phase;
  double accuracy = 0.0;
  double auc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Mann-Whitney AUC: probability that a random positive outscores a random
/// negative, ties counted 1/2. Requires at least one of each.
double binary_auc(std::span<const double> scores, std::span<const unsigned char> positive);

/// Unweighted mean over classes of one-vs-rest binary_auc on the class's
/// score column. scores is [N, C] row-major. Classes lacking positives or
/// negatives are skipped; throws if none remain.
double rank_auc_ovr(std::span<const double> scores, std::size_t num_classes,
                    std::span<const int> labels);

/// counts[true][predicted].
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted,
                                                       std::span<const int> labels,
                                                       std::size_t num_classes);

/// All four metrics from [N, C] class probabilities.
MetricReport score_predictions(std::span<const double> probs, std::size_t num_classes,
                               std::span<const int> labels);

/// Inference-mode forward over the whole test split (normalization only).
MetricReport evaluate(const ModelParams& params, const Dataset& test, const NormStats& stats,
                      std::size_t batch_size = 500);

inline constexpr const char* kMetricsCsvHeader = "round,phase,accuracy,auc,precision,recall";

/// One CSV line (no newline), percentages with two decimals.
std::string metrics_csv_row(const MetricReport& report);

}  // namespace isofed
