#include "isofed/metrics.h"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "isofed/errors.h"
#include "isofed/ops.h"

namespace isofed {

double binary_auc(std::span<const double> scores, std::span<const unsigned char> positive) {
  if (scores.size() != positive.size()) throw ShapeError("binary_auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw Error("binary_auc: needs at least one positive and one negative");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double rank_auc_ovr(std::span<const double> scores, std::size_t num_classes,
                    std::span<const int> labels) {
  const std::size_t n = labels.size();
  if (scores.size() != n * num_classes) throw ShapeError("rank_auc_ovr: scores must be [N, C]");
  std::vector<double> column(n);
  std::vector<unsigned char> is_c(n);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = scores[i * num_classes + c];
      is_c[i] = labels[i] == static_cast<int>(c);
      pos += is_c[i];
    }
    if (pos == 0 || pos == n) continue;
    total += binary_auc(column, is_c);
    ++used;
  }
  if (used == 0) throw Error("rank_auc_ovr: no class has both positives and negatives");
  return total / static_cast<double>(used);
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predicted,
                                                       std::span<const int> labels,
                                                       std::size_t num_classes) {
  if (predicted.size() != labels.size()) throw ShapeError("confusion_matrix: size mismatch");
  std::vector<std::vector<std::size_t>> m(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto t = static_cast<std::size_t>(labels[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (t >= num_classes || p >= num_classes) throw Error("confusion_matrix: class out of range");
    ++m[t][p];
  }
  return m;
}

MetricReport score_predictions(std::span<const double> probs, std::size_t num_classes,
                               std::span<const int> labels) {
  const std::size_t n = labels.size();
  if (n == 0) throw Error("score_predictions: empty test set");
  if (probs.size() != n * num_classes) throw ShapeError("score_predictions: probs must be [N, C]");

  std::vector<int> predicted(n);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = probs.data() + i * num_classes;
    predicted[i] = static_cast<int>(std::max_element(row, row + num_classes) - row);
    correct += predicted[i] == labels[i];
  }
  const auto cm = confusion_matrix(predicted, labels, num_classes);

  double prec_sum = 0.0, rec_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t support = 0, predicted_c = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      support += cm[c][k];
      predicted_c += cm[k][c];
    }
    if (support == 0) continue;
    ++present;
    const double tp = static_cast<double>(cm[c][c]);
    prec_sum += predicted_c == 0 ? 0.0 : tp / static_cast<double>(predicted_c);
    rec_sum += tp / static_cast<double>(support);
  }

  MetricReport r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  r.auc = rank_auc_ovr(probs, num_classes, labels);
  r.precision = prec_sum / static_cast<double>(present);
  r.recall = rec_sum / static_cast<double>(present);
  return r;
}

MetricReport evaluate(const ModelParams& params, const Dataset& test, const NormStats& stats,
                      std::size_t batch_size) {
  if (test.size() == 0) throw Error("evaluate: empty test set");
  CnnClassifier model = model_from_params(params);
  if (model.config().num_classes != test.num_classes)
    throw ShapeError("evaluate: model has " + std::to_string(model.config().num_classes) +
                     " classes, test set has " + std::to_string(test.num_classes));
  NoGradGuard no_grad;
  std::vector<double> probs;
  probs.reserve(test.size() * test.num_classes);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test.size(); start += batch_size) {
    const std::size_t end = std::min(test.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor p = ops::softmax(model.forward(clean_batch(test, idx, stats)), -1);
    probs.insert(probs.end(), p.data().begin(), p.data().end());
  }
  std::vector<int> labels(test.labels.begin(), test.labels.end());
  return score_predictions(probs, test.num_classes, labels);
}

std::string metrics_csv_row(const MetricReport& r) {
  return fmt::format("{},{},{:.2f},{:.2f},{:.2f},{:.2f}", r.round, r.phase, 100.0 * r.accuracy,
                     100.0 * r.auc, 100.0 * r.precision, 100.0 * r.recall);
}

}  // namespace isofed
