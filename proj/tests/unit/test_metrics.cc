#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "isofed/errors.h"
#include "isofed/metrics.h"
#include "isofed_cli/synth.h"
#include "oracles.h"

using namespace isofed;

namespace {

using Flags = std::vector<unsigned char>;

// Permute the class columns of [N, C] scores and the labels together.
void permute_classes(std::vector<double>& probs, std::vector<int>& labels, std::size_t c,
                     const std::vector<int>& perm) {
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t k = 0; k < c; ++k) out[i * c + perm[k]] = probs[i * c + k];
  for (int& l : labels) l = perm[l];
  probs = out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("binary AUC examples") {
    const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
    const Flags y = {0, 0, 1, 1};
    CHECK(binary_auc(s, y) == 0.75);
    const std::vector<double> rev = {0.8, 0.35, 0.4, 0.1};
    CHECK(binary_auc(rev, y) == 0.25);
    const std::vector<double> flat(4, 0.5);
    CHECK(binary_auc(flat, y) == 0.5);
    CHECK_THROWS_AS(binary_auc(s, Flags{1, 1, 1, 1}), Error);
    CHECK_THROWS_AS(binary_auc(s, Flags{0, 1}), ShapeError);
  }

  TEST_CASE("binary AUC matches the pairwise oracle") {
    CounterRng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> s(50);
      Flags y(50);
      for (std::size_t i = 0; i < 50; ++i) {
        // Coarse grid so ties occur.
        s[i] = std::floor(rng.uniform() * 10.0) / 10.0;
        y[i] = rng.uniform() < 0.4;
      }
      y[0] = 1;
      y[1] = 0;
      CHECK(binary_auc(s, y) == doctest::Approx(testing::pairwise_auc(s, y)).epsilon(1e-14));

      // Strictly increasing transforms leave it unchanged.
      std::vector<double> t(s.size());
      std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3.0 * v) - 7.0; });
      CHECK(binary_auc(t, y) == binary_auc(s, y));
    }
  }

  TEST_CASE("random scores give AUC near one half") {
    CounterRng rng(5);
    std::vector<double> s(2000);
    Flags y(2000);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = rng.uniform();
      y[i] = i % 2;
    }
    CHECK(std::fabs(binary_auc(s, y) - 0.5) <= 0.05);
  }

  TEST_CASE("perfect predictor scores one everywhere") {
    const std::size_t c = 3;
    std::vector<int> labels = {0, 1, 2, 2, 1, 0};
    std::vector<double> probs(labels.size() * c, 0.05);
    for (std::size_t i = 0; i < labels.size(); ++i) probs[i * c + labels[i]] = 0.9;
    const auto r = score_predictions(probs, c, labels);
    CHECK(r.accuracy == 1.0);
    CHECK(r.auc == 1.0);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
  }

  TEST_CASE("never-predicted class has zero precision") {
    // Class 2 is present but always predicted as 0.
    std::vector<int> labels = {0, 1, 2};
    std::vector<double> probs = {0.8, 0.1, 0.1,  //
                                 0.1, 0.8, 0.1,  //
                                 0.6, 0.1, 0.3};
    const auto r = score_predictions(probs, 3, labels);
    CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(r.precision == doctest::Approx((0.5 + 1.0 + 0.0) / 3.0));
    CHECK(r.recall == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("confusion matrix counts every sample once") {
    CounterRng rng(8);
    std::vector<int> p(300), y(300);
    for (std::size_t i = 0; i < 300; ++i) {
      p[i] = int(rng.below(5));
      y[i] = int(rng.below(5));
    }
    const auto cm = confusion_matrix(p, y, 5);
    std::size_t total = 0, diag = 0;
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t q = 0; q < 5; ++q) {
        total += cm[t][q];
        if (t == q) diag += cm[t][q];
      }
    CHECK(total == 300);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < 300; ++i) agree += p[i] == y[i];
    CHECK(diag == agree);
    CHECK_THROWS_AS(confusion_matrix(std::vector<int>{7}, std::vector<int>{0}, 5), Error);
  }

  TEST_CASE("macro metrics are invariant to relabeling classes") {
    CounterRng rng(19);
    const std::size_t c = 4, n = 200;
    std::vector<double> probs(n * c);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = int(rng.below(c));
      double sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) sum += probs[i * c + k] = rng.uniform() + (int(k) == labels[i]);
      for (std::size_t k = 0; k < c; ++k) probs[i * c + k] /= sum;
    }
    const auto a = score_predictions(probs, c, labels);
    permute_classes(probs, labels, c, {2, 0, 3, 1});
    const auto b = score_predictions(probs, c, labels);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.auc == doctest::Approx(b.auc).epsilon(1e-14));
    CHECK(a.precision == doctest::Approx(b.precision).epsilon(1e-14));
    CHECK(a.recall == doctest::Approx(b.recall).epsilon(1e-14));
  }

  TEST_CASE("CSV row format") {
    MetricReport r{12, "labeled", 0.9512345, 0.5, 1.0, 0.0};
    CHECK(metrics_csv_row(r) == "12,labeled,95.12,50.00,100.00,0.00");
    CHECK(std::string(kMetricsCsvHeader) == "round,phase,accuracy,auc,precision,recall");
  }

  TEST_CASE("evaluate checks the test set") {
    cli::BlobSpec spec;
    spec.classes = 3;
    spec.samples = 30;
    const Dataset test = cli::make_blob_dataset(spec);
    const NormStats stats = compute_norm_stats(test);
    ModelConfig mc;
    mc.num_classes = 3;
    const auto params = CnnClassifier::init(1, mc).extract_params();
    const auto r = evaluate(params, test, stats, 7);
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    CHECK(evaluate(params, test, stats, 500).auc == r.auc);
    mc.num_classes = 4;
    CHECK_THROWS_AS(evaluate(CnnClassifier::init(1, mc).extract_params(), test, stats), ShapeError);
    Dataset empty = test;
    empty.labels.clear();
    empty.pixels.clear();
    CHECK_THROWS_AS(evaluate(params, empty, stats), Error);
  }
}
