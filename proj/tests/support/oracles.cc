#include "oracles.h"

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "isofed/model.h"
#include "isofed/ops.h"
#include "isofed/training.h"

namespace isofed::testing {

std::vector<double> brute_conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  std::vector<double> out(n * f * oh * ow);
  const auto xd = x.data();
  const auto kd = k.data();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t fi = 0; fi < f; ++fi)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = b.data()[fi];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j)
                acc += xd[((s * c + ci) * h + oy + i) * w + ox + j] *
                       kd[((fi * c + ci) * kh + i) * kw + j];
          out[((s * f + fi) * oh + oy) * ow + ox] = acc;
        }
  return out;
}

std::vector<double> brute_maxpool(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<double> out;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < h; i += 2)
        for (std::size_t j = 0; j < w; j += 2) {
          double m = -INFINITY;
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t bb = 0; bb < 2; ++bb)
              m = std::max(m, x.data()[((s * c + ci) * h + i + a) * w + j + bb]);
          out.push_back(m);
        }
  return out;
}

std::vector<double> brute_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t n = x.dim(0), d = x.dim(1), m = w.dim(1);
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += x.data()[i * d + k] * w.data()[k * m + j];
      out[i * m + j] = acc + b.data()[j];
    }
  return out;
}

HpAggregate hp_dynamic_weighted(std::span<const double> w, std::span<const double> n,
                                double lambda_c) {
  using Real = boost::multiprecision::cpp_dec_float_50;
  if (w.size() != n.size() || w.empty()) throw std::invalid_argument("hp_dynamic_weighted");
  Real total = 0, weighted = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    total += Real(n[k]);
    weighted += Real(n[k]) * Real(w[k]);
  }
  const Real avg = weighted / total;
  std::vector<Real> c(w.size());
  Real c_sum = 0, num = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Real d = abs(Real(w[k]) - avg);
    c[k] = Real(n[k]) * exp(-Real(lambda_c) * d / Real(n[k])) / total;
    c_sum += c[k];
    num += c[k] * Real(w[k]);
  }
  HpAggregate out;
  out.w_avg = static_cast<double>(avg);
  for (const auto& ck : c) out.coefficients.push_back(static_cast<double>(ck));
  out.w_glob = static_cast<double>(num / c_sum);
  return out;
}

double pairwise_auc(std::span<const double> scores, std::span<const unsigned char> positive) {
  double credit = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      ++pairs;
      if (scores[i] > scores[j])
        credit += 1.0;
      else if (scores[i] == scores[j])
        credit += 0.5;
    }
  }
  if (pairs == 0) throw std::invalid_argument("pairwise_auc: need positives and negatives");
  return credit / static_cast<double>(pairs);
}

Tensor random_tensor(Shape shape, CounterRng& rng, double lo, double hi, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

namespace {

Tensor leaf(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  return random_tensor(std::move(shape), rng, lo, hi, true);
}

// Constant weights so that sum(out * R) probes every output coordinate.
Tensor weights(Shape shape, CounterRng& rng) { return random_tensor(std::move(shape), rng); }

Tensor contract(const Tensor& out, const Tensor& r) { return ops::sum(ops::mul(out, r)); }

// Values bounded away from zero so relu is differentiable at every sample.
Tensor away_from_zero(Shape shape, CounterRng& rng) {
  Tensor t = leaf(std::move(shape), rng);
  for (double& v : t.mutable_data()) v = (v < 0 ? -1.0 : 1.0) * (0.05 + std::fabs(v));
  return t;
}

// Distinct values with gaps far above the probe step, so every pooling
// window has a strict maximum.
Tensor distinct_values(Shape shape, CounterRng& rng) {
  std::vector<double> v(shape_numel(shape));
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  for (double& x : v) x = 0.1 * x + rng.uniform(-0.01, 0.01);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor labels_tensor(std::size_t rows, std::size_t classes, CounterRng& rng) {
  std::vector<double> v(rows);
  for (double& x : v) x = static_cast<double>(rng.below(classes));
  return Tensor({rows}, std::move(v));
}

std::vector<int> to_labels(const Tensor& t) {
  std::vector<int> out;
  for (double v : t.data()) out.push_back(static_cast<int>(v));
  return out;
}

}  // namespace

std::vector<GradCase> gradient_suite() {
  std::vector<GradCase> s;
  s.push_back({"conv2d",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({2, 2, 7, 6}, r), leaf({3, 2, 5, 5}, r),
                                            leaf({3}, r), weights({2, 3, 3, 2}, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::conv2d(in[0], in[1], in[2]), in[3]);
               }});
  s.push_back({"maxpool2x2",
               [](CounterRng& r) {
                 return std::vector<Tensor>{distinct_values({2, 2, 4, 6}, r),
                                            weights({2, 2, 2, 3}, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::maxpool2x2(in[0]), in[1]);
               }});
  s.push_back({"linear",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({4, 5}, r), leaf({5, 3}, r), leaf({3}, r),
                                            weights({4, 3}, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::linear(in[0], in[1], in[2]), in[3]);
               }});
  s.push_back({"relu",
               [](CounterRng& r) {
                 return std::vector<Tensor>{away_from_zero({3, 7}, r), weights({3, 7}, r)};
               },
               [](const std::vector<Tensor>& in) { return contract(ops::relu(in[0]), in[1]); }});
  s.push_back({"reshape",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({2, 6}, r), weights({3, 4}, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::reshape(in[0], {3, 4}), in[1]);
               }});
  s.push_back({"flatten",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({2, 3, 2, 2}, r), weights({2, 12}, r)};
               },
               [](const std::vector<Tensor>& in) { return contract(ops::flatten(in[0]), in[1]); }});
  s.push_back({"softmax(last axis)",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({3, 5}, r, -3, 3), weights({3, 5}, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::softmax(in[0], -1), in[1]);
               }});
  s.push_back({"softmax(axis 0)",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({4, 3}, r, -3, 3), weights({4, 3}, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::softmax(in[0], 0), in[1]);
               }});
  s.push_back({"log_softmax(last axis)",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({3, 5}, r, -3, 3), weights({3, 5}, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::log_softmax(in[0], -1), in[1]);
               }});
  s.push_back({"log_softmax(axis 0)",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({4, 3}, r, -3, 3), weights({4, 3}, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::log_softmax(in[0], 0), in[1]);
               }});
  s.push_back({"sharpen",
               [](CounterRng& r) {
                 Tensor tau({1}, {r.uniform(0.3, 2.0)});
                 return std::vector<Tensor>{leaf({4, 5}, r, -2, 2), weights({4, 5}, r), tau};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::sharpen(ops::softmax(in[0], -1), in[2].item()), in[1]);
               }});
  s.push_back({"mse_loss",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({4, 5}, r), leaf({4, 5}, r)};
               },
               [](const std::vector<Tensor>& in) { return ops::mse_loss(in[0], in[1]); }});
  s.push_back({"nll_loss",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({6, 4}, r, -3, 0), labels_tensor(6, 4, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return ops::nll_loss(in[0], to_labels(in[1]));
               }});
  s.push_back({"sum",
               [](CounterRng& r) { return std::vector<Tensor>{leaf({3, 4}, r)}; },
               [](const std::vector<Tensor>& in) { return ops::sum(in[0]); }});
  s.push_back({"mean",
               [](CounterRng& r) { return std::vector<Tensor>{leaf({3, 4}, r)}; },
               [](const std::vector<Tensor>& in) { return ops::mean(in[0]); }});
  s.push_back({"mean_rows",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({5, 3}, r), weights({3}, r)};
               },
               [](const std::vector<Tensor>& in) { return contract(ops::mean_rows(in[0]), in[1]); }});
  s.push_back({"xlogx",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({3, 4}, r, 0.05, 1.0), weights({3, 4}, r)};
               },
               [](const std::vector<Tensor>& in) { return contract(ops::xlogx(in[0]), in[1]); }});
  s.push_back({"add",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({3, 4}, r), leaf({3, 4}, r), weights({3, 4}, r)};
               },
               [](const std::vector<Tensor>& in) { return contract(ops::add(in[0], in[1]), in[2]); }});
  s.push_back({"sub",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({3, 4}, r), leaf({3, 4}, r), weights({3, 4}, r)};
               },
               [](const std::vector<Tensor>& in) { return contract(ops::sub(in[0], in[1]), in[2]); }});
  s.push_back({"mul",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({3, 4}, r), leaf({3, 4}, r), weights({3, 4}, r)};
               },
               [](const std::vector<Tensor>& in) { return contract(ops::mul(in[0], in[1]), in[2]); }});
  s.push_back({"scale",
               [](CounterRng& r) {
                 Tensor factor({1}, {r.uniform(-3.0, 3.0)});
                 return std::vector<Tensor>{leaf({3, 4}, r), weights({3, 4}, r), factor};
               },
               [](const std::vector<Tensor>& in) {
                 return contract(ops::scale(in[0], in[2].item()), in[1]);
               }});
  s.push_back({"shared operand",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({3, 4}, r), weights({3, 4}, r)};
               },
               [](const std::vector<Tensor>& in) {
                 const Tensor& x = in[0];
                 return contract(ops::add(ops::mul(x, x), ops::softmax(x, -1)), in[1]);
               }});
  s.push_back({"consistency loss",
               [](CounterRng& r) {
                 Tensor teacher = random_tensor({6, 5}, r, -2, 2);
                 Tensor target;
                 {
                   NoGradGuard no_grad;
                   target = ops::sharpen(ops::softmax(teacher, -1), 0.5);
                 }
                 return std::vector<Tensor>{leaf({6, 5}, r, -2, 2), target};
               },
               [](const std::vector<Tensor>& in) { return consistency_loss(in[0], in[1]); }});
  s.push_back({"consistency loss through sharpen",
               [](CounterRng& r) {
                 Tensor tau({1}, {r.uniform(0.3, 1.0)});
                 return std::vector<Tensor>{leaf({6, 5}, r, -2, 2), leaf({6, 5}, r, -2, 2), tau};
               },
               [](const std::vector<Tensor>& in) {
                 return ops::mse_loss(ops::softmax(in[0], -1),
                                      ops::sharpen(ops::softmax(in[1], -1), in[2].item()));
               }});
  s.push_back({"im loss",
               [](CounterRng& r) { return std::vector<Tensor>{leaf({6, 4}, r, -3, 3)}; },
               [](const std::vector<Tensor>& in) { return im_loss(ops::softmax(in[0], -1)); }});
  s.push_back({"cross entropy",
               [](CounterRng& r) {
                 return std::vector<Tensor>{leaf({6, 4}, r, -3, 3), labels_tensor(6, 4, r)};
               },
               [](const std::vector<Tensor>& in) {
                 return cross_entropy(in[0], to_labels(in[1]));
               }});
  return s;
}

GradCheck check_gradients(const GradCase& c, std::size_t instances, std::uint64_t seed,
                          std::size_t max_coords) {
  GradCheck report;
  report.name = c.name;
  const CounterRng root(seed);
  for (std::size_t inst = 0; inst < instances; ++inst) {
    CounterRng rng = root.derive({inst});
    std::vector<Tensor> inputs = c.make_inputs(rng);

    Tape tape;
    {
      GradTape rec(tape);
      Tensor loss = c.loss(inputs);
      tape.backward(loss);
    }

    auto eval = [&] {
      NoGradGuard no_grad;
      return c.loss(inputs).item();
    };

    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor& x = inputs[i];
      if (!x.requires_grad()) continue;
      const std::vector<double> analytic = x.grad();
      const std::size_t count = x.numel();
      CounterRng pick = rng.derive({1000 + i});
      std::vector<std::size_t> coords(count);
      std::iota(coords.begin(), coords.end(), 0);
      if (count > max_coords) {
        std::shuffle(coords.begin(), coords.end(), pick);
        coords.resize(max_coords);
      }
      for (std::size_t k : coords) {
        auto data = x.mutable_data();
        const double orig = data[k];
        data[k] = orig + kFdStep;
        const double up = eval();
        data[k] = orig - kFdStep;
        const double down = eval();
        data[k] = orig;
        const double numeric = (up - down) / (2.0 * kFdStep);
        const double diff = std::fabs(numeric - analytic[k]);
        const double allowed =
            std::max(kFdRelTol * std::max(std::fabs(numeric), std::fabs(analytic[k])), kFdAbsTol);
        report.worst_ratio = std::max(report.worst_ratio, diff / allowed);
        ++report.coordinates;
        if (diff > allowed) {
          if (report.failures == 0)
            report.first_failure = "instance " + std::to_string(inst) + " input " +
                                   std::to_string(i) + " coord " + std::to_string(k) +
                                   ": analytic " + std::to_string(analytic[k]) + " numeric " +
                                   std::to_string(numeric);
          ++report.failures;
        }
      }
    }
    ++report.instances;
  }
  return report;
}

}  // namespace isofed::testing
