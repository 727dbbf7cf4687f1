#include "isofed/ops.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <utility>

#include "isofed/errors.h"

namespace isofed::ops {
namespace {

using Impl = detail::TensorImpl;
using ImplPtr = std::shared_ptr<Impl>;
using BackwardFn = std::function<void(TapeNode&)>;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using Eigen::Index;

Tensor emit(const char* op, Shape shape, std::vector<double> values,
            std::vector<ImplPtr> inputs, BackwardFn backward) {
  auto out = std::make_shared<Impl>();
  out->shape = std::move(shape);
  out->data = std::move(values);
  Tape* tape = active_tape();
  const bool track = tape != nullptr &&
                     std::any_of(inputs.begin(), inputs.end(),
                                 [](const ImplPtr& p) { return p->requires_grad; });
  if (track) {
    out->requires_grad = true;
    out->is_leaf = false;
    tape->record(TapeNode{op, std::move(inputs), out, std::move(backward)});
  }
  return make_tensor(std::move(out));
}

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(std::string(op) + ": undefined operand");
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  require(a >= 0 && a < r, op,
          "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

struct AxisLayout {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisLayout layout_for(const Shape& shape, std::size_t axis) {
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  constexpr const char* kOp = "conv2d";
  require_defined(input, kOp);
  require_defined(kernel, kOp);
  require_defined(bias, kOp);
  require(input.rank() == 4, kOp, "input must be [N,C,H,W], got " + shape_str(input.shape()));
  require(kernel.rank() == 4, kOp, "kernel must be [F,C,KH,KW], got " + shape_str(kernel.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  require(kernel.dim(1) == c, kOp,
          "kernel channels " + std::to_string(kernel.dim(1)) + " != input channels " +
              std::to_string(c));
  require(bias.rank() == 1 && bias.dim(0) == f, kOp,
          "bias must be [" + std::to_string(f) + "], got " + shape_str(bias.shape()));
  require(h >= kh && w >= kw, kOp,
          "input spatial dims " + shape_str(input.shape()) + " smaller than kernel " +
              shape_str(kernel.shape()));

  const std::size_t oh = h - kh + 1, ow = w - kw + 1, positions = oh * ow;
  const std::size_t patch = c * kh * kw;

  // im2col over chunks of samples: cols[r, s*P + p] with r = (ci, ki, kj),
  // p = (oy, ox). Chunks are sized so the patch matrix stays cache resident.
  const std::size_t chunk = std::clamp<std::size_t>((std::size_t{1} << 17) / (patch * positions),
                                                    1, n);
  auto im2col = [=](const double* x, std::size_t first, std::size_t count, double* cols) {
    const std::size_t stride = count * positions;
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ki = 0; ki < kh; ++ki)
        for (std::size_t kj = 0; kj < kw; ++kj) {
          double* row = cols + ((ci * kh + ki) * kw + kj) * stride;
          for (std::size_t s = 0; s < count; ++s) {
            const double* plane = x + ((first + s) * c + ci) * h * w;
            double* dst = row + s * positions;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const double* src = plane + (oy + ki) * w + kj;
              for (std::size_t ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = src[ox];
            }
          }
        }
  };

  std::vector<double> out(n * f * positions);
  {
    RowMat cols(static_cast<Index>(patch), static_cast<Index>(chunk * positions));
    RowMat prod(static_cast<Index>(f), static_cast<Index>(chunk * positions));
    const ConstMatMap km(kernel.data().data(), Index(f), Index(patch));
    const double* b = bias.data().data();
    for (std::size_t first = 0; first < n; first += chunk) {
      const std::size_t count = std::min(chunk, n - first);
      const Index cw = Index(count * positions);
      im2col(input.data().data(), first, count, cols.data());
      prod.leftCols(cw).noalias() = km * ConstMatMap(cols.data(), Index(patch), cw);
      for (std::size_t s = 0; s < count; ++s)
        for (std::size_t fi = 0; fi < f; ++fi) {
          const double* src = prod.data() + fi * prod.cols() + s * positions;
          double* dst = out.data() + ((first + s) * f + fi) * positions;
          for (std::size_t p = 0; p < positions; ++p) dst[p] = src[p] + b[fi];
        }
    }
  }

  auto backward = [=](TapeNode& node) {
    const auto& in = node.inputs[0];
    const auto& ker = node.inputs[1];
    const auto& bi = node.inputs[2];
    const std::vector<double>& g = node.output->grad;
    const ConstMatMap kmat(ker->data.data(), Index(f), Index(patch));

    RowMat dk = RowMat::Zero(Index(f), Index(patch));
    Eigen::VectorXd db = Eigen::VectorXd::Zero(Index(f));
    RowMat cols(static_cast<Index>(patch), static_cast<Index>(chunk * positions));
    RowMat gm(static_cast<Index>(f), static_cast<Index>(chunk * positions));
    double* dx = in->requires_grad ? in->grad_buffer().data() : nullptr;
    for (std::size_t first = 0; first < n; first += chunk) {
      const std::size_t count = std::min(chunk, n - first);
      const Index cw = Index(count * positions);
      const std::size_t stride = count * positions;
      for (std::size_t s = 0; s < count; ++s)
        for (std::size_t fi = 0; fi < f; ++fi)
          std::memcpy(gm.data() + fi * stride + s * positions,
                      g.data() + ((first + s) * f + fi) * positions, positions * sizeof(double));
      const ConstMatMap gc(gm.data(), Index(f), cw);
      if (ker->requires_grad) {
        im2col(in->data.data(), first, count, cols.data());
        dk.noalias() += gc * ConstMatMap(cols.data(), Index(patch), cw).transpose();
      }
      if (bi->requires_grad) db += gc.rowwise().sum();
      if (dx != nullptr) {
        MatMap dcols(cols.data(), Index(patch), cw);
        dcols.noalias() = kmat.transpose() * gc;
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t ki = 0; ki < kh; ++ki)
            for (std::size_t kj = 0; kj < kw; ++kj) {
              const double* row = cols.data() + ((ci * kh + ki) * kw + kj) * stride;
              for (std::size_t s = 0; s < count; ++s) {
                double* plane = dx + ((first + s) * c + ci) * h * w;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                  double* dst = plane + (oy + ki) * w + kj;
                  const double* src = row + s * positions + oy * ow;
                  for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] += src[ox];
                }
              }
            }
      }
    }
    if (ker->requires_grad) MatMap(ker->grad_buffer().data(), Index(f), Index(patch)) += dk;
    if (bi->requires_grad) VecMap(bi->grad_buffer().data(), Index(f)) += db;
  };

  return emit(kOp, {n, f, oh, ow}, std::move(out),
              {input.impl(), kernel.impl(), bias.impl()}, std::move(backward));
}

Tensor maxpool2x2(const Tensor& input) {
  constexpr const char* kOp = "maxpool2x2";
  require_defined(input, kOp);
  require(input.rank() == 4, kOp, "input must be [N,C,H,W], got " + shape_str(input.shape()));
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(h % 2 == 0 && w % 2 == 0, kOp,
          "spatial dims must be even, got " + shape_str(input.shape()));
  const std::size_t oh = h / 2, ow = w / 2;

  std::vector<double> out(n * c * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* x = input.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        const std::size_t cells[4] = {base + 2 * i * w + 2 * j, base + 2 * i * w + 2 * j + 1,
                                      base + (2 * i + 1) * w + 2 * j,
                                      base + (2 * i + 1) * w + 2 * j + 1};
        std::size_t best = cells[0];
        for (int k = 1; k < 4; ++k)
          if (x[cells[k]] > x[best]) best = cells[k];
        out[o] = x[best];
        (*argmax)[o] = best;
      }
  }

  auto backward = [argmax](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto dx = in->grad_buffer();
    const std::vector<double>& g = node.output->grad;
    for (std::size_t k = 0; k < g.size(); ++k) dx[(*argmax)[k]] += g[k];
  };
  return emit(kOp, {n, c, oh, ow}, std::move(out), {input.impl()}, std::move(backward));
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  constexpr const char* kOp = "linear";
  require_defined(input, kOp);
  require_defined(weight, kOp);
  require_defined(bias, kOp);
  require(input.rank() == 2, kOp, "input must be [N,D], got " + shape_str(input.shape()));
  require(weight.rank() == 2, kOp, "weight must be [D,M], got " + shape_str(weight.shape()));
  const std::size_t n = input.dim(0), d = input.dim(1), m = weight.dim(1);
  require(weight.dim(0) == d, kOp,
          "inner dims disagree: input " + shape_str(input.shape()) + " vs weight " +
              shape_str(weight.shape()));
  require(bias.rank() == 1 && bias.dim(0) == m, kOp,
          "bias must be [" + std::to_string(m) + "], got " + shape_str(bias.shape()));

  std::vector<double> out(n * m);
  MatMap om(out.data(), Index(n), Index(m));
  om.noalias() = ConstMatMap(input.data().data(), Index(n), Index(d)) *
                 ConstMatMap(weight.data().data(), Index(d), Index(m));
  om.rowwise() += ConstVecMap(bias.data().data(), Index(m)).transpose();

  auto backward = [n, d, m](TapeNode& node) {
    const auto& in = node.inputs[0];
    const auto& wt = node.inputs[1];
    const auto& bi = node.inputs[2];
    ConstMatMap g(node.output->grad.data(), Index(n), Index(m));
    if (in->requires_grad)
      MatMap(in->grad_buffer().data(), Index(n), Index(d)).noalias() +=
          g * ConstMatMap(wt->data.data(), Index(d), Index(m)).transpose();
    if (wt->requires_grad)
      MatMap(wt->grad_buffer().data(), Index(d), Index(m)).noalias() +=
          ConstMatMap(in->data.data(), Index(n), Index(d)).transpose() * g;
    if (bi->requires_grad) {
      // Plain loop: Eigen's column reduction peels by buffer address, so its
      // rounding would depend on heap alignment.
      double* db = bi->grad_buffer().data();
      const double* gp = node.output->grad.data();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < m; ++j) db[j] += gp[r * m + j];
    }
  };
  return emit(kOp, {n, m}, std::move(out), {input.impl(), weight.impl(), bias.impl()},
              std::move(backward));
}

Tensor relu(const Tensor& t) {
  require_defined(t, "relu");
  const std::size_t count = t.numel();
  std::vector<double> out(count);
  const double* x = t.data().data();
  for (std::size_t i = 0; i < count; ++i) out[i] = std::max(x[i], 0.0);
  auto backward = [](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    double* dx = in->grad_buffer().data();
    const double* xv = in->data.data();
    const double* g = node.output->grad.data();
    const std::size_t size = node.output->grad.size();
    for (std::size_t i = 0; i < size; ++i) dx[i] += xv[i] > 0.0 ? g[i] : 0.0;
  };
  return emit("relu", t.shape(), std::move(out), {t.impl()}, std::move(backward));
}

Tensor reshape(const Tensor& t, Shape shape) {
  require_defined(t, "reshape");
  require(shape_numel(shape) == t.numel(), "reshape",
          "cannot view " + shape_str(t.shape()) + " as " + shape_str(shape));
  std::vector<double> out(t.data().begin(), t.data().end());
  auto backward = [](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto dx = in->grad_buffer();
    const auto& g = node.output->grad;
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  };
  return emit("reshape", std::move(shape), std::move(out), {t.impl()}, std::move(backward));
}

Tensor flatten(const Tensor& t) {
  require_defined(t, "flatten");
  require(t.rank() >= 1, "flatten", "needs rank >= 1");
  return reshape(t, {t.dim(0), t.numel() / t.dim(0)});
}

Tensor softmax(const Tensor& t, int axis) {
  require_defined(t, "softmax");
  const std::size_t ax = normalize_axis(axis, t.rank(), "softmax");
  const AxisLayout l = layout_for(t.shape(), ax);
  const double* x = t.data().data();
  std::vector<double> out(t.numel());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.extent * l.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.extent; ++k) mx = std::max(mx, x[base + k * l.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < l.extent; ++k) {
        const double e = std::exp(x[base + k * l.inner] - mx);
        out[base + k * l.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < l.extent; ++k) out[base + k * l.inner] /= z;
    }
  auto backward = [l](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto dx = in->grad_buffer();
    const auto& y = node.output->data;
    const auto& g = node.output->grad;
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.extent * l.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < l.extent; ++k)
          dot += g[base + k * l.inner] * y[base + k * l.inner];
        for (std::size_t k = 0; k < l.extent; ++k) {
          const std::size_t idx = base + k * l.inner;
          dx[idx] += y[idx] * (g[idx] - dot);
        }
      }
  };
  return emit("softmax", t.shape(), std::move(out), {t.impl()}, std::move(backward));
}

Tensor log_softmax(const Tensor& t, int axis) {
  require_defined(t, "log_softmax");
  const std::size_t ax = normalize_axis(axis, t.rank(), "log_softmax");
  const AxisLayout l = layout_for(t.shape(), ax);
  const double* x = t.data().data();
  std::vector<double> out(t.numel());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.extent * l.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.extent; ++k) mx = std::max(mx, x[base + k * l.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < l.extent; ++k) z += std::exp(x[base + k * l.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t k = 0; k < l.extent; ++k)
        out[base + k * l.inner] = x[base + k * l.inner] - lse;
    }
  auto backward = [l](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto dx = in->grad_buffer();
    const auto& y = node.output->data;
    const auto& g = node.output->grad;
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.extent * l.inner + i;
        double gsum = 0.0;
        for (std::size_t k = 0; k < l.extent; ++k) gsum += g[base + k * l.inner];
        for (std::size_t k = 0; k < l.extent; ++k) {
          const std::size_t idx = base + k * l.inner;
          dx[idx] += g[idx] - std::exp(y[idx]) * gsum;
        }
      }
  };
  return emit("log_softmax", t.shape(), std::move(out), {t.impl()}, std::move(backward));
}

Tensor sharpen(const Tensor& probs, double tau) {
  constexpr const char* kOp = "sharpen";
  require_defined(probs, kOp);
  if (!(tau > 0.0)) throw Error("sharpen: temperature must be positive");
  require(probs.rank() >= 1, kOp, "needs rank >= 1");
  const std::size_t classes = probs.shape().back();
  const std::size_t rows = probs.numel() / classes;
  const double inv_tau = 1.0 / tau;
  const double* p = probs.data().data();
  std::vector<double> out(probs.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* pr = p + r * classes;
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      if (pr[k] < 0.0) throw Error("sharpen: negative probability");
      total += pr[k];
    }
    if (total == 0.0) throw Error("sharpen: all-zero probability vector");
    if (std::abs(total - 1.0) > 1e-6)
      throw Error("sharpen: row does not sum to 1 (sum = " + std::to_string(total) + ")");
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      const double u = pr[k] > 0.0 ? std::pow(pr[k], inv_tau) : 0.0;
      out[r * classes + k] = u;
      z += u;
    }
    for (std::size_t k = 0; k < classes; ++k) out[r * classes + k] /= z;
  }
  auto backward = [rows, classes, inv_tau](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto dx = in->grad_buffer();
    const auto& q = node.output->data;
    const auto& g = node.output->grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * classes;
      double dot = 0.0;
      for (std::size_t k = 0; k < classes; ++k) dot += g[base + k] * q[base + k];
      for (std::size_t k = 0; k < classes; ++k) {
        const double pk = in->data[base + k];
        if (pk > 0.0) dx[base + k] += inv_tau * q[base + k] / pk * (g[base + k] - dot);
      }
    }
  };
  return emit(kOp, probs.shape(), std::move(out), {probs.impl()}, std::move(backward));
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  constexpr const char* kOp = "mse_loss";
  require_defined(a, kOp);
  require_defined(b, kOp);
  require(a.shape() == b.shape(), kOp,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const double batch = static_cast<double>(a.rank() == 0 ? 1 : a.dim(0));
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    total += d * d;
  }
  auto backward = [batch](TapeNode& node) {
    const auto& x = node.inputs[0];
    const auto& y = node.inputs[1];
    const double g = node.output->grad[0] * 2.0 / batch;
    if (x->requires_grad) {
      auto dx = x->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * (x->data[i] - y->data[i]);
    }
    if (y->requires_grad) {
      auto dy = y->grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) dy[i] -= g * (x->data[i] - y->data[i]);
    }
  };
  return emit(kOp, {1}, {total / batch}, {a.impl(), b.impl()}, std::move(backward));
}

Tensor nll_loss(const Tensor& log_probs, std::span<const int> labels) {
  constexpr const char* kOp = "nll_loss";
  require_defined(log_probs, kOp);
  require(log_probs.rank() == 2, kOp, "log_probs must be [B,C], got " + shape_str(log_probs.shape()));
  const std::size_t batch = log_probs.dim(0), classes = log_probs.dim(1);
  require(labels.size() == batch, kOp,
          std::to_string(labels.size()) + " labels for batch of " + std::to_string(batch));
  auto picks = std::make_shared<std::vector<std::size_t>>(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes)
      throw Error("nll_loss: label " + std::to_string(labels[b]) + " out of range [0," +
                  std::to_string(classes) + ")");
    (*picks)[b] = b * classes + static_cast<std::size_t>(labels[b]);
    total -= log_probs.data()[(*picks)[b]];
  }
  auto backward = [picks, batch](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto dx = in->grad_buffer();
    const double g = node.output->grad[0] / static_cast<double>(batch);
    for (std::size_t idx : *picks) dx[idx] -= g;
  };
  return emit(kOp, {1}, {total / static_cast<double>(batch)}, {log_probs.impl()},
              std::move(backward));
}

Tensor sum(const Tensor& t) {
  require_defined(t, "sum");
  double total = 0.0;
  for (double v : t.data()) total += v;
  auto backward = [](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    const double g = node.output->grad[0];
    for (double& d : in->grad_buffer()) d += g;
  };
  return emit("sum", {1}, {total}, {t.impl()}, std::move(backward));
}

Tensor mean(const Tensor& t) {
  require_defined(t, "mean");
  return scale(sum(t), 1.0 / static_cast<double>(t.numel()));
}

Tensor mean_rows(const Tensor& t) {
  constexpr const char* kOp = "mean_rows";
  require_defined(t, kOp);
  require(t.rank() >= 1, kOp, "needs rank >= 1");
  const std::size_t rows = t.dim(0), width = t.numel() / rows;
  Shape shape(t.shape().begin() + 1, t.shape().end());
  if (shape.empty()) shape = {1};
  std::vector<double> out(width, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < width; ++k) out[k] += t.data()[r * width + k];
  for (double& v : out) v /= static_cast<double>(rows);
  auto backward = [rows, width](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto dx = in->grad_buffer();
    const auto& g = node.output->grad;
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < width; ++k) dx[r * width + k] += g[k] * inv;
  };
  return emit(kOp, std::move(shape), std::move(out), {t.impl()}, std::move(backward));
}

Tensor xlogx(const Tensor& t) {
  require_defined(t, "xlogx");
  std::vector<double> out(t.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = t.data()[i];
    if (x < 0.0) throw Error("xlogx: negative input");
    out[i] = x > 0.0 ? x * std::log(x) : 0.0;
  }
  auto backward = [](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto dx = in->grad_buffer();
    const auto& g = node.output->grad;
    constexpr double kFloor = std::numeric_limits<double>::min();
    for (std::size_t i = 0; i < g.size(); ++i)
      dx[i] += g[i] * (std::log(std::max(in->data[i], kFloor)) + 1.0);
  };
  return emit("xlogx", t.shape(), std::move(out), {t.impl()}, std::move(backward));
}

namespace {

template <typename Fwd, typename GradA, typename GradB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, GradA ga, GradB gb) {
  require_defined(a, op);
  require_defined(b, op);
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.data()[i], b.data()[i]);
  auto backward = [ga, gb](TapeNode& node) {
    const auto& x = node.inputs[0];
    const auto& y = node.inputs[1];
    const auto& g = node.output->grad;
    if (x->requires_grad) {
      auto dx = x->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * ga(x->data[i], y->data[i]);
    }
    if (y->requires_grad) {
      auto dy = y->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) dy[i] += g[i] * gb(x->data[i], y->data[i]);
    }
  };
  return emit(op, a.shape(), std::move(out), {a.impl(), b.impl()}, std::move(backward));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& t, double factor) {
  require_defined(t, "scale");
  std::vector<double> out(t.data().begin(), t.data().end());
  for (double& v : out) v *= factor;
  auto backward = [factor](TapeNode& node) {
    const auto& in = node.inputs[0];
    if (!in->requires_grad) return;
    auto dx = in->grad_buffer();
    const auto& g = node.output->grad;
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
  };
  return emit("scale", t.shape(), std::move(out), {t.impl()}, std::move(backward));
}

}  // namespace isofed::ops
