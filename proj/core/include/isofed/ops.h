#pragma once

#include <span>

#include "isofed/tensor.h"

/// Differentiable tensor operations. Each op records itself on the thread's
/// active tape when at least one operand requires a gradient.
namespace isofed::ops {

/// Valid (unpadded) stride-1 cross-correlation.
/// input [N,C,H,W], kernel [F,C,KH,KW], bias [F] -> [N,F,H-KH+1,W-KW+1].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

/// 2x2 max pooling with stride 2. [N,C,H,W] -> [N,C,H/2,W/2]; H and W must be
/// even. The gradient goes to the first maximal cell in row-major order.
Tensor maxpool2x2(const Tensor& input);

/// input [N,D], weight [D,M], bias [M] -> [N,M].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& t);

Tensor reshape(const Tensor& t, Shape shape);

/// [N, ...] -> [N, prod(...)].
Tensor flatten(const Tensor& t);

/// Axis may be negative (counted from the end).
Tensor softmax(const Tensor& t, int axis = -1);
Tensor log_softmax(const Tensor& t, int axis = -1);

/// Temperature sharpening p_i^(1/tau) / sum_j p_j^(1/tau) over the last axis.
/// Every row must be a probability vector (nonnegative, sums to 1 +- 1e-6).
Tensor sharpen(const Tensor& probs, double tau);

/// Mean over the leading (batch) axis of the squared L2 distance between
/// rows: sum((a-b)^2) / a.dim(0).
Tensor mse_loss(const Tensor& a, const Tensor& b);

/// -mean_b log_probs[b, labels[b]] for log_probs [B,C].
Tensor nll_loss(const Tensor& log_probs, std::span<const int> labels);

Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);

/// Mean over the leading axis. [N, ...] -> [...]; a rank-1 input gives [1].
Tensor mean_rows(const Tensor& t);

/// Elementwise x*log(x) with 0*log(0) = 0. Inputs must be nonnegative.
Tensor xlogx(const Tensor& t);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double factor);

}  // namespace isofed::ops
