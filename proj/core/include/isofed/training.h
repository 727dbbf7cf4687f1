#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "isofed/data.h"
#include "isofed/model.h"
#include "isofed/rng.h"
#include "isofed/tensor.h"

namespace isofed {

struct TrainerConfig {
  double lr = 0.03;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t local_epochs = 1;
  /// Weight of the student in the teacher update
  /// teacher <- alpha * student + (1 - alpha) * teacher.
  double ema_alpha = 0.001;
  double sharpen_tau = 0.5;
  std::size_t pretrain_epochs = 1;
  double pretrain_lr = 0.001;

  void validate() const;
};

struct TeacherStudent {
  ModelParams teacher;
  ModelParams student;
};

/// What a local trainer may see of a client.
struct ClientData {
  const Dataset& data;
  const ClientShard& shard;
  const NormStats& stats;
  bool allow_flip = true;
};

struct StepInfo {
  std::size_t step = 0;  // 1-based count of optimizer steps taken so far
  double loss = 0.0;
  const CnnClassifier* student = nullptr;
  const CnnClassifier* teacher = nullptr;  // mean-teacher training only
};

using StepObserver = std::function<void(const StepInfo&)>;

/// Plain-vector sharpening; see ops::sharpen.
std::vector<double> sharpen(std::span<const double> probs, double tau);

/// teacher' = alpha * student + (1 - alpha) * teacher, elementwise.
ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double alpha);

/// Mean-teacher consistency: mse_loss(softmax(student_logits), target), i.e.
/// the batch mean of ||target - p_s||^2. `target` is the sharpened teacher
/// prediction and is normally outside the tape.
Tensor consistency_loss(const Tensor& student_logits, const Tensor& target);

/// Information-maximization loss on a [B, C] batch of probability rows:
///   sum_c pbar_c log pbar_c - (1/B) sum_b sum_c p_bc log p_bc,
/// where pbar is the batch-mean prediction. The first term rewards diverse
/// predictions across the batch, the second confident ones. Bounded below
/// by -log C.
Tensor im_loss(const Tensor& probs);

/// nll_loss(log_softmax(logits), labels).
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// SGD with heavy-ball momentum: v <- mu v + g; p <- p - lr v.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}
  /// Applies one update from the accumulated grads, then zeroes them.
  void step(std::vector<Tensor>& params);

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

/// Supervised local training: local_epochs of SGD on cross-entropy over
/// weakly augmented batches of a labeled shard.
ModelParams train_labeled_client(const ModelParams& model_in, const ClientData& client,
                                  const TrainerConfig& cfg, CounterRng rng,
                                  const StepObserver& observer = {});

/// Mean-teacher local training on an unlabeled shard. Teacher and student
/// both start from `global_in`. Per paired batch: the teacher predicts the
/// weak view (no tape), the prediction is sharpened; the student predicts
/// the strong view; one SGD step on the consistency loss; then the EMA
/// teacher update. `state` receives the final pair; the student is returned.
/// Never reads labels.
ModelParams train_unlabeled_client(const ModelParams& global_in, TeacherStudent& state,
                                   const ClientData& client, const TrainerConfig& cfg,
                                   CounterRng rng, const StepObserver& observer = {});

/// Client-adaptive pretraining: pretrain_epochs of SGD (lr = pretrain_lr) on
/// im_loss over clean normalized batches. Zero epochs returns the input.
/// Never reads labels.
ModelParams im_pretrain(const ModelParams& global_in, const ClientData& client,
                        const TrainerConfig& cfg, CounterRng rng,
                        const StepObserver& observer = {});

}  // namespace isofed
