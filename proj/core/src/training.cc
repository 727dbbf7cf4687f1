#include "isofed/training.h"

#include <cmath>
#include <string>

#include "isofed/errors.h"
#include "isofed/ops.h"

namespace isofed {

void TrainerConfig::validate() const {
  if (!(lr >= 0.0) || !(pretrain_lr >= 0.0)) throw ConfigError("trainer: learning rates must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("trainer: momentum must be in [0, 1)");
  if (batch_size < 1) throw ConfigError("trainer: batch_size must be >= 1");
  if (!(ema_alpha >= 0.0 && ema_alpha <= 1.0)) throw ConfigError("trainer: ema_alpha must be in [0, 1]");
  if (!(sharpen_tau > 0.0) || !std::isfinite(sharpen_tau))
    throw ConfigError("trainer: sharpen_tau must be > 0");
}

std::vector<double> sharpen(std::span<const double> probs, double tau) {
  NoGradGuard no_grad;
  Tensor t({probs.size()}, std::vector<double>(probs.begin(), probs.end()));
  const Tensor out = ops::sharpen(t, tau);
  return {out.data().begin(), out.data().end()};
}

namespace {

void ema_into(std::span<double> teacher, std::span<const double> student, double alpha) {
  for (std::size_t i = 0; i < teacher.size(); ++i)
    teacher[i] = alpha * student[i] + (1.0 - alpha) * teacher[i];
}

void ema_into(CnnClassifier& teacher, const CnnClassifier& student, double alpha) {
  auto& t = teacher.parameters();
  const auto& s = student.parameters();
  for (std::size_t i = 0; i < t.size(); ++i) ema_into(t[i].mutable_data(), s[i].data(), alpha);
}

}  // namespace

ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double alpha) {
  teacher.check_layout(student, "ema_update");
  ModelParams out = teacher;
  for (std::size_t i = 0; i < out.size(); ++i)
    ema_into(out.entries()[i].values, student.entries()[i].values, alpha);
  return out;
}

Tensor consistency_loss(const Tensor& student_logits, const Tensor& target) {
  return ops::mse_loss(ops::softmax(student_logits, -1), target);
}

Tensor im_loss(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("im_loss: expected [B,C] probabilities");
  const double batch = static_cast<double>(probs.dim(0));
  Tensor diversity = ops::sum(ops::xlogx(ops::mean_rows(probs)));
  Tensor confidence = ops::scale(ops::sum(ops::xlogx(probs)), -1.0 / batch);
  return ops::add(diversity, confidence);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  return ops::nll_loss(ops::log_softmax(logits, -1), labels);
}

void SgdMomentum::step(std::vector<Tensor>& params) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const auto& p : params) velocity_.emplace_back(p.numel(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = velocity_[i];
    auto data = params[i].mutable_data();
    const auto& g = params[i].impl()->grad;
    if (g.empty()) {
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] *= momentum_;
        data[k] -= lr_ * v[k];
      }
      continue;
    }
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = momentum_ * v[k] + g[k];
      data[k] -= lr_ * v[k];
    }
    params[i].zero_grad();
  }
}

ModelParams train_labeled_client(const ModelParams& model_in, const ClientData& client,
                                 const TrainerConfig& cfg, CounterRng rng,
                                 const StepObserver& observer) {
  cfg.validate();
  if (client.shard.role != ClientRole::kLabeled)
    throw Error("train_labeled_client: client " + std::to_string(client.shard.client_id) +
                " is not labeled");
  CnnClassifier model = model_from_params(model_in);
  BatchStream stream(client.data, client.shard, client.stats, cfg.batch_size, BatchViews::kWeak, rng,
                     client.allow_flip);
  SgdMomentum opt(cfg.lr, cfg.momentum);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    stream.begin_epoch();
    while (auto batch = stream.next()) {
      const std::vector<int> labels = gather_labels(client.data, batch->indices);
      Tape tape;
      double loss_value;
      {
        GradTape recording(tape);
        Tensor loss = cross_entropy(model.forward(batch->weak), labels);
        loss_value = loss.item();
        tape.backward(loss);
      }
      opt.step(model.parameters());
      ++step;
      if (observer) observer({step, loss_value, &model, nullptr});
    }
  }
  return model.extract_params();
}

ModelParams train_unlabeled_client(const ModelParams& global_in, TeacherStudent& state,
                                   const ClientData& client, const TrainerConfig& cfg,
                                   CounterRng rng, const StepObserver& observer) {
  cfg.validate();
  if (client.shard.role != ClientRole::kUnlabeled)
    throw Error("train_unlabeled_client: client " + std::to_string(client.shard.client_id) +
                " is not unlabeled");
  CnnClassifier student = model_from_params(global_in);
  CnnClassifier teacher = model_from_params(global_in);
  BatchStream stream(client.data, client.shard, client.stats, cfg.batch_size, BatchViews::kPaired,
                     rng, client.allow_flip);
  SgdMomentum opt(cfg.lr, cfg.momentum);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    stream.begin_epoch();
    while (auto batch = stream.next()) {
      Tensor target;
      {
        NoGradGuard no_grad;
        target = ops::sharpen(ops::softmax(teacher.forward(batch->weak), -1), cfg.sharpen_tau);
      }
      Tape tape;
      double loss_value;
      {
        GradTape recording(tape);
        Tensor loss = consistency_loss(student.forward(batch->strong), target);
        loss_value = loss.item();
        tape.backward(loss);
      }
      opt.step(student.parameters());
      ema_into(teacher, student, cfg.ema_alpha);
      ++step;
      if (observer) observer({step, loss_value, &student, &teacher});
    }
  }
  state.teacher = teacher.extract_params();
  state.student = student.extract_params();
  return state.student;
}

ModelParams im_pretrain(const ModelParams& global_in, const ClientData& client,
                        const TrainerConfig& cfg, CounterRng rng, const StepObserver& observer) {
  cfg.validate();
  if (cfg.pretrain_epochs == 0) return global_in;
  CnnClassifier model = model_from_params(global_in);
  BatchStream stream(client.data, client.shard, client.stats, cfg.batch_size, BatchViews::kClean,
                     rng, client.allow_flip);
  SgdMomentum opt(cfg.pretrain_lr, cfg.momentum);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    stream.begin_epoch();
    while (auto batch = stream.next()) {
      Tape tape;
      double loss_value;
      {
        GradTape recording(tape);
        Tensor loss = im_loss(ops::softmax(model.forward(batch->weak), -1));
        loss_value = loss.item();
        tape.backward(loss);
      }
      opt.step(model.parameters());
      ++step;
      if (observer) observer({step, loss_value, &model, nullptr});
    }
  }
  return model.extract_params();
}

}  // namespace isofed
