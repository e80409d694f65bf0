#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "sct/model.hpp"
#include "sct/snippet.hpp"
#include "sct/vocab.hpp"

namespace sct {

struct TrainConfig {
  double lr = 8e-5;
  double weight_decay = 3e-5;
  int batch = 8;
  int grad_accum = 16;  // effective batch = batch * grad_accum
  double label_smoothing = 0.1;
  long max_steps = 1000;
  uint64_t seed = 42;
  long eval_every = 100;
  // Validation-F1 plateau stopping: stop after `patience` evaluations
  // without improvement (0 disables), or as soon as F1 reaches `stop_f1`
  // (negative disables).
  double stop_f1 = -1.0;
  int patience = 0;
  int finetune_language = -1;  // restrict training to one language id

  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Adam with decoupled weight decay over the model's named parameters.
class AdamW {
 public:
  AdamW(CodeModel& model, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the accumulated gradients scaled by
  // `grad_scale`, then clears them.
  void step(double grad_scale);
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long t() const { return t_; }

 private:
  CodeModel& model_;
  double lr_, wd_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
  long steps = 0;
  double final_loss = 0.0;
  double final_val_f1 = 0.0;
};

class Trainer {
 public:
  Trainer(CodeModel& model, const TrainConfig& cfg,
          std::vector<ModelSnippet> train_set,
          std::vector<ModelSnippet> val_set, const Vocabulary& vocab);

  // Forward+backward on one snippet, gradients accumulate. Returns the loss.
  double accumulate(const ModelSnippet& snip);
  // Optimizer update from everything accumulated since the last call.
  void apply_update();

  // Micro-F1 of greedy predictions against references.
  double evaluate(const std::vector<ModelSnippet>& set);

  // Full loop; one step = one optimizer update. `log` gets one JSON line per
  // evaluation; `on_checkpoint` (optional) is invoked at each evaluation.
  TrainResult run(std::ostream* log,
                  const std::function<void(long)>& on_checkpoint = nullptr);

 private:
  CodeModel& model_;
  TrainConfig cfg_;
  std::vector<ModelSnippet> train_set_, val_set_;
  const Vocabulary& vocab_;
  AdamW opt_;
  Rng train_rng_;
  long accumulated_ = 0;
};

}  // namespace sct
