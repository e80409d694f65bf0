#include "sct/train.hpp"

#include <algorithm>
#include <cmath>

#include "sct/error.hpp"
#include "sct/metrics.hpp"

namespace sct {

std::map<std::string, std::string> TrainConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["lr"] = std::to_string(lr);
  kv["weight_decay"] = std::to_string(weight_decay);
  kv["batch"] = std::to_string(batch);
  kv["grad_accum"] = std::to_string(grad_accum);
  kv["label_smoothing"] = std::to_string(label_smoothing);
  kv["max_steps"] = std::to_string(max_steps);
  kv["seed"] = std::to_string(seed);
  kv["eval_every"] = std::to_string(eval_every);
  kv["stop_f1"] = std::to_string(stop_f1);
  kv["patience"] = std::to_string(patience);
  return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  auto get = [&](const char* k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("lr")) c.lr = std::stod(*v);
  if (auto* v = get("weight_decay")) c.weight_decay = std::stod(*v);
  if (auto* v = get("batch")) c.batch = std::stoi(*v);
  if (auto* v = get("grad_accum")) c.grad_accum = std::stoi(*v);
  if (auto* v = get("label_smoothing")) c.label_smoothing = std::stod(*v);
  if (auto* v = get("max_steps")) c.max_steps = std::stol(*v);
  if (auto* v = get("seed")) c.seed = std::stoull(*v);
  if (auto* v = get("eval_every")) c.eval_every = std::stol(*v);
  if (auto* v = get("stop_f1")) c.stop_f1 = std::stod(*v);
  if (auto* v = get("patience")) c.patience = std::stoi(*v);
  return c;
}

AdamW::AdamW(CodeModel& model, double lr, double weight_decay, double beta1,
             double beta2, double eps)
    : model_(model), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  model_.for_each_param([&](const std::string&, Tensor& t) {
    m_.emplace_back(t.data().size(), 0.0);
    v_.emplace_back(t.data().size(), 0.0);
  });
}

void AdamW::step(double grad_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  size_t pi = 0;
  model_.for_each_param([&](const std::string& name, Tensor& t) {
    auto& m = m_[pi];
    auto& v = v_[pi];
    ++pi;
    auto& theta = t.data();
    auto& grad = t.grad();
    for (size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] * grad_scale;
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in " + name);
      }
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * theta[i]);
    }
  });
  zero_grad();
}

void AdamW::zero_grad() {
  model_.for_each_param([](const std::string&, Tensor& t) { t.zero_grad(); });
}

Trainer::Trainer(CodeModel& model, const TrainConfig& cfg,
                 std::vector<ModelSnippet> train_set,
                 std::vector<ModelSnippet> val_set, const Vocabulary& vocab)
    : model_(model), cfg_(cfg), train_set_(std::move(train_set)),
      val_set_(std::move(val_set)), vocab_(vocab),
      opt_(model, cfg.lr, cfg.weight_decay), train_rng_(cfg.seed + 1) {
  if (cfg_.finetune_language >= 0) {
    auto keep = [&](const ModelSnippet& s) {
      return s.language_id == cfg_.finetune_language;
    };
    std::vector<ModelSnippet> filtered;
    for (auto& s : train_set_) {
      if (keep(s)) filtered.push_back(std::move(s));
    }
    train_set_ = std::move(filtered);
  }
  if (train_set_.empty()) throw DataError("training set is empty");
}

double Trainer::accumulate(const ModelSnippet& snip) {
  auto fwd = model_.forward_loss(snip, cfg_.label_smoothing, /*train=*/true,
                                 train_rng_);
  const double loss = fwd.loss.scalar_value();
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss on snippet " + snip.id +
                       " (loss=" + std::to_string(loss) + ")");
  }
  fwd.loss.backward();
  ++accumulated_;
  return loss;
}

void Trainer::apply_update() {
  if (accumulated_ == 0) return;
  opt_.step(1.0 / double(accumulated_));
  accumulated_ = 0;
}

double Trainer::evaluate(const std::vector<ModelSnippet>& set) {
  std::vector<std::vector<std::string>> pred, ref;
  pred.reserve(set.size());
  ref.reserve(set.size());
  for (const auto& snip : set) {
    pred.push_back(model_.predict_greedy(snip, vocab_));
    ref.push_back(snip.label_strings);
  }
  return micro_f1(pred, ref).f1;
}

TrainResult Trainer::run(std::ostream* log,
                         const std::function<void(long)>& on_checkpoint) {
  TrainResult result;
  std::vector<size_t> order(train_set_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();  // triggers a shuffle on first use
  auto next_index = [&]() {
    if (cursor >= order.size()) {
      for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[train_rng_.below(i)]);
      }
      cursor = 0;
    }
    return order[cursor++];
  };

  double best_f1 = -1.0;
  int evals_since_best = 0;
  double running_loss = 0.0;
  long running_count = 0;
  for (long step = 1; step <= cfg_.max_steps; ++step) {
    const long per_step = long(cfg_.batch) * cfg_.grad_accum;
    for (long b = 0; b < per_step; ++b) {
      running_loss += accumulate(train_set_[next_index()]);
      ++running_count;
    }
    apply_update();
    result.steps = step;
    const bool eval_now = cfg_.eval_every > 0 && (step % cfg_.eval_every == 0);
    if (eval_now || step == cfg_.max_steps) {
      const double f1 = evaluate(val_set_.empty() ? train_set_ : val_set_);
      const double mean_loss =
          running_count > 0 ? running_loss / double(running_count) : 0.0;
      if (log) {
        (*log) << "{\"step\":" << step << ",\"loss\":" << mean_loss
               << ",\"lr\":" << opt_.lr() << ",\"micro_f1_val\":" << f1
               << "}\n";
        log->flush();
      }
      running_loss = 0.0;
      running_count = 0;
      result.final_loss = mean_loss;
      result.final_val_f1 = f1;
      if (on_checkpoint) on_checkpoint(step);
      if (cfg_.stop_f1 >= 0.0 && f1 >= cfg_.stop_f1) break;
      if (f1 > best_f1) {
        best_f1 = f1;
        evals_since_best = 0;
      } else if (cfg_.patience > 0 && ++evals_since_best >= cfg_.patience) {
        break;
      }
    }
  }
  return result;
}

}  // namespace sct
