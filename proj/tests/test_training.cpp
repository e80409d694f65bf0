#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sct/error.hpp"
#include "sct/metrics.hpp"
#include "sct/model.hpp"
#include "sct/train.hpp"
#include "test_util.hpp"

using namespace sct;
using namespace sct_test;

namespace {

ModelConfig tiny_config(int vocab, int node_vocab) {
  ModelConfig c;
  c.d = 16;
  c.d_ff = 32;
  c.n_layers = 1;
  c.n_heads = 2;
  c.k_bins = 8;
  c.d_sub = 8;
  c.d_kind = 4;
  c.d_node = 4;
  c.dropout = 0.0;
  c.subtoken_vocab = vocab;
  c.node_type_vocab = node_vocab;
  return c;
}

std::vector<double> copy_data(const Tensor& t) { return t.data(); }

}  // namespace

// ---------------------------------------------------------------------------
// Loss

TEST_CASE("loss: perfect one-hot prediction with no smoothing is zero") {
  const Tensor probs = Tensor::from(1, 4, {0.0, 1.0, 0.0, 0.0});
  const Tensor loss = smoothed_step_loss(probs, 1, 0.0);
  CHECK(loss.scalar_value() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("loss: uniform prediction costs log V regardless of smoothing") {
  for (const double eps : {0.0, 0.1, 0.5}) {
    for (const int v : {4, 7, 32}) {
      const Tensor probs = Tensor::full(1, v, 1.0 / v);
      const Tensor loss = smoothed_step_loss(probs, 2, eps);
      CHECK(loss.scalar_value() ==
            doctest::Approx(std::log(double(v))).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss: prediction equal to the smoothed target costs its entropy") {
  // Hand evaluation for eps=0.1, V=4: target (0.925, 0.025, 0.025, 0.025),
  // cross-entropy of the target against itself = 0.3487804.
  const Tensor probs = Tensor::from(1, 4, {0.925, 0.025, 0.025, 0.025});
  const Tensor loss = smoothed_step_loss(probs, 0, 0.1);
  CHECK(loss.scalar_value() == doctest::Approx(0.3487804).epsilon(1e-6));
}

TEST_CASE("loss: label outside the support is an error") {
  const Tensor probs = Tensor::full(1, 4, 0.25);
  CHECK_THROWS_AS(smoothed_step_loss(probs, 4, 0.1), DataError);
}

// ---------------------------------------------------------------------------
// Optimizer

TEST_CASE("adamw with zero decay reproduces a reference Adam trajectory") {
  const int vocab = 24, nodes = 6;
  CodeModel model(tiny_config(vocab, nodes), 3);
  Tensor& theta = model.params().sub_emb;
  const int sz = theta.size();
  Rng rng(5);
  std::vector<double> curvature(sz);
  for (auto& a : curvature) a = 0.5 + rng.uniform();

  // Reference: plain Adam on the quadratic 0.5 * sum a_i theta_i^2 whose
  // gradient is a_i * theta_i, stepped analytically.
  std::vector<double> ref = copy_data(theta);
  std::vector<double> m(sz, 0.0), v(sz, 0.0);
  const double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;

  AdamW opt(model, lr, /*weight_decay=*/0.0);
  const Tensor a_const = Tensor::from(theta.rows(), theta.cols(), curvature);
  for (int step = 1; step <= 20; ++step) {
    const Tensor loss = scale(sum_all(mul(a_const, mul(theta, theta))), 0.5);
    loss.backward();
    opt.step(1.0);
    for (int i = 0; i < sz; ++i) {
      const double g = curvature[i] * ref[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mhat = m[i] / (1 - std::pow(b1, step));
      const double vhat = v[i] / (1 - std::pow(b2, step));
      ref[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    for (int i = 0; i < sz; ++i) {
      REQUIRE(theta.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("adamw: lr = 0 leaves parameters unchanged") {
  const int vocab = 24, nodes = 6;
  CodeModel model(tiny_config(vocab, nodes), 7);
  Rng rng(9);
  ModelSnippet snip = make_test_snippet(rng, 5, vocab, nodes, 8);
  std::vector<std::vector<double>> before;
  model.for_each_param(
      [&](const std::string&, Tensor& t) { before.push_back(t.data()); });
  TrainConfig tc;
  tc.lr = 0.0;
  const Vocabulary v = make_test_vocab(vocab);
  Trainer trainer(model, tc, {snip}, {}, v);
  trainer.accumulate(snip);
  trainer.apply_update();
  size_t i = 0;
  model.for_each_param([&](const std::string&, Tensor& t) {
    CHECK(t.data() == before[i]);
    ++i;
  });
}

TEST_CASE("gradient accumulation: two halves equal the combined batch") {
  const int vocab = 24, nodes = 6;
  Rng rng(11);
  std::vector<ModelSnippet> snips;
  for (int i = 0; i < 4; ++i) {
    snips.push_back(make_test_snippet(rng, 4 + i, vocab, nodes, 8));
  }
  const Vocabulary v = make_test_vocab(vocab);

  // Route A: one combined batch of four.
  CodeModel ma(tiny_config(vocab, nodes), 13);
  TrainConfig tc;
  tc.lr = 1e-3;
  Trainer ta(ma, tc, snips, {}, v);
  for (const auto& s : snips) ta.accumulate(s);
  ta.apply_update();

  // Route B: two accumulated half-batches before the single update.
  CodeModel mb(tiny_config(vocab, nodes), 13);
  Trainer tb(mb, tc, snips, {}, v);
  tb.accumulate(snips[0]);
  tb.accumulate(snips[1]);
  tb.accumulate(snips[2]);
  tb.accumulate(snips[3]);
  tb.apply_update();

  std::vector<std::vector<double>> pa, pb;
  ma.for_each_param([&](const std::string&, Tensor& t) { pa.push_back(t.data()); });
  mb.for_each_param([&](const std::string&, Tensor& t) { pb.push_back(t.data()); });
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].size() == pb[i].size());
    for (size_t j = 0; j < pa[i].size(); ++j) {
      REQUIRE(pa[i][j] == doctest::Approx(pb[i][j]).epsilon(1e-6));
    }
  }

  // Gradient linearity: grads of the four snippets equal the sum of the
  // grads of the two halves (same parameters, fresh accumulator).
  CodeModel mc(tiny_config(vocab, nodes), 13);
  Trainer tcr(mc, tc, snips, {}, v);
  tcr.accumulate(snips[0]);
  tcr.accumulate(snips[1]);
  std::vector<double> g1 = mc.params().sub_emb.grad();
  mc.for_each_param([](const std::string&, Tensor& t) { t.zero_grad(); });
  tcr.accumulate(snips[2]);
  tcr.accumulate(snips[3]);
  std::vector<double> g2 = mc.params().sub_emb.grad();
  mc.for_each_param([](const std::string&, Tensor& t) { t.zero_grad(); });
  for (const auto& s : snips) tcr.accumulate(s);
  const std::vector<double>& gall = mc.params().sub_emb.grad();
  for (size_t i = 0; i < gall.size(); ++i) {
    CHECK(gall[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-9));
  }
}

TEST_CASE("fixed seed: bitwise-identical loss sequence across runs") {
  const int vocab = 24, nodes = 6;
  Rng rng(17);
  std::vector<ModelSnippet> snips;
  for (int i = 0; i < 3; ++i) {
    snips.push_back(make_test_snippet(rng, 5, vocab, nodes, 8));
  }
  const Vocabulary v = make_test_vocab(vocab);
  ModelConfig cfg = tiny_config(vocab, nodes);
  cfg.dropout = 0.2;  // exercises the training rng
  auto run_losses = [&] {
    CodeModel model(cfg, 19);
    TrainConfig tc;
    tc.lr = 1e-3;
    Trainer t(model, tc, snips, {}, v);
    std::vector<double> losses;
    for (int step = 0; step < 3; ++step) {
      for (const auto& s : snips) losses.push_back(t.accumulate(s));
      t.apply_update();
    }
    return losses;
  };
  const auto l1 = run_losses();
  const auto l2 = run_losses();
  CHECK(l1 == l2);  // exact equality
}

TEST_CASE("non-finite loss aborts with a numeric error") {
  const int vocab = 24, nodes = 6;
  CodeModel model(tiny_config(vocab, nodes), 23);
  Rng rng(29);
  ModelSnippet snip = make_test_snippet(rng, 4, vocab, nodes, 8);
  const Vocabulary v = make_test_vocab(vocab);
  TrainConfig tc;
  Trainer trainer(model, tc, {snip}, {}, v);
  model.params().w_out.data()[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(trainer.accumulate(snip), NumericError);
}

TEST_CASE("fine-tune phase restricts training to one language") {
  const int vocab = 24, nodes = 6;
  ModelConfig cfg = tiny_config(vocab, nodes);
  cfg.n_languages = 2;
  CodeModel model(cfg, 43);
  Rng rng(47);
  ModelSnippet a = make_test_snippet(rng, 4, vocab, nodes, 8);
  a.language_id = 0;
  ModelSnippet b = make_test_snippet(rng, 5, vocab, nodes, 8);
  b.language_id = 1;
  const Vocabulary v = make_test_vocab(vocab);
  const std::vector<double> before = model.params().lang_emb.data();
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.finetune_language = 1;
  tc.max_steps = 1;
  tc.batch = 1;
  tc.grad_accum = 2;
  tc.eval_every = 0;
  Trainer trainer(model, tc, {a, b, b}, {}, v);
  trainer.run(nullptr);
  // Only language-1 snippets flowed, so the language-0 embedding row moved
  // by pure weight decay while row 1 received a real gradient step.
  const Tensor& lang = model.params().lang_emb;
  const int d = lang.cols();
  bool row1_moved_beyond_decay = false;
  for (int j = 0; j < d; ++j) {
    const double decay_only = before[j] * (1.0 - tc.lr * tc.weight_decay);
    CHECK(lang.data()[j] == doctest::Approx(decay_only).epsilon(1e-12));
    const double decay_only_1 = before[d + j] * (1.0 - tc.lr * tc.weight_decay);
    if (std::abs(lang.data()[d + j] - decay_only_1) > 1e-9) {
      row1_moved_beyond_decay = true;
    }
  }
  CHECK(row1_moved_beyond_decay);
  // A language-0-only filter over a language-1-only set must fail fast.
  TrainConfig tc0 = tc;
  tc0.finetune_language = 0;
  CHECK_THROWS_AS(Trainer(model, tc0, {b}, {}, v), DataError);
}

TEST_CASE("language embeddings: both rows receive gradient in a 2-language run") {
  const int vocab = 24, nodes = 6;
  ModelConfig cfg = tiny_config(vocab, nodes);
  cfg.n_languages = 2;
  CodeModel model(cfg, 31);
  Rng rng(37);
  ModelSnippet a = make_test_snippet(rng, 4, vocab, nodes, 8);
  a.language_id = 0;
  ModelSnippet b = make_test_snippet(rng, 5, vocab, nodes, 8);
  b.language_id = 1;
  const Vocabulary v = make_test_vocab(vocab);
  TrainConfig tc;
  Trainer trainer(model, tc, {a, b}, {}, v);
  trainer.accumulate(a);
  trainer.accumulate(b);
  const Tensor& lang = model.params().lang_emb;
  double row0 = 0.0, row1 = 0.0;
  for (int j = 0; j < lang.cols(); ++j) {
    row0 += std::abs(lang.grad()[j]);
    row1 += std::abs(lang.grad()[lang.cols() + j]);
  }
  CHECK(row0 > 0.0);
  CHECK(row1 > 0.0);
}

// ---------------------------------------------------------------------------
// Metrics

TEST_CASE("micro_f1: hand-computed partial match") {
  const ScoreReport rep = micro_f1({{"get", "data"}},
                                   {{"get", "training", "data"}});
  CHECK(rep.precision == doctest::Approx(1.0));
  CHECK(rep.recall == doctest::Approx(2.0 / 3.0));
  CHECK(rep.f1 == doctest::Approx(0.8));
  CHECK(rep.tp == 2);
  CHECK(rep.fp == 0);
  CHECK(rep.fn == 1);
}

TEST_CASE("micro_f1: exact match and disjoint sets") {
  CHECK(micro_f1({{"a", "b"}}, {{"a", "b"}}).f1 == doctest::Approx(1.0));
  CHECK(micro_f1({{"a"}}, {{"b"}}).f1 == doctest::Approx(0.0));
}

TEST_CASE("sample_f1 vs micro_f1 on mixed snippets") {
  // Snippet 1: perfect (len 1); snippet 2: disjoint (len 3).
  const std::vector<std::vector<std::string>> pred = {{"x"}, {"a", "b", "c"}};
  const std::vector<std::vector<std::string>> ref = {{"x"}, {"d", "e", "f"}};
  const ScoreReport rep = sample_f1(pred, ref);
  CHECK(rep.sample_f1 == doctest::Approx(0.5));
  // Micro pools counts: TP=1, FP=3, FN=3.
  CHECK(rep.f1 == doctest::Approx(2.0 * 0.25 * 0.25 / 0.5));
}

TEST_CASE("sample_f1 equals micro_f1 on a single snippet") {
  const ScoreReport rep = micro_f1({{"get", "x"}}, {{"get", "y"}});
  CHECK(rep.f1 == doctest::Approx(rep.sample_f1));
}

TEST_CASE("empty prediction scores zero against a nonempty reference") {
  const ScoreReport rep = micro_f1({{}}, {{"x"}});
  CHECK(rep.f1 == 0.0);
  CHECK(rep.sample_f1 == 0.0);
}

TEST_CASE("multiset vs set matching for repeated subtokens") {
  const ScoreReport multi = micro_f1({{"test", "test"}}, {{"test"}}, true);
  CHECK(multi.tp == 1);
  CHECK(multi.fp == 1);
  const ScoreReport as_set = micro_f1({{"test", "test"}}, {{"test"}}, false);
  CHECK(as_set.tp == 1);
  CHECK(as_set.fp == 0);
}

TEST_CASE("scores are invariant to snippet order") {
  const std::vector<std::vector<std::string>> pred = {{"a"}, {"b", "c"}, {"d"}};
  const std::vector<std::vector<std::string>> ref = {{"a", "x"}, {"b"}, {"q"}};
  const ScoreReport fwd = micro_f1(pred, ref);
  const std::vector<std::vector<std::string>> pred_r(pred.rbegin(), pred.rend());
  const std::vector<std::vector<std::string>> ref_r(ref.rbegin(), ref.rend());
  const ScoreReport rev = micro_f1(pred_r, ref_r);
  CHECK(fwd.f1 == rev.f1);
  CHECK(fwd.sample_f1 == rev.sample_f1);
}

TEST_CASE("length mismatch raises") {
  CHECK_THROWS_AS(micro_f1({{"a"}}, {}), DataError);
}

TEST_CASE("micro equals sample when per-snippet confusions are identical") {
  // Same label length and the same TP/FP/FN on every snippet.
  const std::vector<std::vector<std::string>> pred = {
      {"a", "b"}, {"c", "d"}, {"e", "f"}};
  const std::vector<std::vector<std::string>> ref = {
      {"a", "x"}, {"c", "y"}, {"e", "z"}};
  const ScoreReport rep = micro_f1(pred, ref);
  CHECK(rep.f1 == rep.sample_f1);
  CHECK(rep.precision == rep.sample_precision);
  CHECK(rep.recall == rep.sample_recall);
}

TEST_CASE("parameters stay finite through optimizer steps") {
  const int vocab = 24, nodes = 6;
  CodeModel model(tiny_config(vocab, nodes), 53);
  Rng rng(59);
  std::vector<ModelSnippet> snips;
  for (int i = 0; i < 3; ++i) {
    snips.push_back(make_test_snippet(rng, 5, vocab, nodes, 8));
  }
  const Vocabulary v = make_test_vocab(vocab);
  TrainConfig tc;
  tc.lr = 1e-2;
  Trainer trainer(model, tc, snips, {}, v);
  for (int step = 0; step < 5; ++step) {
    for (const auto& s : snips) trainer.accumulate(s);
    trainer.apply_update();
    model.for_each_param([](const std::string&, Tensor& t) {
      for (double x : t.data()) REQUIRE(std::isfinite(x));
    });
  }
}

TEST_CASE("label_overlap: hand counts") {
  // Label [get, url], body contains url only -> 0.5.
  CHECK(label_overlap({{"get", "url"}}, {{"x", "url", "y"}}) ==
        doctest::Approx(0.5));
  CHECK(label_overlap({{"a", "b"}}, {{"a", "b", "c"}}) == doctest::Approx(1.0));
  CHECK(label_overlap({{}}, {{"a"}}) == 0.0);
}
