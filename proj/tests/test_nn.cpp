#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>

#include "sct/error.hpp"
#include "sct/model.hpp"
#include "sct/relations.hpp"
#include "sct/tensor.hpp"
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

double forward_loss_value(CodeModel& model, const ModelSnippet& snip) {
  NoGradGuard ng;
  Rng rng(0);
  return model.forward_loss(snip, 0.1, /*train=*/false, rng)
      .loss.scalar_value();
}

}  // namespace

TEST_CASE("encode_distance: zero, unit, and sign symmetry") {
  const auto z = encode_distance(0.0, 4);
  CHECK(z == std::vector<double>{0.0, 1.0, 0.0, 1.0});
  const auto one = encode_distance(1.0, 2);
  CHECK(one[0] == doctest::Approx(0.84147).epsilon(1e-5));
  CHECK(one[1] == doctest::Approx(0.54030).epsilon(1e-5));
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const double r = (rng.uniform() - 0.5) * 50.0;
    const auto pos = encode_distance(r, 12);
    const auto neg = encode_distance(-r, 12);
    for (int i = 0; i < 12; i += 2) {
      CHECK(neg[i] == doctest::Approx(-pos[i]).epsilon(1e-12));      // sin odd
      CHECK(neg[i + 1] == doctest::Approx(pos[i + 1]).epsilon(1e-12));  // cos even
    }
  }
}

TEST_CASE("decomposition identity holds to float64 precision") {
  Rng rng(2);
  const int n = 5, d = 8, dk = 4;
  std::vector<double> e(n * d), phi(n * d), wq(d * dk), wk(d * dk);
  for (auto& x : e) x = rng.normal();
  for (auto& x : phi) x = rng.normal();
  for (auto& x : wq) x = rng.normal();
  for (auto& x : wk) x = rng.normal();
  CHECK(verify_decomposition(e, phi, n, d, wq, wk, dk) <= 1e-6);

  // E = 0: only the position-position term survives.
  std::vector<double> e0(n * d, 0.0);
  CHECK(verify_decomposition(e0, phi, n, d, wq, wk, dk) <= 1e-12);
  // phi = 0: only the content-content term survives.
  std::vector<double> p0(n * d, 0.0);
  CHECK(verify_decomposition(e, p0, n, d, wq, wk, dk) <= 1e-12);

  // Term-level check of the factorization itself.
  auto project = [&](const std::vector<double>& x, const std::vector<double>& w,
                     int i, int t) {
    double acc = 0.0;
    for (int a = 0; a < d; ++a) acc += x[i * d + a] * w[a * dk + t];
    return acc;
  };
  auto terms = [&](const std::vector<double>& ee, const std::vector<double>& pp,
                   int i, int j) {
    double ta = 0, tb = 0, tc = 0, td = 0;
    for (int t = 0; t < dk; ++t) {
      const double qi = project(ee, wq, i, t), pi = project(pp, wq, i, t);
      const double kj = project(ee, wk, j, t), pj = project(pp, wk, j, t);
      ta += qi * kj;
      tb += qi * pj;
      tc += pi * kj;
      td += pi * pj;
    }
    return std::array<double, 4>{ta, tb, tc, td};
  };
  const auto t_e0 = terms(e0, phi, 1, 3);
  CHECK(t_e0[0] == 0.0);  // content terms vanish with E = 0
  CHECK(t_e0[1] == 0.0);
  CHECK(t_e0[2] == 0.0);
  CHECK(t_e0[3] != 0.0);  // position-position remains
  const auto t_p0 = terms(e, p0, 1, 3);
  CHECK(t_p0[0] != 0.0);  // content-content remains with phi = 0
  CHECK(t_p0[1] == 0.0);
  CHECK(t_p0[2] == 0.0);
  CHECK(t_p0[3] == 0.0);
}

TEST_CASE("model config validation") {
  ModelConfig c = tiny_config(24, 6);
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(c.validate(), DataError);
}

TEST_CASE("tensor ops: composite gradient check") {
  Rng rng(3);
  Tensor a = Tensor::param_normal(3, 4, 0.5, rng);
  Tensor b = Tensor::param_normal(4, 5, 0.5, rng);
  Tensor gain = Tensor::param(1, 5);
  std::fill(gain.data().begin(), gain.data().end(), 1.0);
  Tensor bias = Tensor::param(1, 5);
  std::vector<uint8_t> idx = {0, 2, 1, 4, 3, 0, 1, 1, 2};
  std::vector<double> w(3, 0.7);

  auto loss_fn = [&] {
    Tensor m = matmul(a, b);                       // [3,5]
    m = layer_norm(gelu(m), gain, bias);
    Tensor sm = softmax_rows(m);                   // [3,5]
    Tensor g = gather_cols(sm, idx, 3);            // [3,3]
    Tensor row = slice_rows(mul_bscalar(sum_all(g), g), 1, 2);
    Tensor lg = log_t(add_scalar(sigmoid(row), 0.5));
    return weighted_sum(lg, w);
  };
  Tensor loss = loss_fn();
  loss.backward();
  std::vector<std::pair<Tensor*, const char*>> params = {
      {&a, "a"}, {&b, "b"}, {&gain, "gain"}, {&bias, "bias"}};
  const double h = 1e-6;
  for (auto& [t, name] : params) {
    for (int i = 0; i < t->size(); i += 3) {
      const int r = i / t->cols(), c = i % t->cols();
      const double analytic = t->grad()[i];
      t->add_to_data(r, c, h);
      double lp;
      {
        NoGradGuard ng;
        lp = loss_fn().scalar_value();
      }
      t->add_to_data(r, c, -2 * h);
      double lm;
      {
        NoGradGuard ng;
        lm = loss_fn().scalar_value();
      }
      t->add_to_data(r, c, h);
      const double numeric = (lp - lm) / (2 * h);
      const double denom = std::max(1e-6, std::abs(analytic) + std::abs(numeric));
      CHECK_MESSAGE(std::abs(analytic - numeric) / denom < 1e-5, name,
                    " index ", i, ": ", analytic, " vs ", numeric);
    }
  }
}

TEST_CASE("relative scores: zero embeddings leave only the bias pathway") {
  const int vocab = 24, nodes = 6;
  CodeModel model(tiny_config(vocab, nodes), 7);
  auto& lp = model.params().enc[0];
  // u, v start at zero; give them values so the bias pathway is visible.
  Rng rng(11);
  for (auto& x : lp.u.data()) x = 0.3 * rng.normal();
  for (auto& x : lp.v.data()) x = 0.3 * rng.normal();
  ModelSnippet snip = make_test_snippet(rng, 5, vocab, nodes, 8);
  const auto phis = bin_encodings(snip.binned, 16, 10000.0);
  const Tensor x = Tensor::zeros(5, 16);
  const std::vector<int> active = {0, 1, 2, 3, 4};
  const auto logits =
      relative_attention_logits(lp, x, snip.binned, phis, model.config(), active);
  const int dk = model.config().d_k();
  for (int h = 0; h < model.config().n_heads; ++h) {
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        // Expected: sum_s v_h . (phi_s(bin) wr_s)_h / sqrt(dk); all content
        // terms vanish with E = 0.
        double want = 0.0;
        for (int s : active) {
          const auto& wr = lp.wr[s].data();
          const int b = snip.binned.rel[s].bin_index[i * 5 + j];
          for (int t = 0; t < dk; ++t) {
            double rphi = 0.0;
            for (int dd = 0; dd < 16; ++dd) {
              rphi += phis[s].value_at(b, dd) * wr[dd * 16 + h * dk + t];
            }
            want += lp.v.value_at(h, t) * rphi;
          }
        }
        want /= std::sqrt(double(dk));
        CHECK(logits[h].value_at(i, j) == doctest::Approx(want).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("relative scores: no relations and zero biases give plain QK^T") {
  const int vocab = 24, nodes = 6;
  CodeModel model(tiny_config(vocab, nodes), 8);
  auto& lp = model.params().enc[0];
  std::fill(lp.u.data().begin(), lp.u.data().end(), 0.0);
  std::fill(lp.v.data().begin(), lp.v.data().end(), 0.0);
  Rng rng(13);
  ModelSnippet snip = make_test_snippet(rng, 4, vocab, nodes, 8);
  const auto phis = bin_encodings(snip.binned, 16, 10000.0);
  std::vector<double> xd(4 * 16);
  for (auto& v : xd) v = rng.normal();
  const Tensor x = Tensor::from(4, 16, xd);
  const auto logits = relative_attention_logits(lp, x, snip.binned, phis,
                                                model.config(), {});
  const int dk = model.config().d_k();
  const auto& wq = lp.wq.data();
  const auto& wk = lp.wk.data();
  for (int h = 0; h < 2; ++h) {
    for (int i = 0; i < 4; ++i) {
      double rowsum = 0.0;
      for (int j = 0; j < 4; ++j) {
        double want = 0.0;
        for (int t = 0; t < dk; ++t) {
          double qi = 0.0, kj = 0.0;
          for (int dd = 0; dd < 16; ++dd) {
            qi += xd[i * 16 + dd] * wq[dd * 16 + h * dk + t];
            kj += xd[j * 16 + dd] * wk[dd * 16 + h * dk + t];
          }
          want += qi * kj;
        }
        want /= std::sqrt(double(dk));
        CHECK(logits[h].value_at(i, j) == doctest::Approx(want).epsilon(1e-9));
      }
      const Tensor sm = softmax_rows(logits[h]);
      for (int j = 0; j < 4; ++j) rowsum += sm.value_at(i, j);
      CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("relative scores: binned equals exact pairwise when bins are lossless") {
  // Real relations from a small tree, binned with k large enough that every
  // distinct value keeps its own bin.
  const int vocab = 24, nodes_v = 8;
  ModelConfig cfg = tiny_config(vocab, nodes_v);
  cfg.k_bins = 32;
  CodeModel model(cfg, 17);
  auto& lp = model.params().enc[0];
  Rng rng(19);
  for (auto& x : lp.u.data()) x = 0.2 * rng.normal();
  for (auto& x : lp.v.data()) x = 0.2 * rng.normal();

  const AstTree tree = random_tree_shape(rng, 7);
  const std::vector<int> assignment = {0, 2, 4, 6, 1};
  const int n = static_cast<int>(assignment.size());
  const RelationSet rs = token_relations(tree, assignment);
  const BinnedRelations binned = bin_relations(rs, 32, 1.3);
  const auto phis = bin_encodings(binned, 16, 10000.0);

  std::vector<double> xd(size_t(n) * 16);
  for (auto& v : xd) v = rng.normal();
  const Tensor x = Tensor::from(n, 16, xd);
  const std::vector<int> active = {0, 1, 2, 3, 4};
  const auto logits =
      relative_attention_logits(lp, x, binned, phis, model.config(), active);

  // Exact pairwise reference: encode the raw distance of every pair.
  const int dk = model.config().d_k();
  const auto& wq = lp.wq.data();
  const auto& wk = lp.wk.data();
  for (int h = 0; h < 2; ++h) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double want = 0.0;
        for (int t = 0; t < dk; ++t) {
          double qi = 0.0, kj = 0.0;
          for (int dd = 0; dd < 16; ++dd) {
            qi += xd[i * 16 + dd] * wq[dd * 16 + h * dk + t];
            kj += xd[j * 16 + dd] * wk[dd * 16 + h * dk + t];
          }
          want += qi * kj + lp.u.value_at(h, t) * kj;
        }
        for (int s : active) {
          const auto enc = encode_distance(rs.at(s, i, j), 16, 10000.0);
          const auto& wr = lp.wr[s].data();
          for (int t = 0; t < dk; ++t) {
            double qi = 0.0, rphi = 0.0;
            for (int dd = 0; dd < 16; ++dd) {
              qi += xd[i * 16 + dd] * wq[dd * 16 + h * dk + t];
              rphi += enc[dd] * wr[dd * 16 + h * dk + t];
            }
            want += (qi + lp.v.value_at(h, t)) * rphi;
          }
        }
        want /= std::sqrt(double(dk));
        CHECK(std::abs(logits[h].value_at(i, j) - want) <= 1e-6);
      }
    }
  }
}

TEST_CASE("encoder: eval determinism, n=1, permutation equivariance") {
  const int vocab = 24, nodes = 6;
  CodeModel model(tiny_config(vocab, nodes), 23);
  Rng rng(29);

  SUBCASE("deterministic in eval mode") {
    ModelSnippet snip = make_test_snippet(rng, 5, vocab, nodes, 8);
    const auto e1 = model.name_embedding(snip);
    const auto e2 = model.name_embedding(snip);
    CHECK(e1 == e2);
  }

  SUBCASE("single position") {
    ModelSnippet snip = make_test_snippet(rng, 1, vocab, nodes, 8);
    NoGradGuard ng;
    Rng r2(0);
    const Tensor x = model.assemble_input(snip, false, r2);
    const Tensor out = model.encoder_forward(x, snip.binned, false, r2);
    CHECK(out.rows() == 1);
    CHECK(out.cols() == 16);
    for (double v : out.data()) CHECK(std::isfinite(v));
  }

  SUBCASE("permutation equivariance") {
    const int n = 6;
    ModelSnippet snip = make_test_snippet(rng, n, vocab, nodes, 8);
    NoGradGuard ng;
    Rng r2(0);
    const Tensor x = model.assemble_input(snip, false, r2);
    const Tensor out = model.encoder_forward(x, snip.binned, false, r2);
    // Reversal permutation.
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = n - 1 - i;
    ModelSnippet permuted = snip;
    for (int i = 0; i < n; ++i) {
      permuted.subtoken_ids[i] = snip.subtoken_ids[perm[i]];
      permuted.kind_ids[i] = snip.kind_ids[perm[i]];
      permuted.node_type_ids[i] = snip.node_type_ids[perm[i]];
      permuted.is_leaf[i] = snip.is_leaf[perm[i]];
    }
    for (int r = 0; r < kNumRelations; ++r) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          permuted.binned.rel[r].bin_index[i * n + j] =
              snip.binned.rel[r].bin_index[perm[i] * n + perm[j]];
        }
      }
    }
    const Tensor xp = model.assemble_input(permuted, false, r2);
    const Tensor outp = model.encoder_forward(xp, permuted.binned, false, r2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 16; ++j) {
        CHECK(outp.value_at(i, j) ==
              doctest::Approx(out.value_at(perm[i], j)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("ablations: structure-only ignores sequence, context-only ignores AST") {
  const int vocab = 24, nodes = 6;
  Rng rng(31);
  ModelSnippet snip = make_test_snippet(rng, 5, vocab, nodes, 8);

  SUBCASE("structure-only") {
    ModelConfig cfg = tiny_config(vocab, nodes);
    cfg.use_context = false;
    CodeModel model(cfg, 37);
    const auto base = model.name_embedding(snip);
    ModelSnippet tweaked = snip;
    for (auto& b : tweaked.binned.rel[kRelSeq].bin_index) b = (b + 3) % 8;
    for (auto& v : tweaked.binned.rel[kRelSeq].bin_value) v += 17.0;
    // Token kinds are also outside the structure-only model's view.
    for (auto& kid : tweaked.kind_ids) kid = (kid + 1) % 10;
    const auto same = model.name_embedding(tweaked);
    CHECK(base == same);  // exact equality
  }

  SUBCASE("context-only") {
    ModelConfig cfg = tiny_config(vocab, nodes);
    cfg.use_structure = false;
    CodeModel model(cfg, 41);
    const auto base = model.name_embedding(snip);
    ModelSnippet tweaked = snip;
    for (int r : {kRelShortestPath, kRelAncestor, kRelSibling, kRelPpr}) {
      for (auto& b : tweaked.binned.rel[r].bin_index) b = (b + 5) % 8;
      for (auto& v : tweaked.binned.rel[r].bin_value) v -= 4.5;
    }
    for (auto& nt : tweaked.node_type_ids) nt = (nt + 1) % nodes;
    const auto same = model.name_embedding(tweaked);
    CHECK(base == same);
  }

  SUBCASE("both flags off is rejected") {
    ModelConfig cfg = tiny_config(vocab, nodes);
    cfg.use_context = false;
    cfg.use_structure = false;
    CHECK_THROWS(cfg.validate());
  }
}

TEST_CASE("pointer_mix: gate extremes and convexity") {
  const Tensor vocab_dist = Tensor::from(1, 3, {0.5, 0.3, 0.2});
  // Slots: 4 slots, classes {0, 3(url), 3(url), -1}.
  const std::vector<int> slot_class = {0, 3, 3, -1};

  SUBCASE("p_gen = 1 reproduces the vocabulary distribution") {
    const Tensor attn = Tensor::from(1, 4, {0.25, 0.25, 0.5, 0.0});
    const Tensor mixed = pointer_mix_slots(vocab_dist, attn, slot_class, 4,
                                           Tensor::scalar(1.0));
    CHECK(mixed.cols() == 4);
    CHECK(mixed.value_at(0, 0) == doctest::Approx(0.5));
    CHECK(mixed.value_at(0, 1) == doctest::Approx(0.3));
    CHECK(mixed.value_at(0, 2) == doctest::Approx(0.2));
    CHECK(mixed.value_at(0, 3) == doctest::Approx(0.0));
  }

  SUBCASE("p_gen = 0 with all copy mass on url occurrences") {
    const Tensor attn = Tensor::from(1, 4, {0.0, 0.4, 0.6, 0.0});
    const Tensor mixed = pointer_mix_slots(vocab_dist, attn, slot_class, 4,
                                           Tensor::scalar(0.0));
    CHECK(mixed.value_at(0, 3) == doctest::Approx(1.0));
    CHECK(mixed.value_at(0, 0) == doctest::Approx(0.0));
  }

  SUBCASE("mixture sums to 1 for random inputs") {
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> vd(3), at(4);
      double zv = 0.0, za = 0.0;
      for (auto& v : vd) {
        v = rng.uniform() + 1e-3;
        zv += v;
      }
      for (size_t i = 0; i < at.size(); ++i) {
        at[i] = slot_class[i] >= 0 ? rng.uniform() + 1e-3 : 0.0;
        za += at[i];
      }
      for (auto& v : vd) v /= zv;
      for (auto& v : at) v /= za;
      const Tensor mixed =
          pointer_mix_slots(Tensor::from(1, 3, vd), Tensor::from(1, 4, at),
                            slot_class, 4, Tensor::scalar(rng.uniform()));
      double sum = 0.0;
      for (double v : mixed.data()) sum += v;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("label targets: padding with EON then PAD") {
  int scored = 0;
  const auto t1 = label_targets({10, 11}, 6, 0, 7, &scored);
  CHECK(t1 == std::vector<int>{10, 11, 7, 0, 0, 0});
  CHECK(scored == 3);
  const auto t2 = label_targets({10, 11, 12, 13, 14, 15}, 6, 0, 7, &scored);
  CHECK(t2 == std::vector<int>{10, 11, 12, 13, 14, 15});
  CHECK(scored == 6);
  const auto t3 = label_targets({}, 6, 0, 7, &scored);
  CHECK(t3 == std::vector<int>{7, 0, 0, 0, 0, 0});
  CHECK(scored == 1);
}

TEST_CASE("decoder: six step distributions, each summing to 1") {
  const int vocab = 24, nodes = 6;
  CodeModel model(tiny_config(vocab, nodes), 47);
  Rng rng(53);
  ModelSnippet snip = make_test_snippet(rng, 5, vocab, nodes, 8);
  Rng fr(0);
  const auto fwd = model.forward_loss(snip, 0.1, /*train=*/false, fr);
  CHECK(fwd.step_probs.size() == 6);
  for (const auto& p : fwd.step_probs) {
    CHECK(p.rows() == 1);
    double sum = 0.0;
    for (double v : p.data()) {
      sum += v;
      CHECK(v >= 0.0);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(std::isfinite(fwd.loss.scalar_value()));
}

TEST_CASE("greedy decode is deterministic") {
  const int vocab = 24, nodes = 6;
  CodeModel model(tiny_config(vocab, nodes), 59);
  Rng rng(61);
  ModelSnippet snip = make_test_snippet(rng, 5, vocab, nodes, 8);
  const Vocabulary v = make_test_vocab(vocab);
  const auto p1 = model.predict_greedy(snip, v);
  const auto p2 = model.predict_greedy(snip, v);
  CHECK(p1 == p2);
  for (const auto& s : p1) {
    CHECK(s != "[EON]");
    CHECK(s != "[PAD]");
  }
}

TEST_CASE("full model gradient check on the tiny config") {
  const int vocab = 24, node_vocab = 6;
  ModelConfig cfg = tiny_config(vocab, node_vocab);
  CodeModel model(cfg, 67);
  Rng rng(71);
  // Give the zero-initialized bias vectors and gate real values so their
  // gradients are exercised away from the origin.
  for (auto& lp : model.params().enc) {
    for (auto& x : lp.u.data()) x = 0.2 * rng.normal();
    for (auto& x : lp.v.data()) x = 0.2 * rng.normal();
  }
  for (auto& x : model.params().gate_w.data()) x = 0.2 * rng.normal();
  ModelSnippet snip = make_test_snippet(rng, 6, vocab, node_vocab, 8);

  Rng fr(0);
  auto fwd = model.forward_loss(snip, 0.1, /*train=*/false, fr);
  fwd.loss.backward();

  const double h = 1e-5;
  int checked = 0;
  model.for_each_param([&](const std::string& name, Tensor& t) {
    const int stride = std::max(1, t.size() / 5);  // ~5 samples per tensor
    for (int i = 0; i < t.size(); i += stride) {
      const int r = i / t.cols(), c = i % t.cols();
      const double analytic = t.grad()[i];
      t.add_to_data(r, c, h);
      const double lp = forward_loss_value(model, snip);
      t.add_to_data(r, c, -2 * h);
      const double lm = forward_loss_value(model, snip);
      t.add_to_data(r, c, h);
      const double numeric = (lp - lm) / (2 * h);
      const double denom =
          std::max(1e-6, std::abs(analytic) + std::abs(numeric));
      const double rel = std::abs(analytic - numeric) / denom;
      CHECK_MESSAGE(rel <= 1e-4, name, "[", i, "]: analytic ", analytic,
                    " vs numeric ", numeric);
      ++checked;
    }
  });
  CHECK(checked > 100);
}
