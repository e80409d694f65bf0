#include "sct/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "sct/error.hpp"

namespace sct {

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (d <= 0 || d_ff <= 0 || n_layers <= 0 || n_heads <= 0) {
    throw DataError("model config: dimensions must be positive");
  }
  if (d % n_heads != 0) {
    throw DataError("model config: d must be divisible by n_heads");
  }
  if (d % 2 != 0) {
    throw DataError("model config: d must be even for sinusoidal encodings");
  }
  if (!use_structure && !use_context) {
    throw DataError("model config: ablation flags cannot both be false");
  }
  if (activation != "gelu") {
    throw DataError("model config: unsupported activation " + activation);
  }
  if (subtoken_vocab <= 0 || node_type_vocab <= 0) {
    throw DataError("model config: vocabulary sizes not set");
  }
}

std::vector<int> ModelConfig::active_relations() const {
  std::vector<int> active;
  if (use_context) active.push_back(kRelSeq);
  if (use_structure) {
    active.push_back(kRelShortestPath);
    active.push_back(kRelAncestor);
    active.push_back(kRelSibling);
    active.push_back(kRelPpr);
  }
  return active;
}

ModelConfig ModelConfig::desk_preset() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_preset() {
  ModelConfig c;
  c.d = 1024;
  c.d_ff = 2048;
  c.n_layers = 3;
  c.n_heads = 8;
  c.k_bins = 32;
  c.d_sub = 512;
  c.d_kind = 64;
  c.d_node = 128;
  c.dropout = 0.2;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw DataError("unknown model preset: " + name);
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["d"] = std::to_string(d);
  kv["d_ff"] = std::to_string(d_ff);
  kv["n_layers"] = std::to_string(n_layers);
  kv["n_heads"] = std::to_string(n_heads);
  kv["k_bins"] = std::to_string(k_bins);
  kv["d_sub"] = std::to_string(d_sub);
  kv["d_kind"] = std::to_string(d_kind);
  kv["d_node"] = std::to_string(d_node);
  kv["dropout"] = std::to_string(dropout);
  kv["max_out_subtokens"] = std::to_string(max_out_subtokens);
  kv["sinusoid_m"] = std::to_string(sinusoid_m);
  kv["use_pointer"] = use_pointer ? "1" : "0";
  kv["use_structure"] = use_structure ? "1" : "0";
  kv["use_context"] = use_context ? "1" : "0";
  kv["activation"] = activation;
  kv["subtoken_vocab"] = std::to_string(subtoken_vocab);
  kv["n_token_kinds"] = std::to_string(n_token_kinds);
  kv["node_type_vocab"] = std::to_string(node_type_vocab);
  kv["n_languages"] = std::to_string(n_languages);
  return kv;
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto geti = [&](const char* k, int dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stoi(it->second);
  };
  auto getd = [&](const char* k, double dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stod(it->second);
  };
  c.d = geti("d", c.d);
  c.d_ff = geti("d_ff", c.d_ff);
  c.n_layers = geti("n_layers", c.n_layers);
  c.n_heads = geti("n_heads", c.n_heads);
  c.k_bins = geti("k_bins", c.k_bins);
  c.d_sub = geti("d_sub", c.d_sub);
  c.d_kind = geti("d_kind", c.d_kind);
  c.d_node = geti("d_node", c.d_node);
  c.dropout = getd("dropout", c.dropout);
  c.max_out_subtokens = geti("max_out_subtokens", c.max_out_subtokens);
  c.sinusoid_m = getd("sinusoid_m", c.sinusoid_m);
  c.use_pointer = geti("use_pointer", 1) != 0;
  c.use_structure = geti("use_structure", 1) != 0;
  c.use_context = geti("use_context", 1) != 0;
  if (kv.count("activation")) c.activation = kv.at("activation");
  c.subtoken_vocab = geti("subtoken_vocab", 0);
  c.n_token_kinds = geti("n_token_kinds", kNumTokenKinds);
  c.node_type_vocab = geti("node_type_vocab", 0);
  c.n_languages = geti("n_languages", 1);
  return c;
}

// ---------------------------------------------------------------------------
// Distance encoding and the decomposition identity

std::vector<double> encode_distance(double r, int d, double m) {
  if (d % 2 != 0) throw DataError("encode_distance: d must be even");
  std::vector<double> out(d);
  for (int k = 0; k < d / 2; ++k) {
    const double freq = std::pow(m, 2.0 * k / d);
    out[2 * k] = std::sin(r / freq);
    out[2 * k + 1] = std::cos(r / freq);
  }
  return out;
}

double verify_decomposition(const std::vector<double>& e,
                            const std::vector<double>& phi, int n, int d,
                            const std::vector<double>& wq,
                            const std::vector<double>& wk, int d_k) {
  auto project = [&](const std::vector<double>& x, const std::vector<double>& w) {
    std::vector<double> out(size_t(n) * d_k, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int a = 0; a < d; ++a) {
        const double xv = x[size_t(i) * d + a];
        for (int b = 0; b < d_k; ++b) {
          out[size_t(i) * d_k + b] += xv * w[size_t(a) * d_k + b];
        }
      }
    }
    return out;
  };
  const auto q = project(e, wq);
  const auto k = project(e, wk);
  const auto pq = project(phi, wq);
  const auto pk = project(phi, wk);
  double max_dev = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double full = 0.0, a = 0.0, b = 0.0, c = 0.0, dd = 0.0;
      for (int t = 0; t < d_k; ++t) {
        const double qi = q[size_t(i) * d_k + t], pi = pq[size_t(i) * d_k + t];
        const double kj = k[size_t(j) * d_k + t], pj = pk[size_t(j) * d_k + t];
        full += (qi + pi) * (kj + pj);
        a += qi * kj;
        b += qi * pj;
        c += pi * kj;
        dd += pi * pj;
      }
      max_dev = std::max(max_dev, std::abs(full - (a + b + c + dd)));
    }
  }
  return max_dev;
}

// ---------------------------------------------------------------------------
// Extended vocabulary

int ExtVocab::resolve_label(int base_id, const std::string& s,
                            int unk_id) const {
  if (base_id != unk_id) return base_id;
  for (size_t i = 0; i < ext_strings.size(); ++i) {
    if (ext_strings[i] == s) return base_size + static_cast<int>(i);
  }
  return unk_id;
}

const std::string* ExtVocab::ext_string(int class_id) const {
  const int i = class_id - base_size;
  if (i < 0 || i >= static_cast<int>(ext_strings.size())) return nullptr;
  return &ext_strings[i];
}

ExtVocab build_ext_vocab(const ModelSnippet& snip, int base_vocab_size,
                         bool pointer_enabled) {
  ExtVocab ext;
  ext.base_size = base_vocab_size;
  ext.slot_class.assign(size_t(snip.n) * kSubtokenSlots, -1);
  std::unordered_map<int, const std::string*> unk_str;
  for (const auto& [flat, s] : snip.unk_slots) unk_str[flat] = &s;
  std::unordered_map<std::string, int> ext_of;
  for (int i = 0; i < snip.n; ++i) {
    for (int j = 0; j < kSubtokenSlots; ++j) {
      const int flat = i * kSubtokenSlots + j;
      const int id = snip.subtoken_ids[i][j];
      if (id == Vocabulary::kPad) continue;
      if (pointer_enabled && id == Vocabulary::kUnk) {
        auto it = unk_str.find(flat);
        if (it != unk_str.end()) {
          auto [pos, inserted] =
              ext_of.try_emplace(*it->second, ext.size());
          if (inserted) ext.ext_strings.push_back(*it->second);
          ext.slot_class[flat] = pos->second;
          continue;
        }
      }
      ext.slot_class[flat] = id;
    }
  }
  return ext;
}

// ---------------------------------------------------------------------------
// Parameter registry, construction, init

namespace {
enum InitKind { kInitEmbedding, kInitProjection, kInitGainOne, kInitZero };

struct NamedParam {
  std::string name;
  Tensor* t;
  InitKind kind;
};

std::vector<NamedParam> registry(Parameters& p) {
  std::vector<NamedParam> r;
  auto add = [&](const std::string& name, Tensor& t, InitKind k) {
    r.push_back({name, &t, k});
  };
  add("sub_emb", p.sub_emb, kInitEmbedding);
  add("kind_emb", p.kind_emb, kInitEmbedding);
  add("node_emb", p.node_emb, kInitEmbedding);
  add("lang_emb", p.lang_emb, kInitEmbedding);
  add("w_in", p.w_in, kInitProjection);
  add("b_in", p.b_in, kInitZero);
  for (size_t l = 0; l < p.enc.size(); ++l) {
    const std::string pre = "enc" + std::to_string(l) + ".";
    EncoderLayerParams& e = p.enc[l];
    add(pre + "wq", e.wq, kInitProjection);
    add(pre + "wk", e.wk, kInitProjection);
    add(pre + "wv", e.wv, kInitProjection);
    add(pre + "wo", e.wo, kInitProjection);
    add(pre + "u", e.u, kInitZero);
    add(pre + "v", e.v, kInitZero);
    for (int s = 0; s < kNumRelations; ++s) {
      add(pre + "wr" + std::to_string(s), e.wr[s], kInitProjection);
    }
    add(pre + "ln1g", e.ln1g, kInitGainOne);
    add(pre + "ln1b", e.ln1b, kInitZero);
    add(pre + "ln2g", e.ln2g, kInitGainOne);
    add(pre + "ln2b", e.ln2b, kInitZero);
    add(pre + "ff1", e.ff1, kInitProjection);
    add(pre + "ff1b", e.ff1b, kInitZero);
    add(pre + "ff2", e.ff2, kInitProjection);
    add(pre + "ff2b", e.ff2b, kInitZero);
  }
  add("enc_lng", p.enc_lng, kInitGainOne);
  add("enc_lnb", p.enc_lnb, kInitZero);
  add("dec.wq", p.d_wq, kInitProjection);
  add("dec.wk", p.d_wk, kInitProjection);
  add("dec.wv", p.d_wv, kInitProjection);
  add("dec.wo", p.d_wo, kInitProjection);
  add("dec.ln1g", p.d_ln1g, kInitGainOne);
  add("dec.ln1b", p.d_ln1b, kInitZero);
  add("dec.cq", p.c_wq, kInitProjection);
  add("dec.ck", p.c_wk, kInitProjection);
  add("dec.cv", p.c_wv, kInitProjection);
  add("dec.co", p.c_wo, kInitProjection);
  add("dec.ln2g", p.d_ln2g, kInitGainOne);
  add("dec.ln2b", p.d_ln2b, kInitZero);
  add("dec.ff1", p.d_ff1, kInitProjection);
  add("dec.ff1b", p.d_ff1b, kInitZero);
  add("dec.ff2", p.d_ff2, kInitProjection);
  add("dec.ff2b", p.d_ff2b, kInitZero);
  add("dec.ln3g", p.d_ln3g, kInitGainOne);
  add("dec.ln3b", p.d_ln3b, kInitZero);
  add("dec.lnfg", p.d_lnfg, kInitGainOne);
  add("dec.lnfb", p.d_lnfb, kInitZero);
  add("dec.emb_proj", p.d_emb_proj, kInitProjection);
  add("w_out", p.w_out, kInitProjection);
  add("b_out", p.b_out, kInitZero);
  add("ptr.q", p.p_q, kInitProjection);
  add("ptr.k", p.p_k, kInitProjection);
  add("ptr.e", p.p_e, kInitProjection);
  add("ptr.gate_w", p.gate_w, kInitZero);
  add("ptr.gate_b", p.gate_b, kInitZero);
  return r;
}

Parameters make_parameters(const ModelConfig& c) {
  Parameters p;
  const int d = c.d;
  p.sub_emb = Tensor::param(c.subtoken_vocab, c.d_sub);
  p.kind_emb = Tensor::param(c.n_token_kinds, c.d_kind);
  p.node_emb = Tensor::param(c.node_type_vocab, c.d_node);
  p.lang_emb = Tensor::param(std::max(1, c.n_languages), d);
  const int concat = kSubtokenSlots * c.d_sub + c.d_kind + c.d_node;
  p.w_in = Tensor::param(concat, d);
  p.b_in = Tensor::param(1, d);
  p.enc.resize(c.n_layers);
  for (auto& e : p.enc) {
    e.wq = Tensor::param(d, d);
    e.wk = Tensor::param(d, d);
    e.wv = Tensor::param(d, d);
    e.wo = Tensor::param(d, d);
    e.u = Tensor::param(c.n_heads, c.d_k());
    e.v = Tensor::param(c.n_heads, c.d_k());
    for (auto& w : e.wr) w = Tensor::param(d, d);
    e.ln1g = Tensor::param(1, d);
    e.ln1b = Tensor::param(1, d);
    e.ln2g = Tensor::param(1, d);
    e.ln2b = Tensor::param(1, d);
    e.ff1 = Tensor::param(d, c.d_ff);
    e.ff1b = Tensor::param(1, c.d_ff);
    e.ff2 = Tensor::param(c.d_ff, d);
    e.ff2b = Tensor::param(1, d);
  }
  p.enc_lng = Tensor::param(1, d);
  p.enc_lnb = Tensor::param(1, d);
  p.d_wq = Tensor::param(d, d);
  p.d_wk = Tensor::param(d, d);
  p.d_wv = Tensor::param(d, d);
  p.d_wo = Tensor::param(d, d);
  p.d_ln1g = Tensor::param(1, d);
  p.d_ln1b = Tensor::param(1, d);
  p.c_wq = Tensor::param(d, d);
  p.c_wk = Tensor::param(d, d);
  p.c_wv = Tensor::param(d, d);
  p.c_wo = Tensor::param(d, d);
  p.d_ln2g = Tensor::param(1, d);
  p.d_ln2b = Tensor::param(1, d);
  p.d_ff1 = Tensor::param(d, c.d_ff);
  p.d_ff1b = Tensor::param(1, c.d_ff);
  p.d_ff2 = Tensor::param(c.d_ff, d);
  p.d_ff2b = Tensor::param(1, d);
  p.d_ln3g = Tensor::param(1, d);
  p.d_ln3b = Tensor::param(1, d);
  p.d_lnfg = Tensor::param(1, d);
  p.d_lnfb = Tensor::param(1, d);
  p.d_emb_proj = Tensor::param(c.d_sub, d);
  p.w_out = Tensor::param(d, c.subtoken_vocab);
  p.b_out = Tensor::param(1, c.subtoken_vocab);
  p.p_q = Tensor::param(d, d);
  p.p_k = Tensor::param(d, d);
  p.p_e = Tensor::param(c.d_sub, d);
  p.gate_w = Tensor::param(2 * d, 1);
  p.gate_b = Tensor::param(1, 1);
  return p;
}

void init_parameters(Parameters& p, Rng& rng) {
  for (auto& np : registry(p)) {
    Tensor& t = *np.t;
    switch (np.kind) {
      case kInitEmbedding:
        for (auto& x : t.data()) x = 0.1 * rng.normal();
        break;
      case kInitProjection: {
        const double std = std::sqrt(2.0 / (t.rows() + t.cols()));
        for (auto& x : t.data()) x = std * rng.normal();
        break;
      }
      case kInitGainOne:
        std::fill(t.data().begin(), t.data().end(), 1.0);
        break;
      case kInitZero:
        std::fill(t.data().begin(), t.data().end(), 0.0);
        break;
    }
  }
}

}  // namespace

CodeModel::CodeModel(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  params_ = make_parameters(cfg_);
  Rng rng(seed);
  init_parameters(params_, rng);
}

CodeModel::CodeModel(ModelConfig cfg, Parameters params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
}

void CodeModel::for_each_param(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  for (auto& np : registry(params_)) fn(np.name, *np.t);
}

// ---------------------------------------------------------------------------
// Encoder

std::array<Tensor, kNumRelations> bin_encodings(const BinnedRelations& binned,
                                                int d, double m) {
  std::array<Tensor, kNumRelations> phis;
  for (int s = 0; s < kNumRelations; ++s) {
    const auto& bv = binned.rel[s].bin_value;
    std::vector<double> data;
    data.reserve(bv.size() * d);
    for (double r : bv) {
      const auto enc = encode_distance(r, d, m);
      data.insert(data.end(), enc.begin(), enc.end());
    }
    phis[s] = Tensor::from(static_cast<int>(bv.size()), d, std::move(data));
  }
  return phis;
}

std::vector<Tensor> relative_attention_logits(
    const EncoderLayerParams& lp, const Tensor& x,
    const BinnedRelations& binned,
    const std::array<Tensor, kNumRelations>& phis, const ModelConfig& cfg,
    const std::vector<int>& active_relations) {
  const int n = x.rows();
  const int dk = cfg.d_k();
  const double inv_sqrt_dk = 1.0 / std::sqrt(double(dk));
  const Tensor q = matmul(x, lp.wq);
  const Tensor k = matmul(x, lp.wk);
  // Relative keys are computed once per bin and gathered per pair; the
  // n x n x d encoding tensor is never materialized.
  std::array<Tensor, kNumRelations> rel_keys;
  for (int s : active_relations) rel_keys[s] = matmul(phis[s], lp.wr[s]);
  std::vector<Tensor> out;
  out.reserve(cfg.n_heads);
  for (int h = 0; h < cfg.n_heads; ++h) {
    const Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
    const Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
    const Tensor kh_t = transpose(kh);
    Tensor logits = matmul(qh, kh_t);
    const Tensor uh = slice_rows(lp.u, h, h + 1);
    logits = add_rowvec(logits, matmul(uh, kh_t));
    const Tensor vh = slice_rows(lp.v, h, h + 1);
    const Tensor qh_v = add_rowvec(qh, vh);
    for (int s : active_relations) {
      const Tensor rsh = slice_cols(rel_keys[s], h * dk, (h + 1) * dk);
      const Tensor per_bin = matmul(qh_v, transpose(rsh));  // [n, k]
      logits = add(logits, gather_cols(per_bin, binned.rel[s].bin_index, n));
    }
    out.push_back(scale(logits, inv_sqrt_dk));
  }
  return out;
}

namespace {

Tensor encoder_layer(const EncoderLayerParams& lp, const Tensor& x,
                     const BinnedRelations& binned,
                     const std::array<Tensor, kNumRelations>& phis,
                     const ModelConfig& cfg, const std::vector<int>& active,
                     bool train, Rng& rng) {
  const int dk = cfg.d_k();
  const Tensor xn = layer_norm(x, lp.ln1g, lp.ln1b);
  const std::vector<Tensor> logits =
      relative_attention_logits(lp, xn, binned, phis, cfg, active);
  const Tensor v = matmul(xn, lp.wv);
  std::vector<Tensor> head_out;
  head_out.reserve(cfg.n_heads);
  for (int h = 0; h < cfg.n_heads; ++h) {
    Tensor attn = softmax_rows(logits[h]);
    attn = dropout(attn, cfg.dropout, rng, train);
    head_out.push_back(matmul(attn, slice_cols(v, h * dk, (h + 1) * dk)));
  }
  const Tensor att = matmul(concat_cols(head_out), lp.wo);
  const Tensor h1 = add(x, att);
  const Tensor hn = layer_norm(h1, lp.ln2g, lp.ln2b);
  const Tensor ff = add_rowvec(
      matmul(gelu(add_rowvec(matmul(hn, lp.ff1), lp.ff1b)), lp.ff2), lp.ff2b);
  return add(h1, ff);
}

// Plain multi-head attention for the decoder (absolute positions).
Tensor mha(const Tensor& q_in, const Tensor& kv_in, const Tensor& wq,
           const Tensor& wk, const Tensor& wv, const Tensor& wo, int heads,
           const std::vector<uint8_t>* mask, double p, Rng& rng, bool train) {
  const int dk = q_in.cols() / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(double(dk));
  const Tensor q = matmul(q_in, wq);
  const Tensor k = matmul(kv_in, wk);
  const Tensor v = matmul(kv_in, wv);
  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
    const Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
    const Tensor logits = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
    Tensor attn =
        mask ? softmax_rows_masked(logits, *mask) : softmax_rows(logits);
    attn = dropout(attn, p, rng, train);
    head_out.push_back(matmul(attn, slice_cols(v, h * dk, (h + 1) * dk)));
  }
  return matmul(concat_cols(head_out), wo);
}

}  // namespace

Tensor CodeModel::encoder_forward(const Tensor& x, const BinnedRelations& binned,
                                  bool train, Rng& rng) {
  const auto phis = bin_encodings(binned, cfg_.d, cfg_.sinusoid_m);
  const auto active = cfg_.active_relations();
  Tensor h = x;
  for (const auto& lp : params_.enc) {
    h = encoder_layer(lp, h, binned, phis, cfg_, active, train, rng);
  }
  return layer_norm(h, params_.enc_lng, params_.enc_lnb);
}

Tensor CodeModel::assemble_input(const ModelSnippet& snip, bool train,
                                 Rng& rng) {
  (void)train;
  (void)rng;
  const int n = snip.n;
  // Subtoken slots; in the structure-only ablation tokens not aligned with
  // an AST leaf are blanked to PAD.
  std::vector<int> flat_ids(size_t(n) * kSubtokenSlots, Vocabulary::kPad);
  for (int i = 0; i < n; ++i) {
    const bool blank = !cfg_.use_context && !snip.is_leaf[i];
    for (int j = 0; j < kSubtokenSlots; ++j) {
      flat_ids[size_t(i) * kSubtokenSlots + j] =
          blank ? Vocabulary::kPad : snip.subtoken_ids[i][j];
    }
  }
  const Tensor sub = rows(params_.sub_emb, flat_ids);  // [n*5, d_sub]
  const Tensor sub_cat = reshape(sub, n, kSubtokenSlots * cfg_.d_sub);
  // Token-kind embedding is dropped in the structure-only ablation, the
  // node-type embedding in the context-only ablation; both are replaced by
  // exact zeros so the ablated pathway cannot influence the output.
  Tensor kind = cfg_.use_context ? rows(params_.kind_emb, snip.kind_ids)
                                 : Tensor::zeros(n, cfg_.d_kind);
  Tensor node = cfg_.use_structure ? rows(params_.node_emb, snip.node_type_ids)
                                   : Tensor::zeros(n, cfg_.d_node);
  const Tensor concat = concat_cols({sub_cat, kind, node});
  Tensor x = add_rowvec(matmul(concat, params_.w_in), params_.b_in);
  x = tanh_t(x);
  if (cfg_.n_languages >= 2) {
    const Tensor lang = rows(params_.lang_emb, {snip.language_id});
    x = add_rowvec(x, lang);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Decoder + pointer

Tensor smoothed_step_loss(const Tensor& probs, int target_class, double eps) {
  const int c = probs.cols();
  if (target_class < 0 || target_class >= c) {
    throw DataError("loss: target class " + std::to_string(target_class) +
                    " outside the output support of " + std::to_string(c));
  }
  std::vector<double> w(c, -eps / double(c));
  w[target_class] -= 1.0 - eps;
  return weighted_sum(log_t(probs), w);
}

Tensor pointer_mix(const Tensor& vocab_dist, const Tensor& copy_class_dist,
                   const Tensor& p_gen) {
  const int c = copy_class_dist.cols();
  Tensor vocab_padded = vocab_dist;
  if (vocab_dist.cols() < c) {
    vocab_padded = concat_cols(
        {vocab_dist, Tensor::zeros(1, c - vocab_dist.cols())});
  }
  const Tensor one_minus = add_scalar(scale(p_gen, -1.0), 1.0);
  return add(mul_bscalar(p_gen, vocab_padded),
             mul_bscalar(one_minus, copy_class_dist));
}

Tensor pointer_mix_slots(const Tensor& vocab_dist, const Tensor& copy_attention,
                         const std::vector<int>& slot_class, int n_classes,
                         const Tensor& p_gen) {
  const Tensor copy_class =
      scatter_classes(copy_attention, slot_class, n_classes);
  return pointer_mix(vocab_dist, copy_class, p_gen);
}

std::vector<int> label_targets(const std::vector<int>& label_classes,
                               int max_steps, int pad_id, int eon_id,
                               int* scored_steps) {
  std::vector<int> targets(max_steps, pad_id);
  const int len = std::min<int>(static_cast<int>(label_classes.size()), max_steps);
  for (int t = 0; t < len; ++t) targets[t] = label_classes[t];
  if (len < max_steps) targets[len] = eon_id;
  if (scored_steps) *scored_steps = std::min(len + 1, max_steps);
  return targets;
}

CodeModel::DecodeState CodeModel::prepare_decode(const ModelSnippet& snip,
                                                 bool train, Rng& rng) {
  DecodeState st;
  const Tensor x = assemble_input(snip, train, rng);
  st.enc_out = encoder_forward(x, snip.binned, train, rng);
  st.ext = build_ext_vocab(snip, cfg_.subtoken_vocab, cfg_.use_pointer);
  if (cfg_.use_pointer) {
    const int n = snip.n;
    const int s_count = n * kSubtokenSlots;
    std::vector<int> pos_ids(s_count), sub_ids(s_count);
    st.slot_valid.assign(s_count, 0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < kSubtokenSlots; ++j) {
        const int flat = i * kSubtokenSlots + j;
        pos_ids[flat] = i;
        sub_ids[flat] = snip.subtoken_ids[i][j];
        st.slot_valid[flat] = snip.subtoken_ids[i][j] != Vocabulary::kPad;
      }
    }
    const Tensor enc_rep = rows(st.enc_out, pos_ids);            // [S, d]
    const Tensor slot_emb = rows(params_.sub_emb, sub_ids);      // [S, d_sub]
    st.slot_keys = add(matmul(enc_rep, params_.p_k),
                       matmul(slot_emb, params_.p_e));           // [S, d]
  }
  return st;
}

std::vector<Tensor> CodeModel::decode_steps(
    const DecodeState& st, const ModelSnippet& snip,
    const std::vector<int>& teacher_classes, int steps, bool train, Rng& rng) {
  const int d = cfg_.d;
  // Step 0 is seeded with the encoder output at the masked-name position;
  // later steps embed the previous target subtoken.
  std::vector<Tensor> inputs;
  inputs.reserve(steps);
  inputs.push_back(slice_rows(st.enc_out, snip.name_pos, snip.name_pos + 1));
  for (int t = 1; t < steps; ++t) {
    int prev = teacher_classes[t - 1];
    if (prev >= cfg_.subtoken_vocab) prev = Vocabulary::kUnk;  // copied OOV
    const Tensor emb = rows(params_.sub_emb, {prev});
    inputs.push_back(matmul(emb, params_.d_emb_proj));
  }
  Tensor x = concat_rows(inputs);
  std::vector<double> pos_enc;
  pos_enc.reserve(size_t(steps) * d);
  for (int t = 0; t < steps; ++t) {
    const auto enc = encode_distance(double(t), d, cfg_.sinusoid_m);
    pos_enc.insert(pos_enc.end(), enc.begin(), enc.end());
  }
  x = add(x, Tensor::from(steps, d, std::move(pos_enc)));

  std::vector<uint8_t> causal(size_t(steps) * steps, 0);
  for (int i = 0; i < steps; ++i) {
    for (int j = 0; j <= i; ++j) causal[size_t(i) * steps + j] = 1;
  }
  const Tensor sn = layer_norm(x, params_.d_ln1g, params_.d_ln1b);
  Tensor h = add(x, mha(sn, sn, params_.d_wq, params_.d_wk, params_.d_wv,
                        params_.d_wo, cfg_.n_heads, &causal, cfg_.dropout, rng,
                        train));
  const Tensor cn = layer_norm(h, params_.d_ln2g, params_.d_ln2b);
  h = add(h, mha(cn, st.enc_out, params_.c_wq, params_.c_wk, params_.c_wv,
                 params_.c_wo, cfg_.n_heads, nullptr, cfg_.dropout, rng,
                 train));
  const Tensor fn = layer_norm(h, params_.d_ln3g, params_.d_ln3b);
  const Tensor ff = add_rowvec(
      matmul(gelu(add_rowvec(matmul(fn, params_.d_ff1), params_.d_ff1b)),
             params_.d_ff2),
      params_.d_ff2b);
  h = add(h, ff);
  const Tensor states = layer_norm(h, params_.d_lnfg, params_.d_lnfb);

  const Tensor logits = add_rowvec(matmul(states, params_.w_out), params_.b_out);
  const Tensor vocab_dist = softmax_rows(logits);

  std::vector<Tensor> out;
  out.reserve(steps);
  const int n_classes = st.ext.size();
  for (int t = 0; t < steps; ++t) {
    const Tensor vd = slice_rows(vocab_dist, t, t + 1);
    if (!cfg_.use_pointer) {
      out.push_back(vd);
      continue;
    }
    const Tensor state = slice_rows(states, t, t + 1);
    const Tensor q = matmul(state, params_.p_q);
    const Tensor scores = scale(matmul(q, transpose(st.slot_keys)),
                                1.0 / std::sqrt(double(d)));
    const Tensor attn = softmax_rows_masked(scores, st.slot_valid);
    const Tensor context = matmul(attn, st.slot_keys);
    const Tensor gate_in = concat_cols({state, context});
    const Tensor p_gen =
        sigmoid(add(matmul(gate_in, params_.gate_w), params_.gate_b));
    out.push_back(
        pointer_mix_slots(vd, attn, st.ext.slot_class, n_classes, p_gen));
  }
  return out;
}

CodeModel::Forward CodeModel::forward_loss(const ModelSnippet& snip,
                                           double label_smoothing, bool train,
                                           Rng& rng) {
  Forward fwd;
  const DecodeState st = prepare_decode(snip, train, rng);
  fwd.ext = st.ext;
  std::vector<int> label_classes;
  for (size_t i = 0; i < snip.label_ids.size(); ++i) {
    label_classes.push_back(st.ext.resolve_label(
        snip.label_ids[i], snip.label_strings[i], Vocabulary::kUnk));
  }
  fwd.targets = label_targets(label_classes, cfg_.max_out_subtokens,
                              Vocabulary::kPad, Vocabulary::kEon,
                              &fwd.scored_steps);
  fwd.step_probs = decode_steps(st, snip, fwd.targets, cfg_.max_out_subtokens,
                                train, rng);
  Tensor total = Tensor::scalar(0.0);
  for (int t = 0; t < fwd.scored_steps; ++t) {
    total = add(total,
                smoothed_step_loss(fwd.step_probs[t], fwd.targets[t],
                                   label_smoothing));
  }
  fwd.loss = scale(total, 1.0 / double(fwd.scored_steps));
  return fwd;
}

std::vector<std::string> CodeModel::predict_greedy(const ModelSnippet& snip,
                                                   const Vocabulary& vocab) {
  NoGradGuard ng;
  Rng rng(0);
  const DecodeState st = prepare_decode(snip, /*train=*/false, rng);
  std::vector<int> generated;
  std::vector<std::string> out;
  for (int t = 0; t < cfg_.max_out_subtokens; ++t) {
    std::vector<int> teacher = generated;
    teacher.resize(cfg_.max_out_subtokens, Vocabulary::kPad);
    const auto probs =
        decode_steps(st, snip, teacher, t + 1, /*train=*/false, rng);
    const auto& p = probs.back().data();
    int best = 0;
    for (int ci = 1; ci < static_cast<int>(p.size()); ++ci) {
      if (p[ci] > p[best]) best = ci;
    }
    if (best == Vocabulary::kEon || best == Vocabulary::kPad) break;
    generated.push_back(best);
    if (best >= cfg_.subtoken_vocab) {
      const std::string* s = st.ext.ext_string(best);
      out.push_back(s ? *s : "[UNK]");
    } else {
      out.push_back(vocab.name(best));
    }
  }
  return out;
}

std::vector<double> CodeModel::name_embedding(const ModelSnippet& snip) {
  NoGradGuard ng;
  Rng rng(0);
  const Tensor x = assemble_input(snip, /*train=*/false, rng);
  const Tensor enc = encoder_forward(x, snip.binned, /*train=*/false, rng);
  std::vector<double> out(cfg_.d);
  for (int j = 0; j < cfg_.d; ++j) out[j] = enc.value_at(snip.name_pos, j);
  return out;
}

}  // namespace sct
