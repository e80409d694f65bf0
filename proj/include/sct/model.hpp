#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sct/snippet.hpp"
#include "sct/tensor.hpp"
#include "sct/vocab.hpp"

namespace sct {

struct ModelConfig {
  int d = 128;
  int d_ff = 256;
  int n_layers = 3;
  int n_heads = 8;
  int k_bins = 16;  // must match the shards
  int d_sub = 64;
  int d_kind = 16;
  int d_node = 32;
  double dropout = 0.2;
  int max_out_subtokens = kMaxLabelSubtokens;
  double sinusoid_m = 10000.0;
  bool use_pointer = true;
  bool use_structure = true;
  bool use_context = true;
  std::string activation = "gelu";
  int n_relations = kNumRelations;
  int subtoken_vocab = 0;
  int n_token_kinds = kNumTokenKinds;
  int node_type_vocab = 0;
  int n_languages = 1;

  int d_k() const { return d / n_heads; }
  void validate() const;

  // Relations the attention uses under the ablation flags:
  // context contributes {seq}, structure contributes the four AST relations.
  std::vector<int> active_relations() const;

  static ModelConfig desk_preset();
  static ModelConfig paper_preset();
  static ModelConfig preset(const std::string& name);

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct EncoderLayerParams {
  Tensor wq, wk, wv, wo;         // [d, d]
  Tensor u, v;                   // [n_heads, d_k]
  std::array<Tensor, kNumRelations> wr;  // [d, d] per relation
  Tensor ln1g, ln1b, ln2g, ln2b;
  Tensor ff1, ff1b, ff2, ff2b;
};

struct Parameters {
  Tensor sub_emb, kind_emb, node_emb, lang_emb;
  Tensor w_in, b_in;
  std::vector<EncoderLayerParams> enc;
  Tensor enc_lng, enc_lnb;
  // One decoder layer with absolute sinusoidal positions.
  Tensor d_wq, d_wk, d_wv, d_wo, d_ln1g, d_ln1b;
  Tensor c_wq, c_wk, c_wv, c_wo, d_ln2g, d_ln2b;
  Tensor d_ff1, d_ff1b, d_ff2, d_ff2b, d_ln3g, d_ln3b, d_lnfg, d_lnfb;
  Tensor d_emb_proj;  // decoder token-embedding projection [d_sub, d]
  Tensor w_out, b_out;
  // Pointer network.
  Tensor p_q, p_k, p_e, gate_w, gate_b;
};

// Sinusoidal scalar encoding, interleaved sin/cos; no trainable parts.
std::vector<double> encode_distance(double r, int d, double m = 10000.0);

// Numerically verifies that absolute-position attention factorizes into the
// four content/position terms; returns the max absolute deviation. Test
// utility; e and phi are n x d row-major, wq/wk are [d, d_k] (so that
// Q = E * wq).
double verify_decomposition(const std::vector<double>& e,
                            const std::vector<double>& phi, int n, int d,
                            const std::vector<double>& wq,
                            const std::vector<double>& wk, int d_k);

// Per-snippet dynamic output support: the base vocabulary plus one id per
// distinct out-of-vocabulary subtoken occurring in the snippet's input
// slots. Slots map to the class the pointer may copy into; padded slots map
// to -1.
struct ExtVocab {
  int base_size = 0;
  std::vector<std::string> ext_strings;
  std::vector<int> slot_class;  // flat n*5 -> class id or -1
  int size() const { return base_size + static_cast<int>(ext_strings.size()); }
  int resolve_label(int base_id, const std::string& s, int unk_id) const;
  const std::string* ext_string(int class_id) const;
};
ExtVocab build_ext_vocab(const ModelSnippet& snip, int base_vocab_size,
                         bool pointer_enabled);

// Sinusoidal encodings of each relation's bin representatives: [k, d] per
// relation, constant for a given snippet.
std::array<Tensor, kNumRelations> bin_encodings(const BinnedRelations& binned,
                                                int d, double m);

// Pre-softmax relative attention logits per head (scaled by 1/sqrt(d_k)).
std::vector<Tensor> relative_attention_logits(
    const EncoderLayerParams& lp, const Tensor& x,
    const BinnedRelations& binned,
    const std::array<Tensor, kNumRelations>& phis, const ModelConfig& cfg,
    const std::vector<int>& active_relations);

// Smoothed cross-entropy of one step distribution [1, C] against the target
// class: -(sum_c t_c log p_c) with t = (1-eps) one-hot + eps/C.
Tensor smoothed_step_loss(const Tensor& probs, int target_class, double eps);

// p_gen * vocab + (1 - p_gen) * copy over the extended support.
Tensor pointer_mix(const Tensor& vocab_dist, const Tensor& copy_class_dist,
                   const Tensor& p_gen);
// Convenience overload from raw copy attention over slots.
Tensor pointer_mix_slots(const Tensor& vocab_dist, const Tensor& copy_attention,
                         const std::vector<int>& slot_class, int n_classes,
                         const Tensor& p_gen);

class CodeModel {
 public:
  CodeModel(ModelConfig cfg, uint64_t seed);
  CodeModel(ModelConfig cfg, Parameters params);

  const ModelConfig& config() const { return cfg_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }
  void for_each_param(
      const std::function<void(const std::string&, Tensor&)>& fn);

  Tensor assemble_input(const ModelSnippet& snip, bool train, Rng& rng);
  Tensor encoder_forward(const Tensor& x, const BinnedRelations& binned,
                         bool train, Rng& rng);

  struct Forward {
    Tensor loss;
    std::vector<Tensor> step_probs;  // max_out steps, each [1, C]
    std::vector<int> targets;        // class ids, PAD beyond the label
    int scored_steps = 0;
    ExtVocab ext;
  };
  Forward forward_loss(const ModelSnippet& snip, double label_smoothing,
                       bool train, Rng& rng);

  // Greedy decode; returns predicted subtoken strings (EON/PAD stripped).
  std::vector<std::string> predict_greedy(const ModelSnippet& snip,
                                          const Vocabulary& vocab);

  // Encoder output at the masked-name position (eval mode).
  std::vector<double> name_embedding(const ModelSnippet& snip);

 private:
  struct DecodeState {
    Tensor enc_out;
    Tensor slot_keys;                 // [S, d] when pointer enabled
    std::vector<uint8_t> slot_valid;  // 1 x S mask
    ExtVocab ext;
  };
  DecodeState prepare_decode(const ModelSnippet& snip, bool train, Rng& rng);
  // Decoder pass over `steps` teacher inputs; returns per-step final
  // distributions over the extended support.
  std::vector<Tensor> decode_steps(const DecodeState& st,
                                   const ModelSnippet& snip,
                                   const std::vector<int>& teacher_classes,
                                   int steps, bool train, Rng& rng);

  ModelConfig cfg_;
  Parameters params_;
};

// Pad / EON handling for labels: class targets for the fixed number of
// decode steps, and how many of them are scored.
std::vector<int> label_targets(const std::vector<int>& label_classes,
                               int max_steps, int pad_id, int eon_id,
                               int* scored_steps);

}  // namespace sct
