#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sct/model.hpp"
#include "sct/shard.hpp"
#include "sct/snippet.hpp"
#include "sct/train.hpp"
#include "sct/vocab.hpp"

namespace sct {

struct PipelineConfig {
  // Paths.
  std::string corpus;        // raw JSONL {id, language, source[, nodes, root]}
  std::string stage1;        // stage-1 JSONL output
  std::string shards;        // training shard file
  std::string eval_shards;   // evaluation shard file
  std::string vocab_path;
  std::string node_vocab_path;
  std::string checkpoint_dir;
  std::string out_dir;
  std::string rejects;       // reject log (JSONL)

  std::vector<std::string> languages = {"minilang"};
  int max_tokens_train = 512;
  int max_tokens_eval = 1000;
  int k = 32;
  double growth = 1.3;
  long min_count = 100;
  uint64_t seed = 42;
  int workers = 1;

  std::string model_preset = "desk";
  std::map<std::string, std::string> model_overrides;  // "model.*" keys
  std::map<std::string, std::string> train_overrides;  // "train.*" keys

  static PipelineConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  ModelConfig resolve_model(int subtoken_vocab, int node_vocab) const;
  TrainConfig resolve_train() const;
  int language_id(const std::string& lang) const;
};

struct StageCounts {
  long accepted = 0;
  long rejected = 0;
};

// Stage 1: tokenize, parse (or ingest) the AST, map tokens to nodes, locate
// the method name. Rejected snippets go to the reject log with a reason.
StageCounts run_stage1(const PipelineConfig& cfg, const std::string& input,
                       const std::string& output);

// Builds the subtoken and node-type vocabularies from stage-1 records,
// one input per language, unioned.
void build_vocabs(const PipelineConfig& cfg,
                  const std::vector<std::string>& stage1_paths);

// Stage 2: vocabularize, strip punctuation, mask the method name, enforce
// the length cap (train 512 / eval 1000), compute + bin relations, and write
// binary shards.
StageCounts run_stage2(const PipelineConfig& cfg, const std::string& stage1,
                       const std::string& out_shard, bool eval_split);

// Deterministic synthetic corpus in the demo mini-language.
void write_demo_corpus(const std::string& path, int count, uint64_t seed,
                       const std::string& language = "minilang");

// Shard loading with artifact-hash validation.
Shard load_shard_checked(const std::string& path, const Vocabulary& vocab,
                         const Vocabulary& node_vocab);

struct PredictionRecord {
  std::string id;
  std::vector<std::string> predicted;
  std::vector<std::string> reference;
};
std::vector<PredictionRecord> predict_all(CodeModel& model,
                                          const std::vector<ModelSnippet>& set,
                                          const Vocabulary& vocab);

// Stage-1 record (de)serialization, exposed for tests.
std::string stage1_to_json(const Stage1Snippet& s);
Stage1Snippet stage1_from_json(const std::string& line);
// Stage-1 processing of a single parsed record.
Stage1Snippet process_stage1_record(const std::string& id,
                                    const std::string& language,
                                    const std::string& source,
                                    const std::string& raw_record_json);
// Stage-2 processing of a single snippet.
ModelSnippet process_stage2_record(const Stage1Snippet& s1,
                                   const Vocabulary& vocab,
                                   const Vocabulary& node_vocab,
                                   int language_id, int max_tokens, int k,
                                   double growth);

std::vector<std::string> read_lines(const std::string& path);

}  // namespace sct
