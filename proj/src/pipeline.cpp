#include "sct/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include <json.hpp>

#include "sct/error.hpp"
#include "sct/mini_parser.hpp"
#include "sct/normalize.hpp"
#include "sct/relations.hpp"
#include "sct/subtoken.hpp"
#include "sct/token_map.hpp"

namespace sct {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool is_mini(const std::string& lang) {
  return lang == "minilang" || lang == "minilang2";
}

// Subtoken strings for one normalized token. Masked literals and layout
// tokens carry their mask name as the single subtoken.
std::vector<std::string> subtokens_for(const RawToken& t) {
  switch (t.kind) {
    case TokenKind::kStringLiteral: return {kMaskString};
    case TokenKind::kNumberLiteral: return {kMaskNumber};
    case TokenKind::kIndent: return {kIndentText};
    case TokenKind::kDedent: return {kDedentText};
    case TokenKind::kNewline: return {kNewlineText};
    default: return split_subtokens(t.text);
  }
}

struct AstFields {
  bool present = false;
  std::vector<AstNode> nodes;
  int root = 0;
  int name_node = -1;
};

AstFields ast_fields_from_json(const json& j) {
  AstFields f;
  if (!j.contains("nodes")) return f;
  f.present = true;
  if (!j["nodes"].is_array() || !j.contains("root")) {
    throw SnippetReject("schema", "record has nodes but no valid root");
  }
  for (const auto& nj : j["nodes"]) {
    AstNode node;
    try {
      node.id = nj.at("id").get<int>();
      node.type = nj.at("type").get<std::string>();
      node.start = nj.at("start").get<size_t>();
      node.end = nj.at("end").get<size_t>();
      if (nj.contains("children")) {
        node.children = nj["children"].get<std::vector<int>>();
      }
    } catch (const json::exception& e) {
      throw SnippetReject("schema", std::string("bad node record: ") + e.what());
    }
    f.nodes.push_back(std::move(node));
  }
  std::sort(f.nodes.begin(), f.nodes.end(),
            [](const AstNode& a, const AstNode& b) { return a.id < b.id; });
  f.root = j["root"].get<int>();
  if (j.contains("name_node")) f.name_node = j["name_node"].get<int>();
  return f;
}

void append_reject(const std::string& path, const std::string& id, int stage,
                   const std::string& reason, const std::string& detail) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::app);
  json j{{"id", id}, {"stage", stage}, {"reason", reason}, {"detail", detail}};
  f << j.dump() << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read config: " + path);
  PipelineConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("bad config line " + std::to_string(lineno) + " in " +
                      path + ": " + line);
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (key == "corpus") corpus = value;
  else if (key == "stage1") stage1 = value;
  else if (key == "shards") shards = value;
  else if (key == "eval_shards") eval_shards = value;
  else if (key == "vocab") vocab_path = value;
  else if (key == "node_vocab") node_vocab_path = value;
  else if (key == "checkpoint_dir") checkpoint_dir = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "rejects") rejects = value;
  else if (key == "languages") {
    languages.clear();
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) languages.push_back(item);
    }
  } else if (key == "max_tokens_train") max_tokens_train = std::stoi(value);
  else if (key == "max_tokens_eval") max_tokens_eval = std::stoi(value);
  else if (key == "k") k = std::stoi(value);
  else if (key == "growth") growth = std::stod(value);
  else if (key == "min_count") min_count = std::stol(value);
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "workers") workers = std::stoi(value);
  else if (key == "model_preset") model_preset = value;
  else if (key.rfind("model.", 0) == 0) model_overrides[key.substr(6)] = value;
  else if (key.rfind("train.", 0) == 0) train_overrides[key.substr(6)] = value;
  else throw DataError("unknown config key: " + key);
}

ModelConfig PipelineConfig::resolve_model(int subtoken_vocab,
                                          int node_vocab) const {
  auto kv = ModelConfig::preset(model_preset).to_kv();
  for (const auto& [key, v] : model_overrides) kv[key] = v;
  ModelConfig mc = ModelConfig::from_kv(kv);
  mc.subtoken_vocab = subtoken_vocab;
  mc.node_type_vocab = node_vocab;
  mc.n_languages = static_cast<int>(languages.size());
  mc.k_bins = k;
  if (model_overrides.count("k_bins")) {
    mc.k_bins = std::stoi(model_overrides.at("k_bins"));
  }
  return mc;
}

TrainConfig PipelineConfig::resolve_train() const {
  TrainConfig tc = TrainConfig::from_kv(train_overrides);
  if (!train_overrides.count("seed")) tc.seed = seed;
  return tc;
}

int PipelineConfig::language_id(const std::string& lang) const {
  for (size_t i = 0; i < languages.size(); ++i) {
    if (languages[i] == lang) return static_cast<int>(i);
  }
  throw SnippetReject("schema", "language '" + lang +
                                    "' not in the configured language list");
}

// ---------------------------------------------------------------------------
// Stage 1

Stage1Snippet process_stage1_record(const std::string& id,
                                    const std::string& language,
                                    const std::string& source,
                                    const std::string& raw_record_json) {
  Stage1Snippet s;
  s.id = id;
  s.language = language;
  s.tokens = normalize(source, language);
  AstFields fields;
  {
    json j = json::parse(raw_record_json);
    fields = ast_fields_from_json(j);
  }
  int name_hint = -1;
  if (fields.present) {
    s.ast = AstTree::build(std::move(fields.nodes), fields.root);
    name_hint = fields.name_node;
  } else if (is_mini(language)) {
    s.ast = parse_mini(source);
    name_hint = mini_name_node(s.ast);
  } else {
    throw SnippetReject("parse", "no AST in record and no built-in parser for "
                                 "language '" + language + "'");
  }
  s.token_node = map_tokens_to_nodes(s.tokens, s.ast);
  const NameInfo name = locate_method_name(s.tokens, s.ast, name_hint);
  s.name_tokens = name.token_indices;
  s.name_node = name.name_node;
  s.label = name.label;
  s.subtokens.reserve(s.tokens.size());
  for (const auto& t : s.tokens) s.subtokens.push_back(subtokens_for(t));
  return s;
}

std::string stage1_to_json(const Stage1Snippet& s) {
  json j;
  j["id"] = s.id;
  j["language"] = s.language;
  json toks = json::array();
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    const RawToken& t = s.tokens[i];
    toks.push_back(json{{"t", t.text},
                        {"k", token_kind_name(t.kind)},
                        {"s", t.start},
                        {"e", t.end},
                        {"sub", s.subtokens[i]}});
  }
  j["tokens"] = std::move(toks);
  json nodes = json::array();
  for (const AstNode& n : s.ast.nodes()) {
    nodes.push_back(json{{"id", n.id},
                         {"type", n.type},
                         {"start", n.start},
                         {"end", n.end},
                         {"children", n.children}});
  }
  j["nodes"] = std::move(nodes);
  j["root"] = s.ast.root();
  j["assignment"] = s.token_node;
  j["name_node"] = s.name_node;
  j["name_tokens"] = s.name_tokens;
  j["label"] = s.label;
  return j.dump();
}

Stage1Snippet stage1_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad stage-1 record: ") + e.what());
  }
  Stage1Snippet s;
  s.id = j.at("id").get<std::string>();
  s.language = j.at("language").get<std::string>();
  for (const auto& tj : j.at("tokens")) {
    RawToken t;
    t.text = tj.at("t").get<std::string>();
    t.kind = token_kind_from_name(tj.at("k").get<std::string>());
    t.start = tj.at("s").get<size_t>();
    t.end = tj.at("e").get<size_t>();
    s.tokens.push_back(std::move(t));
    s.subtokens.push_back(tj.at("sub").get<std::vector<std::string>>());
  }
  std::vector<AstNode> nodes;
  for (const auto& nj : j.at("nodes")) {
    AstNode n;
    n.id = nj.at("id").get<int>();
    n.type = nj.at("type").get<std::string>();
    n.start = nj.at("start").get<size_t>();
    n.end = nj.at("end").get<size_t>();
    n.children = nj.at("children").get<std::vector<int>>();
    nodes.push_back(std::move(n));
  }
  s.ast = AstTree::build(std::move(nodes), j.at("root").get<int>());
  s.token_node = j.at("assignment").get<std::vector<int>>();
  s.name_node = j.at("name_node").get<int>();
  s.name_tokens = j.at("name_tokens").get<std::vector<int>>();
  s.label = j.at("label").get<std::vector<std::string>>();
  return s;
}

StageCounts run_stage1(const PipelineConfig& cfg, const std::string& input,
                       const std::string& output) {
  const auto lines = read_lines(input);
  std::ofstream out(output);
  if (!out) throw DataError("cannot write stage-1 output: " + output);

  struct Slot {
    std::string record;  // serialized stage-1 JSON on success
    std::string id = "?";
    std::string reason, detail;
  };
  std::vector<Slot> results(lines.size());
  auto work = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < lines.size(); i += stride) {
      Slot& slot = results[i];
      try {
        json j;
        try {
          j = json::parse(lines[i]);
        } catch (const json::exception& e) {
          throw SnippetReject("schema", std::string("bad JSON: ") + e.what());
        }
        slot.id = j.value("id", "?");
        const std::string language = j.value("language", "");
        if (!j.contains("source")) {
          throw SnippetReject("schema", "record missing source");
        }
        const Stage1Snippet s = process_stage1_record(
            slot.id, language, j["source"].get<std::string>(), lines[i]);
        slot.record = stage1_to_json(s);
      } catch (const SnippetReject& r) {
        slot.reason = r.reason;
        slot.detail = r.what();
      }
    }
  };
  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back(work, size_t(w), size_t(workers));
    }
    for (auto& t : pool) t.join();
  }

  StageCounts counts;
  for (const auto& slot : results) {
    if (!slot.record.empty()) {
      out << slot.record << "\n";
      ++counts.accepted;
    } else {
      append_reject(cfg.rejects, slot.id, 1, slot.reason, slot.detail);
      ++counts.rejected;
    }
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Vocabularies

void build_vocabs(const PipelineConfig& cfg,
                  const std::vector<std::string>& stage1_paths) {
  std::vector<Vocabulary> subs, nodes;
  for (const auto& path : stage1_paths) {
    Vocabulary sub(Vocabulary::subtoken_specials(), cfg.min_count);
    Vocabulary node(Vocabulary::node_type_specials(), 1);
    for (const auto& line : read_lines(path)) {
      const Stage1Snippet s = stage1_from_json(line);
      for (size_t i = 0; i < s.tokens.size(); ++i) {
        if (s.tokens[i].kind == TokenKind::kPunctuation) continue;
        for (const auto& st : s.subtokens[i]) sub.count(st);
      }
      for (const AstNode& n : s.ast.nodes()) node.count(n.type);
    }
    sub.finalize();
    node.finalize();
    subs.push_back(std::move(sub));
    nodes.push_back(std::move(node));
  }
  const Vocabulary sub_union = Vocabulary::union_of(subs);
  const Vocabulary node_union = Vocabulary::union_of(nodes);
  sub_union.save(cfg.vocab_path);
  node_union.save(cfg.node_vocab_path);
}

// ---------------------------------------------------------------------------
// Stage 2

ModelSnippet process_stage2_record(const Stage1Snippet& s1,
                                   const Vocabulary& vocab,
                                   const Vocabulary& node_vocab,
                                   int language_id, int max_tokens, int k,
                                   double growth) {
  if (s1.name_tokens.empty() || s1.name_node < 0) {
    throw SnippetReject("no-name", "stage-1 record has no method name");
  }
  const std::set<int> name_set(s1.name_tokens.begin(), s1.name_tokens.end());
  // Keep non-punctuation tokens; the name's tokens collapse into a single
  // METHOD_NAME_MASK position.
  std::vector<int> kept;  // token index, or -1 for the mask position
  int name_pos = -1;
  for (size_t i = 0; i < s1.tokens.size(); ++i) {
    if (s1.tokens[i].kind == TokenKind::kPunctuation) continue;
    if (name_set.count(static_cast<int>(i))) {
      if (name_pos == -1) {
        name_pos = static_cast<int>(kept.size());
        kept.push_back(-1);
      }
      continue;
    }
    kept.push_back(static_cast<int>(i));
  }
  const int n = static_cast<int>(kept.size());
  if (n > max_tokens) {
    throw SnippetReject("length", "snippet has " + std::to_string(n) +
                                      " tokens after punctuation removal, "
                                      "limit is " + std::to_string(max_tokens));
  }
  ModelSnippet out;
  out.id = s1.id;
  out.language_id = language_id;
  out.n = n;
  out.name_pos = name_pos;
  out.subtoken_ids.resize(n);
  out.kind_ids.resize(n);
  out.node_type_ids.resize(n);
  out.is_leaf.resize(n);
  std::vector<int> token_node(n);
  for (int p = 0; p < n; ++p) {
    const int ti = kept[p];
    std::vector<std::string> subs;
    TokenKind kind;
    int node;
    if (ti == -1) {
      subs = {"[METHOD_NAME_MASK]"};
      kind = TokenKind::kIdentifier;
      node = s1.name_node;
    } else {
      subs = s1.subtokens[ti];
      kind = s1.tokens[ti].kind;
      node = s1.token_node[ti];
    }
    token_node[p] = node;
    out.kind_ids[p] = static_cast<int>(kind);
    out.node_type_ids[p] = node_vocab.id(s1.ast.node(node).type);
    out.is_leaf[p] = s1.ast.is_leaf(node) ? 1 : 0;
    auto& slots = out.subtoken_ids[p];
    slots.fill(Vocabulary::kPad);
    const int count = std::min<int>(kSubtokenSlots,
                                    static_cast<int>(subs.size()));
    for (int j = 0; j < count; ++j) {
      const int id = vocab.id(subs[j]);
      slots[j] = id;
      if (id == Vocabulary::kUnk) {
        out.unk_slots.emplace_back(p * kSubtokenSlots + j, subs[j]);
      }
    }
  }
  const int label_len =
      std::min<int>(kMaxLabelSubtokens, static_cast<int>(s1.label.size()));
  for (int i = 0; i < label_len; ++i) {
    out.label_strings.push_back(s1.label[i]);
    out.label_ids.push_back(vocab.id(s1.label[i]));
  }
  const RelationSet rs = token_relations(s1.ast, token_node);
  out.binned = bin_relations(rs, k, growth);
  return out;
}

StageCounts run_stage2(const PipelineConfig& cfg, const std::string& stage1,
                       const std::string& out_shard, bool eval_split) {
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  const Vocabulary node_vocab = Vocabulary::load(cfg.node_vocab_path);
  const int max_tokens = eval_split ? cfg.max_tokens_eval : cfg.max_tokens_train;
  const auto lines = read_lines(stage1);

  struct Slot {
    std::optional<ModelSnippet> snip;
    std::string id = "?";
    std::string reason, detail;
  };
  std::vector<Slot> results(lines.size());
  auto work = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < lines.size(); i += stride) {
      Slot& slot = results[i];
      try {
        const Stage1Snippet s1 = stage1_from_json(lines[i]);
        slot.id = s1.id;
        slot.snip = process_stage2_record(s1, vocab, node_vocab,
                                          cfg.language_id(s1.language),
                                          max_tokens, cfg.k, cfg.growth);
      } catch (const SnippetReject& r) {
        slot.reason = r.reason;
        slot.detail = r.what();
      }
    }
  };
  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back(work, size_t(w), size_t(workers));
    }
    for (auto& t : pool) t.join();
  }

  ShardHeader header;
  header.vocab_hash = vocab.hash();
  header.node_vocab_hash = node_vocab.hash();
  header.k = static_cast<uint32_t>(cfg.k);
  header.languages = cfg.languages;
  ShardWriter writer(out_shard, header);
  StageCounts counts;
  for (const auto& slot : results) {
    if (slot.snip) {
      writer.write(*slot.snip);
      ++counts.accepted;
    } else {
      append_reject(cfg.rejects, slot.id, 2, slot.reason, slot.detail);
      ++counts.rejected;
    }
  }
  writer.close();
  return counts;
}

// ---------------------------------------------------------------------------
// Demo corpus

void write_demo_corpus(const std::string& path, int count, uint64_t seed,
                       const std::string& language) {
  static const std::vector<std::string> kNouns = {
      "width", "height", "total", "count", "sum",   "data",  "value",
      "index", "size",   "name",  "color", "area",  "item",  "list",
      "node",  "rate",   "price", "score", "depth", "level", "speed",
      "mass",  "time",   "key",   "code"};
  const std::string kw = language == "minilang2" ? "func" : "fn";
  Rng rng(seed);
  std::set<std::string> used_names;
  std::ofstream f(path);
  if (!f) throw DataError("cannot write demo corpus: " + path);
  int written = 0;
  while (written < count) {
    const std::string a = kNouns[rng.below(kNouns.size())];
    const std::string b = kNouns[rng.below(kNouns.size())];
    if (a == b) continue;
    const int tmpl = static_cast<int>(rng.below(7));
    std::string name, source;
    switch (tmpl) {
      case 0:
        name = "get_" + a + "_" + b;
        source = kw + " " + name + "(obj) {\n  return obj_" + a + "_" + b +
                 "\n}\n";
        break;
      case 1:
        name = "set_" + a;
        source = kw + " " + name + "(obj, value) {\n  obj_" + a +
                 " = value\n  return obj_" + a + "\n}\n";
        break;
      case 2:
        name = "compute_" + a;
        source = kw + " " + name + "(x, y) {\n  " + a + " = x * y\n  return " +
                 a + "\n}\n";
        break;
      case 3:
        name = "check_" + a + "_limit";
        source = kw + " " + name + "(" + a + ", limit) {\n  if (" + a +
                 " > limit) {\n    return limit\n  }\n  return " + a + "\n}\n";
        break;
      case 4:
        name = "update_" + a + "_" + b;
        source = kw + " " + name + "(item) {\n  tmp = read_" + a +
                 "(item)\n  write_" + b + "(item, tmp)\n  return tmp\n}\n";
        break;
      case 5:
        name = "find_" + a + "_index";
        source = kw + " " + name + "(items, " + a + ") {\n  idx = scan(items, " +
                 a + ")\n  return idx\n}\n";
        break;
      default:
        name = "make_" + a;
        source = kw + " " + name + "(" + b + ") {\n  " + a + " = alloc(" + b +
                 ")\n  return " + a + "\n}\n";
        break;
    }
    if (!used_names.insert(name).second) continue;
    char id[32];
    std::snprintf(id, sizeof(id), "demo-%04d", written);
    json j{{"id", id}, {"language", language}, {"source", source}};
    f << j.dump() << "\n";
    ++written;
  }
}

// ---------------------------------------------------------------------------
// Helpers

Shard load_shard_checked(const std::string& path, const Vocabulary& vocab,
                         const Vocabulary& node_vocab) {
  Shard shard = read_shard(path);
  if (shard.header.vocab_hash != vocab.hash()) {
    throw DataError("shard " + path + " was built with a different subtoken "
                                      "vocabulary (hash mismatch)");
  }
  if (shard.header.node_vocab_hash != node_vocab.hash()) {
    throw DataError("shard " + path + " was built with a different node-type "
                                      "vocabulary (hash mismatch)");
  }
  return shard;
}

std::vector<PredictionRecord> predict_all(CodeModel& model,
                                          const std::vector<ModelSnippet>& set,
                                          const Vocabulary& vocab) {
  std::vector<PredictionRecord> out;
  out.reserve(set.size());
  for (const auto& snip : set) {
    PredictionRecord rec;
    rec.id = snip.id;
    rec.predicted = model.predict_greedy(snip, vocab);
    rec.reference = snip.label_strings;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace sct
