#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "sct/checkpoint.hpp"
#include "sct/error.hpp"
#include "sct/pipeline.hpp"
#include "test_util.hpp"

using namespace sct;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sct_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

PipelineConfig demo_config(const TempDir& dir) {
  PipelineConfig cfg;
  cfg.corpus = dir.file("corpus.jsonl");
  cfg.stage1 = dir.file("stage1.jsonl");
  cfg.shards = dir.file("train.shard");
  cfg.eval_shards = dir.file("eval.shard");
  cfg.vocab_path = dir.file("vocab.txt");
  cfg.node_vocab_path = dir.file("nodes.txt");
  cfg.rejects = dir.file("rejects.jsonl");
  cfg.languages = {"minilang"};
  cfg.min_count = 1;
  cfg.k = 16;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST_CASE("demo corpus: 100 snippets, stage 1 accepts all") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);
  write_demo_corpus(cfg.corpus, 100, cfg.seed);
  CHECK(read_lines(cfg.corpus).size() == 100);
  const StageCounts counts = run_stage1(cfg, cfg.corpus, cfg.stage1);
  CHECK(counts.accepted == 100);
  CHECK(counts.rejected == 0);
  CHECK(read_lines(cfg.stage1).size() == 100);
}

TEST_CASE("stage 1: parse errors and tokenizer errors hit the reject log") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);
  std::ofstream(cfg.corpus)
      << R"({"id":"ok","language":"minilang","source":"fn f(x) { return x }"})"
      << "\n"
      << R"({"id":"broken","language":"minilang","source":"fn f( { oops"})"
      << "\n"
      << R"({"id":"badstr","language":"minilang","source":"fn f(x) { y = \"un }"})"
      << "\n"
      << R"({"id":"nolang","language":"python","source":"def f(): pass"})"
      << "\n";
  const StageCounts counts = run_stage1(cfg, cfg.corpus, cfg.stage1);
  CHECK(counts.accepted == 1);
  CHECK(counts.rejected == 3);
  // Rejects plus accepted partition the input exactly.
  const auto rejects = read_lines(cfg.rejects);
  CHECK(rejects.size() == 3);
  std::set<std::string> reasons;
  for (const auto& line : rejects) {
    reasons.insert(json::parse(line)["reason"].get<std::string>());
  }
  CHECK(reasons.count("parse"));
  CHECK(reasons.count("tokenizer"));
}

TEST_CASE("stage 1: external AST ingestion via the interchange schema") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);
  cfg.languages = {"toylang"};
  // Source "alpha beta"; root spans all, name node covers alpha, one more
  // leaf covers beta.
  json record{
      {"id", "ext-1"},
      {"language", "toylang"},
      {"source", "alpha beta"},
      {"nodes",
       json::array({json{{"id", 0}, {"type", "function"}, {"start", 0},
                         {"end", 10}, {"children", json::array({1, 2})}},
                    json{{"id", 1}, {"type", "name"}, {"start", 0}, {"end", 5},
                         {"children", json::array()}},
                    json{{"id", 2}, {"type", "ident"}, {"start", 6},
                         {"end", 10}, {"children", json::array()}}})},
      {"root", 0},
      {"name_node", 1}};
  std::ofstream(cfg.corpus) << record.dump() << "\n";
  const StageCounts counts = run_stage1(cfg, cfg.corpus, cfg.stage1);
  CHECK(counts.accepted == 1);
  const Stage1Snippet s = stage1_from_json(read_lines(cfg.stage1)[0]);
  CHECK(s.label == std::vector<std::string>{"alpha"});
  CHECK(s.ast.size() == 3);
  CHECK(s.token_node[0] == 1);  // alpha -> name leaf
  CHECK(s.token_node[1] == 2);  // beta -> ident leaf
}

TEST_CASE("stage-1 JSON round trip") {
  const Stage1Snippet s = process_stage1_record(
      "rt", "minilang", "fn area(w, h) { return w * h }", "{}");
  const Stage1Snippet back = stage1_from_json(stage1_to_json(s));
  CHECK(back.id == s.id);
  CHECK(back.tokens.size() == s.tokens.size());
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    CHECK(back.tokens[i].text == s.tokens[i].text);
    CHECK(back.tokens[i].kind == s.tokens[i].kind);
    CHECK(back.tokens[i].start == s.tokens[i].start);
  }
  CHECK(back.ast.size() == s.ast.size());
  CHECK(back.token_node == s.token_node);
  CHECK(back.name_tokens == s.name_tokens);
  CHECK(back.label == s.label);
}

TEST_CASE("full preprocessing: vocab, stage 2, shard round trip") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);
  write_demo_corpus(cfg.corpus, 40, cfg.seed);
  run_stage1(cfg, cfg.corpus, cfg.stage1);
  build_vocabs(cfg, {cfg.stage1});
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  const Vocabulary node_vocab = Vocabulary::load(cfg.node_vocab_path);
  CHECK(vocab.size() > vocab.n_specials());
  CHECK(node_vocab.contains("function"));
  CHECK(node_vocab.contains("ident"));

  const StageCounts counts = run_stage2(cfg, cfg.stage1, cfg.shards, false);
  CHECK(counts.accepted == 40);
  CHECK(counts.rejected == 0);

  const Shard shard = load_shard_checked(cfg.shards, vocab, node_vocab);
  CHECK(shard.snippets.size() == 40);
  CHECK(shard.header.k == 16);
  for (const auto& snip : shard.snippets) {
    CHECK(snip.n >= 1);
    CHECK(snip.name_pos >= 0);
    CHECK(snip.name_pos < snip.n);
    // The masked name position carries exactly the mask subtoken.
    CHECK(snip.subtoken_ids[snip.name_pos][0] == Vocabulary::kNameMask);
    CHECK(!snip.label_strings.empty());
    CHECK(snip.label_strings.size() <= size_t(kMaxLabelSubtokens));
    // No punctuation kinds survive.
    for (int kid : snip.kind_ids) {
      CHECK(kid != static_cast<int>(TokenKind::kPunctuation));
      CHECK(kid != static_cast<int>(TokenKind::kComment));
      CHECK(kid != static_cast<int>(TokenKind::kWhitespace));
    }
    for (int i = 0; i < snip.n; ++i) {
      CHECK(snip.subtoken_ids[i][0] != Vocabulary::kPad);  // >= 1 subtoken
    }
  }
}

TEST_CASE("stage 2: length cap is exact at the boundary") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);
  // Measure the post-punctuation token count of a generated snippet, then
  // re-run with the cap at exactly n (accepted) and n-1 (rejected).
  std::string body;
  for (int i = 0; i < 30; ++i) body += "  a = b\n";
  const std::string source = "fn f(x) {\n" + body + "}\n";
  std::ofstream(cfg.corpus) << json{{"id", "len"},
                                    {"language", "minilang"},
                                    {"source", source}}
                                   .dump()
                            << "\n";
  run_stage1(cfg, cfg.corpus, cfg.stage1);
  build_vocabs(cfg, {cfg.stage1});
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  const Vocabulary node_vocab = Vocabulary::load(cfg.node_vocab_path);
  const Stage1Snippet s1 = stage1_from_json(read_lines(cfg.stage1)[0]);
  const ModelSnippet ok = process_stage2_record(s1, vocab, node_vocab, 0,
                                                100000, cfg.k, cfg.growth);
  const int n = ok.n;
  CHECK_NOTHROW(process_stage2_record(s1, vocab, node_vocab, 0, n, cfg.k,
                                      cfg.growth));
  try {
    process_stage2_record(s1, vocab, node_vocab, 0, n - 1, cfg.k, cfg.growth);
    FAIL("expected length rejection");
  } catch (const SnippetReject& r) {
    CHECK(r.reason == "length");
  }
}

TEST_CASE("default caps: over-512 snippet rejected at train, kept at eval") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);  // defaults: 512 train, 1000 eval
  std::string body;
  for (int i = 0; i < 172; ++i) body += "a = b\n";  // 3 tokens per line
  const std::string source = "fn f(x) {\n" + body + "}\n";
  std::ofstream(cfg.corpus) << json{{"id", "long"},
                                    {"language", "minilang"},
                                    {"source", source}}
                                   .dump()
                            << "\n";
  run_stage1(cfg, cfg.corpus, cfg.stage1);
  build_vocabs(cfg, {cfg.stage1});
  const Stage1Snippet s1 = stage1_from_json(read_lines(cfg.stage1)[0]);
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  const Vocabulary node_vocab = Vocabulary::load(cfg.node_vocab_path);
  // Sanity: the snippet sits between the two caps.
  const ModelSnippet measured = process_stage2_record(
      s1, vocab, node_vocab, 0, 100000, cfg.k, cfg.growth);
  REQUIRE(measured.n > 512);
  REQUIRE(measured.n <= 1000);
  const StageCounts train_counts =
      run_stage2(cfg, cfg.stage1, dir.file("t.shard"), /*eval_split=*/false);
  CHECK(train_counts.accepted == 0);
  CHECK(train_counts.rejected == 1);
  const StageCounts eval_counts =
      run_stage2(cfg, cfg.stage1, dir.file("e.shard"), /*eval_split=*/true);
  CHECK(eval_counts.accepted == 1);
  CHECK(eval_counts.rejected == 0);
}

TEST_CASE("stage 2 reruns are byte-identical; workers do not change output") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);
  write_demo_corpus(cfg.corpus, 25, cfg.seed);
  run_stage1(cfg, cfg.corpus, cfg.stage1);
  build_vocabs(cfg, {cfg.stage1});
  run_stage2(cfg, cfg.stage1, dir.file("a.shard"), false);
  run_stage2(cfg, cfg.stage1, dir.file("b.shard"), false);
  cfg.workers = 3;
  run_stage2(cfg, cfg.stage1, dir.file("c.shard"), false);
  const std::string a = slurp(dir.file("a.shard"));
  CHECK(a == slurp(dir.file("b.shard")));
  CHECK(a == slurp(dir.file("c.shard")));
  CHECK(!a.empty());
}

TEST_CASE("shard loading rejects a vocabulary mismatch") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);
  write_demo_corpus(cfg.corpus, 10, cfg.seed);
  run_stage1(cfg, cfg.corpus, cfg.stage1);
  build_vocabs(cfg, {cfg.stage1});
  run_stage2(cfg, cfg.stage1, cfg.shards, false);
  Vocabulary other(Vocabulary::subtoken_specials(), 1);
  other.count("zzz", 5);
  other.finalize();
  const Vocabulary node_vocab = Vocabulary::load(cfg.node_vocab_path);
  CHECK_THROWS_AS(load_shard_checked(cfg.shards, other, node_vocab), DataError);
}

TEST_CASE("multilingual: union vocabulary matches the set-union oracle") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);
  cfg.languages = {"minilang", "minilang2"};
  const std::string c1 = dir.file("c1.jsonl"), c2 = dir.file("c2.jsonl");
  const std::string s1 = dir.file("s1.jsonl"), s2 = dir.file("s2.jsonl");
  write_demo_corpus(c1, 20, 1, "minilang");
  write_demo_corpus(c2, 20, 2, "minilang2");
  run_stage1(cfg, c1, s1);
  run_stage1(cfg, c2, s2);
  build_vocabs(cfg, {s1, s2});
  const Vocabulary u = Vocabulary::load(cfg.vocab_path);

  // Oracle: per-language vocabularies, set union of their entries.
  std::set<std::string> expected;
  for (const auto& stage1_path : {s1, s2}) {
    Vocabulary v(Vocabulary::subtoken_specials(), cfg.min_count);
    for (const auto& line : read_lines(stage1_path)) {
      const Stage1Snippet s = stage1_from_json(line);
      for (size_t i = 0; i < s.tokens.size(); ++i) {
        if (s.tokens[i].kind == TokenKind::kPunctuation) continue;
        for (const auto& st : s.subtokens[i]) v.count(st);
      }
    }
    v.finalize();
    for (int i = v.n_specials(); i < v.size(); ++i) expected.insert(v.name(i));
  }
  CHECK(u.size() - u.n_specials() == static_cast<int>(expected.size()));
  for (const auto& name : expected) CHECK(u.contains(name));

  // Both languages flow through stage 2 with the shared vocabulary.
  CHECK(run_stage2(cfg, s1, dir.file("l1.shard"), false).accepted == 20);
  CHECK(run_stage2(cfg, s2, dir.file("l2.shard"), false).accepted == 20);
  const Vocabulary nv = Vocabulary::load(cfg.node_vocab_path);
  const Shard sh2 = load_shard_checked(dir.file("l2.shard"), u, nv);
  CHECK(sh2.snippets[0].language_id == 1);
}

TEST_CASE("checkpoint round trip preserves parameters and config") {
  TempDir dir;
  ModelConfig cfg;
  cfg.d = 16;
  cfg.d_ff = 32;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.k_bins = 8;
  cfg.d_sub = 8;
  cfg.d_kind = 4;
  cfg.d_node = 4;
  cfg.subtoken_vocab = 24;
  cfg.node_type_vocab = 6;
  CodeModel model(cfg, 77);
  CheckpointMeta meta;
  meta.vocab_hash = 123;
  meta.node_vocab_hash = 456;
  meta.languages = {"minilang"};
  meta.step = 7;
  const std::string path = dir.file("ckpt.bin");
  save_checkpoint(path, model, meta);

  CheckpointMeta back;
  CodeModel loaded = load_checkpoint(path, &back);
  CHECK(back.vocab_hash == 123);
  CHECK(back.node_vocab_hash == 456);
  CHECK(back.step == 7);
  CHECK(back.languages == meta.languages);
  CHECK(loaded.config().d == 16);
  CHECK(loaded.config().k_bins == 8);
  std::vector<std::vector<double>> a, b;
  model.for_each_param([&](const std::string&, Tensor& t) { a.push_back(t.data()); });
  loaded.for_each_param([&](const std::string&, Tensor& t) { b.push_back(t.data()); });
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("config file parsing with model/train overrides") {
  TempDir dir;
  const std::string path = dir.file("cfg.txt");
  std::ofstream(path) << "# demo pipeline\n"
                      << "corpus = corpus.jsonl\n"
                      << "languages = minilang, minilang2\n"
                      << "k = 16\n"
                      << "min_count = 1\n"
                      << "seed = 7\n"
                      << "model_preset = desk\n"
                      << "model.d = 64\n"
                      << "model.n_heads = 4\n"
                      << "train.lr = 0.001\n"
                      << "train.max_steps = 50\n";
  const PipelineConfig cfg = PipelineConfig::from_file(path);
  CHECK(cfg.languages == std::vector<std::string>{"minilang", "minilang2"});
  CHECK(cfg.k == 16);
  CHECK(cfg.seed == 7);
  const ModelConfig mc = cfg.resolve_model(100, 10);
  CHECK(mc.d == 64);
  CHECK(mc.n_heads == 4);
  CHECK(mc.n_languages == 2);
  CHECK(mc.subtoken_vocab == 100);
  const TrainConfig tc = cfg.resolve_train();
  CHECK(tc.lr == doctest::Approx(0.001));
  CHECK(tc.max_steps == 50);
  CHECK(tc.seed == 7);

  CHECK_THROWS_AS(PipelineConfig::from_file(dir.file("missing.txt")), DataError);
  std::ofstream(dir.file("bad.txt")) << "nonsense_key = 1\n";
  CHECK_THROWS_AS(PipelineConfig::from_file(dir.file("bad.txt")), DataError);
}

TEST_CASE("unk slots carry their strings for the pointer path") {
  TempDir dir;
  PipelineConfig cfg = demo_config(dir);
  cfg.min_count = 100;  // force rare subtokens out of the vocabulary
  std::ofstream(cfg.corpus)
      << R"({"id":"u","language":"minilang","source":"fn get_qqrare(x) { qqrare = x return qqrare }"})"
      << "\n";
  run_stage1(cfg, cfg.corpus, cfg.stage1);
  build_vocabs(cfg, {cfg.stage1});
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  CHECK(!vocab.contains("qqrare"));
  run_stage2(cfg, cfg.stage1, cfg.shards, false);
  const Shard shard = load_shard_checked(
      cfg.shards, vocab, Vocabulary::load(cfg.node_vocab_path));
  const ModelSnippet& s = shard.snippets.at(0);
  bool found = false;
  for (const auto& [flat, str] : s.unk_slots) {
    if (str == "qqrare") found = true;
  }
  CHECK(found);
  // The label id is UNK but the string survives.
  REQUIRE(s.label_strings.size() == 2);
  CHECK(s.label_strings[1] == "qqrare");
  CHECK(s.label_ids[1] == Vocabulary::kUnk);
}
