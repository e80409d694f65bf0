#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sct/checkpoint.hpp"
#include "sct/error.hpp"
#include "sct/metrics.hpp"
#include "sct/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::string lang;
  int stage = 0;
  int workers = 0;
  long long seed = -1;
};

sct::PipelineConfig load_config(const CommonOpts& opts) {
  sct::PipelineConfig cfg = opts.config.empty()
                                ? sct::PipelineConfig{}
                                : sct::PipelineConfig::from_file(opts.config);
  if (opts.workers > 0) cfg.workers = opts.workers;
  if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);
  return cfg;
}

void ensure_parent_dir(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

struct LoadedData {
  sct::Vocabulary vocab;
  sct::Vocabulary node_vocab;
  sct::Shard shard;
};

LoadedData load_data(const sct::PipelineConfig& cfg,
                     const std::string& shard_path) {
  LoadedData d{sct::Vocabulary::load(cfg.vocab_path),
               sct::Vocabulary::load(cfg.node_vocab_path),
               {}};
  d.shard = sct::load_shard_checked(shard_path, d.vocab, d.node_vocab);
  return d;
}

sct::CodeModel load_model_checked(const std::string& checkpoint_path,
                                  const LoadedData& data,
                                  sct::CheckpointMeta* meta_out) {
  sct::CheckpointMeta meta;
  sct::CodeModel model = sct::load_checkpoint(checkpoint_path, &meta);
  if (meta.vocab_hash != data.vocab.hash() ||
      meta.node_vocab_hash != data.node_vocab.hash()) {
    throw sct::DataError("checkpoint " + checkpoint_path +
                         " was trained with different vocabularies");
  }
  if (meta.config.k_bins != static_cast<int>(data.shard.header.k)) {
    throw sct::DataError("checkpoint expects k=" +
                         std::to_string(meta.config.k_bins) +
                         " bins but the shard has k=" +
                         std::to_string(data.shard.header.k));
  }
  if (meta_out) *meta_out = meta;
  return model;
}

int cmd_demo(const CommonOpts& opts, int count) {
  sct::PipelineConfig cfg = load_config(opts);
  const std::string out = opts.out.empty() ? cfg.corpus : opts.out;
  if (out.empty()) throw sct::DataError("demo: no output path (--out)");
  ensure_parent_dir(out);
  const std::string lang = opts.lang.empty() ? "minilang" : opts.lang;
  sct::write_demo_corpus(out, count, cfg.seed, lang);
  std::cout << "wrote " << count << " snippets to " << out << "\n";
  return 0;
}

int cmd_preprocess(const CommonOpts& opts, const std::string& in,
                   const std::string& split) {
  sct::PipelineConfig cfg = load_config(opts);
  if (opts.stage == 1) {
    const std::string input = in.empty() ? cfg.corpus : in;
    const std::string output = opts.out.empty() ? cfg.stage1 : opts.out;
    if (input.empty() || output.empty()) {
      throw sct::DataError("preprocess stage 1 needs input and output paths");
    }
    ensure_parent_dir(output);
    if (!cfg.rejects.empty()) {
      ensure_parent_dir(cfg.rejects);
      std::ofstream(cfg.rejects, std::ios::trunc);
    }
    const auto counts = sct::run_stage1(cfg, input, output);
    std::cout << "stage 1: " << counts.accepted << " accepted, "
              << counts.rejected << " rejected\n";
    return 0;
  }
  if (opts.stage == 2) {
    const bool eval_split = split == "eval";
    const std::string input = in.empty() ? cfg.stage1 : in;
    const std::string output =
        !opts.out.empty() ? opts.out
                          : (eval_split ? cfg.eval_shards : cfg.shards);
    if (input.empty() || output.empty()) {
      throw sct::DataError("preprocess stage 2 needs input and output paths");
    }
    ensure_parent_dir(output);
    const auto counts = sct::run_stage2(cfg, input, output, eval_split);
    std::cout << "stage 2 (" << (eval_split ? "eval" : "train")
              << "): " << counts.accepted << " accepted, " << counts.rejected
              << " rejected\n";
    return 0;
  }
  throw sct::DataError("preprocess: --stage must be 1 or 2");
}

int cmd_vocab(const CommonOpts& opts, std::vector<std::string> inputs) {
  sct::PipelineConfig cfg = load_config(opts);
  if (inputs.empty()) {
    if (cfg.stage1.empty()) {
      throw sct::DataError("vocab: no stage-1 inputs given");
    }
    inputs.push_back(cfg.stage1);
  }
  if (cfg.vocab_path.empty() || cfg.node_vocab_path.empty()) {
    throw sct::DataError("vocab: config must set vocab and node_vocab paths");
  }
  ensure_parent_dir(cfg.vocab_path);
  ensure_parent_dir(cfg.node_vocab_path);
  sct::build_vocabs(cfg, inputs);
  const sct::Vocabulary v = sct::Vocabulary::load(cfg.vocab_path);
  const sct::Vocabulary nv = sct::Vocabulary::load(cfg.node_vocab_path);
  std::cout << "subtoken vocab: " << v.size() << " entries, node vocab: "
            << nv.size() << " entries\n";
  return 0;
}

std::vector<std::string> split_list(const std::string& paths) {
  std::vector<std::string> out;
  std::istringstream ss(paths);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const size_t a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    const size_t b = item.find_last_not_of(" \t");
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

int cmd_train(const CommonOpts& opts) {
  sct::PipelineConfig cfg = load_config(opts);
  // `shards` may be a comma-separated list, one shard set per language;
  // snippets are pooled so that sampling is proportional to corpus size.
  const auto shard_paths = split_list(cfg.shards);
  if (shard_paths.empty()) throw sct::DataError("train: no shards configured");
  LoadedData data = load_data(cfg, shard_paths[0]);
  for (size_t i = 1; i < shard_paths.size(); ++i) {
    sct::Shard extra =
        sct::load_shard_checked(shard_paths[i], data.vocab, data.node_vocab);
    if (extra.header.k != data.shard.header.k) {
      throw sct::DataError("train: shard k mismatch between " +
                           shard_paths[0] + " and " + shard_paths[i]);
    }
    for (auto& s : extra.snippets) {
      data.shard.snippets.push_back(std::move(s));
    }
  }
  std::vector<sct::ModelSnippet> val;
  if (!cfg.eval_shards.empty() && fs::exists(cfg.eval_shards)) {
    val = sct::load_shard_checked(cfg.eval_shards, data.vocab, data.node_vocab)
              .snippets;
  }
  sct::TrainConfig tc = cfg.resolve_train();
  if (!opts.lang.empty()) tc.finetune_language = cfg.language_id(opts.lang);

  sct::CheckpointMeta meta;
  meta.vocab_hash = data.vocab.hash();
  meta.node_vocab_hash = data.node_vocab.hash();
  meta.languages = cfg.languages;
  std::unique_ptr<sct::CodeModel> model;
  if (!opts.checkpoint.empty()) {
    model = std::make_unique<sct::CodeModel>(
        load_model_checked(opts.checkpoint, data, &meta));
    meta.languages = cfg.languages;
  } else {
    const sct::ModelConfig mc =
        cfg.resolve_model(data.vocab.size(), data.node_vocab.size());
    if (mc.k_bins != static_cast<int>(data.shard.header.k)) {
      throw sct::DataError("model k_bins does not match shard k");
    }
    model = std::make_unique<sct::CodeModel>(mc, cfg.seed);
  }

  const std::string ckpt_dir =
      cfg.checkpoint_dir.empty() ? "checkpoints" : cfg.checkpoint_dir;
  fs::create_directories(ckpt_dir);
  const std::string log_path =
      (cfg.out_dir.empty() ? ckpt_dir : cfg.out_dir) + "/train_log.jsonl";
  ensure_parent_dir(log_path);
  std::ofstream log(log_path);

  sct::Trainer trainer(*model, tc, data.shard.snippets, val, data.vocab);
  const auto result = trainer.run(&log, [&](long step) {
    meta.step = step;
    sct::save_checkpoint(ckpt_dir + "/ckpt-" + std::to_string(step) + ".bin",
                         *model, meta);
  });
  meta.step = result.steps;
  const std::string final_path =
      opts.out.empty() ? ckpt_dir + "/final.bin" : opts.out;
  ensure_parent_dir(final_path);
  sct::save_checkpoint(final_path, *model, meta);
  std::cout << "trained " << result.steps << " steps, final loss "
            << result.final_loss << ", val micro-F1 " << result.final_val_f1
            << ", checkpoint " << final_path << "\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& shard_path,
                 const std::string& predictions_path) {
  sct::PipelineConfig cfg = load_config(opts);
  std::vector<std::vector<std::string>> p, r;
  bool have_overlap = false;
  double overlap = 0.0;
  if (!predictions_path.empty()) {
    // Score an existing predictions file; no model involved.
    for (const auto& line : sct::read_lines(predictions_path)) {
      const json j = json::parse(line);
      p.push_back(j.at("predicted").get<std::vector<std::string>>());
      r.push_back(j.at("reference").get<std::vector<std::string>>());
    }
  } else {
    if (opts.checkpoint.empty()) {
      throw sct::DataError("evaluate: need --checkpoint or --predictions");
    }
    const std::string sp = shard_path.empty()
                               ? (cfg.eval_shards.empty() ? cfg.shards
                                                          : cfg.eval_shards)
                               : shard_path;
    LoadedData data = load_data(cfg, sp);
    sct::CodeModel model = load_model_checked(opts.checkpoint, data, nullptr);
    const auto preds =
        sct::predict_all(model, data.shard.snippets, data.vocab);
    for (const auto& rec : preds) {
      p.push_back(rec.predicted);
      r.push_back(rec.reference);
    }
    // Body subtokens for the label-overlap diagnostic.
    std::vector<std::vector<std::string>> bodies;
    for (const auto& snip : data.shard.snippets) {
      std::vector<std::string> body;
      for (int i = 0; i < snip.n; ++i) {
        for (int j = 0; j < sct::kSubtokenSlots; ++j) {
          const int id = snip.subtoken_ids[i][j];
          if (id >= data.vocab.n_specials()) body.push_back(data.vocab.name(id));
        }
      }
      for (const auto& [flat, s] : snip.unk_slots) body.push_back(s);
      bodies.push_back(std::move(body));
    }
    overlap = sct::label_overlap(r, bodies);
    have_overlap = true;
  }
  const sct::ScoreReport rep = sct::micro_f1(p, r);
  json out{{"precision", rep.precision},
           {"recall", rep.recall},
           {"f1", rep.f1},
           {"sample_precision", rep.sample_precision},
           {"sample_recall", rep.sample_recall},
           {"sample_f1", rep.sample_f1},
           {"tp", rep.tp},
           {"fp", rep.fp},
           {"fn", rep.fn},
           {"n_snippets", rep.n_snippets}};
  if (have_overlap) out["label_overlap"] = overlap;
  if (!opts.out.empty()) {
    ensure_parent_dir(opts.out);
    std::ofstream f(opts.out);
    f << out.dump(2) << "\n";
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_predict(const CommonOpts& opts, const std::string& shard_path) {
  sct::PipelineConfig cfg = load_config(opts);
  const std::string sp = shard_path.empty()
                             ? (cfg.eval_shards.empty() ? cfg.shards
                                                        : cfg.eval_shards)
                             : shard_path;
  LoadedData data = load_data(cfg, sp);
  sct::CodeModel model = load_model_checked(opts.checkpoint, data, nullptr);
  if (opts.out.empty()) throw sct::DataError("predict: --out required");
  ensure_parent_dir(opts.out);
  std::ofstream f(opts.out);
  for (const auto& rec :
       sct::predict_all(model, data.shard.snippets, data.vocab)) {
    json j{{"id", rec.id},
           {"predicted", rec.predicted},
           {"reference", rec.reference}};
    f << j.dump() << "\n";
  }
  std::cout << "wrote predictions to " << opts.out << "\n";
  return 0;
}

int cmd_embed(const CommonOpts& opts, const std::string& shard_path) {
  sct::PipelineConfig cfg = load_config(opts);
  const std::string sp = shard_path.empty()
                             ? (cfg.eval_shards.empty() ? cfg.shards
                                                        : cfg.eval_shards)
                             : shard_path;
  LoadedData data = load_data(cfg, sp);
  sct::CodeModel model = load_model_checked(opts.checkpoint, data, nullptr);
  if (opts.out.empty()) throw sct::DataError("embed: --out required");
  ensure_parent_dir(opts.out);
  std::ofstream f(opts.out);
  for (const auto& snip : data.shard.snippets) {
    json j{{"id", snip.id}, {"embedding", model.name_embedding(snip)}};
    f << j.dump() << "\n";
  }
  std::cout << "wrote embeddings to " << opts.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint context+structure representations of source code: "
               "preprocessing, training and evaluation for method-name "
               "prediction"};
  app.require_subcommand(1);

  CommonOpts opts;
  int demo_count = 100;
  std::string in_path, split = "train", shard_path, predictions_path;
  std::vector<std::string> vocab_inputs;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "pipeline config file");
    cmd->add_option("--workers", opts.workers, "worker threads");
    cmd->add_option("--seed", opts.seed, "seed override");
    cmd->add_option("--out", opts.out, "output path");
    cmd->add_option("--lang", opts.lang, "language name");
  };

  CLI::App* demo = app.add_subcommand("demo", "write the synthetic demo corpus");
  add_common(demo);
  demo->add_option("--count", demo_count, "snippet count");

  CLI::App* pre = app.add_subcommand("preprocess", "run stage 1 or stage 2");
  add_common(pre);
  pre->add_option("--stage", opts.stage, "1 or 2")->required();
  pre->add_option("--in", in_path, "input path override");
  pre->add_option("--split", split, "train or eval (stage 2 length cap)");

  CLI::App* voc = app.add_subcommand("vocab", "build vocabularies");
  add_common(voc);
  voc->add_option("--in", vocab_inputs, "stage-1 inputs (one per language)");

  CLI::App* train = app.add_subcommand("train", "train the model");
  add_common(train);
  train->add_option("--checkpoint", opts.checkpoint, "resume checkpoint");

  CLI::App* eval = app.add_subcommand(
      "evaluate", "score a checkpoint or an existing predictions file");
  add_common(eval);
  eval->add_option("--checkpoint", opts.checkpoint, "checkpoint");
  eval->add_option("--shard", shard_path, "shard override");
  eval->add_option("--predictions", predictions_path,
                   "score this predictions JSONL instead of running a model");

  CLI::App* predict = app.add_subcommand("predict", "write predictions JSONL");
  add_common(predict);
  predict->add_option("--checkpoint", opts.checkpoint, "checkpoint")->required();
  predict->add_option("--shard", shard_path, "shard override");

  CLI::App* embed = app.add_subcommand("embed", "export name embeddings");
  add_common(embed);
  embed->add_option("--checkpoint", opts.checkpoint, "checkpoint")->required();
  embed->add_option("--shard", shard_path, "shard override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // 0 for --help, 1 for any usage error
  }

  try {
    if (demo->parsed()) return cmd_demo(opts, demo_count);
    if (pre->parsed()) return cmd_preprocess(opts, in_path, split);
    if (voc->parsed()) return cmd_vocab(opts, vocab_inputs);
    if (train->parsed()) return cmd_train(opts);
    if (eval->parsed()) return cmd_evaluate(opts, shard_path, predictions_path);
    if (predict->parsed()) return cmd_predict(opts, shard_path);
    if (embed->parsed()) return cmd_embed(opts, shard_path);
  } catch (const sct::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const sct::SnippetReject& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const sct::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
