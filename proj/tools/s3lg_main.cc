#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "s3lg/config.h"
#include "s3lg/corpus.h"
#include "s3lg/inference.h"
#include "s3lg/metrics.h"
#include "s3lg/model.h"
#include "s3lg/rule_annotator.h"
#include "s3lg/selftrain.h"
#include "s3lg/toy_language.h"
#include "s3lg/training.h"

using namespace s3lg;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<GlossSequence> read_gloss_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::vector<GlossSequence> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(GlossSequence{split_whitespace(line)});
  return out;
}

int cmd_build_vocab(const RunConfig& config) {
  config.validate(true);
  const auto train = load_parallel_corpus(config.paths.gold_train, config.tokenizer);
  const auto src = build_vocabulary(train, CorpusSide::kText, config.min_count);
  const auto tgt = build_vocabulary(train, CorpusSide::kGloss, config.min_count);
  std::filesystem::create_directories(config.output_dir());
  src.save(config.src_vocab_path());
  tgt.save(config.tgt_vocab_path());
  emit({{"src_vocab", config.src_vocab_path().string()},
        {"src_size", src.size()},
        {"tgt_vocab", config.tgt_vocab_path().string()},
        {"tgt_size", tgt.size()}});
  return 0;
}

int cmd_annotate(const RunConfig& config, const std::string& mode, const std::string& checkpoint,
                 const std::string& output, int iteration) {
  if (mode != "rule" && mode != "model") throw UsageError("--mode must be rule or model");
  if (mode == "model" && checkpoint.empty()) throw UsageError("--mode model requires --checkpoint");
  std::vector<SyntheticPair> pairs;
  if (mode == "rule") {
    const RunInputs in = load_run_inputs(config);
    pairs = in.rule_pairs;
  } else {
    config.validate(true);
    const auto mono = load_monolingual_corpus(config.paths.monolingual, config.tokenizer);
    pairs = model_annotate(load_checkpoint(checkpoint), mono, iteration);
  }
  const std::filesystem::path out =
      output.empty() ? config.output_dir() / (mode + "_synthetic.jsonl") : std::filesystem::path(output);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  write_synthetic_jsonl(out, pairs);
  emit({{"output", out.string()}, {"pairs", pairs.size()}, {"source", mode}});
  return 0;
}

int cmd_train(const RunConfig& config, const std::string& synthetic_path, std::optional<std::size_t> epochs,
              const std::string& output) {
  const RunInputs in = load_run_inputs(config);
  const S3lgOptions options = config.s3lg_options();
  std::vector<SyntheticPair> synthetic;
  if (!synthetic_path.empty()) {
    for (const auto& p : read_synthetic_jsonl(synthetic_path)) {
      SyntheticPair tagged = p;
      const bool has_tag = !p.text.tokens.empty() && (p.text.tokens[0] == special::kTagRuleToken ||
                                                      p.text.tokens[0] == special::kTagModelToken);
      if (!has_tag) tagged.text = tag_sentence(p.text, p.source);
      synthetic.push_back(std::move(tagged));
    }
  }
  std::filesystem::create_directories(config.output_dir());
  std::ofstream log(config.output_dir() / "train_log.jsonl", std::ios::app);
  TrainOptions train = options.train;
  train.seed = options.iteration_seed(1);
  train.iteration = 1;
  RampSchedule ramp = train.ramp;
  StageConfig pre = options.pretrain;
  pre.epochs = epochs.value_or(options.schedule.epochs(1));
  if (ramp.ramp_steps == 0) {
    ramp.ramp_steps = std::max<std::size_t>(
        1, pre.epochs * steps_per_epoch(in.train.size() + synthetic.size(), pre.batch_size));
  }
  train.ramp = ramp;
  train.on_step = [&log](const StepRecord& r) { log << r.to_json().dump() << '\n'; };
  if (config.save_epoch_checkpoints) train.checkpoint_dir = config.output_dir() / "epochs";

  Seq2SeqModel model = init_model(config.model, in.src_vocab, in.tgt_vocab, options.iteration_seed(1));
  Trainer trainer(model, train);
  if (pre.epochs > 0) trainer.pretrain(in.train, synthetic, pre);
  const auto result = trainer.finetune(in.train, in.dev, options.finetune);
  const std::filesystem::path out = output.empty() ? config.output_dir() / "model.ckpt" : std::filesystem::path(output);
  save_checkpoint(model, out);
  emit({{"checkpoint", out.string()},
        {"pretrain_epochs", pre.epochs},
        {"synthetic_pairs", synthetic.size()},
        {"dev_bleu4", result.best_bleu4},
        {"best_epoch", result.best_epoch},
        {"finetune_epochs", result.epochs_run},
        {"steps", trainer.global_step()}});
  return 0;
}

int cmd_iterate(const RunConfig& config) {
  const RunInputs in = load_run_inputs(config);
  std::filesystem::create_directories(config.output_dir());
  config.save(config.output_dir() / "config.json");
  const S3lgState state = run_s3lg(in.data(), config.s3lg_options());
  json iterations = json::array();
  for (const auto& r : state.history) {
    iterations.push_back({{"k", r.k},
                          {"T_k", r.T_k},
                          {"dev_bleu4", r.dev_bleu4},
                          {"best_so_far_bleu4", r.best_so_far_bleu4},
                          {"manifest", manifest_path(config.output_dir(), r.k).string()}});
  }
  emit({{"iterations", iterations},
        {"best_iteration", state.best_iteration},
        {"best_dev_bleu4", state.best_bleu4},
        {"checkpoint", (config.output_dir() / "best.ckpt").string()}});
  return 0;
}

int cmd_evaluate(const RunConfig* config, const std::string& checkpoint, const std::string& split,
                 const std::string& hyp_path, const std::string& ref_path) {
  std::vector<GlossSequence> hyps, refs;
  const FrequencyMap* counts = nullptr;
  FrequencyMap train_counts;
  if (!hyp_path.empty() || !ref_path.empty()) {
    if (hyp_path.empty() || ref_path.empty()) throw UsageError("--hyp and --ref go together");
    hyps = read_gloss_lines(hyp_path);
    refs = read_gloss_lines(ref_path);
  } else {
    if (!config) throw UsageError("evaluate needs --config or --hyp/--ref");
    if (checkpoint.empty()) throw UsageError("evaluate needs --checkpoint");
    if (!std::filesystem::exists(checkpoint)) throw CheckpointError("checkpoint does not exist: " + checkpoint);
    std::string path;
    if (split == "dev") path = config->paths.gold_dev;
    else if (split == "test") path = config->paths.gold_test;
    else if (split == "train") path = config->paths.gold_train;
    else throw UsageError("--split must be train, dev or test");
    if (path.empty() || !std::filesystem::exists(path)) throw CorpusError("split file missing: '" + path + "'");
    const auto corpus = load_parallel_corpus(path, config->tokenizer);
    const Seq2SeqModel model = load_checkpoint(checkpoint);
    std::vector<Sentence> inputs;
    for (const auto& p : corpus.pairs) {
      inputs.push_back(p.text);
      refs.push_back(p.gloss);
    }
    hyps = decode_corpus(model, inputs, config->decode_options());
    if (std::filesystem::exists(config->paths.gold_train)) {
      train_counts = count_tokens(load_parallel_corpus(config->paths.gold_train, config->tokenizer), CorpusSide::kGloss);
      counts = &train_counts;
    }
  }
  const auto thresholds = config ? config->low_freq_thresholds : kDefaultLowFrequencyThresholds;
  emit(evaluate(hyps, refs, counts, thresholds).to_json());
  return 0;
}

int cmd_stats(const RunConfig& config) {
  config.validate(true);
  const auto train = load_parallel_corpus(config.paths.gold_train, config.tokenizer);
  const auto src = build_vocabulary(train, CorpusSide::kText, config.min_count);
  const auto tgt = build_vocabulary(train, CorpusSide::kGloss, config.min_count);
  json out;
  out["train"] = corpus_stats(train, src, &tgt).to_json();
  out["dev"] = corpus_stats(load_parallel_corpus(config.paths.gold_dev, config.tokenizer), src, &tgt).to_json();
  if (!config.paths.gold_test.empty()) {
    out["test"] = corpus_stats(load_parallel_corpus(config.paths.gold_test, config.tokenizer), src, &tgt).to_json();
  }
  out["monolingual"] =
      corpus_stats(load_monolingual_corpus(config.paths.monolingual, config.tokenizer), src).to_json();
  emit(out);
  return 0;
}

int cmd_decode(const std::string& checkpoint, const std::string& input, std::size_t width, double penalty) {
  const Seq2SeqModel model = load_checkpoint(checkpoint);
  const auto mono = load_monolingual_corpus(input);
  const DecodeOptions options{width, penalty, static_cast<std::size_t>(model.config().max_len)};
  for (const auto& g : decode_corpus(model, mono.sentences, options)) std::cout << join(g.tokens) << '\n';
  return 0;
}

int cmd_toy_data(const std::string& dir, std::uint64_t seed) {
  ToyOptions options;
  options.seed = seed;
  const ToyData data = generate_toy_data(options);
  write_toy_data(data, dir);
  const RunConfig config = toy_run_config(dir, std::filesystem::path(dir) / "run");
  config.save(std::filesystem::path(dir) / "config.json");
  emit({{"dir", dir},
        {"train", data.train.size()},
        {"dev", data.dev.size()},
        {"test", data.test.size()},
        {"monolingual", data.monolingual.size()},
        {"config", (std::filesystem::path(dir) / "config.json").string()}});
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const CorpusError*>(&e)) return "corpus";
  if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint";
  if (dynamic_cast<const TrainingError*>(&e)) return "training";
  if (dynamic_cast<const MetricError*>(&e)) return "metric";
  return "runtime";
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised text-to-gloss translation"};
  app.require_subcommand(1);
  std::string config_path;

  auto* build_vocab = app.add_subcommand("build-vocab", "Write source and target vocabularies");
  build_vocab->add_option("-c,--config", config_path, "Run configuration")->required();

  std::string mode, checkpoint, output;
  int iteration = 0;
  auto* annotate = app.add_subcommand("annotate", "Write rule- or model-based synthetic pairs as JSONL");
  annotate->add_option("-c,--config", config_path)->required();
  annotate->add_option("--mode", mode, "rule or model")->required();
  annotate->add_option("--checkpoint", checkpoint, "Model checkpoint for --mode model");
  annotate->add_option("-o,--output", output, "Output JSONL");
  annotate->add_option("--iteration", iteration, "Iteration recorded in the pairs");

  std::string synthetic;
  std::optional<std::size_t> epochs;
  auto* train = app.add_subcommand("train", "Two-stage training of one model");
  train->add_option("-c,--config", config_path)->required();
  train->add_option("--synthetic", synthetic, "Synthetic JSONL for stage one");
  train->add_option("--epochs", epochs, "Stage-one epochs (default T1)");
  train->add_option("-o,--output", output, "Output checkpoint");

  auto* iterate = app.add_subcommand("iterate", "Run the full self-training loop");
  iterate->add_option("-c,--config", config_path)->required();

  std::string split = "dev", hyp, ref;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a checkpoint on a split, or hypothesis/reference files");
  evaluate_cmd->add_option("-c,--config", config_path);
  evaluate_cmd->add_option("--checkpoint", checkpoint);
  evaluate_cmd->add_option("--split", split, "train, dev or test");
  evaluate_cmd->add_option("--hyp", hyp, "Hypothesis glosses, one per line");
  evaluate_cmd->add_option("--ref", ref, "Reference glosses, one per line");

  auto* stats = app.add_subcommand("stats", "Corpus statistics against the training vocabularies");
  stats->add_option("-c,--config", config_path)->required();

  std::string input;
  std::size_t width = 3;
  double penalty = 1.0;
  auto* decode = app.add_subcommand("decode", "Translate one sentence per line");
  decode->add_option("--checkpoint", checkpoint)->required();
  decode->add_option("-i,--input", input)->required();
  decode->add_option("--width", width);
  decode->add_option("--length-penalty", penalty);

  std::string toy_dir;
  std::uint64_t toy_seed = 7;
  auto* toy = app.add_subcommand("toy-data", "Generate the synthetic toy language and a config for it");
  toy->add_option("-o,--output", toy_dir)->required();
  toy->add_option("--seed", toy_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    std::optional<RunConfig> config;
    if (!config_path.empty()) config = RunConfig::load(config_path);
    if (*build_vocab) return cmd_build_vocab(*config);
    if (*annotate) return cmd_annotate(*config, mode, checkpoint, output, iteration);
    if (*train) return cmd_train(*config, synthetic, epochs, output);
    if (*iterate) return cmd_iterate(*config);
    if (*evaluate_cmd) return cmd_evaluate(config ? &*config : nullptr, checkpoint, split, hyp, ref);
    if (*stats) return cmd_stats(*config);
    if (*decode) return cmd_decode(checkpoint, input, width, penalty);
    if (*toy) return cmd_toy_data(toy_dir, toy_seed);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const std::exception& e) {
    return fail(error_kind(e), e.what(), 1);
  }
  return 0;
}
