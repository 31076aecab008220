#include "s3lg/selftrain.h"

#include <fstream>
#include <random>

#include "s3lg/inference.h"
#include "s3lg/random.h"

namespace s3lg {

std::size_t SyntheticDataset::count(PairSource source) const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [&](const SyntheticPair& p) { return p.source == source; }));
}

std::size_t IterationSchedule::epochs(int k) const {
  if (k < 1) throw std::invalid_argument("iterations are numbered from 1");
  return T1 + T_growth * static_cast<std::size_t>(k - 1);
}

void IterationSchedule::validate() const {
  if (K < 1) throw std::invalid_argument("K must be at least 1");
}

std::string to_string(AnnotationMode mode) {
  switch (mode) {
    case AnnotationMode::kMixed: return "mixed";
    case AnnotationMode::kRuleOnly: return "rule";
    case AnnotationMode::kModelOnly: return "model";
  }
  return "mixed";
}

AnnotationMode annotation_mode_from_string(std::string_view name) {
  if (name == "mixed") return AnnotationMode::kMixed;
  if (name == "rule") return AnnotationMode::kRuleOnly;
  if (name == "model") return AnnotationMode::kModelOnly;
  throw std::invalid_argument("unknown annotation mode: " + std::string(name));
}

Sentence tag_sentence(const Sentence& text, PairSource source) {
  Sentence out;
  out.tokens.reserve(text.tokens.size() + 1);
  out.tokens.emplace_back(source == PairSource::kRule ? special::kTagRuleToken : special::kTagModelToken);
  out.tokens.insert(out.tokens.end(), text.tokens.begin(), text.tokens.end());
  return out;
}

std::vector<SyntheticPair> model_annotate(const Seq2SeqModel& model, const MonolingualCorpus& mono, int iteration) {
  const auto limit = static_cast<std::size_t>(model.config().max_len);
  std::vector<SyntheticPair> out;
  out.reserve(mono.sentences.size());
  for (const auto& sentence : mono.sentences) {
    SyntheticPair pair;
    pair.text = sentence;
    pair.source = PairSource::kModel;
    pair.iteration = iteration;
    Sentence input = sentence;
    if (input.tokens.size() + 1 > limit) {
      input.tokens.resize(limit - 1);
      pair.truncated = true;
    }
    const Decoded d = greedy_decode(model, input, limit - 1);
    pair.gloss = d.gloss;
    if (!d.finished) pair.truncated = true;
    out.push_back(std::move(pair));
  }
  return out;
}

SyntheticDataset mix_synthetic(const std::vector<SyntheticPair>& rule,
                               const std::vector<SyntheticPair>* model_based, std::uint64_t seed, int iteration) {
  if (model_based && model_based->size() != rule.size()) {
    throw std::invalid_argument("rule and model annotations are not aligned: " + std::to_string(rule.size()) +
                                " vs " + std::to_string(model_based->size()));
  }
  SyntheticDataset out;
  out.iteration = iteration;
  out.mix_seed = seed;
  out.pairs.reserve(rule.size());
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const bool take_model = model_based && coin(rng);
    SyntheticPair pair = take_model ? (*model_based)[i] : rule[i];
    pair.text = tag_sentence(pair.text, pair.source);
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

SyntheticDataset tag_all(const std::vector<SyntheticPair>& pairs, std::uint64_t seed, int iteration) {
  SyntheticDataset out;
  out.iteration = iteration;
  out.mix_seed = seed;
  for (const auto& p : pairs) {
    SyntheticPair tagged = p;
    tagged.text = tag_sentence(p.text, p.source);
    out.pairs.push_back(std::move(tagged));
  }
  return out;
}

std::uint64_t S3lgOptions::iteration_seed(int k) const {
  const auto index = static_cast<std::size_t>(k - 1);
  if (index < iteration_seeds.size()) return iteration_seeds[index];
  return derive_seed({seed, static_cast<std::uint64_t>(k)});
}

nlohmann::json IterationRecord::to_json() const {
  return {{"k", k},
          {"T_k", T_k},
          {"checkpoint", checkpoint},
          {"synthetic", synthetic},
          {"mix_seed", mix_seed},
          {"dev_metrics",
           {{"bleu4", dev_bleu4},
            {"best_epoch", best_epoch},
            {"finetune_epochs", finetune_epochs},
            {"history", dev_history},
            {"report", dev_report.to_json()}}},
          {"best_so_far_bleu4", best_so_far_bleu4},
          {"best_iteration", best_iteration},
          {"best_checkpoint", best_checkpoint},
          {"synthetic_counts",
           {{"rule", rule_pairs},
            {"model", model_pairs},
            {"truncated", truncated_pairs},
            {"filtered", filtered_pairs},
            {"skipped_too_long", skipped_too_long}}},
          {"pretrain_steps", pretrain_steps},
          {"ramp", {{"target_w", ramp_target_w}, {"ramp_steps", ramp_steps}}}};
}

IterationRecord IterationRecord::from_json(const nlohmann::json& j) {
  IterationRecord r;
  r.k = j.at("k").get<int>();
  r.T_k = j.at("T_k").get<std::size_t>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  r.synthetic = j.at("synthetic").get<std::string>();
  r.mix_seed = j.at("mix_seed").get<std::uint64_t>();
  const auto& dev = j.at("dev_metrics");
  r.dev_bleu4 = dev.at("bleu4").get<double>();
  r.best_epoch = dev.at("best_epoch").get<std::size_t>();
  r.finetune_epochs = dev.at("finetune_epochs").get<std::size_t>();
  r.dev_history = dev.at("history").get<std::vector<double>>();
  r.dev_report = EvalReport::from_json(dev.at("report"));
  r.best_so_far_bleu4 = j.at("best_so_far_bleu4").get<double>();
  r.best_iteration = j.at("best_iteration").get<int>();
  r.best_checkpoint = j.at("best_checkpoint").get<std::string>();
  const auto& counts = j.at("synthetic_counts");
  r.rule_pairs = counts.at("rule").get<std::size_t>();
  r.model_pairs = counts.at("model").get<std::size_t>();
  r.truncated_pairs = counts.at("truncated").get<std::size_t>();
  r.filtered_pairs = counts.at("filtered").get<std::size_t>();
  r.skipped_too_long = counts.at("skipped_too_long").get<std::size_t>();
  r.pretrain_steps = j.at("pretrain_steps").get<std::size_t>();
  r.ramp_target_w = j.at("ramp").at("target_w").get<double>();
  r.ramp_steps = j.at("ramp").at("ramp_steps").get<std::size_t>();
  return r;
}

std::filesystem::path manifest_path(const std::filesystem::path& output_dir, int k) {
  return output_dir / ("manifest_iter" + std::to_string(k) + ".json");
}

namespace {

void check_data(const S3lgData& data) {
  if (!data.gold || !data.dev || !data.mono || !data.rule_pairs || !data.src_vocab || !data.tgt_vocab) {
    throw std::invalid_argument("incomplete self-training inputs");
  }
  if (data.rule_pairs->size() != data.mono->sentences.size()) {
    throw std::invalid_argument("rule annotations are not aligned with the monolingual corpus");
  }
}

std::size_t first_iteration_synthetic(const S3lgData& data, AnnotationMode mode) {
  return mode == AnnotationMode::kModelOnly ? 0 : data.rule_pairs->size();
}

double unk_fraction(const GlossSequence& g) {
  if (g.tokens.empty()) return 0.0;
  const auto unk = std::count(g.tokens.begin(), g.tokens.end(), std::string(special::kUnkToken));
  return static_cast<double>(unk) / static_cast<double>(g.tokens.size());
}

SyntheticDataset build_synthetic(int k, const S3lgState& state, const S3lgData& data, const S3lgOptions& options,
                                 std::uint64_t mix_seed) {
  const int prev = k - 1;
  switch (options.mode) {
    case AnnotationMode::kRuleOnly:
      return tag_all(*data.rule_pairs, mix_seed, prev);
    case AnnotationMode::kModelOnly:
      if (k == 1) return SyntheticDataset{{}, prev, mix_seed};
      return tag_all(model_annotate(*state.best, *data.mono, prev), mix_seed, prev);
    case AnnotationMode::kMixed:
      break;
  }
  if (k == 1) return mix_synthetic(*data.rule_pairs, nullptr, mix_seed, prev);
  const auto model_pairs = model_annotate(*state.best, *data.mono, prev);
  return mix_synthetic(*data.rule_pairs, &model_pairs, mix_seed, prev);
}

EvalReport dev_report(const Seq2SeqModel& model, const S3lgData& data, const S3lgOptions& options) {
  std::vector<Sentence> inputs;
  std::vector<GlossSequence> refs;
  for (const auto& p : data.dev->pairs) {
    inputs.push_back(p.text);
    refs.push_back(p.gloss);
  }
  const FrequencyMap counts = count_tokens(*data.gold, CorpusSide::kGloss);
  return evaluate(decode_corpus(model, inputs, options.train.dev_decode), refs, &counts,
                  options.low_freq_thresholds);
}

TrainOptions iteration_train_options(int k, std::uint64_t seed, const RampSchedule& ramp, const S3lgOptions& options,
                                     std::ofstream* log) {
  TrainOptions train = options.train;
  train.iteration = k;
  train.seed = seed;
  train.ramp = ramp;
  if (log) {
    auto user = options.train.on_step;
    train.on_step = [log, user](const StepRecord& r) {
      *log << r.to_json().dump() << '\n';
      if (user) user(r);
    };
  }
  return train;
}

}  // namespace

RampSchedule resolve_ramp(const S3lgOptions& options, const S3lgData& data) {
  RampSchedule ramp = options.train.ramp;
  if (ramp.ramp_steps == 0) {
    const std::size_t examples = data.gold->pairs.size() + first_iteration_synthetic(data, options.mode);
    ramp.ramp_steps = std::max<std::size_t>(
        1, options.schedule.epochs(1) * steps_per_epoch(examples, options.pretrain.batch_size));
  }
  return ramp;
}

IterationRecord run_iteration(int k, S3lgState& state, const S3lgData& data, const S3lgOptions& options) {
  check_data(data);
  if (k < 1) throw std::invalid_argument("iterations are numbered from 1");
  if (k > 1 && options.mode != AnnotationMode::kRuleOnly && !state.best) {
    throw std::invalid_argument("iteration " + std::to_string(k) + " needs a prior best checkpoint");
  }
  const std::uint64_t seed = options.iteration_seed(k);
  const std::uint64_t mix_seed = derive_seed({seed, 0x4D4958});
  const bool persist = !options.output_dir.empty();
  if (persist) std::filesystem::create_directories(options.output_dir);

  IterationRecord record;
  record.k = k;
  record.T_k = options.schedule.epochs(k);
  record.mix_seed = mix_seed;

  SyntheticDataset synthetic = build_synthetic(k, state, data, options, mix_seed);
  for (const auto& p : synthetic.pairs) record.truncated_pairs += p.truncated ? 1 : 0;
  if (options.max_unk_fraction < 1.0) {
    std::vector<SyntheticPair> kept;
    for (auto& p : synthetic.pairs) {
      if (unk_fraction(p.gloss) > options.max_unk_fraction) {
        ++record.filtered_pairs;
      } else {
        kept.push_back(std::move(p));
      }
    }
    synthetic.pairs = std::move(kept);
  }
  record.rule_pairs = synthetic.count(PairSource::kRule);
  record.model_pairs = synthetic.count(PairSource::kModel);
  if (persist) {
    record.synthetic = "synthetic_iter" + std::to_string(k) + ".jsonl";
    write_synthetic_jsonl(options.output_dir / record.synthetic, synthetic.pairs);
  }

  const RampSchedule ramp = resolve_ramp(options, data);
  record.ramp_target_w = ramp.target_w;
  record.ramp_steps = ramp.ramp_steps;

  std::ofstream log;
  if (persist) log.open(options.output_dir / "train_log.jsonl", std::ios::app);
  TrainOptions train = iteration_train_options(k, derive_seed({seed, 2}), ramp, options, persist ? &log : nullptr);
  if (persist && !train.checkpoint_dir.empty() && train.checkpoint_dir.is_relative()) {
    train.checkpoint_dir = options.output_dir / train.checkpoint_dir;
  }

  Seq2SeqModel model = init_model(options.model, *data.src_vocab, *data.tgt_vocab, derive_seed({seed, 1}));
  Trainer trainer(model, train);
  StageConfig pre = options.pretrain;
  pre.stage = Stage::kPretrain;
  pre.epochs = record.T_k;
  trainer.pretrain(*data.gold, synthetic.pairs, pre);
  record.pretrain_steps = trainer.global_step();
  StageConfig fine = options.finetune;
  fine.stage = Stage::kFinetune;
  const auto result = trainer.finetune(*data.gold, *data.dev, fine);
  record.skipped_too_long = trainer.skipped_too_long();
  record.dev_bleu4 = result.best_bleu4;
  record.best_epoch = result.best_epoch;
  record.finetune_epochs = result.epochs_run;
  record.dev_history = result.dev_history;
  record.dev_report = dev_report(model, data, options);

  if (persist) {
    record.checkpoint = "iter" + std::to_string(k) + ".ckpt";
    save_checkpoint(model, options.output_dir / record.checkpoint);
  }
  if (!state.best || record.dev_bleu4 > state.best_bleu4) {
    state.best = std::move(model);
    state.best_bleu4 = record.dev_bleu4;
    state.best_iteration = k;
  }
  record.best_so_far_bleu4 = state.best_bleu4;
  record.best_iteration = state.best_iteration;
  if (persist) {
    record.best_checkpoint = "iter" + std::to_string(state.best_iteration) + ".ckpt";
    std::ofstream(manifest_path(options.output_dir, k)) << record.to_json().dump(2) << '\n';
  }
  state.history.push_back(record);
  return record;
}

S3lgState run_s3lg(const S3lgData& data, const S3lgOptions& options) {
  check_data(data);
  options.schedule.validate();
  S3lgState state;
  int k = 1;
  if (!options.output_dir.empty()) {
    while (k <= options.schedule.K && std::filesystem::exists(manifest_path(options.output_dir, k))) {
      std::ifstream in(manifest_path(options.output_dir, k));
      state.history.push_back(IterationRecord::from_json(nlohmann::json::parse(in)));
      ++k;
    }
    if (!state.history.empty()) {
      const auto& last = state.history.back();
      state.best = load_checkpoint(options.output_dir / last.best_checkpoint);
      state.best_bleu4 = last.best_so_far_bleu4;
      state.best_iteration = last.best_iteration;
    }
  }
  for (; k <= options.schedule.K; ++k) run_iteration(k, state, data, options);
  if (!options.output_dir.empty() && state.best) save_checkpoint(*state.best, options.output_dir / "best.ckpt");
  return state;
}

IterationRecord run_baseline(const S3lgData& data, const S3lgOptions& options, Seq2SeqModel* out) {
  check_data(data);
  const std::uint64_t seed = options.iteration_seed(1);
  IterationRecord record;
  RampSchedule ramp = options.train.ramp;
  if (ramp.ramp_steps == 0) {
    ramp.ramp_steps = std::max<std::size_t>(
        1, options.schedule.epochs(1) * steps_per_epoch(data.gold->pairs.size(), options.finetune.batch_size));
  }
  record.ramp_target_w = ramp.target_w;
  record.ramp_steps = ramp.ramp_steps;
  TrainOptions train = iteration_train_options(0, derive_seed({seed, 2}), ramp, options, nullptr);
  train.checkpoint_dir.clear();
  Seq2SeqModel model = init_model(options.model, *data.src_vocab, *data.tgt_vocab, derive_seed({seed, 1}));
  Trainer trainer(model, train);
  StageConfig fine = options.finetune;
  fine.stage = Stage::kFinetune;
  const auto result = trainer.finetune(*data.gold, *data.dev, fine);
  record.dev_bleu4 = result.best_bleu4;
  record.best_epoch = result.best_epoch;
  record.finetune_epochs = result.epochs_run;
  record.dev_history = result.dev_history;
  record.dev_report = dev_report(model, data, options);
  record.best_so_far_bleu4 = record.dev_bleu4;
  if (out) *out = std::move(model);
  return record;
}

}  // namespace s3lg
