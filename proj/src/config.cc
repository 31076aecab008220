#include "s3lg/config.h"

#include <fstream>
#include <set>

namespace s3lg {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& target) {
  if (j.contains(key)) target = j.at(key).get<V>();
}

const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  return j.contains(key) ? j.at(key) : empty;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  return {
      {"paths",
       {{"gold_train", paths.gold_train},
        {"gold_dev", paths.gold_dev},
        {"gold_test", paths.gold_test},
        {"monolingual", paths.monolingual},
        {"lexicon", paths.lexicon},
        {"lemma_table", paths.lemma_table},
        {"output_dir", paths.output_dir}}},
      {"language", to_string(language)},
      {"tokenizer", to_string(tokenizer)},
      {"min_count", min_count},
      {"model", model.to_json()},
      {"schedule", {{"K", schedule.K}, {"T1", schedule.T1}, {"T_growth", schedule.T_growth}}},
      {"pretrain", {{"learning_rate", pretrain.learning_rate}, {"batch_size", pretrain.batch_size}}},
      {"finetune",
       {{"learning_rate", finetune.learning_rate},
        {"batch_size", finetune.batch_size},
        {"patience", finetune.patience},
        {"max_epochs", finetune.max_epochs}}},
      {"ramp", {{"target_w", ramp.target_w}, {"ramp_steps", ramp.ramp_steps}}},
      {"consistency", {{"enabled", consistency}, {"in_finetune", consistency_in_finetune}}},
      {"augment", {{"enabled", augment.enabled}, {"p_drop", augment.p_drop}, {"window", augment.window}}},
      {"decode", {{"beam_width", beam_width}, {"length_penalty", length_penalty}, {"max_len", decode_max_len}}},
      {"annotation", {{"mode", to_string(annotation)}, {"max_unk_fraction", max_unk_fraction}}},
      {"low_freq_thresholds", low_freq_thresholds},
      {"seeds", {{"seed", seed}, {"iterations", iteration_seeds}}},
      {"save_epoch_checkpoints", save_epoch_checkpoints},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  check_keys(j,
             {"paths", "language", "tokenizer", "min_count", "model", "schedule", "pretrain", "finetune", "ramp",
              "consistency", "augment", "decode", "annotation", "low_freq_thresholds", "seeds",
              "save_epoch_checkpoints"},
             "config");
  RunConfig c;
  try {
    const auto& p = section(j, "paths");
    check_keys(p, {"gold_train", "gold_dev", "gold_test", "monolingual", "lexicon", "lemma_table", "output_dir"},
               "paths");
    read(p, "gold_train", c.paths.gold_train);
    read(p, "gold_dev", c.paths.gold_dev);
    read(p, "gold_test", c.paths.gold_test);
    read(p, "monolingual", c.paths.monolingual);
    read(p, "lexicon", c.paths.lexicon);
    read(p, "lemma_table", c.paths.lemma_table);
    read(p, "output_dir", c.paths.output_dir);
    if (j.contains("language")) c.language = language_from_string(j.at("language").get<std::string>());
    if (j.contains("tokenizer")) c.tokenizer = tokenizer_from_string(j.at("tokenizer").get<std::string>());
    read(j, "min_count", c.min_count);
    if (j.contains("model")) {
      nlohmann::json merged = c.model.to_json();
      check_keys(j.at("model"), [&] {
        std::set<std::string> keys;
        for (const auto& [k, v] : merged.items()) keys.insert(k);
        return keys;
      }(), "model");
      merged.update(j.at("model"));
      c.model = TransformerConfig::from_json(merged);
    }
    const auto& s = section(j, "schedule");
    check_keys(s, {"K", "T1", "T_growth"}, "schedule");
    read(s, "K", c.schedule.K);
    read(s, "T1", c.schedule.T1);
    read(s, "T_growth", c.schedule.T_growth);
    const auto& pre = section(j, "pretrain");
    check_keys(pre, {"learning_rate", "batch_size"}, "pretrain");
    read(pre, "learning_rate", c.pretrain.learning_rate);
    read(pre, "batch_size", c.pretrain.batch_size);
    const auto& fine = section(j, "finetune");
    check_keys(fine, {"learning_rate", "batch_size", "patience", "max_epochs"}, "finetune");
    read(fine, "learning_rate", c.finetune.learning_rate);
    read(fine, "batch_size", c.finetune.batch_size);
    read(fine, "patience", c.finetune.patience);
    read(fine, "max_epochs", c.finetune.max_epochs);
    const auto& r = section(j, "ramp");
    check_keys(r, {"target_w", "ramp_steps"}, "ramp");
    read(r, "target_w", c.ramp.target_w);
    read(r, "ramp_steps", c.ramp.ramp_steps);
    const auto& cons = section(j, "consistency");
    check_keys(cons, {"enabled", "in_finetune"}, "consistency");
    read(cons, "enabled", c.consistency);
    read(cons, "in_finetune", c.consistency_in_finetune);
    const auto& aug = section(j, "augment");
    check_keys(aug, {"enabled", "p_drop", "window"}, "augment");
    read(aug, "enabled", c.augment.enabled);
    read(aug, "p_drop", c.augment.p_drop);
    read(aug, "window", c.augment.window);
    const auto& dec = section(j, "decode");
    check_keys(dec, {"beam_width", "length_penalty", "max_len"}, "decode");
    read(dec, "beam_width", c.beam_width);
    read(dec, "length_penalty", c.length_penalty);
    read(dec, "max_len", c.decode_max_len);
    const auto& ann = section(j, "annotation");
    check_keys(ann, {"mode", "max_unk_fraction"}, "annotation");
    if (ann.contains("mode")) c.annotation = annotation_mode_from_string(ann.at("mode").get<std::string>());
    read(ann, "max_unk_fraction", c.max_unk_fraction);
    read(j, "low_freq_thresholds", c.low_freq_thresholds);
    const auto& seeds = section(j, "seeds");
    check_keys(seeds, {"seed", "iterations"}, "seeds");
    read(seeds, "seed", c.seed);
    read(seeds, "iterations", c.iteration_seeds);
    read(j, "save_epoch_checkpoints", c.save_epoch_checkpoints);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate(false);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json().dump(2) << '\n';
}

void RunConfig::validate(bool check_paths) const {
  model.validate();
  try {
    schedule.validate();
    pretrain.validate();
    finetune.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  if (ramp.target_w < 0.0) throw ConfigError("ramp.target_w must be non-negative");
  if (augment.p_drop < 0.0 || augment.p_drop >= 1.0) throw ConfigError("augment.p_drop must lie in [0, 1)");
  if (augment.window < 0) throw ConfigError("augment.window must be non-negative");
  if (beam_width < 1) throw ConfigError("decode.beam_width must be positive");
  if (length_penalty < 0.0) throw ConfigError("decode.length_penalty must be non-negative");
  if (decode_max_len < 1) throw ConfigError("decode.max_len must be positive");
  if (max_unk_fraction < 0.0 || max_unk_fraction > 1.0) {
    throw ConfigError("annotation.max_unk_fraction must lie in [0, 1]");
  }
  if (!check_paths) return;
  auto require = [](const std::string& path, const char* name) {
    if (path.empty()) throw ConfigError(std::string("paths.") + name + " is required");
    if (!std::filesystem::exists(path)) throw ConfigError(std::string("paths.") + name + " does not exist: " + path);
  };
  auto optional = [](const std::string& path, const char* name) {
    if (!path.empty() && !std::filesystem::exists(path)) {
      throw ConfigError(std::string("paths.") + name + " does not exist: " + path);
    }
  };
  require(paths.gold_train, "gold_train");
  require(paths.gold_dev, "gold_dev");
  require(paths.monolingual, "monolingual");
  optional(paths.gold_test, "gold_test");
  if (language == Language::kZh) {
    require(paths.lexicon, "lexicon");
  } else {
    optional(paths.lemma_table, "lemma_table");
  }
  if (paths.output_dir.empty()) throw ConfigError("paths.output_dir is required");
}

DecodeOptions RunConfig::decode_options() const { return {beam_width, length_penalty, decode_max_len}; }

S3lgOptions RunConfig::s3lg_options() const {
  S3lgOptions o;
  o.schedule = schedule;
  o.model = model;
  o.pretrain = pretrain;
  o.finetune = finetune;
  o.train.consistency = consistency;
  o.train.consistency_in_finetune = consistency_in_finetune;
  o.train.ramp = ramp;
  o.train.augment = augment;
  o.train.dev_decode = decode_options();
  if (save_epoch_checkpoints) o.train.checkpoint_dir = "epochs";
  o.mode = annotation;
  o.seed = seed;
  o.iteration_seeds = iteration_seeds;
  o.max_unk_fraction = max_unk_fraction;
  o.output_dir = paths.output_dir;
  o.low_freq_thresholds = low_freq_thresholds;
  return o;
}

RuleResources RunInputs::rule_resources() const { return {&src_vocab, &tgt_vocab, &lexicon, &lemmas}; }

S3lgData RunInputs::data() const { return {&train, &dev, &mono, &rule_pairs, &src_vocab, &tgt_vocab}; }

RunInputs load_run_inputs(const RunConfig& config) {
  config.validate(true);
  RunInputs in;
  in.train = load_parallel_corpus(config.paths.gold_train, config.tokenizer);
  in.dev = load_parallel_corpus(config.paths.gold_dev, config.tokenizer);
  in.mono = load_monolingual_corpus(config.paths.monolingual, config.tokenizer);
  in.src_vocab = build_vocabulary(in.train, CorpusSide::kText, config.min_count);
  in.tgt_vocab = build_vocabulary(in.train, CorpusSide::kGloss, config.min_count);
  if (config.language == Language::kZh) in.lexicon = EmbeddingLexicon::load(config.paths.lexicon);
  if (!config.paths.lemma_table.empty()) in.lemmas = LemmaTable::load(config.paths.lemma_table);
  in.rule_pairs = annotate_corpus_rule(in.mono, config.language, in.rule_resources());
  return in;
}

}  // namespace s3lg
