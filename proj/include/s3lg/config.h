#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "s3lg/corpus.h"
#include "s3lg/rule_annotator.h"
#include "s3lg/selftrain.h"
#include "s3lg/training.h"
#include "s3lg/transformer.h"

namespace s3lg {

struct RunPaths {
  std::string gold_train;  // .tsv or .jsonl, chosen by extension
  std::string gold_dev;
  std::string gold_test;  // optional
  std::string monolingual;
  std::string lexicon;      // zh
  std::string lemma_table;  // de, optional
  std::string output_dir = "run";

  bool operator==(const RunPaths&) const = default;
};

struct RunConfig {
  RunPaths paths;
  Language language = Language::kDe;
  Tokenizer tokenizer = Tokenizer::kWhitespace;
  std::size_t min_count = 1;

  TransformerConfig model;
  IterationSchedule schedule;
  StageConfig pretrain{Stage::kPretrain, 15, 5, 100, 5e-5, 32};
  StageConfig finetune{Stage::kFinetune, 0, 5, 100, 5e-5, 32};
  RampSchedule ramp{20.0, 0};  // ramp_steps 0: stage-one steps of iteration 1
  bool consistency = true;
  bool consistency_in_finetune = true;
  AugmentOptions augment;

  std::size_t beam_width = 3;
  double length_penalty = 1.0;
  std::size_t decode_max_len = 128;

  AnnotationMode annotation = AnnotationMode::kMixed;
  double max_unk_fraction = 1.0;
  std::vector<int> low_freq_thresholds = kDefaultLowFrequencyThresholds;

  std::uint64_t seed = 1;
  std::vector<std::uint64_t> iteration_seeds;
  bool save_epoch_checkpoints = false;

  bool operator==(const RunConfig&) const = default;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Value ranges, and with `check_paths` that every referenced input exists.
  void validate(bool check_paths = true) const;

  DecodeOptions decode_options() const;
  S3lgOptions s3lg_options() const;
  std::filesystem::path output_dir() const { return paths.output_dir; }
  std::filesystem::path src_vocab_path() const { return output_dir() / "src.vocab"; }
  std::filesystem::path tgt_vocab_path() const { return output_dir() / "tgt.vocab"; }
};

// Corpora, vocabularies and rule annotations a run is built from. The
// vocabularies come from the gold training split.
struct RunInputs {
  ParallelCorpus train;
  ParallelCorpus dev;
  MonolingualCorpus mono;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  EmbeddingLexicon lexicon;
  LemmaTable lemmas;
  std::vector<SyntheticPair> rule_pairs;

  RuleResources rule_resources() const;
  S3lgData data() const;
};

RunInputs load_run_inputs(const RunConfig& config);

}  // namespace s3lg
