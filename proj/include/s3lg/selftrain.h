#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "s3lg/corpus.h"
#include "s3lg/metrics.h"
#include "s3lg/model.h"
#include "s3lg/rule_annotator.h"
#include "s3lg/training.h"

namespace s3lg {

struct SyntheticDataset {
  std::vector<SyntheticPair> pairs;
  int iteration = 0;  // k - 1
  std::uint64_t mix_seed = 0;

  std::size_t count(PairSource source) const;
};

struct IterationSchedule {
  int K = 4;
  std::size_t T1 = 15;
  std::size_t T_growth = 10;

  // Stage-one epochs of iteration k (1-based).
  std::size_t epochs(int k) const;
  void validate() const;
  bool operator==(const IterationSchedule&) const = default;
};

enum class AnnotationMode { kMixed, kRuleOnly, kModelOnly };

std::string to_string(AnnotationMode mode);
AnnotationMode annotation_mode_from_string(std::string_view name);

// Prepends the tag that matches `source`.
Sentence tag_sentence(const Sentence& text, PairSource source);

// Greedy decode of every sentence with dropout off. Decodes that reach the
// length limit, and sources too long to encode (decoded from their prefix),
// are flagged as truncated.
std::vector<SyntheticPair> model_annotate(const Seq2SeqModel& model, const MonolingualCorpus& mono, int iteration);

// Chooses the rule or model pair per index by a seeded fair coin and tags the
// chosen source sentence. Without model pairs every rule pair is used.
SyntheticDataset mix_synthetic(const std::vector<SyntheticPair>& rule,
                               const std::vector<SyntheticPair>* model_based, std::uint64_t seed,
                               int iteration = 0);

// Tags every pair with its own source; no mixing.
SyntheticDataset tag_all(const std::vector<SyntheticPair>& pairs, std::uint64_t seed, int iteration);

struct S3lgOptions {
  IterationSchedule schedule;
  TransformerConfig model;
  StageConfig pretrain{Stage::kPretrain};
  StageConfig finetune{Stage::kFinetune};
  TrainOptions train;  // ramp_steps == 0 resolves to the stage-one steps of iteration 1
  AnnotationMode mode = AnnotationMode::kMixed;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> iteration_seeds;  // overrides the derived per-iteration seed when present
  double max_unk_fraction = 1.0;               // synthetic pairs with a larger <UNK> share are left out
  std::filesystem::path output_dir;            // no artifacts when empty
  std::vector<int> low_freq_thresholds = kDefaultLowFrequencyThresholds;

  std::uint64_t iteration_seed(int k) const;
};

struct IterationRecord {
  int k = 0;
  std::size_t T_k = 0;
  std::uint64_t mix_seed = 0;
  std::size_t rule_pairs = 0;
  std::size_t model_pairs = 0;
  std::size_t truncated_pairs = 0;
  std::size_t filtered_pairs = 0;
  std::size_t skipped_too_long = 0;
  std::size_t pretrain_steps = 0;
  double ramp_target_w = 0.0;
  std::size_t ramp_steps = 0;
  double dev_bleu4 = 0.0;
  std::size_t best_epoch = 0;
  std::size_t finetune_epochs = 0;
  std::vector<double> dev_history;
  EvalReport dev_report;
  double best_so_far_bleu4 = 0.0;
  int best_iteration = 0;
  std::string checkpoint;       // relative to the output directory
  std::string synthetic;        // relative to the output directory
  std::string best_checkpoint;  // relative to the output directory

  nlohmann::json to_json() const;
  static IterationRecord from_json(const nlohmann::json& j);
};

struct S3lgState {
  std::optional<Seq2SeqModel> best;
  double best_bleu4 = 0.0;
  int best_iteration = 0;
  std::vector<IterationRecord> history;
};

struct S3lgData {
  const ParallelCorpus* gold = nullptr;
  const ParallelCorpus* dev = nullptr;
  const MonolingualCorpus* mono = nullptr;
  const std::vector<SyntheticPair>* rule_pairs = nullptr;  // index-aligned with mono
  const Vocabulary* src_vocab = nullptr;
  const Vocabulary* tgt_vocab = nullptr;
};

// Consistency weight ramp with ramp_steps resolved for the given data.
RampSchedule resolve_ramp(const S3lgOptions& options, const S3lgData& data);

// Fresh model, stage one for T_k epochs, stage two, running-best update.
IterationRecord run_iteration(int k, S3lgState& state, const S3lgData& data, const S3lgOptions& options);

// Iterations 1..K. With an output directory, iterations whose manifest
// already exists are loaded instead of rerun.
S3lgState run_s3lg(const S3lgData& data, const S3lgOptions& options);

// Supervised-only reference: one fresh model trained on gold with stage two only.
IterationRecord run_baseline(const S3lgData& data, const S3lgOptions& options, Seq2SeqModel* out = nullptr);

std::filesystem::path manifest_path(const std::filesystem::path& output_dir, int k);

}  // namespace s3lg
