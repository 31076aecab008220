#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "s3lg/corpus.h"
#include "s3lg/inference.h"
#include "s3lg/model.h"
#include "s3lg/rule_annotator.h"

namespace s3lg {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Linear ramp of the consistency weight from 0 to target_w over ramp_steps.
struct RampSchedule {
  double target_w = 20.0;
  std::size_t ramp_steps = 1;

  double weight(std::size_t step) const;
  bool operator==(const RampSchedule&) const = default;
};

enum class Stage { kPretrain, kFinetune };
std::string to_string(Stage stage);

struct StageConfig {
  Stage stage = Stage::kPretrain;
  std::size_t epochs = 15;       // pretrain: exact epoch count
  std::size_t patience = 5;      // finetune: evaluations without improvement before stopping
  std::size_t max_epochs = 100;  // finetune: hard cap
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;

  void validate() const;
  bool operator==(const StageConfig&) const = default;
};

struct LossBreakdown {
  double ce = 0.0;
  double cr = 0.0;
  double total = 0.0;
  double w_effective = 0.0;
};

// --- distribution-level pieces ------------------------------------------

// -sum_v q_v log p_v with q = (1 - eps) onehot(gold) + eps / |V|.
double smoothed_cross_entropy(std::span<const double> log_probs, int gold, double epsilon);

// KL(p || q) + KL(q || p).
double symmetric_kl(std::span<const double> p, std::span<const double> q);

// --- model-level losses ----------------------------------------------------

struct EncodedExample {
  std::vector<int> src;     // ids + EOS
  std::vector<int> tgt_in;  // BOS + ids
  std::vector<int> tgt_out; // ids + EOS
};

EncodedExample encode_example(const Seq2SeqModel& model, const Sentence& text, const GlossSequence& gloss);

struct LossOptions {
  double label_smoothing = 0.1;
  bool consistency = true;  // run two dropout passes and add w * L_CR
};

// Loss of one example and, when `grads` is non-null, its gradient scaled by
// `grad_scale` accumulated into `grads`. With consistency enabled the two
// passes draw dropout masks from streams derived from `dropout_seed`, CE is
// averaged over both passes, and L_CR is the symmetric KL averaged over
// target positions. Without consistency a single pass is used; it is
// stochastic only when `stochastic` is set.
template <typename T>
LossBreakdown example_loss(const Transformer<T>& net, const EncodedExample& example, double w,
                           const LossOptions& options, std::uint64_t dropout_seed, bool stochastic,
                           TransformerParams<T>* grads, T grad_scale);

// Token-summed CE of one pair; deterministic unless `stochastic`.
double cross_entropy_loss(const Seq2SeqModel& model, const Sentence& x, const GlossSequence& y,
                          bool stochastic = false, std::uint64_t dropout_seed = 0);
// Symmetric KL between two dropout passes, averaged over target positions.
double consistency_loss(const Seq2SeqModel& model, const Sentence& x, const GlossSequence& y,
                        std::uint64_t dropout_seed);
LossBreakdown combined_loss(const Seq2SeqModel& model, const Sentence& x, const GlossSequence& y, std::size_t step,
                            const RampSchedule& ramp, std::uint64_t dropout_seed);

// --- augmentation ----------------------------------------------------------

struct AugmentOptions {
  bool enabled = true;
  double p_drop = 0.1;
  int window = 3;

  bool operator==(const AugmentOptions&) const = default;
};

// Drops each token with probability p_drop (never all of them) and shuffles
// the survivors locally by sorting on position + U(0, window). A leading tag
// token is neither dropped nor moved.
Sentence augment(const Sentence& x, std::mt19937_64& rng, double p_drop, int window);

// --- optimization ------------------------------------------------------------

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void step(TransformerParams<float>& params, const TransformerParams<float>& grads);
  void set_learning_rate(double lr) { lr_ = lr; }
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  std::vector<Matrix<float>> m_, v_;
};

struct StepRecord {
  int iteration = 0;
  Stage stage = Stage::kPretrain;
  std::size_t step = 0;
  LossBreakdown loss;

  nlohmann::json to_json() const;
};

struct TrainOptions {
  bool consistency = true;
  bool consistency_in_finetune = true;
  RampSchedule ramp;
  AugmentOptions augment;
  DecodeOptions dev_decode;  // used for the per-epoch dev BLEU-4
  std::uint64_t seed = 1;
  int iteration = 0;  // only used to label log records
  std::function<void(const StepRecord&)> on_step;
  std::filesystem::path checkpoint_dir;  // per-epoch finetune checkpoints when non-empty
};

// One optimizer and one step counter (which drives the ramp) shared by both
// stages of an iteration.
class Trainer {
 public:
  Trainer(Seq2SeqModel& model, TrainOptions options);

  // Exactly `epochs` epochs over gold + synthetic. Synthetic sources are
  // augmented when enabled.
  void pretrain(const ParallelCorpus& gold, const std::vector<SyntheticPair>& synthetic, const StageConfig& stage);

  struct FinetuneResult {
    double best_bleu4 = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::vector<double> dev_history;
  };
  // Trains on gold only, scoring dev BLEU-4 after each epoch, and restores the
  // best-scoring parameters when it stops.
  FinetuneResult finetune(const ParallelCorpus& gold, const ParallelCorpus& dev, const StageConfig& stage);

  std::size_t global_step() const { return step_; }
  // Pairs left out so far because they exceed max_len.
  std::size_t skipped_too_long() const { return skipped_; }
  Seq2SeqModel& model() { return model_; }

 private:
  struct Item {
    const Sentence* text;
    const GlossSequence* gloss;
    bool augmentable;
  };
  std::vector<Item> admissible(std::vector<Item> items);
  void run_epoch(const std::vector<Item>& items, const StageConfig& stage, std::size_t epoch, bool consistency);

  Seq2SeqModel& model_;
  TrainOptions options_;
  Adam adam_;
  std::size_t step_ = 0;
  std::size_t skipped_ = 0;
};

// Steps per epoch for `examples` at `batch_size`.
std::size_t steps_per_epoch(std::size_t examples, std::size_t batch_size);

void train_stage_one(Seq2SeqModel& model, const ParallelCorpus& gold, const std::vector<SyntheticPair>& synthetic,
                     const StageConfig& stage, const TrainOptions& options);
Trainer::FinetuneResult train_stage_two(Seq2SeqModel& model, const ParallelCorpus& gold, const ParallelCorpus& dev,
                                        const StageConfig& stage, const TrainOptions& options);

double dev_bleu4(const Seq2SeqModel& model, const ParallelCorpus& dev, const DecodeOptions& decode);

}  // namespace s3lg
