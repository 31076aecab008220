#include "s3lg/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "s3lg/metrics.h"
#include "s3lg/random.h"

namespace s3lg {

double RampSchedule::weight(std::size_t step) const {
  if (ramp_steps == 0 || step >= ramp_steps) return target_w;
  return target_w * static_cast<double>(step) / static_cast<double>(ramp_steps);
}

std::string to_string(Stage stage) { return stage == Stage::kPretrain ? "pretrain" : "finetune"; }

void StageConfig::validate() const {
  if (!(learning_rate > 0.0)) throw TrainingError("learning_rate must be positive");
  if (batch_size < 1) throw TrainingError("batch_size must be at least 1");
  if (stage == Stage::kFinetune && patience < 1) throw TrainingError("patience must be at least 1");
}

double smoothed_cross_entropy(std::span<const double> log_probs, int gold, double epsilon) {
  const double uniform = epsilon / static_cast<double>(log_probs.size());
  double loss = -(1.0 - epsilon) * log_probs[static_cast<std::size_t>(gold)];
  if (epsilon != 0.0) {
    for (double lp : log_probs) loss -= uniform * lp;
  }
  return loss;
}

double symmetric_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("distribution sizes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == q[i]) continue;
    if (p[i] <= 0.0 || q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    total += (p[i] - q[i]) * (std::log(p[i]) - std::log(q[i]));
  }
  return total;
}

EncodedExample encode_example(const Seq2SeqModel& model, const Sentence& text, const GlossSequence& gloss) {
  return {model.encode_source(text), model.decoder_input(gloss), model.decoder_target(gloss)};
}

template <typename T>
LossBreakdown example_loss(const Transformer<T>& net, const EncodedExample& example, double w,
                           const LossOptions& options, std::uint64_t dropout_seed, bool stochastic,
                           TransformerParams<T>* grads, T grad_scale) {
  const int passes = options.consistency ? 2 : 1;
  const bool dropout = options.consistency || stochastic;
  const double rate = net.config().dropout_rate;
  std::vector<ForwardCache<T>> caches(static_cast<std::size_t>(passes));
  std::vector<Matrix<T>> logp(static_cast<std::size_t>(passes));
  for (int p = 0; p < passes; ++p) {
    DropoutSampler sampler(derive_seed({dropout_seed, static_cast<std::uint64_t>(p)}), rate);
    const auto i = static_cast<std::size_t>(p);
    const Matrix<T> logits =
        net.forward(example.src, example.tgt_in, dropout ? &sampler : nullptr, grads ? &caches[i] : nullptr);
    logp[i] = log_softmax_rows(logits);
  }

  const Eigen::Index steps = logp[0].rows();
  const Eigen::Index vocab = logp[0].cols();
  const double eps = options.label_smoothing;
  LossBreakdown out;
  for (const auto& lp : logp) {
    for (Eigen::Index t = 0; t < steps; ++t) {
      const int gold = example.tgt_out[static_cast<std::size_t>(t)];
      double row = -(1.0 - eps) * static_cast<double>(lp(t, gold));
      if (eps != 0.0) row -= eps / static_cast<double>(vocab) * static_cast<double>(lp.row(t).sum());
      out.ce += row;
    }
  }
  out.ce /= passes;

  std::vector<Matrix<T>> probs(static_cast<std::size_t>(passes));
  for (int p = 0; p < passes; ++p) probs[static_cast<std::size_t>(p)] = logp[static_cast<std::size_t>(p)].array().exp();
  if (passes == 2) {
    const Matrix<T> diff_p = probs[0] - probs[1];
    const Matrix<T> diff_lp = logp[0] - logp[1];
    out.cr = static_cast<double>((diff_p.array() * diff_lp.array()).sum()) / static_cast<double>(steps);
  }
  out.w_effective = w;
  out.total = out.ce + w * out.cr;
  if (!grads) return out;

  const T ce_scale = T(1) / T(passes);
  const T cr_scale = static_cast<T>(w / static_cast<double>(steps));
  for (int a = 0; a < passes; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    Matrix<T> d = probs[ia];
    d.array() -= static_cast<T>(eps / static_cast<double>(vocab));
    for (Eigen::Index t = 0; t < steps; ++t) d(t, example.tgt_out[static_cast<std::size_t>(t)]) -= static_cast<T>(1.0 - eps);
    d *= ce_scale;
    if (passes == 2 && w != 0.0) {
      const auto ib = static_cast<std::size_t>(1 - a);
      const Matrix<T> log_ratio = logp[ia] - logp[ib];
      Eigen::Matrix<T, Eigen::Dynamic, 1> kl = (probs[ia].array() * log_ratio.array()).rowwise().sum();
      Matrix<T> centered = log_ratio.colwise() - kl;
      Matrix<T> dcr = probs[ia].array() * centered.array() + probs[ia].array() - probs[ib].array();
      d += cr_scale * dcr;
    }
    d *= grad_scale;
    net.backward(caches[ia], d, *grads);
  }
  return out;
}

template LossBreakdown example_loss<float>(const Transformer<float>&, const EncodedExample&, double,
                                           const LossOptions&, std::uint64_t, bool, TransformerParams<float>*, float);
template LossBreakdown example_loss<double>(const Transformer<double>&, const EncodedExample&, double,
                                            const LossOptions&, std::uint64_t, bool, TransformerParams<double>*,
                                            double);

double cross_entropy_loss(const Seq2SeqModel& model, const Sentence& x, const GlossSequence& y, bool stochastic,
                          std::uint64_t dropout_seed) {
  const LossOptions options{model.config().label_smoothing, false};
  return example_loss<float>(model.net(), encode_example(model, x, y), 0.0, options, dropout_seed, stochastic,
                             nullptr, 1.0f)
      .ce;
}

double consistency_loss(const Seq2SeqModel& model, const Sentence& x, const GlossSequence& y,
                        std::uint64_t dropout_seed) {
  const LossOptions options{model.config().label_smoothing, true};
  return example_loss<float>(model.net(), encode_example(model, x, y), 0.0, options, dropout_seed, true, nullptr,
                             1.0f)
      .cr;
}

LossBreakdown combined_loss(const Seq2SeqModel& model, const Sentence& x, const GlossSequence& y, std::size_t step,
                            const RampSchedule& ramp, std::uint64_t dropout_seed) {
  const LossOptions options{model.config().label_smoothing, true};
  return example_loss<float>(model.net(), encode_example(model, x, y), ramp.weight(step), options, dropout_seed,
                             true, nullptr, 1.0f);
}

Sentence augment(const Sentence& x, std::mt19937_64& rng, double p_drop, int window) {
  const std::size_t head = !x.tokens.empty() && (x.tokens[0] == special::kTagRuleToken ||
                                                  x.tokens[0] == special::kTagModelToken)
                               ? 1
                               : 0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> kept;
  for (std::size_t i = head; i < x.tokens.size(); ++i) {
    if (unit(rng) >= p_drop) kept.push_back(i);
  }
  if (kept.empty() && x.tokens.size() > head) {
    std::uniform_int_distribution<std::size_t> pick(head, x.tokens.size() - 1);
    kept.push_back(pick(rng));
  }
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(kept.size());
  for (std::size_t i : kept) {
    const double jitter = window > 1 ? unit(rng) * window : 0.0;
    keys.emplace_back(static_cast<double>(i) + jitter, i);
  }
  std::stable_sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Sentence out;
  if (head) out.tokens.push_back(x.tokens[0]);
  for (const auto& [key, i] : keys) out.tokens.push_back(x.tokens[i]);
  return out;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(TransformerParams<float>& params, const TransformerParams<float>& grads) {
  auto ps = params.tensors();
  auto gs = grads.tensors();
  if (m_.empty()) {
    for (const auto* p : ps) {
      m_.push_back(Matrix<float>::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix<float>::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  const auto step_size = static_cast<float>(lr_ / c1);
  const auto root_c2 = static_cast<float>(std::sqrt(c2));
  const auto eps = static_cast<float>(epsilon_);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto g = gs[i]->array();
    m_[i].array() = b1 * m_[i].array() + (1.0f - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (1.0f - b2) * g.square();
    ps[i]->array() -= step_size * m_[i].array() / (v_[i].array().sqrt() / root_c2 + eps);
  }
}

nlohmann::json StepRecord::to_json() const {
  return {{"iteration", iteration}, {"stage", to_string(stage)}, {"step", step},      {"ce", loss.ce},
          {"cr", loss.cr},          {"w_effective", loss.w_effective}, {"total", loss.total}};
}

std::size_t steps_per_epoch(std::size_t examples, std::size_t batch_size) {
  return (examples + batch_size - 1) / batch_size;
}

Trainer::Trainer(Seq2SeqModel& model, TrainOptions options)
    : model_(model), options_(std::move(options)), adam_(5e-5) {}

std::vector<Trainer::Item> Trainer::admissible(std::vector<Item> items) {
  const auto limit = static_cast<std::size_t>(model_.config().max_len);
  std::vector<Item> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    if (item.text->tokens.size() + 1 > limit || item.gloss->tokens.size() + 1 > limit) {
      ++skipped_;
      continue;
    }
    out.push_back(item);
  }
  return out;
}

void Trainer::run_epoch(const std::vector<Item>& items, const StageConfig& stage, std::size_t epoch,
                        bool consistency) {
  const auto stage_id = static_cast<std::uint64_t>(stage.stage);
  const auto iteration = static_cast<std::uint64_t>(options_.iteration);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(derive_seed({options_.seed, iteration, stage_id, epoch, 0x5348}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  adam_.set_learning_rate(stage.learning_rate);
  const LossOptions loss_options{model_.config().label_smoothing, consistency};
  auto& net = model_.net();
  TransformerParams<float> grads = net.params().zeros_like();
  for (std::size_t begin = 0; begin < order.size(); begin += stage.batch_size) {
    const std::size_t end = std::min(order.size(), begin + stage.batch_size);
    const auto batch = static_cast<float>(end - begin);
    const double w = consistency ? options_.ramp.weight(step_) : 0.0;
    grads.set_zero();
    LossBreakdown mean;
    for (std::size_t b = begin; b < end; ++b) {
      const Item& item = items[order[b]];
      EncodedExample example;
      if (item.augmentable && options_.augment.enabled) {
        std::mt19937_64 aug_rng(derive_seed({options_.seed, iteration, stage_id, epoch, order[b], 0x4155}));
        const Sentence noisy = augment(*item.text, aug_rng, options_.augment.p_drop, options_.augment.window);
        example = encode_example(model_, noisy, *item.gloss);
      } else {
        example = encode_example(model_, *item.text, *item.gloss);
      }
      const std::uint64_t dropout_seed = derive_seed({options_.seed, iteration, step_, b - begin, 0x4450});
      const LossBreakdown l =
          example_loss<float>(net, example, w, loss_options, dropout_seed, true, &grads, 1.0f / batch);
      mean.ce += l.ce / batch;
      mean.cr += l.cr / batch;
    }
    mean.w_effective = w;
    mean.total = mean.ce + w * mean.cr;
    adam_.step(net.params(), grads);
    ++step_;
    if (options_.on_step) options_.on_step(StepRecord{options_.iteration, stage.stage, step_, mean});
  }
}

void Trainer::pretrain(const ParallelCorpus& gold, const std::vector<SyntheticPair>& synthetic,
                       const StageConfig& stage) {
  stage.validate();
  std::vector<Item> items;
  items.reserve(gold.pairs.size() + synthetic.size());
  for (const auto& p : gold.pairs) items.push_back({&p.text, &p.gloss, false});
  for (const auto& p : synthetic) items.push_back({&p.text, &p.gloss, true});
  if (items.empty()) throw TrainingError("stage one has no training pairs");
  items = admissible(std::move(items));
  if (items.empty()) throw TrainingError("every stage-one pair exceeds max_len");
  for (std::size_t epoch = 0; epoch < stage.epochs; ++epoch) run_epoch(items, stage, epoch, options_.consistency);
}

Trainer::FinetuneResult Trainer::finetune(const ParallelCorpus& gold, const ParallelCorpus& dev,
                                          const StageConfig& stage) {
  stage.validate();
  if (gold.pairs.empty()) throw TrainingError("stage two needs gold pairs");
  if (dev.pairs.empty()) throw TrainingError("stage two needs a dev set");
  std::vector<Item> items;
  for (const auto& p : gold.pairs) items.push_back({&p.text, &p.gloss, false});
  items = admissible(std::move(items));
  if (items.empty()) throw TrainingError("every gold pair exceeds max_len");

  const bool consistency = options_.consistency && options_.consistency_in_finetune;
  std::ofstream score_log;
  if (!options_.checkpoint_dir.empty()) {
    std::filesystem::create_directories(options_.checkpoint_dir);
    score_log.open(options_.checkpoint_dir / ("iter" + std::to_string(options_.iteration) + "_dev_scores.jsonl"));
  }

  FinetuneResult result;
  TransformerParams<float> best = model_.net().params();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= stage.max_epochs; ++epoch) {
    run_epoch(items, stage, epoch, consistency);
    const double score = dev_bleu4(model_, dev, options_.dev_decode);
    result.dev_history.push_back(score);
    result.epochs_run = epoch;
    if (!options_.checkpoint_dir.empty()) {
      const auto name = "iter" + std::to_string(options_.iteration) + "_finetune_epoch" + std::to_string(epoch) + ".ckpt";
      save_checkpoint(model_, options_.checkpoint_dir / name);
      score_log << nlohmann::json{{"epoch", epoch}, {"checkpoint", name}, {"dev_bleu4", score}}.dump() << '\n';
    }
    if (result.best_epoch == 0 || score > result.best_bleu4) {
      result.best_bleu4 = score;
      result.best_epoch = epoch;
      best = model_.net().params();
      since_best = 0;
    } else if (++since_best >= stage.patience) {
      break;
    }
  }
  model_.net().params() = std::move(best);
  return result;
}

void train_stage_one(Seq2SeqModel& model, const ParallelCorpus& gold, const std::vector<SyntheticPair>& synthetic,
                     const StageConfig& stage, const TrainOptions& options) {
  Trainer trainer(model, options);
  trainer.pretrain(gold, synthetic, stage);
}

Trainer::FinetuneResult train_stage_two(Seq2SeqModel& model, const ParallelCorpus& gold, const ParallelCorpus& dev,
                                        const StageConfig& stage, const TrainOptions& options) {
  Trainer trainer(model, options);
  return trainer.finetune(gold, dev, stage);
}

double dev_bleu4(const Seq2SeqModel& model, const ParallelCorpus& dev, const DecodeOptions& decode) {
  std::vector<Sentence> inputs;
  std::vector<GlossSequence> refs;
  for (const auto& p : dev.pairs) {
    inputs.push_back(p.text);
    refs.push_back(p.gloss);
  }
  return bleu_n(decode_corpus(model, inputs, decode), refs, 4);
}

}  // namespace s3lg
