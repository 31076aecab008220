#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "s3lg/corpus.h"

namespace s3lg {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Corpus BLEU with orders 1..n, uniform weights, no smoothing; [0, 100].
double bleu_n(const std::vector<GlossSequence>& hypotheses, const std::vector<GlossSequence>& references, int n);

// Mean sentence-level ROUGE-L F-score; [0, 100].
double rouge(const std::vector<GlossSequence>& hypotheses, const std::vector<GlossSequence>& references,
             double beta = 1.2);

// Corpus chrF over whitespace-free character n-grams; per-order F-beta
// averaged over the orders present on both sides; [0, 100].
double chrf(const std::vector<GlossSequence>& hypotheses, const std::vector<GlossSequence>& references,
            int max_order = 6, double beta = 2.0);

struct LowFrequencyResult {
  std::size_t amount = 0;           // dev samples with a low-frequency reference gloss
  std::size_t correct = 0;          // of those, hypotheses containing all of them
  std::optional<double> accuracy;   // 100 * correct / amount, absent when amount == 0
};

std::map<int, LowFrequencyResult> low_freq_accuracy(const std::vector<GlossSequence>& hypotheses,
                                                    const std::vector<GlossSequence>& references,
                                                    const FrequencyMap& train_gloss_counts,
                                                    const std::vector<int>& thresholds);

struct EvalReport {
  double rouge = 0.0;
  std::map<int, double> bleu;  // 1..4
  double chrf = 0.0;
  std::map<int, LowFrequencyResult> low_freq;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

inline const std::vector<int> kDefaultLowFrequencyThresholds = {3, 6, 8, 10, 15};

EvalReport evaluate(const std::vector<GlossSequence>& hypotheses, const std::vector<GlossSequence>& references,
                    const FrequencyMap* train_gloss_counts = nullptr,
                    const std::vector<int>& thresholds = kDefaultLowFrequencyThresholds);

}  // namespace s3lg
