#include "s3lg/metrics.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace s3lg {

namespace {

void check_corpus(const std::vector<GlossSequence>& hyps, const std::vector<GlossSequence>& refs) {
  if (hyps.empty()) throw MetricError("empty corpus");
  if (hyps.size() != refs.size()) {
    throw MetricError("hypothesis/reference count mismatch: " + std::to_string(hyps.size()) + " vs " +
                      std::to_string(refs.size()));
  }
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t order) {
  NgramCounts counts;
  if (tokens.size() < order) return counts;
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + order))];
  }
  return counts;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> characters(const GlossSequence& g) { return split_characters(join(g.tokens)); }

}  // namespace

double bleu_n(const std::vector<GlossSequence>& hypotheses, const std::vector<GlossSequence>& references, int n) {
  check_corpus(hypotheses, references);
  if (n < 1 || n > 4) throw MetricError("BLEU order must lie in 1..4");
  std::vector<std::size_t> matches(static_cast<std::size_t>(n), 0);
  std::vector<std::size_t> totals(static_cast<std::size_t>(n), 0);
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s].tokens;
    const auto& ref = references[s].tokens;
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (int k = 1; k <= n; ++k) {
      const auto h = ngrams(hyp, static_cast<std::size_t>(k));
      const auto r = ngrams(ref, static_cast<std::size_t>(k));
      for (const auto& [gram, count] : h) {
        totals[static_cast<std::size_t>(k - 1)] += count;
        if (auto it = r.find(gram); it != r.end()) {
          matches[static_cast<std::size_t>(k - 1)] += std::min(count, it->second);
        }
      }
    }
  }
  double log_precision = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (matches[i] == 0 || totals[i] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matches[i]) / static_cast<double>(totals[i]));
  }
  log_precision /= n;
  const double log_bp =
      hyp_len < ref_len ? 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len) : 0.0;
  return 100.0 * std::exp(log_precision + log_bp);
}

double rouge(const std::vector<GlossSequence>& hypotheses, const std::vector<GlossSequence>& references,
             double beta) {
  check_corpus(hypotheses, references);
  double total = 0.0;
  const double beta2 = beta * beta;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s].tokens;
    const auto& ref = references[s].tokens;
    if (hyp.empty() && ref.empty()) {
      total += 1.0;
      continue;
    }
    const std::size_t lcs = lcs_length(hyp, ref);
    if (lcs == 0) continue;
    const double p = static_cast<double>(lcs) / static_cast<double>(hyp.size());
    const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
    total += (1.0 + beta2) * p * r / (r + beta2 * p);
  }
  return 100.0 * total / static_cast<double>(hypotheses.size());
}

double chrf(const std::vector<GlossSequence>& hypotheses, const std::vector<GlossSequence>& references,
            int max_order, double beta) {
  check_corpus(hypotheses, references);
  if (max_order < 1) throw MetricError("chrF order must be positive");
  const auto orders = static_cast<std::size_t>(max_order);
  std::vector<std::size_t> hyp_total(orders, 0), ref_total(orders, 0), matched(orders, 0);
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto hyp = characters(hypotheses[s]);
    const auto ref = characters(references[s]);
    for (std::size_t k = 1; k <= orders; ++k) {
      const auto h = ngrams(hyp, k);
      const auto r = ngrams(ref, k);
      for (const auto& [gram, count] : h) {
        hyp_total[k - 1] += count;
        if (auto it = r.find(gram); it != r.end()) matched[k - 1] += std::min(count, it->second);
      }
      for (const auto& [gram, count] : r) ref_total[k - 1] += count;
    }
  }
  const double beta2 = beta * beta;
  double sum = 0.0;
  std::size_t effective = 0;
  for (std::size_t k = 0; k < orders; ++k) {
    if (hyp_total[k] == 0 || ref_total[k] == 0) continue;
    ++effective;
    if (matched[k] == 0) continue;
    const double p = static_cast<double>(matched[k]) / static_cast<double>(hyp_total[k]);
    const double r = static_cast<double>(matched[k]) / static_cast<double>(ref_total[k]);
    sum += (1.0 + beta2) * p * r / (beta2 * p + r);
  }
  return effective == 0 ? 0.0 : 100.0 * sum / static_cast<double>(effective);
}

std::map<int, LowFrequencyResult> low_freq_accuracy(const std::vector<GlossSequence>& hypotheses,
                                                    const std::vector<GlossSequence>& references,
                                                    const FrequencyMap& train_gloss_counts,
                                                    const std::vector<int>& thresholds) {
  check_corpus(hypotheses, references);
  std::map<int, LowFrequencyResult> out;
  for (int tau : thresholds) {
    LowFrequencyResult result;
    for (std::size_t s = 0; s < references.size(); ++s) {
      std::set<std::string> rare;
      for (const auto& g : references[s].tokens) {
        auto it = train_gloss_counts.find(g);
        const std::size_t count = it == train_gloss_counts.end() ? 0 : it->second;
        if (count <= static_cast<std::size_t>(tau)) rare.insert(g);
      }
      if (rare.empty()) continue;
      ++result.amount;
      const auto& hyp = hypotheses[s].tokens;
      const bool covered = std::all_of(rare.begin(), rare.end(), [&](const std::string& g) {
        return std::find(hyp.begin(), hyp.end(), g) != hyp.end();
      });
      if (covered) ++result.correct;
    }
    if (result.amount > 0) {
      result.accuracy = 100.0 * static_cast<double>(result.correct) / static_cast<double>(result.amount);
    }
    out[tau] = result;
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["rouge"] = rouge;
  j["chrf"] = chrf;
  nlohmann::json b = nlohmann::json::object();
  for (const auto& [n, v] : bleu) b[std::to_string(n)] = v;
  j["bleu"] = b;
  nlohmann::json lf = nlohmann::json::object();
  for (const auto& [tau, r] : low_freq) {
    nlohmann::json e = {{"amount", r.amount}, {"correct", r.correct}};
    e["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
    lf[std::to_string(tau)] = e;
  }
  j["low_freq"] = lf;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport report;
  report.rouge = j.at("rouge").get<double>();
  report.chrf = j.at("chrf").get<double>();
  for (const auto& [key, value] : j.at("bleu").items()) report.bleu[std::stoi(key)] = value.get<double>();
  for (const auto& [key, value] : j.at("low_freq").items()) {
    LowFrequencyResult r;
    r.amount = value.at("amount").get<std::size_t>();
    r.correct = value.at("correct").get<std::size_t>();
    if (!value.at("accuracy").is_null()) r.accuracy = value.at("accuracy").get<double>();
    report.low_freq[std::stoi(key)] = r;
  }
  return report;
}

EvalReport evaluate(const std::vector<GlossSequence>& hypotheses, const std::vector<GlossSequence>& references,
                    const FrequencyMap* train_gloss_counts, const std::vector<int>& thresholds) {
  EvalReport report;
  report.rouge = rouge(hypotheses, references);
  for (int n = 1; n <= 4; ++n) report.bleu[n] = bleu_n(hypotheses, references, n);
  report.chrf = chrf(hypotheses, references);
  if (train_gloss_counts) report.low_freq = low_freq_accuracy(hypotheses, references, *train_gloss_counts, thresholds);
  return report;
}

}  // namespace s3lg
