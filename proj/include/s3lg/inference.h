#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <tuple>
#include <vector>

#include "s3lg/corpus.h"
#include "s3lg/model.h"

namespace s3lg {

// Incremental scorer: feeding a token into a state yields log-probabilities
// for the next token. Decoding starts by feeding BOS into initial_state().
template <class M>
concept StepScorer = requires(const M& m, typename M::State& state, int token) {
  { m.initial_state() } -> std::convertible_to<typename M::State>;
  { m.next_logprobs(state, token) } -> std::convertible_to<std::vector<double>>;
};

struct BeamHypothesis {
  std::vector<int> tokens;  // generated ids, EOS excluded
  double logprob = 0.0;     // sum of chosen per-step log-probabilities, EOS included when finished
  bool finished = false;    // emitted EOS
};

struct DecodeResult {
  std::vector<int> tokens;
  double logprob = 0.0;
  double score = 0.0;     // logprob / length^penalty
  bool finished = false;  // false: ran into max_len, best partial returned
};

// Penalized score; length counts EOS for finished hypotheses.
inline double penalized_score(double logprob, std::size_t length, double length_penalty) {
  if (length == 0 || length_penalty == 0.0) return logprob;
  return logprob / std::pow(static_cast<double>(length), length_penalty);
}

inline double penalized_score(const BeamHypothesis& h, double length_penalty) {
  return penalized_score(h.logprob, h.tokens.size() + (h.finished ? 1 : 0), length_penalty);
}

// PAD and BOS are never generated.
inline bool generatable(int id) { return id != special::kPad && id != special::kBos; }

// Per-step argmax (lowest id on ties) until EOS or `max_len` generated tokens.
template <StepScorer M>
DecodeResult greedy_decode(const M& model, std::size_t max_len) {
  DecodeResult result;
  auto state = model.initial_state();
  int last = special::kBos;
  for (std::size_t step = 0; step < max_len; ++step) {
    const std::vector<double> logp = model.next_logprobs(state, last);
    int best = -1;
    for (int v = 0; v < static_cast<int>(logp.size()); ++v) {
      if (!generatable(v)) continue;
      if (best < 0 || logp[static_cast<std::size_t>(v)] > logp[static_cast<std::size_t>(best)]) best = v;
    }
    result.logprob += logp[static_cast<std::size_t>(best)];
    if (best == special::kEos) {
      result.finished = true;
      break;
    }
    result.tokens.push_back(best);
    last = best;
  }
  result.score = result.logprob;
  return result;
}

// Each step expands every active hypothesis over the vocabulary and keeps the
// `width` highest-logprob candidates. Candidates ending in EOS leave the beam
// and are frozen in the finished pool, so they take a slot from the active
// set. The finished hypothesis with the best penalized score is returned; if
// none finished within `max_len`, the best active one is returned unfinished.
template <StepScorer M>
DecodeResult beam_search(const M& model, std::size_t width, double length_penalty, std::size_t max_len) {
  if (width == 0) width = 1;
  struct Active {
    BeamHypothesis hyp;
    typename M::State state;
  };
  std::vector<Active> active;
  active.push_back({BeamHypothesis{}, model.initial_state()});
  std::vector<BeamHypothesis> finished;

  for (std::size_t step = 0; step < max_len && !active.empty(); ++step) {
    // (logprob, parent, token); ties go to the earlier parent, then lower id.
    std::vector<std::tuple<double, std::size_t, int>> candidates;
    std::vector<std::vector<double>> parent_logp(active.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      const int last = active[a].hyp.tokens.empty() ? special::kBos : active[a].hyp.tokens.back();
      parent_logp[a] = model.next_logprobs(active[a].state, last);
      for (int v = 0; v < static_cast<int>(parent_logp[a].size()); ++v) {
        if (!generatable(v)) continue;
        candidates.emplace_back(active[a].hyp.logprob + parent_logp[a][static_cast<std::size_t>(v)], a, v);
      }
    }
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const auto& x, const auto& y) {
                        if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
                        if (std::get<1>(x) != std::get<1>(y)) return std::get<1>(x) < std::get<1>(y);
                        return std::get<2>(x) < std::get<2>(y);
                      });
    std::vector<Active> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& [logprob, parent, token] = candidates[c];
      BeamHypothesis hyp = active[parent].hyp;
      hyp.logprob = logprob;
      if (token == special::kEos) {
        hyp.finished = true;
        finished.push_back(std::move(hyp));
      } else {
        hyp.tokens.push_back(token);
        next.push_back({std::move(hyp), active[parent].state});
      }
    }
    active = std::move(next);
  }

  const BeamHypothesis* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& h : finished) {
    const double s = penalized_score(h, length_penalty);
    if (!best || s > best_score) {
      best = &h;
      best_score = s;
    }
  }
  if (!best) {
    for (const auto& a : active) {
      const double s = penalized_score(a.hyp, length_penalty);
      if (!best || s > best_score) {
        best = &a.hyp;
        best_score = s;
      }
    }
  }
  DecodeResult result;
  if (best) {
    result.tokens = best->tokens;
    result.logprob = best->logprob;
    result.finished = best->finished;
    result.score = best_score;
  }
  return result;
}

// Adapts a trained model and one source sentence to StepScorer.
class ModelScorer {
 public:
  using State = DecoderState<float>;

  ModelScorer(const Seq2SeqModel& model, const Sentence& text);

  State initial_state() const;
  std::vector<double> next_logprobs(State& state, int token) const;
  // Longest generation the positional table allows.
  std::size_t max_generation() const;

 private:
  const Seq2SeqModel& model_;
  Matrix<float> memory_;
};

struct Decoded {
  GlossSequence gloss;
  double logprob = 0.0;
  double score = 0.0;
  bool finished = true;
};

// max_len is clamped to what the model's positional table supports.
Decoded greedy_decode(const Seq2SeqModel& model, const Sentence& text, std::size_t max_len);
Decoded beam_search(const Seq2SeqModel& model, const Sentence& text, std::size_t width, double length_penalty,
                    std::size_t max_len);

struct DecodeOptions {
  std::size_t width = 3;
  double length_penalty = 1.0;
  std::size_t max_len = 128;
};

std::vector<GlossSequence> decode_corpus(const Seq2SeqModel& model, const std::vector<Sentence>& inputs,
                                         const DecodeOptions& options);

}  // namespace s3lg
