#include "s3lg/inference.h"

namespace s3lg {

ModelScorer::ModelScorer(const Seq2SeqModel& model, const Sentence& text)
    : model_(model), memory_(model.net().encode(model.encode_source(text))) {}

ModelScorer::State ModelScorer::initial_state() const { return model_.net().start_decoding(memory_); }

std::vector<double> ModelScorer::next_logprobs(State& state, int token) const {
  const auto row = model_.net().step(state, token);
  std::vector<double> out(static_cast<std::size_t>(row.size()));
  for (Eigen::Index i = 0; i < row.size(); ++i) out[static_cast<std::size_t>(i)] = row(i);
  return out;
}

std::size_t ModelScorer::max_generation() const { return static_cast<std::size_t>(model_.config().max_len); }

namespace {

Decoded to_decoded(const Seq2SeqModel& model, const DecodeResult& r) {
  Decoded d;
  d.gloss = model.decode_ids(r.tokens);
  d.logprob = r.logprob;
  d.score = r.score;
  d.finished = r.finished;
  return d;
}

}  // namespace

Decoded greedy_decode(const Seq2SeqModel& model, const Sentence& text, std::size_t max_len) {
  ModelScorer scorer(model, text);
  return to_decoded(model, greedy_decode(scorer, std::min(max_len, scorer.max_generation())));
}

Decoded beam_search(const Seq2SeqModel& model, const Sentence& text, std::size_t width, double length_penalty,
                    std::size_t max_len) {
  ModelScorer scorer(model, text);
  return to_decoded(model, beam_search(scorer, width, length_penalty, std::min(max_len, scorer.max_generation())));
}

std::vector<GlossSequence> decode_corpus(const Seq2SeqModel& model, const std::vector<Sentence>& inputs,
                                         const DecodeOptions& options) {
  std::vector<GlossSequence> out;
  out.reserve(inputs.size());
  for (const auto& s : inputs) {
    if (options.width <= 1) {
      out.push_back(greedy_decode(model, s, options.max_len).gloss);
    } else {
      out.push_back(beam_search(model, s, options.width, options.length_penalty, options.max_len).gloss);
    }
  }
  return out;
}

}  // namespace s3lg
