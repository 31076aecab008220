#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "s3lg/corpus.h"
#include "s3lg/transformer.h"

namespace s3lg {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text-to-gloss model: the transformer plus the vocabularies that give its
// ids meaning. The source vocabulary carries the method tags.
class Seq2SeqModel {
 public:
  Seq2SeqModel(const TransformerConfig& config, Vocabulary src_vocab, Vocabulary tgt_vocab);

  const TransformerConfig& config() const { return net_.config(); }
  const Vocabulary& src_vocab() const { return src_vocab_; }
  const Vocabulary& tgt_vocab() const { return tgt_vocab_; }
  Transformer<float>& net() { return net_; }
  const Transformer<float>& net() const { return net_; }

  // Source ids followed by EOS. Throws std::length_error past max_len.
  std::vector<int> encode_source(const Sentence& text) const;
  // Decoder input: BOS followed by the gloss ids.
  std::vector<int> decoder_input(const GlossSequence& gloss) const;
  // Decoder targets: gloss ids followed by EOS.
  std::vector<int> decoder_target(const GlossSequence& gloss) const;
  GlossSequence decode_ids(const std::vector<int>& ids) const;

 private:
  Vocabulary src_vocab_;
  Vocabulary tgt_vocab_;
  Transformer<float> net_;
};

// Fresh parameters; identical seeds give identical models.
Seq2SeqModel init_model(const TransformerConfig& config, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                        std::uint64_t seed);

struct SequenceScore {
  double logprob = 0.0;                        // log p(y | x), EOS included
  std::vector<std::vector<double>> distributions;  // one per target step
};

// Chain-rule log-likelihood of `gloss` (framed by BOS/EOS) given `text`.
// `stochastic` samples dropout masks from `dropout_seed`; otherwise the pass
// is deterministic.
SequenceScore forward_logprob(const Seq2SeqModel& model, const Sentence& text, const GlossSequence& gloss,
                              bool stochastic = false, std::uint64_t dropout_seed = 0);

// Binary checkpoint: magic, format version, JSON header (config and
// vocabularies), then raw float32 tensors in TransformerParams order.
void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path);
Seq2SeqModel load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace s3lg
