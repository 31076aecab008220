#include "s3lg/model.h"

#include <cmath>
#include <cstring>
#include <fstream>

namespace s3lg {

namespace {

constexpr char kMagic[8] = {'S', '3', 'L', 'G', 'C', 'K', 'P', 'T'};

template <typename V>
void write_pod(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw CheckpointError("truncated checkpoint");
  return v;
}

}  // namespace

Seq2SeqModel::Seq2SeqModel(const TransformerConfig& config, Vocabulary src_vocab, Vocabulary tgt_vocab)
    : src_vocab_(std::move(src_vocab)),
      tgt_vocab_(std::move(tgt_vocab)),
      net_(config, src_vocab_.size(), tgt_vocab_.size()) {}

std::vector<int> Seq2SeqModel::encode_source(const Sentence& text) const {
  std::vector<int> ids = src_vocab_.encode(text.tokens);
  ids.push_back(special::kEos);
  if (ids.size() > static_cast<std::size_t>(config().max_len)) {
    throw std::length_error("source of length " + std::to_string(ids.size()) + " exceeds max_len " +
                            std::to_string(config().max_len));
  }
  return ids;
}

std::vector<int> Seq2SeqModel::decoder_input(const GlossSequence& gloss) const {
  std::vector<int> ids{special::kBos};
  for (int id : tgt_vocab_.encode(gloss.tokens)) ids.push_back(id);
  if (ids.size() > static_cast<std::size_t>(config().max_len)) {
    throw std::length_error("target of length " + std::to_string(ids.size()) + " exceeds max_len " +
                            std::to_string(config().max_len));
  }
  return ids;
}

std::vector<int> Seq2SeqModel::decoder_target(const GlossSequence& gloss) const {
  std::vector<int> ids = tgt_vocab_.encode(gloss.tokens);
  ids.push_back(special::kEos);
  return ids;
}

GlossSequence Seq2SeqModel::decode_ids(const std::vector<int>& ids) const {
  GlossSequence out;
  for (int id : ids) {
    if (id == special::kEos) break;
    if (id == special::kBos || id == special::kPad) continue;
    out.tokens.push_back(tgt_vocab_.token(id));
  }
  return out;
}

Seq2SeqModel init_model(const TransformerConfig& config, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                        std::uint64_t seed) {
  Seq2SeqModel model(config, src_vocab, tgt_vocab);
  model.net().initialize(seed);
  return model;
}

SequenceScore forward_logprob(const Seq2SeqModel& model, const Sentence& text, const GlossSequence& gloss,
                              bool stochastic, std::uint64_t dropout_seed) {
  const auto src = model.encode_source(text);
  const auto tgt_in = model.decoder_input(gloss);
  const auto tgt_out = model.decoder_target(gloss);
  DropoutSampler sampler(dropout_seed, model.config().dropout_rate);
  const Matrix<float> logits = model.net().forward(src, tgt_in, stochastic ? &sampler : nullptr, nullptr);
  const Matrix<double> logp = log_softmax_rows(Matrix<double>(logits.cast<double>()));
  SequenceScore score;
  for (Eigen::Index t = 0; t < logp.rows(); ++t) {
    score.logprob += logp(t, tgt_out[static_cast<std::size_t>(t)]);
    std::vector<double> dist(static_cast<std::size_t>(logp.cols()));
    for (Eigen::Index v = 0; v < logp.cols(); ++v) dist[static_cast<std::size_t>(v)] = std::exp(logp(t, v));
    score.distributions.push_back(std::move(dist));
  }
  return score;
}

void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  nlohmann::json header = {{"config", model.config().to_json()},
                           {"src_vocab", model.src_vocab().to_json()},
                           {"tgt_vocab", model.tgt_vocab().to_json()}};
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* m : model.net().params().tensors()) {
    write_pod(out, static_cast<std::uint64_t>(m->rows()));
    write_pod(out, static_cast<std::uint64_t>(m->cols()));
    out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(float)));
  }
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Seq2SeqModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_size = read_pod<std::uint64_t>(in);
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw CheckpointError(path.string() + ": truncated header");
  const auto header = nlohmann::json::parse(text);
  Seq2SeqModel model(TransformerConfig::from_json(header.at("config")),
                     Vocabulary::from_json(header.at("src_vocab")), Vocabulary::from_json(header.at("tgt_vocab")));
  for (auto* m : model.net().params().tensors()) {
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    if (rows != static_cast<std::uint64_t>(m->rows()) || cols != static_cast<std::uint64_t>(m->cols())) {
      throw CheckpointError(path.string() + ": tensor shape mismatch");
    }
    in.read(reinterpret_cast<char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(float)));
    if (!in) throw CheckpointError(path.string() + ": truncated tensor data");
  }
  return model;
}

}  // namespace s3lg
