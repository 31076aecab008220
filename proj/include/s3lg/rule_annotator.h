#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "s3lg/corpus.h"

namespace s3lg {

// Word embeddings keyed by token. All vectors share one dimension.
class EmbeddingLexicon {
 public:
  EmbeddingLexicon() = default;
  explicit EmbeddingLexicon(std::size_t dimension) : dimension_(dimension) {}

  // Text format: "token v1 ... vd" per line. A leading "<count> <dim>" header
  // line is accepted and skipped.
  static EmbeddingLexicon load(const std::filesystem::path& path);

  void add(std::string token, std::vector<double> vector);
  const std::vector<double>* find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token) != nullptr; }
  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::size_t dimension_ = 0;
  std::unordered_map<std::string, std::vector<double>> entries_;
};

// Surface form -> lemma. Unknown forms are their own lemma. Chains in the
// source file (a -> b, b -> c) are resolved so lemma(lemma(w)) == lemma(w).
class LemmaTable {
 public:
  // "surface TAB lemma" per line.
  static LemmaTable load(const std::filesystem::path& path);
  static LemmaTable from_entries(const std::vector<std::pair<std::string, std::string>>& entries);

  const std::string& lemma(const std::string& surface) const;
  std::size_t size() const { return entries_.size(); }
  const std::unordered_map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::unordered_map<std::string, std::string> entries_;
};

enum class PairSource { kRule, kModel };

std::string to_string(PairSource source);
PairSource pair_source_from_string(std::string_view name);

struct SyntheticPair {
  Sentence text;
  GlossSequence gloss;
  PairSource source = PairSource::kRule;
  int iteration = 0;
  bool truncated = false;  // model decode hit max_len

  bool operator==(const SyntheticPair&) const = default;
};

nlohmann::json to_json(const SyntheticPair& pair);
SyntheticPair synthetic_pair_from_json(const nlohmann::json& j);
void write_synthetic_jsonl(const std::filesystem::path& path, const std::vector<SyntheticPair>& pairs);
std::vector<SyntheticPair> read_synthetic_jsonl(const std::filesystem::path& path);

// Cosine similarity of the two tokens' embeddings; nullopt when either token
// has no embedding.
std::optional<double> similarity(std::string_view word, std::string_view gloss,
                                 const EmbeddingLexicon& lexicon);

// Lower-cases ASCII and the Latin-1 letters of UTF-8 (umlauts etc.).
std::string casefold(std::string_view s);

// Word-level segmentation hook for unsegmented input.
using Segmenter = std::function<std::vector<std::string>(std::string_view)>;

// Maps each in-vocabulary word to the gloss of maximal embedding similarity.
// Gloss embeddings are normalized once at construction; every regular gloss
// in `gloss_vocab` must be covered by the lexicon.
class ZhRuleAnnotator {
 public:
  ZhRuleAnnotator(const Vocabulary& word_vocab, const Vocabulary& gloss_vocab,
                  const EmbeddingLexicon& lexicon);

  GlossSequence annotate(const Sentence& text) const;

 private:
  const Vocabulary& word_vocab_;
  const Vocabulary& gloss_vocab_;
  const EmbeddingLexicon& lexicon_;
  std::vector<int> gloss_ids_;
  std::vector<std::vector<double>> gloss_unit_;
};

// Out-of-vocabulary words become <UNK>; the rest are lemmatized and matched
// case-insensitively against the gloss vocabulary, falling back to the unique
// compound gloss that contains the lemma. Anything left unmatched is emitted
// as <UNK> so every output token lies in the gloss vocabulary.
class DeRuleAnnotator {
 public:
  DeRuleAnnotator(const Vocabulary& word_vocab, const Vocabulary& gloss_vocab, const LemmaTable& lemmas);

  GlossSequence annotate(const Sentence& text) const;

 private:
  std::string map_lemma(const std::string& lemma) const;

  const Vocabulary& word_vocab_;
  const LemmaTable& lemmas_;
  std::unordered_map<std::string, std::string> folded_to_gloss_;
  std::vector<std::pair<std::string, std::string>> folded_glosses_;
};

GlossSequence annotate_rule_zh(const Sentence& text, const Vocabulary& word_vocab,
                               const Vocabulary& gloss_vocab, const EmbeddingLexicon& lexicon);
GlossSequence annotate_rule_de(const Sentence& text, const Vocabulary& word_vocab,
                               const Vocabulary& gloss_vocab, const LemmaTable& lemmas);

enum class Language { kZh, kDe };

Language language_from_string(std::string_view name);
std::string to_string(Language language);

struct RuleResources {
  const Vocabulary* word_vocab = nullptr;
  const Vocabulary* gloss_vocab = nullptr;
  const EmbeddingLexicon* lexicon = nullptr;  // zh
  const LemmaTable* lemmas = nullptr;         // de
};

// One RULE pair per sentence, iteration 0, input order preserved.
std::vector<SyntheticPair> annotate_corpus_rule(const MonolingualCorpus& mono, Language language,
                                                const RuleResources& resources);

}  // namespace s3lg
