#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace s3lg {

// Raised for unreadable or malformed corpus and resource files.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Spoken-language input. Holds at least one token once loaded from a corpus.
struct Sentence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

// Target gloss sequence; may be empty.
struct GlossSequence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const GlossSequence&) const = default;
};

struct ParallelPair {
  Sentence text;
  GlossSequence gloss;
};

struct ParallelCorpus {
  std::vector<ParallelPair> pairs;

  std::size_t size() const { return pairs.size(); }
};

struct MonolingualCorpus {
  std::vector<Sentence> sentences;

  std::size_t size() const { return sentences.size(); }
};

enum class CorpusFormat { kTsv, kJsonl };
enum class Tokenizer { kWhitespace, kCharacter };
enum class CorpusSide { kText, kGloss };

CorpusFormat corpus_format_from_path(const std::filesystem::path& path);
Tokenizer tokenizer_from_string(std::string_view name);
std::string to_string(Tokenizer tokenizer);

std::vector<std::string> split_whitespace(std::string_view line);
// Splits into UTF-8 code points, dropping whitespace.
std::vector<std::string> split_characters(std::string_view line);
std::vector<std::string> tokenize(std::string_view line, Tokenizer tokenizer);
std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

// Gold corpora are pre-segmented, so the gloss side is always split on
// whitespace; `text_tokenizer` applies to the spoken-language side only.
ParallelCorpus load_parallel_corpus(const std::filesystem::path& path, CorpusFormat format,
                                    Tokenizer text_tokenizer = Tokenizer::kWhitespace);
ParallelCorpus load_parallel_corpus(const std::filesystem::path& path,
                                    Tokenizer text_tokenizer = Tokenizer::kWhitespace);
ParallelCorpus parse_parallel_corpus(std::string_view content, CorpusFormat format,
                                     Tokenizer text_tokenizer = Tokenizer::kWhitespace);

// One sentence per line. Blank lines are skipped.
MonolingualCorpus load_monolingual_corpus(const std::filesystem::path& path,
                                          Tokenizer tokenizer = Tokenizer::kWhitespace);
MonolingualCorpus parse_monolingual_corpus(std::string_view content,
                                           Tokenizer tokenizer = Tokenizer::kWhitespace);

void write_parallel_tsv(const std::filesystem::path& path, const ParallelCorpus& corpus);

// Reserved ids shared by source and target vocabularies.
namespace special {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kTagRule = 4;
inline constexpr int kTagModel = 5;
inline constexpr int kCount = 6;

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kUnkToken = "<UNK>";
inline constexpr std::string_view kTagRuleToken = "<rule>";
inline constexpr std::string_view kTagModelToken = "<model>";
}  // namespace special

bool is_reserved_token(std::string_view token);

// Bijective token <-> id map. Reserved tokens occupy ids [0, special::kCount).
class Vocabulary {
 public:
  Vocabulary();

  // Reserved tokens followed by `tokens` in the given order. Duplicates and
  // reserved spellings inside `tokens` are rejected.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }
  std::size_t regular_size() const { return size() - special::kCount; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;
  // Replaces every out-of-vocabulary token with <UNK>.
  std::vector<std::string> close_over(const std::vector<std::string>& tokens) const;

  // One token per line in id order.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  void add(std::string token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

using FrequencyMap = std::map<std::string, std::size_t>;

FrequencyMap count_tokens(const ParallelCorpus& corpus, CorpusSide side);

// Reserved tokens, then every side token with count >= min_count ordered by
// descending frequency with lexicographic tie-break.
Vocabulary build_vocabulary(const ParallelCorpus& corpus, CorpusSide side, std::size_t min_count = 1);

struct SideStats {
  std::size_t sentences = 0;
  std::size_t vocab = 0;  // distinct tokens in this corpus side
  std::size_t total_tokens = 0;
  std::size_t total_oov = 0;  // tokens outside the reference vocabulary

  bool operator==(const SideStats&) const = default;
};

struct CorpusStats {
  SideStats text;
  std::optional<SideStats> gloss;

  nlohmann::json to_json() const;
};

CorpusStats corpus_stats(const ParallelCorpus& corpus, const Vocabulary& vocab_text,
                         const Vocabulary* vocab_gloss);
CorpusStats corpus_stats(const MonolingualCorpus& corpus, const Vocabulary& vocab_text);

}  // namespace s3lg
