#include "s3lg/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace s3lg {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Splits on '\n', stripping a trailing '\r'. A final empty line is dropped.
std::vector<std::string_view> split_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte, keep it as its own unit
}

[[noreturn]] void fail_at(std::size_t line_no, const std::string& what) {
  throw CorpusError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

CorpusFormat corpus_format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return CorpusFormat::kJsonl;
  return CorpusFormat::kTsv;
}

Tokenizer tokenizer_from_string(std::string_view name) {
  if (name == "whitespace") return Tokenizer::kWhitespace;
  if (name == "character" || name == "char") return Tokenizer::kCharacter;
  throw std::invalid_argument("unknown tokenizer '" + std::string(name) + "'");
}

std::string to_string(Tokenizer tokenizer) {
  return tokenizer == Tokenizer::kWhitespace ? "whitespace" : "character";
}

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.emplace_back(line.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> split_characters(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const auto c = static_cast<unsigned char>(line[i]);
    const std::size_t len = std::min(utf8_length(c), line.size() - i);
    if (!(len == 1 && std::isspace(c))) out.emplace_back(line.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view line, Tokenizer tokenizer) {
  return tokenizer == Tokenizer::kWhitespace ? split_whitespace(line) : split_characters(line);
}

std::string join(const std::vector<std::string>& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

ParallelCorpus parse_parallel_corpus(std::string_view content, CorpusFormat format,
                                     Tokenizer text_tokenizer) {
  ParallelCorpus corpus;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    std::string_view line = lines[i];
    if (is_blank(line)) continue;
    std::string text;
    std::string gloss;
    if (format == CorpusFormat::kTsv) {
      const auto tab = line.find('\t');
      if (tab == std::string_view::npos) fail_at(line_no, "missing gloss column");
      if (line.find('\t', tab + 1) != std::string_view::npos) fail_at(line_no, "too many columns");
      text = std::string(line.substr(0, tab));
      gloss = std::string(line.substr(tab + 1));
    } else {
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        fail_at(line_no, std::string("invalid JSON: ") + e.what());
      }
      if (!record.is_object()) fail_at(line_no, "record is not an object");
      if (!record.contains("text") || !record["text"].is_string()) fail_at(line_no, "missing text field");
      if (!record.contains("gloss") || !record["gloss"].is_string()) fail_at(line_no, "missing gloss field");
      text = record["text"].get<std::string>();
      gloss = record["gloss"].get<std::string>();
    }
    ParallelPair pair;
    pair.text.tokens = tokenize(text, text_tokenizer);
    pair.gloss.tokens = split_whitespace(gloss);
    if (pair.text.tokens.empty()) fail_at(line_no, "empty text");
    corpus.pairs.push_back(std::move(pair));
  }
  if (corpus.pairs.empty()) throw CorpusError("empty parallel corpus");
  return corpus;
}

ParallelCorpus load_parallel_corpus(const std::filesystem::path& path, CorpusFormat format,
                                    Tokenizer text_tokenizer) {
  try {
    return parse_parallel_corpus(read_file(path), format, text_tokenizer);
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

ParallelCorpus load_parallel_corpus(const std::filesystem::path& path, Tokenizer text_tokenizer) {
  return load_parallel_corpus(path, corpus_format_from_path(path), text_tokenizer);
}

MonolingualCorpus parse_monolingual_corpus(std::string_view content, Tokenizer tokenizer) {
  MonolingualCorpus corpus;
  for (std::string_view line : split_lines(content)) {
    auto tokens = tokenize(line, tokenizer);
    if (tokens.empty()) continue;
    corpus.sentences.push_back(Sentence{std::move(tokens)});
  }
  return corpus;
}

MonolingualCorpus load_monolingual_corpus(const std::filesystem::path& path, Tokenizer tokenizer) {
  return parse_monolingual_corpus(read_file(path), tokenizer);
}

void write_parallel_tsv(const std::filesystem::path& path, const ParallelCorpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& pair : corpus.pairs) {
    out << join(pair.text.tokens) << '\t' << join(pair.gloss.tokens) << '\n';
  }
}

bool is_reserved_token(std::string_view token) {
  return token == special::kPadToken || token == special::kBosToken || token == special::kEosToken ||
         token == special::kUnkToken || token == special::kTagRuleToken ||
         token == special::kTagModelToken;
}

Vocabulary::Vocabulary() {
  for (auto t : {special::kPadToken, special::kBosToken, special::kEosToken, special::kUnkToken,
                 special::kTagRuleToken, special::kTagModelToken}) {
    add(std::string(t));
  }
}

void Vocabulary::add(std::string token) {
  const int id = static_cast<int>(id_to_token_.size());
  auto [it, inserted] = token_to_id_.emplace(token, id);
  if (!inserted) throw CorpusError("duplicate vocabulary token '" + token + "'");
  id_to_token_.push_back(std::move(token));
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary vocab;
  for (const auto& t : tokens) {
    if (t.empty()) throw CorpusError("empty vocabulary token");
    if (is_reserved_token(t)) throw CorpusError("reserved token '" + t + "' listed as regular entry");
    vocab.add(t);
  }
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? special::kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::out_of_range("vocabulary id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::vector<std::string> Vocabulary::close_over(const std::vector<std::string>& tokens) const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(contains(t) ? t : std::string(special::kUnkToken));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& t : id_to_token_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  const auto lines = split_lines(content);
  if (lines.size() < static_cast<std::size_t>(special::kCount)) {
    throw CorpusError(path.string() + ": vocabulary file lacks reserved tokens");
  }
  Vocabulary fresh;
  for (int i = 0; i < special::kCount; ++i) {
    if (lines[static_cast<std::size_t>(i)] != fresh.token(i)) {
      throw CorpusError(path.string() + ": line " + std::to_string(i + 1) +
                        ": expected reserved token " + fresh.token(i));
    }
  }
  std::vector<std::string> rest(lines.begin() + special::kCount, lines.end());
  return from_tokens(rest);
}

nlohmann::json Vocabulary::to_json() const {
  return nlohmann::json(std::vector<std::string>(id_to_token_.begin() + special::kCount, id_to_token_.end()));
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  return from_tokens(j.get<std::vector<std::string>>());
}

FrequencyMap count_tokens(const ParallelCorpus& corpus, CorpusSide side) {
  FrequencyMap counts;
  for (const auto& pair : corpus.pairs) {
    const auto& tokens = side == CorpusSide::kText ? pair.text.tokens : pair.gloss.tokens;
    for (const auto& t : tokens) ++counts[t];
  }
  return counts;
}

Vocabulary build_vocabulary(const ParallelCorpus& corpus, CorpusSide side, std::size_t min_count) {
  if (corpus.pairs.empty()) throw CorpusError("cannot build a vocabulary from an empty corpus");
  if (min_count == 0) min_count = 1;
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [token, count] : count_tokens(corpus, side)) {
    if (count >= min_count && !is_reserved_token(token)) entries.emplace_back(token, count);
  }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(entries.size());
  for (auto& e : entries) tokens.push_back(std::move(e.first));
  return Vocabulary::from_tokens(tokens);
}

namespace {

SideStats side_stats(const std::vector<const std::vector<std::string>*>& sentences, const Vocabulary& vocab) {
  SideStats stats;
  stats.sentences = sentences.size();
  std::set<std::string_view> distinct;
  for (const auto* tokens : sentences) {
    stats.total_tokens += tokens->size();
    for (const auto& t : *tokens) {
      distinct.insert(t);
      if (!vocab.contains(t)) ++stats.total_oov;
    }
  }
  stats.vocab = distinct.size();
  return stats;
}

nlohmann::json side_json(const SideStats& s) {
  return {{"sentences", s.sentences}, {"vocab", s.vocab}, {"total_tokens", s.total_tokens},
          {"total_oov", s.total_oov}};
}

}  // namespace

nlohmann::json CorpusStats::to_json() const {
  nlohmann::json j;
  j["text"] = side_json(text);
  if (gloss) j["gloss"] = side_json(*gloss);
  return j;
}

CorpusStats corpus_stats(const ParallelCorpus& corpus, const Vocabulary& vocab_text,
                         const Vocabulary* vocab_gloss) {
  std::vector<const std::vector<std::string>*> text;
  std::vector<const std::vector<std::string>*> gloss;
  for (const auto& pair : corpus.pairs) {
    text.push_back(&pair.text.tokens);
    gloss.push_back(&pair.gloss.tokens);
  }
  CorpusStats stats;
  stats.text = side_stats(text, vocab_text);
  if (vocab_gloss) stats.gloss = side_stats(gloss, *vocab_gloss);
  return stats;
}

CorpusStats corpus_stats(const MonolingualCorpus& corpus, const Vocabulary& vocab_text) {
  std::vector<const std::vector<std::string>*> text;
  for (const auto& s : corpus.sentences) text.push_back(&s.tokens);
  CorpusStats stats;
  stats.text = side_stats(text, vocab_text);
  return stats;
}

}  // namespace s3lg
