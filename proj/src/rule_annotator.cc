#include "s3lg/rule_annotator.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace s3lg {

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> unit(const std::vector<double>& v) {
  const double n = norm(v);
  std::vector<double> out(v.size(), 0.0);
  if (n == 0.0) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

const std::string kUnk(special::kUnkToken);

}  // namespace

void EmbeddingLexicon::add(std::string token, std::vector<double> vector) {
  if (dimension_ == 0) dimension_ = vector.size();
  if (vector.size() != dimension_ || dimension_ == 0) {
    throw CorpusError("embedding for '" + token + "' has dimension " + std::to_string(vector.size()) +
                      ", expected " + std::to_string(dimension_));
  }
  entries_[std::move(token)] = std::move(vector);
}

const std::vector<double>* EmbeddingLexicon::find(std::string_view token) const {
  auto it = entries_.find(std::string(token));
  return it == entries_.end() ? nullptr : &it->second;
}

EmbeddingLexicon EmbeddingLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path.string());
  EmbeddingLexicon lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2 &&
        fields[0].find_first_not_of("0123456789") == std::string::npos &&
        fields[1].find_first_not_of("0123456789") == std::string::npos) {
      continue;
    }
    if (fields.size() < 2) {
      throw CorpusError(path.string() + ": line " + std::to_string(line_no) + ": missing vector");
    }
    std::vector<double> values;
    values.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        values.push_back(std::stod(fields[i]));
      } catch (const std::exception&) {
        throw CorpusError(path.string() + ": line " + std::to_string(line_no) + ": bad number '" +
                          fields[i] + "'");
      }
    }
    try {
      lexicon.add(fields[0], std::move(values));
    } catch (const CorpusError& e) {
      throw CorpusError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return lexicon;
}

LemmaTable LemmaTable::from_entries(const std::vector<std::pair<std::string, std::string>>& entries) {
  LemmaTable table;
  for (const auto& [surface, lemma] : entries) {
    if (surface.empty() || lemma.empty()) throw CorpusError("lemma table entries must be non-empty");
    table.entries_[surface] = lemma;
  }
  // Follow chains to a fixed point, then pin every resolved lemma to itself
  // so lookups are idempotent even when the file contains a cycle.
  std::unordered_map<std::string, std::string> resolved;
  for (const auto& [surface, lemma] : table.entries_) {
    std::string current = lemma;
    std::unordered_map<std::string, bool> seen{{surface, true}};
    for (auto it = table.entries_.find(current); it != table.entries_.end() && !seen[current];
         it = table.entries_.find(current)) {
      seen[current] = true;
      current = it->second;
    }
    resolved[surface] = current;
  }
  for (const auto& [surface, lemma] : resolved) {
    if (resolved.count(lemma)) resolved[lemma] = lemma;
  }
  table.entries_ = std::move(resolved);
  return table;
}

LemmaTable LemmaTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw CorpusError(path.string() + ": line " + std::to_string(line_no) + ": expected surface<TAB>lemma");
    }
    entries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return from_entries(entries);
}

const std::string& LemmaTable::lemma(const std::string& surface) const {
  auto it = entries_.find(surface);
  return it == entries_.end() ? surface : it->second;
}

std::string to_string(PairSource source) { return source == PairSource::kRule ? "rule" : "model"; }

PairSource pair_source_from_string(std::string_view name) {
  if (name == "rule") return PairSource::kRule;
  if (name == "model") return PairSource::kModel;
  throw std::invalid_argument("unknown pair source '" + std::string(name) + "'");
}

nlohmann::json to_json(const SyntheticPair& pair) {
  nlohmann::json j = {{"text", join(pair.text.tokens)},
                      {"gloss", join(pair.gloss.tokens)},
                      {"source", to_string(pair.source)},
                      {"iteration", pair.iteration}};
  if (pair.truncated) j["truncated"] = true;
  return j;
}

SyntheticPair synthetic_pair_from_json(const nlohmann::json& j) {
  SyntheticPair pair;
  pair.text.tokens = split_whitespace(j.at("text").get<std::string>());
  pair.gloss.tokens = split_whitespace(j.at("gloss").get<std::string>());
  pair.source = pair_source_from_string(j.at("source").get<std::string>());
  pair.iteration = j.at("iteration").get<int>();
  pair.truncated = j.value("truncated", false);
  return pair;
}

void write_synthetic_jsonl(const std::filesystem::path& path, const std::vector<SyntheticPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

std::vector<SyntheticPair> read_synthetic_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::vector<SyntheticPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      pairs.push_back(synthetic_pair_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw CorpusError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

std::optional<double> similarity(std::string_view word, std::string_view gloss,
                                 const EmbeddingLexicon& lexicon) {
  const auto* u = lexicon.find(word);
  const auto* v = lexicon.find(gloss);
  if (!u || !v) return std::nullopt;
  return dot(unit(*u), unit(*v));
}

std::string casefold(std::string_view s) {
  std::string out(s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto c = static_cast<unsigned char>(out[i]);
    if (c >= 'A' && c <= 'Z') {
      out[i] = static_cast<char>(c + 32);
    } else if (c == 0xC3 && i + 1 < out.size()) {
      // U+00C0..U+00DE map to U+00E0..U+00FE, except U+00D7 (multiplication sign).
      auto next = static_cast<unsigned char>(out[i + 1]);
      if (next >= 0x80 && next <= 0x9E && next != 0x97) out[i + 1] = static_cast<char>(next + 0x20);
      ++i;
    }
  }
  return out;
}

ZhRuleAnnotator::ZhRuleAnnotator(const Vocabulary& word_vocab, const Vocabulary& gloss_vocab,
                                 const EmbeddingLexicon& lexicon)
    : word_vocab_(word_vocab), gloss_vocab_(gloss_vocab), lexicon_(lexicon) {
  for (int id = special::kCount; id < static_cast<int>(gloss_vocab_.size()); ++id) {
    const auto* v = lexicon_.find(gloss_vocab_.token(id));
    if (!v) throw CorpusError("lexicon has no embedding for gloss '" + gloss_vocab_.token(id) + "'");
    gloss_ids_.push_back(id);
    gloss_unit_.push_back(unit(*v));
  }
}

GlossSequence ZhRuleAnnotator::annotate(const Sentence& text) const {
  GlossSequence out;
  out.tokens.reserve(text.size());
  for (const auto& word : text.tokens) {
    const auto* emb = word_vocab_.contains(word) ? lexicon_.find(word) : nullptr;
    if (!emb || gloss_ids_.empty()) {
      out.tokens.push_back(kUnk);
      continue;
    }
    const auto u = unit(*emb);
    std::size_t best = 0;
    double best_sim = dot(u, gloss_unit_[0]);
    for (std::size_t i = 1; i < gloss_ids_.size(); ++i) {
      const double s = dot(u, gloss_unit_[i]);
      if (s > best_sim) {
        best_sim = s;
        best = i;
      }
    }
    out.tokens.push_back(gloss_vocab_.token(gloss_ids_[best]));
  }
  return out;
}

DeRuleAnnotator::DeRuleAnnotator(const Vocabulary& word_vocab, const Vocabulary& gloss_vocab,
                                 const LemmaTable& lemmas)
    : word_vocab_(word_vocab), lemmas_(lemmas) {
  for (int id = special::kCount; id < static_cast<int>(gloss_vocab.size()); ++id) {
    const auto& gloss = gloss_vocab.token(id);
    auto folded = casefold(gloss);
    folded_to_gloss_.emplace(folded, gloss);  // first (most frequent) spelling wins
    folded_glosses_.emplace_back(std::move(folded), gloss);
  }
}

std::string DeRuleAnnotator::map_lemma(const std::string& lemma) const {
  const auto folded = casefold(lemma);
  if (auto it = folded_to_gloss_.find(folded); it != folded_to_gloss_.end()) return it->second;
  const std::string* match = nullptr;
  for (const auto& [folded_gloss, gloss] : folded_glosses_) {
    if (folded_gloss.size() > folded.size() && folded_gloss.find(folded) != std::string::npos) {
      if (match) return kUnk;  // ambiguous compound
      match = &gloss;
    }
  }
  return match ? *match : kUnk;
}

GlossSequence DeRuleAnnotator::annotate(const Sentence& text) const {
  GlossSequence out;
  out.tokens.reserve(text.size());
  for (const auto& word : text.tokens) {
    if (!word_vocab_.contains(word)) {
      out.tokens.push_back(kUnk);
      continue;
    }
    out.tokens.push_back(map_lemma(lemmas_.lemma(word)));
  }
  return out;
}

GlossSequence annotate_rule_zh(const Sentence& text, const Vocabulary& word_vocab,
                               const Vocabulary& gloss_vocab, const EmbeddingLexicon& lexicon) {
  return ZhRuleAnnotator(word_vocab, gloss_vocab, lexicon).annotate(text);
}

GlossSequence annotate_rule_de(const Sentence& text, const Vocabulary& word_vocab,
                               const Vocabulary& gloss_vocab, const LemmaTable& lemmas) {
  return DeRuleAnnotator(word_vocab, gloss_vocab, lemmas).annotate(text);
}

Language language_from_string(std::string_view name) {
  if (name == "zh") return Language::kZh;
  if (name == "de") return Language::kDe;
  throw std::invalid_argument("unknown language '" + std::string(name) + "'");
}

std::string to_string(Language language) { return language == Language::kZh ? "zh" : "de"; }

std::vector<SyntheticPair> annotate_corpus_rule(const MonolingualCorpus& mono, Language language,
                                                const RuleResources& resources) {
  if (!resources.word_vocab || !resources.gloss_vocab) {
    throw std::invalid_argument("rule annotation needs word and gloss vocabularies");
  }
  std::function<GlossSequence(const Sentence&)> annotate;
  std::optional<ZhRuleAnnotator> zh;
  std::optional<DeRuleAnnotator> de;
  if (language == Language::kZh) {
    if (!resources.lexicon) throw std::invalid_argument("zh rules need an embedding lexicon");
    zh.emplace(*resources.word_vocab, *resources.gloss_vocab, *resources.lexicon);
    annotate = [&](const Sentence& s) { return zh->annotate(s); };
  } else {
    if (!resources.lemmas) throw std::invalid_argument("de rules need a lemma table");
    de.emplace(*resources.word_vocab, *resources.gloss_vocab, *resources.lemmas);
    annotate = [&](const Sentence& s) { return de->annotate(s); };
  }
  std::vector<SyntheticPair> pairs;
  pairs.reserve(mono.size());
  for (const auto& sentence : mono.sentences) {
    pairs.push_back(SyntheticPair{sentence, annotate(sentence), PairSource::kRule, 0, false});
  }
  return pairs;
}

}  // namespace s3lg
