#include "s3lg/toy_language.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

namespace s3lg {

namespace {

const std::vector<std::string> kDeterminers = {"der", "die", "das", "ein"};
const std::string kPreposition = "mit";

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> make_lemmas(std::size_t count, std::mt19937_64& rng,
                                     const std::vector<std::string>& forbidden) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  std::set<std::string> seen;
  std::vector<std::string> out;
  std::uniform_int_distribution<std::size_t> c(0, consonants.size() - 1);
  std::uniform_int_distribution<std::size_t> v(0, vowels.size() - 1);
  while (out.size() < count) {
    std::string lemma{consonants[c(rng)], vowels[v(rng)], consonants[c(rng)], vowels[v(rng)]};
    const bool clash = std::any_of(forbidden.begin(), forbidden.end(),
                                   [&](const std::string& f) { return lemma.find(f) != std::string::npos; });
    if (clash || !seen.insert(lemma).second) continue;
    out.push_back(lemma);
  }
  return out;
}

struct WordClass {
  std::vector<std::size_t> entries;  // indices into the lexicon, by rank
  std::discrete_distribution<std::size_t> pick;
};

class Generator {
 public:
  Generator(const ToyData& data, const ToyOptions& options, std::uint64_t seed) : data_(data), rng_(seed) {
    for (std::size_t i = 0; i < data.lexicon.size(); ++i) by_class_[data.lexicon[i].word_class].entries.push_back(i);
    for (auto& [name, cls] : by_class_) {
      std::vector<double> weights;
      for (std::size_t r = 0; r < cls.entries.size(); ++r) {
        weights.push_back(1.0 / std::pow(static_cast<double>(r + 1), options.zipf_exponent));
      }
      cls.pick = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
    }
  }

  ParallelPair sentence() {
    ParallelPair pair;
    auto& text = pair.text.tokens;
    auto& gloss = pair.gloss.tokens;
    if (chance(0.3)) {
      const auto& t = draw("time");
      text.push_back(form(t));
      gloss.push_back(t.gloss);
    }
    noun_phrase(text, gloss);
    const auto& verb = draw("verb");
    text.push_back(form(verb));
    if (chance(0.6)) {
      if (chance(0.3)) text.push_back(kPreposition);
      noun_phrase(text, gloss);
    }
    gloss.push_back(verb.gloss);
    return pair;
  }

 private:
  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }

  const ToyLexiconEntry& draw(const std::string& cls) {
    auto& c = by_class_.at(cls);
    return data_.lexicon[c.entries[c.pick(rng_)]];
  }

  std::string form(const ToyLexiconEntry& e) {
    std::uniform_int_distribution<std::size_t> pick(0, e.surface_forms.size() - 1);
    return e.surface_forms[pick(rng_)];
  }

  void noun_phrase(std::vector<std::string>& text, std::vector<std::string>& gloss) {
    if (chance(0.7)) {
      std::uniform_int_distribution<std::size_t> pick(0, kDeterminers.size() - 1);
      text.push_back(kDeterminers[pick(rng_)]);
    }
    const ToyLexiconEntry* adj = chance(0.4) ? &draw("adj") : nullptr;
    const auto& noun = draw("noun");
    if (adj) text.push_back(form(*adj));
    text.push_back(form(noun));
    gloss.push_back(noun.gloss);
    if (adj) gloss.push_back(adj->gloss);
  }

  const ToyData& data_;
  std::mt19937_64 rng_;
  std::map<std::string, WordClass> by_class_;
};

}  // namespace

ToyData generate_toy_data(const ToyOptions& options) {
  ToyData data;
  data.function_words = kDeterminers;
  data.function_words.push_back(kPreposition);
  std::mt19937_64 rng(options.seed);
  const std::size_t total = options.nouns + options.adjectives + options.verbs + options.time_words;
  const auto lemmas = make_lemmas(total, rng, data.function_words);

  struct ClassSpec {
    const char* name;
    std::size_t count;
    std::vector<std::string> suffixes;
  };
  const std::vector<ClassSpec> specs = {{"noun", options.nouns, {"", "e", "en"}},
                                        {"adj", options.adjectives, {"e", "er", "en"}},
                                        {"verb", options.verbs, {"t", "en", "e"}},
                                        {"time", options.time_words, {""}}};
  std::size_t next = 0;
  for (const auto& spec : specs) {
    for (std::size_t i = 0; i < spec.count; ++i) {
      ToyLexiconEntry e;
      e.lemma = lemmas[next++];
      e.gloss = upper(e.lemma);
      e.word_class = spec.name;
      for (const auto& suffix : spec.suffixes) {
        e.surface_forms.push_back(e.lemma + suffix);
        if (!suffix.empty()) data.lemma_entries.emplace_back(e.lemma + suffix, e.lemma);
      }
      data.lexicon.push_back(std::move(e));
    }
  }

  Generator gen(data, options, options.seed ^ 0x9E3779B97F4A7C15ULL);
  std::set<std::vector<std::string>> used;
  auto fill = [&](ParallelCorpus& corpus, std::size_t n) {
    while (corpus.pairs.size() < n) {
      ParallelPair p = gen.sentence();
      if (!used.insert(p.text.tokens).second) continue;
      corpus.pairs.push_back(std::move(p));
    }
  };
  fill(data.dev, options.dev);
  fill(data.test, options.test);
  std::set<std::vector<std::string>> held_out = used;
  fill(data.train, options.train);
  while (data.monolingual.sentences.size() < options.monolingual) {
    ParallelPair p = gen.sentence();
    if (held_out.count(p.text.tokens)) continue;
    data.monolingual.sentences.push_back(std::move(p.text));
  }
  return data;
}

void write_toy_data(const ToyData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_parallel_tsv(dir / "train.tsv", data.train);
  write_parallel_tsv(dir / "dev.tsv", data.dev);
  write_parallel_tsv(dir / "test.tsv", data.test);
  std::ofstream mono(dir / "mono.txt");
  for (const auto& s : data.monolingual.sentences) mono << join(s.tokens) << '\n';
  std::ofstream lemmas(dir / "lemmas.tsv");
  for (const auto& [surface, lemma] : data.lemma_entries) lemmas << surface << '\t' << lemma << '\n';
  if (!mono || !lemmas) throw CorpusError("failed writing toy data to " + dir.string());
}

RunConfig toy_run_config(const std::filesystem::path& data_dir, const std::filesystem::path& output_dir) {
  RunConfig c;
  c.paths.gold_train = (data_dir / "train.tsv").string();
  c.paths.gold_dev = (data_dir / "dev.tsv").string();
  c.paths.gold_test = (data_dir / "test.tsv").string();
  c.paths.monolingual = (data_dir / "mono.txt").string();
  c.paths.lemma_table = (data_dir / "lemmas.tsv").string();
  c.paths.output_dir = output_dir.string();
  c.language = Language::kDe;
  c.model.layers = 2;
  c.model.embed_dim = 64;
  c.model.ffn_dim = 256;
  c.model.heads = 4;
  c.model.dropout_rate = 0.1;
  c.model.max_len = 32;
  c.schedule.K = 2;
  c.schedule.T1 = 3;
  c.schedule.T_growth = 2;
  c.pretrain.learning_rate = 1e-3;
  c.finetune.learning_rate = 1e-3;
  c.finetune.patience = 3;
  c.finetune.max_epochs = 40;
  c.ramp.target_w = 1.0;
  c.decode_max_len = 32;
  return c;
}

}  // namespace s3lg
