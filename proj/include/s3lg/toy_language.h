#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "s3lg/config.h"
#include "s3lg/corpus.h"

namespace s3lg {

// Synthetic German-like language. Words are inflected lemmas plus function
// words; glosses are upper-cased lemmas. The gold gloss drops function words,
// puts nouns before their adjectives, keeps a leading time word in front and
// moves the verb to the end. Lemma frequencies follow a Zipf law per word
// class.
struct ToyOptions {
  std::size_t nouns = 30;
  std::size_t adjectives = 12;
  std::size_t verbs = 14;
  std::size_t time_words = 4;
  double zipf_exponent = 1.1;
  std::size_t train = 500;
  std::size_t dev = 200;
  std::size_t test = 200;
  std::size_t monolingual = 5000;
  std::uint64_t seed = 7;
};

struct ToyLexiconEntry {
  std::string lemma;
  std::string gloss;
  std::string word_class;  // noun, adj, verb, time
  std::vector<std::string> surface_forms;
};

struct ToyData {
  std::vector<ToyLexiconEntry> lexicon;
  std::vector<std::string> function_words;
  std::vector<std::pair<std::string, std::string>> lemma_entries;  // surface -> lemma
  ParallelCorpus train, dev, test;
  MonolingualCorpus monolingual;
};

ToyData generate_toy_data(const ToyOptions& options);

// Writes train.tsv, dev.tsv, test.tsv, mono.txt and lemmas.tsv.
void write_toy_data(const ToyData& data, const std::filesystem::path& dir);

// Small-model configuration over the files written by write_toy_data.
RunConfig toy_run_config(const std::filesystem::path& data_dir, const std::filesystem::path& output_dir);

}  // namespace s3lg
