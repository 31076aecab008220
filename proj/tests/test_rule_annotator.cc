#include <doctest.h>

#include <fstream>

#include "s3lg/rule_annotator.h"
#include "support.h"

using namespace s3lg;
using namespace s3lg::testing;

TEST_CASE("cosine similarity examples") {
  EmbeddingLexicon lex(2);
  lex.add("v", {3, 4});
  lex.add("u", {3, 4});
  lex.add("x", {1, 0});
  lex.add("y", {0, 1});
  lex.add("z", {1, 1});
  CHECK(*similarity("v", "u", lex) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*similarity("x", "y", lex) == doctest::Approx(0.0));
  CHECK(*similarity("x", "z", lex) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK_FALSE(similarity("x", "missing", lex).has_value());
}

TEST_CASE("lexicon rejects mixed dimensions") {
  EmbeddingLexicon lex(2);
  CHECK_THROWS(lex.add("a", {1, 2, 3}));
}

TEST_CASE("lexicon file with header line") {
  const auto dir = temp_dir("lexicon");
  std::ofstream(dir / "e.txt") << "2 3\na 1 0 0\nb 0 1 0\n";
  const auto lex = EmbeddingLexicon::load(dir / "e.txt");
  CHECK(lex.size() == 2);
  CHECK(lex.dimension() == 3);
}

TEST_CASE("zh rule: closest gloss, OOV and identity") {
  EmbeddingLexicon lex(2);
  lex.add("w1", {1.0, 0.1});
  lex.add("G1", {0.0, 1.0});
  lex.add("G2", {1.0, 0.0});
  const auto words = Vocabulary::from_tokens({"w1"});
  const auto glosses = Vocabulary::from_tokens({"G1", "G2"});
  CHECK(annotate_rule_zh(S("w1"), words, glosses, lex).tokens == std::vector<std::string>{"G2"});
  CHECK(annotate_rule_zh(S("oov_word"), words, glosses, lex).tokens ==
        std::vector<std::string>{std::string(special::kUnkToken)});
  CHECK(annotate_rule_zh(Sentence{}, words, glosses, lex).tokens.empty());

  EmbeddingLexicon self(3);
  self.add("A", {1, 0, 0});
  self.add("B", {0, 1, 0});
  self.add("C", {0, 0, 1});
  const auto v = Vocabulary::from_tokens({"A", "B", "C"});
  CHECK(annotate_rule_zh(S("C A B"), v, v, self).tokens == std::vector<std::string>{"C", "A", "B"});
}

TEST_CASE("zh rule ties go to the lower gloss id") {
  EmbeddingLexicon lex(2);
  lex.add("w", {1, 1});
  lex.add("P", {2, 1});
  lex.add("Q", {1, 2});
  const auto words = Vocabulary::from_tokens({"w"});
  CHECK(annotate_rule_zh(S("w"), words, Vocabulary::from_tokens({"Q", "P"}), lex).tokens[0] == "Q");
  CHECK(annotate_rule_zh(S("w"), words, Vocabulary::from_tokens({"P", "Q"}), lex).tokens[0] == "P");
}

TEST_CASE("zh rule requires gloss embeddings") {
  EmbeddingLexicon lex(2);
  lex.add("w", {1, 0});
  CHECK_THROWS(ZhRuleAnnotator(Vocabulary::from_tokens({"w"}), Vocabulary::from_tokens({"NOEMB"}), lex));
}

TEST_CASE("zh rule matches brute-force argmax on random lexicons") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 5; ++trial) {
    EmbeddingLexicon lex(6);
    std::vector<std::string> words, glosses;
    for (int i = 0; i < 30; ++i) {
      words.push_back("w" + std::to_string(i));
      std::vector<double> v(6);
      for (auto& x : v) x = normal(rng);
      if (i % 7 != 3) lex.add(words.back(), v);  // some words lack embeddings
    }
    for (int i = 0; i < 12; ++i) {
      glosses.push_back("G" + std::to_string(i));
      std::vector<double> v(6);
      for (auto& x : v) x = normal(rng);
      lex.add(glosses.back(), v);
    }
    const auto wv = Vocabulary::from_tokens(std::vector<std::string>(words.begin(), words.begin() + 25));
    const auto gv = Vocabulary::from_tokens(glosses);
    const ZhRuleAnnotator ann(wv, gv, lex);
    std::uniform_int_distribution<int> pick(0, 29), len(1, 9);
    for (int s = 0; s < 40; ++s) {
      Sentence x;
      for (int i = len(rng); i > 0; --i) x.tokens.push_back(words[static_cast<std::size_t>(pick(rng))]);
      const auto got = ann.annotate(x);
      CHECK(got.tokens == oracle_rule_zh(x, wv, gv, lex).tokens);
      CHECK(got.tokens.size() == x.tokens.size());
    }
  }
}

TEST_CASE("lemma table resolves chains") {
  const auto t = LemmaTable::from_entries({{"ging", "gehen"}, {"gehst", "ging"}});
  CHECK(t.lemma("gehst") == "gehen");
  CHECK(t.lemma("ging") == "gehen");
  CHECK(t.lemma("unknown") == "unknown");
  for (const auto& [surface, lemma] : t.entries()) CHECK(t.lemma(t.lemma(surface)) == t.lemma(surface));
}

TEST_CASE("de rule examples") {
  const auto lemmas = LemmaTable::from_entries({{"liebe", "lieben"}, {"häuser", "haus"}});
  const auto glosses = Vocabulary::from_tokens({"LIEBEN", "HAUS", "NORDWEST", "WETTER", "REGENWETTER"});
  const auto words = Vocabulary::from_tokens({"liebe", "häuser", "nord", "wett", "morgen", "Haus"});
  const std::string unk(special::kUnkToken);
  CHECK(annotate_rule_de(S("liebe"), words, glosses, lemmas).tokens[0] == "LIEBEN");
  CHECK(annotate_rule_de(S("häuser"), words, glosses, lemmas).tokens[0] == "HAUS");
  CHECK(annotate_rule_de(S("Haus"), words, glosses, lemmas).tokens[0] == "HAUS");
  CHECK(annotate_rule_de(S("nordwind_oov"), words, glosses, lemmas).tokens[0] == unk);
  CHECK(annotate_rule_de(S("nord"), words, glosses, lemmas).tokens[0] == "NORDWEST");
  // "wett" is part of two glosses: ambiguous.
  CHECK(annotate_rule_de(S("wett"), words, glosses, lemmas).tokens[0] == unk);
  CHECK(annotate_rule_de(S("morgen"), words, glosses, lemmas).tokens[0] == unk);
}

TEST_CASE("rule glosses preserve length and stay inside the gloss vocabulary") {
  std::mt19937_64 rng(2);
  const auto glosses = Vocabulary::from_tokens({"AB", "ABC", "XY"});
  const auto words = Vocabulary::from_tokens({"ab", "abc", "xy", "b", "q"});
  const LemmaTable lemmas;
  std::vector<std::string> pool = {"ab", "abc", "xy", "b", "q", "zz"};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (int s = 0; s < 100; ++s) {
    Sentence x;
    for (int i = 0; i < 6; ++i) x.tokens.push_back(pool[pick(rng)]);
    const auto g = annotate_rule_de(x, words, glosses, lemmas);
    REQUIRE(g.tokens.size() == x.tokens.size());
    for (const auto& t : g.tokens) CHECK((glosses.contains(t) && !is_reserved_token(t) || t == special::kUnkToken));
  }
}

TEST_CASE("corpus annotation keeps all-OOV sentences") {
  MonolingualCorpus mono;
  mono.sentences.push_back(S("qq rr"));
  mono.sentences.push_back(S("ab"));
  const auto glosses = Vocabulary::from_tokens({"AB"});
  const auto words = Vocabulary::from_tokens({"ab"});
  const LemmaTable lemmas;
  RuleResources res{&words, &glosses, nullptr, &lemmas};
  const auto pairs = annotate_corpus_rule(mono, Language::kDe, res);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].gloss.tokens == std::vector<std::string>(2, std::string(special::kUnkToken)));
  CHECK(pairs[1].gloss.tokens[0] == "AB");
  for (const auto& p : pairs) {
    CHECK(p.source == PairSource::kRule);
    CHECK(p.iteration == 0);
  }
}

TEST_CASE("synthetic JSONL round trip") {
  const auto dir = temp_dir("synthetic");
  std::vector<SyntheticPair> pairs = {{S("<rule> a b"), G("A B"), PairSource::kRule, 0, false},
                                      {S("<model> c"), G(""), PairSource::kModel, 2, true}};
  write_synthetic_jsonl(dir / "s.jsonl", pairs);
  CHECK(read_synthetic_jsonl(dir / "s.jsonl") == pairs);
}
