#include <doctest.h>

#include <fstream>

#include "s3lg/corpus.h"
#include "support.h"

using namespace s3lg;
using namespace s3lg::testing;

TEST_CASE("tsv corpus parses in file order") {
  const auto c = parse_parallel_corpus("ich liebe\tICH LIEBEN\ndu gehst\tDU GEHEN\n", CorpusFormat::kTsv);
  REQUIRE(c.size() == 2);
  CHECK(c.pairs[0].text.tokens == std::vector<std::string>{"ich", "liebe"});
  CHECK(c.pairs[1].gloss.tokens == std::vector<std::string>{"DU", "GEHEN"});
}

TEST_CASE("jsonl corpus parses") {
  const auto c = parse_parallel_corpus(R"({"text": "a b", "gloss": "X"})"
                                       "\n"
                                       R"({"text": "c", "gloss": "Y Z"})",
                                       CorpusFormat::kJsonl);
  REQUIRE(c.size() == 2);
  CHECK(c.pairs[1].gloss.tokens.size() == 2);
}

TEST_CASE("malformed records name their line") {
  try {
    parse_parallel_corpus("a\tA\nmissing gloss column\n", CorpusFormat::kTsv);
    FAIL("expected an error");
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_parallel_corpus("", CorpusFormat::kTsv), CorpusError);
  CHECK_THROWS_AS(parse_parallel_corpus(R"({"text": "a"})", CorpusFormat::kJsonl), CorpusError);
}

TEST_CASE("missing corpus file is an error") {
  CHECK_THROWS_AS(load_parallel_corpus("/nonexistent/corpus.tsv"), CorpusError);
}

TEST_CASE("vocabulary from gloss side with count threshold") {
  ParallelCorpus c;
  c.pairs.push_back({S("a b"), G("X")});
  c.pairs.push_back({S("a"), G("X Y")});
  const auto v1 = build_vocabulary(c, CorpusSide::kGloss, 1);
  CHECK(v1.size() == special::kCount + 2);
  CHECK(v1.token(special::kCount) == "X");
  CHECK(v1.token(special::kCount + 1) == "Y");
  const auto v2 = build_vocabulary(c, CorpusSide::kGloss, 2);
  CHECK(v2.size() == special::kCount + 1);
  CHECK(v2.contains("X"));
  CHECK_FALSE(v2.contains("Y"));
}

TEST_CASE("reserved tokens occupy the lowest ids") {
  const auto v = Vocabulary::from_tokens({"q", "r"});
  CHECK(v.token(special::kPad) == special::kPadToken);
  CHECK(v.token(special::kBos) == special::kBosToken);
  CHECK(v.token(special::kEos) == special::kEosToken);
  CHECK(v.token(special::kUnk) == special::kUnkToken);
  CHECK(v.token(special::kTagRule) == special::kTagRuleToken);
  CHECK(v.token(special::kTagModel) == special::kTagModelToken);
  CHECK(v.id("q") == special::kCount);
}

TEST_CASE("encode/decode round trip and OOV closure") {
  std::mt19937_64 rng(3);
  const auto v = numbered_vocab(20, "t");
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_sentence(rng, v, 1, 10);
    CHECK(v.decode(v.encode(s.tokens)) == s.tokens);
  }
  const auto ids = v.encode({"t1", "never", "t2"});
  CHECK(ids[1] == special::kUnk);
  for (int id : ids) CHECK(id < static_cast<int>(v.size()));
  for (int i = 0; i < static_cast<int>(v.size()); ++i) CHECK(v.id(v.token(i)) == i);
}

TEST_CASE("vocabulary file round trip") {
  const auto dir = temp_dir("vocab");
  const auto v = Vocabulary::from_tokens({"b", "a", "ÄÖ"});
  v.save(dir / "v.txt");
  const auto w = Vocabulary::load(dir / "v.txt");
  CHECK(w.size() == v.size());
  for (int i = 0; i < static_cast<int>(v.size()); ++i) CHECK(w.token(i) == v.token(i));
}

TEST_CASE("corpus statistics") {
  ParallelCorpus ref;
  ref.pairs.push_back({S("a"), G("X")});
  const auto vt = build_vocabulary(ref, CorpusSide::kText);
  const auto vg = build_vocabulary(ref, CorpusSide::kGloss);
  ParallelCorpus c;
  c.pairs.push_back({S("a b"), G("X")});
  const auto stats = corpus_stats(c, vt, &vg);
  CHECK(stats.text.total_oov == 1);
  CHECK(stats.gloss->total_oov == 0);

  const auto self = corpus_stats(ref, vt, &vg);
  CHECK(self.text.total_oov == 0);

  std::mt19937_64 rng(5);
  const auto words = numbered_vocab(9, "w");
  ParallelCorpus big;
  std::size_t sum = 0;
  for (int i = 0; i < 30; ++i) {
    auto s = random_sentence(rng, words, 1, 7);
    sum += s.tokens.size();
    big.pairs.push_back({s, G("X")});
  }
  CHECK(corpus_stats(big, vt, &vg).text.total_tokens == sum);
  const auto j = stats.to_json();
  CHECK(j.at("text").contains("total_oov"));
  CHECK(j.at("gloss").contains("vocab"));
}

TEST_CASE("character tokenizer splits UTF-8 code points and drops spaces") {
  CHECK(split_characters("我 爱你") == std::vector<std::string>{"我", "爱", "你"});
  CHECK(tokenize("ab c", Tokenizer::kCharacter) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("monolingual corpus skips blank lines") {
  const auto dir = temp_dir("mono");
  std::ofstream(dir / "m.txt") << "a b\n\nc\n";
  const auto m = load_monolingual_corpus(dir / "m.txt");
  CHECK(m.size() == 2);
}
