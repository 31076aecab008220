#include <doctest.h>

#include <cmath>

#include "s3lg/inference.h"
#include "support.h"

using namespace s3lg;
using namespace s3lg::testing;

namespace {

constexpr int kA = special::kCount, kB = special::kCount + 1;
constexpr int kV = special::kCount + 2;

std::vector<double> dist(std::initializer_list<std::pair<int, double>> entries) {
  std::vector<double> p(kV, 1e-12);
  for (const auto& [id, prob] : entries) p[static_cast<std::size_t>(id)] = prob;
  return p;
}

// Greedy takes A (0.6) then is stuck with 0.4 continuations; B (0.4) then
// leads to a 0.95 EOS.
TableScorer trap_scorer() {
  std::map<std::vector<int>, std::vector<double>> t;
  t[{}] = dist({{kA, 0.6}, {kB, 0.4}});
  t[{kA}] = dist({{special::kEos, 0.3}, {kA, 0.35}, {kB, 0.35}});
  t[{kB}] = dist({{special::kEos, 0.95}, {kA, 0.05}});
  return TableScorer(kV, t, dist({{special::kEos, 1.0}}));
}

}  // namespace

TEST_CASE("EOS first yields an empty output") {
  TableScorer s(kV, {}, dist({{special::kEos, 0.9}, {kA, 0.1}}));
  const auto g = greedy_decode(s, 10);
  CHECK(g.tokens.empty());
  CHECK(g.finished);
  const auto b = beam_search(s, 3, 1.0, 10);
  CHECK(b.tokens.empty());
  CHECK(b.finished);
}

TEST_CASE("beam search escapes the greedy trap") {
  const auto s = trap_scorer();
  const auto g = greedy_decode(s, 3);
  CHECK(g.tokens.front() == kA);
  const auto b = beam_search(s, 3, 1.0, 3);
  CHECK(b.tokens == std::vector<int>{kB});
  CHECK(b.logprob == doctest::Approx(std::log(0.4 * 0.95)));
  CHECK(b.score > penalized_score(g.logprob, g.tokens.size() + 1, 1.0));
  const auto best = enumerate_best(s, 3, 1.0);
  CHECK(b.tokens == best.tokens);
  CHECK(b.score == doctest::Approx(best.score));
}

TEST_CASE("width one equals greedy on random scorers") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    HashScorer s(seed, 8, 1.5);
    const auto g = greedy_decode(s, 6);
    const auto b = beam_search(s, 1, 1.0, 6);
    CHECK(g.tokens == b.tokens);
    CHECK(g.finished == b.finished);
    CHECK(g.logprob == doctest::Approx(b.logprob));
  }
}

TEST_CASE("width one equals greedy on a real model") {
  const auto m = small_model(12);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_sentence(rng, m.src_vocab(), 1, 8);
    CHECK(greedy_decode(m, x, 10).gloss.tokens == beam_search(m, x, 1, 1.0, 10).gloss.tokens);
  }
}

TEST_CASE("zero length penalty ranks by raw log-probability") {
  CHECK(penalized_score(-3.0, 5, 0.0) == -3.0);
  CHECK(penalized_score(-3.0, 3, 1.0) == doctest::Approx(-1.0));
  // Short hypothesis wins without a penalty, the long one with it.
  std::map<std::vector<int>, std::vector<double>> t;
  t[{}] = dist({{special::kEos, 0.3}, {kA, 0.7}});
  t[{kA}] = dist({{kA, 1.0}});
  t[{kA, kA}] = dist({{kA, 1.0}});
  t[{kA, kA, kA}] = dist({{special::kEos, 0.35}, {kA, 0.65}});
  TableScorer s(kV, t, dist({{special::kEos, 1.0}}));
  // At most three glosses plus EOS.
  CHECK(beam_search(s, 3, 0.0, 4).tokens.empty());
  CHECK(beam_search(s, 3, 1.0, 4).tokens.size() == 3);
  CHECK(enumerate_best(s, 4, 0.0).tokens.empty());
  CHECK(enumerate_best(s, 4, 1.0).tokens.size() == 3);
}

TEST_CASE("beam score agrees with teacher-forced log-probability") {
  const auto m = small_model(13);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_sentence(rng, m.src_vocab(), 1, 6);
    const auto d = beam_search(m, x, 3, 1.0, 12);
    if (!d.finished) continue;
    CHECK(forward_logprob(m, x, d.gloss).logprob == doctest::Approx(d.logprob).epsilon(1e-5));
  }
}

TEST_CASE("decode length is capped") {
  TableScorer s(kV, {}, dist({{kA, 1.0}}));
  const auto g = greedy_decode(s, 4);
  CHECK(g.tokens.size() == 4);
  CHECK_FALSE(g.finished);
  const auto b = beam_search(s, 1, 1.0, 4);
  CHECK(b.tokens.size() == 4);
  CHECK_FALSE(b.finished);
  // A wider beam keeps an unlikely EOS, and finished hypotheses win.
  CHECK(beam_search(s, 2, 1.0, 4).finished);
}

TEST_CASE("generated ids exclude PAD and BOS") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HashScorer s(seed, 9, 2.0);
    for (int id : beam_search(s, 3, 1.0, 5).tokens) CHECK(generatable(id));
  }
}

TEST_CASE("wider beams do not lose on the greedy trap") {
  const auto s = trap_scorer();
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t w = 1; w <= 4; ++w) {
    const double score = beam_search(s, w, 1.0, 3).score;
    CHECK(score >= prev);
    prev = score;
  }
}

TEST_CASE("a beam as wide as the search space is exact") {
  // Six generatable ids over three steps: at most 150 candidates per step.
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    HashScorer s(seed, kV, 1.0);
    const auto best = enumerate_best(s, 3, 1.0);
    const auto b = beam_search(s, 150, 1.0, 3);
    CHECK(b.tokens == best.tokens);
    CHECK(b.score == doctest::Approx(best.score));
  }
}
