#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "s3lg/metrics.h"
#include "support.h"

using namespace s3lg;
using namespace s3lg::testing;

namespace {

std::vector<GlossSequence> Gs(std::initializer_list<const char*> lines) {
  std::vector<GlossSequence> out;
  for (const char* l : lines) out.push_back(G(l));
  return out;
}

}  // namespace

TEST_CASE("BLEU and chrF agree with brute-force counters") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto [h, r] = random_corpus(rng);
    for (int n = 1; n <= 4; ++n) CHECK(bleu_n(h, r, n) == doctest::Approx(oracle_bleu(h, r, n)).epsilon(1e-9));
    CHECK(chrf(h, r) == doctest::Approx(oracle_chrf(h, r)).epsilon(1e-9));
  }
}

TEST_CASE("BLEU examples") {
  const auto ref = Gs({"a b c d", "x y z w v"});
  for (int n = 1; n <= 4; ++n) CHECK(bleu_n(ref, ref, n) == 100.0);
  CHECK(bleu_n(Gs({"a b c"}), Gs({"a b c d"}), 1) == doctest::Approx(71.65).epsilon(1e-4));
  CHECK(bleu_n(Gs({"a b c"}), Gs({"a b c d"}), 1) == doctest::Approx(100.0 * std::exp(1.0 - 4.0 / 3.0)));
  CHECK(bleu_n(Gs({"p q"}), Gs({"a b"}), 1) == 0.0);
  // A missing 4-gram zeroes BLEU-4 at corpus level.
  CHECK(bleu_n(Gs({"a b c"}), Gs({"a b c"}), 4) == 0.0);
}

TEST_CASE("ROUGE-L examples") {
  CHECK(rouge(Gs({"a b c"}), Gs({"a b c"})) == 100.0);
  CHECK(rouge(Gs({"a b"}), Gs({"c d"})) == 0.0);
  const double p = 2.0 / 3.0, r = 1.0, b2 = 1.44;
  const double f = 100.0 * (1 + b2) * p * r / (r + b2 * p);
  CHECK(rouge(Gs({"a b c"}), Gs({"a c"})) == doctest::Approx(f));
  CHECK(rouge(Gs({"a b c"}), Gs({"a c"})) == doctest::Approx(82.99).epsilon(1e-4));
  CHECK(rouge(Gs({"a b c", "x"}), Gs({"a b c", "y"})) == doctest::Approx(50.0));
}

TEST_CASE("chrF examples") {
  CHECK(chrf(Gs({"ABC DEF"}), Gs({"ABC DEF"})) == doctest::Approx(100.0));
  CHECK(chrf(Gs({"ABC"}), Gs({"XYZ"})) == 0.0);
  // Whitespace does not separate character n-grams.
  CHECK(chrf(Gs({"AB C"}), Gs({"A BC"})) == doctest::Approx(100.0));
}

TEST_CASE("metrics stay in range and ignore sentence order") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    auto [h, r] = random_corpus(rng);
    const auto report = evaluate(h, r);
    for (double v : {report.rouge, report.chrf, report.bleu.at(1), report.bleu.at(4)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 100.0);
    }
    std::vector<std::size_t> order(h.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<GlossSequence> hp, rp;
    for (auto i : order) {
      hp.push_back(h[i]);
      rp.push_back(r[i]);
    }
    CHECK(bleu_n(hp, rp, 4) == doctest::Approx(bleu_n(h, r, 4)));
    CHECK(chrf(hp, rp) == doctest::Approx(chrf(h, r)));
    CHECK(rouge(hp, rp) == doctest::Approx(rouge(h, r)));
  }
}

TEST_CASE("metric errors") {
  CHECK_THROWS_AS(bleu_n({}, {}, 4), MetricError);
  CHECK_THROWS_AS(rouge(Gs({"a"}), Gs({"a", "b"})), MetricError);
  CHECK_THROWS_AS(chrf({}, {}), MetricError);
}

TEST_CASE("low-frequency accuracy formula") {
  const FrequencyMap counts = {{"RARE", 1}, {"OTHER", 2}, {"COMMON", 50}};
  const auto ref = Gs({"RARE COMMON", "RARE", "OTHER COMMON", "RARE OTHER", "COMMON"});
  const auto hyp = Gs({"RARE", "COMMON", "COMMON", "RARE", "COMMON"});
  const auto r = low_freq_accuracy(hyp, ref, counts, {3});
  CHECK(r.at(3).amount == 4);
  CHECK(r.at(3).correct == 1);
  CHECK(*r.at(3).accuracy == 25.0);
  const auto none = low_freq_accuracy(hyp, ref, counts, {0});
  CHECK(none.at(0).amount == 0);
  CHECK_FALSE(none.at(0).accuracy.has_value());
  // Unseen glosses count as frequency zero.
  CHECK(low_freq_accuracy(Gs({"NEW"}), Gs({"NEW"}), counts, {0}).at(0).amount == 1);
}

TEST_CASE("low-frequency amounts grow with the threshold") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    auto [h, r] = random_corpus(rng);
    FrequencyMap counts;
    std::uniform_int_distribution<std::size_t> c(0, 20);
    for (const auto& w : {"a", "b", "c", "d", "ab", "ba", "Ü", "x"}) counts[w] = c(rng);
    const auto res = low_freq_accuracy(h, r, counts, kDefaultLowFrequencyThresholds);
    std::size_t prev = 0;
    for (int tau : kDefaultLowFrequencyThresholds) {
      CHECK(res.at(tau).amount >= prev);
      prev = res.at(tau).amount;
      if (res.at(tau).accuracy) {
        CHECK(*res.at(tau).accuracy >= 0.0);
        CHECK(*res.at(tau).accuracy <= 100.0);
      }
    }
  }
}

TEST_CASE("evaluation report round trip") {
  const auto ref = Gs({"A B C", "D"});
  const FrequencyMap counts = {{"A", 1}};
  const auto report = evaluate(Gs({"A B", "D"}), ref, &counts, {3, 6});
  const auto back = EvalReport::from_json(report.to_json());
  CHECK(back.to_json() == report.to_json());
  CHECK(report.bleu.size() == 4);
}
