#pragma once

// Independent reference implementations and fixtures shared by the unit and
// acceptance tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "s3lg/corpus.h"
#include "s3lg/inference.h"
#include "s3lg/model.h"
#include "s3lg/random.h"
#include "s3lg/rule_annotator.h"
#include "s3lg/training.h"
#include "s3lg/transformer.h"

namespace s3lg::testing {

inline GlossSequence G(const std::string& s) { return GlossSequence{split_whitespace(s)}; }
inline Sentence S(const std::string& s) { return Sentence{split_whitespace(s)}; }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("s3lg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------- metrics ---

// n-grams keyed by their space-joined string.
inline std::unordered_map<std::string, int> oracle_ngrams(const std::vector<std::string>& toks, int n) {
  std::unordered_map<std::string, int> out;
  for (int i = 0; i + n <= static_cast<int>(toks.size()); ++i) {
    std::string key;
    for (int j = i; j < i + n; ++j) key += toks[static_cast<std::size_t>(j)] + "\x1f";
    out[key] += 1;
  }
  return out;
}

inline double oracle_bleu(const std::vector<GlossSequence>& hyp, const std::vector<GlossSequence>& ref, int n) {
  double c = 0, r = 0;
  std::vector<double> match(static_cast<std::size_t>(n), 0), total(static_cast<std::size_t>(n), 0);
  for (std::size_t s = 0; s < hyp.size(); ++s) {
    c += static_cast<double>(hyp[s].tokens.size());
    r += static_cast<double>(ref[s].tokens.size());
    for (int k = 1; k <= n; ++k) {
      auto h = oracle_ngrams(hyp[s].tokens, k);
      auto g = oracle_ngrams(ref[s].tokens, k);
      for (auto& [key, cnt] : h) {
        total[static_cast<std::size_t>(k - 1)] += cnt;
        match[static_cast<std::size_t>(k - 1)] += std::min(cnt, g.count(key) ? g[key] : 0);
      }
    }
  }
  double prod = 1.0;
  for (int k = 0; k < n; ++k) {
    if (match[static_cast<std::size_t>(k)] == 0) return 0.0;
    prod *= match[static_cast<std::size_t>(k)] / total[static_cast<std::size_t>(k)];
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::pow(prod, 1.0 / n);
}

inline double oracle_chrf(const std::vector<GlossSequence>& hyp, const std::vector<GlossSequence>& ref) {
  const int N = 6;
  const double b2 = 4.0;
  std::vector<double> m(N, 0), ht(N, 0), rt(N, 0);
  for (std::size_t s = 0; s < hyp.size(); ++s) {
    auto chars = [](const GlossSequence& g) {
      std::vector<std::string> out;
      for (const auto& t : g.tokens) {
        for (std::size_t i = 0; i < t.size();) {
          const auto c = static_cast<unsigned char>(t[i]);
          const std::size_t len = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
          out.push_back(t.substr(i, len));
          i += len;
        }
      }
      return out;
    };
    const auto hc = chars(hyp[s]);
    const auto rc = chars(ref[s]);
    for (int k = 1; k <= N; ++k) {
      auto h = oracle_ngrams(hc, k);
      auto g = oracle_ngrams(rc, k);
      for (auto& [key, cnt] : h) {
        ht[static_cast<std::size_t>(k - 1)] += cnt;
        m[static_cast<std::size_t>(k - 1)] += std::min(cnt, g.count(key) ? g[key] : 0);
      }
      for (auto& [key, cnt] : g) rt[static_cast<std::size_t>(k - 1)] += cnt;
    }
  }
  double sum = 0;
  int orders = 0;
  for (int k = 0; k < N; ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (ht[i] == 0 || rt[i] == 0) continue;
    ++orders;
    const double p = m[i] / ht[i], r = m[i] / rt[i];
    if (p + r > 0) sum += (1 + b2) * p * r / (b2 * p + r);
  }
  return orders ? 100.0 * sum / orders : 0.0;
}

// Random corpus over a tiny alphabet so that n-gram overlaps are frequent.
inline std::pair<std::vector<GlossSequence>, std::vector<GlossSequence>> random_corpus(std::mt19937_64& rng) {
  static const std::vector<std::string> words = {"a", "b", "c", "d", "ab", "ba", "Ü", "x"};
  std::uniform_int_distribution<int> sentences(1, 10), len(0, 8), word(0, static_cast<int>(words.size()) - 1);
  std::vector<GlossSequence> h, r;
  const int n = sentences(rng);
  for (int s = 0; s < n; ++s) {
    GlossSequence a, b;
    for (int i = len(rng); i > 0; --i) a.tokens.push_back(words[static_cast<std::size_t>(word(rng))]);
    for (int i = len(rng); i > 0; --i) b.tokens.push_back(words[static_cast<std::size_t>(word(rng))]);
    h.push_back(a);
    r.push_back(b);
  }
  return {h, r};
}

// ------------------------------------------------------------ rule oracle ---

inline GlossSequence oracle_rule_zh(const Sentence& text, const Vocabulary& words, const Vocabulary& glosses,
                                    const EmbeddingLexicon& lex) {
  GlossSequence out;
  for (const auto& w : text.tokens) {
    const auto* wv = lex.find(w);
    if (!words.contains(w) || !wv) {
      out.tokens.emplace_back(special::kUnkToken);
      continue;
    }
    int best = -1;
    double best_sim = -2.0;
    for (int id = special::kCount; id < static_cast<int>(glosses.size()); ++id) {
      const auto* gv = lex.find(glosses.token(id));
      double dot = 0, nw = 0, ng = 0;
      for (std::size_t i = 0; i < wv->size(); ++i) {
        dot += (*wv)[i] * (*gv)[i];
        nw += (*wv)[i] * (*wv)[i];
        ng += (*gv)[i] * (*gv)[i];
      }
      const double sim = dot / (std::sqrt(nw) * std::sqrt(ng));
      if (sim > best_sim) {
        best_sim = sim;
        best = id;
      }
    }
    out.tokens.push_back(glosses.token(best));
  }
  return out;
}

// ----------------------------------------------------------- step scorers ---

// Scorer whose next-token distribution is a fixed pseudo-random function of
// the prefix; prefixes are keyed by their ids.
class HashScorer {
 public:
  using State = std::vector<int>;
  HashScorer(std::uint64_t seed, int vocab, double temperature) : seed_(seed), vocab_(vocab), temp_(temperature) {}

  State initial_state() const { return {}; }
  std::vector<double> next_logprobs(State& state, int token) const {
    state.push_back(token);
    std::uint64_t h = seed_;
    for (int t : state) h = mix64(h ^ static_cast<std::uint64_t>(t + 17));
    std::mt19937_64 rng(h);
    std::normal_distribution<double> normal(0.0, temp_);
    std::vector<double> logits(static_cast<std::size_t>(vocab_));
    for (auto& l : logits) l = normal(rng);
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double l : logits) z += std::exp(l - mx);
    for (auto& l : logits) l = l - mx - std::log(z);
    return logits;
  }

 private:
  std::uint64_t seed_;
  int vocab_;
  double temp_;
};

// Scorer driven by an explicit prefix -> distribution table; missing prefixes
// fall back to `fallback`.
class TableScorer {
 public:
  using State = std::vector<int>;
  TableScorer(int vocab, std::map<std::vector<int>, std::vector<double>> probs, std::vector<double> fallback)
      : vocab_(vocab), table_(std::move(probs)), fallback_(std::move(fallback)) {}

  State initial_state() const { return {}; }
  std::vector<double> next_logprobs(State& state, int token) const {
    if (token != special::kBos) state.push_back(token);
    auto it = table_.find(state);
    const auto& p = it == table_.end() ? fallback_ : it->second;
    std::vector<double> out(static_cast<std::size_t>(vocab_));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(p[i]);
    return out;
  }

 private:
  int vocab_;
  std::map<std::vector<int>, std::vector<double>> table_;
  std::vector<double> fallback_;
};

struct Enumerated {
  std::vector<int> tokens;
  double logprob;
  double score;
};

// Best finished hypothesis by penalized score over every sequence that ends
// in EOS within `max_len` steps. Ties keep the first found in lexicographic
// token order.
template <StepScorer M>
Enumerated enumerate_best(const M& model, std::size_t max_len, double penalty) {
  Enumerated best{{}, 0.0, -std::numeric_limits<double>::infinity()};
  std::function<void(typename M::State, std::vector<int>, double, int)> walk =
      [&](typename M::State state, std::vector<int> prefix, double lp, int last) {
        const auto logp = model.next_logprobs(state, last);
        for (int v = 0; v < static_cast<int>(logp.size()); ++v) {
          if (!generatable(v)) continue;
          const double next = lp + logp[static_cast<std::size_t>(v)];
          if (v == special::kEos) {
            const double s = next / std::pow(static_cast<double>(prefix.size() + 1), penalty);
            if (s > best.score) best = {prefix, next, s};
          } else if (prefix.size() + 1 < max_len) {
            auto p = prefix;
            p.push_back(v);
            walk(state, p, next, v);
          }
        }
      };
  walk(model.initial_state(), {}, 0.0, special::kBos);
  return best;
}

// ---------------------------------------------------------- micro models ---

inline Vocabulary numbered_vocab(int regular, const std::string& prefix) {
  std::vector<std::string> tokens;
  for (int i = 0; i < regular; ++i) tokens.push_back(prefix + std::to_string(i));
  return Vocabulary::from_tokens(tokens);
}

inline TransformerConfig micro_config(double dropout) {
  TransformerConfig c;
  c.layers = 2;
  c.embed_dim = 8;
  c.ffn_dim = 16;
  c.heads = 2;
  c.dropout_rate = dropout;
  c.label_smoothing = 0.1;
  c.max_len = 16;
  return c;
}

inline EncodedExample random_example(std::mt19937_64& rng, int src_vocab, int tgt_vocab, int src_len, int tgt_len) {
  std::uniform_int_distribution<int> s(special::kCount, src_vocab - 1), t(special::kCount, tgt_vocab - 1);
  EncodedExample ex;
  for (int i = 0; i < src_len; ++i) ex.src.push_back(s(rng));
  ex.src.push_back(special::kEos);
  ex.tgt_in.push_back(special::kBos);
  for (int i = 0; i < tgt_len; ++i) {
    const int id = t(rng);
    ex.tgt_in.push_back(id);
    ex.tgt_out.push_back(id);
  }
  ex.tgt_out.push_back(special::kEos);
  return ex;
}

struct GradientCheck {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs_diff = 0.0;
  double grad_norm = 0.0;
  std::size_t parameters = 0;
  double ce = 0.0;
  double cr = 0.0;
};

// Central differences of the combined loss over every parameter, with the
// dropout masks of both passes replayed from the same seed.
inline GradientCheck check_gradients(std::uint64_t seed, double w, double step = 1e-4) {
  const TransformerConfig config = micro_config(0.3);
  Transformer<double> net(config, 11, 11);
  net.initialize(seed);
  std::mt19937_64 rng(seed);
  const EncodedExample ex = random_example(rng, 11, 11, 4, 3);
  const LossOptions options{config.label_smoothing, true};
  const std::uint64_t dropout_seed = seed * 31 + 5;

  TransformerParams<double> grads = net.params().zeros_like();
  const LossBreakdown base = example_loss<double>(net, ex, w, options, dropout_seed, true, &grads, 1.0);
  GradientCheck result;
  result.ce = base.ce;
  result.cr = base.cr;
  double diff2 = 0, a2 = 0, n2 = 0;
  auto params = net.params().tensors();
  auto analytic = grads.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Eigen::Index i = 0; i < params[t]->size(); ++i) {
      double& x = params[t]->data()[i];
      const double saved = x;
      x = saved + step;
      const double up = example_loss<double>(net, ex, w, options, dropout_seed, true, nullptr, 1.0).total;
      x = saved - step;
      const double down = example_loss<double>(net, ex, w, options, dropout_seed, true, nullptr, 1.0).total;
      x = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[t]->data()[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      result.max_abs_diff = std::max(result.max_abs_diff, std::abs(a - numeric));
      ++result.parameters;
    }
  }
  result.grad_norm = std::sqrt(a2);
  result.relative_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
  return result;
}

// Seq2Seq model over numbered vocabularies w0.. and G0..
inline Seq2SeqModel small_model(std::uint64_t seed, int src_regular = 8, int tgt_regular = 8, double dropout = 0.1) {
  TransformerConfig c;
  c.layers = 2;
  c.embed_dim = 16;
  c.ffn_dim = 32;
  c.heads = 2;
  c.dropout_rate = dropout;
  c.label_smoothing = 0.1;
  c.max_len = 24;
  return init_model(c, numbered_vocab(src_regular, "w"), numbered_vocab(tgt_regular, "G"), seed);
}

inline Sentence random_sentence(std::mt19937_64& rng, const Vocabulary& vocab, int min_len, int max_len) {
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<int> id(special::kCount, static_cast<int>(vocab.size()) - 1);
  Sentence s;
  for (int i = len(rng); i > 0; --i) s.tokens.push_back(vocab.token(id(rng)));
  return s;
}

}  // namespace s3lg::testing
