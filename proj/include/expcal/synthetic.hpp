#pragma once
// Synthetic corpora labeled by the in-process predictors.
//
// QA: each example has a question with proper nouns and common words, and a
// context of filler sentences, one gold sentence, and a final distractor
// sentence that copies common question words next to the wrong names. With the
// distractor-sensitive reader, the prediction is right exactly when matched
// proper nouns outweigh the distractor's surface overlap, so correctness shows
// up in how much the question's proper nouns contribute to the prediction.
//
// NLI: premise/hypothesis pairs over a small vocabulary, labeled by lexical
// entailment and predicted by a linear bag-of-words model.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "expcal/blackbox.hpp"
#include "expcal/core_types.hpp"

namespace expcal::synthetic {

namespace detail {

inline std::string pseudo_word(std::mt19937_64& rng, std::size_t syllables, bool capital) {
  static const char* kOnset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "gr", "th"};
  static const char* kVowel[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
  std::uniform_int_distribution<std::size_t> on(0, std::size(kOnset) - 1), vo(0, std::size(kVowel) - 1);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) w += std::string(kOnset[on(rng)]) + kVowel[vo(rng)];
  if (capital) w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

inline std::vector<std::string> unique_words(std::mt19937_64& rng, std::size_t count, std::size_t syllables,
                                             bool capital, std::set<std::string>& taken) {
  std::vector<std::string> out;
  while (out.size() < count) {
    auto w = pseudo_word(rng, syllables, capital);
    if (taken.insert(eval::lowercase(w)).second) out.push_back(std::move(w));
  }
  return out;
}

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

inline std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> d(lo, hi);
  return d(rng);
}

// Distinct draws from `pool` avoiding `exclude`.
inline std::vector<std::string> draw_distinct(std::mt19937_64& rng, const std::vector<std::string>& pool,
                                              std::size_t count, std::set<std::string>& exclude) {
  std::vector<std::string> out;
  for (std::size_t guard = 0; out.size() < count && guard < 100000; ++guard) {
    const auto& w = pick(rng, pool);
    if (exclude.insert(w).second) out.push_back(w);
  }
  return out;
}

}  // namespace detail

struct Vocabulary {
  std::vector<std::string> names;       // NNP
  std::vector<std::string> nouns;       // NN
  std::vector<std::string> adjectives;  // JJ
  std::vector<std::string> verbs;       // VBD
  std::vector<std::string> fillers;     // NN, never used in questions

  static Vocabulary generate(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::set<std::string> taken{"the", "in", "of", "who", "what", "where", "which", "when", "and", "a"};
    Vocabulary v;
    v.names = detail::unique_words(rng, 400, 2, true, taken);
    v.nouns = detail::unique_words(rng, 200, 2, false, taken);
    v.adjectives = detail::unique_words(rng, 60, 3, false, taken);
    v.verbs = detail::unique_words(rng, 60, 1, false, taken);
    for (auto& w : v.verbs) w += "ed";
    v.fillers = detail::unique_words(rng, 200, 3, false, taken);
    return v;
  }
};

struct QaCorpusOptions {
  std::size_t count = 2000;
  std::uint64_t seed = 0;
  std::uint64_t vocabulary_seed = 17;
  std::string id_prefix = "qa";
  std::size_t min_names = 1, max_names = 3;          // proper nouns in the question
  std::size_t min_common = 2, max_common = 4;        // common words in the question
  std::size_t min_distractor_common = 1, max_distractor_common = 4;
  std::size_t max_gold_common = 3;
  std::size_t min_fillers = 1, max_fillers = 2;      // filler sentences
};

namespace detail {

struct Builder {
  AnnotatedInstance inst;

  void add(const std::string& text, const std::string& tag, Segment seg) {
    inst.tokens.push_back(Token{text, tag, seg});
  }
};

inline void add_sentence(Builder& b, std::mt19937_64& rng, std::vector<std::pair<std::string, std::string>> words,
                         const std::pair<std::string, std::string>& answer) {
  std::shuffle(words.begin(), words.end(), rng);
  b.add("the", "DT", Segment::Context);
  for (const auto& [w, tag] : words) b.add(w, tag, Segment::Context);
  b.add(answer.first, answer.second, Segment::Context);
  b.add(".", ".", Segment::Context);
}

}  // namespace detail

// Builds one QA example; the prediction comes from `reader` on the full input.
inline std::vector<AnnotatedInstance> generate_qa_corpus(const QaCorpusOptions& opt, const OverlapQaPredictor& reader) {
  using detail::uniform;
  const Vocabulary vocab = Vocabulary::generate(opt.vocabulary_seed);
  std::mt19937_64 rng(opt.seed);
  static const std::vector<std::pair<std::string, std::string>> kWh{
      {"who", "WP"}, {"what", "WP"}, {"where", "WRB"}, {"which", "WDT"}, {"when", "WRB"}};

  std::vector<AnnotatedInstance> out;
  out.reserve(opt.count);
  for (std::size_t idx = 0; idx < opt.count; ++idx) {
    std::set<std::string> used;
    const std::size_t k_names = uniform(rng, opt.min_names, opt.max_names);
    const std::size_t k_common = uniform(rng, opt.min_common, opt.max_common);
    const auto q_names = detail::draw_distinct(rng, vocab.names, k_names, used);
    std::vector<std::pair<std::string, std::string>> q_common;
    for (std::size_t c = 0; c < k_common; ++c) {
      const bool adj = uniform(rng, 0, 3) == 0;
      auto w = detail::draw_distinct(rng, adj ? vocab.adjectives : vocab.nouns, 1, used);
      q_common.emplace_back(w.front(), adj ? "JJ" : "NN");
    }
    const auto& wh = detail::pick(rng, kWh);
    const auto verb = detail::draw_distinct(rng, vocab.verbs, 1, used).front();

    detail::Builder b;
    b.inst.id = opt.id_prefix + "-" + std::to_string(idx);
    b.inst.task = Task::QA;
    b.add(wh.first, wh.second, Segment::Question);
    b.add(verb, "VBD", Segment::Question);
    {
      std::vector<std::pair<std::string, std::string>> body = q_common;
      for (const auto& n : q_names) body.emplace_back(n, "NNP");
      std::shuffle(body.begin(), body.end(), rng);
      for (const auto& [w, tag] : body) b.add(w, tag, Segment::Question);
    }
    b.add("?", ".", Segment::Question);

    auto answer_token = [&]() -> std::pair<std::string, std::string> {
      if (uniform(rng, 0, 2) == 0) {
        std::string num = std::to_string(uniform(rng, 1000, 9999));
        while (!used.insert(num).second) num = std::to_string(uniform(rng, 1000, 9999));
        return {num, "CD"};
      }
      return {detail::draw_distinct(rng, vocab.names, 1, used).front(), "NNP"};
    };
    auto fillers = [&](std::size_t k) {
      std::vector<std::pair<std::string, std::string>> f;
      for (const auto& w : detail::draw_distinct(rng, vocab.fillers, k, used)) f.emplace_back(w, "NN");
      return f;
    };

    // Gold sentence: some question names and common words.
    const std::size_t m_gold = uniform(rng, 0, k_names);
    const std::size_t c_gold = uniform(rng, 0, std::min(opt.max_gold_common, k_common));
    std::vector<std::pair<std::string, std::string>> gold_words = fillers(uniform(rng, 1, 3));
    {
      auto names = q_names;
      std::shuffle(names.begin(), names.end(), rng);
      for (std::size_t i = 0; i < m_gold; ++i) gold_words.emplace_back(names[i], "NNP");
      auto common = q_common;
      std::shuffle(common.begin(), common.end(), rng);
      for (std::size_t i = 0; i < c_gold; ++i) gold_words.push_back(common[i]);
      gold_words.emplace_back(detail::draw_distinct(rng, vocab.verbs, 1, used).front(), "VBD");
    }
    const auto gold_answer = answer_token();

    // Distractor: common question words next to names absent from the question.
    const std::size_t c_dist = uniform(rng, opt.min_distractor_common, std::min(opt.max_distractor_common, k_common));
    std::vector<std::pair<std::string, std::string>> dist_words = fillers(uniform(rng, 0, 2));
    {
      auto common = q_common;
      std::shuffle(common.begin(), common.end(), rng);
      for (std::size_t i = 0; i < c_dist; ++i) dist_words.push_back(common[i]);
      for (const auto& n : detail::draw_distinct(rng, vocab.names, k_names, used)) dist_words.emplace_back(n, "NNP");
      dist_words.emplace_back(detail::draw_distinct(rng, vocab.verbs, 1, used).front(), "VBD");
    }
    const auto dist_answer = answer_token();

    const std::size_t n_fill = uniform(rng, opt.min_fillers, opt.max_fillers);
    const std::size_t gold_slot = uniform(rng, 0, n_fill);
    for (std::size_t s = 0; s <= n_fill; ++s) {
      if (s == gold_slot) {
        detail::add_sentence(b, rng, gold_words, gold_answer);
      } else {
        auto words = fillers(uniform(rng, 2, 4));
        words.emplace_back(detail::draw_distinct(rng, vocab.verbs, 1, used).front(), "VBD");
        detail::add_sentence(b, rng, words, answer_token());
      }
    }
    detail::add_sentence(b, rng, dist_words, dist_answer);

    AnnotatedInstance& inst = b.inst;
    inst.gold = {gold_answer.first};
    std::vector<std::string> seq;
    for (const auto& t : inst.tokens) seq.push_back(t.text);
    const auto seg = segment_lengths(inst);
    auto cands = reader.candidates(seq, seg);
    const auto best = reader.best(seq, seg);
    std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& c) { return a.prob > c.prob; });
    inst.prediction.task = Task::QA;
    inst.prediction.label_or_span = best->span;
    for (const auto& c : cands) {
      inst.prediction.top_probs.emplace_back(std::to_string(c.span.start) + ":" + std::to_string(c.span.end), c.prob);
    }
    label_instance(inst);
    out.push_back(std::move(inst));
  }
  return out;
}

struct NliCorpusOptions {
  std::size_t count = 500;
  std::uint64_t seed = 0;
  std::uint64_t vocabulary_seed = 29;
  std::string id_prefix = "nli";
  std::size_t vocabulary_size = 40;
};

// Linear bag-of-words NLI model matching the corpus vocabulary: negation and
// contrast words push toward contradiction, everything else weakly toward
// entailment.
inline LinearBagPredictor make_nli_predictor(std::uint64_t vocabulary_seed = 29, std::size_t vocabulary_size = 40) {
  const Vocabulary vocab = Vocabulary::generate(vocabulary_seed);
  LinearBagPredictor::Params p;
  p.bias = 0.2;
  std::mt19937_64 rng(vocabulary_seed ^ 0x5eedULL);
  std::normal_distribution<double> w(0.05, 0.15);
  for (std::size_t i = 0; i < vocabulary_size && i < vocab.nouns.size(); ++i) p.weights[vocab.nouns[i]] = w(rng);
  p.weights["not"] = -1.6;
  p.weights["never"] = -1.2;
  p.weights["but"] = -0.4;
  return LinearBagPredictor(p);
}

// Gold: entailment iff the hypothesis has no negation and all its nouns occur
// in the premise; contradiction otherwise.
inline std::vector<AnnotatedInstance> generate_nli_corpus(const NliCorpusOptions& opt,
                                                          const LinearBagPredictor& model) {
  using detail::uniform;
  const Vocabulary vocab = Vocabulary::generate(opt.vocabulary_seed);
  std::vector<std::string> nouns(vocab.nouns.begin(),
                                 vocab.nouns.begin() + static_cast<std::ptrdiff_t>(std::min(opt.vocabulary_size, vocab.nouns.size())));
  std::mt19937_64 rng(opt.seed);
  std::vector<AnnotatedInstance> out;
  for (std::size_t idx = 0; idx < opt.count; ++idx) {
    AnnotatedInstance inst;
    inst.id = opt.id_prefix + "-" + std::to_string(idx);
    inst.task = Task::NLI;
    std::vector<std::string> premise;
    const std::size_t np = uniform(rng, 3, 6);
    inst.tokens.push_back({"the", "DT", Segment::Premise});
    for (std::size_t i = 0; i < np; ++i) {
      premise.push_back(detail::pick(rng, nouns));
      inst.tokens.push_back({premise.back(), "NN", Segment::Premise});
      if (i + 1 == np / 2) inst.tokens.push_back({detail::pick(rng, vocab.verbs), "VBD", Segment::Premise});
    }
    inst.tokens.push_back({".", ".", Segment::Premise});

    bool entailed = true;
    inst.tokens.push_back({"the", "DT", Segment::Hypothesis});
    const std::size_t nh = uniform(rng, 1, 3);
    for (std::size_t i = 0; i < nh; ++i) {
      const bool copy = uniform(rng, 0, 3) != 0;
      const std::string w = copy ? detail::pick(rng, premise) : detail::pick(rng, nouns);
      entailed = entailed && std::find(premise.begin(), premise.end(), w) != premise.end();
      inst.tokens.push_back({w, "NN", Segment::Hypothesis});
    }
    const std::size_t neg = uniform(rng, 0, 5);
    if (neg == 0) {
      inst.tokens.push_back({"not", "RB", Segment::Hypothesis});
      entailed = false;
    } else if (neg == 1) {
      inst.tokens.push_back({"never", "RB", Segment::Hypothesis});
      entailed = false;
    } else if (neg == 2) {
      inst.tokens.push_back({"but", "CC", Segment::Hypothesis});
    }
    inst.tokens.push_back({detail::pick(rng, vocab.verbs), "VBD", Segment::Hypothesis});
    inst.tokens.push_back({".", ".", Segment::Hypothesis});

    inst.gold = {entailed ? "entailment" : "contradiction"};
    std::vector<std::string> seq;
    for (const auto& t : inst.tokens) seq.push_back(t.text);
    const auto dist = model.distribution(seq);
    inst.prediction.task = Task::NLI;
    inst.prediction.label_or_span = dist.front().first;
    inst.prediction.top_probs = dist;
    std::map<std::string, double> cd;
    for (const auto& [l, p] : dist) cd[l] = p;
    cd.emplace("neutral", 0.0);
    inst.prediction.class_dist = std::move(cd);
    label_instance(inst);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace expcal::synthetic
