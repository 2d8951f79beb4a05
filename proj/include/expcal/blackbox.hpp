#pragma once
// Black-box predictor contract plus deterministic in-process predictors.
//
// A predictor answers batches of (possibly masked) token sequences with the
// probability it assigns to a fixed target: a class label (NLI) or an answer
// span given as token positions (QA). Masking is length-preserving, so span
// positions stay valid under every perturbation.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "expcal/core_types.hpp"
#include "expcal/digest.hpp"
#include "expcal/error.hpp"

namespace expcal {

struct Target {
  std::optional<std::string> label;  // NLI
  std::optional<Span> span;          // QA

  static Target of_label(std::string l) { return Target{std::move(l), std::nullopt}; }
  static Target of_span(Span s) { return Target{std::nullopt, s}; }
  static Target of_prediction(const Prediction& p) {
    if (const auto* l = p.label()) return of_label(*l);
    return of_span(*p.span());
  }
  bool operator==(const Target&) const = default;
};

struct PredictRequest {
  Task task = Task::QA;
  Target target;
  // Lengths of consecutive segments (QA: question, context; NLI: premise,
  // hypothesis). Shared by every sequence in the batch.
  std::vector<std::size_t> segment_lengths;
  std::vector<std::vector<std::string>> sequences;
};

using Distribution = std::vector<std::pair<std::string, double>>;

struct PredictResponse {
  std::vector<double> scores;
  std::vector<Distribution> distributions;  // optional, empty or one per sequence
};

inline void validate_request(const PredictRequest& req) {
  if (req.sequences.empty()) throw PredictError("malformed request: empty batch", false);
  for (std::size_t i = 0; i < req.sequences.size(); ++i) {
    if (req.sequences[i].empty()) {
      throw PredictError("malformed request: sequence " + std::to_string(i) + " is empty", false);
    }
  }
  if (req.task == Task::QA && !req.target.span) throw PredictError("malformed request: QA target needs a span", false);
  if (req.task == Task::NLI && !req.target.label) throw PredictError("malformed request: NLI target needs a label", false);
}

class Predictor {
 public:
  virtual ~Predictor() = default;
  // Must be safe to call concurrently.
  virtual PredictResponse predict(const PredictRequest& req) const = 0;
  virtual std::string digest() const = 0;
  virtual Task task() const = 0;
};

// Segment run lengths of an instance, with Answer folded into Context.
inline std::vector<std::size_t> segment_lengths(const AnnotatedInstance& inst) {
  std::vector<std::size_t> out;
  auto canon = [](Segment s) { return s == Segment::Answer ? Segment::Context : s; };
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    if (i == 0 || canon(inst.tokens[i].segment) != canon(inst.tokens[i - 1].segment)) {
      out.push_back(0);
    }
    ++out.back();
  }
  return out;
}

// Wraps an arbitrary scoring function of the token sequence. Mainly for tests
// and oracles; ignores the target.
class FunctionPredictor final : public Predictor {
 public:
  using Fn = std::function<double(const std::vector<std::string>&)>;

  FunctionPredictor(Task task, Fn fn, std::string digest)
      : task_(task), fn_(std::move(fn)), digest_(std::move(digest)) {}

  PredictResponse predict(const PredictRequest& req) const override {
    validate_request(req);
    PredictResponse out;
    out.scores.reserve(req.sequences.size());
    for (const auto& seq : req.sequences) out.scores.push_back(fn_(seq));
    return out;
  }
  std::string digest() const override { return digest_; }
  Task task() const override { return task_; }

 private:
  Task task_;
  Fn fn_;
  std::string digest_;
};

// (a) Linear bag-of-words classifier over present tokens.
//   s = bias + sum_{i : token i present} weights[text_i]
//   P(positive) = sigmoid(s)          (Link::Logistic)
//               = clamp(s, 0, 1)      (Link::ClampedLinear)
//   P(negative) = 1 - P(positive)
class LinearBagPredictor final : public Predictor {
 public:
  enum class Link { Logistic, ClampedLinear };

  struct Params {
    double bias = 0.0;
    std::map<std::string, double> weights;
    Link link = Link::Logistic;
    std::string positive_label = "entailment";
    std::string negative_label = "contradiction";
    std::string mask_token = "<mask>";
  };

  explicit LinearBagPredictor(Params p) : p_(std::move(p)) {}

  double positive_prob(const std::vector<std::string>& seq) const {
    double s = p_.bias;
    for (const auto& tok : seq) {
      if (tok == p_.mask_token) continue;
      auto it = p_.weights.find(tok);
      if (it != p_.weights.end()) s += it->second;
    }
    if (p_.link == Link::Logistic) return 1.0 / (1.0 + std::exp(-s));
    return std::clamp(s, 0.0, 1.0);
  }

  Distribution distribution(const std::vector<std::string>& seq) const {
    const double p = positive_prob(seq);
    Distribution d{{p_.positive_label, p}, {p_.negative_label, 1.0 - p}};
    std::stable_sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return d;
  }

  PredictResponse predict(const PredictRequest& req) const override {
    validate_request(req);
    const std::string& label = *req.target.label;
    if (label != p_.positive_label && label != p_.negative_label) {
      throw PredictError("unknown target label '" + label + "'", false);
    }
    PredictResponse out;
    for (const auto& seq : req.sequences) {
      const double p = positive_prob(seq);
      out.scores.push_back(label == p_.positive_label ? p : 1.0 - p);
      out.distributions.push_back(distribution(seq));
    }
    return out;
  }

  std::string digest() const override {
    std::ostringstream os;
    os.precision(17);
    os << "linear-bag|" << p_.bias << '|' << static_cast<int>(p_.link) << '|' << p_.positive_label << '|'
       << p_.negative_label << '|' << p_.mask_token;
    for (const auto& [k, v] : p_.weights) os << '|' << k << '=' << v;
    return short_digest(os.str());
  }
  Task task() const override { return Task::NLI; }
  const Params& params() const { return p_; }

 private:
  Params p_;
};

// (b)/(c) Extractive QA by lexical overlap.
//
// Input layout: question tokens then context tokens (segment_lengths = {q, c}).
// The context splits into sentences at `sentence_end` tokens (a masked
// terminator does not split). Each sentence proposes one answer: its last
// token before the terminator.
//
// For sentence s, score_s = sum over visible question tokens q whose
// lowercased text occurs among the visible tokens of s of weight(q), where
// weight = proper_noun_weight for capitalized question tokens and 1 otherwise,
// times 1 + weight_jitter * u(q) with u(q) in [-1, 1) a fixed hash of the
// lowercased word and jitter_seed. The last sentence additionally receives
// distractor_bias.
//
//   Ratio:   P(s) = score_s / sum_t score_t,  uniform 1/S when all scores are 0
//   Softmax: P(s) = exp(score_s / T) / sum_t exp(score_t / T)
//
// The predicted span is the argmax sentence's answer (ties -> earliest). The
// score for a target span is the total probability of sentences proposing it.
class OverlapQaPredictor final : public Predictor {
 public:
  enum class Normalization { Ratio, Softmax };

  struct Params {
    double proper_noun_weight = 1.0;
    double distractor_bias = 0.0;
    Normalization normalization = Normalization::Ratio;
    double temperature = 1.0;
    double weight_jitter = 0.0;
    std::uint64_t jitter_seed = 0;
    std::string sentence_end = ".";
    std::string mask_token = "<mask>";
  };

  struct Candidate {
    Span span;
    double prob = 0.0;
  };

  explicit OverlapQaPredictor(Params p) : p_(std::move(p)) {
    EXPCAL_REQUIRE(p_.temperature > 0.0, "temperature must be positive");
    EXPCAL_REQUIRE(p_.weight_jitter >= 0.0 && p_.weight_jitter < 1.0, "weight jitter must lie in [0, 1)");
  }

  // Per-word multiplier 1 + weight_jitter * u, u uniform-ish in [-1, 1).
  double jitter(const std::string& lowered) const {
    if (p_.weight_jitter == 0.0) return 1.0;
    std::uint64_t h = 1469598103934665603ULL ^ p_.jitter_seed;
    for (unsigned char c : lowered) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return 1.0 + p_.weight_jitter * (2.0 * u - 1.0);
  }

  static bool is_proper_noun(const std::string& tok) {
    return !tok.empty() && std::isupper(static_cast<unsigned char>(tok.front()));
  }

  // Candidates in sentence order with their probabilities.
  std::vector<Candidate> candidates(const std::vector<std::string>& seq,
                                    const std::vector<std::size_t>& seg_lengths) const {
    if (seg_lengths.size() != 2 || seg_lengths[0] + seg_lengths[1] != seq.size()) {
      throw PredictError("malformed request: QA needs segment_lengths {question, context} covering the sequence",
                         false);
    }
    const std::size_t q_len = seg_lengths[0];

    std::unordered_map<std::string, double> question_weight;
    for (std::size_t i = 0; i < q_len; ++i) {
      const auto& tok = seq[i];
      if (tok == p_.mask_token) continue;
      const std::string key = eval::lowercase(tok);
      question_weight[key] += (is_proper_noun(tok) ? p_.proper_noun_weight : 1.0) * jitter(key);
    }

    struct Sentence {
      std::size_t begin, end;  // [begin, end)
      std::size_t answer;
    };
    std::vector<Sentence> sentences;
    std::size_t begin = q_len;
    for (std::size_t i = q_len; i < seq.size(); ++i) {
      const bool last = i + 1 == seq.size();
      if (seq[i] == p_.sentence_end || last) {
        const std::size_t end = i + 1;
        const bool terminated = seq[i] == p_.sentence_end;
        if (!terminated || i > begin) {
          sentences.push_back({begin, end, terminated ? i - 1 : i});
        }
        begin = end;
      }
    }

    std::vector<Candidate> out;
    if (sentences.empty()) return out;
    std::vector<double> scores;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      std::unordered_map<std::string, bool> seen;
      double score = 0.0;
      for (std::size_t i = sentences[s].begin; i < sentences[s].end; ++i) {
        if (seq[i] == p_.mask_token || seq[i] == p_.sentence_end) continue;
        const std::string key = eval::lowercase(seq[i]);
        if (seen[key]) continue;
        seen[key] = true;
        auto it = question_weight.find(key);
        if (it != question_weight.end()) score += it->second;
      }
      if (s + 1 == sentences.size()) score += p_.distractor_bias;
      scores.push_back(score);
    }

    std::vector<double> probs(scores.size());
    if (p_.normalization == Normalization::Ratio) {
      double total = 0.0;
      for (double s : scores) total += s;
      for (std::size_t s = 0; s < scores.size(); ++s) {
        probs[s] = total > 0.0 ? scores[s] / total : 1.0 / static_cast<double>(scores.size());
      }
    } else {
      const double top = *std::max_element(scores.begin(), scores.end());
      double total = 0.0;
      for (std::size_t s = 0; s < scores.size(); ++s) {
        probs[s] = std::exp((scores[s] - top) / p_.temperature);
        total += probs[s];
      }
      for (double& p : probs) p /= total;
    }
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      out.push_back({Span{sentences[s].answer, sentences[s].answer}, probs[s]});
    }
    return out;
  }

  // Argmax candidate; ties resolved toward the earliest sentence.
  std::optional<Candidate> best(const std::vector<std::string>& seq,
                                const std::vector<std::size_t>& seg_lengths) const {
    auto cands = candidates(seq, seg_lengths);
    if (cands.empty()) return std::nullopt;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < cands.size(); ++i) {
      if (cands[i].prob > cands[arg].prob) arg = i;
    }
    return cands[arg];
  }

  double target_score(const std::vector<std::string>& seq, const std::vector<std::size_t>& seg_lengths,
                      const Span& target) const {
    double p = 0.0;
    for (const auto& c : candidates(seq, seg_lengths)) {
      if (c.span == target) p += c.prob;
    }
    return std::clamp(p, 0.0, 1.0);
  }

  PredictResponse predict(const PredictRequest& req) const override {
    validate_request(req);
    PredictResponse out;
    for (const auto& seq : req.sequences) {
      auto cands = candidates(seq, req.segment_lengths);
      double p = 0.0;
      Distribution dist;
      for (const auto& c : cands) {
        if (c.span == *req.target.span) p += c.prob;
        dist.emplace_back(std::to_string(c.span.start) + ":" + std::to_string(c.span.end), c.prob);
      }
      std::stable_sort(dist.begin(), dist.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
      out.scores.push_back(std::clamp(p, 0.0, 1.0));
      out.distributions.push_back(std::move(dist));
    }
    return out;
  }

  std::string digest() const override {
    std::ostringstream os;
    os.precision(17);
    os << "overlap-qa|" << p_.proper_noun_weight << '|' << p_.distractor_bias << '|'
       << static_cast<int>(p_.normalization) << '|' << p_.temperature << '|' << p_.sentence_end << '|'
       << p_.mask_token;
    if (p_.weight_jitter != 0.0) os << '|' << p_.weight_jitter << '|' << p_.jitter_seed;
    return short_digest(os.str());
  }
  Task task() const override { return Task::QA; }
  const Params& params() const { return p_; }

 private:
  Params p_;
};

// Plain lexical-overlap reader: confidence is the overlap ratio.
inline OverlapQaPredictor make_overlap_predictor() { return OverlapQaPredictor({}); }

// Reader whose final context sentence acts as a distractor: it carries a
// surface-overlap bias, so it wins whenever the question's proper nouns are
// hidden and only common words remain to match.
inline OverlapQaPredictor make_distractor_predictor(double proper_noun_weight = 3.0,
                                                    double distractor_bias = 1.5,
                                                    double temperature = 1.0,
                                                    double weight_jitter = 0.5) {
  OverlapQaPredictor::Params p;
  p.proper_noun_weight = proper_noun_weight;
  p.distractor_bias = distractor_bias;
  p.normalization = OverlapQaPredictor::Normalization::Softmax;
  p.temperature = temperature;
  p.weight_jitter = weight_jitter;
  return OverlapQaPredictor(p);
}

}  // namespace expcal
