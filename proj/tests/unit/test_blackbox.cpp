#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "expcal/blackbox.hpp"
#include "expcal/remote.hpp"

using namespace expcal;

namespace {

PredictRequest nli_request(std::vector<std::vector<std::string>> seqs, std::string label = "entailment") {
  PredictRequest req;
  req.task = Task::NLI;
  req.target = Target::of_label(std::move(label));
  req.sequences = std::move(seqs);
  return req;
}

// Question: Where did Alice go ?   Context: Alice did go to Paris . Bob did go to Rome .
std::vector<std::string> travel_sequence() {
  return {"Where", "did", "Alice", "go", "?", "Alice", "did", "go", "to", "Paris", ".",
          "Bob",   "did", "go",    "to", "Rome", "."};
}
const std::vector<std::size_t> kTravelSegments{5, 12};
const Span kParis{9, 9}, kRome{15, 15};

}  // namespace

TEST(LinearBag, ZeroWeightsGiveConstantSigmoid) {
  LinearBagPredictor::Params p;
  p.bias = 0.7;
  p.weights = {{"a", 0.0}, {"b", 0.0}};
  const LinearBagPredictor model(p);
  const auto resp = model.predict(nli_request({{"a", "b"}, {"<mask>", "b"}, {"<mask>", "<mask>"}, {"zzz"}}));
  for (double s : resp.scores) EXPECT_NEAR(s, 1.0 / (1.0 + std::exp(-0.7)), 1e-15);
}

TEST(LinearBag, LogisticAndClampedLinks) {
  LinearBagPredictor::Params p;
  p.bias = -0.5;
  p.weights = {{"good", 2.0}, {"bad", -1.0}};
  const LinearBagPredictor logistic(p);
  EXPECT_NEAR(logistic.positive_prob({"good", "bad"}), 1.0 / (1.0 + std::exp(-0.5)), 1e-15);
  EXPECT_NEAR(logistic.positive_prob({"<mask>", "bad"}), 1.0 / (1.0 + std::exp(1.5)), 1e-15);
  const auto neg = logistic.predict(nli_request({{"good"}}, "contradiction"));
  EXPECT_NEAR(neg.scores[0], 1.0 - logistic.positive_prob({"good"}), 1e-15);
  EXPECT_THROW(logistic.predict(nli_request({{"good"}}, "neutral")), PredictError);

  p.link = LinearBagPredictor::Link::ClampedLinear;
  p.bias = 0.25;
  p.weights = {{"x", 0.5}, {"y", 0.5}};
  const LinearBagPredictor clamped(p);
  EXPECT_EQ(clamped.positive_prob({"x"}), 0.75);
  EXPECT_EQ(clamped.positive_prob({"x", "y"}), 1.0);
  EXPECT_EQ(clamped.positive_prob({"<mask>"}), 0.25);
}

TEST(LinearBag, BatchEqualsIndividualCalls) {
  LinearBagPredictor::Params p;
  p.weights = {{"a", 0.3}, {"b", -1.2}, {"c", 2.0}};
  const LinearBagPredictor model(p);
  std::vector<std::vector<std::string>> seqs{{"a", "b"}, {"c"}, {"<mask>", "c", "a"}, {"b", "b"}};
  const auto batch = model.predict(nli_request(seqs));
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    EXPECT_EQ(batch.scores[i], model.predict(nli_request({seqs[i]})).scores[0]);
    ASSERT_EQ(batch.distributions[i].size(), 2u);
    EXPECT_GE(batch.distributions[i][0].second, batch.distributions[i][1].second);
  }
}

TEST(LinearBag, DigestTracksParameters) {
  LinearBagPredictor::Params p;
  p.weights = {{"a", 1.0}};
  const auto d1 = LinearBagPredictor(p).digest();
  EXPECT_EQ(d1, LinearBagPredictor(p).digest());
  p.weights["a"] = 1.5;
  EXPECT_NE(d1, LinearBagPredictor(p).digest());
}

TEST(OverlapReader, RatioScoresAndUniformFallback) {
  const auto reader = make_overlap_predictor();
  const auto seq = travel_sequence();
  const auto cands = reader.candidates(seq, kTravelSegments);
  ASSERT_EQ(cands.size(), 2u);
  // sentence 1 matches alice, did, go; sentence 2 matches did, go
  EXPECT_NEAR(cands[0].prob, 3.0 / 5.0, 1e-15);
  EXPECT_NEAR(cands[1].prob, 2.0 / 5.0, 1e-15);
  EXPECT_EQ(cands[0].span, kParis);

  auto masked = seq;
  for (std::size_t i = 0; i < 5; ++i) masked[i] = "<mask>";
  for (const auto& c : reader.candidates(masked, kTravelSegments)) EXPECT_EQ(c.prob, 0.5);
}

TEST(OverlapReader, MaskedTerminatorMergesSentences) {
  const auto reader = make_overlap_predictor();
  auto seq = travel_sequence();
  seq[10] = "<mask>";
  const auto cands = reader.candidates(seq, kTravelSegments);
  ASSERT_EQ(cands.size(), 1u);
  EXPECT_EQ(cands[0].span, kRome);
  EXPECT_EQ(cands[0].prob, 1.0);
}

TEST(OverlapReader, RequiresTwoSegments) {
  const auto reader = make_overlap_predictor();
  PredictRequest req;
  req.task = Task::QA;
  req.target = Target::of_span(kParis);
  req.sequences = {travel_sequence()};
  req.segment_lengths = {17};
  EXPECT_THROW(reader.predict(req), PredictError);
  req.segment_lengths = {5, 11};
  EXPECT_THROW(reader.predict(req), PredictError);
}

TEST(DistractorReader, ProperNounDecidesBetweenGoldAndDistractor) {
  const auto reader = make_distractor_predictor(3.0, 1.5, 1.0, 0.0);
  const auto seq = travel_sequence();
  // gold sentence: alice(3) + did + go = 5; distractor: did + go + bias = 3.5
  auto best = reader.best(seq, kTravelSegments);
  ASSERT_TRUE(best);
  EXPECT_EQ(best->span, kParis);
  EXPECT_NEAR(best->prob, 1.0 / (1.0 + std::exp(-1.5)), 1e-12);

  auto masked = seq;
  masked[2] = "<mask>";
  best = reader.best(masked, kTravelSegments);
  EXPECT_EQ(best->span, kRome);
  EXPECT_NEAR(reader.target_score(masked, kTravelSegments, kParis), 1.0 / (1.0 + std::exp(1.5)), 1e-12);
}

TEST(DistractorReader, SoftmaxSumsToOneAndUnknownSpanScoresZero) {
  const auto reader = make_distractor_predictor();
  const auto cands = reader.candidates(travel_sequence(), kTravelSegments);
  double total = 0.0;
  for (const auto& c : cands) total += c.prob;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(reader.target_score(travel_sequence(), kTravelSegments, Span{0, 0}), 0.0);
}

TEST(DistractorReader, JitterIsDeterministicAndBounded) {
  const auto a = make_distractor_predictor();
  const auto b = make_distractor_predictor();
  const auto plain = make_distractor_predictor(3.0, 1.5, 1.0, 0.0);
  double lo = 2.0, hi = 0.0;
  for (int i = 0; i < 500; ++i) {
    const std::string w = "word" + std::to_string(i);
    const double j = a.jitter(w);
    EXPECT_EQ(j, b.jitter(w));
    lo = std::min(lo, j);
    hi = std::max(hi, j);
    EXPECT_EQ(plain.jitter(w), 1.0);
  }
  EXPECT_GE(lo, 0.5);
  EXPECT_LT(hi, 1.5);
  EXPECT_LT(lo, 0.6);
  EXPECT_GT(hi, 1.4);
  EXPECT_NE(a.digest(), plain.digest());
  EXPECT_THROW(make_distractor_predictor(3.0, 1.5, 1.0, 1.0), InvalidArgument);
}

TEST(Predictors, RejectMalformedRequests) {
  const auto reader = make_overlap_predictor();
  PredictRequest req;
  req.task = Task::QA;
  req.target = Target::of_label("x");
  req.sequences = {{"a"}};
  EXPECT_THROW(reader.predict(req), PredictError);
  req.target = Target::of_span(kParis);
  req.sequences = {};
  try {
    reader.predict(req);
    FAIL();
  } catch (const PredictError& e) {
    EXPECT_FALSE(e.retryable());
  }
}

TEST(SegmentLengths, FoldsAnswerIntoContext) {
  AnnotatedInstance inst;
  for (Segment s : {Segment::Question, Segment::Question, Segment::Context, Segment::Answer, Segment::Context}) {
    inst.tokens.push_back(Token{"w", std::nullopt, s});
  }
  EXPECT_EQ(segment_lengths(inst), (std::vector<std::size_t>{2, 3}));
}

TEST(CachingPredictor, ReusesScoresAcrossCalls) {
  std::atomic<int> calls{0};
  FunctionPredictor inner(
      Task::NLI,
      [&](const std::vector<std::string>& seq) {
        ++calls;
        return static_cast<double>(seq.size()) / 10.0;
      },
      "len");
  CachingPredictor cache(inner);
  const auto first = cache.predict(nli_request({{"a"}, {"a", "b"}, {"a"}}));
  EXPECT_EQ(first.scores, (std::vector<double>{0.1, 0.2, 0.1}));
  EXPECT_EQ(cache.misses(), 3u);
  const auto second = cache.predict(nli_request({{"a", "b"}, {"c", "d", "e"}}));
  EXPECT_EQ(second.scores, (std::vector<double>{0.2, 0.3}));
  EXPECT_EQ(cache.misses(), 4u);
  EXPECT_EQ(calls.load(), 4);
  // a different target is a different key
  cache.predict(nli_request({{"a"}}, "contradiction"));
  EXPECT_EQ(cache.misses(), 5u);
  EXPECT_EQ(cache.digest(), "len");
}
