#pragma once
// Small builders shared by the unit tests.

#include <algorithm>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "expcal/core_types.hpp"

namespace expcal::testing {

struct Tok {
  std::string text;
  std::string tag;
  Segment segment;
};

inline std::vector<Token> make_tokens(std::initializer_list<Tok> toks) {
  std::vector<Token> out;
  for (const auto& t : toks) {
    Token tok{t.text, std::nullopt, t.segment};
    if (!t.tag.empty()) tok.raw_tag = t.tag;
    out.push_back(std::move(tok));
  }
  return out;
}

inline AnnotatedInstance nli_instance(std::vector<Token> tokens, std::string gold, std::string predicted,
                                      std::map<std::string, double> dist) {
  AnnotatedInstance inst;
  inst.id = "nli-test";
  inst.task = Task::NLI;
  inst.tokens = std::move(tokens);
  inst.gold = {std::move(gold)};
  inst.prediction.task = Task::NLI;
  inst.prediction.label_or_span = std::move(predicted);
  for (const auto& [l, p] : dist) inst.prediction.top_probs.emplace_back(l, p);
  std::stable_sort(inst.prediction.top_probs.begin(), inst.prediction.top_probs.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  inst.prediction.class_dist = std::move(dist);
  label_instance(inst);
  return inst;
}

inline AnnotatedInstance qa_instance(std::vector<Token> tokens, std::vector<std::string> gold, Span span,
                                     std::vector<double> probs) {
  AnnotatedInstance inst;
  inst.id = "qa-test";
  inst.task = Task::QA;
  inst.tokens = std::move(tokens);
  inst.gold = std::move(gold);
  inst.prediction.task = Task::QA;
  inst.prediction.label_or_span = span;
  for (std::size_t i = 0; i < probs.size(); ++i) inst.prediction.top_probs.emplace_back(std::to_string(i), probs[i]);
  label_instance(inst);
  return inst;
}

// Untagged instance of n tokens "t0".."t{n-1}" for explainer tests.
inline AnnotatedInstance plain_instance(std::size_t n, Task task = Task::NLI) {
  AnnotatedInstance inst;
  inst.id = "plain-" + std::to_string(n);
  inst.task = task;
  for (std::size_t i = 0; i < n; ++i) {
    const Segment seg = task == Task::NLI ? (i < (n + 1) / 2 ? Segment::Premise : Segment::Hypothesis)
                                          : (i == 0 ? Segment::Question : Segment::Context);
    inst.tokens.push_back(Token{"t" + std::to_string(i), std::nullopt, seg});
  }
  inst.prediction.task = task;
  if (task == Task::NLI) {
    inst.gold = {"entailment"};
    inst.prediction.label_or_span = std::string("entailment");
    inst.prediction.top_probs = {{"entailment", 1.0}};
  } else {
    inst.gold = {"t" + std::to_string(n - 1)};
    inst.prediction.label_or_span = Span{n - 1, n - 1};
    inst.prediction.top_probs = {{"0", 1.0}};
  }
  label_instance(inst);
  return inst;
}

// Index of a token text "t<i>".
inline std::size_t token_index(const std::string& text) { return std::stoul(text.substr(1)); }

}  // namespace expcal::testing
