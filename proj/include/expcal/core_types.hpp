#pragma once
// Shared data model: tokens, base-model predictions, annotated instances and
// attributions, plus instance validation and correctness labeling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "expcal/error.hpp"
#include "expcal/text_match.hpp"

namespace expcal {

enum class Task { QA, NLI };

enum class Segment { Question, Context, Answer, Premise, Hypothesis };

inline constexpr std::array<Segment, 3> kQaSegments{Segment::Question, Segment::Context,
                                                    Segment::Answer};
inline constexpr std::array<Segment, 2> kNliSegments{Segment::Premise, Segment::Hypothesis};

inline std::span<const Segment> task_segments(Task task) {
  if (task == Task::QA) return kQaSegments;
  return kNliSegments;
}

inline std::string_view to_string(Task t) { return t == Task::QA ? "qa" : "nli"; }

inline Task parse_task(std::string_view s) {
  if (s == "qa" || s == "QA") return Task::QA;
  if (s == "nli" || s == "NLI") return Task::NLI;
  throw InvalidArgument("unknown task '" + std::string(s) + "'");
}

inline std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::Question: return "question";
    case Segment::Context: return "context";
    case Segment::Answer: return "answer";
    case Segment::Premise: return "premise";
    case Segment::Hypothesis: return "hypothesis";
  }
  return "?";
}

inline std::optional<Segment> parse_segment(std::string_view s) {
  for (Segment seg : {Segment::Question, Segment::Context, Segment::Answer, Segment::Premise,
                      Segment::Hypothesis}) {
    if (to_string(seg) == s) return seg;
  }
  return std::nullopt;
}

inline bool segment_allowed(Task task, Segment seg) {
  auto segs = task_segments(task);
  return std::find(segs.begin(), segs.end(), seg) != segs.end();
}

struct Token {
  std::string text;
  std::optional<std::string> raw_tag;  // Penn Treebank tag, may be absent
  Segment segment = Segment::Context;

  bool operator==(const Token&) const = default;
};

// Inclusive token range [start, end].
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  bool operator==(const Span&) const = default;
};

using LabelOrSpan = std::variant<std::string, Span>;

struct Prediction {
  Task task = Task::QA;
  LabelOrSpan label_or_span;
  // (label or rank name, probability), sorted by probability descending.
  std::vector<std::pair<std::string, double>> top_probs;
  // Full class distribution (NLI). Falls back to top_probs when absent.
  std::optional<std::map<std::string, double>> class_dist;

  double top_prob() const { return top_probs.empty() ? 0.0 : top_probs.front().second; }
  const Span* span() const { return std::get_if<Span>(&label_or_span); }
  const std::string* label() const { return std::get_if<std::string>(&label_or_span); }

  bool operator==(const Prediction&) const = default;
};

struct AnnotatedInstance {
  std::string id;
  Task task = Task::QA;
  std::vector<Token> tokens;
  // NLI: exactly one gold label. QA: any number of acceptable answer strings.
  std::vector<std::string> gold;
  Prediction prediction;
  bool correct = false;
  double quality = 0.0;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const AnnotatedInstance&) const = default;
};

enum class ExplainerKind { Lime, Shap, Exact };

inline std::string_view to_string(ExplainerKind k) {
  switch (k) {
    case ExplainerKind::Lime: return "lime";
    case ExplainerKind::Shap: return "shap";
    case ExplainerKind::Exact: return "exact";
  }
  return "?";
}

inline ExplainerKind parse_explainer_kind(std::string_view s) {
  if (s == "lime") return ExplainerKind::Lime;
  if (s == "shap") return ExplainerKind::Shap;
  if (s == "exact") return ExplainerKind::Exact;
  throw InvalidArgument("unknown explainer '" + std::string(s) + "'");
}

struct Attribution {
  double phi0 = 0.0;
  std::vector<double> phis;
  ExplainerKind explainer = ExplainerKind::Lime;
  std::string config_digest;

  double total() const {
    double s = phi0;
    for (double p : phis) s += p;
    return s;
  }
  bool operator==(const Attribution&) const = default;
};

struct Violation {
  std::string field;
  std::string rule;

  bool operator==(const Violation&) const = default;
};

// Text of the predicted answer span (QA) or the predicted label (NLI).
inline std::string predicted_text(const AnnotatedInstance& inst) {
  if (const auto* label = inst.prediction.label()) return *label;
  const Span& s = *inst.prediction.span();
  std::string out;
  for (std::size_t i = s.start; i <= s.end && i < inst.tokens.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += inst.tokens[i].text;
  }
  return out;
}

// Probability distribution the instance claims for NLI.
inline std::vector<double> distribution_values(const Prediction& p) {
  std::vector<double> v;
  if (p.class_dist) {
    for (const auto& [_, prob] : *p.class_dist) v.push_back(prob);
  } else {
    for (const auto& [_, prob] : p.top_probs) v.push_back(prob);
  }
  return v;
}

inline bool in_context_region(Segment s) { return s == Segment::Context || s == Segment::Answer; }

inline std::vector<Violation> validate_instance(const AnnotatedInstance& inst, Task task) {
  std::vector<Violation> out;
  auto add = [&](std::string field, std::string rule) {
    out.push_back({std::move(field), std::move(rule)});
  };

  if (inst.task != task) add("task", "instance task does not match requested task");
  if (inst.prediction.task != task) add("prediction.task", "prediction task does not match");
  if (inst.tokens.empty()) add("tokens", "token count must be >= 1");
  for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
    const Token& t = inst.tokens[i];
    const std::string where = "tokens[" + std::to_string(i) + "]";
    if (t.text.empty()) add(where + ".text", "token text is empty");
    if (!segment_allowed(task, t.segment)) add(where + ".segment", "segment not valid for task");
  }
  if (inst.gold.empty()) add("gold", "gold is empty");
  if (task == Task::NLI && inst.gold.size() > 1) add("gold", "NLI gold must be a single label");

  const auto& probs = inst.prediction.top_probs;
  if (probs.empty()) add("prediction.top_probs", "at least one probability required");
  bool in_range = true;
  for (const auto& [_, p] : probs) in_range = in_range && p >= 0.0 && p <= 1.0;
  if (inst.prediction.class_dist) {
    for (const auto& [_, p] : *inst.prediction.class_dist) in_range = in_range && p >= 0.0 && p <= 1.0;
  }
  if (!in_range) add("prediction.top_probs", "probabilities must lie in [0,1]");
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i].second > probs[i - 1].second) {
      add("prediction.top_probs", "probabilities must be sorted descending");
      break;
    }
  }

  if (task == Task::NLI) {
    if (!inst.prediction.label()) add("prediction.label_or_span", "NLI prediction must be a label");
    double sum = 0.0;
    for (double p : distribution_values(inst.prediction)) sum += p;
    if (!probs.empty() && std::abs(sum - 1.0) > 1e-6) add("prediction.top_probs", "probabilities sum != 1");
    if (inst.correct != (inst.quality == 1.0)) add("correct", "NLI correct must equal (quality == 1)");
  } else {
    const Span* span = inst.prediction.span();
    if (!span) {
      add("prediction.label_or_span", "QA prediction must be a span");
    } else if (span->start > span->end) {
      add("prediction.label_or_span", "span start after end");
    } else {
      bool inside = span->end < inst.tokens.size();
      for (std::size_t i = span->start; inside && i <= span->end; ++i) {
        inside = in_context_region(inst.tokens[i].segment);
      }
      if (!inside) add("prediction.label_or_span", "span outside context");
      for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
        const bool in_span = i >= span->start && i <= span->end;
        if (inst.tokens[i].segment == Segment::Answer && !in_span) {
          add("tokens[" + std::to_string(i) + "].segment", "answer segment outside predicted span");
          break;
        }
      }
    }
    if (inst.correct && inst.quality != 1.0) add("correct", "exact match requires quality == 1");
  }
  if (!(inst.quality >= 0.0 && inst.quality <= 1.0)) add("quality", "quality must lie in [0,1]");
  return out;
}

// Fills `correct` and `quality` from gold + prediction. For QA also marks the
// predicted span's tokens with the Answer segment.
inline void label_instance(AnnotatedInstance& inst) {
  if (inst.task == Task::NLI) {
    const auto* label = inst.prediction.label();
    inst.correct = label && !inst.gold.empty() && *label == inst.gold.front();
    inst.quality = inst.correct ? 1.0 : 0.0;
    return;
  }
  if (const Span* span = inst.prediction.span()) {
    for (std::size_t i = span->start; i <= span->end && i < inst.tokens.size(); ++i) {
      if (inst.tokens[i].segment == Segment::Context) inst.tokens[i].segment = Segment::Answer;
    }
  }
  const std::string pred = predicted_text(inst);
  inst.correct = false;
  inst.quality = 0.0;
  for (const auto& g : inst.gold) {
    inst.correct = inst.correct || eval::exact_match(pred, g);
    inst.quality = std::max(inst.quality, eval::token_f1(pred, g));
  }
  if (inst.correct) inst.quality = 1.0;
}

inline std::size_t count_segment(const AnnotatedInstance& inst, Segment seg) {
  return static_cast<std::size_t>(std::count_if(inst.tokens.begin(), inst.tokens.end(),
                                                [seg](const Token& t) { return t.segment == seg; }));
}

}  // namespace expcal
