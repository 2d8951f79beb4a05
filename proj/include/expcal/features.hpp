#pragma once
// Calibration feature vectors: base probability features, bag-of-property
// counts, and per-property attribution aggregates.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "expcal/core_types.hpp"
#include "expcal/error.hpp"
#include "expcal/properties.hpp"

namespace expcal {

enum class FeatureFamily { MaxProb, Kamath, ClsProbCal, BowProp, LimeCal, ShapCal };

inline std::string_view to_string(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::MaxProb: return "maxprob";
    case FeatureFamily::Kamath: return "kamath";
    case FeatureFamily::ClsProbCal: return "clsprobcal";
    case FeatureFamily::BowProp: return "bowprop";
    case FeatureFamily::LimeCal: return "limecal";
    case FeatureFamily::ShapCal: return "shapcal";
  }
  return "?";
}

inline FeatureFamily parse_family(std::string_view s) {
  for (FeatureFamily f : {FeatureFamily::MaxProb, FeatureFamily::Kamath, FeatureFamily::ClsProbCal,
                          FeatureFamily::BowProp, FeatureFamily::LimeCal, FeatureFamily::ShapCal}) {
    if (to_string(f) == s) return f;
  }
  throw InvalidArgument("unknown feature family '" + std::string(s) + "'");
}

inline bool uses_attributions(FeatureFamily f) {
  return f == FeatureFamily::LimeCal || f == FeatureFamily::ShapCal;
}

inline ExplainerKind family_explainer(FeatureFamily f) {
  EXPCAL_REQUIRE(uses_attributions(f), "family does not use attributions");
  return f == FeatureFamily::LimeCal ? ExplainerKind::Lime : ExplainerKind::Shap;
}

// Base family for a task: Kamath for QA, ClsProbCal for NLI.
inline FeatureFamily base_family(Task task) {
  return task == Task::QA ? FeatureFamily::Kamath : FeatureFamily::ClsProbCal;
}

// How bag-of-property features realize "presence".
enum class BowMode { Count, Binary, Frequency };

struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;
  FeatureFamily family = FeatureFamily::BowProp;

  std::size_t size() const { return values.size(); }
};

// F(v) = sum over tokens carrying v of phi_i; zero for properties no token has.
inline std::vector<double> aggregate_attributions(const Attribution& attr, const TokenProperties& props,
                                                  std::size_t space_size) {
  if (attr.phis.size() != props.size()) {
    throw InvalidArgument("attribution length " + std::to_string(attr.phis.size()) + " != token count " +
                          std::to_string(props.size()));
  }
  std::vector<double> out(space_size, 0.0);
  for (std::size_t i = 0; i < props.size(); ++i) {
    for (std::size_t v : props.per_token[i]) out.at(v) += attr.phis[i];
  }
  return out;
}

inline std::vector<double> bow_property_features(const TokenProperties& props, std::size_t space_size,
                                                 BowMode mode = BowMode::Count) {
  std::vector<double> out(space_size, 0.0);
  for (const auto& token_props : props.per_token) {
    for (std::size_t v : token_props) out.at(v) += 1.0;
  }
  if (mode == BowMode::Binary) {
    for (double& x : out) x = x > 0.0 ? 1.0 : 0.0;
  } else if (mode == BowMode::Frequency && props.size() > 0) {
    for (double& x : out) x /= static_cast<double>(props.size());
  }
  return out;
}

inline constexpr std::size_t kKamathTopK = 5;

// [p1..p5, context length, predicted answer length], lengths in tokens.
inline std::vector<double> kamath_features(const AnnotatedInstance& inst) {
  if (inst.task != Task::QA) throw InvalidArgument("kamath features require a QA instance");
  std::vector<double> out(kKamathTopK + 2, 0.0);
  const auto& probs = inst.prediction.top_probs;
  for (std::size_t k = 0; k < kKamathTopK && k < probs.size(); ++k) out[k] = probs[k].second;
  std::size_t context = 0;
  for (const auto& t : inst.tokens) context += in_context_region(t.segment) ? 1 : 0;
  out[kKamathTopK] = static_cast<double>(context);
  const Span* span = inst.prediction.span();
  out[kKamathTopK + 1] = span ? static_cast<double>(span->length()) : 0.0;
  return out;
}

inline const std::vector<std::string>& kamath_names() {
  static const std::vector<std::string> names{"prob_top1", "prob_top2",      "prob_top3",    "prob_top4",
                                              "prob_top5", "context_length", "answer_length"};
  return names;
}

inline constexpr std::string_view kEntailment = "entailment";
inline constexpr std::string_view kContradiction = "contradiction";

// [P(entailment), P(contradiction)]; neutral is implied by the other two.
inline std::vector<double> clsprob_features(const AnnotatedInstance& inst) {
  if (inst.task != Task::NLI) throw InvalidArgument("class-probability features require an NLI instance");
  auto lookup = [&](std::string_view label) -> std::optional<double> {
    if (inst.prediction.class_dist) {
      auto it = inst.prediction.class_dist->find(std::string(label));
      if (it != inst.prediction.class_dist->end()) return it->second;
    }
    for (const auto& [l, p] : inst.prediction.top_probs) {
      if (l == label) return p;
    }
    return std::nullopt;
  };
  const auto e = lookup(kEntailment);
  const auto c = lookup(kContradiction);
  if (!e || !c) throw InvalidArgument("instance " + inst.id + " lacks an entailment/contradiction distribution");
  return {*e, *c};
}

inline const std::vector<std::string>& clsprob_names() {
  static const std::vector<std::string> names{"prob_entailment", "prob_contradiction"};
  return names;
}

inline std::vector<std::string> feature_names(FeatureFamily family, const PropertySpace& space) {
  const Task task = space.scheme().task;
  std::vector<std::string> names;
  if (family == FeatureFamily::MaxProb) return {"prob_top1"};
  if (family == FeatureFamily::Kamath && task != Task::QA) throw InvalidArgument("kamath family is QA-only");
  if (family == FeatureFamily::ClsProbCal && task != Task::NLI) throw InvalidArgument("clsprobcal family is NLI-only");
  names = task == Task::QA ? kamath_names() : clsprob_names();
  if (family == FeatureFamily::Kamath || family == FeatureFamily::ClsProbCal) return names;
  for (const auto& p : space.names()) names.push_back("bow:" + p);
  if (uses_attributions(family)) {
    for (const auto& p : space.names()) names.push_back("attr:" + p);
  }
  return names;
}

// Concatenates base features, bag-of-property counts and (LimeCal/ShapCal)
// attribution aggregates in that order.
inline FeatureVector assemble(const AnnotatedInstance& inst, const Attribution* attr, const PropertySpace& space,
                              FeatureFamily family, BowMode bow_mode = BowMode::Count) {
  const Task task = space.scheme().task;
  if (inst.task != task) throw InvalidArgument("instance task does not match property scheme");
  if (uses_attributions(family) != (attr != nullptr)) {
    throw InvalidArgument("family " + std::string(to_string(family)) +
                          (attr ? " does not take attributions" : " requires attributions"));
  }
  if (attr && attr->explainer != family_explainer(family)) {
    throw InvalidArgument("attribution explainer " + std::string(to_string(attr->explainer)) +
                          " does not match family " + std::string(to_string(family)));
  }

  FeatureVector fv;
  fv.family = family;
  fv.names = feature_names(family, space);
  if (family == FeatureFamily::MaxProb) {
    fv.values = {inst.prediction.top_prob()};
    return fv;
  }
  fv.values = task == Task::QA ? kamath_features(inst) : clsprob_features(inst);
  if (family != FeatureFamily::Kamath && family != FeatureFamily::ClsProbCal) {
    const TokenProperties props = annotate(inst, space);
    const auto bow = bow_property_features(props, space.size(), bow_mode);
    fv.values.insert(fv.values.end(), bow.begin(), bow.end());
    if (attr) {
      const auto agg = aggregate_attributions(*attr, props, space.size());
      fv.values.insert(fv.values.end(), agg.begin(), agg.end());
    }
  }
  return fv;
}

}  // namespace expcal
