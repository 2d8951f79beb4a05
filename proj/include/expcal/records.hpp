#pragma once
// Line-delimited JSON datasets and the append-only attribution store.
// docs/dataset_format.md documents both schemas.

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "expcal/core_types.hpp"
#include "expcal/error.hpp"

namespace expcal {

using ordered_json = nlohmann::ordered_json;

inline ordered_json record_to_json(const AnnotatedInstance& inst) {
  ordered_json j;
  j["id"] = inst.id;
  j["task"] = to_string(inst.task);
  ordered_json tokens = ordered_json::array();
  for (const auto& t : inst.tokens) {
    ordered_json tj;
    tj["text"] = t.text;
    if (t.raw_tag) tj["tag"] = *t.raw_tag;
    tj["segment"] = to_string(t.segment);
    tokens.push_back(std::move(tj));
  }
  j["tokens"] = std::move(tokens);
  if (inst.task == Task::NLI) {
    j["gold"] = inst.gold.empty() ? std::string() : inst.gold.front();
  } else {
    j["gold"] = inst.gold;
  }
  ordered_json pred;
  if (const auto* l = inst.prediction.label()) {
    pred["label_or_span"] = *l;
  } else {
    const Span& s = *inst.prediction.span();
    pred["label_or_span"] = {s.start, s.end};
  }
  ordered_json probs = ordered_json::array();
  for (const auto& [label, p] : inst.prediction.top_probs) probs.push_back({label, p});
  pred["top_probs"] = std::move(probs);
  if (inst.prediction.class_dist) {
    ordered_json dist = ordered_json::object();
    for (const auto& [label, p] : *inst.prediction.class_dist) dist[label] = p;
    pred["class_dist"] = std::move(dist);
  }
  j["prediction"] = std::move(pred);
  return j;
}

inline std::string record_line(const AnnotatedInstance& inst) { return record_to_json(inst).dump(); }

namespace detail {

template <typename Json>
const Json& require(const Json& obj, const char* key, long line, const std::string& where = "") {
  if (!obj.is_object() || !obj.contains(key)) {
    throw FormatError("missing field '" + where + key + "'", line);
  }
  return obj.at(key);
}

}  // namespace detail

// Parses one record. Correctness and quality are derived, not read.
inline AnnotatedInstance record_from_json(const nlohmann::json& j, long line = -1) {
  using detail::require;
  auto bad = [line](const std::string& field, const std::string& what) {
    return FormatError("field '" + field + "': " + what, line);
  };
  AnnotatedInstance inst;
  const auto& id = require(j, "id", line);
  if (!id.is_string()) throw bad("id", "must be a string");
  inst.id = id.get<std::string>();
  const auto& task = require(j, "task", line);
  if (!task.is_string()) throw bad("task", "must be a string");
  try {
    inst.task = parse_task(task.get<std::string>());
  } catch (const InvalidArgument& e) {
    throw bad("task", e.what());
  }

  const auto& tokens = require(j, "tokens", line);
  if (!tokens.is_array()) throw bad("tokens", "must be an array");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tj = tokens[i];
    const std::string where = "tokens[" + std::to_string(i) + "].";
    Token t;
    const auto& text = require(tj, "text", line, where);
    if (!text.is_string()) throw bad(where + "text", "must be a string");
    t.text = text.get<std::string>();
    if (tj.contains("tag") && !tj["tag"].is_null()) {
      if (!tj["tag"].is_string()) throw bad(where + "tag", "must be a string");
      t.raw_tag = tj["tag"].get<std::string>();
    }
    const auto& seg = require(tj, "segment", line, where);
    const auto parsed = seg.is_string() ? parse_segment(seg.get<std::string>()) : std::nullopt;
    if (!parsed) throw bad(where + "segment", "unknown segment");
    t.segment = *parsed;
    inst.tokens.push_back(std::move(t));
  }

  const auto& gold = require(j, "gold", line);
  if (gold.is_string()) {
    inst.gold.push_back(gold.get<std::string>());
  } else if (gold.is_array()) {
    for (const auto& g : gold) {
      if (!g.is_string()) throw bad("gold", "entries must be strings");
      inst.gold.push_back(g.get<std::string>());
    }
  } else {
    throw bad("gold", "must be a string or an array of strings");
  }

  const auto& pred = require(j, "prediction", line);
  inst.prediction.task = inst.task;
  const auto& los = require(pred, "label_or_span", line, "prediction.");
  if (los.is_string()) {
    inst.prediction.label_or_span = los.get<std::string>();
  } else if (los.is_array() && los.size() == 2 && los[0].is_number_unsigned() && los[1].is_number_unsigned()) {
    inst.prediction.label_or_span = Span{los[0].get<std::size_t>(), los[1].get<std::size_t>()};
  } else {
    throw bad("prediction.label_or_span", "must be a label or [start, end]");
  }
  const auto& probs = require(pred, "top_probs", line, "prediction.");
  if (!probs.is_array()) throw bad("prediction.top_probs", "must be an array");
  for (const auto& p : probs) {
    if (!p.is_array() || p.size() != 2 || !p[1].is_number()) {
      throw bad("prediction.top_probs", "entries must be [label, probability]");
    }
    std::string label = p[0].is_string() ? p[0].get<std::string>() : p[0].dump();
    inst.prediction.top_probs.emplace_back(std::move(label), p[1].get<double>());
  }
  if (pred.contains("class_dist") && !pred["class_dist"].is_null()) {
    const auto& dist = pred["class_dist"];
    if (!dist.is_object()) throw bad("prediction.class_dist", "must be an object");
    std::map<std::string, double> d;
    for (auto it = dist.begin(); it != dist.end(); ++it) {
      if (!it.value().is_number()) throw bad("prediction.class_dist", "values must be numbers");
      d[it.key()] = it.value().get<double>();
    }
    inst.prediction.class_dist = std::move(d);
  }
  label_instance(inst);
  return inst;
}

inline AnnotatedInstance parse_record_line(const std::string& text, long line = -1) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what(), line);
  }
  return record_from_json(j, line);
}

struct Reject {
  long line = 0;
  std::string id;
  std::vector<Violation> violations;
};

struct IngestResult {
  std::vector<AnnotatedInstance> instances;
  std::vector<Reject> rejects;
};

// Reads every record; schema errors throw, invariant violations are collected.
inline IngestResult read_dataset(std::istream& in) {
  IngestResult out;
  std::string text;
  long line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotatedInstance inst = parse_record_line(text, line);
    auto violations = validate_instance(inst, inst.task);
    if (violations.empty()) {
      out.instances.push_back(std::move(inst));
    } else {
      out.rejects.push_back({line, inst.id, std::move(violations)});
    }
  }
  return out;
}

inline IngestResult read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

// Strict ingestion: any rejected record is an error naming its line.
inline std::vector<AnnotatedInstance> ingest(const std::string& path) {
  auto result = read_dataset(path);
  if (!result.rejects.empty()) {
    const auto& r = result.rejects.front();
    throw FormatError("record '" + r.id + "' invalid: " + r.violations.front().field + ": " +
                          r.violations.front().rule,
                      r.line);
  }
  return std::move(result.instances);
}

inline void write_dataset(const std::string& path, const std::vector<AnnotatedInstance>& instances) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write dataset '" + path + "'");
  for (const auto& inst : instances) out << record_line(inst) << '\n';
}

struct StoredAttribution {
  std::string id;
  Attribution attribution;
  double weighted_sse = 0.0;
  std::size_t n_perturbations = 0;
};

// Append-only attribution store keyed by (instance id, config digest).
class AttributionStore {
 public:
  AttributionStore() = default;
  explicit AttributionStore(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;  // a missing store is an empty store
    std::string text;
    long line = 0;
    while (std::getline(in, text)) {
      ++line;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(text);
        StoredAttribution s;
        s.id = j.at("id").get<std::string>();
        s.attribution.explainer = parse_explainer_kind(j.at("explainer").get<std::string>());
        s.attribution.config_digest = j.at("config_digest").get<std::string>();
        s.attribution.phi0 = j.at("phi0").get<double>();
        s.attribution.phis = j.at("phis").get<std::vector<double>>();
        s.weighted_sse = j.value("weighted_sse", 0.0);
        s.n_perturbations = j.value("n_perturbations", std::size_t{0});
        insert(std::move(s));
      } catch (const std::exception& e) {
        throw FormatError(std::string("attribution store '") + path_ + "': " + e.what(), line);
      }
    }
  }

  bool contains(const std::string& id, const std::string& digest) const {
    return index_.count({id, digest}) > 0;
  }

  const StoredAttribution* get(const std::string& id, const std::string& digest) const {
    auto it = index_.find({id, digest});
    return it == index_.end() ? nullptr : &records_[it->second];
  }

  // Unique record for `id` produced by `kind`; throws if several digests match
  // and none was pinned.
  const StoredAttribution* find(const std::string& id, ExplainerKind kind,
                                const std::optional<std::string>& digest = std::nullopt) const {
    if (digest) {
      const auto* s = get(id, *digest);
      return s && s->attribution.explainer == kind ? s : nullptr;
    }
    const StoredAttribution* found = nullptr;
    for (auto it = index_.lower_bound({id, ""}); it != index_.end() && it->first.first == id; ++it) {
      const auto& rec = records_[it->second];
      if (rec.attribution.explainer != kind) continue;
      if (found) throw InvalidArgument("several " + std::string(to_string(kind)) + " attributions for '" + id +
                                       "'; pin a config digest");
      found = &rec;
    }
    return found;
  }

  // Records in memory and, when backed by a file, appends one line to it.
  void append(StoredAttribution s) {
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app);
      if (!out) throw Error("cannot append to attribution store '" + path_ + "'");
      ordered_json j;
      j["id"] = s.id;
      j["explainer"] = to_string(s.attribution.explainer);
      j["config_digest"] = s.attribution.config_digest;
      j["phi0"] = s.attribution.phi0;
      j["phis"] = s.attribution.phis;
      j["weighted_sse"] = s.weighted_sse;
      j["n_perturbations"] = s.n_perturbations;
      out << j.dump() << '\n';
    }
    insert(std::move(s));
  }

  std::size_t size() const { return records_.size(); }
  const std::vector<StoredAttribution>& records() const { return records_; }

 private:
  void insert(StoredAttribution s) {
    auto key = std::make_pair(s.id, s.attribution.config_digest);
    auto it = index_.find(key);
    if (it != index_.end()) {
      records_[it->second] = std::move(s);  // later lines win
      return;
    }
    index_.emplace(std::move(key), records_.size());
    records_.push_back(std::move(s));
  }

  std::string path_;
  std::vector<StoredAttribution> records_;
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
};

}  // namespace expcal
