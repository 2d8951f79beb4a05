#pragma once
// JSON wire format for the predictor protocol (POST /predict, GET /health).
// docs/wire_protocol.md is the schema of record.

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "expcal/blackbox.hpp"
#include "expcal/error.hpp"

namespace expcal::wire {

using nlohmann::json;

inline json to_json(const Target& t) {
  if (t.span) return json{{"span", {t.span->start, t.span->end}}};
  return json{{"label", t.label.value_or("")}};
}

inline json to_json(const PredictRequest& req) {
  return json{{"task", to_string(req.task)},
              {"target", to_json(req.target)},
              {"segment_lengths", req.segment_lengths},
              {"sequences", req.sequences}};
}

inline json to_json(const PredictResponse& resp) {
  json j{{"scores", resp.scores}};
  if (!resp.distributions.empty()) {
    json dists = json::array();
    for (const auto& d : resp.distributions) {
      json row = json::array();
      for (const auto& [label, p] : d) row.push_back({label, p});
      dists.push_back(std::move(row));
    }
    j["distributions"] = std::move(dists);
  }
  return j;
}

// Schema violations name the offending field.
class SchemaError : public FormatError {
 public:
  SchemaError(const std::string& field, const std::string& what)
      : FormatError("field '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

inline PredictRequest request_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("", "request must be an object");
  PredictRequest req;
  if (!j.contains("task") || !j["task"].is_string()) throw SchemaError("task", "missing or not a string");
  try {
    req.task = parse_task(j["task"].get<std::string>());
  } catch (const InvalidArgument& e) {
    throw SchemaError("task", e.what());
  }
  if (!j.contains("target") || !j["target"].is_object()) throw SchemaError("target", "missing or not an object");
  const json& t = j["target"];
  if (t.contains("span")) {
    const json& s = t["span"];
    if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned()) {
      throw SchemaError("target.span", "must be [start, end] of non-negative integers");
    }
    req.target.span = Span{s[0].get<std::size_t>(), s[1].get<std::size_t>()};
  } else if (t.contains("label")) {
    if (!t["label"].is_string()) throw SchemaError("target.label", "must be a string");
    req.target.label = t["label"].get<std::string>();
  } else {
    throw SchemaError("target", "needs 'span' or 'label'");
  }
  if (j.contains("segment_lengths")) {
    const json& s = j["segment_lengths"];
    if (!s.is_array()) throw SchemaError("segment_lengths", "must be an array");
    for (const auto& v : s) {
      if (!v.is_number_unsigned()) throw SchemaError("segment_lengths", "entries must be non-negative integers");
      req.segment_lengths.push_back(v.get<std::size_t>());
    }
  }
  if (!j.contains("sequences") || !j["sequences"].is_array()) throw SchemaError("sequences", "missing or not an array");
  for (const auto& seq : j["sequences"]) {
    if (!seq.is_array()) throw SchemaError("sequences", "each sequence must be an array of strings");
    std::vector<std::string> tokens;
    for (const auto& tok : seq) {
      if (!tok.is_string()) throw SchemaError("sequences", "tokens must be strings");
      tokens.push_back(tok.get<std::string>());
    }
    req.sequences.push_back(std::move(tokens));
  }
  return req;
}

inline PredictResponse response_from_json(const json& j) {
  if (!j.is_object() || !j.contains("scores") || !j["scores"].is_array()) {
    throw SchemaError("scores", "missing or not an array");
  }
  PredictResponse resp;
  for (const auto& s : j["scores"]) {
    if (!s.is_number()) throw SchemaError("scores", "entries must be numbers");
    resp.scores.push_back(s.get<double>());
  }
  if (j.contains("distributions")) {
    for (const auto& row : j["distributions"]) {
      Distribution d;
      for (const auto& pair : row) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_number()) {
          throw SchemaError("distributions", "entries must be [label, probability]");
        }
        d.emplace_back(pair[0].get<std::string>(), pair[1].get<double>());
      }
      resp.distributions.push_back(std::move(d));
    }
  }
  return resp;
}

inline json health_json(const Predictor& p) { return json{{"digest", p.digest()}, {"task", to_string(p.task())}}; }

struct HttpReply {
  int status = 200;
  std::string body;
};

// Server-side handling of a POST /predict body against an in-process
// predictor: 400 with the field for malformed requests, 500 with an opaque
// message for model failures.
inline HttpReply handle_predict(const std::string& body, const Predictor& predictor) {
  PredictRequest req;
  try {
    req = request_from_json(json::parse(body));
    validate_request(req);
  } catch (const SchemaError& e) {
    return {400, json{{"error", e.what()}, {"field", e.field()}}.dump()};
  } catch (const json::exception& e) {
    return {400, json{{"error", std::string("invalid JSON: ") + e.what()}, {"field", ""}}.dump()};
  } catch (const PredictError& e) {
    return {400, json{{"error", e.what()}, {"field", "sequences"}}.dump()};
  }
  if (req.task != predictor.task()) {
    return {400, json{{"error", "task does not match the served model"}, {"field", "task"}}.dump()};
  }
  try {
    return {200, to_json(predictor.predict(req)).dump()};
  } catch (const PredictError& e) {
    if (!e.retryable()) return {400, json{{"error", e.what()}, {"field", "target"}}.dump()};
    return {500, json{{"error", "model failure"}}.dump()};
  } catch (const std::exception&) {
    return {500, json{{"error", "model failure"}}.dump()};
  }
}

}  // namespace expcal::wire
