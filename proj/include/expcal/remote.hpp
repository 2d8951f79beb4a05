#pragma once
// HTTP client for out-of-process predictors, plus an optional response cache
// usable with any predictor.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "httplib.h"

#include "expcal/blackbox.hpp"
#include "expcal/error.hpp"
#include "expcal/wire.hpp"

namespace expcal {

struct RetryPolicy {
  std::size_t max_attempts = 4;
  std::chrono::milliseconds initial_backoff{50};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{2000};
};

struct RemoteConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
  std::optional<std::string> bearer_token;
};

// Parses "http://host:port" (scheme optional).
inline RemoteConfig parse_endpoint(const std::string& url) {
  RemoteConfig cfg;
  std::string rest = url;
  if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
  if (rest.rfind("https://", 0) == 0) throw InvalidArgument("https endpoints are not supported");
  if (const auto slash = rest.find('/'); slash != std::string::npos) rest = rest.substr(0, slash);
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos) {
    cfg.host = rest;
  } else {
    cfg.host = rest.substr(0, colon);
    try {
      cfg.port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw InvalidArgument("bad port in endpoint '" + url + "'");
    }
  }
  if (cfg.host.empty() || cfg.port <= 0 || cfg.port > 65535) throw InvalidArgument("bad endpoint '" + url + "'");
  return cfg;
}

class RemotePredictor final : public Predictor {
 public:
  explicit RemotePredictor(RemoteConfig cfg)
      : cfg_(std::move(cfg)),
        slots_(std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(std::max<std::size_t>(cfg_.max_in_flight, 1)))) {}

  PredictResponse predict(const PredictRequest& req) const override {
    validate_request(req);
    const std::string body = wire::to_json(req).dump();
    slots_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{slots_.get()};

    auto backoff = cfg_.retry.initial_backoff;
    std::string last_error;
    const std::size_t attempts = std::max<std::size_t>(cfg_.retry.max_attempts, 1);
    for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff = std::min(cfg_.retry.max_backoff,
                           std::chrono::milliseconds(static_cast<long long>(backoff.count() * cfg_.retry.multiplier)));
      }
      auto client = make_client();
      auto res = client->Post("/predict", body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) {
        PredictResponse resp;
        try {
          resp = wire::response_from_json(nlohmann::json::parse(res->body));
        } catch (const std::exception& e) {
          throw PredictError(std::string("malformed response: ") + e.what(), false);
        }
        if (resp.scores.size() != req.sequences.size()) {
          throw PredictError("response length does not match request batch", false);
        }
        return resp;
      }
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      if (!retryable_status(res->status)) throw PredictError(last_error, false);
    }
    throw PredictError("predictor unavailable after " + std::to_string(attempts) + " attempts (" + last_error + ")",
                       true);
  }

  std::string digest() const override { return "remote:" + health().first; }
  Task task() const override { return health().second; }

 private:
  static bool retryable_status(int status) { return status == 429 || status >= 500; }

  std::unique_ptr<httplib::Client> make_client() const {
    auto c = std::make_unique<httplib::Client>(cfg_.host, cfg_.port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    c->set_connection_timeout(secs.count(), usecs.count());
    c->set_read_timeout(secs.count(), usecs.count());
    c->set_write_timeout(secs.count(), usecs.count());
    if (cfg_.bearer_token) c->set_bearer_token_auth(*cfg_.bearer_token);
    return c;
  }

  // (digest, task) from GET /health, fetched once.
  std::pair<std::string, Task> health() const {
    std::lock_guard lock(health_mu_);
    if (health_) return *health_;
    auto backoff = cfg_.retry.initial_backoff;
    std::string last_error;
    for (std::size_t attempt = 0; attempt < std::max<std::size_t>(cfg_.retry.max_attempts, 1); ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff = std::min(cfg_.retry.max_backoff,
                           std::chrono::milliseconds(static_cast<long long>(backoff.count() * cfg_.retry.multiplier)));
      }
      auto res = make_client()->Get("/health");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status);
        if (!retryable_status(res->status)) break;
        continue;
      }
      try {
        const auto j = nlohmann::json::parse(res->body);
        health_ = std::make_pair(j.at("digest").get<std::string>(), parse_task(j.at("task").get<std::string>()));
        return *health_;
      } catch (const std::exception& e) {
        throw PredictError(std::string("malformed health response: ") + e.what(), false);
      }
    }
    throw PredictError("health check failed: " + last_error, true);
  }

  RemoteConfig cfg_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
  mutable std::mutex health_mu_;
  mutable std::optional<std::pair<std::string, Task>> health_;
};

// Memoizes per-sequence scores keyed by (predictor digest, request target,
// segment layout, sequence). Off unless explicitly wrapped.
class CachingPredictor final : public Predictor {
 public:
  explicit CachingPredictor(const Predictor& inner) : inner_(inner) {}

  PredictResponse predict(const PredictRequest& req) const override {
    validate_request(req);
    const std::string prefix = inner_.digest() + '\x1f' + wire::to_json(req.target).dump() + '\x1f' +
                               nlohmann::json(req.segment_lengths).dump() + '\x1f';
    PredictResponse out;
    out.scores.assign(req.sequences.size(), 0.0);
    PredictRequest miss = req;
    miss.sequences.clear();
    std::vector<std::size_t> miss_index;
    std::vector<std::string> keys(req.sequences.size());
    {
      std::lock_guard lock(mu_);
      for (std::size_t i = 0; i < req.sequences.size(); ++i) {
        keys[i] = prefix + nlohmann::json(req.sequences[i]).dump();
        auto it = cache_.find(keys[i]);
        if (it != cache_.end()) {
          out.scores[i] = it->second;
        } else {
          miss_index.push_back(i);
          miss.sequences.push_back(req.sequences[i]);
        }
      }
    }
    if (!miss.sequences.empty()) {
      const auto resp = inner_.predict(miss);
      std::lock_guard lock(mu_);
      for (std::size_t k = 0; k < miss_index.size(); ++k) {
        out.scores[miss_index[k]] = resp.scores[k];
        cache_[keys[miss_index[k]]] = resp.scores[k];
      }
      misses_ += miss_index.size();
    }
    return out;
  }

  std::string digest() const override { return inner_.digest(); }
  Task task() const override { return inner_.task(); }
  std::size_t misses() const {
    std::lock_guard lock(mu_);
    return misses_;
  }

 private:
  const Predictor& inner_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, double> cache_;
  mutable std::size_t misses_ = 0;
};

}  // namespace expcal
