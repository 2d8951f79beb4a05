#pragma once
// Binary presence masks over tokens and the masked inputs they induce.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "expcal/core_types.hpp"
#include "expcal/error.hpp"

namespace expcal {

// bits[i] == 1 keeps token i, 0 replaces it with the mask token.
struct Mask {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::size_t active() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
  bool operator==(const Mask&) const = default;

  static Mask ones(std::size_t n) { return Mask{std::vector<std::uint8_t>(n, 1)}; }
  static Mask zeros(std::size_t n) { return Mask{std::vector<std::uint8_t>(n, 0)}; }
};

struct UniformSize {};
struct IndependentBernoulli {
  double p = 0.5;
};
using SamplingStrategy = std::variant<UniformSize, IndependentBernoulli>;

struct PerturbationConfig {
  std::size_t count = 2048;
  std::string mask_token = "<mask>";
  SamplingStrategy strategy = UniformSize{};
  std::uint64_t seed = 0;
  bool include_endpoints = true;
  // Enumerate all 2^n masks instead of sampling (small n only).
  bool full_enumeration = false;

  static PerturbationConfig for_task(Task task) {
    PerturbationConfig cfg;
    cfg.count = task == Task::QA ? 2048 : 512;
    return cfg;
  }
};

inline constexpr std::size_t kMaxEnumerationTokens = 20;

// All 2^n masks, ordered by the binary value of bits (bit i = token i).
inline std::vector<Mask> enumerate_masks(std::size_t n) {
  EXPCAL_REQUIRE(n >= 1, "empty instance");
  EXPCAL_REQUIRE(n <= kMaxEnumerationTokens, "full enumeration limited to 20 tokens");
  const std::uint64_t total = std::uint64_t{1} << n;
  std::vector<Mask> out;
  out.reserve(total);
  for (std::uint64_t code = 0; code < total; ++code) {
    Mask m{std::vector<std::uint8_t>(n)};
    for (std::size_t i = 0; i < n; ++i) m.bits[i] = static_cast<std::uint8_t>((code >> i) & 1U);
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<Mask> sample_masks(std::size_t n, const PerturbationConfig& cfg) {
  if (n == 0) throw InvalidArgument("empty instance");
  if (cfg.full_enumeration) return enumerate_masks(n);
  EXPCAL_REQUIRE(cfg.count >= 1, "perturbation count must be positive");
  EXPCAL_REQUIRE(!cfg.include_endpoints || cfg.count >= 2,
                 "perturbation count must be >= 2 when endpoints are included");
  if (const auto* b = std::get_if<IndependentBernoulli>(&cfg.strategy)) {
    EXPCAL_REQUIRE(b->p > 0.0 && b->p < 1.0, "bernoulli p must lie in (0,1)");
  }

  std::vector<Mask> out;
  out.reserve(cfg.count);
  if (cfg.include_endpoints) {
    out.push_back(Mask::ones(n));
    out.push_back(Mask::zeros(n));
    if (cfg.count > 2 && n == 1) {
      throw InvalidArgument("a single-token instance admits only the two endpoint masks");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> positions(n);
  while (out.size() < cfg.count) {
    Mask m = Mask::zeros(n);
    if (std::holds_alternative<UniformSize>(cfg.strategy)) {
      // Non-endpoint sizes only when endpoints are supplied separately.
      const std::size_t lo = cfg.include_endpoints ? 1 : 0;
      const std::size_t hi = cfg.include_endpoints ? n - 1 : n;
      std::uniform_int_distribution<std::size_t> size_dist(lo, hi);
      const std::size_t k = size_dist(rng);
      std::iota(positions.begin(), positions.end(), std::size_t{0});
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(positions[i], positions[pick(rng)]);
        m.bits[positions[i]] = 1;
      }
    } else {
      std::bernoulli_distribution coin(std::get<IndependentBernoulli>(cfg.strategy).p);
      for (auto& b : m.bits) b = coin(rng) ? 1 : 0;
      const std::size_t a = m.active();
      if (cfg.include_endpoints && (a == 0 || a == n)) continue;
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<std::string> apply_mask(std::span<const Token> tokens, const Mask& mask,
                                           const std::string& mask_token) {
  if (mask.size() != tokens.size()) throw InvalidArgument("mask length does not match token count");
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.push_back(mask.bits[i] ? tokens[i].text : mask_token);
  }
  return out;
}

inline std::vector<std::string> apply_mask(const AnnotatedInstance& inst, const Mask& mask,
                                           const std::string& mask_token) {
  return apply_mask(std::span<const Token>(inst.tokens), mask, mask_token);
}

}  // namespace expcal
