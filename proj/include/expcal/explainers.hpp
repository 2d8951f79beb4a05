#pragma once
// Local linear surrogates g(z) = phi0 + sum_i phi_i z_i fitted to black-box
// outputs over masked perturbations, under the LIME exponential kernel or the
// Shapley kernel, plus a brute-force exact Shapley oracle.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "expcal/blackbox.hpp"
#include "expcal/core_types.hpp"
#include "expcal/digest.hpp"
#include "expcal/error.hpp"
#include "expcal/perturbation.hpp"

namespace expcal {

struct LimeKernel {
  double sigma = 0.25;
};
struct ShapleyKernel {};
using KernelChoice = std::variant<LimeKernel, ShapleyKernel>;

enum class TargetKind { PredictedClassProb, PredictedSpanProb };

struct ExplainerConfig {
  KernelChoice kernel = LimeKernel{};
  double ridge_lambda = 1e-3;
  PerturbationConfig perturbation;
  TargetKind target = TargetKind::PredictedSpanProb;
  std::size_t batch_size = 256;
  // Number of perturbation batches in flight per instance.
  std::size_t concurrency = 1;

  ExplainerKind kind() const {
    return std::holds_alternative<ShapleyKernel>(kernel) ? ExplainerKind::Shap : ExplainerKind::Lime;
  }

  static ExplainerConfig defaults(Task task, KernelChoice kernel) {
    ExplainerConfig cfg;
    cfg.kernel = kernel;
    cfg.perturbation = PerturbationConfig::for_task(task);
    cfg.target = task == Task::QA ? TargetKind::PredictedSpanProb : TargetKind::PredictedClassProb;
    return cfg;
  }

  // Canonical text of every field that influences the result.
  std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    if (const auto* l = std::get_if<LimeKernel>(&kernel)) {
      os << "lime sigma=" << l->sigma;
    } else {
      os << "shap";
    }
    const auto& p = perturbation;
    os << " lambda=" << ridge_lambda << " count=" << p.count << " mask=" << p.mask_token;
    if (const auto* b = std::get_if<IndependentBernoulli>(&p.strategy)) {
      os << " bernoulli=" << b->p;
    } else {
      os << " uniform-size";
    }
    os << " seed=" << p.seed << " endpoints=" << p.include_endpoints << " enumerate=" << p.full_enumeration
       << " target=" << static_cast<int>(target);
    return os.str();
  }
};

inline std::string config_digest(const ExplainerConfig& cfg, const Predictor& predictor) {
  return short_digest(cfg.canonical() + "|" + predictor.digest());
}

struct SurrogateFit {
  Attribution attribution;
  double weighted_sse = 0.0;
  std::size_t n_perturbations_used = 0;
};

// Raised by explain when the predictor fails part-way.
class ExplainError : public Error {
 public:
  ExplainError(const std::string& what, std::size_t succeeded)
      : Error(what + " (" + std::to_string(succeeded) + " perturbations succeeded)"), succeeded_(succeeded) {}
  std::size_t succeeded() const { return succeeded_; }

 private:
  std::size_t succeeded_;
};

// exp(-d / sigma^2) with d the cosine distance between the all-ones vector and
// the mask, which for binary vectors is 1 - sqrt(|z| / n). d := 1 for |z| = 0.
inline double lime_weight(const Mask& mask, double sigma) {
  EXPCAL_REQUIRE(mask.size() >= 1, "mask must be non-empty");
  EXPCAL_REQUIRE(sigma > 0.0, "sigma must be positive");
  const double n = static_cast<double>(mask.size());
  const double a = static_cast<double>(mask.active());
  const double d = a == 0.0 ? 1.0 : 1.0 - std::sqrt(a / n);
  return std::exp(-d / (sigma * sigma));
}

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  if (n <= 1000) {
    long double r = 1.0L;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    return static_cast<double>(r);
  }
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

// (n-1) / (C(n,|z|) |z| (n-|z|)); +infinity at |z| in {0, n}.
inline double shap_weight(const Mask& mask) {
  EXPCAL_REQUIRE(mask.size() >= 1, "mask must be non-empty");
  const std::size_t n = mask.size();
  const std::size_t a = mask.active();
  if (a == 0 || a == n) return std::numeric_limits<double>::infinity();
  const double nn = static_cast<double>(n);
  const double aa = static_cast<double>(a);
  if (n > 1000) {
    const double log_w = std::log(nn - 1.0) - (std::lgamma(nn + 1.0) - std::lgamma(aa + 1.0) -
                                                std::lgamma(nn - aa + 1.0)) -
                         std::log(aa) - std::log(nn - aa);
    return std::exp(log_w);
  }
  return (nn - 1.0) / (binomial(n, a) * aa * (nn - aa));
}

// Pins g(all-zeros) = empty_value and g(all-ones) = full_value.
struct EndpointConstraints {
  double empty_value = 0.0;
  double full_value = 0.0;
};

// Weighted ridge least squares:
//   min_phi  sum_r w_r (y_r - phi0 - z_r . phi)^2 + lambda ||phi||^2
// The intercept is not penalized. Rows with infinite weight are only allowed
// alongside constraints, which replace them.
inline SurrogateFit fit_surrogate(std::span<const double> targets, std::span<const Mask> masks,
                                  std::span<const double> weights, double lambda,
                                  std::optional<EndpointConstraints> constraints = std::nullopt) {
  EXPCAL_REQUIRE(targets.size() == masks.size() && masks.size() == weights.size(),
                 "targets, masks and weights must have equal length");
  EXPCAL_REQUIRE(!masks.empty(), "no perturbations supplied");
  EXPCAL_REQUIRE(lambda >= 0.0, "ridge lambda must be nonnegative");
  const std::size_t n = masks.front().size();
  EXPCAL_REQUIRE(n >= 1, "masks must be non-empty");

  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < masks.size(); ++r) {
    EXPCAL_REQUIRE(masks[r].size() == n, "masks must share one length");
    EXPCAL_REQUIRE(!(weights[r] < 0.0) && !std::isnan(weights[r]), "weights must be nonnegative");
    if (std::isinf(weights[r])) {
      EXPCAL_REQUIRE(constraints.has_value(), "infinite kernel weight requires endpoint constraints");
      continue;
    }
    if (weights[r] > 0.0) rows.push_back(r);
  }

  const double sqrt_lambda = std::sqrt(lambda);
  Attribution attr;
  attr.phis.assign(n, 0.0);

  if (!constraints) {
    // Columns: [1, z_1 .. z_n]; ridge rows penalize z-columns only.
    const std::size_t p = n + 1;
    const std::size_t ridge_rows = lambda > 0.0 ? n : 0;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size() + ridge_rows),
                                              static_cast<Eigen::Index>(p));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(A.rows());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const std::size_t r = rows[k];
      const double sw = std::sqrt(weights[r]);
      const auto kk = static_cast<Eigen::Index>(k);
      A(kk, 0) = sw;
      for (std::size_t i = 0; i < n; ++i) A(kk, static_cast<Eigen::Index>(i + 1)) = sw * masks[r].bits[i];
      b(kk) = sw * targets[r];
    }
    for (std::size_t i = 0; i < ridge_rows; ++i) {
      A(static_cast<Eigen::Index>(rows.size() + i), static_cast<Eigen::Index>(i + 1)) = sqrt_lambda;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (lambda == 0.0 && qr.rank() < static_cast<Eigen::Index>(p)) {
      throw InvalidArgument("rank-deficient and unregularized surrogate design");
    }
    const Eigen::VectorXd x = qr.solve(b);
    attr.phi0 = x(0);
    for (std::size_t i = 0; i < n; ++i) attr.phis[i] = x(static_cast<Eigen::Index>(i + 1));
  } else {
    // phi0 = c0 and phi_n = s - sum_{i<n} phi_i with s = full - empty.
    // Residual: (y - c0 - s z_n) - sum_{i<n} phi_i (z_i - z_n).
    const double c0 = constraints->empty_value;
    const double s = constraints->full_value - constraints->empty_value;
    attr.phi0 = c0;
    if (n == 1) {
      attr.phis[0] = s;
    } else {
      const std::size_t p = n - 1;
      const std::size_t ridge_rows = lambda > 0.0 ? n : 0;
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size() + ridge_rows),
                                                static_cast<Eigen::Index>(p));
      Eigen::VectorXd b = Eigen::VectorXd::Zero(A.rows());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const std::size_t r = rows[k];
        const double sw = std::sqrt(weights[r]);
        const double zn = masks[r].bits[n - 1];
        const auto kk = static_cast<Eigen::Index>(k);
        for (std::size_t i = 0; i < p; ++i) {
          A(kk, static_cast<Eigen::Index>(i)) = sw * (masks[r].bits[i] - zn);
        }
        b(kk) = sw * (targets[r] - c0 - s * zn);
      }
      if (ridge_rows > 0) {
        const auto base = static_cast<Eigen::Index>(rows.size());
        for (std::size_t i = 0; i < p; ++i) {
          A(base + static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = sqrt_lambda;
        }
        // lambda * phi_n^2 = lambda * (s - 1'phi')^2
        const Eigen::Index last = base + static_cast<Eigen::Index>(p);
        for (std::size_t i = 0; i < p; ++i) A(last, static_cast<Eigen::Index>(i)) = sqrt_lambda;
        b(last) = sqrt_lambda * s;
      }
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
      if (lambda == 0.0 && qr.rank() < static_cast<Eigen::Index>(p)) {
        throw InvalidArgument("rank-deficient and unregularized surrogate design");
      }
      const Eigen::VectorXd x = qr.solve(b);
      double rest = s;
      for (std::size_t i = 0; i < p; ++i) {
        attr.phis[i] = x(static_cast<Eigen::Index>(i));
        rest -= attr.phis[i];
      }
      attr.phis[n - 1] = rest;
    }
  }

  SurrogateFit fit;
  for (std::size_t r : rows) {
    double g = attr.phi0;
    for (std::size_t i = 0; i < n; ++i) g += attr.phis[i] * masks[r].bits[i];
    const double e = targets[r] - g;
    fit.weighted_sse += weights[r] * e * e;
  }
  fit.attribution = std::move(attr);
  fit.n_perturbations_used = masks.size();
  return fit;
}

namespace detail {

inline void check_target_kind(const AnnotatedInstance& inst, TargetKind kind) {
  if (inst.task == Task::QA && kind != TargetKind::PredictedSpanProb) {
    throw InvalidArgument("QA explanations target the predicted span probability");
  }
  if (inst.task == Task::NLI && kind != TargetKind::PredictedClassProb) {
    throw InvalidArgument("NLI explanations target the predicted class probability");
  }
}

// Queries the predictor on every mask, in batches. Results keep mask order.
inline std::vector<double> query_masks(const AnnotatedInstance& inst, const Predictor& predictor,
                                       std::span<const Mask> masks, const std::string& mask_token,
                                       std::size_t batch_size, std::size_t concurrency) {
  batch_size = std::max<std::size_t>(batch_size, 1);
  concurrency = std::max<std::size_t>(concurrency, 1);
  const Target target = Target::of_prediction(inst.prediction);
  const auto seg = segment_lengths(inst);

  auto run_batch = [&](std::size_t begin, std::size_t end) {
    PredictRequest req;
    req.task = inst.task;
    req.target = target;
    req.segment_lengths = seg;
    req.sequences.reserve(end - begin);
    for (std::size_t r = begin; r < end; ++r) req.sequences.push_back(apply_mask(inst, masks[r], mask_token));
    PredictResponse resp = predictor.predict(req);
    if (resp.scores.size() != req.sequences.size()) {
      throw PredictError("predictor returned " + std::to_string(resp.scores.size()) + " scores for " +
                             std::to_string(req.sequences.size()) + " sequences",
                         false);
    }
    return resp.scores;
  };

  std::vector<double> out(masks.size());
  std::size_t done = 0;
  std::size_t next = 0;
  while (next < masks.size()) {
    std::vector<std::pair<std::size_t, std::future<std::vector<double>>>> wave;
    for (std::size_t k = 0; k < concurrency && next < masks.size(); ++k) {
      const std::size_t end = std::min(masks.size(), next + batch_size);
      auto policy = concurrency == 1 ? std::launch::deferred : std::launch::async;
      wave.emplace_back(next, std::async(policy, run_batch, next, end));
      next = end;
    }
    std::string failure;
    for (auto& [begin, fut] : wave) {
      try {
        auto scores = fut.get();
        std::copy(scores.begin(), scores.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
        if (failure.empty()) done += scores.size();
      } catch (const PredictError& e) {
        if (failure.empty()) failure = e.what();
      }
    }
    if (!failure.empty()) throw ExplainError("predictor failure: " + failure, done);
  }
  for (double v : out) {
    if (!std::isfinite(v)) throw ExplainError("predictor returned a non-finite score", done);
  }
  return out;
}

}  // namespace detail

// Masks explain() would query for an n-token instance. Sampling at or beyond
// the number of distinct masks switches to full enumeration.
inline std::vector<Mask> explanation_masks(std::size_t n, const ExplainerConfig& cfg) {
  PerturbationConfig p = cfg.perturbation;
  if (!p.full_enumeration && n < 63 && n <= kMaxEnumerationTokens && p.count >= (std::uint64_t{1} << n)) {
    p.full_enumeration = true;
  }
  auto masks = sample_masks(n, p);
  if (std::holds_alternative<ShapleyKernel>(cfg.kernel) && !p.include_endpoints && !p.full_enumeration) {
    masks.push_back(Mask::ones(n));
    masks.push_back(Mask::zeros(n));
  }
  return masks;
}

// Rescales the finite kernel weights to mean 1 so that ridge_lambda acts on a
// scale independent of n. Infinite (constraint) weights are left alone.
inline void normalize_weights(std::vector<double>& weights) {
  double sum = 0.0;
  std::size_t count = 0;
  for (double w : weights) {
    if (std::isfinite(w)) {
      sum += w;
      ++count;
    }
  }
  if (count == 0 || sum <= 0.0) return;
  const double scale = static_cast<double>(count) / sum;
  for (double& w : weights) {
    if (std::isfinite(w)) w *= scale;
  }
}

inline SurrogateFit explain_fit(const AnnotatedInstance& inst, const Predictor& predictor,
                                const ExplainerConfig& cfg) {
  const std::size_t n = inst.size();
  if (n == 0) throw InvalidArgument("empty instance");
  detail::check_target_kind(inst, cfg.target);
  EXPCAL_REQUIRE(cfg.ridge_lambda >= 0.0, "ridge lambda must be nonnegative");

  const auto masks = explanation_masks(n, cfg);
  if (masks.size() < n + 1) throw ExplainError("insufficient perturbations", masks.size());
  const auto targets = detail::query_masks(inst, predictor, masks, cfg.perturbation.mask_token, cfg.batch_size,
                                           cfg.concurrency);

  std::vector<double> weights(masks.size());
  SurrogateFit fit;
  if (const auto* lime = std::get_if<LimeKernel>(&cfg.kernel)) {
    EXPCAL_REQUIRE(lime->sigma > 0.0, "sigma must be positive");
    for (std::size_t r = 0; r < masks.size(); ++r) weights[r] = lime_weight(masks[r], lime->sigma);
    normalize_weights(weights);
    fit = fit_surrogate(targets, masks, weights, cfg.ridge_lambda);
  } else {
    std::optional<double> empty, full;
    for (std::size_t r = 0; r < masks.size(); ++r) {
      weights[r] = shap_weight(masks[r]);
      const std::size_t a = masks[r].active();
      if (a == 0 && !empty) empty = targets[r];
      if (a == n && !full) full = targets[r];
    }
    normalize_weights(weights);
    fit = fit_surrogate(targets, masks, weights, cfg.ridge_lambda, EndpointConstraints{*empty, *full});
  }
  fit.attribution.explainer = cfg.kind();
  fit.attribution.config_digest = config_digest(cfg, predictor);
  return fit;
}

inline Attribution explain(const AnnotatedInstance& inst, const Predictor& predictor, const ExplainerConfig& cfg) {
  return explain_fit(inst, predictor, cfg).attribution;
}

inline constexpr std::size_t kMaxExactShapleyTokens = 12;

// phi_i = sum_{S subset N\{i}} |S|!(n-|S|-1)!/n! [v(S u {i}) - v(S)], phi0 = v(empty).
inline Attribution exact_shapley(const AnnotatedInstance& inst, const Predictor& predictor, TargetKind target,
                                 const std::string& mask_token = "<mask>") {
  const std::size_t n = inst.size();
  if (n == 0) throw InvalidArgument("empty instance");
  if (n > kMaxExactShapleyTokens) throw InvalidArgument("oracle limited to small instances");
  detail::check_target_kind(inst, target);

  const auto masks = enumerate_masks(n);  // index == coalition bit code
  const auto v = detail::query_masks(inst, predictor, masks, mask_token, 1024, 1);

  std::vector<double> factorial(n + 1, 1.0);
  for (std::size_t k = 1; k <= n; ++k) factorial[k] = factorial[k - 1] * static_cast<double>(k);

  Attribution attr;
  attr.explainer = ExplainerKind::Exact;
  attr.phi0 = v[0];
  attr.phis.assign(n, 0.0);
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    double phi = 0.0;
    for (std::uint64_t s = 0; s < total; ++s) {
      if (s & bit) continue;
      const auto size = static_cast<std::size_t>(std::popcount(s));
      const double w = factorial[size] * factorial[n - size - 1] / factorial[n];
      phi += w * (v[s | bit] - v[s]);
    }
    attr.phis[i] = phi;
  }
  attr.config_digest = short_digest("exact|" + mask_token + "|" + predictor.digest());
  return attr;
}

}  // namespace expcal
