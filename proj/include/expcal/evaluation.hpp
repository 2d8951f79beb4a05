#pragma once
// Selective-prediction metrics: coverage-quality curves, their area, quality
// at fixed coverage, and calibrator accuracy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "expcal/error.hpp"
#include "expcal/text_match.hpp"

namespace expcal::eval {

struct CoveragePoint {
  double coverage = 0.0;
  double quality = 0.0;
};

// Point k (1-based) = (k/n, mean quality of the k highest-scored instances).
struct CoverageCurve {
  std::vector<CoveragePoint> points;

  std::size_t size() const { return points.size(); }
};

// Sort by score descending; equal scores keep input order.
inline CoverageCurve coverage_curve(std::span<const double> scores, std::span<const double> quality) {
  if (scores.size() != quality.size()) throw InvalidArgument("scores and quality differ in length");
  if (scores.empty()) throw InvalidArgument("coverage curve needs at least one instance");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  CoverageCurve curve;
  curve.points.reserve(order.size());
  const double n = static_cast<double>(order.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    sum += quality[order[k]];
    const double kk = static_cast<double>(k + 1);
    curve.points.push_back({kk / n, sum / kk});
  }
  return curve;
}

enum class Integrator { Rectangle, Trapezoid };

// Area under the curve on the k/n grid, scaled to [0, 100].
//   Rectangle: mean of the n quality values.
//   Trapezoid: trapezoid rule over [1/n, 1], divided by the interval length
//              (n = 1 falls back to the single value).
inline double auc(const CoverageCurve& curve, Integrator integrator = Integrator::Rectangle) {
  if (curve.points.empty()) throw InvalidArgument("empty coverage curve");
  const auto& p = curve.points;
  double area = 0.0;
  if (integrator == Integrator::Rectangle || p.size() == 1) {
    for (const auto& pt : p) area += pt.quality;
    area /= static_cast<double>(p.size());
  } else {
    for (std::size_t k = 0; k + 1 < p.size(); ++k) area += 0.5 * (p[k].quality + p[k + 1].quality);
    area /= static_cast<double>(p.size() - 1);
  }
  return 100.0 * area;
}

// Quality after answering the top ceil(c * n) instances; c in (0, 1].
inline double quality_at_coverage(const CoverageCurve& curve, double c) {
  if (curve.points.empty()) throw InvalidArgument("empty coverage curve");
  EXPCAL_REQUIRE(c > 0.0 && c <= 1.0, "coverage must lie in (0, 1]");
  const double n = static_cast<double>(curve.points.size());
  // Guard against c*n landing a hair above an integer.
  auto k = static_cast<std::size_t>(std::ceil(c * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, curve.points.size());
  return curve.points[k - 1].quality;
}

// Fraction of instances where (score >= threshold) agrees with the label.
inline double calibration_accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                   double threshold = 0.5) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  if (scores.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hit += (scores[i] >= threshold) == (labels[i] != 0) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

}  // namespace expcal::eval
