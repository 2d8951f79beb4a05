#pragma once
// End-to-end orchestration: explanation runs over a dataset, feature pools,
// repeated train/test trials, cross-domain transfer, the selective-QA mixture
// protocol, hyperparameter grid search, and report formatting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "expcal/calibrator.hpp"
#include "expcal/core_types.hpp"
#include "expcal/evaluation.hpp"
#include "expcal/explainers.hpp"
#include "expcal/features.hpp"
#include "expcal/properties.hpp"
#include "expcal/records.hpp"

namespace expcal {

// ---------------------------------------------------------------------------
// Explanation runs

struct ExplainFailure {
  std::string id;
  std::string message;
};

struct ExplainSummary {
  std::size_t explained = 0;
  std::size_t skipped = 0;  // already stored under the same digest
  std::vector<ExplainFailure> failures;
  std::string digest;
};

// Explains every instance not yet in `store` under this config digest. Work is
// spread over `workers` threads; results are appended in input order.
inline ExplainSummary run_explanations(const std::vector<AnnotatedInstance>& instances, const Predictor& predictor,
                                       const ExplainerConfig& cfg, AttributionStore& store, std::size_t workers = 1) {
  ExplainSummary summary;
  summary.digest = config_digest(cfg, predictor);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (store.contains(instances[i].id, summary.digest)) {
      ++summary.skipped;
    } else {
      todo.push_back(i);
    }
  }

  struct Outcome {
    std::optional<SurrogateFit> fit;
    std::string error;
  };
  auto work = [&](std::size_t i) {
    Outcome o;
    try {
      o.fit = explain_fit(instances[i], predictor, cfg);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    return o;
  };

  workers = std::max<std::size_t>(workers, 1);
  for (std::size_t begin = 0; begin < todo.size(); begin += workers) {
    const std::size_t end = std::min(todo.size(), begin + workers);
    std::vector<std::future<Outcome>> wave;
    for (std::size_t k = begin; k < end; ++k) {
      wave.push_back(std::async(workers == 1 ? std::launch::deferred : std::launch::async, work, todo[k]));
    }
    for (std::size_t k = begin; k < end; ++k) {
      Outcome o = wave[k - begin].get();
      const auto& inst = instances[todo[k]];
      if (!o.fit) {
        summary.failures.push_back({inst.id, o.error});
        continue;
      }
      store.append({inst.id, o.fit->attribution, o.fit->weighted_sse, o.fit->n_perturbations_used});
      ++summary.explained;
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Feature pools

using AttributionLookup = std::function<const Attribution*(const AnnotatedInstance&)>;

inline AttributionLookup store_lookup(const AttributionStore& store, ExplainerKind kind,
                                      std::optional<std::string> digest = std::nullopt) {
  return [&store, kind, digest](const AnnotatedInstance& inst) -> const Attribution* {
    const auto* s = store.find(inst.id, kind, digest);
    return s ? &s->attribution : nullptr;
  };
}

// Everything the calibrator and the metrics need about a set of instances.
struct Pool {
  FeatureMatrix X;
  std::vector<std::uint8_t> labels;
  std::vector<double> quality;
  std::vector<double> max_prob;
  std::vector<std::string> ids;

  std::size_t size() const { return labels.size(); }
};

inline Pool build_pool(const std::vector<AnnotatedInstance>& instances, FeatureFamily family, const PropertySpace& space,
                       const AttributionLookup& lookup = {}, BowMode bow_mode = BowMode::Count) {
  Pool pool;
  pool.X.names = feature_names(family, space);
  for (const auto& inst : instances) {
    const Attribution* attr = nullptr;
    if (uses_attributions(family)) {
      attr = lookup ? lookup(inst) : nullptr;
      if (!attr) throw InvalidArgument("no " + std::string(to_string(family_explainer(family))) +
                                       " attribution stored for instance '" + inst.id + "'");
    }
    pool.X.append(assemble(inst, attr, space, family, bow_mode));
    pool.labels.push_back(inst.correct ? 1 : 0);
    pool.quality.push_back(inst.quality);
    pool.max_prob.push_back(inst.prediction.top_prob());
    pool.ids.push_back(inst.id);
  }
  return pool;
}

inline Pool subset(const Pool& pool, std::span<const std::size_t> idx) {
  Pool out;
  out.X.names = pool.X.names;
  out.X.data.reserve(idx.size() * pool.X.cols());
  for (std::size_t i : idx) {
    const auto row = pool.X.row(i);
    out.X.data.insert(out.X.data.end(), row.begin(), row.end());
    ++out.X.rows;
    out.labels.push_back(pool.labels[i]);
    out.quality.push_back(pool.quality[i]);
    out.max_prob.push_back(pool.max_prob[i]);
    out.ids.push_back(pool.ids[i]);
  }
  return out;
}

inline Pool concat(const Pool& a, const Pool& b) {
  if (a.X.names != b.X.names) throw InvalidArgument("cannot concatenate pools with different features");
  Pool out = a;
  out.X.data.insert(out.X.data.end(), b.X.data.begin(), b.X.data.end());
  out.X.rows += b.X.rows;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.quality.insert(out.quality.end(), b.quality.begin(), b.quality.end());
  out.max_prob.insert(out.max_prob.end(), b.max_prob.begin(), b.max_prob.end());
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double acc = 0.0;  // calibration accuracy, x100
  double auc = 0.0;  // area under coverage-quality curve, x100
  double q25 = 0.0, q50 = 0.0, q75 = 0.0;  // x100

  static constexpr std::size_t kCount = 5;
  static const std::array<const char*, kCount>& names() {
    static const std::array<const char*, kCount> n{"acc", "auc", "f1@25", "f1@50", "f1@75"};
    return n;
  }
  std::array<double, kCount> values() const { return {acc, auc, q25, q50, q75}; }
};

inline Metrics evaluate_scores(std::span<const double> scores, std::span<const std::uint8_t> labels,
                               std::span<const double> quality,
                               eval::Integrator integrator = eval::Integrator::Rectangle) {
  const auto curve = eval::coverage_curve(scores, quality);
  Metrics m;
  m.acc = 100.0 * eval::calibration_accuracy(scores, labels);
  m.auc = eval::auc(curve, integrator);
  m.q25 = 100.0 * eval::quality_at_coverage(curve, 0.25);
  m.q50 = 100.0 * eval::quality_at_coverage(curve, 0.50);
  m.q75 = 100.0 * eval::quality_at_coverage(curve, 0.75);
  return m;
}

// Paper-style defaults per family: probability baselines use shallow forests,
// property/attribution families deep ones.
inline ForestHyper default_hyper(Task task, FeatureFamily family) {
  ForestHyper h;
  h.n_trees = 300;
  switch (family) {
    case FeatureFamily::Kamath: h.max_depth = 6; break;
    case FeatureFamily::ClsProbCal: h.max_depth = 4; break;
    case FeatureFamily::BowProp: h.max_depth = task == Task::QA ? 20 : 6; break;
    case FeatureFamily::LimeCal:
    case FeatureFamily::ShapCal:
      h.max_depth = 20;
      if (task == Task::NLI) h.n_trees = 400;
      break;
    case FeatureFamily::MaxProb: break;
  }
  return h;
}

// Scores `test` by training on `train` (or by top probability for MaxProb).
inline std::vector<double> calibrate_and_score(FeatureFamily family, const Pool& train, const Pool& test,
                                               const ForestHyper& hyper) {
  if (family == FeatureFamily::MaxProb) return test.max_prob;
  if (train.X.names != test.X.names) throw InvalidArgument("train and test feature widths differ");
  const ForestModel model = train_forest(train.X, train.labels, hyper);
  std::vector<double> scores(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) scores[i] = model.score_row(test.X.row(i));
  return scores;
}

// ---------------------------------------------------------------------------
// Repeated trials

struct FamilyData {
  FeatureFamily family;
  Pool pool;
  ForestHyper hyper;
};

struct TrialConfig {
  std::size_t train_size = 500;
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  eval::Integrator integrator = eval::Integrator::Rectangle;
  // Trials evaluated concurrently; results do not depend on it.
  std::size_t workers = 1;
};

struct TrialReport {
  std::vector<FeatureFamily> families;
  // results[f][t] = metrics of family f on trial t
  std::vector<std::vector<Metrics>> results;
  std::size_t train_size = 0;
  std::size_t test_size = 0;

  const std::vector<Metrics>* of(FeatureFamily f) const {
    for (std::size_t i = 0; i < families.size(); ++i) {
      if (families[i] == f) return &results[i];
    }
    return nullptr;
  }
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return detail::splitmix64(detail::splitmix64(detail::splitmix64(seed) ^ a) ^ (b * 0x9E3779B97F4A7C15ULL));
}

struct TrialSplit {
  std::vector<std::size_t> train, test;
};

// Trial t shuffles [0, n) with seed derive_seed(run seed, t) and takes the
// first train_size indices for training.
inline TrialSplit trial_split(std::size_t n, std::size_t train_size, std::uint64_t seed, std::size_t trial) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, trial));
  std::shuffle(idx.begin(), idx.end(), rng);
  TrialSplit s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_size));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(train_size), idx.end());
  return s;
}

// All families share the same splits per trial; forest seeds derive from
// (run seed, trial, family).
inline TrialReport run_trials(const std::vector<FamilyData>& families, const TrialConfig& cfg) {
  EXPCAL_REQUIRE(!families.empty(), "no feature families requested");
  EXPCAL_REQUIRE(cfg.trials >= 1, "trial count must be >= 1");
  const std::size_t n = families.front().pool.size();
  for (const auto& f : families) {
    if (f.pool.size() != n || f.pool.ids != families.front().pool.ids) {
      throw InvalidArgument("all families must be built over the same instances");
    }
  }
  if (n < cfg.train_size + 1) {
    throw InvalidArgument("pool of " + std::to_string(n) + " instances is too small for train size " +
                          std::to_string(cfg.train_size));
  }
  TrialReport report;
  report.train_size = cfg.train_size;
  report.test_size = n - cfg.train_size;
  for (const auto& f : families) report.families.push_back(f.family);
  report.results.assign(families.size(), {});

  auto run_one = [&](std::size_t t) {
    std::vector<Metrics> row;
    const auto split = trial_split(n, cfg.train_size, cfg.seed, t);
    for (const auto& fam : families) {
      const Pool train = subset(fam.pool, split.train);
      const Pool test = subset(fam.pool, split.test);
      ForestHyper hyper = fam.hyper;
      hyper.seed = derive_seed(cfg.seed, t, static_cast<std::uint64_t>(fam.family) + 1);
      const auto scores = calibrate_and_score(fam.family, train, test, hyper);
      row.push_back(evaluate_scores(scores, test.labels, test.quality, cfg.integrator));
    }
    return row;
  };
  const std::size_t workers = std::max<std::size_t>(cfg.workers, 1);
  for (std::size_t begin = 0; begin < cfg.trials; begin += workers) {
    const std::size_t end = std::min(cfg.trials, begin + workers);
    std::vector<std::future<std::vector<Metrics>>> wave;
    for (std::size_t t = begin; t < end; ++t) {
      wave.push_back(std::async(workers == 1 ? std::launch::deferred : std::launch::async, run_one, t));
    }
    for (auto& w : wave) {
      const auto row = w.get();
      for (std::size_t f = 0; f < families.size(); ++f) report.results[f].push_back(row[f]);
    }
  }
  return report;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

inline MeanStd metric_summary(const std::vector<Metrics>& trials, std::size_t metric) {
  std::vector<double> xs;
  for (const auto& m : trials) xs.push_back(m.values()[metric]);
  return mean_std(xs);
}

// Per-trial differences family - BowProp on the same split.
inline MeanStd delta_vs_bow(const TrialReport& r, FeatureFamily family, std::size_t metric) {
  const auto* fam = r.of(family);
  const auto* bow = r.of(FeatureFamily::BowProp);
  if (!fam || !bow) return {};
  std::vector<double> d;
  for (std::size_t t = 0; t < fam->size(); ++t) d.push_back((*fam)[t].values()[metric] - (*bow)[t].values()[metric]);
  return mean_std(d);
}

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// Tab-separated summary: one row per (family, metric).
inline std::string format_trial_report(const TrialReport& r) {
  std::ostringstream os;
  os << "# trials=" << (r.results.empty() ? 0 : r.results.front().size()) << " train=" << r.train_size
     << " test=" << r.test_size << '\n';
  os << "family\tmetric\tmean\tstd\tdelta_bow_mean\tdelta_bow_std\n";
  const bool has_bow = r.of(FeatureFamily::BowProp) != nullptr;
  for (std::size_t f = 0; f < r.families.size(); ++f) {
    for (std::size_t m = 0; m < Metrics::kCount; ++m) {
      const auto s = metric_summary(r.results[f], m);
      os << to_string(r.families[f]) << '\t' << Metrics::names()[m] << '\t' << fmt(s.mean) << '\t' << fmt(s.std);
      if (has_bow) {
        const auto d = delta_vs_bow(r, r.families[f], m);
        os << '\t' << fmt(d.mean) << '\t' << fmt(d.std);
      } else {
        os << "\t-\t-";
      }
      os << '\n';
    }
  }
  return os.str();
}

// One row per (trial, family) with every metric.
inline std::string format_trial_details(const TrialReport& r) {
  std::ostringstream os;
  os << "trial\tfamily";
  for (const char* n : Metrics::names()) os << '\t' << n;
  os << '\n';
  const std::size_t trials = r.results.empty() ? 0 : r.results.front().size();
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t f = 0; f < r.families.size(); ++f) {
      os << t << '\t' << to_string(r.families[f]);
      for (double v : r.results[f][t].values()) os << '\t' << fmt(v);
      os << '\n';
    }
  }
  return os.str();
}

inline std::string format_metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows) {
  std::ostringstream os;
  os << "method";
  for (const char* n : Metrics::names()) os << '\t' << n;
  os << '\n';
  for (const auto& [name, m] : rows) {
    os << name;
    for (double v : m.values()) os << '\t' << fmt(v);
    os << '\n';
  }
  return os.str();
}

// Plot-ready coverage series: method, coverage, quality.
inline std::string format_curves(const std::vector<std::pair<std::string, eval::CoverageCurve>>& curves) {
  std::ostringstream os;
  os << "method\tcoverage\tquality\n";
  for (const auto& [name, c] : curves) {
    for (const auto& p : c.points) os << name << '\t' << fmt(p.coverage, 6) << '\t' << fmt(p.quality, 6) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Cross-domain transfer

// Trains on every instance of `source` and evaluates on every instance of
// `target`.
inline Metrics run_cross_domain(FeatureFamily family, const Pool& source, const Pool& target, const ForestHyper& hyper,
                                eval::Integrator integrator = eval::Integrator::Rectangle) {
  if (family != FeatureFamily::MaxProb && source.X.names != target.X.names) {
    throw InvalidArgument("feature width mismatch between source and target domains");
  }
  const auto scores = calibrate_and_score(family, source, target, hyper);
  return evaluate_scores(scores, target.labels, target.quality, integrator);
}

struct NamedPool {
  std::string name;
  Pool pool;
};

// AUC grid: row = source domain, column = target domain; the diagonal holds
// the target's MaxProb AUC.
inline std::vector<std::vector<double>> cross_domain_grid(FeatureFamily family, const std::vector<NamedPool>& domains,
                                                          const ForestHyper& hyper) {
  std::vector<std::vector<double>> grid(domains.size(), std::vector<double>(domains.size(), 0.0));
  for (std::size_t s = 0; s < domains.size(); ++s) {
    for (std::size_t t = 0; t < domains.size(); ++t) {
      const FeatureFamily f = s == t ? FeatureFamily::MaxProb : family;
      grid[s][t] = run_cross_domain(f, domains[s].pool, domains[t].pool, hyper).auc;
    }
  }
  return grid;
}

inline std::string format_grid(const std::vector<NamedPool>& domains, const std::vector<std::vector<double>>& grid) {
  std::ostringstream os;
  os << "source\\target";
  for (const auto& d : domains) os << '\t' << d.name;
  os << '\n';
  for (std::size_t s = 0; s < domains.size(); ++s) {
    os << domains[s].name;
    for (double v : grid[s]) os << '\t' << fmt(v);
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Selective QA mixtures

struct MixtureSpec {
  std::string id_path;
  std::size_t id_train_count = 1000;
  std::size_t id_test_count = 4000;
  std::string known_path;
  std::size_t known_count = 1000;
  std::string unknown_path;
  std::size_t unknown_count = 4000;
};

struct MixtureIndices {
  std::vector<std::size_t> id_train, id_test, known, unknown;
};

// In-domain train/test draws are disjoint; known/unknown are sampled without
// replacement (capped at what the files hold).
inline MixtureIndices mixture_indices(const MixtureSpec& spec, std::size_t n_id, std::size_t n_known,
                                      std::size_t n_unknown, std::uint64_t seed) {
  EXPCAL_REQUIRE(spec.id_train_count > 0 && spec.id_test_count > 0 && spec.known_count > 0 && spec.unknown_count > 0,
                 "mixture counts must be positive");
  auto draw = [](std::size_t n, std::uint64_t s) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(s);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
  };
  MixtureIndices m;
  auto id = draw(n_id, derive_seed(seed, 1));
  const std::size_t tr = std::min(spec.id_train_count, n_id);
  if (tr >= n_id) throw InvalidArgument("in-domain pool leaves nothing for testing");
  m.id_train.assign(id.begin(), id.begin() + static_cast<std::ptrdiff_t>(tr));
  const std::size_t te = std::min(spec.id_test_count, n_id - tr);
  m.id_test.assign(id.begin() + static_cast<std::ptrdiff_t>(tr), id.begin() + static_cast<std::ptrdiff_t>(tr + te));
  auto known = draw(n_known, derive_seed(seed, 2));
  m.known.assign(known.begin(), known.begin() + static_cast<std::ptrdiff_t>(std::min(spec.known_count, n_known)));
  auto unknown = draw(n_unknown, derive_seed(seed, 3));
  m.unknown.assign(unknown.begin(),
                   unknown.begin() + static_cast<std::ptrdiff_t>(std::min(spec.unknown_count, n_unknown)));
  return m;
}

// Trains on id_train + known, tests on id_test + unknown.
inline Metrics run_selective(FeatureFamily family, const Pool& id_pool, const Pool& known_pool,
                             const Pool& unknown_pool, const MixtureIndices& m, const ForestHyper& hyper) {
  const Pool train = concat(subset(id_pool, m.id_train), subset(known_pool, m.known));
  const Pool test = concat(subset(id_pool, m.id_test), subset(unknown_pool, m.unknown));
  const auto scores = calibrate_and_score(family, train, test, hyper);
  return evaluate_scores(scores, test.labels, test.quality);
}

// ---------------------------------------------------------------------------
// Grid search

struct HyperGrid {
  std::vector<std::size_t> n_trees{200, 300, 400, 500};
  std::vector<std::size_t> max_depth{4, 6, 8, 10, 15, 20};
};

struct GridCell {
  std::size_t n_trees = 0;
  std::size_t max_depth = 0;
  double val_auc = 0.0;
};

struct GridResult {
  ForestHyper best;
  std::vector<GridCell> cells;
};

// 400/100 train/validation split; best validation AUC wins, ties go to the
// smaller depth, then fewer trees.
inline GridResult grid_search(const Pool& pool, const HyperGrid& grid, const ForestHyper& base, std::uint64_t seed,
                              std::size_t train_size = 400, std::size_t val_size = 100) {
  if (pool.size() < train_size + val_size) {
    throw InvalidArgument("grid search needs at least " + std::to_string(train_size + val_size) + " instances");
  }
  EXPCAL_REQUIRE(!grid.n_trees.empty() && !grid.max_depth.empty(), "empty hyperparameter grid");
  const auto split = trial_split(pool.size(), train_size, seed, 0);
  const Pool train = subset(pool, split.train);
  const std::vector<std::size_t> val_idx(split.test.begin(), split.test.begin() + static_cast<std::ptrdiff_t>(val_size));
  const Pool val = subset(pool, val_idx);

  GridResult result;
  std::optional<GridCell> best;
  for (std::size_t depth : grid.max_depth) {
    for (std::size_t trees : grid.n_trees) {
      ForestHyper h = base;
      h.n_trees = trees;
      h.max_depth = depth;
      h.seed = derive_seed(seed, trees, depth);
      const ForestModel model = train_forest(train.X, train.labels, h);
      std::vector<double> scores(val.size());
      for (std::size_t i = 0; i < val.size(); ++i) scores[i] = model.score_row(val.X.row(i));
      const double a = eval::auc(eval::coverage_curve(scores, val.quality));
      GridCell cell{trees, depth, a};
      result.cells.push_back(cell);
      auto better = [](const GridCell& x, const GridCell& y) {
        if (x.val_auc != y.val_auc) return x.val_auc > y.val_auc;
        if (x.max_depth != y.max_depth) return x.max_depth < y.max_depth;
        return x.n_trees < y.n_trees;
      };
      if (!best || better(cell, *best)) best = cell;
    }
  }
  result.best = base;
  result.best.n_trees = best->n_trees;
  result.best.max_depth = best->max_depth;
  return result;
}

// Ranked feature importances as "rank, feature, importance" rows.
inline std::string format_importance(const ForestModel& model, std::size_t top = 0) {
  auto imp = feature_importance(model);
  std::stable_sort(imp.begin(), imp.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (top > 0 && imp.size() > top) imp.resize(top);
  std::ostringstream os;
  os << "rank\tfeature\timportance\n";
  for (std::size_t i = 0; i < imp.size(); ++i) os << i + 1 << '\t' << imp[i].first << '\t' << fmt(imp[i].second, 6) << '\n';
  return os.str();
}

// Delimited export of a feature pool: header of names, then one row per
// instance with its id and correctness label.
inline std::string format_features(const Pool& pool) {
  std::ostringstream os;
  os.precision(17);
  os << "id\tcorrect";
  for (const auto& n : pool.X.names) os << '\t' << n;
  os << '\n';
  for (std::size_t r = 0; r < pool.size(); ++r) {
    os << pool.ids[r] << '\t' << static_cast<int>(pool.labels[r]);
    for (double v : pool.X.row(r)) os << '\t' << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace expcal
