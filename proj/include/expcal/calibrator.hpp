#pragma once
// Random-forest calibrator: bagged CART trees with Gini splits whose leaves
// hold the positive-class fraction. Scores are the mean leaf fraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "expcal/core_types.hpp"
#include "expcal/digest.hpp"
#include "expcal/error.hpp"
#include "expcal/features.hpp"

namespace expcal {

// Row-major dense matrix with named columns.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::size_t rows = 0;
  std::vector<double> data;

  std::size_t cols() const { return names.size(); }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void append(const FeatureVector& fv) {
    if (rows == 0 && names.empty()) names = fv.names;
    if (fv.names != names) throw InvalidArgument("feature names differ between rows");
    data.insert(data.end(), fv.values.begin(), fv.values.end());
    ++rows;
  }

  static FeatureMatrix from_rows(std::vector<std::string> names, const std::vector<std::vector<double>>& rows) {
    FeatureMatrix m;
    m.names = std::move(names);
    for (const auto& r : rows) {
      if (r.size() != m.cols()) throw InvalidArgument("row width does not match feature names");
      m.data.insert(m.data.end(), r.begin(), r.end());
      ++m.rows;
    }
    return m;
  }
};

struct ForestHyper {
  std::size_t n_trees = 300;
  std::size_t max_depth = 20;
  std::size_t min_samples_leaf = 1;
  std::size_t features_per_split = 0;  // 0 -> ceil(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::size_t resolved_features(std::size_t d) const {
    if (features_per_split > 0) return std::min(features_per_split, d);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d)))));
  }

  bool in_search_range() const {
    return n_trees >= 200 && n_trees <= 500 && max_depth >= 4 && max_depth <= 20;
  }
};

// Flat node arrays; feature < 0 marks a leaf. x[feature] <= threshold goes left.
struct Tree {
  std::vector<std::int32_t> feature;
  std::vector<double> threshold;
  std::vector<std::int32_t> left;
  std::vector<std::int32_t> right;
  std::vector<double> value;     // positive-class fraction of the node's samples
  std::vector<double> samples;   // (bootstrap) sample count at the node
  std::vector<double> impurity;  // Gini impurity at the node

  std::size_t size() const { return feature.size(); }

  double predict(std::span<const double> x) const {
    std::size_t node = 0;
    while (feature[node] >= 0) {
      node = static_cast<std::size_t>(x[static_cast<std::size_t>(feature[node])] <= threshold[node] ? left[node]
                                                                                                   : right[node]);
    }
    return value[node];
  }

  std::size_t depth() const {
    std::vector<std::size_t> d(size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < size(); ++i) {
      best = std::max(best, d[i]);
      if (feature[i] >= 0) {
        d[static_cast<std::size_t>(left[i])] = d[i] + 1;
        d[static_cast<std::size_t>(right[i])] = d[i] + 1;
      }
    }
    return best;
  }
};

struct ForestModel {
  std::vector<Tree> trees;
  ForestHyper hyper;
  std::vector<std::string> feature_names;
  std::string training_digest;
  // Optional metadata carried by model files.
  std::string task;
  std::string family;

  double score_row(std::span<const double> x) const {
    if (x.size() != feature_names.size()) throw InvalidArgument("feature width does not match model");
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return trees.empty() ? 0.0 : s / static_cast<double>(trees.size());
  }
};

inline double gini(double pos, double n) {
  if (n <= 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& X, std::span<const std::uint8_t> labels, const ForestHyper& hyper,
              std::uint64_t seed)
      : X_(X), y_(labels), hyper_(hyper), rng_(seed), mtry_(hyper.resolved_features(X.cols())) {}

  Tree build() {
    std::vector<std::size_t> idx;
    const std::size_t n = X_.rows;
    idx.reserve(n);
    if (hyper_.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < n; ++i) idx.push_back(pick(rng_));
    } else {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    }
    grow(idx, 0);
    return std::move(tree_);
  }

 private:
  std::int32_t new_node(double pos, double n) {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(n > 0.0 ? pos / n : 0.0);
    tree_.samples.push_back(n);
    tree_.impurity.push_back(gini(pos, n));
    return static_cast<std::int32_t>(tree_.size() - 1);
  }

  std::vector<std::size_t> sample_features() {
    const std::size_t d = X_.cols();
    std::vector<std::size_t> f(d);
    std::iota(f.begin(), f.end(), std::size_t{0});
    for (std::size_t i = 0; i < mtry_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, d - 1);
      std::swap(f[i], f[pick(rng_)]);
    }
    f.resize(mtry_);
    std::sort(f.begin(), f.end());
    return f;
  }

  SplitChoice best_split(const std::vector<std::size_t>& idx, double parent_gini) {
    SplitChoice best;
    const double n = static_cast<double>(idx.size());
    const std::size_t min_leaf = std::max<std::size_t>(hyper_.min_samples_leaf, 1);
    std::vector<std::pair<double, std::uint8_t>> col(idx.size());
    double total_pos = 0.0;
    for (std::size_t i : idx) total_pos += y_[i];

    for (std::size_t f : sample_features()) {
      for (std::size_t k = 0; k < idx.size(); ++k) col[k] = {X_.at(idx[k], f), y_[idx[k]]};
      std::sort(col.begin(), col.end());
      double left_pos = 0.0;
      for (std::size_t k = 0; k + 1 < col.size(); ++k) {
        left_pos += col[k].second;
        if (col[k].first == col[k + 1].first) continue;
        const std::size_t nl = k + 1, nr = col.size() - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
        const double child = (dl * gini(left_pos, dl) + dr * gini(total_pos - left_pos, dr)) / n;
        const double gain = parent_gini - child;
        if (gain > best.gain + 1e-15) {
          double mid = 0.5 * (col[k].first + col[k + 1].first);
          if (!(mid < col[k + 1].first)) mid = col[k].first;
          best = {true, f, mid, gain};
        }
      }
    }
    return best;
  }

  std::int32_t grow(const std::vector<std::size_t>& idx, std::size_t depth) {
    double pos = 0.0;
    for (std::size_t i : idx) pos += y_[i];
    const double n = static_cast<double>(idx.size());
    const std::int32_t node = new_node(pos, n);
    const double g = tree_.impurity[static_cast<std::size_t>(node)];
    if (depth >= hyper_.max_depth || g <= 0.0 || idx.size() < 2 * std::max<std::size_t>(hyper_.min_samples_leaf, 1)) {
      return node;
    }
    const SplitChoice split = best_split(idx, g);
    if (!split.found) return node;

    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx) (X_.at(i, split.feature) <= split.threshold ? li : ri).push_back(i);
    const auto u = static_cast<std::size_t>(node);
    tree_.feature[u] = static_cast<std::int32_t>(split.feature);
    tree_.threshold[u] = split.threshold;
    const std::int32_t l = grow(li, depth + 1);
    tree_.left[u] = l;
    const std::int32_t r = grow(ri, depth + 1);
    tree_.right[u] = r;
    return node;
  }

  const FeatureMatrix& X_;
  std::span<const std::uint8_t> y_;
  const ForestHyper& hyper_;
  std::mt19937_64 rng_;
  std::size_t mtry_;
  Tree tree_;
};

inline std::string hyper_canonical(const ForestHyper& h) {
  std::ostringstream os;
  os << "trees=" << h.n_trees << " depth=" << h.max_depth << " leaf=" << h.min_samples_leaf
     << " mtry=" << h.features_per_split << " bootstrap=" << h.bootstrap << " seed=" << h.seed;
  return os.str();
}

}  // namespace detail

// Seed of tree `index` under forest seed `seed`.
inline std::uint64_t tree_seed(std::uint64_t seed, std::size_t index) {
  return detail::splitmix64(detail::splitmix64(seed) ^ static_cast<std::uint64_t>(index));
}

inline ForestModel train_forest(const FeatureMatrix& X, std::span<const std::uint8_t> labels,
                                const ForestHyper& hyper) {
  if (X.rows == 0) throw InvalidArgument("empty training data");
  if (X.rows != labels.size()) throw InvalidArgument("feature rows and labels differ in length");
  if (X.cols() == 0) throw InvalidArgument("at least one feature required");
  EXPCAL_REQUIRE(hyper.n_trees >= 1 && hyper.max_depth >= 1, "forest needs >= 1 tree and depth >= 1");
  for (auto y : labels) EXPCAL_REQUIRE(y <= 1, "labels must be binary");

  ForestModel model;
  model.hyper = hyper;
  model.feature_names = X.names;
  model.trees.resize(hyper.n_trees);

  auto build_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      detail::TreeBuilder builder(X, labels, hyper, tree_seed(hyper.seed, t));
      model.trees[t] = builder.build();
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(hyper.threads, 1, hyper.n_trees);
  if (threads == 1) {
    build_range(0, hyper.n_trees);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (hyper.n_trees + threads - 1) / threads;
    for (std::size_t b = 0; b < hyper.n_trees; b += chunk) {
      pool.emplace_back(build_range, b, std::min(hyper.n_trees, b + chunk));
    }
  }

  std::ostringstream data;
  data.precision(17);
  data << detail::hyper_canonical(hyper) << '|';
  for (const auto& n : X.names) data << n << ',';
  for (double v : X.data) data << v << ',';
  for (auto y : labels) data << static_cast<int>(y);
  model.training_digest = short_digest(data.str());
  return model;
}

inline double score(const ForestModel& model, const FeatureVector& x) {
  if (x.names != model.feature_names) throw InvalidArgument("feature names do not match the model");
  return model.score_row(x.values);
}

// Total Gini decrease per feature, normalized to sum to 1 (all zero if the
// forest never split).
inline std::vector<std::pair<std::string, double>> feature_importance(const ForestModel& model) {
  std::vector<double> imp(model.feature_names.size(), 0.0);
  for (const auto& t : model.trees) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t.feature[i] < 0) continue;
      const auto l = static_cast<std::size_t>(t.left[i]);
      const auto r = static_cast<std::size_t>(t.right[i]);
      const double dec =
          t.samples[i] * t.impurity[i] - t.samples[l] * t.impurity[l] - t.samples[r] * t.impurity[r];
      imp[static_cast<std::size_t>(t.feature[i])] += std::max(dec, 0.0);
    }
  }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t f = 0; f < imp.size(); ++f) {
    out.emplace_back(model.feature_names[f], total > 0.0 ? imp[f] / total : 0.0);
  }
  return out;
}

inline constexpr int kForestFormatVersion = 1;
inline constexpr const char* kForestFormatName = "expcal-forest";

inline nlohmann::json to_json(const ForestModel& m) {
  nlohmann::json j;
  j["format"] = kForestFormatName;
  j["version"] = kForestFormatVersion;
  j["task"] = m.task;
  j["family"] = m.family;
  j["feature_names"] = m.feature_names;
  j["hyper"] = {{"n_trees", m.hyper.n_trees},
                {"max_depth", m.hyper.max_depth},
                {"min_samples_leaf", m.hyper.min_samples_leaf},
                {"features_per_split", m.hyper.features_per_split},
                {"bootstrap", m.hyper.bootstrap},
                {"seed", m.hyper.seed}};
  j["training_digest"] = m.training_digest;
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    trees.push_back({{"feature", t.feature},
                     {"threshold", t.threshold},
                     {"left", t.left},
                     {"right", t.right},
                     {"value", t.value},
                     {"samples", t.samples},
                     {"impurity", t.impurity}});
  }
  j["trees"] = std::move(trees);
  return j;
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
  auto field = [&](const nlohmann::json& obj, const char* name) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(name)) throw FormatError(std::string("missing field '") + name + "'");
    return obj.at(name);
  };
  try {
    if (field(j, "format").get<std::string>() != kForestFormatName) throw FormatError("field 'format': not a forest model");
    if (field(j, "version").get<int>() != kForestFormatVersion) {
      throw FormatError("field 'version': unsupported model version " + field(j, "version").dump());
    }
    ForestModel m;
    m.task = field(j, "task").get<std::string>();
    m.family = field(j, "family").get<std::string>();
    m.feature_names = field(j, "feature_names").get<std::vector<std::string>>();
    const auto& h = field(j, "hyper");
    m.hyper.n_trees = field(h, "n_trees").get<std::size_t>();
    m.hyper.max_depth = field(h, "max_depth").get<std::size_t>();
    m.hyper.min_samples_leaf = field(h, "min_samples_leaf").get<std::size_t>();
    m.hyper.features_per_split = field(h, "features_per_split").get<std::size_t>();
    m.hyper.bootstrap = field(h, "bootstrap").get<bool>();
    m.hyper.seed = field(h, "seed").get<std::uint64_t>();
    m.training_digest = field(j, "training_digest").get<std::string>();
    const auto& trees = field(j, "trees");
    if (!trees.is_array() || trees.size() != m.hyper.n_trees) throw FormatError("field 'trees': wrong tree count");
    const auto d = static_cast<std::int32_t>(m.feature_names.size());
    for (const auto& tj : trees) {
      Tree t;
      t.feature = field(tj, "feature").get<std::vector<std::int32_t>>();
      t.threshold = field(tj, "threshold").get<std::vector<double>>();
      t.left = field(tj, "left").get<std::vector<std::int32_t>>();
      t.right = field(tj, "right").get<std::vector<std::int32_t>>();
      t.value = field(tj, "value").get<std::vector<double>>();
      t.samples = field(tj, "samples").get<std::vector<double>>();
      t.impurity = field(tj, "impurity").get<std::vector<double>>();
      const std::size_t n = t.feature.size();
      if (n == 0) throw FormatError("field 'trees.feature': empty tree");
      if (t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.value.size() != n ||
          t.samples.size() != n || t.impurity.size() != n) {
        throw FormatError("field 'trees': node arrays differ in length");
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (t.feature[i] >= d) throw FormatError("field 'trees.feature': index out of range");
        if (t.feature[i] >= 0) {
          const auto self = static_cast<std::int32_t>(i);
          if (t.left[i] <= self || t.right[i] <= self || t.left[i] >= static_cast<std::int32_t>(n) ||
              t.right[i] >= static_cast<std::int32_t>(n)) {
            throw FormatError("field 'trees.left/right': child index out of range");
          }
        }
        if (!(t.value[i] >= 0.0 && t.value[i] <= 1.0)) throw FormatError("field 'trees.value': outside [0,1]");
      }
      if (t.depth() > m.hyper.max_depth) throw FormatError("field 'trees': depth exceeds max_depth");
      m.trees.push_back(std::move(t));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model: ") + e.what());
  }
}

inline void save(const ForestModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write model file '" + path + "'");
  out << to_json(model).dump() << '\n';
  if (!out) throw Error("failed writing model file '" + path + "'");
}

inline ForestModel load_forest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt model file: ") + e.what());
  }
  return forest_from_json(j);
}

inline std::string model_digest(const ForestModel& model) { return short_digest(to_json(model).dump()); }

}  // namespace expcal
