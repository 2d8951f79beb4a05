#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "expcal/pipeline.hpp"
#include "expcal/synthetic.hpp"
#include "helpers.hpp"

using namespace expcal;
using namespace expcal::synthetic;
using namespace expcal::testing;

namespace {

class CountingPredictor final : public Predictor {
 public:
  explicit CountingPredictor(const Predictor& inner) : inner_(inner) {}
  PredictResponse predict(const PredictRequest& req) const override {
    queries_ += req.sequences.size();
    return inner_.predict(req);
  }
  std::string digest() const override { return inner_.digest(); }
  Task task() const override { return inner_.task(); }
  std::size_t queries() const { return queries_; }

 private:
  const Predictor& inner_;
  mutable std::atomic<std::size_t> queries_{0};
};

struct Fixture {
  std::vector<AnnotatedInstance> corpus;
  AttributionStore store;
  PropertySpace space{PropertyScheme::for_task(Task::QA)};
  std::map<FeatureFamily, Pool> pools;

  Fixture() {
    const auto reader = make_distractor_predictor();
    QaCorpusOptions opt;
    opt.count = 520;
    opt.seed = 3;
    corpus = generate_qa_corpus(opt, reader);
    auto cfg = ExplainerConfig::defaults(Task::QA, LimeKernel{});
    cfg.perturbation.count = 96;
    const auto summary = run_explanations(corpus, reader, cfg, store);
    if (!summary.failures.empty()) throw std::runtime_error(summary.failures.front().message);
    for (auto f : {FeatureFamily::MaxProb, FeatureFamily::Kamath, FeatureFamily::BowProp, FeatureFamily::LimeCal}) {
      pools.emplace(f, build_pool(corpus, f, space, store_lookup(store, ExplainerKind::Lime)));
    }
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

ForestHyper small_forest(std::size_t depth = 6) {
  ForestHyper h;
  h.n_trees = 30;
  h.max_depth = depth;
  return h;
}

std::vector<FamilyData> families() {
  std::vector<FamilyData> out;
  for (const auto& [f, pool] : fixture().pools) out.push_back({f, pool, small_forest()});
  return out;
}

}  // namespace

TEST(RunExplanations, ResumeSkipsStoredInstances) {
  const auto reader = make_distractor_predictor();
  QaCorpusOptions opt;
  opt.count = 6;
  const auto corpus = generate_qa_corpus(opt, reader);
  auto cfg = ExplainerConfig::defaults(Task::QA, ShapleyKernel{});
  cfg.perturbation.count = 64;
  AttributionStore store;
  CountingPredictor counting(reader);
  const auto first = run_explanations(corpus, counting, cfg, store);
  EXPECT_EQ(first.explained, 6u);
  EXPECT_EQ(first.skipped, 0u);
  const auto used = counting.queries();
  EXPECT_GT(used, 0u);

  const auto second = run_explanations(corpus, counting, cfg, store, 3);
  EXPECT_EQ(second.explained, 0u);
  EXPECT_EQ(second.skipped, 6u);
  EXPECT_EQ(counting.queries(), used);
  EXPECT_EQ(second.digest, first.digest);

  cfg.perturbation.seed = 1;
  const auto third = run_explanations(corpus, counting, cfg, store);
  EXPECT_EQ(third.explained, 6u);
  EXPECT_NE(third.digest, first.digest);
  EXPECT_THROW(store_lookup(store, ExplainerKind::Shap)(corpus[0]), InvalidArgument);
  EXPECT_NE(store_lookup(store, ExplainerKind::Shap, third.digest)(corpus[0]), nullptr);
}

TEST(RunExplanations, WorkersDoNotChangeResults) {
  const auto reader = make_distractor_predictor();
  QaCorpusOptions opt;
  opt.count = 5;
  const auto corpus = generate_qa_corpus(opt, reader);
  auto cfg = ExplainerConfig::defaults(Task::QA, LimeKernel{});
  cfg.perturbation.count = 64;
  AttributionStore serial, parallel;
  run_explanations(corpus, reader, cfg, serial, 1);
  run_explanations(corpus, reader, cfg, parallel, 4);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial.records()[i].id, parallel.records()[i].id);
    EXPECT_EQ(serial.records()[i].attribution.phis, parallel.records()[i].attribution.phis);
  }
}

TEST(RunExplanations, FailuresAreRecordedPerInstance) {
  const FunctionPredictor flaky(
      Task::NLI,
      [](const std::vector<std::string>& seq) {
        if (std::find(seq.begin(), seq.end(), "boom") != seq.end()) throw PredictError("backend down", true);
        return 0.5;
      },
      "flaky");
  std::vector<AnnotatedInstance> corpus{plain_instance(4), plain_instance(5), plain_instance(6)};
  corpus[1].tokens[0].text = "boom";
  auto cfg = ExplainerConfig::defaults(Task::NLI, LimeKernel{});
  cfg.perturbation.count = 32;
  AttributionStore store;
  const auto summary = run_explanations(corpus, flaky, cfg, store);
  EXPECT_EQ(summary.explained, 2u);
  ASSERT_EQ(summary.failures.size(), 1u);
  EXPECT_EQ(summary.failures[0].id, corpus[1].id);
  EXPECT_NE(summary.failures[0].message.find("backend down"), std::string::npos);
  EXPECT_FALSE(store.contains(corpus[1].id, summary.digest));
}

TEST(Pools, MissingAttributionIsAnError) {
  const auto& fx = fixture();
  AttributionStore empty;
  EXPECT_THROW(build_pool(fx.corpus, FeatureFamily::LimeCal, fx.space, store_lookup(empty, ExplainerKind::Lime)),
               InvalidArgument);
  EXPECT_THROW(build_pool(fx.corpus, FeatureFamily::ShapCal, fx.space), InvalidArgument);
}

TEST(Pools, SubsetAndConcat) {
  const auto& pool = fixture().pools.at(FeatureFamily::BowProp);
  const std::vector<std::size_t> a{0, 5}, b{7};
  const auto joined = concat(subset(pool, a), subset(pool, b));
  ASSERT_EQ(joined.size(), 3u);
  EXPECT_EQ(joined.ids, (std::vector<std::string>{pool.ids[0], pool.ids[5], pool.ids[7]}));
  for (std::size_t c = 0; c < pool.X.cols(); ++c) EXPECT_EQ(joined.X.at(2, c), pool.X.at(7, c));
  EXPECT_THROW(concat(pool, fixture().pools.at(FeatureFamily::Kamath)), InvalidArgument);
}

TEST(Metrics, EvaluateScoresMatchesEvaluationModule) {
  const std::vector<double> s{0.9, 0.8, 0.1}, q{1, 0, 1};
  const std::vector<std::uint8_t> y{1, 0, 1};
  const auto m = evaluate_scores(s, y, q);
  EXPECT_NEAR(m.auc, 100.0 * (1.0 + 0.5 + 2.0 / 3.0) / 3.0, 1e-12);
  EXPECT_NEAR(m.acc, 100.0 / 3.0, 1e-12);
  EXPECT_EQ(m.q25, 100.0);
  EXPECT_EQ(m.q50, 50.0);
  EXPECT_NEAR(m.q75, 100.0 * 2.0 / 3.0, 1e-12);
  EXPECT_EQ(std::string(Metrics::names()[1]), "auc");
}

TEST(Trials, SplitsAreDisjointAndDeterministic) {
  const auto s = trial_split(50, 20, 7, 3);
  EXPECT_EQ(s.train.size(), 20u);
  EXPECT_EQ(s.test.size(), 30u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 50u);
  EXPECT_EQ(trial_split(50, 20, 7, 3).train, s.train);
  EXPECT_NE(trial_split(50, 20, 7, 4).train, s.train);
}

TEST(Trials, ReportIsReproducible) {
  TrialConfig cfg;
  cfg.train_size = 300;
  cfg.trials = 3;
  cfg.seed = 11;
  const auto a = run_trials(families(), cfg);
  const auto b = run_trials(families(), cfg);
  EXPECT_EQ(format_trial_report(a), format_trial_report(b));
  EXPECT_EQ(format_trial_details(a), format_trial_details(b));
  cfg.workers = 3;
  EXPECT_EQ(format_trial_details(run_trials(families(), cfg)), format_trial_details(a));
  cfg.workers = 1;
  EXPECT_EQ(a.test_size, 220u);
  ASSERT_NE(a.of(FeatureFamily::LimeCal), nullptr);
  EXPECT_EQ(a.of(FeatureFamily::LimeCal)->size(), 3u);
  EXPECT_EQ(a.of(FeatureFamily::ShapCal), nullptr);

  const auto report = format_trial_report(a);
  EXPECT_EQ(report.rfind("# trials=3 train=300 test=220\nfamily\tmetric\tmean\tstd\tdelta_bow_mean\tdelta_bow_std\n", 0),
            0u);
  cfg.seed = 12;
  EXPECT_NE(format_trial_report(run_trials(families(), cfg)), report);
}

TEST(Trials, DeltaIsDifferenceOfMeans) {
  TrialConfig cfg;
  cfg.train_size = 300;
  cfg.trials = 4;
  const auto r = run_trials(families(), cfg);
  for (std::size_t m = 0; m < Metrics::kCount; ++m) {
    const auto d = delta_vs_bow(r, FeatureFamily::LimeCal, m);
    const double diff = metric_summary(*r.of(FeatureFamily::LimeCal), m).mean -
                        metric_summary(*r.of(FeatureFamily::BowProp), m).mean;
    EXPECT_NEAR(d.mean, diff, 1e-9);
    EXPECT_GE(d.std, 0.0);
  }
  // MaxProb is the untrained top probability on the same test split
  const auto split = trial_split(520, 300, cfg.seed, 0);
  const auto test = subset(fixture().pools.at(FeatureFamily::MaxProb), split.test);
  const auto expect = evaluate_scores(test.max_prob, test.labels, test.quality);
  EXPECT_DOUBLE_EQ(r.of(FeatureFamily::MaxProb)->front().auc, expect.auc);
}

TEST(Trials, RejectsBadInputs) {
  TrialConfig cfg;
  cfg.train_size = 520;
  EXPECT_THROW(run_trials(families(), cfg), InvalidArgument);
  cfg.train_size = 100;
  auto fams = families();
  const std::vector<std::size_t> half{0, 1, 2};
  fams[1].pool = subset(fams[1].pool, half);
  EXPECT_THROW(run_trials(fams, cfg), InvalidArgument);
  EXPECT_THROW(run_trials({}, cfg), InvalidArgument);
}

TEST(MeanStd, SampleStandardDeviation) {
  const std::vector<double> xs{1, 2, 3, 4};
  const auto m = mean_std(xs);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_std(std::vector<double>{7}).std, 0.0);
}

TEST(CrossDomain, WidthMismatchAndDiagonal) {
  const auto& fx = fixture();
  EXPECT_THROW(run_cross_domain(FeatureFamily::BowProp, fx.pools.at(FeatureFamily::BowProp),
                                fx.pools.at(FeatureFamily::Kamath), small_forest()),
               InvalidArgument);
  const auto& bow = fx.pools.at(FeatureFamily::BowProp);
  std::vector<std::size_t> first(260), second(260);
  std::iota(first.begin(), first.end(), 0);
  std::iota(second.begin(), second.end(), 260);
  std::vector<NamedPool> domains{{"a", subset(bow, first)}, {"b", subset(bow, second)}};
  const auto grid = cross_domain_grid(FeatureFamily::BowProp, domains, small_forest());
  const auto& b = domains[1].pool;
  EXPECT_DOUBLE_EQ(grid[1][1], evaluate_scores(b.max_prob, b.labels, b.quality).auc);
  EXPECT_DOUBLE_EQ(grid[0][1], run_cross_domain(FeatureFamily::BowProp, domains[0].pool, b, small_forest()).auc);
  const auto text = format_grid(domains, grid);
  EXPECT_EQ(text.substr(0, text.find('\n')), "source\\target\ta\tb");
}

TEST(Selective, MixtureDrawsAreDisjointAndCapped) {
  MixtureSpec spec;
  spec.id_train_count = 100;
  spec.id_test_count = 400;
  spec.known_count = 50;
  spec.unknown_count = 1000;
  const auto m = mixture_indices(spec, 300, 80, 200, 5);
  EXPECT_EQ(m.id_train.size(), 100u);
  EXPECT_EQ(m.id_test.size(), 200u);
  EXPECT_EQ(m.known.size(), 50u);
  EXPECT_EQ(m.unknown.size(), 200u);
  std::set<std::size_t> train(m.id_train.begin(), m.id_train.end());
  for (auto i : m.id_test) EXPECT_EQ(train.count(i), 0u);
  EXPECT_THROW(mixture_indices(spec, 100, 80, 200, 5), InvalidArgument);

  const auto& bow = fixture().pools.at(FeatureFamily::BowProp);
  std::vector<std::size_t> a(300), b(80), c(140);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 300);
  std::iota(c.begin(), c.end(), 380);
  const auto mix = mixture_indices(spec, 300, 80, 140, 5);
  const auto metrics = run_selective(FeatureFamily::BowProp, subset(bow, a), subset(bow, b), subset(bow, c), mix,
                                     small_forest());
  EXPECT_GE(metrics.auc, 0.0);
  EXPECT_LE(metrics.auc, 100.0);
}

TEST(GridSearch, SingleCellAndFullGrid) {
  const auto& kamath = fixture().pools.at(FeatureFamily::Kamath);
  HyperGrid one{{25}, {3}};
  const auto single = grid_search(kamath, one, ForestHyper{}, 1);
  ASSERT_EQ(single.cells.size(), 1u);
  EXPECT_EQ(single.best.n_trees, 25u);
  EXPECT_EQ(single.best.max_depth, 3u);

  HyperGrid small{{5, 10, 15, 20}, {1, 2, 3, 4, 5, 6}};
  const auto full = grid_search(kamath, small, ForestHyper{}, 1);
  EXPECT_EQ(full.cells.size(), 24u);
  double best = 0.0;
  for (const auto& c : full.cells) best = std::max(best, c.val_auc);
  bool found = false;
  for (const auto& c : full.cells) {
    if (c.n_trees == full.best.n_trees && c.max_depth == full.best.max_depth) {
      EXPECT_EQ(c.val_auc, best);
      found = true;
    }
    if (c.val_auc == best) {
      EXPECT_GE(c.max_depth, full.best.max_depth);
    }
  }
  EXPECT_TRUE(found);
  EXPECT_EQ(HyperGrid{}.n_trees.size() * HyperGrid{}.max_depth.size(), 24u);

  const std::vector<std::size_t> few(499);
  EXPECT_THROW(grid_search(subset(kamath, std::vector<std::size_t>(few.size(), 0)), one, ForestHyper{}, 1),
               InvalidArgument);
}

TEST(Reports, ImportanceAndFeatureExport) {
  const auto& bow = fixture().pools.at(FeatureFamily::BowProp);
  const auto model = train_forest(bow.X, bow.labels, small_forest());
  const auto text = format_importance(model, 5);
  EXPECT_EQ(text.rfind("rank\tfeature\timportance\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);

  const std::vector<std::size_t> two{0, 1};
  const auto exported = format_features(subset(bow, two));
  EXPECT_EQ(std::count(exported.begin(), exported.end(), '\n'), 3);
  EXPECT_EQ(exported.rfind("id\tcorrect\t", 0), 0u);
}

TEST(DefaultHyper, FamiliesGetTheirDepths) {
  EXPECT_EQ(default_hyper(Task::QA, FeatureFamily::Kamath).max_depth, 6u);
  EXPECT_EQ(default_hyper(Task::NLI, FeatureFamily::ClsProbCal).max_depth, 4u);
  EXPECT_EQ(default_hyper(Task::QA, FeatureFamily::BowProp).max_depth, 20u);
  EXPECT_EQ(default_hyper(Task::NLI, FeatureFamily::BowProp).max_depth, 6u);
  EXPECT_EQ(default_hyper(Task::NLI, FeatureFamily::ShapCal).n_trees, 400u);
  EXPECT_EQ(default_hyper(Task::QA, FeatureFamily::LimeCal).n_trees, 300u);
}
