// Command-line front end: dataset validation, explanation runs, calibrator
// training and evaluation, and the experiment protocols.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "expcal/blackbox.hpp"
#include "expcal/calibrator.hpp"
#include "expcal/pipeline.hpp"
#include "expcal/records.hpp"
#include "expcal/remote.hpp"
#include "expcal/synthetic.hpp"

using namespace expcal;

namespace {

struct PredictorOptions {
  std::string synthetic = "distractor";
  std::string endpoint;
  int timeout_ms = 30000;
  std::size_t retries = 4;
  std::size_t max_in_flight = 4;
  std::string token;
};

struct ExplainOptions {
  std::string explainer = "lime";
  std::size_t perturbations = 0;  // 0 -> task default
  std::uint64_t seed = 0;
  double lambda = 1e-3;
  double sigma = 0.25;
  std::size_t batch_size = 256;
  std::size_t concurrency = 1;
  std::size_t workers = 1;
  bool full_enumeration = false;
};

struct CalibOptions {
  std::string data;
  std::string family = "limecal";
  std::string store;
  std::string digest;
  std::string bow_mode = "count";
  std::size_t trees = 0;  // 0 -> family default
  std::size_t depth = 0;
  std::size_t min_leaf = 1;
  std::size_t mtry = 0;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

void add_predictor_options(CLI::App* app, PredictorOptions& p) {
  app->add_option("--predictor", p.synthetic, "Built-in predictor: distractor, overlap or nli-linear")
      ->check(CLI::IsMember({"distractor", "overlap", "nli-linear"}));
  app->add_option("--endpoint", p.endpoint, "Remote predictor URL (http://host:port); overrides --predictor");
  app->add_option("--timeout-ms", p.timeout_ms, "Per-request timeout for the remote predictor");
  app->add_option("--retries", p.retries, "Attempts per batch for retryable failures");
  app->add_option("--max-in-flight", p.max_in_flight, "Concurrent requests to the remote predictor");
  app->add_option("--bearer-token", p.token, "Bearer token sent to the remote predictor");
}

void add_calib_options(CLI::App* app, CalibOptions& c, bool need_family = true) {
  app->add_option("--data", c.data, "Dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  if (need_family) {
    app->add_option("--family", c.family, "Feature family")
        ->check(CLI::IsMember({"maxprob", "kamath", "clsprobcal", "bowprop", "limecal", "shapcal"}));
  }
  app->add_option("--store", c.store, "Attribution store (needed by limecal/shapcal)");
  app->add_option("--digest", c.digest, "Explainer config digest to read from the store");
  app->add_option("--bow-mode", c.bow_mode, "Bag-of-property encoding: count, binary or frequency")
      ->check(CLI::IsMember({"count", "binary", "frequency"}));
  app->add_option("--trees", c.trees, "Number of trees (default per family)");
  app->add_option("--depth", c.depth, "Maximum tree depth (default per family)");
  app->add_option("--min-leaf", c.min_leaf, "Minimum samples per leaf");
  app->add_option("--mtry", c.mtry, "Features tried per split (0 = ceil(sqrt(d)))");
  app->add_option("--threads", c.threads, "Threads for tree building");
  app->add_option("--seed", c.seed, "Run seed");
}

std::unique_ptr<Predictor> make_predictor(const PredictorOptions& p) {
  if (!p.endpoint.empty()) {
    RemoteConfig cfg = parse_endpoint(p.endpoint);
    cfg.timeout = std::chrono::milliseconds(p.timeout_ms);
    cfg.retry.max_attempts = p.retries;
    cfg.max_in_flight = p.max_in_flight;
    if (!p.token.empty()) cfg.bearer_token = p.token;
    return std::make_unique<RemotePredictor>(cfg);
  }
  if (p.synthetic == "overlap") return std::make_unique<OverlapQaPredictor>(make_overlap_predictor());
  if (p.synthetic == "nli-linear") return std::make_unique<LinearBagPredictor>(synthetic::make_nli_predictor());
  return std::make_unique<OverlapQaPredictor>(make_distractor_predictor());
}

BowMode parse_bow_mode(const std::string& s) {
  if (s == "binary") return BowMode::Binary;
  if (s == "frequency") return BowMode::Frequency;
  return BowMode::Count;
}

Task dataset_task(const std::vector<AnnotatedInstance>& data, const std::string& path) {
  if (data.empty()) throw InvalidArgument("dataset '" + path + "' is empty");
  const Task t = data.front().task;
  for (const auto& inst : data) {
    if (inst.task != t) throw InvalidArgument("dataset '" + path + "' mixes tasks");
  }
  return t;
}

ForestHyper hyper_for(const CalibOptions& c, Task task, FeatureFamily family) {
  ForestHyper h = default_hyper(task, family);
  if (c.trees > 0) h.n_trees = c.trees;
  if (c.depth > 0) h.max_depth = c.depth;
  h.min_samples_leaf = c.min_leaf;
  h.features_per_split = c.mtry;
  h.threads = c.threads;
  h.seed = c.seed;
  return h;
}

// Loads the store once per path; kept alive for the lookups built on it.
struct StoreCache {
  std::map<std::string, std::unique_ptr<AttributionStore>> stores;

  const AttributionStore& get(const std::string& path) {
    auto& s = stores[path];
    if (!s) s = std::make_unique<AttributionStore>(path);
    return *s;
  }
};

Pool load_pool(const std::vector<AnnotatedInstance>& data, Task task, FeatureFamily family, const CalibOptions& c,
               StoreCache& cache) {
  const PropertySpace space(PropertyScheme::for_task(task));
  AttributionLookup lookup;
  if (uses_attributions(family)) {
    if (c.store.empty()) throw InvalidArgument(std::string(to_string(family)) + " needs --store");
    std::optional<std::string> digest;
    if (!c.digest.empty()) digest = c.digest;
    lookup = store_lookup(cache.get(c.store), family_explainer(family), digest);
  }
  return build_pool(data, family, space, lookup, parse_bow_mode(c.bow_mode));
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string task = "qa";
  std::size_t count = 2000;
  std::uint64_t seed = 0;
  std::string out;
  std::string id_prefix;
  PredictorOptions predictor;
};

int cmd_generate(const GenerateArgs& a) {
  std::vector<AnnotatedInstance> data;
  if (a.task == "qa") {
    synthetic::QaCorpusOptions opt;
    opt.count = a.count;
    opt.seed = a.seed;
    if (!a.id_prefix.empty()) opt.id_prefix = a.id_prefix;
    const auto reader = a.predictor.synthetic == "overlap" ? make_overlap_predictor() : make_distractor_predictor();
    data = synthetic::generate_qa_corpus(opt, reader);
  } else {
    synthetic::NliCorpusOptions opt;
    opt.count = a.count;
    opt.seed = a.seed;
    if (!a.id_prefix.empty()) opt.id_prefix = a.id_prefix;
    data = synthetic::generate_nli_corpus(opt, synthetic::make_nli_predictor());
  }
  write_dataset(a.out, data);
  std::size_t correct = 0;
  for (const auto& inst : data) correct += inst.correct;
  std::cerr << "wrote " << data.size() << " " << a.task << " instances to " << a.out << " (" << correct
            << " correct)\n";
  return 0;
}

int cmd_validate(const std::string& path) {
  const auto result = read_dataset(path);
  for (const auto& r : result.rejects) {
    for (const auto& v : r.violations) {
      std::cout << path << ":" << r.line << ": " << r.id << ": " << v.field << ": " << v.rule << '\n';
    }
  }
  std::size_t correct = 0;
  for (const auto& inst : result.instances) correct += inst.correct;
  std::cerr << result.instances.size() << " valid, " << result.rejects.size() << " rejected, " << correct
            << " correct\n";
  return result.rejects.empty() ? 0 : 1;
}

struct ExplainArgs {
  std::string data;
  std::string store;
  ExplainOptions ex;
  PredictorOptions predictor;
};

int cmd_explain(const ExplainArgs& a) {
  const auto data = ingest(a.data);
  const Task task = dataset_task(data, a.data);
  const auto predictor = make_predictor(a.predictor);
  if (predictor->task() != task) throw InvalidArgument("predictor task does not match the dataset");
  KernelChoice kernel = LimeKernel{a.ex.sigma};
  if (a.ex.explainer == "shap") kernel = ShapleyKernel{};
  auto cfg = ExplainerConfig::defaults(task, kernel);
  if (a.ex.perturbations > 0) cfg.perturbation.count = a.ex.perturbations;
  cfg.perturbation.seed = a.ex.seed;
  cfg.perturbation.full_enumeration = a.ex.full_enumeration;
  cfg.ridge_lambda = a.ex.lambda;
  cfg.batch_size = a.ex.batch_size;
  cfg.concurrency = a.ex.concurrency;
  AttributionStore store(a.store);
  const auto summary = run_explanations(data, *predictor, cfg, store, a.ex.workers);
  std::cout << "digest\t" << summary.digest << "\nexplained\t" << summary.explained << "\nskipped\t"
            << summary.skipped << "\nfailed\t" << summary.failures.size() << '\n';
  for (const auto& f : summary.failures) std::cerr << "failed " << f.id << ": " << f.message << '\n';
  return summary.failures.empty() ? 0 : 1;
}

struct TrainArgs {
  CalibOptions calib;
  std::string model;
};

int cmd_train(const TrainArgs& a) {
  const FeatureFamily family = parse_family(a.calib.family);
  if (family == FeatureFamily::MaxProb) throw InvalidArgument("maxprob has no trained model");
  const auto data = ingest(a.calib.data);
  const Task task = dataset_task(data, a.calib.data);
  StoreCache cache;
  const Pool pool = load_pool(data, task, family, a.calib, cache);
  auto model = train_forest(pool.X, pool.labels, hyper_for(a.calib, task, family));
  model.task = std::string(to_string(task));
  model.family = std::string(to_string(family));
  save(model, a.model);
  std::cerr << "trained " << model.hyper.n_trees << " trees on " << pool.size() << " instances x "
            << pool.X.cols() << " features -> " << a.model << '\n';
  return 0;
}

struct EvaluateArgs {
  CalibOptions calib;
  std::string model;
  std::string out;
  std::string curve;
  std::string integrator = "rectangle";
};

eval::Integrator parse_integrator(const std::string& s) {
  return s == "trapezoid" ? eval::Integrator::Trapezoid : eval::Integrator::Rectangle;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const auto data = ingest(a.calib.data);
  const Task task = dataset_task(data, a.calib.data);
  std::vector<double> scores;
  std::string name = "maxprob";
  Pool pool;
  StoreCache cache;
  if (a.model.empty()) {
    if (parse_family(a.calib.family) != FeatureFamily::MaxProb) throw InvalidArgument("--model is required");
    pool = load_pool(data, task, FeatureFamily::MaxProb, a.calib, cache);
    scores = pool.max_prob;
  } else {
    const auto model = load_forest(a.model);
    if (!model.task.empty() && model.task != to_string(task)) throw InvalidArgument("model was trained for another task");
    const FeatureFamily family = parse_family(model.family.empty() ? a.calib.family : model.family);
    name = std::string(to_string(family));
    pool = load_pool(data, task, family, a.calib, cache);
    if (pool.X.names != model.feature_names) throw InvalidArgument("dataset features do not match the model");
    for (std::size_t i = 0; i < pool.size(); ++i) scores.push_back(model.score_row(pool.X.row(i)));
  }
  const auto metrics = evaluate_scores(scores, pool.labels, pool.quality, parse_integrator(a.integrator));
  write_text(a.out, format_metrics_table({{name, metrics}}));
  if (!a.curve.empty()) write_text(a.curve, format_curves({{name, eval::coverage_curve(scores, pool.quality)}}));
  return 0;
}

struct TrialsArgs {
  CalibOptions calib;
  std::vector<std::string> families{"maxprob", "bowprop", "limecal"};
  std::size_t train_size = 500;
  std::size_t trials = 20;
  std::size_t workers = 1;
  std::string out;
  std::string details;
  std::string integrator = "rectangle";
};

int cmd_trials(const TrialsArgs& a) {
  const auto data = ingest(a.calib.data);
  const Task task = dataset_task(data, a.calib.data);
  StoreCache cache;
  std::vector<FamilyData> families;
  for (const auto& f : a.families) {
    const FeatureFamily family = parse_family(f);
    families.push_back({family, load_pool(data, task, family, a.calib, cache), hyper_for(a.calib, task, family)});
  }
  TrialConfig cfg;
  cfg.train_size = a.train_size;
  cfg.trials = a.trials;
  cfg.seed = a.calib.seed;
  cfg.workers = a.workers;
  cfg.integrator = parse_integrator(a.integrator);
  const auto report = run_trials(families, cfg);
  write_text(a.out, format_trial_report(report));
  if (!a.details.empty()) write_text(a.details, format_trial_details(report));
  return 0;
}

struct CrossDomainArgs {
  CalibOptions calib;
  std::vector<std::string> domains;  // name=path
  std::string out;
};

int cmd_cross_domain(const CrossDomainArgs& a) {
  const FeatureFamily family = parse_family(a.calib.family);
  StoreCache cache;
  std::vector<NamedPool> pools;
  std::optional<Task> task;
  for (const auto& spec : a.domains) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("domain must be name=path, got '" + spec + "'");
    const std::string name = spec.substr(0, eq), path = spec.substr(eq + 1);
    const auto data = ingest(path);
    const Task t = dataset_task(data, path);
    if (task && *task != t) throw InvalidArgument("domains must share a task");
    task = t;
    pools.push_back({name, load_pool(data, t, family, a.calib, cache)});
  }
  const auto grid = cross_domain_grid(family, pools, hyper_for(a.calib, *task, family));
  write_text(a.out, format_grid(pools, grid));
  return 0;
}

struct SelectiveArgs {
  CalibOptions calib;
  MixtureSpec mix;
  std::string out;
};

int cmd_selective(const SelectiveArgs& a) {
  const FeatureFamily family = parse_family(a.calib.family);
  StoreCache cache;
  auto load = [&](const std::string& path) {
    const auto data = ingest(path);
    const Task t = dataset_task(data, path);
    if (t != Task::QA) throw InvalidArgument("selective QA needs QA datasets");
    return load_pool(data, t, family, a.calib, cache);
  };
  const Pool id = load(a.mix.id_path), known = load(a.mix.known_path), unknown = load(a.mix.unknown_path);
  const auto m = mixture_indices(a.mix, id.size(), known.size(), unknown.size(), a.calib.seed);
  ForestHyper h = hyper_for(a.calib, Task::QA, family);
  h.seed = derive_seed(a.calib.seed, 4);
  const auto metrics = run_selective(family, id, known, unknown, m, h);
  std::ostringstream os;
  os << "# train=" << m.id_train.size() << "+" << m.known.size() << " test=" << m.id_test.size() << "+"
     << m.unknown.size() << '\n'
     << format_metrics_table({{std::string(to_string(family)), metrics}});
  write_text(a.out, os.str());
  return 0;
}

struct GridArgs {
  CalibOptions calib;
  std::vector<std::size_t> trees{200, 300, 400, 500};
  std::vector<std::size_t> depths{4, 6, 8, 10, 15, 20};
  std::string out;
};

int cmd_grid_search(const GridArgs& a) {
  const FeatureFamily family = parse_family(a.calib.family);
  if (family == FeatureFamily::MaxProb) throw InvalidArgument("maxprob has no hyperparameters");
  const auto data = ingest(a.calib.data);
  const Task task = dataset_task(data, a.calib.data);
  StoreCache cache;
  const Pool pool = load_pool(data, task, family, a.calib, cache);
  const auto result = grid_search(pool, HyperGrid{a.trees, a.depths}, hyper_for(a.calib, task, family), a.calib.seed);
  std::ostringstream os;
  os << "n_trees\tmax_depth\tval_auc\n";
  for (const auto& c : result.cells) os << c.n_trees << '\t' << c.max_depth << '\t' << fmt(c.val_auc) << '\n';
  os << "# best n_trees=" << result.best.n_trees << " max_depth=" << result.best.max_depth << '\n';
  write_text(a.out, os.str());
  return 0;
}

struct ExportArgs {
  CalibOptions calib;
  std::string out;
};

int cmd_export_features(const ExportArgs& a) {
  const auto data = ingest(a.calib.data);
  const Task task = dataset_task(data, a.calib.data);
  StoreCache cache;
  write_text(a.out, format_features(load_pool(data, task, parse_family(a.calib.family), a.calib, cache)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrate black-box NLP predictions with explanation-derived features"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset with predictions from a built-in model");
  generate->add_option("--task", gen.task, "qa or nli")->check(CLI::IsMember({"qa", "nli"}));
  generate->add_option("--count", gen.count, "Number of instances");
  generate->add_option("--seed", gen.seed, "Generator seed");
  generate->add_option("--id-prefix", gen.id_prefix, "Prefix for instance ids");
  generate->add_option("--out", gen.out, "Output dataset")->required();
  generate->add_option("--predictor", gen.predictor.synthetic, "QA reader: distractor or overlap")
      ->check(CLI::IsMember({"distractor", "overlap"}));

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a dataset and report rejected records");
  validate->add_option("--data", validate_path, "Dataset (JSON lines)")->required()->check(CLI::ExistingFile);

  ExplainArgs ex;
  auto* explain_cmd = app.add_subcommand("explain", "Compute and store token attributions");
  explain_cmd->add_option("--data", ex.data, "Dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--store", ex.store, "Attribution store (appended to)")->required();
  explain_cmd->add_option("--explainer", ex.ex.explainer, "lime or shap")->check(CLI::IsMember({"lime", "shap"}));
  explain_cmd->add_option("--perturbations", ex.ex.perturbations, "Perturbations per instance (default per task)");
  explain_cmd->add_option("--seed", ex.ex.seed, "Perturbation seed");
  explain_cmd->add_option("--lambda", ex.ex.lambda, "Ridge penalty of the surrogate");
  explain_cmd->add_option("--sigma", ex.ex.sigma, "LIME kernel width");
  explain_cmd->add_option("--batch-size", ex.ex.batch_size, "Perturbations per predictor request");
  explain_cmd->add_option("--concurrency", ex.ex.concurrency, "Requests in flight per instance");
  explain_cmd->add_option("--workers", ex.ex.workers, "Instances explained concurrently");
  explain_cmd->add_flag("--full-enumeration", ex.ex.full_enumeration, "Use all 2^n masks (small instances)");
  add_predictor_options(explain_cmd, ex.predictor);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a calibrator and save it");
  add_calib_options(train, tr.calib);
  train->add_option("--model", tr.model, "Output model file")->required();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a dataset with a calibrator (or top probability)");
  add_calib_options(evaluate, ev.calib);
  evaluate->add_option("--model", ev.model, "Model file; omit with --family maxprob");
  evaluate->add_option("--out", ev.out, "Metrics table (default stdout)");
  evaluate->add_option("--curve", ev.curve, "Coverage-quality curve output");
  evaluate->add_option("--integrator", ev.integrator, "rectangle or trapezoid")
      ->check(CLI::IsMember({"rectangle", "trapezoid"}));

  TrialsArgs tl;
  auto* trials = app.add_subcommand("trials", "Repeated random-split evaluation of several families");
  add_calib_options(trials, tl.calib, false);
  trials->add_option("--families", tl.families, "Feature families")
      ->check(CLI::IsMember({"maxprob", "kamath", "clsprobcal", "bowprop", "limecal", "shapcal"}));
  trials->add_option("--train-size", tl.train_size, "Training split size")->check(CLI::IsMember({100, 300, 500}));
  trials->add_option("--trials", tl.trials, "Number of trials")->check(CLI::PositiveNumber);
  trials->add_option("--workers", tl.workers, "Trials evaluated concurrently");
  trials->add_option("--out", tl.out, "Summary report (default stdout)");
  trials->add_option("--details", tl.details, "Per-trial metrics output");
  trials->add_option("--integrator", tl.integrator, "rectangle or trapezoid")
      ->check(CLI::IsMember({"rectangle", "trapezoid"}));

  CrossDomainArgs cd;
  auto* cross = app.add_subcommand("cross-domain", "Train on each domain, test on every other");
  cross->add_option("--domain", cd.domains, "name=path, repeatable")->required();
  cross->add_option("--family", cd.calib.family, "Feature family")
      ->check(CLI::IsMember({"maxprob", "kamath", "clsprobcal", "bowprop", "limecal", "shapcal"}));
  cross->add_option("--store", cd.calib.store, "Attribution store");
  cross->add_option("--digest", cd.calib.digest, "Explainer config digest");
  cross->add_option("--trees", cd.calib.trees, "Number of trees");
  cross->add_option("--depth", cd.calib.depth, "Maximum tree depth");
  cross->add_option("--seed", cd.calib.seed, "Run seed");
  cross->add_option("--out", cd.out, "Grid output (default stdout)");

  SelectiveArgs sel;
  auto* selective = app.add_subcommand("selective", "Selective QA: train on ID+known OOD, test on ID+unknown OOD");
  selective->add_option("--id", sel.mix.id_path, "In-domain dataset")->required()->check(CLI::ExistingFile);
  selective->add_option("--id-train-count", sel.mix.id_train_count, "In-domain training instances");
  selective->add_option("--id-test-count", sel.mix.id_test_count, "In-domain test instances");
  selective->add_option("--known", sel.mix.known_path, "Known OOD dataset")->required()->check(CLI::ExistingFile);
  selective->add_option("--known-count", sel.mix.known_count, "Known OOD instances");
  selective->add_option("--unknown", sel.mix.unknown_path, "Unknown OOD dataset")->required()->check(CLI::ExistingFile);
  selective->add_option("--unknown-count", sel.mix.unknown_count, "Unknown OOD instances");
  selective->add_option("--family", sel.calib.family, "Feature family")
      ->check(CLI::IsMember({"maxprob", "kamath", "bowprop", "limecal", "shapcal"}));
  selective->add_option("--store", sel.calib.store, "Attribution store");
  selective->add_option("--digest", sel.calib.digest, "Explainer config digest");
  selective->add_option("--trees", sel.calib.trees, "Number of trees");
  selective->add_option("--depth", sel.calib.depth, "Maximum tree depth");
  selective->add_option("--seed", sel.calib.seed, "Run seed");
  selective->add_option("--out", sel.out, "Metrics output (default stdout)");

  GridArgs gr;
  auto* grid = app.add_subcommand("grid-search", "Pick trees and depth on a 400/100 split");
  add_calib_options(grid, gr.calib);
  grid->add_option("--grid-trees", gr.trees, "Tree counts to try");
  grid->add_option("--grid-depths", gr.depths, "Depths to try");
  grid->add_option("--out", gr.out, "Grid output (default stdout)");

  std::string importance_model;
  std::size_t importance_top = 0;
  std::string importance_out;
  auto* importance = app.add_subcommand("importance-report", "Rank features of a trained calibrator");
  importance->add_option("--model", importance_model, "Model file")->required()->check(CLI::ExistingFile);
  importance->add_option("--top", importance_top, "Rows to print (0 = all)");
  importance->add_option("--out", importance_out, "Output (default stdout)");

  ExportArgs exp;
  auto* export_cmd = app.add_subcommand("export-features", "Write the feature matrix of a dataset");
  add_calib_options(export_cmd, exp.calib);
  export_cmd->add_option("--out", exp.out, "Output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*validate) return cmd_validate(validate_path);
    if (*explain_cmd) return cmd_explain(ex);
    if (*train) return cmd_train(tr);
    if (*evaluate) return cmd_evaluate(ev);
    if (*trials) return cmd_trials(tl);
    if (*cross) return cmd_cross_domain(cd);
    if (*selective) return cmd_selective(sel);
    if (*grid) return cmd_grid_search(gr);
    if (*importance) {
      write_text(importance_out, format_importance(load_forest(importance_model), importance_top));
      return 0;
    }
    if (*export_cmd) return cmd_export_features(exp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
