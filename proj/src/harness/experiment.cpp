#include "claire/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <tuple>
#include <utility>

#include "claire/augment/vae.hpp"
#include "claire/baselines/baselines.hpp"
#include "claire/data/data.hpp"
#include "claire/error.hpp"
#include "claire/metrics/metrics.hpp"
#include "claire/numerics/random.hpp"
#include "claire/scm/models.hpp"
#include "claire/scm/serialize.hpp"

namespace claire::harness {

namespace {

using nlohmann::json;

// Seed streams below the repetition seed.
enum Stream : std::uint64_t {
  kData = 0,
  kSplit = 1,
  kGroundTruth = 2,
  kVae = 3,
  kGenerate = 4,
  kRepresentation = 5,
  kCfp = 6,
  kDivergence = 7,
};

const std::vector<std::string> kKinds{"constant", "full",     "unaware", "cfp_u", "cfp_o",
                                      "claire_m", "claire_a", "erm",     "irm",   "claire_ni"};

std::string normalize(std::string s) {
  for (auto& c : s) c = c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string canonical_model(const std::string& m) {
  if (m == "true" || m == "M1" || m == "M2") return m;
  if (m == "m1" || m == "false") return "M1";
  if (m == "m2") return "M2";
  throw ConfigError("unknown causal model '" + m + "' (expected true, M1 or M2)");
}

struct Measurement {
  std::string method;
  std::string metric;
  double value;
};

// Loaded once per experiment; every repetition re-splits and re-standardizes.
struct CsvSource {
  Dataset data;
  std::vector<std::size_t> continuous;
  scm::CausalGraph graph;
};

CsvSource load_source(const DatasetSource& src) {
  const auto schema = data::Schema::from_json(scm::read_json_file(src.schema));
  auto loaded = data::load_csv(src.csv, schema);
  return {std::move(loaded.data), std::move(loaded.continuous_columns),
          scm::graph_from_json(scm::read_json_file(src.graph))};
}

// Everything shared by the methods of one repetition: data splits, the
// generating (or fitted) causal model, ground-truth counterfactual test sets,
// fitted CFP models and stage-one augmentation.
class Repetition {
 public:
  Repetition(const ExperimentConfig& config, const CsvSource* csv, std::size_t index)
      : config_(config), seed_(config.seed + index), truth_(build(csv)) {
    for (std::size_t sp = 0; sp < test_.num_sensitive; ++sp) {
      cf_test_.push_back(scm::counterfactual_dataset(truth_, test_, sp, config.posterior_samples,
                                                     derive_seed(seed_, kGroundTruth)));
    }
  }

  std::vector<Measurement> evaluate(const MethodSpec& method, const fairrep::HyperParams& hp) {
    const auto predictor = fit(method, hp);
    return score(method.label(), *predictor);
  }

 private:
  scm::Scm build(const CsvSource* csv) {
    Dataset all;
    if (csv) {
      const auto idx = data::split(csv->data.size(), derive_seed(seed_, kSplit));
      all = data::standardize(csv->data, idx.train, csv->continuous).data;
      assign(all, idx);
      return scm::fit_linear_scm(csv->graph, train_);
    }
    scm::Scm truth = scm::claire_synthetic();
    all = scm::sample(truth, config_.data.n, derive_seed(seed_, kData)).data;
    assign(all, data::split(all.size(), derive_seed(seed_, kSplit)));
    return truth;
  }

  void assign(const Dataset& all, const data::SplitIndices& idx) {
    train_ = all.subset(idx.train);
    validation_ = all.subset(idx.validation);
    test_ = all.subset(idx.test);
  }

  const scm::Scm& cfp_model(const std::string& name) {
    auto it = cfp_models_.find(name);
    if (it != cfp_models_.end()) return it->second;
    const scm::CausalGraph graph =
        name == "true" ? truth_.graph() : scm::variant_graph(truth_.graph(), scm::variant_from_string(name));
    return cfp_models_.emplace(name, scm::fit_linear_scm(graph, train_)).first->second;
  }

  const augment::AugmentedSet& augmented(augment::Mode mode, const fairrep::HyperParams& hp) {
    const double weight = mode == augment::Mode::adversarial ? hp.alpha_prime : hp.alpha;
    const auto vae_key = std::make_pair(mode, weight);
    auto vit = vaes_.find(vae_key);
    if (vit == vaes_.end()) {
      augment::TrainConfig tc;
      tc.mode = mode;
      tc.alpha = hp.alpha;
      tc.alpha_prime = hp.alpha_prime;
      tc.epochs = hp.epochs;
      tc.lr = hp.lr;
      tc.hidden = hp.hidden;
      tc.seed = derive_seed(seed_, kVae);
      vit = vaes_.emplace(vae_key, augment::train(train_, tc).vae).first;
    }
    const auto aug_key = std::make_tuple(mode, weight, hp.k);
    auto ait = augmented_.find(aug_key);
    if (ait == augmented_.end()) {
      ait = augmented_
                .emplace(aug_key, augment::generate_counterfactuals(vit->second, train_, hp.k,
                                                                    derive_seed(seed_, kGenerate)))
                .first;
    }
    return ait->second;
  }

  std::unique_ptr<baselines::Predictor> fit(const MethodSpec& method, fairrep::HyperParams hp) {
    const std::string& k = method.kind;
    if (k == "constant") return std::make_unique<baselines::ConstantPredictor>(baselines::constant_predictor(train_));
    if (k == "full") return std::make_unique<baselines::LinearPredictor>(baselines::full_predictor(train_));
    if (k == "unaware") return std::make_unique<baselines::LinearPredictor>(baselines::unaware_predictor(train_));
    if (method.is_cfp()) {
      baselines::CfpConfig cfg{cfp_model(method.model)};
      cfg.posterior_samples = config_.posterior_samples;
      cfg.epochs = config_.cfp_epochs;
      cfg.lr = config_.cfp_lr;
      cfg.fairness_weight = config_.cfp_fairness_weight;
      cfg.hidden = hp.hidden;
      cfg.seed = derive_seed(seed_, kCfp);
      if (k == "cfp_u") return std::make_unique<baselines::CfpUPredictor>(baselines::cfp_u(cfg, train_));
      return std::make_unique<baselines::CfpOPredictor>(baselines::cfp_o(cfg, train_));
    }
    if (k == "erm") hp.beta = hp.lambda = 0.0;
    if (k == "irm") hp.beta = 0.0;
    if (k == "claire_ni") hp.lambda = 0.0;
    const augment::Mode mode = k == "claire_a" ? augment::Mode::adversarial : augment::Mode::mmd;
    static const augment::AugmentedSet none;
    const augment::AugmentedSet& aug = hp.beta > 0.0 ? augmented(mode, hp) : none;
    hp.seed = derive_seed(seed_, kRepresentation);
    auto trained = fairrep::train(train_, aug, hp, hp.select_best_epoch ? &validation_ : nullptr);
    return std::make_unique<ClairePredictor>(std::move(trained.model));
  }

  std::vector<Measurement> score(const std::string& label, const baselines::Predictor& p) const {
    std::vector<Measurement> out;
    const auto pred = p.predict(test_.x, test_.s);
    if (test_.task == Task::regression) {
      out.push_back({label, "rmse", metrics::rmse(pred, test_.y)});
      out.push_back({label, "mae", metrics::mae(pred, test_.y)});
    } else {
      out.push_back({label, "accuracy", metrics::accuracy(pred, test_.y)});
    }
    metrics::CounterfactualSet cf;
    for (const auto& d : cf_test_) cf.predictions.push_back(p.predict(d.x, d.s));
    const auto div = metrics::counterfactual_divergence(cf, derive_seed(seed_, kDivergence));
    out.push_back({label, "mmd", div.mmd_avg});
    out.push_back({label, "wass", div.wass_avg});
    for (const auto& pair : div.pairs) {
      const std::string tag = std::to_string(pair.s) + "_" + std::to_string(pair.s_prime);
      out.push_back({label, "mmd_" + tag, pair.mmd});
      out.push_back({label, "wass_" + tag, pair.wass});
    }
    return out;
  }

  const ExperimentConfig& config_;
  std::uint64_t seed_;
  Dataset train_, validation_, test_;
  scm::Scm truth_;
  std::vector<Dataset> cf_test_;
  std::map<std::string, scm::Scm> cfp_models_;
  std::map<std::pair<augment::Mode, double>, augment::Vae> vaes_;
  std::map<std::tuple<augment::Mode, double, std::size_t>, augment::AugmentedSet> augmented_;
};

// Runs task(i) for i < count on up to `workers` threads. Results land by index
// so aggregation never depends on scheduling; the lowest-index failure wins.
template <class T, class F>
std::vector<T> parallel_map(std::size_t count, std::size_t workers, F task) {
  std::vector<T> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        results[i] = task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, count));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::vector<ResultRow> aggregate(const std::vector<std::vector<Measurement>>& reps) {
  std::vector<ResultRow> rows;
  if (reps.empty()) return rows;
  const std::size_t r = reps.size();
  for (std::size_t m = 0; m < reps.front().size(); ++m) {
    ResultRow row;
    row.method = reps.front()[m].method;
    row.metric = reps.front()[m].metric;
    double sum = 0.0;
    for (const auto& rep : reps) sum += rep.at(m).value;
    row.mean = sum / static_cast<double>(r);
    double ss = 0.0;
    for (const auto& rep : reps) ss += (rep[m].value - row.mean) * (rep[m].value - row.mean);
    row.std = r > 1 ? std::sqrt(ss / static_cast<double>(r - 1)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string context(const ExperimentConfig& c, std::size_t rep, const std::string& method) {
  return "experiment '" + c.id + "', repetition " + std::to_string(rep) + (method.empty() ? "" : ", method " + method) +
         ": ";
}

// One point of a grid: the parameter name and value applied to hp.
struct Point {
  std::string param;
  double value = 0.0;
};

void apply(fairrep::HyperParams& hp, const Point& p) {
  if (p.param.empty()) return;
  if (p.param == "alpha") {
    hp.alpha = p.value;
  } else if (p.param == "alpha_prime") {
    hp.alpha_prime = p.value;
  } else if (p.param == "beta") {
    hp.beta = p.value;
  } else if (p.param == "lambda") {
    hp.lambda = p.value;
  } else if (p.param == "K" || p.param == "k") {
    if (p.value < 1.0 || p.value != std::floor(p.value)) throw ConfigError("K must be a positive integer");
    hp.k = static_cast<std::size_t>(p.value);
  } else {
    throw ConfigError("unknown sweep parameter '" + p.param + "' (expected alpha, K, beta or lambda)");
  }
}

std::vector<ResultRow> execute(const ExperimentConfig& config, const std::vector<Point>& points) {
  config.validate();
  std::vector<MethodSpec> methods;
  for (const auto& m : config.methods) methods.push_back(MethodSpec::parse(m, config.scm));
  std::vector<fairrep::HyperParams> grid;
  for (const auto& p : points) {
    grid.push_back(config.hp);
    apply(grid.back(), p);
    grid.back().validate();
  }
  std::optional<CsvSource> csv;
  if (config.data.kind == DatasetSource::Kind::csv) {
    try {
      csv = load_source(config.data);
    } catch (const Error& e) {
      throw Error(e.kind(), "experiment '" + config.id + "': " + e.what());
    }
  }
  // Per repetition, one measurement list per grid point.
  using RepResult = std::vector<std::vector<Measurement>>;
  const auto reps = parallel_map<RepResult>(config.repetitions, config.workers, [&](std::size_t r) {
    std::string current;
    try {
      Repetition rep(config, csv ? &*csv : nullptr, r);
      RepResult out(grid.size());
      for (std::size_t g = 0; g < grid.size(); ++g) {
        for (const auto& m : methods) {
          current = m.label();
          auto ms = rep.evaluate(m, grid[g]);
          out[g].insert(out[g].end(), ms.begin(), ms.end());
        }
      }
      return out;
    } catch (const Error& e) {
      throw Error(e.kind(), context(config, r, current) + e.what());
    }
  });
  std::vector<ResultRow> rows;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<std::vector<Measurement>> per_rep;
    for (const auto& rep : reps) per_rep.push_back(rep[g]);
    for (auto& row : aggregate(per_rep)) {
      row.param = points[g].param;
      row.value = points[g].value;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace

json DatasetSource::to_json() const {
  if (kind == Kind::synthetic) return {{"source", "synthetic"}, {"n", n}};
  return {{"source", "csv"}, {"csv", csv}, {"schema", schema}, {"graph", graph}};
}

DatasetSource DatasetSource::from_json(const json& j) {
  DatasetSource d;
  const std::string source = j.value("source", "synthetic");
  if (source == "synthetic") {
    d.n = j.value("n", d.n);
  } else if (source == "csv") {
    d.kind = Kind::csv;
    d.csv = j.at("csv").get<std::string>();
    d.schema = j.at("schema").get<std::string>();
    d.graph = j.at("graph").get<std::string>();
  } else {
    throw ConfigError("unknown dataset source '" + source + "' (expected synthetic or csv)");
  }
  return d;
}

MethodSpec MethodSpec::parse(const std::string& text, const std::string& default_model) {
  const auto colon = text.find(':');
  MethodSpec m;
  m.kind = normalize(text.substr(0, colon));
  if (std::find(kKinds.begin(), kKinds.end(), m.kind) == kKinds.end()) {
    throw ConfigError("unknown method '" + text + "'");
  }
  if (m.is_cfp()) {
    m.model = canonical_model(colon == std::string::npos ? default_model : text.substr(colon + 1));
  } else if (colon != std::string::npos) {
    throw ConfigError("method '" + m.kind + "' does not take a causal model");
  }
  return m;
}

std::string MethodSpec::label() const {
  static const std::map<std::string, std::string> names{
      {"constant", "Constant"}, {"full", "Full"},         {"unaware", "Unaware"}, {"cfp_u", "CFP-U"},
      {"cfp_o", "CFP-O"},       {"claire_m", "CLAIRE-M"}, {"claire_a", "CLAIRE-A"}, {"erm", "ERM"},
      {"irm", "IRM"},           {"claire_ni", "CLAIRE-NI"}};
  const std::string base = names.at(kind);
  return is_cfp() ? base + "(" + model + ")" : base;
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (methods.empty()) throw ConfigError("methods must not be empty");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (posterior_samples < 1) throw ConfigError("posterior_samples must be at least 1");
  if (data.kind == DatasetSource::Kind::synthetic && data.n < 10) throw ConfigError("synthetic n must be at least 10");
  canonical_model(scm);
  for (const auto& m : methods) MethodSpec::parse(m, scm);
  hp.validate();
}

json ExperimentConfig::to_json() const {
  return {{"id", id},
          {"dataset", data.to_json()},
          {"methods", methods},
          {"hp", hp.to_json()},
          {"scm", scm},
          {"repetitions", repetitions},
          {"seed", seed},
          {"posterior_samples", posterior_samples},
          {"cfp", {{"epochs", cfp_epochs}, {"lr", cfp_lr}, {"fairness_weight", cfp_fairness_weight}}},
          {"workers", workers}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    c.id = j.value("id", c.id);
    if (j.contains("dataset")) c.data = DatasetSource::from_json(j.at("dataset"));
    c.methods = j.value("methods", c.methods);
    if (j.contains("hp")) c.hp = fairrep::HyperParams::from_json(j.at("hp"));
    c.scm = j.value("scm", c.scm);
    c.repetitions = j.value("repetitions", c.repetitions);
    c.seed = j.value("seed", c.seed);
    c.posterior_samples = j.value("posterior_samples", c.posterior_samples);
    if (j.contains("cfp")) {
      const auto& f = j.at("cfp");
      c.cfp_epochs = f.value("epochs", c.cfp_epochs);
      c.cfp_lr = f.value("lr", c.cfp_lr);
      c.cfp_fairness_weight = f.value("fairness_weight", c.cfp_fairness_weight);
    }
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  return c;
}

json ResultRow::to_json() const {
  json j{{"method", method}, {"metric", metric}, {"mean", mean}, {"std", std}};
  if (!param.empty()) {
    j["param"] = param;
    j["value"] = value;
  }
  return j;
}

std::vector<ResultRow> run(const ExperimentConfig& config) { return execute(config, {Point{}}); }

std::vector<ResultRow> ablation(ExperimentConfig config) {
  config.methods = {"erm", "irm", "claire_ni", "claire_m", "claire_a"};
  return run(config);
}

std::vector<ResultRow> sweep(const ExperimentConfig& config, const std::string& param,
                             const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<Point> points;
  for (double v : values) points.push_back({param, v});
  return execute(config, points);
}

ExperimentConfig table_config(int id, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  c.id = "table" + std::to_string(id);
  switch (id) {
    case 1:
      c.methods = {"constant", "full", "unaware", "cfp_u:true", "cfp_o:true", "claire_m", "claire_a"};
      break;
    case 2:
      c.data = DatasetSource{};
      c.methods = {"cfp_u:true", "cfp_u:M1", "cfp_o:true", "cfp_o:M1", "claire_m", "claire_a"};
      break;
    case 3:
    case 4:
      c.data = DatasetSource{};
      c.methods = {"cfp_u:true", "cfp_u:M2", "cfp_o:true", "cfp_o:M2", "claire_m", "claire_a"};
      break;
    default:
      throw ConfigError("unknown table id " + std::to_string(id) + " (expected 1 to 4)");
  }
  return c;
}

std::vector<double> ClairePredictor::predict(const Matrix& x, std::span<const std::size_t>) const {
  return model_.predict(x);
}

std::unique_ptr<baselines::Predictor> load_predictor(const json& j) {
  if (j.contains("format")) return std::make_unique<ClairePredictor>(fairrep::ClaireModel::from_json(j));
  return baselines::predictor_from_json(j);
}

const ResultRow& find_row(const std::vector<ResultRow>& rows, const std::string& method, const std::string& metric,
                          std::optional<double> value) {
  for (const auto& r : rows) {
    if (r.method == method && r.metric == metric && (!value || r.value == *value)) return r;
  }
  throw ValidationError("no result for " + method + " / " + metric);
}

}  // namespace claire::harness
