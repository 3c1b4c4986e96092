// Command-line front end: synthetic data, the two training stages, scoring,
// and the experiment drivers. Every failure ends with a JSON error document
// on stderr and a nonzero exit code.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "claire/augment/vae.hpp"
#include "claire/baselines/baselines.hpp"
#include "claire/data/data.hpp"
#include "claire/error.hpp"
#include "claire/fairrep/model.hpp"
#include "claire/harness/experiment.hpp"
#include "claire/harness/report.hpp"
#include "claire/metrics/metrics.hpp"
#include "claire/numerics/random.hpp"
#include "claire/scm/models.hpp"
#include "claire/scm/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace claire;

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

fs::path out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
  return fs::path(dir);
}

harness::ExperimentConfig read_config(const std::string& path) {
  if (path.empty()) return {};
  return harness::ExperimentConfig::from_json(scm::read_json_file(path));
}

Dataset read_data(const std::string& csv, const std::string& schema) {
  auto loaded = data::load_csv(csv, data::Schema::from_json(scm::read_json_file(schema)));
  std::cerr << "loaded " << loaded.report.rows_kept << " of " << loaded.report.rows_read << " rows\n";
  return std::move(loaded.data);
}

// --- synth ---------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  std::string out = ".";
};

void synth(const SynthArgs& a) {
  const auto truth = scm::claire_synthetic();
  const auto d = scm::sample(truth, a.n, a.seed).data;
  const auto dir = out_dir(a.out);

  auto csv = open_out(dir / "data.csv");
  csv << std::setprecision(17);
  for (const auto& f : d.feature_names) csv << f << ',';
  csv << "S,Y\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t c = 0; c < d.dim(); ++c) csv << d.x(i, c) << ',';
    csv << d.s[i] << ',' << d.y[i] << '\n';
  }

  data::Schema schema;
  for (const auto& f : d.feature_names) schema.features.push_back({f});
  schema.sensitive = "S";
  for (std::size_t v = 0; v < d.num_sensitive; ++v) schema.sensitive_values.push_back(std::to_string(v));
  schema.target = "Y";
  scm::write_json_file((dir / "schema.json").string(), schema.to_json());
  scm::write_json_file((dir / "graph.json").string(), scm::graph_to_json(truth.graph()));
  scm::write_json_file((dir / "scm.json").string(), scm::scm_to_json(truth));
  std::cout << "wrote " << d.size() << " rows to " << (dir / "data.csv").string() << '\n';
}

// --- augment and train ---------------------------------------------------

struct StageArgs {
  std::string data, schema, graph, config, method = "claire_m", mode = "mmd";
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

augment::Trained train_vae(const Dataset& d, augment::Mode mode, const fairrep::HyperParams& hp, std::uint64_t seed) {
  augment::TrainConfig tc;
  tc.mode = mode;
  tc.alpha = hp.alpha;
  tc.alpha_prime = hp.alpha_prime;
  tc.epochs = hp.epochs;
  tc.lr = hp.lr;
  tc.hidden = hp.hidden;
  tc.seed = derive_seed(seed, 3);
  return augment::train(d, tc);
}

void augment_cmd(const StageArgs& a) {
  const auto cfg = read_config(a.config);
  const std::uint64_t seed = a.seed.value_or(cfg.seed);
  const Dataset d = read_data(a.data, a.schema);
  const auto mode = augment::mode_from_string(a.mode);
  const auto trained = train_vae(d, mode, cfg.hp, seed);
  const auto set = augment::generate_counterfactuals(trained.vae, d, cfg.hp.k, derive_seed(seed, 4));
  const auto dir = out_dir(a.out);
  scm::write_json_file((dir / "vae.json").string(), trained.vae.to_json());
  auto csv = open_out(dir / "counterfactuals.csv");
  augment::write_counterfactual_csv(csv, set, d.feature_names);
  std::cout << "final loss " << trained.trace.loss.back() << ", " << set.num_sensitive() << " x " << set.size()
            << " counterfactuals\n";
}

std::unique_ptr<baselines::Predictor> fit(const harness::MethodSpec& m, const harness::ExperimentConfig& cfg,
                                          const Dataset& d, const std::string& graph, std::uint64_t seed) {
  if (m.kind == "constant") return std::make_unique<baselines::ConstantPredictor>(baselines::constant_predictor(d));
  if (m.kind == "full") return std::make_unique<baselines::LinearPredictor>(baselines::full_predictor(d));
  if (m.kind == "unaware") return std::make_unique<baselines::LinearPredictor>(baselines::unaware_predictor(d));
  if (m.is_cfp()) {
    if (graph.empty()) throw ConfigError("method " + m.label() + " needs --graph");
    auto g = scm::graph_from_json(scm::read_json_file(graph));
    if (m.model != "true") g = scm::variant_graph(g, scm::variant_from_string(m.model));
    baselines::CfpConfig c{scm::fit_linear_scm(g, d)};
    c.posterior_samples = cfg.posterior_samples;
    c.epochs = cfg.cfp_epochs;
    c.lr = cfg.cfp_lr;
    c.fairness_weight = cfg.cfp_fairness_weight;
    c.hidden = cfg.hp.hidden;
    c.seed = derive_seed(seed, 6);
    if (m.kind == "cfp_u") return std::make_unique<baselines::CfpUPredictor>(baselines::cfp_u(c, d));
    return std::make_unique<baselines::CfpOPredictor>(baselines::cfp_o(c, d));
  }
  auto hp = cfg.hp;
  if (m.kind == "erm") hp.beta = hp.lambda = 0.0;
  if (m.kind == "irm") hp.beta = 0.0;
  if (m.kind == "claire_ni") hp.lambda = 0.0;
  // Best-epoch selection holds out a validation split; augmentation covers the rest.
  Dataset fit_rows = d;
  std::optional<Dataset> validation;
  if (hp.select_best_epoch) {
    const auto idx = data::split(d.size(), derive_seed(seed, 1));
    fit_rows = d.subset(idx.train);
    validation = d.subset(idx.validation);
  }
  augment::AugmentedSet aug;
  if (hp.beta > 0.0) {
    const auto mode = m.kind == "claire_a" ? augment::Mode::adversarial : augment::Mode::mmd;
    aug = augment::generate_counterfactuals(train_vae(fit_rows, mode, hp, seed).vae, fit_rows, hp.k,
                                            derive_seed(seed, 4));
  }
  hp.seed = derive_seed(seed, 5);
  auto trained = fairrep::train(fit_rows, aug, hp, validation ? &*validation : nullptr);
  return std::make_unique<harness::ClairePredictor>(std::move(trained.model));
}

void train_cmd(const StageArgs& a) {
  const auto cfg = read_config(a.config);
  const std::uint64_t seed = a.seed.value_or(cfg.seed);
  const auto method = harness::MethodSpec::parse(a.method, cfg.scm);
  const Dataset d = read_data(a.data, a.schema);
  const auto predictor = fit(method, cfg, d, a.graph, seed);
  const auto path = out_dir(a.out) / "model.json";
  scm::write_json_file(path.string(), predictor->to_json());
  std::cout << "trained " << method.label() << " -> " << path.string() << '\n';
}

// --- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string model, data, schema, scm;
  std::size_t posterior_samples = 500;
  std::uint64_t seed = 0;
  std::string out;
};

void eval_cmd(const EvalArgs& a) {
  const json doc = scm::read_json_file(a.model);
  const auto predictor = harness::load_predictor(doc);
  const Dataset d = read_data(a.data, a.schema);
  const std::string name = doc.value("kind", "claire");
  std::vector<harness::ResultRow> rows;
  const auto pred = predictor->predict(d.x, d.s);
  if (d.task == Task::regression) {
    rows.push_back({name, "rmse", metrics::rmse(pred, d.y)});
    rows.push_back({name, "mae", metrics::mae(pred, d.y)});
  } else {
    rows.push_back({name, "accuracy", metrics::accuracy(pred, d.y)});
  }
  if (!a.scm.empty()) {
    const auto truth = scm::scm_from_json(scm::read_json_file(a.scm));
    metrics::CounterfactualSet cf;
    for (std::size_t sp = 0; sp < d.num_sensitive; ++sp) {
      const auto twin = scm::counterfactual_dataset(truth, d, sp, a.posterior_samples, derive_seed(a.seed, 2));
      cf.predictions.push_back(predictor->predict(twin.x, twin.s));
    }
    const auto div = metrics::counterfactual_divergence(cf, derive_seed(a.seed, 7));
    rows.push_back({name, "mmd", div.mmd_avg});
    rows.push_back({name, "wass", div.wass_avg});
    for (const auto& p : div.pairs) {
      const std::string tag = std::to_string(p.s) + "_" + std::to_string(p.s_prime);
      rows.push_back({name, "mmd_" + tag, p.mmd});
      rows.push_back({name, "wass_" + tag, p.wass});
    }
  }
  harness::write_csv(std::cout, rows);
  if (!a.out.empty()) {
    auto out = open_out(out_dir(a.out) / "results.csv");
    harness::write_csv(out, rows);
  }
}

// --- experiments ---------------------------------------------------------

struct ExperimentArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps, workers;
  int table_id = 0;
  std::string param;
  std::vector<double> values;
};

harness::ExperimentConfig experiment_config(const ExperimentArgs& a) {
  auto c = read_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (a.reps) c.repetitions = *a.reps;
  if (a.workers) c.workers = *a.workers;
  return c;
}

void finish(const harness::ExperimentConfig& c, const std::vector<harness::ResultRow>& rows, const std::string& out) {
  harness::write_csv(std::cout, rows);
  if (!out.empty()) harness::write_outputs(out, c, rows);
}

void add_experiment_flags(CLI::App* cmd, ExperimentArgs& a) {
  cmd->add_option("--config", a.config, "experiment config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", a.seed, "base seed (overrides the config)");
  cmd->add_option("--reps", a.reps, "repetitions (overrides the config)")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", a.workers, "parallel repetitions")->check(CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "directory for results.json, results.csv and plot.svg");
}

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactually fair prediction with learned counterfactual augmentation"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "sample the synthetic causal model to CSV");
  synth_cmd->add_option("--n", sa.n, "rows")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", sa.seed);
  synth_cmd->add_option("--out", sa.out, "output directory");

  StageArgs aa;
  auto* aug_cmd = app.add_subcommand("augment", "train the VAE and write counterfactuals for every row");
  aug_cmd->add_option("--data", aa.data)->required()->check(CLI::ExistingFile);
  aug_cmd->add_option("--schema", aa.schema)->required()->check(CLI::ExistingFile);
  aug_cmd->add_option("--mode", aa.mode, "mmd or adversarial");
  aug_cmd->add_option("--config", aa.config, "experiment config JSON (hp block is used)")->check(CLI::ExistingFile);
  aug_cmd->add_option("--seed", aa.seed);
  aug_cmd->add_option("--out", aa.out);

  StageArgs ta;
  auto* train_sub = app.add_subcommand("train", "fit one method on a CSV and write model.json");
  train_sub->add_option("--data", ta.data)->required()->check(CLI::ExistingFile);
  train_sub->add_option("--schema", ta.schema)->required()->check(CLI::ExistingFile);
  train_sub->add_option("--method", ta.method, "e.g. full, cfp_u:M1, claire_m");
  train_sub->add_option("--graph", ta.graph, "causal graph JSON (CFP methods)")->check(CLI::ExistingFile);
  train_sub->add_option("--config", ta.config)->check(CLI::ExistingFile);
  train_sub->add_option("--seed", ta.seed);
  train_sub->add_option("--out", ta.out);

  EvalArgs ea;
  auto* eval_sub = app.add_subcommand("eval", "score a saved model; with --scm also its counterfactual divergence");
  eval_sub->add_option("--model", ea.model)->required()->check(CLI::ExistingFile);
  eval_sub->add_option("--data", ea.data)->required()->check(CLI::ExistingFile);
  eval_sub->add_option("--schema", ea.schema)->required()->check(CLI::ExistingFile);
  eval_sub->add_option("--scm", ea.scm, "causal model JSON for ground-truth counterfactuals")->check(CLI::ExistingFile);
  eval_sub->add_option("--posterior-samples", ea.posterior_samples)->check(CLI::PositiveNumber);
  eval_sub->add_option("--seed", ea.seed);
  eval_sub->add_option("--out", ea.out);

  ExperimentArgs xa;
  auto* run_sub = app.add_subcommand("run", "run the methods of --config");
  add_experiment_flags(run_sub, xa);
  auto* table_sub = app.add_subcommand("table", "preset method list for one of the four tables");
  add_experiment_flags(table_sub, xa);
  table_sub->add_option("--id", xa.table_id)->required()->check(CLI::Range(1, 4));
  auto* ablation_sub = app.add_subcommand("ablation", "ERM, IRM, CLAIRE-NI, CLAIRE-M and CLAIRE-A");
  add_experiment_flags(ablation_sub, xa);
  auto* sweep_sub = app.add_subcommand("sweep", "one run per value of a hyperparameter");
  add_experiment_flags(sweep_sub, xa);
  sweep_sub->add_option("--param", xa.param, "alpha, alpha_prime, K, beta or lambda")->required();
  sweep_sub->add_option("--values", xa.values)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage_error", e.what(), 2);
  }

  try {
    if (*synth_cmd) synth(sa);
    if (*aug_cmd) augment_cmd(aa);
    if (*train_sub) train_cmd(ta);
    if (*eval_sub) eval_cmd(ea);
    if (*run_sub) {
      const auto c = experiment_config(xa);
      finish(c, harness::run(c), xa.out);
    }
    if (*table_sub) {
      const auto c = harness::table_config(xa.table_id, experiment_config(xa));
      finish(c, harness::run(c), xa.out);
    }
    if (*ablation_sub) {
      const auto c = experiment_config(xa);
      finish(c, harness::ablation(c), xa.out);
    }
    if (*sweep_sub) {
      const auto c = experiment_config(xa);
      finish(c, harness::sweep(c, xa.param, xa.values), xa.out);
    }
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("internal_error", e.what(), 1);
  }
  return 0;
}
