#include "dmls2r/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmls2r/bench.hpp"
#include "dmls2r/checkpoint.hpp"
#include "dmls2r/dataio.hpp"
#include "dmls2r/rng.hpp"
#include "dmls2r/trainer.hpp"

namespace dmls2r {

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string data;
  std::string schema;
  std::string out;
};

struct TrainFlags {
  int cycles = 30;
  double lr = 0.001;
  int k = 5;
  double tau = 10.0;
  double alpha = 1.0;
  double margin = 0.4;
  int batch_size = 64;
  std::string epoch_semantics = "cycles";
  bool signed_selection = false;
  std::string rll_neg_weight = "rll";
  bool normalize_embeddings = false;
  bool separate_optimizers = false;
  bool plateau = false;
  int unlabeled = 0;  // 0 falls back to the schema value, then 1000
  bool norm_train_only = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  // Config files are read by the parent app, so --config placed after the
  // subcommand name has to fall through to it.
  cmd->fallthrough();
  cmd->add_option("--data", a.data, "input CSV file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--schema", a.schema, "dataset schema file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "output directory")->required();
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--cycles", f.cycles, "alternation cycles")
      ->capture_default_str();
  cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--k", f.k, "positive/negative set size")
      ->capture_default_str();
  cmd->add_option("--tau", f.tau, "weighting temperature")
      ->capture_default_str();
  cmd->add_option("--alpha", f.alpha, "negative-set boundary")
      ->capture_default_str();
  cmd->add_option("--margin", f.margin, "pull margin m")->capture_default_str();
  cmd->add_option("--batch-size", f.batch_size, "pair batch size")
      ->capture_default_str();
  cmd->add_option("--epoch-semantics", f.epoch_semantics,
                  "what one cycle means")
      ->check(CLI::IsMember({"cycles", "total"}))
      ->capture_default_str();
  cmd->add_flag("--signed-selection", f.signed_selection,
                "rank set candidates by signed difference instead of |f_d|");
  cmd->add_option("--rll-neg-weight", f.rll_neg_weight,
                  "negative-set weighting scheme")
      ->check(CLI::IsMember({"paper", "rll"}))
      ->capture_default_str();
  cmd->add_flag("--normalize-embeddings", f.normalize_embeddings,
                "L2-normalize embeddings inside the metric loss");
  cmd->add_flag("--separate-optimizers", f.separate_optimizers,
                "per-step Adam states instead of one shared state");
  cmd->add_flag("--plateau", f.plateau, "stop early when both losses flatten");
  cmd->add_option("--unlabeled", f.unlabeled,
                  "unlabeled pool size (0 defers to the schema value)")
      ->capture_default_str();
  cmd->add_flag("--norm-train-only", f.norm_train_only,
                "fit normalization on the labeled+unlabeled rows only");
}

TrainConfig to_train_config(const TrainFlags& f) {
  TrainConfig t;
  t.cycles = f.cycles;
  t.psm_batch_size = f.batch_size;
  t.learning_rate = f.lr;
  t.rll.k = f.k;
  t.rll.tau = f.tau;
  t.rll.alpha = f.alpha;
  t.rll.margin = f.margin;
  t.rll.signed_selection = f.signed_selection;
  t.rll.negative_weighting = f.rll_neg_weight == "paper"
                                 ? NegativeWeighting::Paper
                                 : NegativeWeighting::Rll;
  t.rll.normalize_embeddings = f.normalize_embeddings;
  t.epoch_semantics = f.epoch_semantics == "total" ? EpochSemantics::TotalEpochs
                                                   : EpochSemantics::Cycles;
  t.separate_optimizers = f.separate_optimizers;
  t.plateau_stop = f.plateau;
  return t;
}

Dataset load_for_run(const CommonArgs& a, DatasetSchema& schema) {
  schema = load_schema(a.schema);
  Dataset ds = load_csv(a.data, schema);
  if (schema.has_sentinel) ds = clean_sentinels(ds, schema.sentinel);
  return ds;
}

int resolve_unlabeled(const TrainFlags& f, const DatasetSchema& schema) {
  if (f.unlabeled > 0) return f.unlabeled;
  if (schema.unlabeled > 0) return schema.unlabeled;
  return 1000;
}

void require_pool_fits_k(int k, int n_unlabeled) {
  if (2 * k > n_unlabeled) {
    throw std::invalid_argument(
        "k = " + std::to_string(k) +
        " needs an unlabeled pool of at least 2k = " + std::to_string(2 * k) +
        " samples, but the pool holds " + std::to_string(n_unlabeled) +
        "; lower --k or raise --unlabeled");
  }
}

void echo_config(std::ostream& out, CLI::App* cmd) {
  // The section header keeps the echoed block valid as a --config file.
  out << "resolved configuration (" << cmd->get_name() << "):\n"
      << "[" << cmd->get_name() << "]\n"
      << cmd->config_to_str(true, false) << "\n";
}

int cmd_prepare(const CommonArgs& a, std::ostream& out) {
  DatasetSchema schema;
  Dataset ds = load_for_run(a, schema);
  const NormParams norm = fit_minmax(ds);
  const Dataset prepared = apply_minmax(ds, norm);

  fs::create_directories(a.out);
  const fs::path base(a.out);
  save_dataset_csv(base / "prepared.csv", prepared);
  write_json_file(base / "norm_params.json", norm_to_json(norm));

  std::ofstream sch(base / "prepared.schema", std::ios::binary);
  sch << "name = " << schema.name << "\n"
      << "target = " << prepared.target_name << "\n";
  if (schema.unlabeled > 0) sch << "unlabeled = " << schema.unlabeled << "\n";
  if (!sch) throw std::runtime_error("cannot write prepared.schema");

  out << "prepared " << schema.name << ": " << prepared.sample_count()
      << " rows, " << prepared.feature_count() << " features, target "
      << prepared.target_name << "\n"
      << "wrote " << (base / "prepared.csv").string() << ", "
      << (base / "norm_params.json").string() << ", "
      << (base / "prepared.schema").string() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& a, const TrainFlags& f, int size,
              std::uint64_t seed, const std::string& method_str,
              std::ostream& out) {
  const Method method = method_from_tag(method_str);
  if (method == Method::KnnRaw) {
    throw std::invalid_argument(
        "train fits the siamese model; use --method dml-s2r or step1-only");
  }

  DatasetSchema schema;
  const Dataset ds = load_for_run(a, schema);
  const int n_unlabeled = resolve_unlabeled(f, schema);
  if (method != Method::Step1Only) require_pool_fits_k(f.k, n_unlabeled);

  TrainConfig t = to_train_config(f);
  t.seed = derive_seed(seed, "train");
  t.step1_only = (method == Method::Step1Only);
  t.validate();

  const ExperimentSplit split =
      make_split(ds, size, n_unlabeled, derive_seed(seed, "split"));

  std::vector<int> fit_rows = split.labeled_idx;
  fit_rows.insert(fit_rows.end(), split.unlabeled_idx.begin(),
                  split.unlabeled_idx.end());
  const NormParams norm =
      f.norm_train_only ? fit_minmax(ds, fit_rows) : fit_minmax(ds);
  const Dataset work = apply_minmax(ds, norm);

  fs::create_directories(a.out);
  const fs::path base(a.out);
  t.checkpoint_path = base / "checkpoint.json";

  TrainResult result = alternate_train(work, split, t);

  const Eigen::MatrixXd labeled_x =
      gather_rows(work.features, split.labeled_idx);
  const Eigen::VectorXd labeled_y = gather(work.targets, split.labeled_idx);
  const Eigen::MatrixXd test_x = gather_rows(work.features, split.test_idx);
  const Eigen::VectorXd test_y = gather(work.targets, split.test_idx);
  const Eigen::VectorXd preds =
      predict_batch(result.model, test_x, labeled_x, labeled_y);

  RunReport report;
  report.dataset = work.name;
  report.n_labeled = size;
  report.seed = seed;
  report.method = method_tag(method);
  report.test_mae = mae(preds, test_y);
  report.history = result.history;
  report.config = train_config_to_json(t);
  report.config["n_unlabeled"] = n_unlabeled;
  report.config["normalize_train_only"] = f.norm_train_only;

  const double total = std::accumulate(result.history.cycle_seconds.begin(),
                                       result.history.cycle_seconds.end(), 0.0);
  write_json_file(base / "timing.json",
                  nlohmann::json{{"cycle_seconds", result.history.cycle_seconds},
                                 {"total_seconds", total}});

  // Wall-clock stays out of the report so identical runs yield identical
  // bytes.
  report.history.cycle_seconds.clear();
  write_json_file(base / "report.json", report_to_json(report));

  out << "train " << work.name << " |S|=" << size << " seed " << seed << " ("
      << report.method << "): test MAE " << report.test_mae << "\n"
      << "wrote " << (base / "checkpoint.json").string() << ", "
      << (base / "report.json").string() << ", "
      << (base / "timing.json").string() << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& a, const TrainFlags& f,
              const std::vector<int>& sizes, int seed_count,
              const std::vector<std::uint64_t>& seed_list,
              const std::string& method_str, bool ablation,
              const std::string& reference_path, int knn_k, std::ostream& out,
              std::ostream& err) {
  std::vector<Method> methods;
  if (ablation) {
    methods = {Method::DmlS2r, Method::Step1Only};
  } else {
    methods = {method_from_tag(method_str)};
  }

  std::vector<std::uint64_t> seeds = seed_list;
  if (seeds.empty()) {
    if (seed_count < 1) {
      throw std::invalid_argument("bench needs at least one seed");
    }
    seeds.resize(seed_count);
    std::iota(seeds.begin(), seeds.end(), 1);
  }

  DatasetSchema schema;
  const Dataset ds = load_for_run(a, schema);

  BenchConfig cfg;
  cfg.train = to_train_config(f);
  cfg.n_unlabeled = resolve_unlabeled(f, schema);
  cfg.normalize_train_only = f.norm_train_only;
  cfg.knn_k = knn_k;
  const bool trains = std::any_of(methods.begin(), methods.end(), [](Method m) {
    return m == Method::DmlS2r;
  });
  if (trains) require_pool_fits_k(f.k, cfg.n_unlabeled);

  nlohmann::json reference;
  if (!reference_path.empty()) {
    const nlohmann::json values = load_reference_values(reference_path);
    if (values.contains(ds.name)) reference = values.at(ds.name);
  }

  fs::create_directories(a.out);
  const BenchTable table =
      run_table(ds, sizes, seeds, methods, cfg, reference, a.out);

  out << table_to_csv(table);
  for (const std::string& w : table.warnings) err << "warning: " << w << "\n";
  if (table.failed_cells > 0) {
    err << table.failed_cells << " cell(s) failed\n";
    return 1;
  }
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"DML-S2R: semi-supervised regression via deep metric learning"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "key=value config file with a [command] section; command-line "
                 "flags take precedence");

  CommonArgs prep_args;
  CLI::App* prepare =
      app.add_subcommand("prepare", "clean and normalize a raw dataset");
  add_common(prepare, prep_args);

  CommonArgs train_args;
  TrainFlags train_flags;
  int train_size = 10;
  std::uint64_t train_seed = 1;
  std::string train_method = "dml-s2r";
  CLI::App* train =
      app.add_subcommand("train", "train one (dataset, |S|, seed) model");
  add_common(train, train_args);
  add_train_flags(train, train_flags);
  train->add_option("--sizes", train_size, "labeled set size |S|")
      ->capture_default_str();
  train->add_option("--seeds", train_seed, "run seed")->capture_default_str();
  train->add_option("--method", train_method, "dml-s2r | step1-only")
      ->check(CLI::IsMember({"dml-s2r", "step1-only", "knn-raw"}))
      ->capture_default_str();

  CommonArgs bench_args;
  TrainFlags bench_flags;
  std::vector<int> bench_sizes{10, 20, 50};
  int bench_seed_count = 5;
  std::vector<std::uint64_t> bench_seed_list;
  std::string bench_method = "dml-s2r";
  bool bench_ablation = false;
  std::string bench_reference;
  int bench_knn_k = 3;
  CLI::App* bench =
      app.add_subcommand("bench", "run the table protocol over sizes x seeds");
  add_common(bench, bench_args);
  add_train_flags(bench, bench_flags);
  bench->add_option("--sizes", bench_sizes, "labeled set sizes")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--seeds", bench_seed_count,
                    "number of seeds (expands to 1..N)")
      ->capture_default_str();
  bench->add_option("--seed-list", bench_seed_list, "explicit seeds")
      ->delimiter(',')
      ->run_callback_for_default(false);
  bench->add_option("--method", bench_method,
                    "dml-s2r | step1-only | knn-raw")
      ->check(CLI::IsMember({"dml-s2r", "step1-only", "knn-raw"}))
      ->capture_default_str();
  bench->add_flag("--ablation", bench_ablation,
                  "run dml-s2r and step1-only side by side");
  bench->add_option("--reference", bench_reference,
                    "reference MAE file for comparison rows")
      ->check(CLI::ExistingFile)
      ->run_callback_for_default(false);
  bench->add_option("--knn-k", bench_knn_k, "neighbours for knn-raw")
      ->capture_default_str();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (app.got_subcommand(prepare)) {
      echo_config(out, prepare);
      return cmd_prepare(prep_args, out);
    }
    if (app.got_subcommand(train)) {
      echo_config(out, train);
      return cmd_train(train_args, train_flags, train_size, train_seed,
                       train_method, out);
    }
    echo_config(out, bench);
    return cmd_bench(bench_args, bench_flags, bench_sizes, bench_seed_count,
                     bench_seed_list, bench_method, bench_ablation,
                     bench_reference, bench_knn_k, out, err);
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(std::vector<std::string> args) {
  return run_cli(std::move(args), std::cout, std::cerr);
}

}  // namespace dmls2r
