#include "dmls2r/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "dmls2r/checkpoint.hpp"
#include "dmls2r/psm.hpp"
#include "dmls2r/rng.hpp"

namespace dmls2r {

namespace {

constexpr const char* kTrainFormat = "train-v1";

nlohmann::json history_to_json(const TrainHistory& h) {
  return nlohmann::json{{"psm_loss", h.psm_loss}, {"rll_loss", h.rll_loss}};
}

TrainHistory history_from_json(const nlohmann::json& j) {
  TrainHistory h;
  h.psm_loss = j.at("psm_loss").get<std::vector<double>>();
  h.rll_loss = j.at("rll_loss").get<std::vector<double>>();
  return h;
}

// Number of PSM epochs that ran before unit `unit`, which doubles as the
// shuffle-seed index of the PSM epoch inside that unit.
int psm_index_before(const TrainConfig& cfg, int unit) {
  if (cfg.epoch_semantics == EpochSemantics::Cycles || cfg.step1_only) {
    return unit;
  }
  return (unit + 1) / 2;
}

bool is_psm_unit(const TrainConfig& cfg, int unit) {
  if (cfg.epoch_semantics == EpochSemantics::Cycles || cfg.step1_only) {
    return true;
  }
  return unit % 2 == 0;
}

bool series_flat(const std::vector<double>& s, int window, double rel) {
  if (static_cast<int>(s.size()) < window + 1) return false;
  for (std::size_t t = s.size() - window; t < s.size(); ++t) {
    const double denom = std::max(std::abs(s[t - 1]), 1e-12);
    if (std::abs(s[t] - s[t - 1]) / denom >= rel) return false;
  }
  return true;
}

bool plateau_reached(const TrainConfig& cfg, const TrainHistory& h) {
  if (!cfg.plateau_stop) return false;
  if (!series_flat(h.psm_loss, cfg.plateau_window, cfg.plateau_rel_change)) {
    return false;
  }
  if (cfg.step1_only) return true;
  return series_flat(h.rll_loss, cfg.plateau_window, cfg.plateau_rel_change);
}

struct LoopState {
  SiameseModel model;
  AdamState optimizer;
  AdamState dml_optimizer;
  int completed = 0;
  TrainHistory history;
};

TrainCheckpoint to_checkpoint(const LoopState& s, const TrainConfig& cfg) {
  TrainCheckpoint c;
  c.model = s.model;
  c.optimizer = s.optimizer;
  c.dml_optimizer = s.dml_optimizer;
  c.has_dml_optimizer = cfg.separate_optimizers;
  c.completed_cycles = s.completed;
  c.seed = cfg.seed;
  c.history = s.history;
  return c;
}

TrainResult run_loop(LoopState s, const Dataset& data,
                     const ExperimentSplit& split, const TrainConfig& cfg) {
  const Eigen::MatrixXd labeled_x = gather_rows(data.features, split.labeled_idx);
  const Eigen::VectorXd labeled_y = gather(data.targets, split.labeled_idx);
  const Eigen::MatrixXd unlabeled_x =
      gather_rows(data.features, split.unlabeled_idx);
  const PairBatch pairs = build_pairs(labeled_y);

  while (s.completed < cfg.cycles) {
    const auto start = std::chrono::steady_clock::now();
    const int unit = s.completed;
    AdamState& dml_opt =
        cfg.separate_optimizers ? s.dml_optimizer : s.optimizer;

    if (cfg.epoch_semantics == EpochSemantics::Cycles) {
      const std::uint64_t shuffle =
          derive_seed(cfg.seed, "psm-shuffle", psm_index_before(cfg, unit));
      const EpochStats psm = psm_epoch(s.model, pairs, labeled_x, s.optimizer,
                                       cfg.psm_batch_size, shuffle);
      s.history.psm_loss.push_back(psm.mean_loss);
      if (!cfg.step1_only) {
        const DmlEpochResult dml =
            dml_epoch(s.model, labeled_x, unlabeled_x, cfg.rll, dml_opt);
        s.history.rll_loss.push_back(dml.loss);
      }
    } else if (is_psm_unit(cfg, unit)) {
      const std::uint64_t shuffle =
          derive_seed(cfg.seed, "psm-shuffle", psm_index_before(cfg, unit));
      const EpochStats psm = psm_epoch(s.model, pairs, labeled_x, s.optimizer,
                                       cfg.psm_batch_size, shuffle);
      s.history.psm_loss.push_back(psm.mean_loss);
    } else {
      const DmlEpochResult dml =
          dml_epoch(s.model, labeled_x, unlabeled_x, cfg.rll, dml_opt);
      s.history.rll_loss.push_back(dml.loss);
    }

    const auto stop = std::chrono::steady_clock::now();
    s.history.cycle_seconds.push_back(
        std::chrono::duration<double>(stop - start).count());
    s.completed += 1;

    if (!cfg.checkpoint_path.empty()) {
      write_json_file(cfg.checkpoint_path,
                      train_checkpoint_to_json(to_checkpoint(s, cfg)));
    }
    if (plateau_reached(cfg, s.history)) break;
  }

  return TrainResult{std::move(s.model), std::move(s.history)};
}

}  // namespace

void TrainConfig::validate() const {
  if (cycles < 0) throw std::invalid_argument("cycles must be non-negative");
  if (psm_batch_size < 1) {
    throw std::invalid_argument("psm_batch_size must be at least 1");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (plateau_stop) {
    if (plateau_window < 1) {
      throw std::invalid_argument("plateau_window must be at least 1");
    }
    if (!(plateau_rel_change > 0.0)) {
      throw std::invalid_argument("plateau_rel_change must be positive");
    }
  }
  if (!step1_only) rll.validate();
}

nlohmann::json train_checkpoint_to_json(const TrainCheckpoint& c) {
  nlohmann::json j{{"format", kTrainFormat},
                   {"seed", c.seed},
                   {"completed_cycles", c.completed_cycles},
                   {"model", siamese_to_json(c.model)},
                   {"optimizer", adam_to_json(c.optimizer)},
                   {"history", history_to_json(c.history)}};
  if (c.has_dml_optimizer) {
    j["dml_optimizer"] = adam_to_json(c.dml_optimizer);
  }
  return j;
}

TrainCheckpoint train_checkpoint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kTrainFormat) {
    throw std::runtime_error("expected a train-v1 checkpoint");
  }
  TrainCheckpoint c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.completed_cycles = j.at("completed_cycles").get<int>();
  if (c.completed_cycles < 0) {
    throw std::runtime_error("completed_cycles must be non-negative");
  }
  c.model = siamese_from_json(j.at("model"));
  c.optimizer = adam_from_json(j.at("optimizer"));
  if (j.contains("dml_optimizer")) {
    c.dml_optimizer = adam_from_json(j.at("dml_optimizer"));
    c.has_dml_optimizer = true;
  }
  c.history = history_from_json(j.at("history"));
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{
      {"cycles", cfg.cycles},
      {"psm_batch_size", cfg.psm_batch_size},
      {"learning_rate", cfg.learning_rate},
      {"seed", cfg.seed},
      {"step1_only", cfg.step1_only},
      {"epoch_semantics",
       cfg.epoch_semantics == EpochSemantics::Cycles ? "cycles" : "total"},
      {"separate_optimizers", cfg.separate_optimizers},
      {"plateau_stop", cfg.plateau_stop},
      {"plateau_rel_change", cfg.plateau_rel_change},
      {"plateau_window", cfg.plateau_window},
      {"rll",
       {{"k", cfg.rll.k},
        {"tau", cfg.rll.tau},
        {"alpha", cfg.rll.alpha},
        {"margin", cfg.rll.margin},
        {"signed_selection", cfg.rll.signed_selection},
        {"negative_weighting",
         cfg.rll.negative_weighting == NegativeWeighting::Paper ? "paper"
                                                                : "rll"},
        {"normalize_embeddings", cfg.rll.normalize_embeddings}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.cycles = j.at("cycles").get<int>();
  cfg.psm_batch_size = j.at("psm_batch_size").get<int>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.step1_only = j.at("step1_only").get<bool>();
  const std::string semantics = j.at("epoch_semantics").get<std::string>();
  if (semantics == "cycles") {
    cfg.epoch_semantics = EpochSemantics::Cycles;
  } else if (semantics == "total") {
    cfg.epoch_semantics = EpochSemantics::TotalEpochs;
  } else {
    throw std::runtime_error("epoch_semantics must be 'cycles' or 'total'");
  }
  cfg.separate_optimizers = j.at("separate_optimizers").get<bool>();
  cfg.plateau_stop = j.at("plateau_stop").get<bool>();
  cfg.plateau_rel_change = j.at("plateau_rel_change").get<double>();
  cfg.plateau_window = j.at("plateau_window").get<int>();
  const nlohmann::json& r = j.at("rll");
  cfg.rll.k = r.at("k").get<int>();
  cfg.rll.tau = r.at("tau").get<double>();
  cfg.rll.alpha = r.at("alpha").get<double>();
  cfg.rll.margin = r.at("margin").get<double>();
  cfg.rll.signed_selection = r.at("signed_selection").get<bool>();
  const std::string weighting = r.at("negative_weighting").get<std::string>();
  if (weighting == "rll") {
    cfg.rll.negative_weighting = NegativeWeighting::Rll;
  } else if (weighting == "paper") {
    cfg.rll.negative_weighting = NegativeWeighting::Paper;
  } else {
    throw std::runtime_error("negative_weighting must be 'rll' or 'paper'");
  }
  cfg.rll.normalize_embeddings = r.at("normalize_embeddings").get<bool>();
  return cfg;
}

TrainResult alternate_train(const Dataset& data, const ExperimentSplit& split,
                            const TrainConfig& cfg) {
  cfg.validate();
  split.validate(data.sample_count());

  LoopState s;
  s.model = init_siamese(data.feature_count(), derive_seed(cfg.seed, "init"));
  const AdamConfig opt_cfg{cfg.learning_rate, 0.9, 0.999, 1e-8};
  s.optimizer = init_adam(s.model, opt_cfg);
  if (cfg.separate_optimizers) s.dml_optimizer = init_adam(s.model, opt_cfg);
  return run_loop(std::move(s), data, split, cfg);
}

TrainResult resume_train(const Dataset& data, const ExperimentSplit& split,
                         const TrainConfig& cfg, const TrainCheckpoint& from) {
  cfg.validate();
  split.validate(data.sample_count());
  if (from.seed != cfg.seed) {
    throw std::invalid_argument("checkpoint seed does not match config seed");
  }
  if (from.has_dml_optimizer != cfg.separate_optimizers) {
    throw std::invalid_argument(
        "checkpoint optimizer layout does not match config");
  }
  if (from.completed_cycles > cfg.cycles) {
    throw std::invalid_argument("checkpoint is already past cfg.cycles");
  }

  LoopState s;
  s.model = from.model;
  s.optimizer = from.optimizer;
  s.dml_optimizer = from.dml_optimizer;
  s.completed = from.completed_cycles;
  s.history = from.history;
  return run_loop(std::move(s), data, split, cfg);
}

double predict_with(const CrossDiffFn& diff, const Eigen::RowVectorXd& x_star,
                    const Eigen::MatrixXd& labeled_x,
                    const Eigen::VectorXd& labeled_y) {
  return predict_batch_with(diff, x_star, labeled_x, labeled_y)(0);
}

Eigen::VectorXd predict_batch_with(const CrossDiffFn& diff,
                                   const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& labeled_x,
                                   const Eigen::VectorXd& labeled_y) {
  if (labeled_x.rows() != labeled_y.size()) {
    throw std::invalid_argument("labeled features and targets disagree");
  }
  if (labeled_x.rows() < 1) {
    throw std::invalid_argument("prediction needs at least one labeled sample");
  }
  if (X.cols() != labeled_x.cols()) {
    throw std::invalid_argument("query feature width mismatch");
  }

  const Eigen::MatrixXd forward = diff(X, labeled_x);
  const Eigen::MatrixXd backward = diff(labeled_x, X);
  const Eigen::Index n = labeled_x.rows();

  Eigen::VectorXd out(X.rows());
  std::vector<double> terms(static_cast<std::size_t>(n));
  for (Eigen::Index b = 0; b < X.rows(); ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      terms[i] = (forward(b, i) - backward(i, b)) / 2.0 + labeled_y(i);
    }
    // Accumulating in sorted order makes the result independent of how the
    // labeled set happens to be stored.
    std::sort(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += t;
    out(b) = acc / static_cast<double>(n);
  }
  return out;
}

double predict(const SiameseModel& m, const Eigen::RowVectorXd& x_star,
               const Eigen::MatrixXd& labeled_x,
               const Eigen::VectorXd& labeled_y) {
  return predict_with(cross_diff_fn(m), x_star, labeled_x, labeled_y);
}

Eigen::VectorXd predict_batch(const SiameseModel& m, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& labeled_x,
                              const Eigen::VectorXd& labeled_y) {
  return predict_batch_with(cross_diff_fn(m), X, labeled_x, labeled_y);
}

}  // namespace dmls2r
