#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "dmls2r/dataio.hpp"
#include "dmls2r/dml.hpp"
#include "dmls2r/siamese.hpp"

namespace dmls2r {

// Cycles: each unit is one PSM epoch followed by one DML epoch.
// TotalEpochs: each unit is a single-step epoch, alternating PSM, DML, ...
enum class EpochSemantics { Cycles, TotalEpochs };

struct TrainConfig {
  int cycles = 30;
  int psm_batch_size = 64;
  double learning_rate = 0.001;
  RLLConfig rll;
  std::uint64_t seed = 0;
  bool step1_only = false;
  EpochSemantics epoch_semantics = EpochSemantics::Cycles;
  bool separate_optimizers = false;

  // Opt-in plateau stop: halt once the relative change of BOTH losses stays
  // below plateau_rel_change across plateau_window consecutive cycles.
  bool plateau_stop = false;
  double plateau_rel_change = 1e-4;
  int plateau_window = 5;

  // When non-empty, the full training state is saved here after every cycle.
  std::filesystem::path checkpoint_path;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> psm_loss;
  std::vector<double> rll_loss;
  std::vector<double> cycle_seconds;
};

// Everything needed to continue a run exactly where it stopped. The RNG
// cursor is implicit: per-epoch shuffle seeds derive from (seed, epoch index),
// and the epoch index follows from completed_cycles.
struct TrainCheckpoint {
  SiameseModel model;
  AdamState optimizer;
  AdamState dml_optimizer;  // populated only when separate optimizers are on
  bool has_dml_optimizer = false;
  int completed_cycles = 0;
  std::uint64_t seed = 0;
  TrainHistory history;
};

nlohmann::json train_checkpoint_to_json(const TrainCheckpoint& c);
TrainCheckpoint train_checkpoint_from_json(const nlohmann::json& j);

// Round trip for resolved-config echoes and reports. checkpoint_path is
// intentionally not serialized.
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainResult {
  SiameseModel model;
  TrainHistory history;
};

// The alternate learning loop over a normalized dataset and a split:
// per cycle one pairwise-regression epoch on S, then one ranked-list metric
// epoch anchored on S against U. Deterministic given cfg.seed.
TrainResult alternate_train(const Dataset& data, const ExperimentSplit& split,
                            const TrainConfig& cfg);

// Continues from a checkpoint until cfg.cycles total cycles are done.
// Matching a fresh run of the same total length bit for bit requires the
// same config and seed.
TrainResult resume_train(const Dataset& data, const ExperimentSplit& split,
                         const TrainConfig& cfg, const TrainCheckpoint& from);

// Symmetrized difference-ensemble estimate:
// y* = (1/N) sum_i [ (f_d(x*, x_i) - f_d(x_i, x*)) / 2 + y_i ].
double predict(const SiameseModel& m, const Eigen::RowVectorXd& x_star,
               const Eigen::MatrixXd& labeled_x,
               const Eigen::VectorXd& labeled_y);

Eigen::VectorXd predict_batch(const SiameseModel& m, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& labeled_x,
                              const Eigen::VectorXd& labeled_y);

// Oracle-injection variants used by tests; the model path calls these with
// cross_diff_fn(m).
double predict_with(const CrossDiffFn& diff, const Eigen::RowVectorXd& x_star,
                    const Eigen::MatrixXd& labeled_x,
                    const Eigen::VectorXd& labeled_y);

Eigen::VectorXd predict_batch_with(const CrossDiffFn& diff,
                                   const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& labeled_x,
                                   const Eigen::VectorXd& labeled_y);

}  // namespace dmls2r
