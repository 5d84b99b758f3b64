#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "dmls2r/siamese.hpp"

namespace dmls2r {

// All ordered labeled pairs (i, j), i != j, with their target differences
// z_ij = y_i - y_j. Both orientations are kept; z_ji = -z_ij.
struct PairBatch {
  std::vector<int> left;
  std::vector<int> right;
  Eigen::VectorXd diffs;

  std::size_t size() const { return left.size(); }
};

// Enumeration order is i-major, j-minor, skipping i == j. N >= 2 required.
PairBatch build_pairs(const Eigen::VectorXd& labeled_targets);

// Row-aligned pair difference estimates; the injection seam for oracle tests.
using PairDiffFn =
    std::function<Eigen::VectorXd(const Eigen::MatrixXd&, const Eigen::MatrixXd&)>;

// Mean squared error between true and estimated differences over every pair
// in the batch.
double psm_loss(const PairDiffFn& diff_fn, const PairBatch& pairs,
                const Eigen::MatrixXd& labeled_features);
double psm_loss(const SiameseModel& m, const PairBatch& pairs,
                const Eigen::MatrixXd& labeled_features);

// Full-batch loss and its gradient w.r.t. every model parameter.
std::pair<double, SiameseGradients> psm_loss_gradient(
    const SiameseModel& m, const PairBatch& pairs,
    const Eigen::MatrixXd& labeled_features);

struct EpochStats {
  double mean_loss = 0.0;
  int step_count = 0;
};

// One pass over the pair set in seeded shuffled order, one optimizer step per
// mini-batch. Returns the mean of per-batch losses.
EpochStats psm_epoch(SiameseModel& m, const PairBatch& pairs,
                     const Eigen::MatrixXd& labeled_features, AdamState& opt,
                     int batch_size, std::uint64_t shuffle_seed);

}  // namespace dmls2r
