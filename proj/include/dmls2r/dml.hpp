#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "dmls2r/siamese.hpp"

namespace dmls2r {

enum class SetPolarity { Positive, Negative };

// How the list weights treat the negative set. Rll is the hard-mining form
// exp(tau * (alpha - d)); Paper applies the positive formula
// exp(tau * (d - (alpha - m))) to negatives as well.
enum class NegativeWeighting { Rll, Paper };

struct RLLConfig {
  double tau = 10.0;
  double alpha = 1.0;
  double margin = 0.4;
  int k = 5;
  bool signed_selection = false;
  NegativeWeighting negative_weighting = NegativeWeighting::Rll;
  bool normalize_embeddings = false;

  // alpha - margin must stay positive; k >= 1.
  void validate() const;
};

// Per-anchor mined sets: indices into the unlabeled pool. positive holds the
// k samples with the smallest selection score, negative the k largest.
struct TripletSets {
  int anchor = -1;
  std::vector<int> positive;
  std::vector<int> negative;
};

// Selection core over raw scores. Positive picks ascend by (score, index);
// negative picks descend by score with ascending index on ties, skipping
// any index already taken by the positive set, so the two sets are disjoint
// whenever scores.size() >= 2k. Equivalent to one full sort.
TripletSets select_from_scores(const Eigen::VectorXd& scores, int k);

// Scores are |f_d(anchor, u_i)| by default (signed with cfg.signed_selection).
TripletSets select_sets(const SiameseModel& m, const Eigen::RowVectorXd& anchor,
                        const Eigen::MatrixXd& unlabeled, const RLLConfig& cfg);

// Raw (unnormalized) list weight for one anchor-sample distance.
double rll_weight(double dist, const RLLConfig& cfg, SetPolarity polarity);

// Hinge losses: positive max(0, d - (alpha - margin)), negative
// max(0, alpha - d).
double margin_loss(double dist, const RLLConfig& cfg, SetPolarity polarity);

// Weighted hinge over one set; weights are normalized within the set in
// log-space, so any tau scale is safe.
double set_loss(const SiameseModel& m, const Eigen::RowVectorXd& anchor,
                const Eigen::MatrixXd& members, const RLLConfig& cfg,
                SetPolarity polarity);

// Ranked list loss over all anchors: (1 / 2N) * sum over anchors of
// positive-set loss + negative-set loss. sets[a].anchor indexes rows of
// anchors; positive/negative index rows of unlabeled.
double rll_loss(const SiameseModel& m, const Eigen::MatrixXd& anchors,
                const std::vector<TripletSets>& sets,
                const Eigen::MatrixXd& unlabeled, const RLLConfig& cfg);

// Loss plus gradient w.r.t. every model parameter, with the sets held fixed
// (no gradient flows through the selection). The head receives zero gradient
// from this objective.
std::pair<double, SiameseGradients> rll_loss_gradient(
    const SiameseModel& m, const Eigen::MatrixXd& anchors,
    const std::vector<TripletSets>& sets, const Eigen::MatrixXd& unlabeled,
    const RLLConfig& cfg);

// Per-anchor audit record emitted by a diagnostic epoch.
struct AnchorDiagnostics {
  TripletSets sets;
  std::vector<double> positive_weights;  // normalized, sum to 1
  std::vector<double> negative_weights;
  double positive_loss = 0.0;
  double negative_loss = 0.0;
  double mean_positive_distance = 0.0;
  double mean_negative_distance = 0.0;
};

std::vector<AnchorDiagnostics> rll_diagnostics(
    const SiameseModel& m, const Eigen::MatrixXd& anchors,
    const std::vector<TripletSets>& sets, const Eigen::MatrixXd& unlabeled,
    const RLLConfig& cfg);

struct DmlEpochResult {
  double loss = 0.0;  // pre-step value
  std::vector<TripletSets> sets;
};

// One metric-learning epoch: re-select sets with the current model, then one
// full-batch optimizer step over all anchors. Requires M >= 2k.
DmlEpochResult dml_epoch(SiameseModel& m, const Eigen::MatrixXd& labeled,
                         const Eigen::MatrixXd& unlabeled,
                         const RLLConfig& cfg, AdamState& opt);

}  // namespace dmls2r
