#include "dmls2r/dml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dmls2r/nn.hpp"

namespace dmls2r {

void RLLConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("rll: tau must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("rll: alpha must be positive");
  if (!(margin > 0.0) || !(margin < alpha))
    throw std::invalid_argument("rll: margin must lie in (0, alpha)");
  if (k < 1) throw std::invalid_argument("rll: k must be at least 1");
}

TripletSets select_from_scores(const Eigen::VectorXd& scores, int k) {
  const int m = static_cast<int>(scores.size());
  if (k < 1) throw std::invalid_argument("selection: k must be at least 1");
  if (m < 2 * k)
    throw std::invalid_argument("selection: need at least 2k candidates");

  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  const auto ascending = [&scores](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), ascending);

  TripletSets sets;
  sets.positive.assign(order.begin(), order.begin() + k);

  std::vector<char> taken(static_cast<std::size_t>(m), 0);
  for (int idx : sets.positive) taken[static_cast<std::size_t>(idx)] = 1;
  std::vector<int> rest;
  rest.reserve(static_cast<std::size_t>(m - k));
  for (int i = 0; i < m; ++i)
    if (!taken[static_cast<std::size_t>(i)]) rest.push_back(i);

  const auto descending = [&scores](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(rest.begin(), rest.begin() + k, rest.end(), descending);
  sets.negative.assign(rest.begin(), rest.begin() + k);
  return sets;
}

TripletSets select_sets(const SiameseModel& m, const Eigen::RowVectorXd& anchor,
                        const Eigen::MatrixXd& unlabeled,
                        const RLLConfig& cfg) {
  cfg.validate();
  const Eigen::MatrixXd anchor_mat = anchor;
  Eigen::VectorXd scores = cross_diff(m, anchor_mat, unlabeled).row(0).transpose();
  if (!cfg.signed_selection) scores = scores.cwiseAbs();
  return select_from_scores(scores, cfg.k);
}

double margin_loss(double dist, const RLLConfig& cfg, SetPolarity polarity) {
  if (polarity == SetPolarity::Positive)
    return std::max(0.0, dist - (cfg.alpha - cfg.margin));
  return std::max(0.0, cfg.alpha - dist);
}

namespace {

double log_weight(double dist, const RLLConfig& cfg, SetPolarity polarity) {
  if (polarity == SetPolarity::Negative &&
      cfg.negative_weighting == NegativeWeighting::Rll)
    return cfg.tau * (cfg.alpha - dist);
  return cfg.tau * (dist - (cfg.alpha - cfg.margin));
}

double log_weight_slope(const RLLConfig& cfg, SetPolarity polarity) {
  if (polarity == SetPolarity::Negative &&
      cfg.negative_weighting == NegativeWeighting::Rll)
    return -cfg.tau;
  return cfg.tau;
}

double hinge_slope(double dist, const RLLConfig& cfg, SetPolarity polarity) {
  if (polarity == SetPolarity::Positive)
    return dist > cfg.alpha - cfg.margin ? 1.0 : 0.0;
  return dist < cfg.alpha ? -1.0 : 0.0;
}

struct SetEval {
  std::vector<double> dists;
  std::vector<double> weights;
  std::vector<double> hinges;
  double loss = 0.0;
};

// Weights normalized in log-space so large tau cannot overflow.
SetEval eval_set(std::vector<double> dists, const RLLConfig& cfg,
                 SetPolarity polarity) {
  SetEval ev;
  const std::size_t n = dists.size();
  ev.dists = std::move(dists);
  ev.weights.resize(n);
  ev.hinges.resize(n);

  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    ev.weights[i] = log_weight(ev.dists[i], cfg, polarity);
    max_log = std::max(max_log, ev.weights[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ev.weights[i] = std::exp(ev.weights[i] - max_log);
    sum += ev.weights[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    ev.weights[i] /= sum;
    ev.hinges[i] = margin_loss(ev.dists[i], cfg, polarity);
    ev.loss += ev.weights[i] * ev.hinges[i];
  }
  return ev;
}

// Shared engine behind rll_loss, rll_loss_gradient, and rll_diagnostics.
// Selection is frozen: gradients flow only through the distances.
double rll_core(const SiameseModel& m, const Eigen::MatrixXd& anchors,
                const std::vector<TripletSets>& sets,
                const Eigen::MatrixXd& unlabeled, const RLLConfig& cfg,
                SiameseGradients* out_grads,
                std::vector<AnchorDiagnostics>* out_diag) {
  cfg.validate();
  m.validate();
  if (sets.empty()) throw std::invalid_argument("rll: no anchor sets");

  const ForwardTrace anchor_trace = forward(m.subnet, anchors);
  const ForwardTrace pool_trace = forward(m.subnet, unlabeled);
  Eigen::MatrixXd ea = anchor_trace.output();
  Eigen::MatrixXd eu = pool_trace.output();

  Eigen::VectorXd anchor_norms, pool_norms;
  if (cfg.normalize_embeddings) {
    anchor_norms = ea.rowwise().norm();
    pool_norms = eu.rowwise().norm();
    for (Eigen::Index r = 0; r < ea.rows(); ++r)
      if (anchor_norms[r] > 0.0) ea.row(r) /= anchor_norms[r];
    for (Eigen::Index r = 0; r < eu.rows(); ++r)
      if (pool_norms[r] > 0.0) eu.row(r) /= pool_norms[r];
  }

  Eigen::MatrixXd ga, gu;
  if (out_grads != nullptr) {
    ga = Eigen::MatrixXd::Zero(ea.rows(), ea.cols());
    gu = Eigen::MatrixXd::Zero(eu.rows(), eu.cols());
  }
  if (out_diag != nullptr) out_diag->clear();

  const double scale = 1.0 / (2.0 * static_cast<double>(sets.size()));
  double total = 0.0;
  for (const TripletSets& s : sets) {
    if (s.anchor < 0 || s.anchor >= anchors.rows())
      throw std::out_of_range("rll: anchor index out of range");
    AnchorDiagnostics diag;
    diag.sets = s;
    for (SetPolarity polarity :
         {SetPolarity::Positive, SetPolarity::Negative}) {
      const std::vector<int>& members =
          polarity == SetPolarity::Positive ? s.positive : s.negative;
      if (members.empty()) throw std::invalid_argument("rll: empty set");

      std::vector<double> dists(members.size());
      for (std::size_t i = 0; i < members.size(); ++i) {
        const int u = members[i];
        if (u < 0 || u >= eu.rows())
          throw std::out_of_range("rll: unlabeled index out of range");
        dists[i] = (ea.row(s.anchor) - eu.row(u)).norm();
      }
      const SetEval ev = eval_set(std::move(dists), cfg, polarity);
      total += ev.loss;

      if (out_grads != nullptr) {
        const double lw_slope = log_weight_slope(cfg, polarity);
        for (std::size_t i = 0; i < members.size(); ++i) {
          const double dloss_ddist =
              ev.weights[i] * hinge_slope(ev.dists[i], cfg, polarity) +
              lw_slope * ev.weights[i] * (ev.hinges[i] - ev.loss);
          const double g = scale * dloss_ddist;
          if (ev.dists[i] > 0.0 && g != 0.0) {
            const Eigen::RowVectorXd dir =
                (ea.row(s.anchor) - eu.row(members[i])) / ev.dists[i];
            ga.row(s.anchor) += g * dir;
            gu.row(members[i]) -= g * dir;
          }
        }
      }
      if (out_diag != nullptr) {
        const double mean_dist =
            std::accumulate(ev.dists.begin(), ev.dists.end(), 0.0) /
            static_cast<double>(ev.dists.size());
        if (polarity == SetPolarity::Positive) {
          diag.positive_weights = ev.weights;
          diag.positive_loss = ev.loss;
          diag.mean_positive_distance = mean_dist;
        } else {
          diag.negative_weights = ev.weights;
          diag.negative_loss = ev.loss;
          diag.mean_negative_distance = mean_dist;
        }
      }
    }
    if (out_diag != nullptr) out_diag->push_back(std::move(diag));
  }

  if (out_grads != nullptr) {
    if (cfg.normalize_embeddings) {
      // Back through e / ||e||: project out the radial component, then
      // rescale. Zero-norm rows produced zero embeddings and get no gradient.
      for (Eigen::Index r = 0; r < ga.rows(); ++r) {
        if (anchor_norms[r] > 0.0) {
          const double radial = ga.row(r).dot(ea.row(r));
          ga.row(r) = (ga.row(r) - radial * ea.row(r)) / anchor_norms[r];
        } else {
          ga.row(r).setZero();
        }
      }
      for (Eigen::Index r = 0; r < gu.rows(); ++r) {
        if (pool_norms[r] > 0.0) {
          const double radial = gu.row(r).dot(eu.row(r));
          gu.row(r) = (gu.row(r) - radial * eu.row(r)) / pool_norms[r];
        } else {
          gu.row(r).setZero();
        }
      }
    }
    *out_grads = SiameseGradients::zeros_like(m);
    out_grads->subnet = backward(m.subnet, anchor_trace, ga).grads;
    out_grads->subnet.add(backward(m.subnet, pool_trace, gu).grads);
  }
  return total * scale;
}

}  // namespace

double rll_weight(double dist, const RLLConfig& cfg, SetPolarity polarity) {
  return std::exp(log_weight(dist, cfg, polarity));
}

double set_loss(const SiameseModel& m, const Eigen::RowVectorXd& anchor,
                const Eigen::MatrixXd& members, const RLLConfig& cfg,
                SetPolarity polarity) {
  if (members.rows() == 0) throw std::invalid_argument("set_loss: empty set");
  Eigen::MatrixXd ea = embed(m, Eigen::MatrixXd(anchor));
  Eigen::MatrixXd eu = embed(m, members);
  if (cfg.normalize_embeddings) {
    const double na = ea.row(0).norm();
    if (na > 0.0) ea.row(0) /= na;
    for (Eigen::Index r = 0; r < eu.rows(); ++r) {
      const double nr = eu.row(r).norm();
      if (nr > 0.0) eu.row(r) /= nr;
    }
  }
  std::vector<double> dists(static_cast<std::size_t>(members.rows()));
  for (Eigen::Index r = 0; r < eu.rows(); ++r)
    dists[static_cast<std::size_t>(r)] = (ea.row(0) - eu.row(r)).norm();
  return eval_set(std::move(dists), cfg, polarity).loss;
}

double rll_loss(const SiameseModel& m, const Eigen::MatrixXd& anchors,
                const std::vector<TripletSets>& sets,
                const Eigen::MatrixXd& unlabeled, const RLLConfig& cfg) {
  return rll_core(m, anchors, sets, unlabeled, cfg, nullptr, nullptr);
}

std::pair<double, SiameseGradients> rll_loss_gradient(
    const SiameseModel& m, const Eigen::MatrixXd& anchors,
    const std::vector<TripletSets>& sets, const Eigen::MatrixXd& unlabeled,
    const RLLConfig& cfg) {
  SiameseGradients grads;
  const double loss = rll_core(m, anchors, sets, unlabeled, cfg, &grads, nullptr);
  return {loss, std::move(grads)};
}

std::vector<AnchorDiagnostics> rll_diagnostics(
    const SiameseModel& m, const Eigen::MatrixXd& anchors,
    const std::vector<TripletSets>& sets, const Eigen::MatrixXd& unlabeled,
    const RLLConfig& cfg) {
  std::vector<AnchorDiagnostics> diag;
  rll_core(m, anchors, sets, unlabeled, cfg, nullptr, &diag);
  return diag;
}

DmlEpochResult dml_epoch(SiameseModel& m, const Eigen::MatrixXd& labeled,
                         const Eigen::MatrixXd& unlabeled,
                         const RLLConfig& cfg, AdamState& opt) {
  cfg.validate();
  if (labeled.rows() == 0) throw std::invalid_argument("dml_epoch: no anchors");
  if (unlabeled.rows() < 2 * cfg.k)
    throw std::invalid_argument("dml_epoch: unlabeled pool smaller than 2k");

  const Eigen::MatrixXd raw_scores = cross_diff(m, labeled, unlabeled);
  std::vector<TripletSets> sets(static_cast<std::size_t>(labeled.rows()));
  for (Eigen::Index a = 0; a < labeled.rows(); ++a) {
    Eigen::VectorXd scores = raw_scores.row(a).transpose();
    if (!cfg.signed_selection) scores = scores.cwiseAbs();
    auto& entry = sets[static_cast<std::size_t>(a)];
    entry = select_from_scores(scores, cfg.k);
    entry.anchor = static_cast<int>(a);
  }

  auto [loss, grads] = rll_loss_gradient(m, labeled, sets, unlabeled, cfg);
  adam_step(m, grads, opt);
  return {loss, std::move(sets)};
}

}  // namespace dmls2r
