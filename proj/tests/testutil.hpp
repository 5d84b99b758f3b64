#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "dmls2r/nn.hpp"
#include "dmls2r/siamese.hpp"

namespace testutil {

// Independent finite-difference oracle. Unlike the library's grad_check it
// sweeps every parameter entry with its own central-difference code, so the
// two implementations cannot share a bug.
inline double fd_max_relative_deviation(
    const std::function<double()>& loss, dmls2r::BlockView params,
    const dmls2r::BlockView& analytic, double step) {
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (Eigen::Index i = 0; i < params[b].size(); ++i) {
      const double saved = params[b][i];
      params[b][i] = saved + step;
      const double up = loss();
      params[b][i] = saved - step;
      const double down = loss();
      params[b][i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic[b][i];
      const double scale =
          std::max({std::abs(numeric), std::abs(exact), 1e-10});
      worst = std::max(worst, std::abs(numeric - exact) / scale);
    }
  }
  return worst;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                                     std::uint64_t seed, double lo = -1.0,
                                     double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(gen);
  return m;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed,
                                     double lo = -1.0, double hi = 1.0) {
  return random_matrix(n, 1, seed, lo, hi).col(0);
}

// Small model so full finite-difference sweeps stay fast.
inline dmls2r::SiameseModel toy_siamese(int input_dim, std::uint64_t seed,
                                        int hidden = 6) {
  return dmls2r::init_siamese(input_dim, seed, hidden);
}

// Shifts biases away from zero. Fresh models can park rectifier units exactly
// on their kink (dead row in layer one plus a zero bias), where the analytic
// zero-subgradient and a finite difference legitimately disagree.
inline void lift_biases(dmls2r::MlpParams& p, double amount = 0.3) {
  for (auto& b : p.biases) b.array() += amount;
}

// Smallest |pre-activation| seen anywhere on the batch. Finite-difference
// tests REQUIRE this to clear the step size so no sweep crosses a kink.
inline double min_pre_margin(const dmls2r::MlpParams& p,
                             const Eigen::MatrixXd& batch) {
  const dmls2r::ForwardTrace t = dmls2r::forward(p, batch);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& pre : t.pre)
    margin = std::min(margin, pre.cwiseAbs().minCoeff());
  return margin;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "dmls2r-test") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
