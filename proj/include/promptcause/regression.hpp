#pragma once

// Nuisance regressors shared by effect estimation and graph verification.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "promptcause/error.hpp"

namespace promptcause {

class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) = 0;
  virtual Eigen::VectorXd predict(const Eigen::MatrixXd& x) const = 0;
  virtual std::unique_ptr<Regressor> clone() const = 0;
};

// Ridge regression with an unpenalized intercept. Predictors are scaled to unit
// variance and the penalty is chosen by generalized cross-validation over a
// fixed grid that includes 0 (ordinary least squares).
class RidgeGcv : public Regressor {
 public:
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) override {
    const auto n = x.rows(), p = x.cols();
    if (n == 0) throw InsufficientData("ridge: no rows");
    if (y.size() != n) throw Error("ridge: row count mismatch");
    y_mean_ = y.mean();
    x_mean_ = x.colwise().mean();
    x_scale_ = Eigen::VectorXd::Ones(p);
    coef_ = Eigen::VectorXd::Zero(p);
    lambda_ = 0.0;
    if (p == 0) return;

    Eigen::MatrixXd xs = x.rowwise() - x_mean_.transpose();
    for (Eigen::Index j = 0; j < p; ++j) {
      const double sd = std::sqrt(xs.col(j).squaredNorm() / static_cast<double>(n));
      x_scale_(j) = sd > 1e-12 ? sd : 0.0;
      if (x_scale_(j) > 0) xs.col(j) /= x_scale_(j);
      else xs.col(j).setZero();
    }
    const Eigen::VectorXd yc = y.array() - y_mean_;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(xs, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    const double smax = s.size() ? s(0) : 0.0;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) > smax * 1e-10 * static_cast<double>(std::max(n, p))) ++rank;
    if (rank == 0) return;
    const Eigen::VectorXd uty = svd.matrixU().leftCols(rank).transpose() * yc;
    const double yss = yc.squaredNorm();
    const double resid_outside = std::max(0.0, yss - uty.squaredNorm());

    std::vector<double> grid{0.0};
    for (int k = -6; k <= 6; ++k) grid.push_back(std::pow(10.0, k / 2.0) * static_cast<double>(n));
    double best = std::numeric_limits<double>::infinity();
    double best_lambda = 0.0;
    for (double lam : grid) {
      double df = 0.0, rss = resid_outside;
      for (Eigen::Index i = 0; i < rank; ++i) {
        const double s2 = s(i) * s(i);
        const double shrink = s2 / (s2 + lam);
        df += shrink;
        rss += std::pow((1.0 - shrink) * uty(i), 2);
      }
      const double dof = static_cast<double>(n) - df;
      if (dof <= 0.5) continue;
      const double gcv = static_cast<double>(n) * rss / (dof * dof);
      if (gcv < best) {
        best = gcv;
        best_lambda = lam;
      }
    }
    if (!std::isfinite(best)) best_lambda = grid.back();
    lambda_ = best_lambda;
    Eigen::VectorXd d(rank);
    for (Eigen::Index i = 0; i < rank; ++i) d(i) = s(i) / (s(i) * s(i) + lambda_) * uty(i);
    const Eigen::VectorXd beta_scaled = svd.matrixV().leftCols(rank) * d;
    for (Eigen::Index j = 0; j < p; ++j) coef_(j) = x_scale_(j) > 0 ? beta_scaled(j) / x_scale_(j) : 0.0;
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    if (x.cols() != coef_.size()) throw Error("ridge: predictor count mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), y_mean_);
    if (coef_.size()) out += (x.rowwise() - x_mean_.transpose()) * coef_;
    return out;
  }

  std::unique_ptr<Regressor> clone() const override { return std::make_unique<RidgeGcv>(*this); }

  double lambda() const { return lambda_; }
  const Eigen::VectorXd& coefficients() const { return coef_; }
  double intercept() const { return y_mean_ - x_mean_.dot(coef_); }

 private:
  double y_mean_ = 0.0;
  Eigen::VectorXd x_mean_;
  Eigen::VectorXd x_scale_;
  Eigen::VectorXd coef_;
  double lambda_ = 0.0;
};

// Least-squares gradient boosting with depth-1 trees.
class BoostedStumps : public Regressor {
 public:
  explicit BoostedStumps(int rounds = 200, double learning_rate = 0.1) : rounds_(rounds), rate_(learning_rate) {}

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) override {
    const auto n = x.rows(), p = x.cols();
    if (n == 0) throw InsufficientData("boosted stumps: no rows");
    base_ = y.mean();
    stumps_.clear();
    p_ = p;
    if (p == 0 || n < 2) return;
    std::vector<std::vector<Eigen::Index>> order(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
      auto& o = order[static_cast<std::size_t>(j)];
      o.resize(static_cast<std::size_t>(n));
      std::iota(o.begin(), o.end(), Eigen::Index{0});
      std::stable_sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a, j) < x(b, j); });
    }
    Eigen::VectorXd resid = y.array() - base_;
    for (int r = 0; r < rounds_; ++r) {
      Stump best{};
      double best_gain = 0.0;
      const double total = resid.sum();
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto& o = order[static_cast<std::size_t>(j)];
        double left = 0.0;
        for (Eigen::Index k = 0; k + 1 < n; ++k) {
          left += resid(o[static_cast<std::size_t>(k)]);
          const double xv = x(o[static_cast<std::size_t>(k)], j), xn = x(o[static_cast<std::size_t>(k + 1)], j);
          if (xv == xn) continue;
          const double nl = static_cast<double>(k + 1), nr = static_cast<double>(n - k - 1);
          const double right = total - left;
          const double gain = left * left / nl + right * right / nr;
          if (gain > best_gain) {
            best_gain = gain;
            best = {j, 0.5 * (xv + xn), left / nl, right / nr};
          }
        }
      }
      if (best_gain <= 0.0) break;
      best.left *= rate_;
      best.right *= rate_;
      for (Eigen::Index i = 0; i < n; ++i) resid(i) -= x(i, best.feature) <= best.split ? best.left : best.right;
      stumps_.push_back(best);
    }
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    if (x.cols() != p_) throw Error("boosted stumps: predictor count mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), base_);
    for (const auto& s : stumps_)
      for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) += x(i, s.feature) <= s.split ? s.left : s.right;
    return out;
  }

  std::unique_ptr<Regressor> clone() const override { return std::make_unique<BoostedStumps>(*this); }

 private:
  struct Stump {
    Eigen::Index feature = 0;
    double split = 0.0;
    double left = 0.0;
    double right = 0.0;
  };
  int rounds_;
  double rate_;
  double base_ = 0.0;
  Eigen::Index p_ = 0;
  std::vector<Stump> stumps_;
};

enum class NuisanceModel { ridge, boosted_stumps };

inline NuisanceModel parse_nuisance_model(const std::string& s) {
  if (s == "ridge") return NuisanceModel::ridge;
  if (s == "boosted_stumps" || s == "boosting") return NuisanceModel::boosted_stumps;
  throw Error("unknown nuisance model '" + s + "' (expected ridge or boosted_stumps)");
}

inline std::unique_ptr<Regressor> make_regressor(NuisanceModel m) {
  if (m == NuisanceModel::boosted_stumps) return std::make_unique<BoostedStumps>();
  return std::make_unique<RidgeGcv>();
}

}  // namespace promptcause
