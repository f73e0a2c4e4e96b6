#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "morphopt/error.hpp"
#include "morphopt/log.hpp"

namespace morphopt {

/// Scalar-output Gaussian-process regressor with an anisotropic
/// squared-exponential kernel plus additive noise:
///   k(x, x') = σ_f² exp(−½ Σ_d (x_d − x'_d)²/ℓ_d²) + σ_n² δ.
/// Inputs are standardized per dimension and the output per coordinate.
/// Hyperparameters maximize the log marginal likelihood by a deterministic
/// 16-start compass (pattern) search in log space.
class GpModel {
 public:
  /// Trains on rows of x (one sample per row) against targets y.
  static GpModel train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       unsigned seed = 0) {
    const int m = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    if (m < 2) throw Error("GP training needs at least two samples");
    if (y.size() != m) throw Error("GP target size does not match inputs");

    GpModel gp;
    gp.x_mean_ = x.colwise().mean();
    gp.x_std_.resize(p);
    for (int d = 0; d < p; ++d) {
      const double var = (x.col(d).array() - gp.x_mean_[d]).square().sum() / m;
      gp.x_std_[d] = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
    }
    gp.y_mean_ = y.mean();
    const double y_var = (y.array() - gp.y_mean_).square().sum() / m;
    gp.y_std_ = std::sqrt(y_var) > 1e-12 ? std::sqrt(y_var) : 1.0;

    gp.x_.resize(m, p);
    for (int d = 0; d < p; ++d)
      gp.x_.col(d) = (x.col(d).array() - gp.x_mean_[d]) / gp.x_std_[d];
    gp.y_ = (y.array() - gp.y_mean_) / gp.y_std_;

    gp.optimize_hyperparameters(seed);
    gp.enforce_reproduction();
    return gp;
  }

  /// Posterior mean at one input (original units).
  double predict(const Eigen::VectorXd& x) const {
    if (x.size() != x_.cols()) throw Error("GP input dimension mismatch");
    Eigen::VectorXd z(x.size());
    for (int d = 0; d < x.size(); ++d) z[d] = (x[d] - x_mean_[d]) / x_std_[d];
    double sum = 0.0;
    for (int i = 0; i < x_.rows(); ++i)
      sum += alpha_[i] * kernel(z, x_.row(i).transpose());
    return sum * y_std_ + y_mean_;
  }

  /// Learned observation-noise standard deviation in original output units.
  double noise_std() const { return std::sqrt(noise_var_) * y_std_; }

  double log_marginal_likelihood() const { return lml_; }
  const Eigen::VectorXd& length_scales() const { return length_scales_; }
  double signal_variance() const { return signal_var_; }
  double noise_variance() const { return noise_var_; }

  // Raw access for serialization; restore() rebuilds a trained model.
  struct Raw {
    Eigen::MatrixXd x;  // standardized training inputs
    Eigen::VectorXd alpha;
    Eigen::VectorXd x_mean, x_std;
    double y_mean = 0.0, y_std = 1.0;
    Eigen::VectorXd length_scales;
    double signal_var = 1.0, noise_var = 1e-6, lml = 0.0;
  };

  Raw raw() const {
    return {x_, alpha_, x_mean_, x_std_, y_mean_, y_std_, length_scales_,
            signal_var_, noise_var_, lml_};
  }

  static GpModel restore(const Raw& r) {
    GpModel gp;
    gp.x_ = r.x;
    gp.alpha_ = r.alpha;
    gp.x_mean_ = r.x_mean;
    gp.x_std_ = r.x_std;
    gp.y_mean_ = r.y_mean;
    gp.y_std_ = r.y_std;
    gp.length_scales_ = r.length_scales;
    gp.signal_var_ = r.signal_var;
    gp.noise_var_ = r.noise_var;
    gp.lml_ = r.lml;
    if (gp.x_.rows() != gp.alpha_.size() || gp.x_.cols() != gp.length_scales_.size())
      throw Error("inconsistent GP model data");
    return gp;
  }

 private:
  double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    double q = 0.0;
    for (int d = 0; d < a.size(); ++d) {
      const double t = (a[d] - b[d]) / length_scales_[d];
      q += t * t;
    }
    return signal_var_ * std::exp(-0.5 * q);
  }

  Eigen::MatrixXd kernel_matrix(const Eigen::VectorXd& log_ls, double log_sf,
                                double log_sn) const {
    const int m = static_cast<int>(x_.rows());
    const double sf = std::exp(2.0 * log_sf);
    const double sn = std::exp(2.0 * log_sn);
    Eigen::MatrixXd k(m, m);
    for (int i = 0; i < m; ++i) {
      k(i, i) = sf + sn + 1e-10;
      for (int j = 0; j < i; ++j) {
        double q = 0.0;
        for (int d = 0; d < x_.cols(); ++d) {
          const double t = (x_(i, d) - x_(j, d)) / std::exp(log_ls[d]);
          q += t * t;
        }
        k(i, j) = k(j, i) = sf * std::exp(-0.5 * q);
      }
    }
    return k;
  }

  /// Log marginal likelihood at the given log-hyperparameters, or -inf when
  /// the kernel matrix is not positive definite.
  double lml_at(const Eigen::VectorXd& log_ls, double log_sf, double log_sn) const {
    const Eigen::MatrixXd k = kernel_matrix(log_ls, log_sf, log_sn);
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd alpha = llt.solve(y_);
    double log_det = 0.0;
    for (int i = 0; i < k.rows(); ++i) log_det += std::log(llt.matrixL()(i, i));
    const double m = static_cast<double>(k.rows());
    return -0.5 * y_.dot(alpha) - log_det - 0.5 * m * std::log(2.0 * std::numbers::pi);
  }

  void optimize_hyperparameters(unsigned seed) {
    const int p = static_cast<int>(x_.cols());
    const int dims = p + 2;  // [log ℓ_1..p, log σ_f, log σ_n]
    constexpr int kStarts = 16;
    // Log-space search box (standardized data): length scales and signal
    // around O(1), noise spanning interpolation to heavy regularization.
    const double ls_lo = std::log(0.1), ls_hi = std::log(10.0);
    const double sf_lo = std::log(0.3), sf_hi = std::log(3.0);
    const double sn_lo = std::log(1e-4), sn_hi = std::log(0.3);

    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Eigen::VectorXd best = Eigen::VectorXd::Zero(dims);
    double best_val = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < kStarts; ++s) {
      Eigen::VectorXd point(dims);
      if (s == 0) {
        // One canonical start: unit scales, unit signal, small noise.
        point.head(p).setZero();
        point[p] = 0.0;
        point[p + 1] = std::log(1e-3);
      } else {
        for (int d = 0; d < p; ++d) point[d] = ls_lo + (ls_hi - ls_lo) * unit(rng);
        point[p] = sf_lo + (sf_hi - sf_lo) * unit(rng);
        point[p + 1] = sn_lo + (sn_hi - sn_lo) * unit(rng);
      }
      double val = lml_at(point.head(p), point[p], point[p + 1]);
      // Compass search: probe ±step along each log coordinate, shrink on
      // failure. Gradient-free and fully deterministic.
      double step = 0.5;
      while (step > 1e-3) {
        bool improved = false;
        for (int d = 0; d < dims; ++d) {
          for (double sign : {1.0, -1.0}) {
            Eigen::VectorXd cand = point;
            cand[d] += sign * step;
            cand[p + 1] = std::max(cand[p + 1], std::log(1e-6));  // noise floor
            const double v = lml_at(cand.head(p), cand[p], cand[p + 1]);
            if (v > val) {
              val = v;
              point = cand;
              improved = true;
            }
          }
        }
        if (!improved) step *= 0.5;
      }
      if (val > best_val) {
        best_val = val;
        best = point;
      }
    }
    if (!std::isfinite(best_val))
      throw NumericalError("GP hyperparameter search found no positive-definite kernel");

    length_scales_ = best.head(p).array().exp();
    signal_var_ = std::exp(2.0 * best[p]);
    noise_var_ = std::exp(2.0 * best[p + 1]);
    lml_ = best_val;
    refit();
  }

  void refit() {
    const int m = static_cast<int>(x_.rows());
    Eigen::VectorXd log_ls = length_scales_.array().log();
    const Eigen::MatrixXd k =
        kernel_matrix(log_ls, 0.5 * std::log(signal_var_), 0.5 * std::log(noise_var_));
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
      throw NumericalError("GP kernel matrix lost positive definiteness");
    alpha_ = llt.solve(y_);
    (void)m;
  }

  /// Invariant guard: posterior means at the training inputs must reproduce
  /// the targets within twice the learned noise std. When the optimizer
  /// lands on a noise level too small for its own residuals, the noise is
  /// inflated until the bound holds (conservative, deterministic).
  void enforce_reproduction() {
    for (int rounds = 0; rounds < 60; ++rounds) {
      // Standardized residual of the posterior mean: (K+σ²I)α = y gives
      // y − Kα = σ² α.
      const double max_resid = noise_var_ * alpha_.lpNorm<Eigen::Infinity>();
      if (max_resid <= 2.0 * std::sqrt(noise_var_)) return;
      noise_var_ *= 4.0;
      refit();
    }
    log_warn("GP reproduction guard did not converge; predictions may be biased");
  }

  Eigen::MatrixXd x_;  // standardized inputs
  Eigen::VectorXd y_;  // standardized targets
  Eigen::VectorXd alpha_;
  Eigen::VectorXd x_mean_, x_std_;
  double y_mean_ = 0.0, y_std_ = 1.0;
  Eigen::VectorXd length_scales_;
  double signal_var_ = 1.0;
  double noise_var_ = 1e-6;
  double lml_ = 0.0;
};

}  // namespace morphopt
