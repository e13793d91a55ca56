#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "psda/rng.hpp"

namespace psda {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/**
 * Multivariate Gaussian with a cached Cholesky factor and precision.
 *
 * The covariance must be symmetric positive-definite. A matrix that is
 * symmetric but fails factorization is retried with a 1e-9 * I jitter
 * (repeated, growing tenfold, up to 1e-6); anything worse is rejected.
 */
class Gaussian {
 public:
  Gaussian(Vec mean, Mat covariance);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vec& mean() const { return mean_; }
  const Mat& covariance() const { return cov_; }
  const Mat& precision() const { return precision_; }
  /// Lower-triangular L with L L^T = covariance.
  const Mat& cholesky() const { return chol_; }
  double log_det() const { return log_det_; }

  double log_pdf(const Eigen::Ref<const Vec>& x) const;
  double pdf(const Eigen::Ref<const Vec>& x) const;
  /// Log-density at each column of xs.
  Vec log_pdf_columns(const Mat& xs) const;

  /// Draws count samples as columns.
  Mat sample(int count, Rng& rng) const;

 private:
  Vec mean_;
  Mat cov_;
  Mat chol_;
  Mat precision_;
  double log_det_ = 0.0;
  double log_norm_ = 0.0;
};

class GaussianMixture {
 public:
  /// Weights must be nonnegative and sum to 1 within 1e-9.
  GaussianMixture(std::vector<double> weights, std::vector<Gaussian> components);
  explicit GaussianMixture(Gaussian single);

  /// Scales nonnegative weights to sum to one; zero-weight components are kept.
  static GaussianMixture normalized(std::vector<double> weights, std::vector<Gaussian> components);

  int dim() const { return components_.front().dim(); }
  std::size_t size() const { return components_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Gaussian>& components() const { return components_; }
  const Gaussian& component(std::size_t i) const { return components_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }

  /// Copy with zero-weight components removed.
  GaussianMixture pruned(double min_weight = 0.0) const;

 private:
  std::vector<double> weights_;
  std::vector<Gaussian> components_;
};

/// Weighted union of mixtures: sum_k scale_k * gm_k, renormalized.
GaussianMixture mix(const std::vector<std::pair<double, const GaussianMixture*>>& parts);

double gm_pdf(const GaussianMixture& gm, const Eigen::Ref<const Vec>& x);
/// Density at each column of xs.
Vec gm_pdf_columns(const GaussianMixture& gm, const Mat& xs);

Mat gm_sample(const GaussianMixture& gm, int count, Rng& rng);
Mat gm_sample(const GaussianMixture& gm, int count, std::uint64_t seed);

struct Moments {
  Vec mean;
  Mat covariance;
};

Moments gm_moments(const GaussianMixture& gm);

/// Moment-preserving merge of two weighted components; returns (weight, merged).
std::pair<double, Gaussian> merge_pair(double wi, const Gaussian& gi, double wj, const Gaussian& gj);

/// Runnalls' upper bound on the KL divergence incurred by merging components i and j.
double runnalls_cost(double wi, const Gaussian& gi, double wj, const Gaussian& gj);

/// Greedy Runnalls reduction to at most target_count components.
///
/// Components are first bucketed into ceil(M / target) spatial clusters (seeded by
/// the heaviest components, assigned by nearest mean) and each cluster is reduced
/// to its share of the target count. When clustering cannot honour the target
/// (more clusters than target slots) a single global pass is used instead.
GaussianMixture runnalls_compress(const GaussianMixture& gm, int target_count);

/// Runnalls reduction without the clustering pre-step.
GaussianMixture runnalls_reduce(const GaussianMixture& gm, int target_count);

struct MapOptions {
  int max_starts = 10;
  int ascent_steps = 50;
};

/// Highest-density point: best component mean, refined by backtracking gradient
/// ascent on the log-density from the highest-density component means.
Vec gm_map(const GaussianMixture& gm, const MapOptions& opts = {});

/// Gradient of log gm_pdf at x; also returns the density.
Vec gm_log_gradient(const GaussianMixture& gm, const Eigen::Ref<const Vec>& x, double* density = nullptr);

}  // namespace psda
