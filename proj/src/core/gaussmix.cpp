#include "psda/gaussmix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "psda/error.hpp"

namespace psda {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kJitter = 1e-9;

bool try_cholesky(const Mat& a, Mat& lower) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) return false;
  }
  return true;
}

}  // namespace

Gaussian::Gaussian(Vec mean, Mat covariance) : mean_(std::move(mean)), cov_(std::move(covariance)) {
  const auto n = mean_.size();
  if (n == 0) fail(ErrorCode::kInvalidArgument, "gaussian: empty mean");
  if (cov_.rows() != n || cov_.cols() != n) fail(ErrorCode::kInvalidArgument, "gaussian: covariance shape mismatch");
  if (!mean_.allFinite() || !cov_.allFinite()) fail(ErrorCode::kNumeric, "gaussian: non-finite parameters");
  const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    fail(ErrorCode::kNumeric, "gaussian: covariance not symmetric");
  }
  cov_ = 0.5 * (cov_ + cov_.transpose());

  if (!try_cholesky(cov_, chol_)) {
    bool ok = false;
    for (double jitter = kJitter; jitter <= 1e-6 * 1.0001; jitter *= 10.0) {
      Mat regularized = cov_ + jitter * Mat::Identity(n, n);
      if (try_cholesky(regularized, chol_)) {
        cov_ = std::move(regularized);
        ok = true;
        break;
      }
    }
    if (!ok) fail(ErrorCode::kNumeric, "gaussian: covariance not positive-definite");
  }
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  Mat inv_l = chol_.triangularView<Eigen::Lower>().solve(Mat::Identity(n, n));
  precision_ = inv_l.transpose() * inv_l;
  log_norm_ = -0.5 * (static_cast<double>(n) * kLog2Pi + log_det_);
}

double Gaussian::log_pdf(const Eigen::Ref<const Vec>& x) const {
  const auto n = mean_.size();
  if (x.size() != n) fail(ErrorCode::kInvalidArgument, "gaussian: dimension mismatch");
  double q = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double di = x[i] - mean_[i];
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) row += precision_(i, j) * (x[j] - mean_[j]);
    q += di * row;
  }
  return log_norm_ - 0.5 * q;
}

double Gaussian::pdf(const Eigen::Ref<const Vec>& x) const { return std::exp(log_pdf(x)); }

Vec Gaussian::log_pdf_columns(const Mat& xs) const {
  if (xs.rows() != mean_.size()) fail(ErrorCode::kInvalidArgument, "gaussian: dimension mismatch");
  Mat d = xs.colwise() - mean_;
  Mat z = chol_.triangularView<Eigen::Lower>().solve(d);
  Vec out = (-0.5 * z.colwise().squaredNorm()).transpose();
  out.array() += log_norm_;
  return out;
}

Mat Gaussian::sample(int count, Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat z(mean_.size(), count);
  for (int c = 0; c < count; ++c) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, c) = normal(rng);
  }
  Mat out = chol_.triangularView<Eigen::Lower>() * z;
  out.colwise() += mean_;
  return out;
}

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Gaussian> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  if (components_.empty()) fail(ErrorCode::kInvalidArgument, "mixture: no components");
  if (weights_.size() != components_.size()) fail(ErrorCode::kInvalidArgument, "mixture: weight count mismatch");
  const int n = components_.front().dim();
  double total = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) fail(ErrorCode::kInvalidArgument, "mixture: negative weight");
    if (components_[i].dim() != n) fail(ErrorCode::kInvalidArgument, "mixture: mixed dimensions");
    total += weights_[i];
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::kInvalidArgument, "mixture: weights do not sum to one");
}

GaussianMixture::GaussianMixture(Gaussian single) : weights_{1.0}, components_{std::move(single)} {}

GaussianMixture GaussianMixture::normalized(std::vector<double> weights, std::vector<Gaussian> components) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::kNumeric, "mixture: invalid weight");
    total += w;
  }
  if (!(total > 0.0)) fail(ErrorCode::kNumeric, "mixture: all weights zero");
  for (double& w : weights) w /= total;
  return GaussianMixture(std::move(weights), std::move(components));
}

GaussianMixture GaussianMixture::pruned(double min_weight) const {
  std::vector<double> w;
  std::vector<Gaussian> c;
  for (std::size_t i = 0; i < size(); ++i) {
    if (weights_[i] > min_weight) {
      w.push_back(weights_[i]);
      c.push_back(components_[i]);
    }
  }
  if (c.empty()) return *this;
  return normalized(std::move(w), std::move(c));
}

GaussianMixture mix(const std::vector<std::pair<double, const GaussianMixture*>>& parts) {
  std::vector<double> w;
  std::vector<Gaussian> c;
  for (const auto& [scale, gm] : parts) {
    if (!(scale > 0.0)) continue;
    for (std::size_t i = 0; i < gm->size(); ++i) {
      if (gm->weight(i) <= 0.0) continue;
      w.push_back(scale * gm->weight(i));
      c.push_back(gm->component(i));
    }
  }
  return GaussianMixture::normalized(std::move(w), std::move(c));
}

double gm_pdf(const GaussianMixture& gm, const Eigen::Ref<const Vec>& x) {
  if (x.size() != gm.dim()) fail(ErrorCode::kInvalidArgument, "gm_pdf: dimension mismatch");
  double p = 0.0;
  for (std::size_t u = 0; u < gm.size(); ++u) {
    if (gm.weight(u) > 0.0) p += gm.weight(u) * gm.component(u).pdf(x);
  }
  return p;
}

Vec gm_pdf_columns(const GaussianMixture& gm, const Mat& xs) {
  Vec p = Vec::Zero(xs.cols());
  for (std::size_t u = 0; u < gm.size(); ++u) {
    if (gm.weight(u) <= 0.0) continue;
    p.array() += gm.weight(u) * gm.component(u).log_pdf_columns(xs).array().exp();
  }
  return p;
}

Mat gm_sample(const GaussianMixture& gm, int count, Rng& rng) {
  if (count < 1) fail(ErrorCode::kInvalidArgument, "gm_sample: count must be >= 1");
  std::vector<double> cdf(gm.size());
  std::partial_sum(gm.weights().begin(), gm.weights().end(), cdf.begin());
  std::uniform_real_distribution<double> uniform(0.0, cdf.back());
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = gm.dim();
  Mat out(n, count);
  Vec z(n);
  for (int s = 0; s < count; ++s) {
    const double r = uniform(rng);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
    auto u = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(gm.size()) - 1));
    // Skip any zero-weight component the search may land on at a boundary.
    while (gm.weight(u) <= 0.0 && u + 1 < gm.size()) ++u;
    while (gm.weight(u) <= 0.0 && u > 0) --u;
    for (int i = 0; i < n; ++i) z[i] = normal(rng);
    const Gaussian& g = gm.component(u);
    out.col(s) = g.mean() + g.cholesky().triangularView<Eigen::Lower>() * z;
  }
  return out;
}

Mat gm_sample(const GaussianMixture& gm, int count, std::uint64_t seed) {
  Rng rng(seed);
  return gm_sample(gm, count, rng);
}

Moments gm_moments(const GaussianMixture& gm) {
  const int n = gm.dim();
  Vec mean = Vec::Zero(n);
  Mat second = Mat::Zero(n, n);
  for (std::size_t u = 0; u < gm.size(); ++u) {
    const auto& g = gm.component(u);
    mean += gm.weight(u) * g.mean();
    second += gm.weight(u) * (g.covariance() + g.mean() * g.mean().transpose());
  }
  Mat cov = second - mean * mean.transpose();
  cov = 0.5 * (cov + cov.transpose());
  return {mean, cov};
}

std::pair<double, Gaussian> merge_pair(double wi, const Gaussian& gi, double wj, const Gaussian& gj) {
  const double w = wi + wj;
  if (!(w > 0.0)) fail(ErrorCode::kNumeric, "merge_pair: zero total weight");
  const double a = wi / w;
  const double b = wj / w;
  Vec mean = a * gi.mean() + b * gj.mean();
  Vec diff = gi.mean() - gj.mean();
  Mat cov = a * gi.covariance() + b * gj.covariance() + a * b * diff * diff.transpose();
  return {w, Gaussian(std::move(mean), std::move(cov))};
}

namespace {

double merged_log_det(double wi, const Gaussian& gi, double wj, const Gaussian& gj) {
  const double w = wi + wj;
  const double a = wi / w;
  const double b = wj / w;
  Vec diff = gi.mean() - gj.mean();
  Mat cov = a * gi.covariance() + b * gj.covariance() + a * b * diff * diff.transpose();
  Eigen::LLT<Mat> llt(cov);
  return 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
}

}  // namespace

double runnalls_cost(double wi, const Gaussian& gi, double wj, const Gaussian& gj) {
  if (!(wi + wj > 0.0)) return 0.0;
  const double ld = merged_log_det(wi, gi, wj, gj);
  const double cost = 0.5 * ((wi + wj) * ld - wi * gi.log_det() - wj * gj.log_det());
  return std::max(0.0, cost);
}

GaussianMixture runnalls_reduce(const GaussianMixture& gm, int target_count) {
  if (target_count < 1) fail(ErrorCode::kInvalidArgument, "runnalls: target_count must be >= 1");
  const std::size_t m = gm.size();
  if (m <= static_cast<std::size_t>(target_count)) return gm;

  std::vector<double> w = gm.weights();
  std::vector<Gaussian> c = gm.components();
  std::vector<bool> alive(m, true);
  Mat cost = Mat::Constant(m, m, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) cost(i, j) = runnalls_cost(w[i], c[i], w[j], c[j]);
  }

  std::size_t remaining = m;
  while (remaining > static_cast<std::size_t>(target_count)) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < m; ++j) {
        if (alive[j] && cost(i, j) < best) {
          best = cost(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    auto [wm, gmerged] = merge_pair(w[bi], c[bi], w[bj], c[bj]);
    w[bi] = wm;
    c[bi] = std::move(gmerged);
    alive[bj] = false;
    --remaining;
    for (std::size_t k = 0; k < m; ++k) {
      if (!alive[k] || k == bi) continue;
      const double v = runnalls_cost(w[bi], c[bi], w[k], c[k]);
      if (k < bi) cost(k, bi) = v; else cost(bi, k) = v;
    }
  }

  std::vector<double> ow;
  std::vector<Gaussian> oc;
  for (std::size_t i = 0; i < m; ++i) {
    if (alive[i]) {
      ow.push_back(w[i]);
      oc.push_back(std::move(c[i]));
    }
  }
  return GaussianMixture::normalized(std::move(ow), std::move(oc));
}

GaussianMixture runnalls_compress(const GaussianMixture& input, int target_count) {
  if (target_count < 1) fail(ErrorCode::kInvalidArgument, "runnalls: target_count must be >= 1");
  if (input.size() <= static_cast<std::size_t>(target_count)) return input;
  GaussianMixture gm = input.pruned();
  const std::size_t m = gm.size();
  const auto t = static_cast<std::size_t>(target_count);
  if (m <= t) return gm;

  const std::size_t clusters = (m + t - 1) / t;
  if (clusters <= 1 || clusters > t) return runnalls_reduce(gm, target_count);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return gm.weight(a) > gm.weight(b); });
  std::vector<std::size_t> centers(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(clusters));

  std::vector<std::vector<std::size_t>> members(clusters);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < clusters; ++c) {
      const double d = (gm.component(i).mean() - gm.component(centers[c]).mean()).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    members[best].push_back(i);
  }

  // Share of the target proportional to cluster size; every cluster keeps >= 1.
  std::vector<double> share(clusters);
  std::vector<std::size_t> alloc(clusters);
  std::size_t total = 0;
  for (std::size_t c = 0; c < clusters; ++c) {
    share[c] = static_cast<double>(t) * static_cast<double>(members[c].size()) / static_cast<double>(m);
    alloc[c] = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(share[c])), 1, members[c].size());
    total += alloc[c];
  }
  while (total < t) {
    std::size_t pick = clusters;
    for (std::size_t c = 0; c < clusters; ++c) {
      if (alloc[c] >= members[c].size()) continue;
      if (pick == clusters || share[c] - alloc[c] > share[pick] - alloc[pick]) pick = c;
    }
    ++alloc[pick];
    ++total;
  }
  while (total > t) {
    std::size_t pick = clusters;
    for (std::size_t c = 0; c < clusters; ++c) {
      if (alloc[c] <= 1) continue;
      if (pick == clusters || share[c] - alloc[c] < share[pick] - alloc[pick]) pick = c;
    }
    --alloc[pick];
    --total;
  }

  std::vector<double> ow;
  std::vector<Gaussian> oc;
  for (std::size_t c = 0; c < clusters; ++c) {
    if (members[c].empty()) continue;
    std::vector<double> cw;
    std::vector<Gaussian> cc;
    double mass = 0.0;
    for (auto i : members[c]) {
      cw.push_back(gm.weight(i));
      cc.push_back(gm.component(i));
      mass += gm.weight(i);
    }
    GaussianMixture sub = runnalls_reduce(GaussianMixture::normalized(cw, cc), static_cast<int>(alloc[c]));
    for (std::size_t k = 0; k < sub.size(); ++k) {
      ow.push_back(mass * sub.weight(k));
      oc.push_back(sub.component(k));
    }
  }
  return GaussianMixture::normalized(std::move(ow), std::move(oc));
}

Vec gm_log_gradient(const GaussianMixture& gm, const Eigen::Ref<const Vec>& x, double* density) {
  const std::size_t m = gm.size();
  std::vector<double> logs(m, -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < m; ++u) {
    if (gm.weight(u) <= 0.0) continue;
    logs[u] = std::log(gm.weight(u)) + gm.component(u).log_pdf(x);
    top = std::max(top, logs[u]);
  }
  Vec grad = Vec::Zero(x.size());
  if (!std::isfinite(top)) {
    if (density) *density = 0.0;
    return grad;
  }
  double total = 0.0;
  for (std::size_t u = 0; u < m; ++u) {
    if (!std::isfinite(logs[u])) continue;
    const double r = std::exp(logs[u] - top);
    total += r;
    grad -= r * (gm.component(u).precision() * (x - gm.component(u).mean()));
  }
  if (density) *density = std::exp(top) * total;
  return grad / total;
}

namespace {

double safe_log(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

}  // namespace

Vec gm_map(const GaussianMixture& gm, const MapOptions& opts) {
  const std::size_t m = gm.size();
  std::vector<std::pair<double, std::size_t>> starts;
  starts.reserve(m);
  for (std::size_t u = 0; u < m; ++u) {
    if (gm.weight(u) > 0.0) starts.emplace_back(gm_pdf(gm, gm.component(u).mean()), u);
  }
  std::stable_sort(starts.begin(), starts.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  if (starts.size() > static_cast<std::size_t>(std::max(1, opts.max_starts))) starts.resize(static_cast<std::size_t>(std::max(1, opts.max_starts)));

  Vec best = gm.component(starts.front().second).mean();
  double best_log = safe_log(starts.front().first);

  for (const auto& [p0, u0] : starts) {
    Vec x = gm.component(u0).mean();
    double f = safe_log(p0);
    for (int step = 0; step < opts.ascent_steps; ++step) {
      double dens = 0.0;
      Vec g = gm_log_gradient(gm, x, &dens);
      if (g.norm() < 1e-12) break;
      // Step scale: responsibility-weighted average variance around x.
      double scale = 0.0, rsum = 0.0;
      for (std::size_t u = 0; u < m; ++u) {
        if (gm.weight(u) <= 0.0) continue;
        const double r = gm.weight(u) * gm.component(u).pdf(x);
        scale += r * gm.component(u).covariance().trace() / x.size();
        rsum += r;
      }
      double t = rsum > 0.0 ? scale / rsum : 1.0;
      bool improved = false;
      for (int halving = 0; halving < 40; ++halving) {
        Vec cand = x + t * g;
        const double fc = safe_log(gm_pdf(gm, cand));
        if (fc > f) {
          improved = fc - f > 1e-10;
          x = std::move(cand);
          f = fc;
          break;
        }
        t *= 0.5;
      }
      if (!improved) break;
    }
    if (f > best_log) {
      best_log = f;
      best = x;
    }
  }
  return best;
}

}  // namespace psda
