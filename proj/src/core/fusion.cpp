#include "psda/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "psda/error.hpp"

namespace psda {

double bouchard_lambda(double xi) {
  const double a = std::abs(xi);
  if (a < 1e-3) return 0.125 - a * a / 96.0;
  return (1.0 / (1.0 + std::exp(-a)) - 0.5) / (2.0 * a);
}

Vec VariationalState::lambdas() const { return xi.unaryExpr([](double v) { return bouchard_lambda(v); }); }

namespace {

double log1p_exp(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

}  // namespace

double bouchard_bound(const Vec& y, const VariationalState& vs) {
  if (vs.xi.size() != y.size()) fail(ErrorCode::kInvalidArgument, "bouchard_bound: size mismatch");
  double out = vs.alpha;
  for (Eigen::Index h = 0; h < y.size(); ++h) {
    const double xi = vs.xi[h];
    const double d = y[h] - vs.alpha;
    out += 0.5 * (d - xi) + bouchard_lambda(xi) * (d * d - xi * xi) + log1p_exp(xi);
  }
  return out;
}

const char* to_string(FusionMethod m) {
  switch (m) {
    case FusionMethod::kVB: return "VB";
    case FusionMethod::kVBIS: return "VBIS";
    case FusionMethod::kLWIS: return "LWIS";
  }
  return "LWIS";
}

GaussianFusion vb_update_class(const Gaussian& prior, const SoftmaxModel& model, int cls, const FusionConfig& cfg) {
  if (cls < 0 || cls >= model.class_count()) fail(ErrorCode::kNotFound, "vb_update: class out of range");
  if (model.dim() != prior.dim()) fail(ErrorCode::kInvalidArgument, "vb_update: dimension mismatch");
  const Mat& w = model.weights();
  const Vec& b = model.biases();
  const auto classes = w.rows();
  const auto n = prior.dim();
  const Mat& prior_prec = prior.precision();
  const Vec prior_info = prior_prec * prior.mean();
  const double prior_quad = prior.mean().dot(prior_info);

  // Start from the prior moments of y_h with alpha = 0.
  VariationalState vs;
  vs.alpha = 0.0;
  vs.xi.resize(classes);
  for (Eigen::Index h = 0; h < classes; ++h) {
    const double m = w.row(h).dot(prior.mean()) + b[h];
    const double v = w.row(h).dot(prior.covariance() * w.row(h).transpose());
    vs.xi[h] = std::sqrt(m * m + v);
  }

  Vec post_mean = prior.mean();
  Mat post_cov = prior.covariance();
  double log_c = -std::numeric_limits<double>::infinity();
  double prev_c = -1.0;
  int it = 0;
  bool converged = false;
  for (it = 1; it <= std::max(1, cfg.max_vb_iterations); ++it) {
    const Vec lam = vs.lambdas();
    Mat k = Mat::Zero(n, n);
    Vec g = w.row(cls).transpose();
    double konst = b[cls] - vs.alpha;
    for (Eigen::Index h = 0; h < classes; ++h) {
      const Vec wh = w.row(h).transpose();
      k += 2.0 * lam[h] * wh * wh.transpose();
      g -= 0.5 * wh + 2.0 * lam[h] * (b[h] - vs.alpha) * wh;
      const double d = b[h] - vs.alpha;
      konst -= 0.5 * (d - vs.xi[h]) + lam[h] * (d * d - vs.xi[h] * vs.xi[h]) + log1p_exp(vs.xi[h]);
    }
    const Mat post_prec = prior_prec + k;
    Eigen::LLT<Mat> llt(post_prec);
    if (llt.info() != Eigen::Success) fail(ErrorCode::kNumeric, "vb_update: posterior precision not PD");
    const Vec h_info = prior_info + g;
    post_mean = llt.solve(h_info);
    post_cov = llt.solve(Mat::Identity(n, n));
    post_cov = 0.5 * (post_cov + post_cov.transpose());
    const double post_log_det = -2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    log_c = konst + 0.5 * (post_log_det - prior.log_det()) + 0.5 * (h_info.dot(post_mean) - prior_quad);
    const double c = std::exp(log_c);

    // Refresh variational parameters under the current posterior.
    double lam_sum = 0.0, lam_y = 0.0;
    Vec ey(classes), vy(classes);
    for (Eigen::Index h = 0; h < classes; ++h) {
      ey[h] = w.row(h).dot(post_mean) + b[h];
      vy[h] = w.row(h).dot(post_cov * w.row(h).transpose());
      lam_sum += lam[h];
      lam_y += lam[h] * ey[h];
    }
    vs.alpha = (0.5 * static_cast<double>(classes) - 1.0 + 2.0 * lam_y) / (2.0 * lam_sum);
    for (Eigen::Index h = 0; h < classes; ++h) {
      const double d = ey[h] - vs.alpha;
      vs.xi[h] = std::sqrt(d * d + vy[h]);
    }

    if (prev_c >= 0.0 && std::abs(c - prev_c) <= cfg.vb_tolerance * std::max(c, std::numeric_limits<double>::min())) {
      converged = true;
      break;
    }
    prev_c = c;
  }
  GaussianFusion out{Gaussian(post_mean, post_cov), std::exp(log_c), FusionMethod::kVB, std::min(it, cfg.max_vb_iterations), converged, 0.0};
  return out;
}

GaussianFusion vb_update(const Gaussian& prior, const SoftmaxModel& model, int label, const FusionConfig& cfg) {
  const auto classes = model.classes_of(label);
  if (classes.empty()) fail(ErrorCode::kNotFound, "vb_update: unknown label");
  if (classes.size() == 1) return vb_update_class(prior, model, classes.front(), cfg);

  std::vector<GaussianFusion> parts;
  double total = 0.0;
  bool converged = true;
  int iterations = 0;
  for (int c : classes) {
    parts.push_back(vb_update_class(prior, model, c, cfg));
    total += parts.back().normalizer;
    converged = converged && parts.back().converged;
    iterations = std::max(iterations, parts.back().iterations);
  }
  std::vector<double> w;
  std::vector<Gaussian> g;
  for (auto& p : parts) {
    w.push_back(total > 0.0 ? p.normalizer / total : 1.0 / static_cast<double>(parts.size()));
    g.push_back(p.posterior);
  }
  Moments mm = gm_moments(GaussianMixture::normalized(w, g));
  return {Gaussian(mm.mean, mm.covariance), total, FusionMethod::kVB, iterations, converged, 0.0};
}

namespace {

/// Weighted sample moments as a Gaussian; falls back to the given covariance when
/// the estimate cannot be made positive-definite.
Gaussian weighted_gaussian(const Mat& xs, const Vec& weights, const Mat& fallback_cov) {
  const double total = weights.sum();
  Vec mean = xs * weights / total;
  Mat centered = xs.colwise() - mean;
  Mat cov = centered * weights.asDiagonal() * centered.transpose() / total;
  cov = 0.5 * (cov + cov.transpose());
  try {
    return Gaussian(mean, cov);
  } catch (const Error&) {
    return Gaussian(mean, fallback_cov);
  }
}

}  // namespace

GaussianFusion vbis(const Gaussian& prior, const SoftmaxModel& model, int label, int n_samples, std::uint64_t seed,
                    const FusionConfig& cfg) {
  if (n_samples < 100) fail(ErrorCode::kInvalidArgument, "vbis: need at least 100 samples");
  const auto classes = model.classes_of(label);
  if (classes.empty()) fail(ErrorCode::kNotFound, "vbis: unknown label");

  std::vector<double> proposal_w;
  std::vector<Gaussian> proposal_c;
  int iterations = 0;
  bool converged = true;
  for (int c : classes) {
    GaussianFusion vb = vb_update_class(prior, model, c, cfg);
    proposal_w.push_back(vb.normalizer);
    proposal_c.emplace_back(vb.posterior.mean(), prior.covariance());
    iterations = std::max(iterations, vb.iterations);
    converged = converged && vb.converged;
  }
  double pw = 0.0;
  for (double v : proposal_w) pw += v;
  if (!(pw > 0.0) || !std::isfinite(pw)) std::fill(proposal_w.begin(), proposal_w.end(), 1.0);
  const GaussianMixture proposal = GaussianMixture::normalized(proposal_w, proposal_c);

  Rng rng(seed);
  const Mat xs = gm_sample(proposal, n_samples, rng);
  const Vec log_prior = prior.log_pdf_columns(xs);
  Vec log_q;
  if (proposal.size() == 1) {
    log_q = proposal.component(0).log_pdf_columns(xs);
  } else {
    log_q = gm_pdf_columns(proposal, xs).array().log();
  }
  const Vec like = model.probability_columns(label, xs);
  Vec omega = (log_prior - log_q).array().exp() * like.array();
  for (Eigen::Index s = 0; s < omega.size(); ++s) {
    if (!std::isfinite(omega[s])) omega[s] = 0.0;
  }
  const double sum = omega.sum();
  const double sum_sq = omega.squaredNorm();
  const double ess = sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
  if (ess < cfg.min_effective_samples) fail(ErrorCode::kNumeric, "vbis: degenerate proposal (effective sample size below threshold)");

  Gaussian post = weighted_gaussian(xs, omega, prior.covariance());
  return {std::move(post), sum / n_samples, FusionMethod::kVBIS, iterations, converged, ess};
}

double estimate_evidence(const GaussianMixture& prior, const SoftmaxModel& model, int label, int n_samples, std::uint64_t seed) {
  Rng rng(seed);
  const Mat xs = gm_sample(prior, std::max(1, n_samples), rng);
  return model.probability_columns(label, xs).mean();
}

namespace {

struct ComponentUpdate {
  Gaussian posterior;
  double normalizer;
  FusionMethod method;
};

ComponentUpdate lwis_component(const Gaussian& prior, const SoftmaxModel& model, int label, int n_samples, std::uint64_t seed) {
  Rng rng(seed);
  const Mat xs = prior.sample(n_samples, rng);
  const Vec like = model.probability_columns(label, xs);
  const double hi = like.maxCoeff();
  const double lo = like.minCoeff();
  const double mean = like.mean();
  if (!(hi > 0.0)) return {prior, 0.0, FusionMethod::kLWIS};
  // A likelihood that is constant over the samples leaves the component unchanged.
  if (hi - lo <= 1e-12 * hi) return {prior, mean, FusionMethod::kLWIS};
  return {weighted_gaussian(xs, like, prior.covariance()), mean, FusionMethod::kLWIS};
}

FusionResult assemble(const GaussianMixture& prior, std::vector<ComponentUpdate>& updates, FusionMethod method) {
  std::vector<double> w;
  std::vector<Gaussian> g;
  std::vector<double> normalizers;
  std::vector<FusionMethod> methods;
  double total = 0.0;
  for (std::size_t u = 0; u < prior.size(); ++u) {
    const double wc = prior.weight(u) * updates[u].normalizer;
    total += wc;
    w.push_back(wc);
    g.push_back(updates[u].posterior);
    normalizers.push_back(updates[u].normalizer);
    methods.push_back(updates[u].method);
  }
  if (!(total > 0.0)) fail(ErrorCode::kNumeric, "fusion: every component has zero likelihood");
  return {GaussianMixture::normalized(std::move(w), std::move(g)), total, std::move(normalizers), std::move(methods), method};
}

}  // namespace

FusionResult lwis(const GaussianMixture& prior, const SoftmaxModel& model, int label, int n_samples, std::uint64_t seed,
                  const std::vector<bool>& active) {
  if (n_samples < 100) fail(ErrorCode::kInvalidArgument, "lwis: need at least 100 samples per component");
  if (!active.empty() && active.size() != prior.size()) fail(ErrorCode::kInvalidArgument, "lwis: mask size mismatch");
  std::vector<ComponentUpdate> updates;
  updates.reserve(prior.size());
  for (std::size_t u = 0; u < prior.size(); ++u) {
    const Gaussian& comp = prior.component(u);
    if (prior.weight(u) <= 0.0) {
      updates.push_back({comp, 0.0, FusionMethod::kLWIS});
    } else if (!active.empty() && !active[u]) {
      updates.push_back({comp, model.probability(label, comp.mean()), FusionMethod::kLWIS});
    } else {
      updates.push_back(lwis_component(comp, model, label, n_samples, derive_seed(seed, {u, 0x4c57ULL})));
    }
  }
  return assemble(prior, updates, FusionMethod::kLWIS);
}

FusionResult fuse_gm(const GaussianMixture& prior, const SoftmaxModel& model, int label, const FusionConfig& cfg,
                     std::uint64_t seed, FusionRoute route) {
  if (model.dim() != prior.dim()) fail(ErrorCode::kInvalidArgument, "fuse_gm: dimension mismatch");
  if (label < 0 || label >= model.label_count()) fail(ErrorCode::kNotFound, "fuse_gm: unknown label");
  if (route == FusionRoute::kAuto) {
    const double evidence = estimate_evidence(prior, model, label, cfg.routing_samples, derive_seed(seed, {0x524fULL}));
    route = evidence < cfg.surprise_threshold ? FusionRoute::kVBIS : FusionRoute::kLWIS;
  }
  if (route == FusionRoute::kLWIS) return lwis(prior, model, label, cfg.samples_per_component, seed);

  std::vector<ComponentUpdate> updates;
  updates.reserve(prior.size());
  for (std::size_t u = 0; u < prior.size(); ++u) {
    const Gaussian& comp = prior.component(u);
    if (prior.weight(u) <= 0.0) {
      updates.push_back({comp, 0.0, FusionMethod::kVBIS});
      continue;
    }
    const std::uint64_t s = derive_seed(seed, {u, 0x5642ULL});
    try {
      GaussianFusion r = vbis(comp, model, label, cfg.samples_per_component, s, cfg);
      updates.push_back({std::move(r.posterior), r.normalizer, FusionMethod::kVBIS});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      updates.push_back(lwis_component(comp, model, label, cfg.samples_per_component, s));
    }
  }
  return assemble(prior, updates, FusionMethod::kVBIS);
}

}  // namespace psda
