#include "psda/association.hpp"

#include <cmath>

#include "psda/error.hpp"

namespace psda {

std::vector<double> hypothesis_priors(const AssociationConfig& cfg, std::size_t n) {
  const double p0 = cfg.false_positive_rate;
  if (!(p0 >= 0.0 && p0 <= 1.0)) fail(ErrorCode::kInvalidArgument, "association: false_positive_rate outside [0, 1]");
  if (cfg.hypothesis_priors.empty()) {
    return std::vector<double>(n, n == 0 ? 0.0 : (1.0 - p0) / static_cast<double>(n));
  }
  if (cfg.hypothesis_priors.size() != n) fail(ErrorCode::kInvalidArgument, "association: hypothesis prior count mismatch");
  double total = p0;
  for (double p : cfg.hypothesis_priors) {
    if (!(p >= 0.0)) fail(ErrorCode::kInvalidArgument, "association: negative hypothesis prior");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::kInvalidArgument, "association: hypothesis priors must sum to 1 - p(theta_0)");
  return cfg.hypothesis_priors;
}

std::vector<double> gamma_multi(const std::vector<double>& normalizers, const AssociationConfig& cfg, int dictionary_size) {
  if (dictionary_size < 1) fail(ErrorCode::kInvalidArgument, "gamma: dictionary size must be >= 1");
  const auto priors = hypothesis_priors(cfg, normalizers.size());
  std::vector<double> gamma(normalizers.size() + 1);
  gamma[0] = cfg.false_positive_rate / static_cast<double>(dictionary_size);
  double den = gamma[0];
  for (std::size_t i = 0; i < normalizers.size(); ++i) {
    if (!(normalizers[i] >= 0.0) || !std::isfinite(normalizers[i])) fail(ErrorCode::kNumeric, "gamma: invalid normalizer");
    gamma[i + 1] = priors[i] * normalizers[i];
    den += gamma[i + 1];
  }
  if (!(den > 0.0)) fail(ErrorCode::kNumeric, "gamma: zero denominator (no evidence and p(theta_0) = 0)");
  for (double& g : gamma) g /= den;
  return gamma;
}

std::vector<ConditionalUpdate> conditional_updates(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model,
                                                   int label, const FusionConfig& cfg, std::uint64_t seed) {
  std::vector<ConditionalUpdate> out;
  out.reserve(priors.size());
  for (std::size_t i = 0; i < priors.size(); ++i) {
    try {
      FusionResult r = fuse_gm(*priors[i], model, label, cfg, derive_seed(seed, {i, 0x434fULL}));
      out.push_back({std::move(r.posterior), r.normalizer});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      out.push_back({*priors[i], 0.0});
    }
  }
  return out;
}

namespace {

int resolve_h(const AssociationConfig& cfg, const SoftmaxModel& model) {
  return cfg.dictionary_size > 0 ? cfg.dictionary_size : model.label_count();
}

GaussianMixture compressed(GaussianMixture gm, int cap) {
  if (cap > 0 && gm.size() > static_cast<std::size_t>(cap)) return runnalls_compress(gm, cap);
  return gm;
}

GaussianMixture blend(double g, const GaussianMixture& updated, const GaussianMixture& prior, int cap) {
  if (g <= 0.0) return prior;
  if (g >= 1.0) return compressed(updated.pruned(), cap);
  return compressed(mix({{g, &updated}, {1.0 - g, &prior}}), cap);
}

std::vector<double> normalizers_of(const std::vector<ConditionalUpdate>& c) {
  std::vector<double> out;
  for (const auto& u : c) out.push_back(u.normalizer);
  return out;
}

}  // namespace

AssociationResult psda_multi(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model, int label,
                             const AssociationConfig& cfg, std::uint64_t seed) {
  if (priors.empty()) fail(ErrorCode::kInvalidArgument, "psda: empty candidate set");
  auto cond = conditional_updates(priors, model, label, cfg.fusion, seed);
  AssociationResult r;
  r.normalizers = normalizers_of(cond);
  r.gamma = gamma_multi(r.normalizers, cfg, resolve_h(cfg, model));
  for (std::size_t i = 0; i < priors.size(); ++i) {
    r.posteriors.push_back(blend(r.gamma[i + 1], cond[i].posterior, *priors[i], cfg.compression_cap));
  }
  return r;
}

AssociationResult psda_single(const GaussianMixture& prior, const SoftmaxModel& model, int label, const AssociationConfig& cfg,
                              std::uint64_t seed) {
  return psda_multi({&prior}, model, label, cfg, seed);
}

AssociationResult greedy_psda(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model, int label,
                              const AssociationConfig& cfg, std::uint64_t seed) {
  if (priors.empty()) fail(ErrorCode::kInvalidArgument, "greedy_psda: empty candidate set");
  auto cond = conditional_updates(priors, model, label, cfg.fusion, seed);
  AssociationResult r;
  r.normalizers = normalizers_of(cond);
  r.gamma = gamma_multi(r.normalizers, cfg, resolve_h(cfg, model));
  std::size_t winner = 0;
  for (std::size_t i = 1; i < r.gamma.size(); ++i) {
    if (r.gamma[i] > r.gamma[winner]) winner = i;
  }
  for (std::size_t i = 0; i < priors.size(); ++i) {
    r.posteriors.push_back(winner == i + 1 ? compressed(cond[i].posterior.pruned(), cfg.compression_cap) : *priors[i]);
  }
  return r;
}

std::vector<GaussianMixture> naive_da(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model, int label,
                                      Polarity polarity, const AssociationConfig& cfg, std::uint64_t seed) {
  if (priors.empty()) return {};
  auto cond = conditional_updates(priors, model, label, cfg.fusion, seed);
  const double share = polarity == Polarity::kPositive ? 1.0 / static_cast<double>(priors.size()) : 1.0;
  std::vector<GaussianMixture> out;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    // A candidate whose conditional update found no support keeps its prior.
    out.push_back(cond[i].normalizer > 0.0 ? blend(share, cond[i].posterior, *priors[i], cfg.compression_cap) : *priors[i]);
  }
  return out;
}

std::vector<GaussianMixture> no_da(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model, int label,
                                   const AssociationConfig& cfg, std::uint64_t seed) {
  auto cond = conditional_updates(priors, model, label, cfg.fusion, seed);
  std::vector<GaussianMixture> out;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    out.push_back(cond[i].normalizer > 0.0 ? compressed(cond[i].posterior.pruned(), cfg.compression_cap) : *priors[i]);
  }
  return out;
}

}  // namespace psda
