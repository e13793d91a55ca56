#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "psda/fusion.hpp"
#include "psda/gaussmix.hpp"
#include "psda/semantics.hpp"

namespace psda {

struct AssociationConfig {
  /// p(theta_0): prior probability that a datum describes no target.
  double false_positive_rate = 0.1;
  /// H in the uniform false-data likelihood 1/H; 0 means "use the model's label count".
  int dictionary_size = 0;
  /// Optional p(theta_i) per candidate; defaults to (1 - p(theta_0)) / N each.
  std::vector<double> hypothesis_priors;
  /// Per-target posteriors are Runnalls-compressed to this many mixands (0 disables).
  int compression_cap = 25;
  FusionConfig fusion;
};

/// Validates cfg for n candidates and returns p(theta_1..N).
std::vector<double> hypothesis_priors(const AssociationConfig& cfg, std::size_t n);

struct AssociationResult {
  /// gamma_0 .. gamma_N
  std::vector<double> gamma;
  std::vector<int> candidate_ids;
  /// Updated belief of each candidate, in candidate order.
  std::vector<GaussianMixture> posteriors;
  /// sum_u w_u C_u for each candidate.
  std::vector<double> normalizers;
};

/// Association probabilities from per-candidate evidence terms:
/// gamma_0 = (1/H) p0 / den, gamma_i = p(theta_i) C_i / den.
std::vector<double> gamma_multi(const std::vector<double>& normalizers, const AssociationConfig& cfg, int dictionary_size);

/// Conditional (theta = i) fusion for one candidate.
struct ConditionalUpdate {
  GaussianMixture posterior;
  double normalizer = 0.0;
};

std::vector<ConditionalUpdate> conditional_updates(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model,
                                                   int label, const FusionConfig& cfg, std::uint64_t seed);

/// Single-target PSDA: prior and conditional posterior weighted by gamma_0, gamma_1.
AssociationResult psda_single(const GaussianMixture& prior, const SoftmaxModel& model, int label, const AssociationConfig& cfg,
                              std::uint64_t seed);

/// Full multi-target PSDA: each candidate's marginal posterior is
/// gamma_i * conditional + (1 - gamma_i) * prior.
AssociationResult psda_multi(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model, int label,
                             const AssociationConfig& cfg, std::uint64_t seed);

/// Winner-take-all: same gamma as psda_multi; only the argmax hypothesis'
/// conditional pdf is kept (ties go to theta_0, then the lowest index).
AssociationResult greedy_psda(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model, int label,
                              const AssociationConfig& cfg, std::uint64_t seed);

/// Equal fixed association weights: positive data give (1/N) updated + (1 - 1/N) prior,
/// negative data give the updated pdf.
std::vector<GaussianMixture> naive_da(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model, int label,
                                      Polarity polarity, const AssociationConfig& cfg, std::uint64_t seed);

/// Trust every datum: each candidate takes its conditional posterior.
std::vector<GaussianMixture> no_da(const std::vector<const GaussianMixture*>& priors, const SoftmaxModel& model, int label,
                                   const AssociationConfig& cfg, std::uint64_t seed);

}  // namespace psda
