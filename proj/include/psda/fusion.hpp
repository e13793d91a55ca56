#pragma once

#include <cstdint>
#include <vector>

#include "psda/gaussmix.hpp"
#include "psda/semantics.hpp"

namespace psda {

/// lambda(xi) = (1 / (2 xi)) [sigmoid(xi) - 1/2], continuous at 0 with value 1/8.
double bouchard_lambda(double xi);

/// Variational parameters of the log-sum-exp upper bound.
struct VariationalState {
  double alpha = 0.0;
  Vec xi;

  Vec lambdas() const;
};

/// alpha + sum_h [(y_h - alpha - xi_h)/2 + lambda(xi_h)((y_h - alpha)^2 - xi_h^2) + log(1 + e^xi_h)].
/// Never below log(sum_h exp(y_h)).
double bouchard_bound(const Vec& y, const VariationalState& vs);

enum class FusionMethod { kVB, kVBIS, kLWIS };
const char* to_string(FusionMethod m);

enum class FusionRoute { kAuto, kVBIS, kLWIS };

struct FusionConfig {
  double surprise_threshold = 0.1;  // VBIS when estimated p(D) falls below this
  int routing_samples = 500;
  int samples_per_component = 5000;
  int max_vb_iterations = 100;
  double vb_tolerance = 1e-6;  // relative change of the VB normalizer
  int min_effective_samples = 10;
};

struct GaussianFusion {
  Gaussian posterior;
  double normalizer = 0.0;
  FusionMethod method = FusionMethod::kVB;
  int iterations = 0;
  bool converged = true;
  double effective_samples = 0.0;
};

struct FusionResult {
  GaussianMixture posterior;
  /// sum_u w_u C_u
  double normalizer = 0.0;
  std::vector<double> component_normalizers;
  std::vector<FusionMethod> component_methods;
  FusionMethod method = FusionMethod::kLWIS;
};

/// Variational Bayes fusion of a single softmax class under the Bouchard bound;
/// the normalizer is a lower bound of the exact evidence.
GaussianFusion vb_update_class(const Gaussian& prior, const SoftmaxModel& model, int cls, const FusionConfig& cfg = {});

/// Label-level VB: per-class updates combined by moment matching; the
/// normalizer is the sum of the per-class bounds.
GaussianFusion vb_update(const Gaussian& prior, const SoftmaxModel& model, int label, const FusionConfig& cfg = {});

/// VB importance sampling. Proposal N(mu_VB, Sigma_prior) (a mixture over the
/// label's classes for multimodal labels). Throws kNumeric when the effective
/// sample size falls below cfg.min_effective_samples.
GaussianFusion vbis(const Gaussian& prior, const SoftmaxModel& model, int label, int n_samples, std::uint64_t seed,
                    const FusionConfig& cfg = {});

/// Likelihood-weighted importance sampling on each prior component. Components
/// with active[u] == false are treated as seeing a constant likelihood equal to
/// its value at the component mean and are passed through unchanged.
FusionResult lwis(const GaussianMixture& prior, const SoftmaxModel& model, int label, int n_samples, std::uint64_t seed,
                  const std::vector<bool>& active = {});

/// Estimated p(D) under the prior from cfg.routing_samples draws.
double estimate_evidence(const GaussianMixture& prior, const SoftmaxModel& model, int label, int n_samples, std::uint64_t seed);

/// GM-prior fusion: per-component conditional posteriors and normalizers,
/// reweighted mixands w_u C_u / sum_v w_v C_v. With kAuto, VBIS is used when the
/// prior-sampled evidence is below the surprise threshold, otherwise LWIS.
FusionResult fuse_gm(const GaussianMixture& prior, const SoftmaxModel& model, int label, const FusionConfig& cfg,
                     std::uint64_t seed, FusionRoute route = FusionRoute::kAuto);

}  // namespace psda
