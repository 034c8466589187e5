#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "bss/priors.hpp"
#include "bss/types.hpp"

namespace bss {

// ---------------------------------------------------------------------------
// Configuration and results
// ---------------------------------------------------------------------------

/// Shared hyperparameters. lambda = sigma_eps^2 / sigma_s^2 and
/// mu = sigma_eps^2 / sigma_a^2 when those variances are known; gamma is the
/// step for separating-matrix iterations; alpha_step / beta_step are the
/// source and mixing steps of the gradient variants (and double as the two
/// weights of the whiteness-constrained update, which has no other tunables).
struct HyperParams {
  double lambda = 0.1;
  double mu = 0.1;
  double sigma_eps = 1.0;
  double gamma = 0.1;
  double alpha_step = 0.01;
  double beta_step = 0.02;
};

enum class Algorithm {
  MlRelativeGradient,
  WhitenessConstrained,
  JmapCoordinate,
  JmapBlock,
  JmapGradient,
  JmapFixedPoint,
  JmapSpatial,
  JmapTemporal,
  MarginalMapA,
  UsedAlg
};

/// Elementwise nonlinearity applied to the ridge source estimate inside the
/// reference algorithm. TwoTanhMinusId is z -> 2 tanh(z) - z: unit gain at
/// the origin with strong peak compression, which keeps the rotation search
/// moving for bounded sources; plain Tanh, Identity and SoftThreshold are
/// the alternatives.
enum class Shrinkage { TwoTanhMinusId, Tanh, Identity, SoftThreshold };

struct EstimatorConfig {
  Algorithm algorithm = Algorithm::UsedAlg;
  HyperParams hyper;
  SourceLaw source_law{LawFamily::Gauss, 0.5};
  MixingPrior mixing_prior{MixingPriorKind::Frobenius, 1.0, std::nullopt};
  int max_iters = 100;
  double tol = 1e-8;
  std::optional<MixingMatrix> init_A;
  std::uint64_t init_seed = 0;
  Index n_sources = 0;  // 0: take init_A's width, the temporal spec length, or m

  // Algorithm-specific extras.
  std::optional<SpatialPriorSpec> spatial;    // JmapSpatial
  std::optional<TemporalPriorSpec> temporal;  // JmapTemporal
  Shrinkage shrinkage = Shrinkage::TwoTanhMinusId;  // UsedAlg
  double shrink_threshold = 0.1;              // SoftThreshold knee
  bool backtracking = true;                   // halve steps on criterion increase
  bool per_sample_A = false;                  // single-sample A refresh in block updates
};

struct RunResult {
  MixingMatrix A_hat;
  std::optional<SeparatingMatrix> B_hat;
  SourceBlock S_hat;
  std::vector<double> criterion_trace;  // one entry per completed iteration
  int iters_run = 0;
  bool converged = false;
};

// ---------------------------------------------------------------------------
// Source penalty plumbing
// ---------------------------------------------------------------------------

// The joint criterion weights the source term by lambda, so the penalty is
// kept scale-free: the Gauss family contributes exactly z^2 regardless of its
// alpha (the scale lives in lambda), every other family contributes
// -2 log p(z) with derivative 2 * score_phi(z).

double source_penalty(const SourceLaw& law, double z);
double source_penalty_grad(const SourceLaw& law, double z);
double source_penalty_hess(const SourceLaw& law, double z);

// ---------------------------------------------------------------------------
// Separating-matrix iterations (noiseless, invertible mixing)
// ---------------------------------------------------------------------------

/// One relative-gradient update B - gamma * (1/T) sum_t [phi(y) y^t - I]
/// with y(t) = B x(t). Stationary exactly when the batch satisfies
/// (1/T) sum phi(y) y^t = I.
SeparatingMatrix ml_relative_gradient_step(const SeparatingMatrix& B, const ObservationBlock& X,
                                           const SourceLaw& law, double gamma);

/// Batch average of alpha (y y^t - I) + beta (phi(y) y^t + y phi(y)^t),
/// the update direction under the empirical whiteness constraint.
Matrix whiteness_constrained_H(const SourceBlock& Y, const SourceLaw& law, double alpha,
                               double beta);

// ---------------------------------------------------------------------------
// Joint MAP updates (Gaussian closed forms and general steps)
// ---------------------------------------------------------------------------

enum class CoordinateVariant { Pa1, Pa2, Weighted };

/// Per-sample coordinate sweep: for each column t, each source coordinate is
/// refreshed from the residual that excludes its own contribution, then each
/// mixing entry likewise. Pa2 flips the sign of mu off the diagonal; the
/// Weighted variant divides by w_ij^2 (s_j^2 + mu).
std::pair<SourceBlock, MixingMatrix> jmap_coordinate_update(
    const MixingMatrix& A, const SourceBlock& S, const ObservationBlock& X,
    const HyperParams& hyper, CoordinateVariant variant,
    const std::optional<Matrix>& weights = std::nullopt);

/// Block step: s(t) = (A^t A + lambda I)^{-1} A^t x(t) per column, then the
/// batch normal-equation update A = (sum x s^t)(sum s s^t + mu I)^{-1}
/// (exact maximizer over all T samples). per_sample_A = true instead applies
/// the single-sample rank-one form column by column.
std::pair<SourceBlock, MixingMatrix> jmap_block_update(const MixingMatrix& A,
                                                       const SourceBlock& S,
                                                       const ObservationBlock& X,
                                                       const HyperParams& hyper,
                                                       bool per_sample_A = false);

/// Block step with the ridge replaced by the second-difference penalty:
/// s(t) = (A^t A + lambda D^t D)^{-1} A^t x(t); mixing update unchanged.
std::pair<SourceBlock, MixingMatrix> jmap_spatial_block_update(const MixingMatrix& A,
                                                               const SourceBlock& S,
                                                               const ObservationBlock& X,
                                                               const HyperParams& hyper,
                                                               const SpatialPriorSpec& spatial);

/// Forward recursion s(t) = (A^t A + lambda I)^{-1} [diag(l_j) s(t-1) + A^t x(t)]
/// with l_j = alpha_j sigma_eps^2 and s(0) = 0, then the batch mixing update.
std::pair<SourceBlock, MixingMatrix> jmap_temporal_update(const MixingMatrix& A,
                                                          const SourceBlock& S,
                                                          const ObservationBlock& X,
                                                          const HyperParams& hyper,
                                                          const TemporalPriorSpec& temporal);

/// J(A, S) = sum_t ||x(t) - A s(t)||^2 + lambda sum_t,j pen(s_j(t)) + mu psi(A).
double joint_criterion(const MixingMatrix& A, const SourceBlock& S, const ObservationBlock& X,
                       const HyperParams& hyper, const SourceLaw& law, const MixingPrior& prior);

/// One simultaneous descent step on joint_criterion: both gradients are
/// evaluated at the current point, then S moves by alpha_step and A by
/// beta_step. With backtrack, both steps are halved (up to 30 times) until
/// the criterion does not increase.
std::pair<SourceBlock, MixingMatrix> jmap_gradient_step(const MixingMatrix& A,
                                                        const SourceBlock& S,
                                                        const ObservationBlock& X,
                                                        const HyperParams& hyper,
                                                        const SourceLaw& law,
                                                        const MixingPrior& prior,
                                                        bool backtrack = true);

/// Fixed-point sweep derived from the stationarity of joint_criterion:
/// the source equation pen'(s') = (2/lambda) A^t (x - A s) is inverted
/// elementwise (laws with a monotone penalty derivative: Gauss, SubGaussian,
/// GaussMixture with |alpha| < 1); the mixing equation
/// psi'(A') = (2/mu) sum_t (x - A s) s^t is inverted for the elementwise
/// priors (Frobenius, IdentityProximity, Weighted). Throws unsupported_error
/// otherwise.
std::pair<SourceBlock, MixingMatrix> jmap_fixed_point_step(const MixingMatrix& A,
                                                           const SourceBlock& S,
                                                           const ObservationBlock& X,
                                                           const HyperParams& hyper,
                                                           const SourceLaw& law,
                                                           const MixingPrior& prior);

/// Max-norm residuals of the two fixed-point equations at (A, S); both
/// vanish at a stationary point of the Gaussian joint criterion.
std::pair<double, double> jmap_fixed_point_residuals(const MixingMatrix& A, const SourceBlock& S,
                                                     const ObservationBlock& X,
                                                     const HyperParams& hyper,
                                                     const SourceLaw& law,
                                                     const MixingPrior& prior);

// ---------------------------------------------------------------------------
// Marginal (sources integrated out) estimation of the mixing matrix
// ---------------------------------------------------------------------------

/// log p(x | A) + log p(A), up to an x- and A-independent constant, for the
/// all-Gaussian model: -(1/2) ln det(A^t A + lambda I)
/// - (1/(2 sigma_eps^2)) x^t (x - A shat) - (mu/(2 sigma_eps^2)) ||A||^2,
/// with shat = (A^t A + lambda I)^{-1} A^t x. The first two terms are the
/// exact marginalization of the sources.
double gaussian_evidence_logpdf(const MixingMatrix& A, const Vector& x, const HyperParams& hyper);

/// Per-sample average of gaussian_evidence_logpdf with the Frobenius term
/// replaced by the supplied prior's penalty.
double marginal_map_objective(const MixingMatrix& A, const ObservationBlock& X,
                              const HyperParams& hyper, const MixingPrior& prior);

/// Analytic gradient of marginal_map_objective in A.
Matrix marginal_map_gradient(const MixingMatrix& A, const ObservationBlock& X,
                             const HyperParams& hyper, const MixingPrior& prior);

/// One ascent step on marginal_map_objective (step beta_step, halved up to
/// 30 times when the objective drops and backtrack is set).
MixingMatrix marginal_map_A_step(const MixingMatrix& A, const ObservationBlock& X,
                                 const HyperParams& hyper, const MixingPrior& prior,
                                 bool backtrack = true);

/// Marginal log-density of one source column with the mixing matrix
/// integrated out (its entries i.i.d. N(0, sigma_eps^2/mu)), plus the source
/// prior term. Exploits the block structure of the stacked-row rewrite
/// x = S a: every n x n block of S^t S + mu I is s s^t + mu I, so the
/// determinant and solve reduce to rank-one formulas and S is never formed.
double marginal_s_logpdf(const Vector& s_col, const Vector& x_col, const HyperParams& hyper);

/// Curvature-corrected approximation of the marginal log-density of A for a
/// general source law: for each column, -(1/2) ln det(H(shat))
/// - (1/(2 sigma_eps^2)) J1(A, shat) with J1 the single-column joint
/// criterion, H its source Hessian and shat its inner minimizer; averaged
/// over columns, plus the mixing-prior term. Exact (up to an A-independent
/// constant) for the Gauss law. Throws numeric_error when the law's penalty
/// is not twice differentiable at shat (Laplace at a kink).
double laplace_log_marginal(const MixingMatrix& A, const ObservationBlock& X,
                            const HyperParams& hyper, const SourceLaw& law,
                            const MixingPrior& prior);

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

/// The reference iteration: ridge source estimate, elementwise shrinkage
/// s = g(y), then an ascent step on the marginal objective whose data term
/// uses the shrunk sources. criterion_trace records the relative residual
/// ||X - A S||_F / ||X||_F. Throws divergence_error (trace attached) if the
/// iteration blows up.
RunResult used_alg_run(const ObservationBlock& X, const EstimatorConfig& config);

/// Dispatches to the configured algorithm and iterates until
/// ||dA||_F < tol (1 + ||A||_F) or max_iters. Initialization: init_A when
/// given, otherwise the m x n identity pad plus a seeded N(0, 0.01)
/// perturbation.
RunResult run_estimator(const ObservationBlock& X, const EstimatorConfig& config);

}  // namespace bss
