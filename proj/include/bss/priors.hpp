#pragma once

#include <optional>

#include "bss/types.hpp"

namespace bss {

// ---------------------------------------------------------------------------
// Source laws and their score functions
// ---------------------------------------------------------------------------

enum class LawFamily { Gauss, Laplace, Cauchy, Gamma, SubGaussian, GaussMixture };

/// Scalar source law p(z), stored unnormalized. alpha is the family's scale
/// or shape parameter (mode offset for GaussMixture, unused for SubGaussian);
/// beta applies to Gamma only. Gamma is supported on z > 0.
struct SourceLaw {
  LawFamily family = LawFamily::Gauss;
  double alpha = 1.0;
  double beta = 1.0;
};

/// True when z lies in the law's support.
bool in_support(const SourceLaw& law, double z);

/// log p(z) up to an additive constant. Throws support_error outside the
/// law's support.
double log_density(const SourceLaw& law, double z);

/// Score phi(z) = -p'(z)/p(z), the exact derivative of -log_density.
///
/// For SubGaussian and GaussMixture the analytic derivative of the stated
/// density differs from the commonly tabulated shorthand; paper_table=true
/// selects the tabulated variant (z + tanh z, and alpha z - alpha tanh(alpha z))
/// for comparison runs. Everything else in the library uses the analytic form.
double score_phi(const SourceLaw& law, double z, bool paper_table = false);

/// d/dz of the analytic score (needed for curvature-based approximations).
double score_phi_prime(const SourceLaw& law, double z);

// ---------------------------------------------------------------------------
// Mixing-matrix priors
// ---------------------------------------------------------------------------

enum class MixingPriorKind {
  Frobenius,          // penalty ||A||^2
  IdentityProximity,  // ||I - A||^2, square A only
  RowOrthonormal,     // ||I - A A^t||^2
  ColOrthonormal,     // ||I - A^t A||^2
  Weighted,           // sum_ij (w_ij a_ij)^2
  Uniform             // flat
};

struct MixingPrior {
  MixingPriorKind kind = MixingPriorKind::Frobenius;
  double sigma_a = 1.0;
  std::optional<Matrix> weights;  // Weighted only; strictly positive, shape of A
};

/// The positive quadratic penalty psi(A) of the prior (0 for Uniform).
double mixing_penalty(const MixingPrior& prior, const MixingMatrix& A);

/// log p(A) up to a constant: -psi(A) / (2 sigma_a^2); 0 for Uniform.
double mixing_log_prior(const MixingPrior& prior, const MixingMatrix& A);

/// Gradient of psi(A) (without the -1/(2 sigma_a^2) factor).
Matrix mixing_prior_gradient(const MixingPrior& prior, const MixingMatrix& A);

/// Neighbor-weight matrix: w_ii = 1 and w_ij = 1/(2|i-j|+1) off the
/// diagonal, for sensors labelled so that sensor i sits nearest sources
/// i-1, i, i+1.
Matrix neighbor_weights(Index m, Index n);

// ---------------------------------------------------------------------------
// Structured source penalties
// ---------------------------------------------------------------------------

enum class Boundary {
  Truncate,  // keep the tri-diagonal Toeplitz rows (diag 2) at the edges
  Reflect    // clamp the stencil at the edges; constants are in the nullspace
};

struct SpatialPriorSpec {
  double sigma_s = 1.0;
  Boundary boundary = Boundary::Truncate;
};

/// n x n second-difference operator over the source index: stencil
/// 2 s_j - s_{j-1} - s_{j+1}, boundary rows per the chosen mode.
Matrix build_spatial_D(Index n_sources, Boundary boundary);

/// First-order smoothness weights, one per source. Zero disables the
/// coupling for that source.
struct TemporalPriorSpec {
  Vector alphas;
};

/// sum_j alpha_j sum_{t>=2} (s_j(t) - s_j(t-1))^2; the log-prior is the
/// negative of this.
double temporal_penalty(const SourceBlock& S, const TemporalPriorSpec& spec);

}  // namespace bss
