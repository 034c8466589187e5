#include "bss/priors.hpp"

#include <cmath>

namespace bss {
namespace {

void validate(const SourceLaw& law) {
  switch (law.family) {
    case LawFamily::Gauss:
    case LawFamily::Laplace:
    case LawFamily::Cauchy:
      if (!(law.alpha > 0.0)) throw support_error("SourceLaw: alpha must be > 0");
      break;
    case LawFamily::Gamma:
      if (!(law.alpha > 0.0) || !(law.beta > 0.0))
        throw support_error("SourceLaw: Gamma needs alpha > 0 and beta > 0");
      break;
    case LawFamily::SubGaussian:
    case LawFamily::GaussMixture:
      break;  // alpha is a free real offset (GaussMixture) or unused
  }
}

// log cosh without overflow for large |z|.
double log_cosh(double z) {
  const double a = std::fabs(z);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

double log_sum_exp(double u, double v) {
  const double hi = std::max(u, v);
  return hi + std::log1p(std::exp(std::min(u, v) - hi));
}

double sign(double z) { return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0); }

}  // namespace

bool in_support(const SourceLaw& law, double z) {
  if (!std::isfinite(z)) return false;
  return law.family != LawFamily::Gamma || z > 0.0;
}

double log_density(const SourceLaw& law, double z) {
  validate(law);
  if (!in_support(law, z)) throw support_error("log_density: z outside the law's support");
  switch (law.family) {
    case LawFamily::Gauss:
      return -law.alpha * z * z;
    case LawFamily::Laplace:
      return -law.alpha * std::fabs(z);
    case LawFamily::Cauchy: {
      const double u = z / law.alpha;
      return -std::log1p(u * u);
    }
    case LawFamily::Gamma:
      return law.alpha * std::log(z) - law.beta * z;
    case LawFamily::SubGaussian:
      return -0.5 * z * z - 2.0 * log_cosh(z);
    case LawFamily::GaussMixture: {
      const double zm = z - law.alpha, zp = z + law.alpha;
      return log_sum_exp(-0.5 * zm * zm, -0.5 * zp * zp);
    }
  }
  return 0.0;  // unreachable
}

double score_phi(const SourceLaw& law, double z, bool paper_table) {
  validate(law);
  if (!in_support(law, z)) throw support_error("score_phi: z outside the law's support");
  switch (law.family) {
    case LawFamily::Gauss:
      return 2.0 * law.alpha * z;
    case LawFamily::Laplace:
      return law.alpha * sign(z);
    case LawFamily::Cauchy: {
      const double u = z / law.alpha;
      return (2.0 * z / (law.alpha * law.alpha)) / (1.0 + u * u);
    }
    case LawFamily::Gamma:
      return -law.alpha / z + law.beta;
    case LawFamily::SubGaussian:
      return paper_table ? z + std::tanh(z) : z + 2.0 * std::tanh(z);
    case LawFamily::GaussMixture: {
      const double t = law.alpha * std::tanh(law.alpha * z);
      return paper_table ? law.alpha * z - t : z - t;
    }
  }
  return 0.0;  // unreachable
}

double score_phi_prime(const SourceLaw& law, double z) {
  validate(law);
  if (!in_support(law, z)) throw support_error("score_phi_prime: z outside the law's support");
  switch (law.family) {
    case LawFamily::Gauss:
      return 2.0 * law.alpha;
    case LawFamily::Laplace:
      return 0.0;  // a.e.; the kink at 0 is the caller's problem
    case LawFamily::Cauchy: {
      const double u = z / law.alpha;
      const double d = 1.0 + u * u;
      return (2.0 / (law.alpha * law.alpha)) * (1.0 - u * u) / (d * d);
    }
    case LawFamily::Gamma:
      return law.alpha / (z * z);
    case LawFamily::SubGaussian: {
      const double th = std::tanh(z);
      return 1.0 + 2.0 * (1.0 - th * th);
    }
    case LawFamily::GaussMixture: {
      const double th = std::tanh(law.alpha * z);
      return 1.0 - law.alpha * law.alpha * (1.0 - th * th);
    }
  }
  return 0.0;  // unreachable
}

double mixing_penalty(const MixingPrior& prior, const MixingMatrix& A) {
  const Matrix& a = A.data;
  switch (prior.kind) {
    case MixingPriorKind::Frobenius:
      return a.squaredNorm();
    case MixingPriorKind::IdentityProximity: {
      if (a.rows() != a.cols())
        throw shape_error("mixing prior: identity proximity needs a square A");
      return (Matrix::Identity(a.rows(), a.cols()) - a).squaredNorm();
    }
    case MixingPriorKind::RowOrthonormal:
      return (Matrix::Identity(a.rows(), a.rows()) - a * a.transpose()).squaredNorm();
    case MixingPriorKind::ColOrthonormal:
      return (Matrix::Identity(a.cols(), a.cols()) - a.transpose() * a).squaredNorm();
    case MixingPriorKind::Weighted: {
      if (!prior.weights) throw support_error("mixing prior: Weighted needs a weight matrix");
      const Matrix& w = *prior.weights;
      if (w.rows() != a.rows() || w.cols() != a.cols())
        throw shape_error("mixing prior: weight matrix shape mismatch");
      if ((w.array() <= 0.0).any())
        throw support_error("mixing prior: weights must be strictly positive");
      return (w.array() * a.array()).square().sum();
    }
    case MixingPriorKind::Uniform:
      return 0.0;
  }
  return 0.0;  // unreachable
}

double mixing_log_prior(const MixingPrior& prior, const MixingMatrix& A) {
  if (prior.kind == MixingPriorKind::Uniform) return 0.0;
  if (!(prior.sigma_a > 0.0)) throw support_error("mixing prior: sigma_a must be > 0");
  return -mixing_penalty(prior, A) / (2.0 * prior.sigma_a * prior.sigma_a);
}

Matrix mixing_prior_gradient(const MixingPrior& prior, const MixingMatrix& A) {
  const Matrix& a = A.data;
  switch (prior.kind) {
    case MixingPriorKind::Frobenius:
      return 2.0 * a;
    case MixingPriorKind::IdentityProximity: {
      if (a.rows() != a.cols())
        throw shape_error("mixing prior: identity proximity needs a square A");
      return 2.0 * (a - Matrix::Identity(a.rows(), a.cols()));
    }
    case MixingPriorKind::RowOrthonormal: {
      const Matrix M = Matrix::Identity(a.rows(), a.rows()) - a * a.transpose();
      return -4.0 * M * a;
    }
    case MixingPriorKind::ColOrthonormal: {
      const Matrix M = Matrix::Identity(a.cols(), a.cols()) - a.transpose() * a;
      return -4.0 * a * M;
    }
    case MixingPriorKind::Weighted: {
      mixing_penalty(prior, A);  // runs the shape/positivity checks
      const Matrix& w = *prior.weights;
      return 2.0 * (w.array().square() * a.array()).matrix();
    }
    case MixingPriorKind::Uniform:
      return Matrix::Zero(a.rows(), a.cols());
  }
  return Matrix();  // unreachable
}

Matrix neighbor_weights(Index m, Index n) {
  Matrix w(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      w(i, j) = (i == j) ? 1.0 : 1.0 / (2.0 * static_cast<double>(std::abs(i - j)) + 1.0);
  return w;
}

Matrix build_spatial_D(Index n, Boundary boundary) {
  if (n < 2) throw support_error("build_spatial_D: need at least 2 sources");
  Matrix D = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    D(j, j) = 2.0;
    if (j > 0) D(j, j - 1) = -1.0;
    if (j + 1 < n) D(j, j + 1) = -1.0;
  }
  if (boundary == Boundary::Reflect) {
    // Clamped stencil: the missing neighbor is replaced by the edge sample,
    // so D annihilates constant vectors.
    D(0, 0) = 1.0;
    D(n - 1, n - 1) = 1.0;
  }
  return D;
}

double temporal_penalty(const SourceBlock& S, const TemporalPriorSpec& spec) {
  if (spec.alphas.size() != S.sources())
    throw shape_error("temporal_penalty: one alpha per source required");
  if (S.samples() < 2) throw shape_error("temporal_penalty: need T >= 2");
  if ((spec.alphas.array() < 0.0).any())
    throw support_error("temporal_penalty: alphas must be >= 0");
  double acc = 0.0;
  for (Index j = 0; j < S.sources(); ++j) {
    double q = 0.0;
    for (Index t = 1; t < S.samples(); ++t) {
      const double d = S.data(j, t) - S.data(j, t - 1);
      q += d * d;
    }
    acc += spec.alphas(j) * q;
  }
  return acc;
}

}  // namespace bss
