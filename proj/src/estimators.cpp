#include "bss/estimators.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>

#include "bss/rng.hpp"

namespace bss {
namespace {

constexpr double kDivergenceCap = 1e12;

void check_pair_shapes(const MixingMatrix& A, const SourceBlock& S, const ObservationBlock& X) {
  if (A.sources() != S.sources())
    throw shape_error("estimator: A columns and S rows disagree");
  if (A.sensors() != X.sensors())
    throw shape_error("estimator: A rows and X rows disagree");
  if (S.samples() != X.samples())
    throw shape_error("estimator: S and X sample counts disagree");
}

// Scores a whole column, converting support violations into numeric_error
// tagged with the sample index.
Vector score_column(const SourceLaw& law, const Vector& y, Index t) {
  Vector phi(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    if (!in_support(law, y(i)))
      throw numeric_error("score outside the law's support at sample " + std::to_string(t),
                          static_cast<long>(t));
    phi(i) = score_phi(law, y(i));
    if (!std::isfinite(phi(i)))
      throw numeric_error("non-finite score at sample " + std::to_string(t),
                          static_cast<long>(t));
  }
  return phi;
}

Eigen::FullPivLU<Matrix> invertible_lu(const Matrix& M, const char* what) {
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible()) throw solve_error(std::string(what) + ": singular system");
  return lu;
}

// Normal matrix of the ridge source step.
Matrix gram_plus(const Matrix& A, const Matrix& penalty) {
  return A.transpose() * A + penalty;
}

// Batch mixing update A = (X S^t)(S S^t + mu I)^{-1}.
Matrix batch_mixing_update(const Matrix& X, const Matrix& S, double mu) {
  const Matrix G = S * S.transpose() + mu * Matrix::Identity(S.rows(), S.rows());
  auto lu = invertible_lu(G, "mixing update");
  return (lu.solve(S * X.transpose())).transpose();
}

double frob(const Matrix& M) { return M.norm(); }

// Elementwise penalty derivative over a block; support violations become
// numeric_error with the sample index.
Matrix penalty_grad_block(const SourceLaw& law, const Matrix& S) {
  Matrix G(S.rows(), S.cols());
  for (Index t = 0; t < S.cols(); ++t)
    for (Index j = 0; j < S.rows(); ++j) {
      if (!in_support(law, S(j, t)))
        throw numeric_error("source outside the law's support at sample " + std::to_string(t),
                            static_cast<long>(t));
      G(j, t) = source_penalty_grad(law, S(j, t));
    }
  return G;
}

void clamp_to_support(const SourceLaw& law, Matrix& S) {
  if (law.family == LawFamily::Gamma) S = S.cwiseMax(1e-12);
}

// Inverts pen'(z) = v for the laws whose penalty derivative is monotone.
double penalty_grad_inverse(const SourceLaw& law, double v) {
  if (law.family == LawFamily::Gauss) return v / 2.0;
  if (law.family != LawFamily::SubGaussian && law.family != LawFamily::GaussMixture)
    throw unsupported_error("fixed point: the law's score is not invertible");
  if (law.family == LawFamily::GaussMixture && std::fabs(law.alpha) >= 1.0)
    throw unsupported_error("fixed point: GaussMixture needs |alpha| < 1 for a monotone score");

  const auto g = [&](double z) { return source_penalty_grad(law, z); };
  // Bracket the root, then bisect with Newton acceleration.
  double lo = -1.0, hi = 1.0;
  while (g(lo) > v) lo *= 2.0;
  while (g(hi) < v) hi *= 2.0;
  double z = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double gz = g(z);
    if (std::fabs(gz - v) < 1e-14 * (1.0 + std::fabs(v))) break;
    if (gz < v)
      lo = z;
    else
      hi = z;
    const double slope = source_penalty_hess(law, z);
    double step = slope > 0.0 ? z - (gz - v) / slope : 0.5 * (lo + hi);
    z = (step > lo && step < hi) ? step : 0.5 * (lo + hi);
  }
  return z;
}

// Inverts psi'(A) = W for the elementwise mixing priors.
Matrix psi_grad_inverse(const MixingPrior& prior, const Matrix& W) {
  switch (prior.kind) {
    case MixingPriorKind::Frobenius:
      return W / 2.0;
    case MixingPriorKind::IdentityProximity:
      if (W.rows() != W.cols())
        throw shape_error("fixed point: identity proximity needs a square A");
      return Matrix::Identity(W.rows(), W.cols()) + W / 2.0;
    case MixingPriorKind::Weighted: {
      if (!prior.weights) throw support_error("fixed point: Weighted needs a weight matrix");
      return (W.array() / (2.0 * prior.weights->array().square())).matrix();
    }
    default:
      throw unsupported_error("fixed point: prior gradient is not elementwise invertible");
  }
}

double apply_shrinkage(Shrinkage g, double threshold, double z) {
  switch (g) {
    case Shrinkage::TwoTanhMinusId:
      return 2.0 * std::tanh(z) - z;
    case Shrinkage::Tanh:
      return std::tanh(z);
    case Shrinkage::Identity:
      return z;
    case Shrinkage::SoftThreshold: {
      const double a = std::fabs(z) - threshold;
      return a > 0.0 ? (z > 0.0 ? a : -a) : 0.0;
    }
  }
  return z;  // unreachable
}

Index resolve_n_sources(const ObservationBlock& X, const EstimatorConfig& config) {
  if (config.n_sources > 0) return config.n_sources;
  if (config.init_A) return config.init_A->sources();
  if (config.temporal) return config.temporal->alphas.size();
  return X.sensors();
}

Matrix init_mixing(Index m, Index n, const EstimatorConfig& config) {
  if (config.init_A) {
    if (config.init_A->sensors() != m)
      throw shape_error("run_estimator: init_A row count must match the sensor count");
    return config.init_A->data;
  }
  Matrix A = Matrix::Zero(m, n);
  for (Index i = 0; i < std::min(m, n); ++i) A(i, i) = 1.0;
  GaussianRng rng(config.init_seed);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i) A(i, j) += 0.1 * rng();
  return A;
}

void validate_config(const EstimatorConfig& config) {
  if (config.max_iters < 1) throw support_error("EstimatorConfig: max_iters must be >= 1");
  if (!(config.tol > 0.0)) throw support_error("EstimatorConfig: tol must be > 0");
  if (config.hyper.lambda < 0.0 || config.hyper.mu < 0.0)
    throw support_error("EstimatorConfig: lambda and mu must be >= 0");
  if (!(config.hyper.sigma_eps > 0.0))
    throw support_error("EstimatorConfig: sigma_eps must be > 0");
}

// A Weighted prior without an explicit matrix gets the neighbor weights, so
// the step and the criterion see the same prior.
MixingPrior materialize_prior(const MixingPrior& prior, Index m, Index n) {
  MixingPrior out = prior;
  if (out.kind == MixingPriorKind::Weighted && !out.weights)
    out.weights = neighbor_weights(m, n);
  return out;
}

// Ridge separator (A^t A + lambda I)^{-1} A^t, the linear read-out
// associated with a mixing estimate.
Matrix ridge_separator(const Matrix& A, double lambda) {
  const Matrix M = gram_plus(A, lambda * Matrix::Identity(A.cols(), A.cols()));
  auto lu = invertible_lu(M, "ridge separator");
  return lu.solve(A.transpose());
}

}  // namespace

// ---------------------------------------------------------------------------
// Source penalty plumbing
// ---------------------------------------------------------------------------

double source_penalty(const SourceLaw& law, double z) {
  if (law.family == LawFamily::Gauss) {
    if (!(law.alpha > 0.0)) throw support_error("SourceLaw: alpha must be > 0");
    return z * z;
  }
  return -2.0 * log_density(law, z);
}

double source_penalty_grad(const SourceLaw& law, double z) {
  if (law.family == LawFamily::Gauss) {
    if (!(law.alpha > 0.0)) throw support_error("SourceLaw: alpha must be > 0");
    return 2.0 * z;
  }
  return 2.0 * score_phi(law, z);
}

double source_penalty_hess(const SourceLaw& law, double z) {
  if (law.family == LawFamily::Gauss) return 2.0;
  return 2.0 * score_phi_prime(law, z);
}

// ---------------------------------------------------------------------------
// Separating-matrix iterations
// ---------------------------------------------------------------------------

SeparatingMatrix ml_relative_gradient_step(const SeparatingMatrix& B, const ObservationBlock& X,
                                           const SourceLaw& law, double gamma) {
  if (B.sensors() != X.sensors())
    throw shape_error("ml_relative_gradient_step: B columns and X rows disagree");
  if (!(gamma > 0.0)) throw support_error("ml_relative_gradient_step: gamma must be > 0");
  const Index T = X.samples();
  Matrix H = Matrix::Zero(B.sources(), B.sources());
  for (Index t = 0; t < T; ++t) {
    const Vector y = B.data * X.data.col(t);
    H += score_column(law, y, t) * y.transpose();
  }
  H /= static_cast<double>(T);
  H -= Matrix::Identity(H.rows(), H.cols());
  return SeparatingMatrix(B.data - gamma * H);
}

Matrix whiteness_constrained_H(const SourceBlock& Y, const SourceLaw& law, double alpha,
                               double beta) {
  const Index n = Y.sources(), T = Y.samples();
  Matrix H = Matrix::Zero(n, n);
  for (Index t = 0; t < T; ++t) {
    const Vector y = Y.data.col(t);
    H += alpha * (y * y.transpose() - Matrix::Identity(n, n));
    if (beta != 0.0) {
      const Vector phi = score_column(law, y, t);
      H += beta * (phi * y.transpose() + y * phi.transpose());
    }
  }
  return H / static_cast<double>(T);
}

// ---------------------------------------------------------------------------
// Joint MAP updates
// ---------------------------------------------------------------------------

std::pair<SourceBlock, MixingMatrix> jmap_coordinate_update(
    const MixingMatrix& A, const SourceBlock& S, const ObservationBlock& X,
    const HyperParams& hyper, CoordinateVariant variant, const std::optional<Matrix>& weights) {
  check_pair_shapes(A, S, X);
  const Index m = X.sensors(), n = S.sources(), T = X.samples();
  Matrix a = A.data;
  Matrix s = S.data;
  Matrix w;
  if (variant == CoordinateVariant::Weighted)
    w = weights ? *weights : neighbor_weights(m, n);

  for (Index t = 0; t < T; ++t) {
    const Vector x = X.data.col(t);
    Vector sc = s.col(t);
    for (Index j = 0; j < n; ++j) {
      // Residual with source j's own contribution removed.
      const Vector resid = x - a * sc + a.col(j) * sc(j);
      const double denom = hyper.lambda + a.col(j).squaredNorm();
      if (denom < 1e-300)
        throw solve_error("jmap_coordinate_update: zero denominator in the source step");
      sc(j) = a.col(j).dot(resid) / denom;
    }
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < n; ++j) {
        const double xhat = a.row(i).dot(sc) - a(i, j) * sc(j);
        double denom = sc(j) * sc(j) + hyper.mu;
        if (variant == CoordinateVariant::Pa2 && i != j) denom = sc(j) * sc(j) - hyper.mu;
        if (variant == CoordinateVariant::Weighted) denom *= w(i, j) * w(i, j);
        if (std::fabs(denom) < 1e-300)
          throw solve_error("jmap_coordinate_update: zero denominator in the mixing step");
        a(i, j) = sc(j) * (x(i) - xhat) / denom;
      }
    }
    s.col(t) = sc;
  }
  return {SourceBlock(std::move(s), S.sample_period), MixingMatrix(std::move(a))};
}

std::pair<SourceBlock, MixingMatrix> jmap_block_update(const MixingMatrix& A,
                                                       const SourceBlock& S,
                                                       const ObservationBlock& X,
                                                       const HyperParams& hyper,
                                                       bool per_sample_A) {
  check_pair_shapes(A, S, X);
  const Index n = A.sources();
  const Matrix M = gram_plus(A.data, hyper.lambda * Matrix::Identity(n, n));
  auto lu = invertible_lu(M, "jmap_block_update");
  Matrix Snew = lu.solve(A.data.transpose() * X.data);

  Matrix Anew;
  if (per_sample_A) {
    for (Index t = 0; t < X.samples(); ++t) {
      const Vector s = Snew.col(t);
      const Matrix G = s * s.transpose() + hyper.mu * Matrix::Identity(n, n);
      auto lug = invertible_lu(G, "jmap_block_update");
      Anew = X.data.col(t) * lug.solve(s).transpose();
    }
  } else {
    Anew = batch_mixing_update(X.data, Snew, hyper.mu);
  }
  return {SourceBlock(std::move(Snew), S.sample_period), MixingMatrix(std::move(Anew))};
}

std::pair<SourceBlock, MixingMatrix> jmap_spatial_block_update(const MixingMatrix& A,
                                                               const SourceBlock& S,
                                                               const ObservationBlock& X,
                                                               const HyperParams& hyper,
                                                               const SpatialPriorSpec& spatial) {
  check_pair_shapes(A, S, X);
  const Matrix D = build_spatial_D(A.sources(), spatial.boundary);
  const Matrix M = gram_plus(A.data, hyper.lambda * (D.transpose() * D));
  auto lu = invertible_lu(M, "jmap_spatial_block_update");
  Matrix Snew = lu.solve(A.data.transpose() * X.data);
  Matrix Anew = batch_mixing_update(X.data, Snew, hyper.mu);
  return {SourceBlock(std::move(Snew), S.sample_period), MixingMatrix(std::move(Anew))};
}

std::pair<SourceBlock, MixingMatrix> jmap_temporal_update(const MixingMatrix& A,
                                                          const SourceBlock& S,
                                                          const ObservationBlock& X,
                                                          const HyperParams& hyper,
                                                          const TemporalPriorSpec& temporal) {
  check_pair_shapes(A, S, X);
  const Index n = A.sources(), T = X.samples();
  if (temporal.alphas.size() != n)
    throw shape_error("jmap_temporal_update: one alpha per source required");
  const Vector lj = temporal.alphas * (hyper.sigma_eps * hyper.sigma_eps);
  const Matrix M = gram_plus(A.data, hyper.lambda * Matrix::Identity(n, n));
  auto lu = invertible_lu(M, "jmap_temporal_update");

  Matrix Snew(n, T);
  Vector prev = Vector::Zero(n);  // s(0): the prior mean
  for (Index t = 0; t < T; ++t) {
    const Vector rhs = lj.asDiagonal() * prev + A.data.transpose() * X.data.col(t);
    prev = lu.solve(rhs);
    Snew.col(t) = prev;
  }
  Matrix Anew = batch_mixing_update(X.data, Snew, hyper.mu);
  return {SourceBlock(std::move(Snew), S.sample_period), MixingMatrix(std::move(Anew))};
}

double joint_criterion(const MixingMatrix& A, const SourceBlock& S, const ObservationBlock& X,
                       const HyperParams& hyper, const SourceLaw& law,
                       const MixingPrior& prior) {
  check_pair_shapes(A, S, X);
  double pen = 0.0;
  for (Index t = 0; t < S.samples(); ++t)
    for (Index j = 0; j < S.sources(); ++j) {
      if (!in_support(law, S.data(j, t)))
        throw numeric_error("joint_criterion: source outside the law's support at sample " +
                                std::to_string(t),
                            static_cast<long>(t));
      pen += source_penalty(law, S.data(j, t));
    }
  return (X.data - A.data * S.data).squaredNorm() + hyper.lambda * pen +
         hyper.mu * mixing_penalty(prior, A);
}

std::pair<SourceBlock, MixingMatrix> jmap_gradient_step(const MixingMatrix& A,
                                                        const SourceBlock& S,
                                                        const ObservationBlock& X,
                                                        const HyperParams& hyper,
                                                        const SourceLaw& law,
                                                        const MixingPrior& prior,
                                                        bool backtrack) {
  check_pair_shapes(A, S, X);
  const Matrix R = X.data - A.data * S.data;
  const Matrix grad_S = -2.0 * A.data.transpose() * R + hyper.lambda * penalty_grad_block(law, S.data);
  const Matrix grad_A = -2.0 * R * S.data.transpose() + hyper.mu * mixing_prior_gradient(prior, A);
  if (!grad_S.allFinite() || !grad_A.allFinite())
    throw numeric_error("jmap_gradient_step: non-finite gradient");

  double a_step = hyper.alpha_step, b_step = hyper.beta_step;
  Matrix Snew = S.data - a_step * grad_S;
  Matrix Anew = A.data - b_step * grad_A;
  clamp_to_support(law, Snew);
  if (backtrack) {
    const double J0 = joint_criterion(A, S, X, hyper, law, prior);
    for (int tries = 0; tries < 30; ++tries) {
      const double J1 = joint_criterion(MixingMatrix(Anew),
                                        SourceBlock(Snew, S.sample_period), X, hyper, law, prior);
      if (J1 <= J0 + 1e-12 * (1.0 + std::fabs(J0))) break;
      a_step *= 0.5;
      b_step *= 0.5;
      Snew = S.data - a_step * grad_S;
      Anew = A.data - b_step * grad_A;
      clamp_to_support(law, Snew);
    }
  }
  return {SourceBlock(std::move(Snew), S.sample_period), MixingMatrix(std::move(Anew))};
}

std::pair<SourceBlock, MixingMatrix> jmap_fixed_point_step(const MixingMatrix& A,
                                                           const SourceBlock& S,
                                                           const ObservationBlock& X,
                                                           const HyperParams& hyper,
                                                           const SourceLaw& law,
                                                           const MixingPrior& prior) {
  check_pair_shapes(A, S, X);
  if (!(hyper.lambda > 0.0) || !(hyper.mu > 0.0))
    throw support_error("jmap_fixed_point_step: lambda and mu must be > 0");
  const Matrix R = X.data - A.data * S.data;
  const Matrix V = (2.0 / hyper.lambda) * (A.data.transpose() * R);
  Matrix Snew(S.sources(), S.samples());
  for (Index t = 0; t < S.samples(); ++t)
    for (Index j = 0; j < S.sources(); ++j)
      Snew(j, t) = penalty_grad_inverse(law, V(j, t));
  const Matrix W = (2.0 / hyper.mu) * (R * S.data.transpose());
  Matrix Anew = psi_grad_inverse(prior, W);
  return {SourceBlock(std::move(Snew), S.sample_period), MixingMatrix(std::move(Anew))};
}

std::pair<double, double> jmap_fixed_point_residuals(const MixingMatrix& A, const SourceBlock& S,
                                                     const ObservationBlock& X,
                                                     const HyperParams& hyper,
                                                     const SourceLaw& law,
                                                     const MixingPrior& prior) {
  check_pair_shapes(A, S, X);
  const Matrix R = X.data - A.data * S.data;
  Matrix pg(S.sources(), S.samples());
  for (Index t = 0; t < S.samples(); ++t)
    for (Index j = 0; j < S.sources(); ++j)
      pg(j, t) = source_penalty_grad(law, S.data(j, t));
  const double rs =
      (pg - (2.0 / hyper.lambda) * (A.data.transpose() * R)).cwiseAbs().maxCoeff();
  const double ra = (mixing_prior_gradient(prior, A) -
                     (2.0 / hyper.mu) * (R * S.data.transpose()))
                        .cwiseAbs()
                        .maxCoeff();
  return {rs, ra};
}

// ---------------------------------------------------------------------------
// Marginal estimation
// ---------------------------------------------------------------------------

namespace {

struct EvidencePieces {
  Eigen::LLT<Matrix> llt;  // of A^t A + lambda I
  double half_logdet = 0.0;
};

EvidencePieces evidence_pieces(const Matrix& A, double lambda) {
  EvidencePieces p;
  const Matrix M = gram_plus(A, lambda * Matrix::Identity(A.cols(), A.cols()));
  p.llt.compute(M);
  if (p.llt.info() != Eigen::Success)
    throw solve_error("gaussian evidence: factorization failed");
  p.half_logdet = Matrix(p.llt.matrixL()).diagonal().array().log().sum();
  return p;
}

double evidence_quad(const EvidencePieces& p, const Matrix& A, const Vector& x) {
  const Vector shat = p.llt.solve(A.transpose() * x);
  return x.dot(x - A * shat);
}

}  // namespace

double gaussian_evidence_logpdf(const MixingMatrix& A, const Vector& x,
                                const HyperParams& hyper) {
  if (!(hyper.lambda > 0.0)) throw support_error("gaussian_evidence_logpdf: lambda must be > 0");
  if (!(hyper.sigma_eps > 0.0))
    throw support_error("gaussian_evidence_logpdf: sigma_eps must be > 0");
  if (x.size() != A.sensors())
    throw shape_error("gaussian_evidence_logpdf: x length must match the sensor count");
  const auto p = evidence_pieces(A.data, hyper.lambda);
  const double s2 = hyper.sigma_eps * hyper.sigma_eps;
  return -p.half_logdet - evidence_quad(p, A.data, x) / (2.0 * s2) -
         hyper.mu * A.data.squaredNorm() / (2.0 * s2);
}

double marginal_map_objective(const MixingMatrix& A, const ObservationBlock& X,
                              const HyperParams& hyper, const MixingPrior& prior) {
  if (!(hyper.lambda > 0.0)) throw support_error("marginal_map_objective: lambda must be > 0");
  if (A.sensors() != X.sensors())
    throw shape_error("marginal_map_objective: A rows and X rows disagree");
  const auto p = evidence_pieces(A.data, hyper.lambda);
  const double s2 = hyper.sigma_eps * hyper.sigma_eps;
  const Index T = X.samples();
  double acc = 0.0;
  for (Index t = 0; t < T; ++t) acc += evidence_quad(p, A.data, X.data.col(t));
  return -p.half_logdet - acc / (2.0 * s2 * static_cast<double>(T)) -
         hyper.mu * mixing_penalty(prior, A) / (2.0 * s2);
}

Matrix marginal_map_gradient(const MixingMatrix& A, const ObservationBlock& X,
                             const HyperParams& hyper, const MixingPrior& prior) {
  if (!(hyper.lambda > 0.0)) throw support_error("marginal_map_gradient: lambda must be > 0");
  if (A.sensors() != X.sensors())
    throw shape_error("marginal_map_gradient: A rows and X rows disagree");
  const auto p = evidence_pieces(A.data, hyper.lambda);
  const double s2 = hyper.sigma_eps * hyper.sigma_eps;
  const double T = static_cast<double>(X.samples());
  // d(-1/2 ln det)/dA = -A M^{-1}; the data term is the exact derivative of
  // the quadratic through shat's dependence on A.
  const Matrix AMinv = p.llt.solve(A.data.transpose()).transpose();
  const Matrix Shat = p.llt.solve(A.data.transpose() * X.data);
  const Matrix R = X.data - A.data * Shat;
  return -AMinv + (R * Shat.transpose()) / (s2 * T) -
         hyper.mu * mixing_prior_gradient(prior, A) / (2.0 * s2);
}

MixingMatrix marginal_map_A_step(const MixingMatrix& A, const ObservationBlock& X,
                                 const HyperParams& hyper, const MixingPrior& prior,
                                 bool backtrack) {
  const Matrix G = marginal_map_gradient(A, X, hyper, prior);
  double step = hyper.beta_step;
  Matrix Anew = A.data + step * G;
  if (backtrack) {
    const double f0 = marginal_map_objective(A, X, hyper, prior);
    for (int tries = 0; tries < 30; ++tries) {
      const double f1 = marginal_map_objective(MixingMatrix(Anew), X, hyper, prior);
      if (f1 >= f0 - 1e-12 * (1.0 + std::fabs(f0))) return MixingMatrix(std::move(Anew));
      step *= 0.5;
      Anew = A.data + step * G;
    }
    return A;  // no ascent found at any step size
  }
  return MixingMatrix(std::move(Anew));
}

double marginal_s_logpdf(const Vector& s_col, const Vector& x_col, const HyperParams& hyper) {
  if (!(hyper.mu > 0.0)) throw support_error("marginal_s_logpdf: mu must be > 0");
  if (!(hyper.sigma_eps > 0.0)) throw support_error("marginal_s_logpdf: sigma_eps must be > 0");
  const double n = static_cast<double>(s_col.size());
  const double m = static_cast<double>(x_col.size());
  const double sts = s_col.squaredNorm();
  const double s2 = hyper.sigma_eps * hyper.sigma_eps;
  // det(S^t S + mu I) = det(s s^t + mu I)^m = [mu^(n-1) (s^t s + mu)]^m and
  // x - S ahat = mu/(s^t s + mu) x, both from the rank-one block structure.
  const double logdet = m * ((n - 1.0) * std::log(hyper.mu) + std::log(sts + hyper.mu));
  const double quad = hyper.mu * x_col.squaredNorm() / (sts + hyper.mu);
  return -0.5 * logdet - quad / (2.0 * s2) - hyper.lambda * sts / (2.0 * s2);
}

namespace {

// Minimizes J1(s) = ||x - A s||^2 + lambda sum_j pen(s_j) for one column by
// descent with halving, starting from the ridge solution (exact for the
// Gauss law, so no iterations happen there).
Vector minimize_column_criterion(const Matrix& A, const Vector& x, double lambda,
                                 const SourceLaw& law, double tol) {
  const auto p = evidence_pieces(A, lambda);
  Vector s = p.llt.solve(A.transpose() * x);
  Matrix scol = s;
  clamp_to_support(law, scol);
  s = scol.col(0);

  const auto J1 = [&](const Vector& v) {
    double pen = 0.0;
    for (Index j = 0; j < v.size(); ++j) pen += source_penalty(law, v(j));
    return (x - A * v).squaredNorm() + lambda * pen;
  };
  const auto grad = [&](const Vector& v) {
    Vector g = -2.0 * A.transpose() * (x - A * v);
    for (Index j = 0; j < v.size(); ++j) g(j) += lambda * source_penalty_grad(law, v(j));
    return g;
  };

  double step = 0.1;
  double fs = J1(s);
  for (int it = 0; it < 500; ++it) {
    const Vector g = grad(s);
    if (g.cwiseAbs().maxCoeff() < tol) break;
    bool moved = false;
    for (int h = 0; h < 60; ++h) {
      Vector cand = s - step * g;
      Matrix candm = cand;
      clamp_to_support(law, candm);
      cand = candm.col(0);
      const double fc = J1(cand);
      if (fc < fs) {
        s = cand;
        fs = fc;
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return s;
}

}  // namespace

double laplace_log_marginal(const MixingMatrix& A, const ObservationBlock& X,
                            const HyperParams& hyper, const SourceLaw& law,
                            const MixingPrior& prior) {
  if (!(hyper.lambda > 0.0)) throw support_error("laplace_log_marginal: lambda must be > 0");
  if (A.sensors() != X.sensors())
    throw shape_error("laplace_log_marginal: A rows and X rows disagree");
  const double s2 = hyper.sigma_eps * hyper.sigma_eps;
  const Index n = A.sources(), T = X.samples();
  double acc = 0.0;
  for (Index t = 0; t < T; ++t) {
    const Vector x = X.data.col(t);
    const Vector shat = minimize_column_criterion(A.data, x, hyper.lambda, law, 1e-10);
    if (law.family == LawFamily::Laplace)
      for (Index j = 0; j < n; ++j)
        if (std::fabs(shat(j)) < 1e-8)
          throw numeric_error(
              "laplace_log_marginal: penalty not twice differentiable at the minimizer");
    Matrix H = 2.0 * A.data.transpose() * A.data;
    for (Index j = 0; j < n; ++j)
      H(j, j) += hyper.lambda * source_penalty_hess(law, shat(j));
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success)
      throw numeric_error("laplace_log_marginal: source Hessian is not positive definite");
    const double half_logdet = Matrix(llt.matrixL()).diagonal().array().log().sum();
    double pen = 0.0;
    for (Index j = 0; j < n; ++j) pen += source_penalty(law, shat(j));
    const double J1 = (x - A.data * shat).squaredNorm() + hyper.lambda * pen;
    acc += -half_logdet - J1 / (2.0 * s2);
  }
  return acc / static_cast<double>(T) - hyper.mu * mixing_penalty(prior, A) / (2.0 * s2);
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

RunResult used_alg_run(const ObservationBlock& X, const EstimatorConfig& config) {
  validate_config(config);
  const Index m = X.sensors(), T = X.samples();
  const Index n = resolve_n_sources(X, config);
  const HyperParams& hp = config.hyper;
  const double s2 = hp.sigma_eps * hp.sigma_eps;
  const double xnorm = X.data.norm();

  Matrix A = init_mixing(m, n, config);
  Matrix S = Matrix::Zero(n, T);
  const MixingPrior prior = materialize_prior(config.mixing_prior, m, n);
  RunResult result;

  for (int k = 0; k < config.max_iters; ++k) {
    const Matrix M = gram_plus(A, hp.lambda * Matrix::Identity(n, n));
    if (!M.allFinite())
      throw divergence_error("used_alg_run: iteration diverged", result.criterion_trace);
    auto lu = invertible_lu(M, "used_alg_run");
    const Matrix Y = lu.solve(A.transpose() * X.data);
    S = Y.unaryExpr([&](double z) {
      return apply_shrinkage(config.shrinkage, config.shrink_threshold, z);
    });

    const Matrix R = X.data - A * S;
    const double crit = xnorm > 0.0 ? R.norm() / xnorm : R.norm();
    result.criterion_trace.push_back(crit);
    ++result.iters_run;
    if (!std::isfinite(crit) || crit > kDivergenceCap)
      throw divergence_error("used_alg_run: iteration diverged", result.criterion_trace);

    // Ascent direction with the data term summed over samples, so it
    // dominates the determinant and prior terms at realistic T.
    const Matrix AMinv = lu.solve(A.transpose()).transpose();
    const Matrix direction = -AMinv + (R * S.transpose()) / s2 -
                             hp.mu * mixing_prior_gradient(prior, MixingMatrix(A)) / (2.0 * s2);
    const Matrix Anext = A + hp.beta_step * direction;
    if (!Anext.allFinite())
      throw divergence_error("used_alg_run: iteration diverged", result.criterion_trace);

    const double dA = frob(Anext - A);
    const double scale = 1.0 + frob(A);
    A = Anext;
    if (dA < config.tol * scale) {
      result.converged = true;
      break;
    }
  }

  result.A_hat = MixingMatrix(A);
  result.S_hat = SourceBlock(S);
  result.B_hat = SeparatingMatrix(ridge_separator(A, hp.lambda));
  return result;
}

RunResult run_estimator(const ObservationBlock& X, const EstimatorConfig& config) {
  validate_config(config);
  if (config.algorithm == Algorithm::UsedAlg) return used_alg_run(X, config);

  const Index m = X.sensors(), T = X.samples();
  const HyperParams& hp = config.hyper;
  RunResult result;

  // Separating-matrix iterations: square, invertible mixing assumed.
  if (config.algorithm == Algorithm::MlRelativeGradient ||
      config.algorithm == Algorithm::WhitenessConstrained) {
    // n = m in this regime; a supplied init_A seeds B through its inverse.
    Matrix B;
    if (config.init_A) {
      if (config.init_A->sensors() != m || config.init_A->sources() != m)
        throw shape_error("run_estimator: separating iterations need a square init_A");
      B = invertible_lu(config.init_A->data, "run_estimator init")
              .solve(Matrix::Identity(m, m));
    } else {
      B = init_mixing(m, m, config);
    }
    for (int k = 0; k < config.max_iters; ++k) {
      Matrix Bnext;
      if (config.algorithm == Algorithm::MlRelativeGradient) {
        Bnext = ml_relative_gradient_step(SeparatingMatrix(B), X, config.source_law, hp.gamma)
                    .data;
      } else {
        const SourceBlock Y(B * X.data);
        const Matrix H =
            whiteness_constrained_H(Y, config.source_law, hp.alpha_step, hp.beta_step);
        Bnext = B - hp.gamma * H;
      }
      // Criterion: average negative log-likelihood of the square model.
      const Matrix Y = Bnext * X.data;
      double loglik = 0.0;
      for (Index t = 0; t < T; ++t)
        for (Index i = 0; i < m; ++i) loglik += log_density(config.source_law, Y(i, t));
      const double nll = -std::log(std::fabs(Bnext.determinant())) -
                         loglik / static_cast<double>(T);
      result.criterion_trace.push_back(nll);
      ++result.iters_run;
      if (!Bnext.allFinite() || std::fabs(nll) > kDivergenceCap)
        throw divergence_error("run_estimator: iteration diverged", result.criterion_trace);
      const double dB = frob(Bnext - B);
      const double scale = 1.0 + frob(B);
      B = Bnext;
      if (dB < config.tol * scale) {
        result.converged = true;
        break;
      }
    }
    result.B_hat = SeparatingMatrix(B);
    result.S_hat = SourceBlock(B * X.data);
    result.A_hat = MixingMatrix(B.completeOrthogonalDecomposition().pseudoInverse());
    return result;
  }

  // Mixing-matrix iterations.
  const Index n = resolve_n_sources(X, config);
  Matrix A = init_mixing(m, n, config);
  SourceBlock S(Matrix::Zero(n, T));
  const MixingPrior prior = materialize_prior(config.mixing_prior, m, n);

  const auto step = [&](const MixingMatrix& Acur,
                        const SourceBlock& Scur) -> std::pair<SourceBlock, MixingMatrix> {
    switch (config.algorithm) {
      case Algorithm::JmapCoordinate: {
        CoordinateVariant variant;
        switch (prior.kind) {
          case MixingPriorKind::Frobenius:
            variant = CoordinateVariant::Pa1;
            break;
          case MixingPriorKind::IdentityProximity:
            variant = CoordinateVariant::Pa2;
            break;
          case MixingPriorKind::Weighted:
            variant = CoordinateVariant::Weighted;
            break;
          default:
            throw unsupported_error(
                "JmapCoordinate: closed forms exist for Frobenius, IdentityProximity and "
                "Weighted priors only");
        }
        return jmap_coordinate_update(Acur, Scur, X, hp, variant, prior.weights);
      }
      case Algorithm::JmapBlock:
        return jmap_block_update(Acur, Scur, X, hp, config.per_sample_A);
      case Algorithm::JmapSpatial:
        return jmap_spatial_block_update(Acur, Scur, X, hp,
                                         config.spatial.value_or(SpatialPriorSpec{}));
      case Algorithm::JmapTemporal:
        if (!config.temporal)
          throw unsupported_error("JmapTemporal: temporal prior spec required");
        return jmap_temporal_update(Acur, Scur, X, hp, *config.temporal);
      case Algorithm::JmapGradient:
        return jmap_gradient_step(Acur, Scur, X, hp, config.source_law, prior,
                                  config.backtracking);
      case Algorithm::JmapFixedPoint:
        return jmap_fixed_point_step(Acur, Scur, X, hp, config.source_law, prior);
      default:
        throw unsupported_error("run_estimator: unhandled algorithm");
    }
  };

  if (config.algorithm == Algorithm::MarginalMapA) {
    for (int k = 0; k < config.max_iters; ++k) {
      const MixingMatrix Anext =
          marginal_map_A_step(MixingMatrix(A), X, hp, prior, config.backtracking);
      const double crit = -marginal_map_objective(Anext, X, hp, prior);
      result.criterion_trace.push_back(crit);
      ++result.iters_run;
      if (!Anext.data.allFinite() || !std::isfinite(crit) || crit > kDivergenceCap)
        throw divergence_error("run_estimator: iteration diverged", result.criterion_trace);
      const double dA = frob(Anext.data - A);
      const double scale = 1.0 + frob(A);
      A = Anext.data;
      if (dA < config.tol * scale) {
        result.converged = true;
        break;
      }
    }
    const Matrix Bsep = ridge_separator(A, hp.lambda);
    result.A_hat = MixingMatrix(A);
    result.B_hat = SeparatingMatrix(Bsep);
    result.S_hat = SourceBlock(Bsep * X.data);
    return result;
  }

  // Each variant is traced against the criterion its updates actually
  // descend: the spatial variant penalizes ||D s||^2 instead of ||s||^2 and
  // the temporal one adds the weighted squared-difference term.
  const auto run_criterion = [&](const MixingMatrix& Am, const SourceBlock& Sm) {
    if (config.algorithm == Algorithm::JmapSpatial) {
      const SpatialPriorSpec sp = config.spatial.value_or(SpatialPriorSpec{});
      const Matrix D = build_spatial_D(Sm.sources(), sp.boundary);
      return (X.data - Am.data * Sm.data).squaredNorm() +
             hp.lambda * (D * Sm.data).squaredNorm() +
             hp.mu * mixing_penalty(prior, Am);
    }
    double crit = joint_criterion(Am, Sm, X, hp, config.source_law, prior);
    if (config.algorithm == Algorithm::JmapTemporal && Sm.samples() >= 2)
      crit += hp.sigma_eps * hp.sigma_eps * temporal_penalty(Sm, *config.temporal);
    return crit;
  };

  for (int k = 0; k < config.max_iters; ++k) {
    auto [Snext, Anext] = step(MixingMatrix(A), S);
    const double crit = run_criterion(Anext, Snext);
    result.criterion_trace.push_back(crit);
    ++result.iters_run;
    if (!Anext.data.allFinite() || !std::isfinite(crit) || crit > kDivergenceCap)
      throw divergence_error("run_estimator: iteration diverged", result.criterion_trace);
    const double dA = frob(Anext.data - A);
    const double scale = 1.0 + frob(A);
    A = Anext.data;
    S = std::move(Snext);
    if (dA < config.tol * scale) {
      result.converged = true;
      break;
    }
  }
  result.A_hat = MixingMatrix(A);
  result.B_hat = SeparatingMatrix(ridge_separator(A, hp.lambda));
  result.S_hat = std::move(S);
  return result;
}

}  // namespace bss
