#include "bss/oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "bss/errors.hpp"

namespace bss::oracle {
namespace {

constexpr int kMaxDim = 6;
constexpr double kPi = 3.14159265358979323846;

void guard_dim(std::size_t d, const char* what) {
  if (d == 0 || d > kMaxDim)
    throw support_error(std::string(what) + ": oracle runs at dense scale only (1..6)");
}

}  // namespace

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, Vec x0, DiffSpec spec) {
  if (!(spec.h > 0.0)) throw support_error("finite_diff_gradient: h must be positive");
  Vec g(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double xi = x0[i];
    x0[i] = xi + spec.h;
    const double fp = f(x0);
    x0[i] = xi - spec.h;
    const double fm = f(x0);
    x0[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw numeric_error("finite_diff_gradient: non-finite function value",
                          static_cast<long>(i));
    g[i] = (fp - fm) / (2.0 * spec.h);
  }
  return g;
}

Mat matmul(const Mat& A, const Mat& B) {
  const std::size_t n = A.size(), k = B.size(), m = B.empty() ? 0 : B[0].size();
  Mat C(n, Vec(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t j = 0; j < m; ++j) C[i][j] += A[i][l] * B[l][j];
  return C;
}

Vec matvec(const Mat& A, const Vec& x) {
  Vec y(A.size(), 0.0);
  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += A[i][j] * x[j];
  return y;
}

Mat transpose(const Mat& A) {
  const std::size_t n = A.size(), m = A.empty() ? 0 : A[0].size();
  Mat T(m, Vec(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) T[j][i] = A[i][j];
  return T;
}

Mat identity(int n) {
  Mat I(n, Vec(n, 0.0));
  for (int i = 0; i < n; ++i) I[i][i] = 1.0;
  return I;
}

std::pair<double, Vec> logdet_and_solve(Mat A, Vec b) {
  const std::size_t n = A.size();
  if (n == 0 || b.size() != n) throw shape_error("logdet_and_solve: bad shapes");
  double logdet = 0.0;
  double detsign = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
    if (std::fabs(A[piv][col]) < 1e-300)
      throw solve_error("logdet_and_solve: singular matrix");
    if (piv != col) {
      std::swap(A[piv], A[col]);
      std::swap(b[piv], b[col]);
      detsign = -detsign;
    }
    logdet += std::log(std::fabs(A[col][col]));
    detsign *= (A[col][col] < 0.0) ? -1.0 : 1.0;
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = A[r][col] / A[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
      b[r] -= f * b[col];
    }
  }
  (void)detsign;  // covariances are SPD; log|det| is what callers need
  Vec y(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= A[i][j] * y[j];
    y[i] = s / A[i][i];
  }
  return {logdet, y};
}

double dense_gaussian_marginal(const Mat& A, const Vec& x, double lambda, double sigma_eps) {
  guard_dim(A.size(), "dense_gaussian_marginal");
  guard_dim(A[0].size(), "dense_gaussian_marginal");
  if (x.size() != A.size()) throw shape_error("dense_gaussian_marginal: x size mismatch");
  if (!(lambda > 0.0) || !(sigma_eps > 0.0))
    throw support_error("dense_gaussian_marginal: lambda and sigma_eps must be positive");

  const double sigma_s2 = sigma_eps * sigma_eps / lambda;
  const std::size_t m = A.size();
  Mat cov(m, Vec(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double aij = 0.0;
      for (std::size_t k = 0; k < A[0].size(); ++k) aij += A[i][k] * A[j][k];
      cov[i][j] = sigma_s2 * aij;
    }
    cov[i][i] += sigma_eps * sigma_eps;
  }
  auto [logdet, y] = logdet_and_solve(cov, x);
  double quad = 0.0;
  for (std::size_t i = 0; i < m; ++i) quad += x[i] * y[i];
  return -0.5 * (logdet + quad + static_cast<double>(m) * std::log(2.0 * kPi));
}

Mat dense_blocktoeplitz_S(const Vec& s, int m) {
  guard_dim(s.size(), "dense_blocktoeplitz_S");
  guard_dim(static_cast<std::size_t>(m), "dense_blocktoeplitz_S");
  const int n = static_cast<int>(s.size());
  Mat S(m, Vec(static_cast<std::size_t>(m) * n, 0.0));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) S[i][static_cast<std::size_t>(i) * n + j] = s[j];
  return S;
}

}  // namespace bss::oracle
