#pragma once

#include <functional>
#include <vector>

namespace bss::oracle {

// Brute-force validators, kept deliberately loop-based and independent of
// the Eigen-backed modules so they can arbitrate disagreements. Dense scale
// only: dimensions <= 6.

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

struct DiffSpec {
  double h = 1e-6;  // central difference half-width
};

/// Central finite-difference gradient of f at x0.
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, Vec x0, DiffSpec spec = {});

/// Exact log-density of x under the linear-Gaussian model x = A s + e with
/// s ~ N(0, sigma_s^2 I), e ~ N(0, sigma_eps^2 I) and
/// sigma_s^2 = sigma_eps^2 / lambda, evaluated by direct determinant/solve
/// on the dense covariance sigma_s^2 A A^t + sigma_eps^2 I.
double dense_gaussian_marginal(const Mat& A, const Vec& x, double lambda, double sigma_eps);

/// Materializes the m x (m n) matrix with s^t repeated down the block
/// diagonal, so that S * a == A * s when a stacks the rows of A.
Mat dense_blocktoeplitz_S(const Vec& s, int m);

// Loop-based dense helpers (exposed for tests that build their own checks).
Mat matmul(const Mat& A, const Mat& B);
Vec matvec(const Mat& A, const Vec& x);
Mat transpose(const Mat& A);
Mat identity(int n);

/// LU with partial pivoting; returns {log|det A|, solution of A y = b}.
/// Throws on a singular system.
std::pair<double, Vec> logdet_and_solve(Mat A, Vec b);

}  // namespace bss::oracle
