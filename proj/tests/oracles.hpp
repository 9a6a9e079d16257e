#pragma once
// Independent reference computations used by the tests. Nothing here calls
// into the library's numerical kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

struct Node1 {
  double x, w;
};

/// Gauss-Legendre rule on [-1, 1] by the Golub-Welsch eigenvalue method.
inline std::vector<Node1> gauss_legendre(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  std::vector<Node1> out;
  for (int k = 0; k < n; ++k) {
    const double v = es.eigenvectors()(0, k);
    out.push_back({es.eigenvalues()[k], 2.0 * v * v});
  }
  return out;
}

struct TriNode {
  std::array<double, 3> lambda;
  double w;  // weights sum to 1
};

/// Duffy-collapsed tensor Gauss rule with n x n points; exact for total
/// degree <= 2n - 2.
inline std::vector<TriNode> triangle_gauss(int n) {
  const auto g = gauss_legendre(n);
  std::vector<TriNode> out;
  for (const auto& a : g) {
    const double u = 0.5 * (a.x + 1.0);
    for (const auto& b : g) {
      const double v = 0.5 * (b.x + 1.0);
      const double l2 = u * (1.0 - v);
      const double l3 = u * v;
      // Jacobian u, reference area 1/2, interval scaling 1/4.
      out.push_back({{1.0 - l2 - l3, l2, l3}, a.w * b.w * 0.25 * u * 2.0});
    }
  }
  return out;
}

/// Seven-point degree-5 rule on a triangle (Radon), weights summing to 1.
inline std::vector<TriNode> triangle_seven_point() {
  const double s = std::sqrt(15.0);
  const double a1 = (6.0 - s) / 21.0, b1 = (9.0 + 2.0 * s) / 21.0;
  const double a2 = (6.0 + s) / 21.0, b2 = (9.0 - 2.0 * s) / 21.0;
  const double w1 = (155.0 - s) / 1200.0, w2 = (155.0 + s) / 1200.0;
  return {{{1.0 / 3, 1.0 / 3, 1.0 / 3}, 9.0 / 40.0},
          {{b1, a1, a1}, w1}, {{a1, b1, a1}, w1}, {{a1, a1, b1}, w1},
          {{b2, a2, a2}, w2}, {{a2, b2, a2}, w2}, {{a2, a2, b2}, w2}};
}

/// d!/(i!j!k!) l1^i l2^j l3^k through the gamma function.
inline double bernstein(int i, int j, int k, const std::array<double, 3>& l) {
  const int d = i + j + k;
  const double coef = std::tgamma(d + 1.0) / (std::tgamma(i + 1.0) * std::tgamma(j + 1.0) * std::tgamma(k + 1.0));
  return coef * std::pow(l[0], i) * std::pow(l[1], j) * std::pow(l[2], k);
}

/// Numerical rank by one-sided Jacobi SVD.
inline int numerical_rank(const Eigen::MatrixXd& a, double rel_tol = 1e-10) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  int r = 0;
  while (r < s.size() && s[r] > rel_tol * s[0]) ++r;
  return r;
}

/// Eigenvalues (descending) of the pixel-level empirical covariance operator
/// (1/n) sum (z_i - zbar)(z_i - zbar)^T with pixel-area quadrature, computed
/// through the n x n dual Gram matrix.
inline Eigen::VectorXd pixel_covariance_eigenvalues(const Eigen::MatrixXd& images, double cell_area) {
  Eigen::MatrixXd centered = images.rowwise() - images.colwise().mean();
  const Eigen::MatrixXd dual = centered * centered.transpose() * (cell_area / images.rows());
  Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dual).eigenvalues().reverse();
  return ev;
}

/// Population eigenvalues of zeta1 Z1 + zeta2 Z2 (zeta ~ N(0, I)) on a
/// side x side cell-centered grid of the unit square: eigenvalues of the 2x2
/// pixel-sum Gram matrix of the factors.
inline Eigen::Vector2d factor_population_eigenvalues(int side) {
  Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
  const double a = 1.0 / (side * side);
  for (int j1 = 0; j1 < side; ++j1) {
    for (int j2 = 0; j2 < side; ++j2) {
      const double x = (j1 + 0.5) / side - 0.5, y = (j2 + 0.5) / side - 0.5;
      const double r2 = x * x + y * y;
      const Eigen::Vector2d f(20.0 * r2, std::exp(-15.0 * r2));
      g += a * f * f.transpose();
    }
  }
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(g).eigenvalues().reverse();
}

/// Integral of a function over [0,1]^2 by an n x n tensor Gauss rule on a
/// cells x cells partition.
template <typename F>
double unit_square_integral(F f, int n = 16, int cells = 8) {
  const auto g = gauss_legendre(n);
  const double h = 1.0 / cells;
  double total = 0.0;
  for (int a = 0; a < cells; ++a)
    for (int b = 0; b < cells; ++b)
      for (const auto& u : g)
        for (const auto& v : g)
          total += u.w * v.w * f((a + 0.5 * (u.x + 1.0)) * h, (b + 0.5 * (v.x + 1.0)) * h);
  return total * 0.25 * h * h;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Value of the optimal regime for a contrast distributed as
/// N(mu_c, sd_c^2) on top of a baseline with mean mu_b:
/// mu_b + E max(C, 0) = mu_b + mu_c Phi(mu_c/sd_c) + sd_c phi(mu_c/sd_c).
inline double optimal_value(double mu_b, double mu_c, double sd_c) {
  const double t = mu_c / sd_c;
  return mu_b + mu_c * normal_cdf(t) + sd_c * normal_pdf(t);
}

/// Sample Pearson correlation.
inline double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd x = a.array() - a.mean();
  const Eigen::VectorXd y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace oracle
