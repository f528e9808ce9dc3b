#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rgia::linalg {

SymEigen sym_eigen(const Matrix& m) {
  if (m.rows != m.cols || m.rows < 1) throw ShapeError("sym_eigen: need square matrix");
  const int n = m.rows;
  Matrix a = m;
  Matrix v(n, n);
  for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    }
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p);
          const double akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k);
          const double aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v.at(k, p);
          const double vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return a.at(i, i) > a.at(j, j); });

  SymEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (int k = 0; k < n; ++k) {
    out.values[k] = a.at(order[k], order[k]);
    for (int i = 0; i < n; ++i) out.vectors.at(i, k) = v.at(i, order[k]);
  }
  return out;
}

double lu_det(Matrix m) {
  if (m.rows != m.cols || m.rows < 1) throw ShapeError("lu_det: need square matrix");
  const int n = m.rows;
  double det = 1.0;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(m.at(r, col)) > std::abs(m.at(pivot, col))) pivot = r;
    }
    if (m.at(pivot, col) == 0.0) return 0.0;
    if (pivot != col) {
      for (int c = 0; c < n; ++c) std::swap(m.at(pivot, c), m.at(col, c));
      det = -det;
    }
    det *= m.at(col, col);
    for (int r = col + 1; r < n; ++r) {
      const double f = m.at(r, col) / m.at(col, col);
      for (int c = col; c < n; ++c) m.at(r, c) -= f * m.at(col, c);
    }
  }
  return det;
}

Matrix sample_covariance(const std::vector<Vec>& points) {
  if (points.size() < 2) throw ShapeError("sample_covariance: need >= 2 points");
  const int n = static_cast<int>(points.size());
  const int d = static_cast<int>(points[0].size());
  Vec mean(d, 0.0);
  for (const Vec& p : points) {
    for (int i = 0; i < d; ++i) mean[i] += p[i];
  }
  for (double& x : mean) x /= n;
  Matrix cov(d, d);
  for (const Vec& p : points) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        cov.at(i, j) += (p[i] - mean[i]) * (p[j] - mean[j]);
      }
    }
  }
  for (double& x : cov.data) x /= (n - 1);
  return cov;
}

}  // namespace rgia::linalg
