#pragma once

// Test-only oracles, intentionally independent of the tape implementation:
// a straight-line MLP evaluator and central finite differences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "qnet.hpp"
#include "rng.hpp"
#include "support.hpp"

namespace oracles {

using rgia::Vec;

// Plain re-evaluation of the MLP arithmetic without any tape involvement.
inline Vec mlp_eval(const rgia::num::MlpSpec& spec, const Vec& params,
                    const Vec& input) {
  Vec h = input;
  size_t k = 0;
  const auto shapes = spec.layer_shapes();
  for (size_t l = 0; l < shapes.size(); ++l) {
    const auto [in, out] = shapes[l];
    Vec next(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double acc = 0.0;
      for (int i = 0; i < in; ++i) acc += params[k + o * in + i] * h[i];
      next[o] = acc + params[k + static_cast<size_t>(in) * out + o];
    }
    k += static_cast<size_t>(in) * out + out;
    if (l + 1 < shapes.size()) {
      for (double& x : next) {
        x = spec.activation == rgia::num::Activation::Tanh ? std::tanh(x)
                                                           : (x > 0.0 ? x : 0.0);
      }
    }
    h = next;
  }
  return h;
}

inline Vec finite_diff(const std::function<double(const Vec&)>& f, Vec x,
                       double eps) {
  Vec g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + eps;
    const double fp = f(x);
    x[i] = x0 - eps;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

inline double max_rel_err(const Vec& a, const Vec& b, double floor = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Smallest |pre-activation| across ReLU layers; +inf for tanh nets. Finite
// differences are only a valid oracle when no kink sits inside the stencil.
inline double min_kink_margin(const rgia::num::MlpSpec& spec, const Vec& params,
                              const Vec& input) {
  if (spec.activation != rgia::num::Activation::Relu || spec.hidden_dims.empty()) {
    return std::numeric_limits<double>::infinity();
  }
  double margin = std::numeric_limits<double>::infinity();
  Vec h = input;
  size_t k = 0;
  const auto shapes = spec.layer_shapes();
  for (size_t l = 0; l < shapes.size(); ++l) {
    const auto [in, out] = shapes[l];
    Vec next(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double acc = 0.0;
      for (int i = 0; i < in; ++i) acc += params[k + o * in + i] * h[i];
      next[o] = acc + params[k + static_cast<size_t>(in) * out + o];
    }
    k += static_cast<size_t>(in) * out + out;
    if (l + 1 < shapes.size()) {
      for (double& x : next) {
        margin = std::min(margin, std::abs(x));
        x = x > 0.0 ? x : 0.0;
      }
    }
    h = next;
  }
  return margin;
}

inline rgia::num::MlpSpec random_spec(rgia::DetRng& rng, int max_hidden = 2) {
  rgia::num::MlpSpec spec;
  spec.input_dim = 1 + static_cast<int>(rng.uniform_index(5));
  spec.output_dim = 1 + static_cast<int>(rng.uniform_index(3));
  const int layers = static_cast<int>(rng.uniform_index(max_hidden + 1));
  for (int i = 0; i < layers; ++i) {
    spec.hidden_dims.push_back(2 + static_cast<int>(rng.uniform_index(6)));
  }
  spec.activation = rng.uniform01() < 0.5 ? rgia::num::Activation::Tanh
                                          : rgia::num::Activation::Relu;
  return spec;
}

inline Vec random_vec(rgia::DetRng& rng, size_t n, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = rng.normal(0.0, scale);
  return v;
}

// ---- brute-force metric oracles (independent re-implementations) ----

inline double o_mse(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / a.size();
}

inline double o_psnr(const Vec& a, const Vec& b, double max_val) {
  const double m = o_mse(a, b);
  if (m < 1e-10) return 100.0;
  double v = 10.0 * std::log10(max_val * max_val / m);
  if (v < 0.0) v = 0.0;
  if (v > 100.0) v = 100.0;
  return v;
}

inline double o_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double o_pairwise_ed(const std::vector<Vec>& pts) {
  double s = 0.0;
  int c = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    for (size_t j = 0; j < pts.size(); ++j) {
      if (j <= i) continue;
      s += o_dist(pts[i], pts[j]);
      ++c;
    }
  }
  return s / c;
}

inline double o_silhouette(const std::vector<Vec>& pts,
                           const std::vector<int>& labels) {
  double total = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    double a_sum = 0.0;
    int a_n = 0;
    std::vector<double> b_sums;
    std::vector<int> b_ns;
    std::vector<int> b_labels;
    for (size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      if (labels[j] == labels[i]) {
        a_sum += o_dist(pts[i], pts[j]);
        ++a_n;
      } else {
        size_t k = 0;
        for (; k < b_labels.size(); ++k) {
          if (b_labels[k] == labels[j]) break;
        }
        if (k == b_labels.size()) {
          b_labels.push_back(labels[j]);
          b_sums.push_back(0.0);
          b_ns.push_back(0);
        }
        b_sums[k] += o_dist(pts[i], pts[j]);
        b_ns[k] += 1;
      }
    }
    if (a_n == 0) continue;  // singleton -> s = 0
    const double a = a_sum / a_n;
    double b = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < b_sums.size(); ++k) b = std::min(b, b_sums[k] / b_ns[k]);
    const double denom = std::max(a, b);
    total += denom == 0.0 ? 0.0 : (b - a) / denom;
  }
  return total / pts.size();
}

// Determinant by cofactor expansion along the first row.
inline double o_det(const std::vector<std::vector<double>>& m) {
  const size_t n = m.size();
  if (n == 1) return m[0][0];
  double acc = 0.0;
  for (size_t c = 0; c < n; ++c) {
    std::vector<std::vector<double>> minor;
    for (size_t r = 1; r < n; ++r) {
      std::vector<double> row;
      for (size_t cc = 0; cc < n; ++cc) {
        if (cc != c) row.push_back(m[r][cc]);
      }
      minor.push_back(std::move(row));
    }
    acc += (c % 2 == 0 ? 1.0 : -1.0) * m[0][c] * o_det(minor);
  }
  return acc;
}

inline double o_covariance_det(const std::vector<Vec>& pts) {
  const size_t n = pts.size();
  const size_t d = pts[0].size();
  Vec mean(d, 0.0);
  for (const Vec& p : pts) {
    for (size_t i = 0; i < d; ++i) mean[i] += p[i] / n;
  }
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const Vec& p : pts) {
    for (size_t i = 0; i < d; ++i) {
      for (size_t j = 0; j < d; ++j) {
        cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / (n - 1);
      }
    }
  }
  double det = o_det(cov);
  return det < 0.0 ? 0.0 : det;
}

// Single-window SSIM with population moments.
inline double o_ssim_window(const Vec& a, const Vec& b, double max_val) {
  const double n = static_cast<double>(a.size());
  double mu_a = 0.0, mu_b = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    mu_a += a[i] / n;
    mu_b += b[i] / n;
  }
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    va += (a[i] - mu_a) * (a[i] - mu_a) / n;
    vb += (b[i] - mu_b) * (b[i] - mu_b) / n;
    cov += (a[i] - mu_a) * (b[i] - mu_b) / n;
  }
  const double c1 = (0.01 * max_val) * (0.01 * max_val);
  const double c2 = (0.03 * max_val) * (0.03 * max_val);
  return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
         ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
}

inline double o_ssim(const Vec& a, const Vec& b, int height, int width,
                     int window, double max_val) {
  double acc = 0.0;
  int count = 0;
  for (int r0 = 0; r0 + window <= height; ++r0) {
    for (int c0 = 0; c0 + window <= width; ++c0) {
      Vec wa, wb;
      for (int r = r0; r < r0 + window; ++r) {
        for (int c = c0; c < c0 + window; ++c) {
          wa.push_back(a[static_cast<size_t>(r) * width + c]);
          wb.push_back(b[static_cast<size_t>(r) * width + c]);
        }
      }
      acc += o_ssim_window(wa, wb, max_val);
      ++count;
    }
  }
  return acc / count;
}

}  // namespace oracles
