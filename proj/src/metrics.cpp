#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "linalg.hpp"

namespace rgia::metrics {

double mse(const Vec& x, const Vec& y) {
  if (x.size() != y.size() || x.empty()) throw ShapeError("mse: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

double recovery_accuracy(std::span<const Action> pred,
                         std::span<const Action> truth, double cont_tol) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw ShapeError("recovery_accuracy: need equal non-empty action lists");
  }
  int hits = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (truth[i].is_discrete()) {
      hits += pred[i].index == truth[i].index;
    } else {
      if (pred[i].continuous.size() != truth[i].continuous.size()) {
        throw ShapeError("recovery_accuracy: action dim mismatch");
      }
      double worst = 0.0;
      for (size_t k = 0; k < truth[i].continuous.size(); ++k) {
        worst = std::max(worst, std::abs(pred[i].continuous[k] - truth[i].continuous[k]));
      }
      hits += worst < cont_tol;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double psnr(const Vec& a, const Vec& b, double max_val) {
  const double m = mse(a, b);
  if (m < 1e-10) return 100.0;
  const double v = 10.0 * std::log10(max_val * max_val / m);
  return std::clamp(v, 0.0, 100.0);
}

double ssim(const Vec& a, const Vec& b, int height, int width, int window,
            double max_val) {
  if (a.size() != b.size() ||
      static_cast<int>(a.size()) != height * width) {
    throw ShapeError("ssim: image shape mismatch");
  }
  if (height < window || width < window) {
    throw ShapeError("ssim: image smaller than window");
  }
  const double c1 = (0.01 * max_val) * (0.01 * max_val);
  const double c2 = (0.03 * max_val) * (0.03 * max_val);
  const double inv_n = 1.0 / static_cast<double>(window * window);

  double acc = 0.0;
  int count = 0;
  for (int r0 = 0; r0 + window <= height; ++r0) {
    for (int c0 = 0; c0 + window <= width; ++c0) {
      double mu_a = 0.0, mu_b = 0.0;
      for (int r = r0; r < r0 + window; ++r) {
        for (int c = c0; c < c0 + window; ++c) {
          mu_a += a[static_cast<size_t>(r) * width + c];
          mu_b += b[static_cast<size_t>(r) * width + c];
        }
      }
      mu_a *= inv_n;
      mu_b *= inv_n;
      double var_a = 0.0, var_b = 0.0, cov = 0.0;
      for (int r = r0; r < r0 + window; ++r) {
        for (int c = c0; c < c0 + window; ++c) {
          const double da = a[static_cast<size_t>(r) * width + c] - mu_a;
          const double db = b[static_cast<size_t>(r) * width + c] - mu_b;
          var_a += da * da;
          var_b += db * db;
          cov += da * db;
        }
      }
      var_a *= inv_n;
      var_b *= inv_n;
      cov *= inv_n;
      const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
      const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      acc += num / den;
      ++count;
    }
  }
  return acc / count;
}

double pairwise_euclidean(std::span<const Vec> states) {
  if (states.size() < 2) throw ShapeError("pairwise_euclidean: need >= 2 states");
  double acc = 0.0;
  int pairs = 0;
  for (size_t i = 0; i < states.size(); ++i) {
    for (size_t j = i + 1; j < states.size(); ++j) {
      double d2 = 0.0;
      for (size_t k = 0; k < states[i].size(); ++k) {
        const double d = states[i][k] - states[j][k];
        d2 += d * d;
      }
      acc += std::sqrt(d2);
      ++pairs;
    }
  }
  return acc / pairs;
}

SilhouetteResult silhouette(std::span<const Vec> states,
                            std::span<const int> labels) {
  if (states.size() != labels.size() || states.size() < 3) {
    throw ShapeError("silhouette: need >= 3 labeled points");
  }
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw ShapeError("silhouette: need >= 2 clusters");

  const size_t n = states.size();
  auto dist = [&](size_t i, size_t j) {
    double d2 = 0.0;
    for (size_t k = 0; k < states[i].size(); ++k) {
      const double d = states[i][k] - states[j][k];
      d2 += d * d;
    }
    return std::sqrt(d2);
  };

  SilhouetteResult out;
  std::map<int, double> label_sum;
  std::map<int, int> label_count;
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double a_sum = 0.0;
    int a_cnt = 0;
    std::map<int, std::pair<double, int>> other;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        a_sum += dist(i, j);
        ++a_cnt;
      } else {
        auto& o = other[labels[j]];
        o.first += dist(i, j);
        ++o.second;
      }
    }
    double s;
    if (a_cnt == 0) {
      s = 0.0;  // singleton cluster convention
    } else {
      const double a = a_sum / a_cnt;
      double b = std::numeric_limits<double>::infinity();
      for (const auto& [lab, o] : other) b = std::min(b, o.first / o.second);
      const double denom = std::max(a, b);
      if (denom == 0.0) {
        s = 0.0;  // identical points across clusters
        out.degenerate = true;
      } else {
        s = (b - a) / denom;
      }
    }
    total += s;
    label_sum[labels[i]] += s;
    label_count[labels[i]] += 1;
  }
  out.score = total / static_cast<double>(n);
  for (const auto& [lab, sum] : label_sum) out.per_label[lab] = sum / label_count[lab];
  return out;
}

double covariance_determinant(std::span<const Vec> states) {
  if (states.size() < 2) throw ShapeError("covariance_determinant: need >= 2 states");
  std::vector<Vec> pts(states.begin(), states.end());
  const Matrix cov = linalg::sample_covariance(pts);
  double det = cov.rows == 1 ? cov.at(0, 0) : linalg::lu_det(cov);
  // Covariance is PSD; a negative determinant is floating-point noise.
  if (det < 0.0) det = 0.0;
  return det;
}

double transition_error(std::span<const TransitionSample> samples,
                        const DynamicsFn& predict) {
  if (samples.empty()) throw ShapeError("transition_error: no samples");
  double acc = 0.0;
  for (const auto& s : samples) {
    const Vec pred = predict(s.s, s.a_enc);
    if (pred.size() != s.s_next.size()) {
      throw ShapeError("transition_error: prediction dim mismatch");
    }
    double d2 = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - s.s_next[i];
      d2 += d * d;
    }
    acc += d2 / static_cast<double>(pred.size());
  }
  return acc / static_cast<double>(samples.size());
}

double gme_from_grads(const Vec& fake, const Vec& real) {
  if (fake.size() != real.size()) throw ShapeError("gme: gradient length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < fake.size(); ++i) {
    const double d = fake[i] - real[i];
    acc += d * d;
  }
  return acc;
}

void MetricsReport::check_ranges() const {
  auto in = [&](const char* k, double lo, double hi) {
    auto it = values.find(k);
    if (it == values.end()) return;
    if (it->second < lo || it->second > hi) {
      throw NumericError(std::string("metric out of range: ") + k);
    }
  };
  in("ra", 0.0, 1.0);
  in("ss", -1.0, 1.0);
  in("ssim", -1.0, 1.0);
  in("psnr", 0.0, 100.0);
  auto nonneg = [&](const char* k) {
    auto it = values.find(k);
    if (it != values.end() && it->second < 0.0) {
      throw NumericError(std::string("metric must be >= 0: ") + k);
    }
  };
  for (const char* k : {"ed", "cd", "te", "mse_state", "mse_reward", "gme"}) nonneg(k);
}

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {
      "experiment", "env",       "method",     "seed",      "config_hash",
      "version",    "n_eval",    "m_total",    "cd",        "ed",
      "gme",        "mse_reward","mse_state",  "psnr",      "ra",
      "ss",         "ssim",      "te",         "final_td_loss",
      "eval_return","invalid_r_ratio",         "wall_time_s"};
  return cols;
}

std::string report_csv_header() {
  std::string out;
  const auto& cols = report_columns();
  for (size_t i = 0; i < cols.size(); ++i) {
    out += cols[i];
    if (i + 1 < cols.size()) out += ',';
  }
  out += '\n';
  return out;
}

std::string report_csv_row(const std::string& experiment, const MetricsReport& r) {
  std::string out;
  const auto& cols = report_columns();
  for (size_t i = 0; i < cols.size(); ++i) {
    const std::string& c = cols[i];
    if (c == "experiment") {
      out += experiment;
    } else if (c == "env") {
      out += r.env;
    } else if (c == "method") {
      out += r.method;
    } else if (c == "seed") {
      out += std::to_string(r.seed);
    } else if (c == "config_hash") {
      out += r.config_hash;
    } else if (c == "version") {
      out += kVersion;
    } else if (c == "n_eval") {
      out += std::to_string(r.n_evaluated);
    } else if (c == "m_total") {
      out += std::to_string(r.m_total);
    } else {
      auto it = r.values.find(c);
      if (it != r.values.end()) out += format_double(it->second);
    }
    if (i + 1 < cols.size()) out += ',';
  }
  out += '\n';
  return out;
}

}  // namespace rgia::metrics
