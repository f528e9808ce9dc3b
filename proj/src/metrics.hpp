#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "envs.hpp"
#include "support.hpp"

namespace rgia::metrics {

using envs::Action;

double mse(const Vec& x, const Vec& y);

// Fraction of actions judged recovered. Discrete actions match exactly;
// continuous actions match iff the max-norm error is below cont_tol.
double recovery_accuracy(std::span<const Action> pred,
                         std::span<const Action> truth,
                         double cont_tol = 0.05);

// 10 log10(max_val^2 / MSE) in dB, clamped to [0, 100]; MSE below 1e-10
// reports the 100 dB cap.
double psnr(const Vec& a, const Vec& b, double max_val = 1.0);

// Mean local SSIM over sliding uniform windows (population moments,
// C1=(0.01 L)^2, C2=(0.03 L)^2).
double ssim(const Vec& a, const Vec& b, int height, int width,
            int window = 8, double max_val = 1.0);

// Mean over all unordered pairs of the L2 distance.
double pairwise_euclidean(std::span<const Vec> states);

struct SilhouetteResult {
  double score = 0.0;
  bool degenerate = false;  // 0/0 convention triggered somewhere
  // Mean silhouette per point restricted to each label (keyed by label).
  std::map<int, double> per_label;
};

SilhouetteResult silhouette(std::span<const Vec> states,
                            std::span<const int> labels);

struct CovarianceDetResult {
  double value = 0.0;
  bool degenerate = false;  // identical points
};

double covariance_determinant(std::span<const Vec> states);

// One decoded (s, a_enc, s') triple for the transition-error metric.
struct TransitionSample {
  Vec s;
  Vec a_enc;
  Vec s_next;
};

// Mean over samples of ||predict(s, a) - s'||^2 / state_dim. `source`
// records whether predictions came from true dynamics or a learned model.
using DynamicsFn = std::function<Vec(const Vec& s, const Vec& a_enc)>;

double transition_error(std::span<const TransitionSample> samples,
                        const DynamicsFn& predict);

// Squared L2 distance between two gradients; the attack module wraps this
// into the full gme(packet, candidate, snapshot) form.
double gme_from_grads(const Vec& fake, const Vec& real);

struct MetricsReport {
  std::map<std::string, double> values;
  int n_evaluated = 0;
  int m_total = 0;
  std::string env;
  std::string method;
  uint64_t seed = 0;
  std::string config_hash;

  void check_ranges() const;
};

// Stable column order shared by every report CSV.
const std::vector<std::string>& report_columns();
std::string report_csv_header();
std::string report_csv_row(const std::string& experiment, const MetricsReport& r);

}  // namespace rgia::metrics
