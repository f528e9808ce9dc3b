#include <doctest.h>

#include <cmath>

#include "metrics.hpp"
#include "oracles.hpp"

using namespace rgia;
using namespace rgia::metrics;
using rgia::envs::Action;

TEST_CASE("mse basics and oracle agreement") {
  CHECK(mse({1.0, 2.0}, {1.0, 2.0}) == 0.0);
  CHECK(mse({1.0, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.0}) == 0.25);
  CHECK_THROWS_AS(mse({1.0}, {1.0, 2.0}), ShapeError);

  DetRng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec a = oracles::random_vec(rng, 16);
    const Vec b = oracles::random_vec(rng, 16);
    const double got = mse(a, b);
    const double want = oracles::o_mse(a, b);
    CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("recovery accuracy counts exact and thresholded matches") {
  std::vector<Action> truth = {{0, {}}, {1, {}}, {2, {}}, {3, {}}};
  std::vector<Action> pred = {{0, {}}, {1, {}}, {2, {}}, {0, {}}};
  CHECK(recovery_accuracy(pred, truth) == 0.75);
  CHECK(recovery_accuracy(truth, truth) == 1.0);
  std::vector<Action> none = {{1, {}}, {2, {}}, {3, {}}, {0, {}}};
  CHECK(recovery_accuracy(none, truth) == 0.0);

  std::vector<Action> ct = {{-1, {0.5}}, {-1, {-0.5}}};
  std::vector<Action> cp = {{-1, {0.52}}, {-1, {-0.56}}};
  CHECK(recovery_accuracy(cp, ct) == 0.5);

  CHECK_THROWS_AS(recovery_accuracy({}, {}), ShapeError);
}

TEST_CASE("psnr formula, cap and clamp") {
  const Vec img(64, 0.5);
  CHECK(psnr(img, img) == 100.0);

  Vec noisy = img;
  // MSE exactly 0.01: shift every pixel by 0.1.
  for (double& v : noisy) v += 0.1;
  CHECK(psnr(img, noisy) == doctest::Approx(20.0).epsilon(1e-12));

  DetRng rng(8);
  for (int i = 0; i < 100; ++i) {
    const Vec a = oracles::random_vec(rng, 32, 0.3);
    const Vec b = oracles::random_vec(rng, 32, 0.3);
    CHECK(psnr(a, b) == doctest::Approx(oracles::o_psnr(a, b, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("ssim identities and hand oracle") {
  DetRng rng(9);
  const Vec img = oracles::random_vec(rng, 256, 0.2);
  CHECK(ssim(img, img, 16, 16) == doctest::Approx(1.0).epsilon(1e-12));

  // Two constant 8x8 images: single window, hand formula.
  const Vec ca(64, 0.3), cb(64, 0.7);
  const double got = ssim(ca, cb, 8, 8);
  const double c1 = 0.0001;
  const double want = (2 * 0.3 * 0.7 + c1) / (0.3 * 0.3 + 0.7 * 0.7 + c1);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  // Anti-correlated +/- pattern scores negative.
  Vec pa(64, 0.0), pb(64, 0.0);
  for (int i = 0; i < 64; ++i) {
    pa[i] = i % 2 == 0 ? 0.9 : 0.1;
    pb[i] = i % 2 == 0 ? 0.1 : 0.9;
  }
  CHECK(ssim(pa, pb, 8, 8) < 0.0);
  CHECK(ssim(pa, pb, 8, 8) ==
        doctest::Approx(oracles::o_ssim(pa, pb, 8, 8, 8, 1.0)).epsilon(1e-12));

  // Sliding-window case against the oracle.
  const Vec a = oracles::random_vec(rng, 256, 0.25);
  const Vec b = oracles::random_vec(rng, 256, 0.25);
  CHECK(ssim(a, b, 16, 16) ==
        doctest::Approx(oracles::o_ssim(a, b, 16, 16, 8, 1.0)).epsilon(1e-12));

  CHECK_THROWS_AS(ssim(Vec(16, 0.0), Vec(16, 0.0), 4, 4), ShapeError);
}

TEST_CASE("pairwise euclidean distance") {
  const std::vector<Vec> same = {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
  CHECK(pairwise_euclidean(same) == 0.0);

  const std::vector<Vec> two = {{0.0, 0.0}, {3.0, 4.0}};
  CHECK(pairwise_euclidean(two) == 5.0);

  DetRng rng(10);
  for (int i = 0; i < 100; ++i) {
    std::vector<Vec> pts;
    for (int k = 0; k < 5; ++k) pts.push_back(oracles::random_vec(rng, 3));
    CHECK(pairwise_euclidean(pts) ==
          doctest::Approx(oracles::o_pairwise_ed(pts)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(pairwise_euclidean(std::vector<Vec>{{1.0}}), ShapeError);
}

TEST_CASE("silhouette score conventions and oracle") {
  // Two tight clusters of duplicated points: a = 0, s = 1.
  const std::vector<Vec> tight = {{0.0, 0.0}, {0.0, 0.0}, {5.0, 5.0}, {5.0, 5.0}};
  const std::vector<int> labels = {0, 0, 1, 1};
  CHECK(silhouette(tight, labels).score == 1.0);

  // All identical points across two labels: defined as 0 with a flag.
  const std::vector<Vec> same = {{1.0}, {1.0}, {1.0}, {1.0}};
  const auto res = silhouette(same, labels);
  CHECK(res.score == 0.0);
  CHECK(res.degenerate);

  // Single cluster rejected.
  CHECK_THROWS_AS(silhouette(tight, std::vector<int>{1, 1, 1, 1}), ShapeError);

  DetRng rng(11);
  for (int i = 0; i < 100; ++i) {
    std::vector<Vec> pts;
    std::vector<int> labs;
    for (int k = 0; k < 6; ++k) {
      pts.push_back(oracles::random_vec(rng, 2));
      labs.push_back(k % 2);
    }
    CHECK(silhouette(pts, labs).score ==
          doctest::Approx(oracles::o_silhouette(pts, labs)).epsilon(1e-9));
  }
}

TEST_CASE("covariance determinant") {
  const std::vector<Vec> same = {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
  CHECK(covariance_determinant(same) == 0.0);

  // 1-D data: determinant equals the sample variance.
  const std::vector<Vec> one_d = {{1.0}, {2.0}, {4.0}};
  const double mean = 7.0 / 3.0;
  const double var = ((1 - mean) * (1 - mean) + (2 - mean) * (2 - mean) +
                      (4 - mean) * (4 - mean)) / 2.0;
  CHECK(covariance_determinant(one_d) == doctest::Approx(var).epsilon(1e-12));

  DetRng rng(12);
  for (int i = 0; i < 100; ++i) {
    std::vector<Vec> pts;
    for (int k = 0; k < 8; ++k) pts.push_back(oracles::random_vec(rng, 3));
    const double got = covariance_determinant(pts);
    const double want = oracles::o_covariance_det(pts);
    CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
  }
  CHECK_THROWS_AS(covariance_determinant(std::vector<Vec>{{1.0}}), ShapeError);
}

TEST_CASE("transition error with an exact dynamics source") {
  // Samples generated by the predictor itself give zero error.
  const DynamicsFn identity = [](const Vec& s, const Vec&) { return s; };
  std::vector<TransitionSample> samples = {{{1.0, 2.0}, {0.0}, {1.0, 2.0}}};
  CHECK(transition_error(samples, identity) == 0.0);

  // Known offset delta on one coordinate: delta^2 / state_dim.
  samples[0].s_next = {1.5, 2.0};
  CHECK(transition_error(samples, identity) ==
        doctest::Approx(0.25 / 2.0).epsilon(1e-12));

  DetRng rng(13);
  for (int i = 0; i < 100; ++i) {
    std::vector<TransitionSample> batch;
    for (int k = 0; k < 4; ++k) {
      batch.push_back({oracles::random_vec(rng, 3), oracles::random_vec(rng, 2),
                       oracles::random_vec(rng, 3)});
    }
    double want = 0.0;
    for (const auto& s : batch) want += oracles::o_mse(s.s, s.s_next);
    want /= batch.size();
    CHECK(transition_error(batch, identity) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("gme is the squared L2 distance between gradients") {
  DetRng rng(14);
  for (int i = 0; i < 100; ++i) {
    const Vec a = oracles::random_vec(rng, 20);
    const Vec b = oracles::random_vec(rng, 20);
    double want = 0.0;
    for (size_t k = 0; k < a.size(); ++k) want += (a[k] - b[k]) * (a[k] - b[k]);
    CHECK(gme_from_grads(a, b) == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK_THROWS_AS(gme_from_grads({1.0}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("report rows serialize with a stable column order") {
  MetricsReport r;
  r.env = "gridlake";
  r.method = "RGIA";
  r.seed = 7;
  r.config_hash = "cafe";
  r.n_evaluated = 3;
  r.m_total = 4;
  r.values["ra"] = 0.75;
  r.values["mse_state"] = 0.5;
  const std::string header = report_csv_header();
  CHECK(header.substr(0, 22) == "experiment,env,method,");
  const std::string row = report_csv_row("ablate", r);
  CHECK(row.find("ablate,gridlake,RGIA,7,cafe,") == 0);
  CHECK(row.find("0.75") != std::string::npos);
  r.check_ranges();

  MetricsReport bad = r;
  bad.values["ra"] = 1.5;
  CHECK_THROWS_AS(bad.check_ranges(), NumericError);
}
