#include "rgialab.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "attack.hpp"
#include "envs.hpp"
#include "experiments.hpp"
#include "frl.hpp"
#include "metrics.hpp"
#include "qnet.hpp"
#include "support.hpp"

using rgia::Vec;

struct rgia_env {
  rgia::envs::Environment env;
};

struct rgia_dataset {
  rgia::envs::Dataset ds;
};

struct rgia_qnet {
  rgia::num::QNetwork net;
};

namespace {

thread_local std::string g_last_error;

rgia_status to_status(const std::exception& e) {
  g_last_error = e.what();
  if (dynamic_cast<const rgia::ConfigError*>(&e)) return RGIA_ERR_CONFIG;
  if (dynamic_cast<const rgia::NumericError*>(&e)) return RGIA_ERR_NUMERIC;
  if (dynamic_cast<const rgia::ShapeError*>(&e)) return RGIA_ERR_SHAPE;
  if (dynamic_cast<const rgia::ProtocolError*>(&e)) return RGIA_ERR_PROTOCOL;
  return RGIA_ERR_IO;
}

template <typename Fn>
rgia_status wrap(Fn&& fn) {
  try {
    fn();
    return RGIA_OK;
  } catch (const std::exception& e) {
    return to_status(e);
  } catch (...) {
    g_last_error = "unknown error";
    return RGIA_ERR_IO;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<Vec> unpack_states(const double* states, size_t n, size_t dim) {
  std::vector<Vec> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    out.emplace_back(states + i * dim, states + (i + 1) * dim);
  }
  return out;
}

}  // namespace

extern "C" {

const char* rgia_version(void) { return rgia::kVersion; }

const char* rgia_last_error(void) { return g_last_error.c_str(); }

void rgia_string_free(char* s) { std::free(s); }

rgia_status rgia_env_create(const char* spec_json, rgia_env** out) {
  return wrap([&] {
    if (!spec_json || !out) throw rgia::ConfigError("null argument");
    *out = new rgia_env{
        rgia::envs::Environment(rgia::envs::env_spec_from_json_text(spec_json))};
  });
}

void rgia_env_free(rgia_env* env) { delete env; }

int rgia_env_state_dim(const rgia_env* env) {
  return env ? env->env.spec().state_dim() : -1;
}

int rgia_env_action_dim(const rgia_env* env) {
  return env ? env->env.spec().action_dim() : -1;
}

rgia_status rgia_env_render_pixel(const rgia_env* env, int cell, double* out) {
  return wrap([&] {
    if (!env || !out) throw rgia::ConfigError("null argument");
    const auto& grid = env->env.spec().grid;
    if (cell < 0 || cell >= env->env.spec().n_cells()) {
      throw rgia::ShapeError("cell index out of range");
    }
    const Vec img = rgia::envs::render_pixel_state(grid.rows, grid.cols, cell);
    std::memcpy(out, img.data(), img.size() * sizeof(double));
  });
}

rgia_status rgia_dataset_generate(const rgia_env* env, int n, uint64_t seed,
                                  rgia_dataset** out) {
  return wrap([&] {
    if (!env || !out) throw rgia::ConfigError("null argument");
    *out = new rgia_dataset{rgia::envs::generate_dataset(
        env->env, rgia::envs::PolicyTag::Uniform, n, seed)};
  });
}

rgia_status rgia_dataset_load(const char* path, rgia_dataset** out) {
  return wrap([&] {
    if (!path || !out) throw rgia::ConfigError("null argument");
    *out = new rgia_dataset{rgia::envs::load_dataset(path)};
  });
}

rgia_status rgia_dataset_save(const rgia_dataset* ds, const char* path) {
  return wrap([&] {
    if (!ds || !path) throw rgia::ConfigError("null argument");
    rgia::envs::save_dataset(ds->ds, path);
  });
}

size_t rgia_dataset_size(const rgia_dataset* ds) { return ds ? ds->ds.size() : 0; }

void rgia_dataset_free(rgia_dataset* ds) { delete ds; }

rgia_status rgia_qnet_create(const char* spec_json, uint64_t seed,
                             rgia_qnet** out) {
  return wrap([&] {
    if (!spec_json || !out) throw rgia::ConfigError("null argument");
    // Same schema as the qnet JSON file minus the params field.
    rgia::num::MlpSpec spec;
    const auto parsed = nlohmann::json::parse(spec_json);
    spec.input_dim = parsed.at("input_dim").get<int>();
    if (parsed.contains("hidden_dims")) {
      spec.hidden_dims = parsed.at("hidden_dims").get<std::vector<int>>();
    }
    spec.output_dim = parsed.at("output_dim").get<int>();
    spec.activation = parsed.value("activation", std::string("tanh")) == "relu"
                          ? rgia::num::Activation::Relu
                          : rgia::num::Activation::Tanh;
    *out = new rgia_qnet{rgia::num::QNetwork::init(spec, seed)};
  });
}

rgia_status rgia_qnet_load(const char* path, rgia_qnet** out) {
  return wrap([&] {
    if (!path || !out) throw rgia::ConfigError("null argument");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw rgia::ConfigError(std::string("cannot open: ") + path);
    std::stringstream ss;
    ss << f.rdbuf();
    *out = new rgia_qnet{rgia::frl::qnet_from_json(ss.str())};
  });
}

rgia_status rgia_qnet_save(const rgia_qnet* net, const char* path) {
  return wrap([&] {
    if (!net || !path) throw rgia::ConfigError("null argument");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw rgia::ConfigError(std::string("cannot open: ") + path);
    f << rgia::frl::qnet_to_json(net->net);
  });
}

int rgia_qnet_param_count(const rgia_qnet* net) {
  return net ? net->net.param_count() : -1;
}

rgia_status rgia_qnet_forward(const rgia_qnet* net, const double* input,
                              size_t input_len, double* output,
                              size_t output_len) {
  return wrap([&] {
    if (!net || !input || !output) throw rgia::ConfigError("null argument");
    const Vec in(input, input + input_len);
    const Vec out = rgia::num::forward(net->net, in);
    if (out.size() != output_len) {
      throw rgia::ShapeError("output buffer length mismatch");
    }
    std::memcpy(output, out.data(), out.size() * sizeof(double));
  });
}

void rgia_qnet_free(rgia_qnet* net) { delete net; }

rgia_status rgia_metric_mse(const double* a, const double* b, size_t len,
                            double* out) {
  return wrap([&] {
    if (!a || !b || !out) throw rgia::ConfigError("null argument");
    *out = rgia::metrics::mse(Vec(a, a + len), Vec(b, b + len));
  });
}

rgia_status rgia_metric_psnr(const double* a, const double* b, size_t len,
                             double max_val, double* out) {
  return wrap([&] {
    if (!a || !b || !out) throw rgia::ConfigError("null argument");
    *out = rgia::metrics::psnr(Vec(a, a + len), Vec(b, b + len), max_val);
  });
}

rgia_status rgia_metric_ssim(const double* a, const double* b, int height,
                             int width, int window, double max_val,
                             double* out) {
  return wrap([&] {
    if (!a || !b || !out) throw rgia::ConfigError("null argument");
    const size_t len = static_cast<size_t>(height) * width;
    *out = rgia::metrics::ssim(Vec(a, a + len), Vec(b, b + len), height, width,
                               window, max_val);
  });
}

rgia_status rgia_metric_pairwise_euclidean(const double* states, size_t n,
                                           size_t dim, double* out) {
  return wrap([&] {
    if (!states || !out) throw rgia::ConfigError("null argument");
    const auto pts = unpack_states(states, n, dim);
    *out = rgia::metrics::pairwise_euclidean(pts);
  });
}

rgia_status rgia_metric_silhouette(const double* states, const int* labels,
                                   size_t n, size_t dim, double* out) {
  return wrap([&] {
    if (!states || !labels || !out) throw rgia::ConfigError("null argument");
    const auto pts = unpack_states(states, n, dim);
    const std::vector<int> labs(labels, labels + n);
    *out = rgia::metrics::silhouette(pts, labs).score;
  });
}

rgia_status rgia_metric_covariance_determinant(const double* states, size_t n,
                                               size_t dim, double* out) {
  return wrap([&] {
    if (!states || !out) throw rgia::ConfigError("null argument");
    const auto pts = unpack_states(states, n, dim);
    *out = rgia::metrics::covariance_determinant(pts);
  });
}

rgia_status rgia_run_experiment(const char* subcommand, const char* config_json,
                                const char* out_dir, const uint64_t* seed,
                                int deterministic) {
  return wrap([&] {
    if (!subcommand || !config_json) throw rgia::ConfigError("null argument");
    rgia::experiments::ExperimentConfig cfg =
        rgia::experiments::config_from_json(config_json);
    cfg.experiment = subcommand;
    if (out_dir) cfg.out_dir = out_dir;
    if (seed) cfg.seeds = {*seed};
    if (deterministic) cfg.deterministic = true;
    rgia::experiments::run(cfg);
  });
}

rgia_status rgia_config_hash(const char* config_json, char** out) {
  return wrap([&] {
    if (!config_json || !out) throw rgia::ConfigError("null argument");
    const auto cfg = rgia::experiments::config_from_json(config_json);
    *out = dup_string(cfg.config_hash());
  });
}

}  // extern "C"
