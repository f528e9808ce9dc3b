#include "defenses.hpp"

#include <cmath>

#include <json.hpp>

namespace rgia::defenses {

using nlohmann::json;

void DefenseSpec::validate() const {
  if (kind == DefenseKind::Gaussian || kind == DefenseKind::Laplace) {
    if (!(variance > 0.0)) throw ConfigError("noise defense needs variance > 0");
  }
  if (kind == DefenseKind::Quantize && bits != 4 && bits != 8) {
    throw ConfigError("quantize defense supports 4 or 8 bits");
  }
}

std::string DefenseSpec::tag() const {
  switch (kind) {
    case DefenseKind::None: return "none";
    case DefenseKind::Gaussian: return "gaussian";
    case DefenseKind::Laplace: return "laplace";
    case DefenseKind::Quantize: return "quantize" + std::to_string(bits);
  }
  return "none";
}

frl::GradientPacket apply_noise(const frl::GradientPacket& p,
                                const DefenseSpec& spec, DetRng& rng) {
  spec.validate();
  frl::GradientPacket out = p;
  if (spec.kind == DefenseKind::Gaussian) {
    const double sigma = std::sqrt(spec.variance);
    for (double& g : out.grad) g += rng.normal(0.0, sigma);
  } else if (spec.kind == DefenseKind::Laplace) {
    const double b = std::sqrt(spec.variance / 2.0);
    for (double& g : out.grad) g += rng.laplace(b);
  } else {
    return out;  // None is the identity
  }
  out.defense = spec.tag();
  return out;
}

namespace {

// Nearest integer with exact halves rounded toward zero, so a code of
// k + 0.5 maps to k (0.5 at scale 1, 8 bits -> 63/127).
double round_half_to_zero(double v) {
  return v >= 0.0 ? std::ceil(v - 0.5) : std::floor(v + 0.5);
}

}  // namespace

frl::GradientPacket quantize(const frl::GradientPacket& p, int bits) {
  if (bits != 4 && bits != 8) throw ConfigError("quantize: bits must be 4 or 8");
  frl::GradientPacket out = p;
  double scale = 0.0;
  for (double g : out.grad) scale = std::max(scale, std::abs(g));
  if (scale > 0.0) {
    const double levels = static_cast<double>((1 << (bits - 1)) - 1);
    for (double& g : out.grad) {
      g = round_half_to_zero(g / scale * levels) * scale / levels;
    }
  }
  out.defense = "quantize" + std::to_string(bits);
  return out;
}

frl::GradientPacket apply_defense(const frl::GradientPacket& p,
                                  const DefenseSpec& spec, DetRng& rng) {
  switch (spec.kind) {
    case DefenseKind::None: return p;
    case DefenseKind::Gaussian:
    case DefenseKind::Laplace: return apply_noise(p, spec, rng);
    case DefenseKind::Quantize: return quantize(p, spec.bits);
  }
  return p;
}

frl::DefenseHook make_defense_hook(const DefenseSpec& spec) {
  spec.validate();
  return [spec](const frl::GradientPacket& p, int agent_id, int round) {
    DetRng rng(DetRng::mix(spec.seed, 0xDEF3, static_cast<uint64_t>(agent_id),
                           static_cast<uint64_t>(round)));
    return apply_defense(p, spec, rng);
  };
}

DefenseSpec defense_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  DefenseSpec s;
  const std::string kind = j.value("kind", "none");
  if (kind == "none") {
    s.kind = DefenseKind::None;
  } else if (kind == "gaussian") {
    s.kind = DefenseKind::Gaussian;
  } else if (kind == "laplace") {
    s.kind = DefenseKind::Laplace;
  } else if (kind == "quantize") {
    s.kind = DefenseKind::Quantize;
  } else {
    throw ConfigError("unknown defense kind: " + kind);
  }
  s.variance = j.value("variance", 0.0);
  s.bits = j.value("bits", 8);
  s.seed = j.value("seed", 0ull);
  s.validate();
  return s;
}

std::string defense_to_json(const DefenseSpec& spec) {
  json j;
  j["kind"] = spec.kind == DefenseKind::None       ? "none"
              : spec.kind == DefenseKind::Gaussian ? "gaussian"
              : spec.kind == DefenseKind::Laplace  ? "laplace"
                                                   : "quantize";
  j["variance"] = spec.variance;
  j["bits"] = spec.bits;
  j["seed"] = spec.seed;
  return j.dump();
}

}  // namespace rgia::defenses
