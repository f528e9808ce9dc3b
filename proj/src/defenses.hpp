#pragma once

#include <cstdint>
#include <string>

#include "frl.hpp"
#include "rng.hpp"

namespace rgia::defenses {

enum class DefenseKind { None, Gaussian, Laplace, Quantize };

struct DefenseSpec {
  DefenseKind kind = DefenseKind::None;
  double variance = 0.0;  // sigma^2 for the noise kinds
  int bits = 8;           // 4 or 8 for quantize
  uint64_t seed = 0;

  void validate() const;
  std::string tag() const;
};

// Adds zero-mean i.i.d. noise per coordinate with variance sigma^2.
// Laplace uses scale b = sqrt(sigma^2 / 2) so its variance matches the
// Gaussian at the same setting.
frl::GradientPacket apply_noise(const frl::GradientPacket& p,
                                const DefenseSpec& spec, DetRng& rng);

// Symmetric per-packet quantization: scale = max|g_i|,
// code = round(g / scale * (2^(bits-1) - 1)), dequantized values stored.
// The zero vector maps to itself.
frl::GradientPacket quantize(const frl::GradientPacket& p, int bits);

frl::GradientPacket apply_defense(const frl::GradientPacket& p,
                                  const DefenseSpec& spec, DetRng& rng);

// Wiring for run_federation: a hook with per-(agent, round) noise streams.
frl::DefenseHook make_defense_hook(const DefenseSpec& spec);

DefenseSpec defense_from_json_text(const std::string& text);
std::string defense_to_json(const DefenseSpec& spec);

}  // namespace rgia::defenses
