#pragma once

#include <numbers>

namespace ksim {

/// Hydrogen gyromagnetic ratio in MHz/T.
inline constexpr double gamma_mhz_per_t = 42.58;
/// Same constant in Hz/T. Used as printed in the relaxation and off-resonance
/// terms, i.e. 1/T2' = gamma * dB and phase = gamma * dB * t.
inline constexpr double gamma_hz_per_t = gamma_mhz_per_t * 1e6;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

}  // namespace ksim
