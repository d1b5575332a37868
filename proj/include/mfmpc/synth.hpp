#pragma once

#include "mfmpc/price_data.hpp"

#include <cstdint>
#include <string>

namespace mfmpc {

/// Generative model for synthetic hourly prices in the double-log domain:
///   z_t = level + daily + weekly + yearly seasonal terms + r_t + k_t,
///   r_t = ar_coefficient r_{t-1} + noise_scale * s(hour of week) * eps_t,
/// with s = peak_noise_factor on weekday afternoons (12:00-19:59) and 1
/// otherwise, k_t = spike_scale * |xi_t| on those afternoons and 0
/// otherwise, and p_t = exp(exp(z_t)).
struct SynthSpec {
  std::string start = "2015-01-05T00:00:00";  // a Monday
  int hours = 268 * kHoursPerWeek;
  std::uint64_t seed = 1;
  double level = 1.16;  // exp(exp(1.16)) is about $24
  double daily_amplitude = 0.06;
  double weekly_amplitude = 0.03;
  double yearly_amplitude = 0.04;
  double ar_coefficient = 0.95;
  double noise_scale = 0.025;
  double peak_noise_factor = 2.0;
  double spike_scale = 0.1;

  void validate() const;
};

[[nodiscard]] PriceSeries synthesize_prices(const SynthSpec& spec);

}  // namespace mfmpc
