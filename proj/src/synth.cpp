#include "mfmpc/synth.hpp"

#include "mfmpc/error.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mfmpc {
namespace {

// Draws nothing when spikes are off so that spike-free series keep their stream.
double spike_scale_draw(std::mt19937_64& rng, std::normal_distribution<double>& normal, double scale) {
  return scale > 0.0 ? scale * std::abs(normal(rng)) : 0.0;
}

}  // namespace

void SynthSpec::validate() const {
  (void)parse_timestamp(start);
  if (hours < 1) throw ConfigError("synthetic series needs at least one hour");
  if (!(std::abs(ar_coefficient) < 1.0)) throw ConfigError("AR coefficient must lie in (-1, 1)");
  if (!(noise_scale >= 0.0) || !(peak_noise_factor >= 0.0) || !(spike_scale >= 0.0)) throw ConfigError("noise scales must be nonnegative");
  for (double v : {level, daily_amplitude, weekly_amplitude, yearly_amplitude, noise_scale, peak_noise_factor, spike_scale}) {
    if (!std::isfinite(v)) throw ConfigError("synthetic parameters must be finite");
  }
}

PriceSeries synthesize_prices(const SynthSpec& spec) {
  spec.validate();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const std::int64_t first = parse_timestamp(spec.start);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;

  // Start the residual from its stationary distribution.
  const double stationary = spec.noise_scale / std::sqrt(1.0 - spec.ar_coefficient * spec.ar_coefficient);
  double r = stationary * normal(rng);
  std::vector<double> prices(static_cast<std::size_t>(spec.hours));
  for (int i = 0; i < spec.hours; ++i) {
    const std::int64_t hour = first + i;
    const int how = hour_of_week(hour);
    const int hod = how % 24;
    const bool peak = how < 5 * 24 && hod >= 12 && hod < 20;
    if (i > 0) r = spec.ar_coefficient * r + spec.noise_scale * (peak ? spec.peak_noise_factor : 1.0) * normal(rng);
    const double spike = peak ? spike_scale_draw(rng, normal, spec.spike_scale) : 0.0;
    const double t = static_cast<double>(hour);
    const double z = spec.level + spec.daily_amplitude * std::cos(two_pi * (hod - 17) / 24.0) +
                     spec.weekly_amplitude * std::cos(two_pi * (how - 60) / 168.0) +
                     spec.yearly_amplitude * std::cos(two_pi * (t / 24.0 - 200.0) / 365.0) + r + spike;
    prices[static_cast<std::size_t>(i)] = expexp(z);
  }
  return PriceSeries::hourly(first, std::move(prices));
}

}  // namespace mfmpc
