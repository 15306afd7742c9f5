#pragma once

#include <cstdint>
#include <vector>

#include "eflab/metrics.hpp"
#include "eflab/schedule.hpp"

namespace eflab::validation {

struct ScheduleCheckConfig {
  std::size_t draws = 100000;
  double alpha = 0.01;
  double sigmas = 3.0;
  std::vector<double> tau_values{0.25, 0.5, 0.75, 1.0, 1.5};
  /// Mutation hook: the sampler-side hazard uses ratio * this factor.
  double ratio_multiplier = 1.0;
};

/// Samples the time at which a missing token is inserted by a CTMC whose
/// hazard is multiplier * kappa_rate_ratio, by inverting the numerically
/// integrated cumulative hazard.
class HazardSampler {
public:
  HazardSampler(Schedule const& s, double multiplier, std::size_t panels = 4096);
  double sample(Rng& rng) const;
  /// Cumulative hazard at t (linear interpolation between nodes).
  double cumulative(double t) const;

private:
  std::vector<double> t_, h_;
};

/// Monte Carlo laws of the schedule: insertion-time CDF, image presence on
/// both the training and the sampling side, and token retention.
std::vector<metrics::MetricReport> validate_schedule(Schedule const& s, ScheduleCheckConfig const& cfg,
                                                     std::uint64_t seed);

/// Mean retained fraction of a length-`len` sequence under text-only
/// corruption with t ~ U(0,1), compared against the mean of kappa.
metrics::MetricReport retention_report(Schedule const& s, std::size_t draws, std::size_t len, double tolerance,
                                       std::uint64_t seed);

}  // namespace eflab::validation
