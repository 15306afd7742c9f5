#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "eflab/errors.hpp"
#include "eflab/rng.hpp"

namespace eflab {

/// Monotone corruption schedule kappa with kappa(0) = 0, kappa(1) = 1.
/// kappa(t) is the probability a data token survives at time t, and also the
/// CDF of insertion times at generation.
struct Schedule {
  enum class Kind { linear, polynomial };

  Kind kind = Kind::linear;
  double exponent = 1.0;

  static Schedule linear() { return {}; }
  static Schedule polynomial(double exponent) {
    if (!(exponent > 0.0) || !std::isfinite(exponent))
      throw ConfigError("polynomial schedule exponent must be positive, got " + std::to_string(exponent));
    return {Kind::polynomial, exponent};
  }

  std::string name() const { return kind == Kind::linear ? "linear" : "poly"; }

  friend bool operator==(Schedule const&, Schedule const&) = default;
};

namespace detail {
template <class Scalar>
void check_unit(Scalar t, char const* what) {
  if (!(t >= Scalar(0) && t <= Scalar(1)))
    throw DomainError(std::string(what) + " must lie in [0,1], got " + std::to_string(static_cast<double>(t)));
}
}  // namespace detail

template <class Scalar = double>
Scalar kappa(Schedule const& s, Scalar t) {
  detail::check_unit(t, "kappa: t");
  if (s.kind == Schedule::Kind::linear) return t;
  using std::pow;
  return pow(t, Scalar(s.exponent));
}

template <class Scalar = double>
Scalar kappa_derivative(Schedule const& s, Scalar t) {
  detail::check_unit(t, "kappa_derivative: t");
  if (s.kind == Schedule::Kind::linear) return Scalar(1);
  using std::pow;
  return Scalar(s.exponent) * pow(t, Scalar(s.exponent - 1.0));
}

/// kappa'(t) / (1 - kappa(t)), the factor multiplying the insertion rates.
/// Undefined at t = 1; samplers cap their final step instead of evaluating it there.
template <class Scalar = double>
Scalar kappa_rate_ratio(Schedule const& s, Scalar t) {
  if (!(t >= Scalar(0) && t < Scalar(1)))
    throw DomainError("kappa_rate_ratio: t must lie in [0,1), got " + std::to_string(static_cast<double>(t)));
  if (s.kind == Schedule::Kind::linear) return Scalar(1) / (Scalar(1) - t);
  return kappa_derivative(s, t) / (Scalar(1) - kappa(s, t));
}

template <class Scalar = double>
Scalar kappa_inverse(Schedule const& s, Scalar u) {
  detail::check_unit(u, "kappa_inverse: u");
  if (s.kind == Schedule::Kind::linear) return u;
  using std::pow;
  return pow(u, Scalar(1.0 / s.exponent));
}

/// Time on the extended training clock. tau lies in [-1, 2]; negative values
/// mean "image not yet inserted".
struct ExtendedTime {
  double tau = 0.0;

  double clipped() const { return clip(tau); }
  static double clip(double tau) { return std::min(1.0, std::max(0.0, tau)); }
  friend bool operator==(ExtendedTime const&, ExtendedTime const&) = default;
};

/// tau_img = tau_text - kappa^{-1}(u), u ~ Uniform(0,1).
inline ExtendedTime sample_interleaved_time(Schedule const& s, double tau_text, Rng& rng) {
  if (!(tau_text >= 0.0 && tau_text <= 2.0))
    throw DomainError("sample_interleaved_time: tau_text must lie in [0,2], got " + std::to_string(tau_text));
  return {tau_text - kappa_inverse(s, rng.uniform())};
}

/// Two independent Uniform(0,1) draws (text time, image time).
inline std::pair<double, double> sample_independent_times(Rng& rng) {
  double const t_text = rng.uniform();
  double const t_img = rng.uniform();
  return {t_text, t_img};
}

inline void to_json(nlohmann::json& j, Schedule const& s) {
  j = nlohmann::json{{"kind", s.name()}};
  if (s.kind == Schedule::Kind::polynomial) j["exponent"] = s.exponent;
}

inline void from_json(nlohmann::json const& j, Schedule& s) {
  if (!j.is_object()) throw ConfigError("schedule must be an object");
  for (auto const& [key, _] : j.items())
    if (key != "kind" && key != "exponent") throw ConfigError("schedule: unknown key '" + key + "'");
  auto const kind = j.value("kind", std::string("linear"));
  if (kind == "linear") {
    s = Schedule::linear();
  } else if (kind == "poly") {
    if (!j.contains("exponent") || !j["exponent"].is_number()) throw ConfigError("schedule 'poly' needs a numeric exponent");
    s = Schedule::polynomial(j["exponent"].get<double>());
  } else {
    throw ConfigError("schedule: unknown kind '" + kind + "'");
  }
}

}  // namespace eflab
