#pragma once

#include "rmpc/rng.hpp"
#include "rmpc/rollout.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace rmpc {

enum class ReferenceFamily { sine, piecewise_constant, recorded };

inline std::string to_string(ReferenceFamily f) {
  switch (f) {
    case ReferenceFamily::sine: return "sine";
    case ReferenceFamily::piecewise_constant: return "piecewise_constant";
    case ReferenceFamily::recorded: return "recorded";
  }
  return "?";
}

inline ReferenceFamily parse_reference_family(const std::string& s) {
  if (s == "sine") return ReferenceFamily::sine;
  if (s == "piecewise_constant" || s == "piecewise-constant") return ReferenceFamily::piecewise_constant;
  if (s == "recorded") return ReferenceFamily::recorded;
  throw ConfigError("unknown reference family '" + s + "'");
}

using Range = std::array<double, 2>;

// Distribution of training/evaluation instances. References are scalar
// (one row).
struct SamplerSpec {
  Vec state_low;
  Vec state_high;
  // When >= 0, this state component is sampled relative to r_1.
  int relative_component = -1;
  ReferenceFamily family = ReferenceFamily::sine;
  Range amplitude{0.0, 1.0};
  Range wavelength{1.0, 1.0};  // same length unit as step_length
  Range phase{0.0, 2.0 * std::numbers::pi};
  double step_length = 1.0;     // distance travelled per step
  Range segment_steps{5, 20};   // piecewise_constant segment lengths
  std::vector<double> recorded;  // recorded family source values
  int horizon = 1;

  void validate() const {
    require(state_low.size() == state_high.size() && state_low.size() > 0,
            "sampler: state box bounds must have equal, positive length");
    require((state_low.array() <= state_high.array()).all(), "sampler: state box low > high");
    require(amplitude[0] <= amplitude[1] && wavelength[0] <= wavelength[1] && phase[0] <= phase[1],
            "sampler: range low > high");
    require(wavelength[0] > 0.0 && step_length > 0.0, "sampler: wavelength and step length must be positive");
    require(segment_steps[0] >= 1 && segment_steps[0] <= segment_steps[1],
            "sampler: invalid segment lengths");
    require(horizon >= 1, "sampler: horizon must be positive");
    require(relative_component < state_low.size(), "sampler: relative component out of range");
    if (family == ReferenceFamily::recorded)
      require(!recorded.empty(), "sampler: recorded family needs source values");
  }
};

// r_i = A sin(2 pi i step / lambda + phase), i = 1..length.
inline RefTraj sine_reference(double amplitude, double wavelength, double step_length, double phase,
                              int length, int first_index = 1) {
  RefTraj r(1, length);
  for (int j = 0; j < length; ++j)
    r(0, j) = amplitude * std::sin(2.0 * std::numbers::pi * (first_index + j) * step_length / wavelength + phase);
  return r;
}

inline RefTraj sample_reference(const SamplerSpec& spec, Rng& rng, int length) {
  switch (spec.family) {
    case ReferenceFamily::sine: {
      const double a = rng.uniform(spec.amplitude[0], spec.amplitude[1]);
      const double lambda = rng.uniform(spec.wavelength[0], spec.wavelength[1]);
      const double phase = rng.uniform(spec.phase[0], spec.phase[1]);
      return sine_reference(a, lambda, spec.step_length, phase, length);
    }
    case ReferenceFamily::piecewise_constant: {
      RefTraj r(1, length);
      int j = 0;
      while (j < length) {
        const double level = rng.uniform(-spec.amplitude[1], spec.amplitude[1]);
        const int seg = static_cast<int>(std::floor(rng.uniform(spec.segment_steps[0], spec.segment_steps[1] + 1.0)));
        for (int k = 0; k < seg && j < length; ++k, ++j) r(0, j) = level;
      }
      return r;
    }
    case ReferenceFamily::recorded: {
      const auto total = static_cast<int>(spec.recorded.size());
      const int start = total > length
                            ? static_cast<int>(std::floor(rng.uniform(0.0, static_cast<double>(total - length + 1))))
                            : 0;
      RefTraj r(1, length);
      for (int j = 0; j < length; ++j) r(0, j) = spec.recorded[std::min(start + j, total - 1)];
      return r;
    }
  }
  throw ContractViolation("sample_reference: unknown family");
}

inline Vec sample_state(const SamplerSpec& spec, Rng& rng, const RefTraj& r) {
  Vec x0(spec.state_low.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = rng.uniform(spec.state_low[i], spec.state_high[i]);
  if (spec.relative_component >= 0) x0[spec.relative_component] += r(0, 0);
  return x0;
}

// Reference first, then x0 (so relative sampling can use r_1).
inline MpcInstance sample_instance(const SamplerSpec& spec, Rng& rng) {
  MpcInstance inst;
  inst.r = sample_reference(spec, rng, spec.horizon);
  inst.x0 = sample_state(spec, rng, inst.r);
  inst.horizon = spec.horizon;
  return inst;
}

inline std::vector<MpcInstance> sample_batch(const SamplerSpec& spec, Rng& rng, int count) {
  std::vector<MpcInstance> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(sample_instance(spec, rng));
  return out;
}

}  // namespace rmpc
