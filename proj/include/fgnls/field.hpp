// SPDX-License-Identifier: Apache-2.0
//
// Sampled complex envelope on a uniform time grid at a list of distances.
#pragma once

#include <string>
#include <vector>

#include "fgnls/common.hpp"

namespace fgnls {

enum class FieldUnits { dimensionless, dimensional };

// When dimensional, amplitudes are stored in sqrt(mW): |A|^2 is milliwatts.
struct FieldGrid {
  int n_t = 0;
  double dt = 0.0;       // time step (ns when dimensional, tau units otherwise)
  double t_start = 0.0;  // first sample time
  std::vector<double> z_values;  // distances (km when dimensional, zeta otherwise)
  std::vector<cplx> samples;     // row-major: samples[iz * n_t + it]
  FieldUnits units = FieldUnits::dimensionless;

  int n_z() const { return static_cast<int>(z_values.size()); }
  cplx& at(int iz, int it) { return samples[static_cast<size_t>(iz) * n_t + it]; }
  const cplx& at(int iz, int it) const { return samples[static_cast<size_t>(iz) * n_t + it]; }

  double time_at(int it) const { return t_start + it * dt; }

  // Mean of |A|^2 over the time window at one distance.
  double average_power(int iz) const {
    double acc = 0.0;
    for (int it = 0; it < n_t; ++it) acc += std::norm(at(iz, it));
    return n_t > 0 ? acc / n_t : 0.0;
  }
  double peak_power(int iz) const {
    double best = 0.0;
    for (int it = 0; it < n_t; ++it) best = std::max(best, std::norm(at(iz, it)));
    return best;
  }

  void check_finite() const {
    for (const cplx& v : samples)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw NonFiniteField("field grid contains a non-finite sample");
  }
};

}  // namespace fgnls
