#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "movebeam/mvdr.hpp"
#include "movebeam/scene.hpp"

namespace movebeam {

// Horizontal-plane directional response of one frame's filters.
struct BeamPattern {
  std::vector<double> azimuth_deg;  // grid covering [0, 360)
  std::vector<double> freqs_hz;
  std::vector<double> gains_db;  // [azimuth][freq]
  long frame = 0;
  double true_azimuth_deg = 0;  // filled by callers that know the scene

  double gain(long a, long f) const { return gains_db[(size_t)(a * (long)freqs_hz.size() + f)]; }

  // Azimuth of the maximum gain at one probe frequency.
  double main_lobe_deg(long f) const {
    long best = 0;
    for (long a = 1; a < (long)azimuth_deg.size(); ++a)
      if (gain(a, f) > gain(best, f)) best = a;
    return azimuth_deg[(size_t)best];
  }
};

// Far-field steering vector entry for a source at azimuth theta: mic
// displacement along the arrival direction advances the phase, matching the
// exp(-j 2 pi f d / c) delay convention of the simulated transfer functions.
inline std::complex<double> steering_entry(const Vec3& mic, const Vec3& origin, double azimuth_rad,
                                           double freq_hz) {
  double proj = std::cos(azimuth_rad) * (mic.x - origin.x) +
                std::sin(azimuth_rad) * (mic.y - origin.y);
  double phase = 2.0 * M_PI * freq_hz * proj / kSpeedOfSound;
  return {std::cos(phase), std::sin(phase)};
}

// gain(theta, f) = 20 log10 |w^H d(theta, f)| on an azimuth grid.
inline BeamPattern beam_pattern(const BeamformerFilters& filters, const ArrayGeometry& geometry,
                                long frame, const std::vector<double>& freqs_hz, int sample_rate,
                                double azimuth_step_deg = 1.0) {
  if (geometry.num_channels() != filters.C)
    throw std::invalid_argument("beam_pattern: geometry channels do not match filters");
  if (frame < 0 || frame >= filters.T)
    throw std::invalid_argument("beam_pattern: frame out of range");
  if (azimuth_step_deg <= 0) throw std::invalid_argument("beam_pattern: bad azimuth step");
  const long frame_len = 2 * (filters.F - 1);
  BeamPattern bp;
  bp.frame = frame;
  bp.freqs_hz = freqs_hz;
  for (double az = 0.0; az < 360.0 - 1e-9; az += azimuth_step_deg) bp.azimuth_deg.push_back(az);
  bp.gains_db.assign(bp.azimuth_deg.size() * freqs_hz.size(), 0.0);
  const Vec3 origin = geometry.centroid();
  for (size_t fi = 0; fi < freqs_hz.size(); ++fi) {
    long bin = (long)std::llround(freqs_hz[fi] * (double)frame_len / (double)sample_rate);
    if (bin < 0 || bin >= filters.F)
      throw std::invalid_argument("beam_pattern: probe frequency outside the band");
    for (size_t ai = 0; ai < bp.azimuth_deg.size(); ++ai) {
      double az = bp.azimuth_deg[ai] * M_PI / 180.0;
      std::complex<double> resp(0, 0);
      for (long c = 0; c < filters.C; ++c)
        resp += std::conj(filters.at(frame, bin, c)) *
                steering_entry(geometry.mics[(size_t)c], origin, az, freqs_hz[fi]);
      bp.gains_db[ai * freqs_hz.size() + fi] = 20.0 * std::log10(std::max(std::abs(resp), 1e-12));
    }
  }
  return bp;
}

// Azimuth (degrees in [0, 360)) of a source position seen from the array.
inline double source_azimuth_deg(const Vec3& source, const ArrayGeometry& geometry) {
  Vec3 d = source - geometry.centroid();
  double az = std::atan2(d.y, d.x) * 180.0 / M_PI;
  return az < 0 ? az + 360.0 : az;
}

// Circular distance between two azimuths, degrees in [0, 180].
inline double azimuth_distance_deg(double a, double b) {
  double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

}  // namespace movebeam
