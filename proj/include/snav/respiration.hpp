#pragma once

#include <mutex>
#include <span>
#include <vector>

#include "snav/geometry.hpp"
#include "snav/marker.hpp"

namespace snav {

struct BreathSample {
  double t = 0.0;  ///< seconds
  double displacement = 0.0;  ///< mm along the reference normal, relative to the first sample
};

struct BreathSignal {
  std::vector<BreathSample> samples;

  /// Throws NonMonotoneTime unless timestamps strictly increase.
  void validate() const;
};

struct GateInterval {
  double start = 0.0;
  double end = 0.0;
  double mean_level = 0.0;
};

struct AlarmEvent {
  double t = 0.0;
  double displacement = 0.0;
};

/// displacement_i = (center_i - center_0) . reference_normal. Throws
/// EmptyStream (< 2 poses) or NonMonotoneTime.
BreathSignal extract_signal(std::span<const MarkerPose> poses, const Vec3& reference_normal);

/// Dominant period from the autocorrelation peak, refined by a parabola
/// through the peak and its neighbours. Non-uniform input is resampled onto
/// the median sample interval. Throws NoPeriodicity when the peak
/// correlation is below 0.5 or the signal is flat.
double estimate_period(const BreathSignal& signal);

/// Maximal runs covered by windows of length min_duration whose samples all
/// stay within +/- amplitude_tol of the window mean.
std::vector<GateInterval> detect_breath_hold(const BreathSignal& signal, double amplitude_tol, double min_duration);

/// Fires at the first sample whose deviation from the median of the
/// preceding `baseline_window` seconds exceeds `threshold`; re-arms once the
/// deviation falls back within threshold.
std::vector<AlarmEvent> motion_alarm(const BreathSignal& signal, double threshold, double baseline_window = 2.0);

/// Single-writer stream of breathing samples; readers get copies.
class BreathMonitor {
 public:
  /// Throws NonMonotoneTime if t does not exceed the last timestamp.
  void append(double t, double displacement);
  BreathSignal snapshot() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  BreathSignal signal_;
};

}  // namespace snav
