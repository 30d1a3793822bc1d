#include "snav/respiration.hpp"

#include <algorithm>
#include <cmath>

#include "snav/error.hpp"

namespace snav {

namespace {

constexpr double kTimeEps = 1e-9;

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

/// Samples on a uniform grid with the median spacing.
std::vector<double> uniform_values(const BreathSignal& s, double& dt) {
  const auto& x = s.samples;
  std::vector<double> diffs;
  diffs.reserve(x.size() - 1);
  for (std::size_t i = 1; i < x.size(); ++i) diffs.push_back(x[i].t - x[i - 1].t);
  dt = median(diffs);
  const bool uniform = std::all_of(diffs.begin(), diffs.end(), [&](double d) { return std::abs(d - dt) <= 1e-6 * dt; });
  std::vector<double> out;
  if (uniform) {
    for (const BreathSample& b : x) out.push_back(b.displacement);
    return out;
  }
  const double t0 = x.front().t;
  const auto n = static_cast<std::size_t>(std::floor((x.back().t - t0) / dt)) + 1;
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    while (j + 2 < x.size() && x[j + 1].t < t) ++j;
    const double w = std::clamp((t - x[j].t) / (x[j + 1].t - x[j].t), 0.0, 1.0);
    out.push_back(x[j].displacement + w * (x[j + 1].displacement - x[j].displacement));
  }
  return out;
}

}  // namespace

void BreathSignal::validate() const {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) throw Error(ErrorCode::NonMonotoneTime, "timestamps must strictly increase");
  }
}

BreathSignal extract_signal(std::span<const MarkerPose> poses, const Vec3& reference_normal) {
  if (poses.size() < 2) throw Error(ErrorCode::EmptyStream, "need at least two poses");
  const double n = reference_normal.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::InvalidArgument, "reference normal must be nonzero");
  const Vec3 axis = reference_normal / n;
  BreathSignal s;
  s.samples.reserve(poses.size());
  for (const MarkerPose& p : poses) s.samples.push_back({p.timestamp, (p.center - poses.front().center).dot(axis)});
  s.validate();
  return s;
}

double estimate_period(const BreathSignal& signal) {
  signal.validate();
  if (signal.samples.size() < 16) throw Error(ErrorCode::NoPeriodicity, "too few samples for two cycles");
  double dt = 0.0;
  std::vector<double> x = uniform_values(signal, dt);
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double& v : x) {
    v -= mean;
    var += v * v;
  }
  var /= static_cast<double>(n);
  if (!(var > 1e-18)) throw Error(ErrorCode::NoPeriodicity, "signal is flat");

  const std::size_t max_lag = n / 2 + 1;
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag && k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) acc += x[i] * x[i + k];
    r[k] = acc / static_cast<double>(n - k) / var;
  }

  std::size_t start = 1;
  while (start < max_lag && r[start] >= 0.0) ++start;
  if (start >= max_lag) throw Error(ErrorCode::NoPeriodicity, "autocorrelation never decorrelates");

  const std::size_t last = max_lag - 1;  // keeps a right neighbour for refinement
  std::size_t best = start;
  for (std::size_t k = start; k <= last; ++k) {
    if (r[k] > r[best]) best = k;
  }
  // Prefer the fundamental over a harmonic multiple of nearly equal height.
  for (std::size_t k = start + 1; k < best; ++k) {
    if (r[k] >= r[k - 1] && r[k] >= r[k + 1] && r[k] >= 0.9 * r[best]) {
      best = k;
      break;
    }
  }
  if (r[best] < 0.5) throw Error(ErrorCode::NoPeriodicity, "autocorrelation peak below 0.5");

  double lag = static_cast<double>(best);
  const double y0 = r[best - 1];
  const double y1 = r[best];
  const double y2 = r[best + 1];
  const double denom = y0 - 2.0 * y1 + y2;
  if (denom < 0.0) lag += std::clamp(0.5 * (y0 - y2) / denom, -0.5, 0.5);
  return lag * dt;
}

std::vector<GateInterval> detect_breath_hold(const BreathSignal& signal, double amplitude_tol, double min_duration) {
  if (!(amplitude_tol > 0.0) || !(min_duration > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "amplitude_tol and min_duration must be positive");
  }
  signal.validate();
  const auto& x = signal.samples;
  const std::size_t n = x.size();

  std::vector<std::pair<std::size_t, std::size_t>> flat;  // inclusive sample ranges
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    j = std::max(j, i);
    while (j + 1 < n && x[j + 1].t - x[i].t <= min_duration + kTimeEps) ++j;
    if (x[j].t - x[i].t < min_duration - kTimeEps) break;  // later windows are shorter still
    double sum = 0.0;
    double lo = x[i].displacement;
    double hi = lo;
    for (std::size_t k = i; k <= j; ++k) {
      sum += x[k].displacement;
      lo = std::min(lo, x[k].displacement);
      hi = std::max(hi, x[k].displacement);
    }
    const double mean = sum / static_cast<double>(j - i + 1);
    if (hi - mean <= amplitude_tol && mean - lo <= amplitude_tol) flat.emplace_back(i, j);
  }

  std::vector<GateInterval> gates;
  std::size_t k = 0;
  while (k < flat.size()) {
    std::size_t a = flat[k].first;
    std::size_t b = flat[k].second;
    ++k;
    while (k < flat.size() && flat[k].first <= b) b = std::max(b, flat[k++].second);
    double sum = 0.0;
    for (std::size_t m = a; m <= b; ++m) sum += x[m].displacement;
    gates.push_back({x[a].t, x[b].t, sum / static_cast<double>(b - a + 1)});
  }
  return gates;
}

std::vector<AlarmEvent> motion_alarm(const BreathSignal& signal, double threshold, double baseline_window) {
  if (!(threshold > 0.0) || !(baseline_window > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold and baseline window must be positive");
  }
  signal.validate();
  const auto& x = signal.samples;
  std::vector<AlarmEvent> events;
  bool armed = true;
  std::size_t first = 0;
  std::vector<double> window;
  for (std::size_t i = 1; i < x.size(); ++i) {
    while (x[i].t - x[first].t > baseline_window + kTimeEps) ++first;
    window.clear();
    for (std::size_t k = first; k < i; ++k) window.push_back(x[k].displacement);
    if (window.empty()) continue;
    const double dev = std::abs(x[i].displacement - median(window));
    if (armed && dev > threshold) {
      events.push_back({x[i].t, x[i].displacement});
      armed = false;
    } else if (!armed && dev <= threshold) {
      armed = true;
    }
  }
  return events;
}

void BreathMonitor::append(double t, double displacement) {
  std::lock_guard lock(mutex_);
  if (!signal_.samples.empty() && !(t > signal_.samples.back().t)) {
    throw Error(ErrorCode::NonMonotoneTime, "appended timestamp does not increase");
  }
  signal_.samples.push_back({t, displacement});
}

BreathSignal BreathMonitor::snapshot() const {
  std::lock_guard lock(mutex_);
  return signal_;
}

std::size_t BreathMonitor::size() const {
  std::lock_guard lock(mutex_);
  return signal_.samples.size();
}

}  // namespace snav
