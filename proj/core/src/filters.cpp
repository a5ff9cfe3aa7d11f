#include "gapfill/filters.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gapfill {

namespace {

Biquad bilinear_pair(double re_p, double warped, double sample_rate_hz) {
  // Analog section (s - wa p)(s - wa conj(p)) = s^2 + a1a s + a0a with the
  // pole p on the unit circle, so |p| = 1.
  const double a1a = -2.0 * re_p * warped;
  const double a0a = warped * warped;
  const double k = 2.0 * sample_rate_hz;
  const double den0 = k * k + a1a * k + a0a;
  Biquad s;
  s.b0 = a0a / den0;
  s.b1 = 2.0 * a0a / den0;
  s.b2 = a0a / den0;
  s.a1 = 2.0 * (a0a - k * k) / den0;
  s.a2 = (k * k - a1a * k + a0a) / den0;
  return s;
}

Biquad bilinear_real(double warped, double sample_rate_hz) {
  // First-order section for the real pole at -wa.
  const double k = 2.0 * sample_rate_hz;
  const double den0 = k + warped;
  Biquad s;
  s.b0 = warped / den0;
  s.b1 = warped / den0;
  s.b2 = 0.0;
  s.a1 = (warped - k) / den0;
  s.a2 = 0.0;
  return s;
}

// One causal biquad pass in direct form II transposed, with the delay line
// primed for a steady-state response to x[0]. For a constant input u the
// internal states settle at s1 = u (g - b0) and s2 = u (b2 - a2 g) where g is
// the DC gain; starting there removes the startup transient entirely.
void biquad_pass(std::vector<double>& x, const Biquad& q) {
  if (x.empty()) return;
  const double g = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
  double s1 = x[0] * (g - q.b0);
  double s2 = x[0] * (q.b2 - q.a2 * g);
  for (double& v : x) {
    const double u = v;
    const double y = q.b0 * u + s1;
    s1 = q.b1 * u - q.a1 * y + s2;
    s2 = q.b2 * u - q.a2 * y;
    v = y;
  }
}

void cascade_pass(std::vector<double>& x, const ButterworthFilter& filter) {
  for (const Biquad& q : filter.sections) biquad_pass(x, q);
}

// Fill unobserved cells with the nearest observed value (earlier wins ties)
// so the anti-alias filter sees a finite signal. Returns false when nothing
// is observed.
bool nearest_fill(std::vector<double>& values, std::span<const std::uint8_t> observed) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(values.size());
  std::ptrdiff_t prev = -1;
  std::vector<std::ptrdiff_t> prev_obs(values.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    if (observed[static_cast<std::size_t>(t)]) prev = t;
    prev_obs[static_cast<std::size_t>(t)] = prev;
  }
  std::ptrdiff_t next = -1;
  bool any = false;
  for (std::ptrdiff_t t = n - 1; t >= 0; --t) {
    if (observed[static_cast<std::size_t>(t)]) {
      next = t;
      any = true;
    }
    const std::ptrdiff_t p = prev_obs[static_cast<std::size_t>(t)];
    if (observed[static_cast<std::size_t>(t)]) continue;
    if (p < 0 && next < 0) continue;
    std::ptrdiff_t pick;
    if (p < 0)
      pick = next;
    else if (next < 0)
      pick = p;
    else
      pick = (t - p <= next - t) ? p : next;
    values[static_cast<std::size_t>(t)] = values[static_cast<std::size_t>(pick)];
  }
  return any;
}

}  // namespace

ButterworthFilter design_butterworth(int order, double cutoff_hz, double sample_rate_hz) {
  if (order < 1) throw std::invalid_argument("butterworth: order must be >= 1");
  if (sample_rate_hz <= 0) throw std::invalid_argument("butterworth: sample rate must be > 0");
  if (!(cutoff_hz > 0) || !(cutoff_hz < sample_rate_hz / 2.0))
    throw std::invalid_argument("butterworth: cutoff must lie in (0, Nyquist); got " +
                                std::to_string(cutoff_hz) + " Hz at fs=" +
                                std::to_string(sample_rate_hz) + " Hz");

  const double warped =
      2.0 * sample_rate_hz * std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);

  ButterworthFilter f;
  f.order = order;
  f.cutoff_hz = cutoff_hz;
  f.sample_rate_hz = sample_rate_hz;
  // Poles of the analog prototype: exp(i pi (2k + n - 1) / (2n)), k = 1..n,
  // all in the left half plane. Conjugate pairs collapse to one biquad.
  for (int k = 1; 2 * k <= order; ++k) {
    const double theta =
        std::numbers::pi * (2.0 * k + order - 1.0) / (2.0 * order);
    f.sections.push_back(bilinear_pair(std::cos(theta), warped, sample_rate_hz));
  }
  if (order % 2 == 1) f.sections.push_back(bilinear_real(warped, sample_rate_hz));
  return f;
}

double magnitude_at(const ButterworthFilter& filter, double freq_hz) {
  const double w = 2.0 * std::numbers::pi * freq_hz / filter.sample_rate_hz;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  double mag = 1.0;
  for (const Biquad& q : filter.sections) {
    const std::complex<double> num = q.b0 + q.b1 * z1 + q.b2 * z2;
    const std::complex<double> den = 1.0 + q.a1 * z1 + q.a2 * z2;
    mag *= std::abs(num) / std::abs(den);
  }
  return mag;
}

std::vector<double> filter_forward(std::span<const double> x, const ButterworthFilter& filter) {
  std::vector<double> y(x.begin(), x.end());
  cascade_pass(y, filter);
  return y;
}

std::vector<double> filtfilt(std::span<const double> x, const ButterworthFilter& filter) {
  const std::size_t n = x.size();
  const std::size_t pad = static_cast<std::size_t>(3 * filter.order);
  if (n <= pad)
    throw std::invalid_argument("filtfilt: signal length " + std::to_string(n) +
                                " must exceed 3 x order = " + std::to_string(pad));

  // Odd reflection about the endpoints keeps constants and local trends
  // continuous across the pad, which keeps edge transients small.
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x[0] - x[pad - i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 2 - i]);

  cascade_pass(ext, filter);
  std::reverse(ext.begin(), ext.end());
  cascade_pass(ext, filter);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

std::vector<double> median_filter(std::span<const double> x, int kernel_width) {
  if (kernel_width < 1 || kernel_width % 2 == 0)
    throw std::invalid_argument("median_filter: kernel width must be odd and positive");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t half = kernel_width / 2;
  std::vector<double> out(x.size());
  std::vector<double> window;
  window.reserve(static_cast<std::size_t>(kernel_width));
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - half);
    const std::ptrdiff_t hi = std::min(n - 1, t + half);
    window.assign(x.begin() + lo, x.begin() + hi + 1);
    const std::size_t m = window.size();
    auto mid = window.begin() + static_cast<std::ptrdiff_t>(m / 2);
    std::nth_element(window.begin(), mid, window.end());
    if (m % 2 == 1) {
      out[static_cast<std::size_t>(t)] = *mid;
    } else {
      const double hi_med = *mid;
      const double lo_med = *std::max_element(window.begin(), mid);
      out[static_cast<std::size_t>(t)] = 0.5 * (lo_med + hi_med);
    }
  }
  return out;
}

std::vector<double> apply_filter(std::span<const double> x, const FilterSpec& spec,
                                 double sample_rate_hz) {
  switch (spec.kind) {
    case FilterSpec::Kind::butterworth_lowpass:
      return filtfilt(x, design_butterworth(spec.order, spec.cutoff_hz, sample_rate_hz));
    case FilterSpec::Kind::median:
      return median_filter(x, spec.kernel_width);
  }
  throw std::logic_error("apply_filter: unknown filter kind");
}

std::vector<std::vector<double>> remove_gravity(const std::vector<std::vector<double>>& acc_3axis,
                                                double sample_rate_hz, double cutoff_hz,
                                                int order) {
  if (acc_3axis.size() != 3)
    throw std::invalid_argument("remove_gravity: expected exactly 3 axes, got " +
                                std::to_string(acc_3axis.size()));
  const ButterworthFilter lp = design_butterworth(order, cutoff_hz, sample_rate_hz);
  std::vector<std::vector<double>> body(3);
  for (std::size_t a = 0; a < 3; ++a) {
    const std::vector<double> gravity = filtfilt(acc_3axis[a], lp);
    body[a].resize(acc_3axis[a].size());
    for (std::size_t t = 0; t < body[a].size(); ++t)
      body[a][t] = acc_3axis[a][t] - gravity[t];
  }
  return body;
}

TimeSeriesFrame resample(const TimeSeriesFrame& frame, double target_hz, int antialias_order) {
  if (target_hz <= 0) throw std::invalid_argument("resample: target rate must be > 0");
  const double ratio = frame.sample_rate_hz / target_hz;
  const double rounded = std::round(ratio);
  if (ratio < 1.0 - 1e-9 || std::abs(ratio - rounded) > 1e-9)
    throw std::invalid_argument(
        "resample: only integer decimation is supported; source " +
        std::to_string(frame.sample_rate_hz) + " Hz to target " + std::to_string(target_hz) +
        " Hz gives a non-integer factor " + std::to_string(ratio));
  const std::size_t factor = static_cast<std::size_t>(rounded);
  if (factor == 1) return frame;

  const std::size_t n_out = frame.n_steps / factor;
  TimeSeriesFrame out = TimeSeriesFrame::make(frame.channels, n_out, target_hz, frame.subject_id);
  out.start_time = frame.start_time;

  const ButterworthFilter aa =
      design_butterworth(antialias_order, 0.45 * target_hz, frame.sample_rate_hz);

  for (std::size_t c = 0; c < frame.n_channels(); ++c) {
    const auto src_vals = frame.channel_values(c);
    const auto src_obs = frame.channel_observed(c);
    std::vector<double> filled(src_vals.begin(), src_vals.end());
    const bool any = nearest_fill(filled, src_obs);
    std::vector<double> smooth;
    if (any) smooth = filtfilt(filled, aa);
    for (std::size_t t = 0; t < n_out; ++t) {
      const std::size_t block = t * factor;
      bool all_obs = any;
      for (std::size_t j = block; j < block + factor && all_obs; ++j)
        if (!src_obs[j]) all_obs = false;
      if (all_obs) out.set(c, t, smooth[block]);
    }
  }
  return out;
}

}  // namespace gapfill
