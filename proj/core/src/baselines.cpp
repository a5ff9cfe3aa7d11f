#include "gapfill/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace gapfill {

namespace {

struct Anchors {
  std::vector<double> t;  // observed indices, ascending
  std::vector<double> y;
};

Anchors collect_anchors(std::span<const double> values, std::span<const std::uint8_t> observed,
                        const char* who) {
  Anchors a;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (observed[i]) {
      a.t.push_back(static_cast<double>(i));
      a.y.push_back(values[i]);
    }
  if (a.t.empty())
    throw std::invalid_argument(std::string(who) + ": series has no observed points");
  return a;
}

std::vector<double> constant_fill(std::span<const double> values,
                                  std::span<const std::uint8_t> observed, double fill) {
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!observed[i]) out[i] = fill;
  return out;
}

void check_sizes(std::span<const double> values, std::span<const std::uint8_t> observed,
                 const char* who) {
  if (values.size() != observed.size())
    throw std::invalid_argument(std::string(who) + ": values/mask size mismatch");
}

// Tridiagonal solve (Thomas algorithm); diagonals are modified in place.
std::vector<double> solve_tridiagonal(std::vector<double>& sub, std::vector<double>& diag,
                                      std::vector<double>& sup, std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double w = sub[i] / diag[i - 1];
    diag[i] -= w * sup[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<double> x(n);
  x[n - 1] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - sup[i] * x[i + 1]) / diag[i];
  return x;
}

// Second derivatives M_i of the cubic spline through (t, y). Not-a-knot ties
// the outer moments to the interior ones (third-derivative continuity at the
// second and second-to-last knots), which is what makes cubics reproduce
// exactly; natural pins M to zero at the ends.
std::vector<double> cubic_moments(const std::vector<double>& t, const std::vector<double>& y,
                                  SplineBoundary boundary) {
  const std::size_t m = t.size();
  std::vector<double> h(m - 1);
  for (std::size_t i = 0; i + 1 < m; ++i) h[i] = t[i + 1] - t[i];

  const std::size_t n = m - 2;  // unknowns M_1 .. M_{m-2}
  std::vector<double> sub(n, 0), diag(n, 0), sup(n, 0), rhs(n, 0);
  for (std::size_t i = 1; i <= m - 2; ++i) {
    const std::size_t k = i - 1;
    sub[k] = h[i - 1];
    diag[k] = 2.0 * (h[i - 1] + h[i]);
    sup[k] = h[i];
    rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
  }

  std::vector<double> moments(m, 0.0);
  if (boundary == SplineBoundary::natural) {
    auto inner = solve_tridiagonal(sub, diag, sup, rhs);
    for (std::size_t i = 0; i < n; ++i) moments[i + 1] = inner[i];
    return moments;
  }

  // Not-a-knot: M_0 = (1 + h0/h1) M_1 - (h0/h1) M_2 folded into the first
  // row, mirrored at the other end.
  const double r0 = h[0] / h[1];
  diag[0] += h[0] * (1.0 + r0);
  sup[0] -= h[0] * r0;
  const double rn = h[m - 2] / h[m - 3];
  diag[n - 1] += h[m - 2] * (1.0 + rn);
  sub[n - 1] -= h[m - 2] * rn;

  auto inner = solve_tridiagonal(sub, diag, sup, rhs);
  for (std::size_t i = 0; i < n; ++i) moments[i + 1] = inner[i];
  moments[0] = (1.0 + r0) * moments[1] - r0 * moments[2];
  moments[m - 1] = (1.0 + rn) * moments[m - 2] - rn * moments[m - 3];
  return moments;
}

double eval_cubic(const std::vector<double>& t, const std::vector<double>& y,
                  const std::vector<double>& moments, std::size_t i, double x) {
  const double hi = t[i + 1] - t[i];
  const double a = t[i + 1] - x;
  const double b = x - t[i];
  return moments[i] * a * a * a / (6.0 * hi) + moments[i + 1] * b * b * b / (6.0 * hi) +
         (y[i] / hi - moments[i] * hi / 6.0) * a + (y[i + 1] / hi - moments[i + 1] * hi / 6.0) * b;
}

// Knot slopes z_i of the quadratic spline. The start slope comes from the
// parabola through the first three anchors (the quadratic analog of
// not-a-knot), which keeps degree-2 data exact; the rest follow from C^1
// continuity.
std::vector<double> quadratic_slopes(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t m = t.size();
  std::vector<double> z(m);
  const double d01 = (y[1] - y[0]) / (t[1] - t[0]);
  const double d12 = (y[2] - y[1]) / (t[2] - t[1]);
  const double dd = (d12 - d01) / (t[2] - t[0]);
  z[0] = d01 + dd * (t[0] - t[1]);
  for (std::size_t i = 0; i + 1 < m; ++i)
    z[i + 1] = 2.0 * (y[i + 1] - y[i]) / (t[i + 1] - t[i]) - z[i];
  return z;
}

double eval_quadratic(const std::vector<double>& t, const std::vector<double>& y,
                      const std::vector<double>& z, std::size_t i, double x) {
  const double h = t[i + 1] - t[i];
  const double c = (z[i + 1] - z[i]) / (2.0 * h);
  const double d = x - t[i];
  return y[i] + z[i] * d + c * d * d;
}

}  // namespace

std::vector<double> impute_mean(std::span<const double> values,
                                std::span<const std::uint8_t> observed) {
  check_sizes(values, observed, "impute_mean");
  const Anchors a = collect_anchors(values, observed, "impute_mean");
  double sum = 0;
  for (double v : a.y) sum += v;
  return constant_fill(values, observed, sum / static_cast<double>(a.y.size()));
}

std::vector<double> impute_median(std::span<const double> values,
                                  std::span<const std::uint8_t> observed) {
  check_sizes(values, observed, "impute_median");
  Anchors a = collect_anchors(values, observed, "impute_median");
  std::vector<double>& v = a.y;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  const double med = (m % 2 == 1) ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  return constant_fill(values, observed, med);
}

std::vector<double> impute_mode(std::span<const double> values,
                                std::span<const std::uint8_t> observed) {
  check_sizes(values, observed, "impute_mode");
  const Anchors a = collect_anchors(values, observed, "impute_mode");
  std::map<double, std::size_t> counts;  // keys rounded to 6 decimals
  for (double v : a.y) counts[std::round(v * 1e6) / 1e6]++;
  double best = counts.begin()->first;
  std::size_t best_n = counts.begin()->second;
  for (const auto& [val, n] : counts)
    if (n > best_n) {  // map order makes the smallest value win ties
      best = val;
      best_n = n;
    }
  return constant_fill(values, observed, best);
}

std::vector<double> impute_nearest(std::span<const double> values,
                                   std::span<const std::uint8_t> observed) {
  check_sizes(values, observed, "impute_nearest");
  collect_anchors(values, observed, "impute_nearest");  // existence check
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(values.size());
  std::vector<std::ptrdiff_t> prev(values.size()), next(values.size());
  std::ptrdiff_t last = -1;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (observed[static_cast<std::size_t>(i)]) last = i;
    prev[static_cast<std::size_t>(i)] = last;
  }
  last = -1;
  for (std::ptrdiff_t i = n - 1; i >= 0; --i) {
    if (observed[static_cast<std::size_t>(i)]) last = i;
    next[static_cast<std::size_t>(i)] = last;
  }
  std::vector<double> out(values.begin(), values.end());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    if (observed[u]) continue;
    const std::ptrdiff_t p = prev[u], q = next[u];
    std::ptrdiff_t pick;
    if (p < 0)
      pick = q;
    else if (q < 0)
      pick = p;
    else
      pick = (i - p <= q - i) ? p : q;  // earlier wins the tie
    out[u] = values[static_cast<std::size_t>(pick)];
  }
  return out;
}

std::vector<double> impute_linear(std::span<const double> values,
                                  std::span<const std::uint8_t> observed) {
  check_sizes(values, observed, "impute_linear");
  collect_anchors(values, observed, "impute_linear");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(values.size());
  std::vector<double> out(values.begin(), values.end());
  std::ptrdiff_t left = -1;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (observed[static_cast<std::size_t>(i)]) {
      left = i;
      continue;
    }
    std::ptrdiff_t right = i + 1;
    while (right < n && !observed[static_cast<std::size_t>(right)]) ++right;
    const bool has_right = right < n;
    for (std::ptrdiff_t j = i; j < (has_right ? right : n); ++j) {
      const std::size_t u = static_cast<std::size_t>(j);
      if (left < 0)
        out[u] = values[static_cast<std::size_t>(right)];
      else if (!has_right)
        out[u] = values[static_cast<std::size_t>(left)];
      else {
        const double f = static_cast<double>(j - left) / static_cast<double>(right - left);
        out[u] = values[static_cast<std::size_t>(left)] +
                 f * (values[static_cast<std::size_t>(right)] -
                      values[static_cast<std::size_t>(left)]);
      }
    }
    i = has_right ? right : n;
    left = right;
  }
  return out;
}

std::vector<double> impute_spline(std::span<const double> values,
                                  std::span<const std::uint8_t> observed, int order,
                                  SplineBoundary boundary) {
  check_sizes(values, observed, "impute_spline");
  if (order != 2 && order != 3)
    throw std::invalid_argument("impute_spline: order must be 2 or 3, got " +
                                std::to_string(order));
  const Anchors a = collect_anchors(values, observed, "impute_spline");
  const std::size_t m = a.t.size();
  if (m < static_cast<std::size_t>(order) + 1)
    throw std::invalid_argument("impute_spline: need at least " + std::to_string(order + 1) +
                                " observed points for order " + std::to_string(order) + ", got " +
                                std::to_string(m));

  std::vector<double> coeff;
  if (order == 3)
    coeff = cubic_moments(a.t, a.y, boundary);
  else
    coeff = quadratic_slopes(a.t, a.y);

  std::vector<double> out(values.begin(), values.end());
  std::size_t seg = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (observed[i]) continue;
    const double x = static_cast<double>(i);
    if (x < a.t.front()) {
      out[i] = a.y.front();  // no left anchor: nearest extension
      continue;
    }
    if (x > a.t.back()) {
      out[i] = a.y.back();
      continue;
    }
    while (seg + 2 < m && a.t[seg + 1] < x) ++seg;
    out[i] = (order == 3) ? eval_cubic(a.t, a.y, coeff, seg, x)
                          : eval_quadratic(a.t, a.y, coeff, seg, x);
  }
  return out;
}

ImputerDescriptor ImputerDescriptor::parse(const std::string& text) {
  ImputerDescriptor d;
  if (text == "mean") {
    d.kind = ImputerKind::mean;
  } else if (text == "median") {
    d.kind = ImputerKind::median;
  } else if (text == "mode") {
    d.kind = ImputerKind::mode;
  } else if (text == "nearest") {
    d.kind = ImputerKind::nearest;
  } else if (text == "linear") {
    d.kind = ImputerKind::linear;
  } else if (text == "spline" || text == "spline:3") {
    d.kind = ImputerKind::spline;
    d.spline_order = 3;
  } else if (text == "spline:2" || text == "quadratic") {
    d.kind = ImputerKind::quadratic;
    d.spline_order = 2;
  } else if (text == "transformer") {
    d.kind = ImputerKind::transformer;
  } else {
    throw std::invalid_argument("unknown imputation strategy '" + text + "'");
  }
  return d;
}

std::string ImputerDescriptor::str() const {
  switch (kind) {
    case ImputerKind::mean: return "mean";
    case ImputerKind::median: return "median";
    case ImputerKind::mode: return "mode";
    case ImputerKind::nearest: return "nearest";
    case ImputerKind::linear: return "linear";
    case ImputerKind::spline: return "spline";
    case ImputerKind::quadratic: return "quadratic";
    case ImputerKind::transformer: return "transformer";
  }
  throw std::logic_error("ImputerDescriptor::str: unknown kind");
}

std::vector<double> impute_series(std::span<const double> values,
                                  std::span<const std::uint8_t> observed,
                                  const ImputerDescriptor& desc) {
  switch (desc.kind) {
    case ImputerKind::mean: return impute_mean(values, observed);
    case ImputerKind::median: return impute_median(values, observed);
    case ImputerKind::mode: return impute_mode(values, observed);
    case ImputerKind::nearest: return impute_nearest(values, observed);
    case ImputerKind::linear: return impute_linear(values, observed);
    case ImputerKind::spline:
    case ImputerKind::quadratic:
      return impute_spline(values, observed, desc.spline_order);
    case ImputerKind::transformer:
      throw std::invalid_argument("impute_series: transformer strategy requires a trained model");
  }
  throw std::logic_error("impute_series: unknown kind");
}

TimeSeriesFrame impute_frame(const TimeSeriesFrame& frame, const ImputerDescriptor& desc) {
  TimeSeriesFrame out = frame;
  for (std::size_t c = 0; c < frame.n_channels(); ++c) {
    if (frame.observed_count(c) == frame.n_steps) continue;
    const auto filled = impute_series(frame.channel_values(c), frame.channel_observed(c), desc);
    for (std::size_t t = 0; t < frame.n_steps; ++t)
      if (!frame.is_observed(c, t)) out.set(c, t, filled[t]);
  }
  return out;
}

}  // namespace gapfill
