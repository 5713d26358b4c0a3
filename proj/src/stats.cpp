#include "bsdelab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace bsdelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> finite_values(const Eigen::Ref<const Eigen::VectorXd>& x) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(x.size()));
  for (Index i = 0; i < x.size(); ++i)
    if (!std::isnan(x[i])) v.push_back(x[i]);
  return v;
}

double log_mean_exp(const double* x, std::size_t n) {
  const double m = *std::max_element(x, x + n);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s / static_cast<double>(n));
}

double median(std::vector<double> v) {
  const std::size_t k = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  double hi = v[k];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
  return 0.5 * (lo + hi);
}

}  // namespace

MeanEstimate mean_se(const Eigen::Ref<const Eigen::VectorXd>& x) {
  MeanEstimate e;
  double s = 0;
  for (Index i = 0; i < x.size(); ++i)
    if (!std::isnan(x[i])) {
      s += x[i];
      ++e.n;
    }
  if (e.n == 0) return {kNaN, kNaN, 0};
  e.mean = s / static_cast<double>(e.n);
  double ss = 0;
  for (Index i = 0; i < x.size(); ++i)
    if (!std::isnan(x[i])) ss += (x[i] - e.mean) * (x[i] - e.mean);
  e.se = e.n > 1 ? std::sqrt(ss / static_cast<double>(e.n - 1) / static_cast<double>(e.n)) : 0.0;
  return e;
}

MeanEstimate mean_se_log(const Eigen::Ref<const Eigen::VectorXd>& log_x) {
  const auto v = finite_values(log_x);
  if (v.empty()) return {kNaN, kNaN, 0};
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return {m > 0 ? kInf : 0.0, m > 0 ? kInf : 0.0, static_cast<Index>(v.size())};
  double s = 0, s2 = 0;
  for (double x : v) {
    const double y = std::exp(x - m);
    s += y;
    s2 += y * y;
  }
  const double n = static_cast<double>(v.size());
  const double mean = s / n;
  const double var = std::max(0.0, s2 / n - mean * mean) * n / std::max(1.0, n - 1);
  const double scale = std::exp(m);
  return {mean * scale, std::sqrt(var / n) * scale, static_cast<Index>(v.size())};
}

double hill_index(const Eigen::Ref<const Eigen::VectorXd>& log_x, double top_fraction) {
  auto v = finite_values(log_x);
  if (v.size() < 20) return kInf;
  const auto k = std::max<std::size_t>(10, static_cast<std::size_t>(top_fraction * static_cast<double>(v.size())));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), std::greater<>());
  const double threshold = v[k];
  double s = 0;
  for (std::size_t i = 0; i < k; ++i) s += v[i] - threshold;
  if (!(s > 0)) return kInf;
  return static_cast<double>(k) / s;
}

DivergenceEvidence divergence_test(const Eigen::Ref<const Eigen::VectorXd>& log_x, const DivergenceOptions& opt) {
  DivergenceEvidence ev;
  const auto v = finite_values(log_x);
  const std::size_t n = v.size();
  ev.hill = hill_index(log_x, opt.top_fraction);
  if (n < 1000) return ev;
  for (std::size_t b : {n / 1000, n / 100, n / 10}) {
    b = std::max<std::size_t>(b, 1);
    std::vector<double> means;
    for (std::size_t s = 0; s + b <= n; s += b) means.push_back(log_mean_exp(v.data() + s, b));
    ev.block_sizes.push_back(static_cast<Index>(b));
    ev.block_medians.push_back(median(means));
  }
  for (std::size_t i = 1; i < ev.block_medians.size(); ++i) {
    const double d = ev.block_medians[i] - ev.block_medians[i - 1];
    ev.growth.push_back(std::isfinite(d) ? std::exp(d) : (d > 0 ? kInf : 1.0));
  }
  for (std::size_t m : {n / 100, n / 10, n}) ev.running_means.push_back(std::exp(log_mean_exp(v.data(), m)));
  const bool grows = std::all_of(ev.growth.begin(), ev.growth.end(), [&](double g) { return g >= opt.growth_min; });
  ev.diverged = grows && ev.hill <= opt.hill_max;
  return ev;
}

double ks_uniform(Eigen::VectorXd u) {
  std::sort(u.data(), u.data() + u.size());
  const double n = static_cast<double>(u.size());
  double d = 0;
  for (Index i = 0; i < u.size(); ++i) {
    const double f = std::clamp(u[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

std::vector<Bin> bin_means(const Eigen::Ref<const Eigen::VectorXd>& stat, const Eigen::Ref<const Eigen::VectorXd>& value,
                           Index min_count, Index max_bins) {
  std::vector<Index> live, dead;
  for (Index i = 0; i < stat.size(); ++i) {
    if (std::isnan(value[i])) continue;
    (std::isnan(stat[i]) ? dead : live).push_back(i);
  }
  std::sort(live.begin(), live.end(), [&](Index a, Index b) { return stat[a] < stat[b]; });
  std::vector<Bin> bins;
  auto summarize = [&](const Index* idx, Index count, bool stopped) {
    Eigen::VectorXd y(count);
    double c = 0;
    for (Index k = 0; k < count; ++k) {
      y[k] = value[idx[k]];
      c += stopped ? 0.0 : stat[idx[k]];
    }
    const auto e = mean_se(y);
    Bin b;
    b.count = count;
    b.mean = e.mean;
    b.se = e.se;
    b.stopped = stopped;
    if (stopped) {
      b.lo = b.hi = b.center = kNaN;
    } else {
      b.lo = stat[idx[0]];
      b.hi = stat[idx[count - 1]];
      b.center = c / static_cast<double>(count);
    }
    bins.push_back(b);
  };
  const Index n = static_cast<Index>(live.size());
  if (n >= std::max<Index>(min_count, 1)) {
    const Index nb = std::clamp<Index>(n / std::max<Index>(min_count, 1), 1, max_bins);
    for (Index k = 0; k < nb; ++k) {
      const Index b = k * n / nb, e = (k + 1) * n / nb;
      summarize(live.data() + b, e - b, false);
    }
  }
  if (static_cast<Index>(dead.size()) >= std::max<Index>(min_count, 1))
    summarize(dead.data(), static_cast<Index>(dead.size()), true);
  return bins;
}

TailTrend tail_trend(const std::vector<Bin>& bins, bool upper) {
  std::vector<const Bin*> live;
  for (const auto& b : bins)
    if (!b.stopped) live.push_back(&b);
  TailTrend t;
  const std::size_t n = live.size();
  if (n < 6) return t;
  // outward-ordered half: the outermost bin comes last
  std::vector<const Bin*> side;
  if (upper)
    side.assign(live.begin() + static_cast<std::ptrdiff_t>(n - n / 2), live.end());
  else
    side.assign(live.rbegin() + static_cast<std::ptrdiff_t>(n - n / 2), live.rend());
  // weighted least squares of mean on the outward coordinate
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const Bin* b : side) {
    const double w = 1.0 / std::max(b->se * b->se, 1e-300);
    const double x = upper ? b->center : -b->center;
    sw += w;
    sx += w * x;
    sy += w * b->mean;
    sxx += w * x * x;
    sxy += w * x * b->mean;
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0)) return t;
  t.slope = (sw * sxy - sx * sy) / det;
  t.se = std::sqrt(sw / det);
  t.rise = side.back()->mean - side.front()->mean;
  const double level = std::max(std::abs(side.front()->mean), 1e-300);
  t.growing = t.slope > 3 * t.se && t.rise > 0.25 * level;
  return t;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> n01;
  return boost::math::quantile(n01, p);
}

}  // namespace bsdelab
