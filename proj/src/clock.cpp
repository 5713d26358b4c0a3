#include "bsdelab/clock.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "bsdelab/parallel.hpp"
#include "bsdelab/rng.hpp"

namespace bsdelab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// probability that a Brownian bridge over a step of variance h from distance
// d0 to distance d1 touches the barrier
inline double bridge_cross(double d0, double d1, double h) {
  const double a = 2 * d0 * d1 / h;
  return a > 40 ? 0.0 : std::exp(-a);
}

}  // namespace

double HittingClock::censored_fraction() const {
  std::size_t c = 0;
  for (auto v : censored) c += v;
  return censored.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(censored.size());
}

HittingClock hitting_time(const PathEnsemble& ens, double b, double alpha, const ClockOptions& opt) {
  if (!(alpha >= 0 && alpha <= 1)) throw std::invalid_argument("hitting_time: alpha must lie in [0,1]");
  return hitting_time(ens, b, Eigen::VectorXd::Constant(ens.n_paths, alpha), opt);
}

HittingClock hitting_time(const PathEnsemble& ens, double b, const Eigen::VectorXd& alpha, const ClockOptions& opt) {
  const TimeGrid& g = ens.grid;
  if (alpha.size() != ens.n_paths) throw std::invalid_argument("hitting_time: alpha size mismatch");
  if (!(opt.du > 0)) throw std::invalid_argument("hitting_time: clock step must be positive");

  HittingClock c;
  c.T = g.T;
  c.horizon = opt.horizon > 0 ? opt.horizon : std::log((g.T / 2) / g.gap);
  c.first_node = g.half;
  const Index nn = g.size() - g.half;
  c.u_nodes.resize(nn);
  for (Index k = 0; k < nn; ++k) c.u_nodes[k] = g.clock(g.half + k);

  // step boundaries shared by all paths: multiples of du merged with the node clocks
  std::vector<double> cuts;
  {
    Index k = 1;
    double u = 0;
    while (u < c.horizon) {
      double next = std::min(u + opt.du, c.horizon);
      while (k < nn && c.u_nodes[k] <= u) ++k;
      if (k < nn && c.u_nodes[k] < next - 1e-15) next = c.u_nodes[k];
      cuts.push_back(next);
      u = next;
    }
  }

  const Index n = ens.n_paths;
  c.mu = (b * std::numbers::pi / std::sqrt(8.0)) * alpha;
  c.H.resize(n);
  c.tau.resize(n);
  c.side.resize(n);
  c.censored.assign(static_cast<std::size_t>(n), 0);
  c.x_nodes = RowMatrix::Constant(n, nn, kNaN);
  const bool marked = opt.mark.size() > 0;
  if (marked && opt.mark.size() != n) throw std::invalid_argument("hitting_time: mark size mismatch");
  if (marked) c.x_mark = Eigen::VectorXd::Constant(n, kNaN);

  parallel_for(n, [&](std::ptrdiff_t pb, std::ptrdiff_t pe) {
    for (std::ptrdiff_t p = pb; p < pe; ++p) {
      const CounterRng noise(ens.seed, static_cast<std::uint64_t>(p), Stream::clock);
      const CounterRng bridge(ens.seed, static_cast<std::uint64_t>(p), Stream::bridge);
      const CounterRng fill(ens.seed, static_cast<std::uint64_t>(p), Stream::aux);
      const double mu = c.mu[p];
      const double mark = marked ? opt.mark[p] : kInf;
      double x = 0, u = 0;
      if (marked && mark <= 0) c.x_mark[p] = 0;
      Index node = 0;
      c.x_nodes(p, 0) = 0;
      double hit = kNaN, side = 0;
      for (std::size_t s = 0; s < cuts.size(); ++s) {
        const double h = cuts[s] - u;
        const double x1 = x + mu * h + std::sqrt(h) * noise.normal(s);
        if (mark > u && mark <= cuts[s]) {
          // bridge value inside the step, the step itself is left untouched
          const double r = (mark - u) / h;
          const double xm = x + r * (x1 - x) + std::sqrt((mark - u) * (cuts[s] - mark) / h) * fill.normal(s);
          c.x_mark[p] = std::clamp(xm, -1.0, 1.0);
        }
        if (x1 >= 1 || x1 <= -1) {
          hit = cuts[s];
          side = x1 >= 1 ? 1 : -1;
          break;
        }
        const double pu = bridge_cross(1 - x, 1 - x1, h);
        const double pl = bridge_cross(1 + x, 1 + x1, h);
        if (pu + pl > 0) {
          const double v = bridge.uniform(s);
          if (v < pu + pl) {
            hit = cuts[s];
            side = v < pu ? 1 : -1;
            break;
          }
        }
        x = x1;
        u = cuts[s];
        while (node + 1 < nn && c.u_nodes[node + 1] <= u + 1e-15) {
          ++node;
          c.x_nodes(p, node) = x;
        }
      }
      if (std::isnan(hit)) {
        c.censored[static_cast<std::size_t>(p)] = 1;
        hit = c.horizon;
      }
      c.H[p] = hit;
      c.side[p] = side;
      if (marked && std::isnan(c.x_mark[p])) c.x_mark[p] = side != 0 ? side : x;
      c.tau[p] = g.T - (g.T / 2) * std::exp(-hit);
    }
  });
  return c;
}

double exit_moment(double theta, double mu) {
  const double s = 2 * theta - mu * mu;
  if (s >= 0) {
    const double r = std::sqrt(s);
    if (r >= std::numbers::pi / 2) return kInf;
    return std::cosh(mu) / std::cos(r);
  }
  return std::cosh(mu) / std::cosh(std::sqrt(-s));
}

double exit_survival(double u) {
  if (u <= 0) return 1.0;
  const double pi = std::numbers::pi;
  double sum = 0;
  for (int n = 0; n < 400; ++n) {
    const double k = 2 * n + 1;
    const double term = std::exp(-k * k * pi * pi * u / 8) / k;
    sum += (n % 2 ? -term : term);
    if (term < 1e-18) break;
  }
  return std::clamp(4 / pi * sum, 0.0, 1.0);
}

double exit_moment_truncated(double theta, double s) {
  if (std::isinf(s)) return exit_moment(theta);
  if (s <= 0) return 1.0;
  if (theta == 0) return 1.0;
  // 1 + theta * int_0^s e^{theta u} P(H>u) du, integrated term by term
  const double pi = std::numbers::pi;
  double sum = 0;
  for (int n = 0; n < 20000; ++n) {
    const double k = 2 * n + 1;
    const double a = k * k * pi * pi / 8;
    const double d = theta - a;
    const double integral = std::abs(d) < 1e-12 ? s : std::expm1(d * s) / d;
    const double term = integral / k;
    sum += (n % 2 ? -term : term);
    if (std::abs(term) < 1e-16 * std::max(1.0, std::abs(sum))) break;
  }
  return 1 + theta * 4 / pi * sum;
}

double exit_mean(double mu) {
  if (std::abs(mu) < 1e-8) return 1.0;
  return std::tanh(mu) / mu;
}

}  // namespace bsdelab
