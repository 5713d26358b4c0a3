#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

#include <fmt/format.h>

#include "bsdelab/bsde.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/rng.hpp"

namespace bsdelab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Hermite {
  Eigen::VectorXd x, w;  // nodes and weights for E[f(Z)], Z standard normal
};

// Golub-Welsch on the probabilists' Hermite recurrence.
const Hermite& hermite() {
  static const Hermite h = [] {
    const int n = 48;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Hermite out;
    out.x = es.eigenvalues();
    out.w = es.eigenvectors().row(0).transpose().array().square();
    return out;
  }();
  return h;
}

double rho_of(double T, double t) { return t / (T * (T - t)); }
double t_of(double T, double rho) { return T * T * rho / (1 + T * rho); }

// Var(W increment | I increment) over [t0, t1]: (t1 - t0) - c^2/(rho1 - rho0), with
// c = log((T-t0)/(T-t1)). Written through u = (t1-t0)/(T-t1) to avoid cancellation.
double residual_variance(double T, double t0, double t1) {
  const double b = T - t1, u = (t1 - t0) / b;
  if (u < 1e-2) return b * u * u * u * (1.0 / 12 - u / 12 + 13.0 / 180 * u * u);
  const double l = std::log1p(u);
  return std::max(0.0, b * (u - (1 + u) * l * l / u));
}

inline double bridge_cross(double d0, double d1, double h) {
  if (d0 <= 0 || d1 <= 0) return 1.0;
  const double a = 2 * d0 * d1 / h;
  return a > 40 ? 0.0 : std::exp(-a);
}

struct State {
  double t, rho, I, W;
};

struct Walker {
  const XiFunctional& xi;
  double T, c, drift;  // drift 1/2 under the original law, 0 for the importance sampler
  double h_fine;
  std::uint64_t seed;
  std::uint64_t path;

  double barrier(const State& s) const {
    if (xi.is_constant()) return std::log(xi.value / c);
    return std::log(xi_conditional(xi, T, s.t, s.W) / c);
  }
  double distance(const State& s) const { return s.I - drift * s.rho - barrier(s); }

  // Midpoint of [a, b] at rho_m drawn from its exact conditional law.
  State split(const State& a, const State& b, double rho_m, std::uint64_t key) const {
    const double tm = t_of(T, rho_m);
    const double rl = rho_m - a.rho, rr = b.rho - rho_m;
    const double DI = b.I - a.I, DW = b.W - a.W;
    const auto nn = CounterRng(seed, path, Stream::lattice_bridge).normal_pair(key);
    if (xi.is_constant()) {
      // the barrier ignores W; keep it on the chord
      const double x = DI * rl / (rl + rr) + std::sqrt(rl * rr / (rl + rr)) * nn.first;
      return {tm, rho_m, a.I + x, a.W + DW * (tm - a.t) / (b.t - a.t)};
    }
    const double bl = std::log((T - a.t) / (T - tm)) / rl, br = std::log((T - tm) / (T - b.t)) / rr;
    const double vl = residual_variance(T, a.t, tm), vr = residual_variance(T, tm, b.t);
    double x, y;
    if (!(vl > 0) || !(vr > 0)) {
      x = DI * rl / (rl + rr) + std::sqrt(rl * rr / (rl + rr)) * nn.first;
      y = (DW - bl * x - br * (DI - x)) * (tm - a.t) / (b.t - a.t);
    } else {
      // posterior of x = left I increment and y = left W residual given both totals;
      // dW = beta dI + residual, residuals independent of I on each half
      const double d = bl - br, r = DW - br * DI;
      const double p11 = 1 / rl + 1 / rr + d * d / vr, p12 = d / vr, p22 = 1 / vl + 1 / vr;
      const double h1 = DI / rr + d * r / vr, h2 = r / vr;
      const double det = (1 / rl + 1 / rr) * p22 + d * d / (vl * vr);
      const double m1 = (p22 * h1 - p12 * h2) / det, m2 = (p11 * h2 - p12 * h1) / det;
      const double s11 = p22 / det, s12 = -p12 / det, s22 = p11 / det;
      const double l11 = std::sqrt(std::max(s11, 0.0));
      const double l21 = l11 > 0 ? s12 / l11 : 0.0;
      const double l22 = std::sqrt(std::max(s22 - l21 * l21, 0.0));
      x = m1 + l11 * nn.first;
      y = m2 + l21 * nn.first + l22 * nn.second;
    }
    return {tm, rho_m, a.I + x, a.W + bl * x + y};
  }

  // First fine cell in (a, b] whose bridge touches the barrier; returns its right end.
  std::optional<State> descend(const State& a, const State& b, double da, double db, std::uint64_t key,
                               std::uint64_t base) const {
    const double h = b.rho - a.rho;
    const double p = bridge_cross(da, db, h);
    if (h <= h_fine * (1 + 1e-9) || key >= (std::uint64_t{1} << 43)) {
      if (db <= 0) return b;
      if (p > 0 && CounterRng(seed, path, Stream::lattice_uniform).uniform(base | key) < p) return b;
      return std::nullopt;
    }
    if (db > 0 && p < 1e-12) return std::nullopt;
    const State m = split(a, b, 0.5 * (a.rho + b.rho), base | key);
    const double dm = distance(m);
    if (auto s = descend(a, m, da, dm, 2 * key, base)) return s;
    return descend(m, b, dm, db, 2 * key + 1, base);
  }
};

std::vector<double> rho_lattice(const TimeGrid& g, const MultRepOptions& opt) {
  const double T = g.T;
  const double rmax = rho_of(T, g.nodes[g.size() - 1]);
  std::vector<double> pts;
  for (double r = 0; r < std::min(1.0, rmax); r += opt.coarse_step) pts.push_back(r);
  for (double r = 1.0; r < rmax; r *= opt.growth) pts.push_back(r);
  for (Index j = 0; j < g.size(); ++j) pts.push_back(rho_of(T, g.nodes[j]));
  std::sort(pts.begin(), pts.end());
  std::vector<double> out;
  for (double r : pts)
    if (out.empty() || r - out.back() > 1e-12 * std::max(1.0, r)) out.push_back(r);
  out.back() = rmax;
  return out;
}

}  // namespace

XiFunctional XiFunctional::constant(double v) {
  if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument("xi must be positive and finite");
  XiFunctional x;
  x.value = x.lower = x.upper = v;
  return x;
}

XiFunctional XiFunctional::of_terminal(std::function<double(double)> g, double lower, double upper) {
  if (!(lower > 0) || !(upper >= lower) || !std::isfinite(upper))
    throw std::invalid_argument("xi: bounds must satisfy 0 < lower <= upper < inf");
  XiFunctional x;
  x.g = std::move(g);
  x.lower = lower;
  x.upper = upper;
  x.value = kNaN;
  return x;
}

double xi_conditional(const XiFunctional& xi, double T, double t, double w) {
  if (xi.is_constant()) return xi.value;
  const double s = std::sqrt(std::max(T - t, 0.0));
  if (s == 0) return xi.g(w);
  const Hermite& h = hermite();
  double acc = 0;
  for (Index k = 0; k < h.x.size(); ++k) acc += h.w[k] * xi.g(w + s * h.x[k]);
  return acc;
}

double xi_log_gradient(const XiFunctional& xi, double T, double t, double w) {
  if (xi.is_constant()) return 0.0;
  const double d = 1e-5;
  return (std::log(xi_conditional(xi, T, t, w + d)) - std::log(xi_conditional(xi, T, t, w - d))) / (2 * d);
}

double MultRepResult::median_error() const {
  std::vector<double> v;
  for (Index i = 0; i < error.size(); ++i)
    if (!std::isnan(error[i])) v.push_back(error[i]);
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

namespace {

MultRepResult walk(const XiFunctional& xi, double c, const PathEnsemble& ens, const MultRepOptions& opt) {
  const TimeGrid& g = ens.grid;
  const double T = g.T;
  const double mean_xi = xi_conditional(xi, T, 0.0, 0.0);
  if (!(c >= mean_xi * (1 - 1e-12)))
    throw std::invalid_argument(fmt::format(
        "mult_rep: c = {:.6g} lies below E[xi] = {:.6g}; no such representation exists for a supermartingale", c,
        mean_xi));
  if (opt.refinement < 0) throw std::invalid_argument("mult_rep: refinement must be >= 0");
  const std::vector<double> lat = rho_lattice(g, opt);
  const Index K = static_cast<Index>(lat.size()) - 1;
  // lattice index of every grid node
  std::vector<Index> node_at(static_cast<std::size_t>(g.size()));
  {
    Index k = 0;
    for (Index j = 0; j < g.size(); ++j) {
      const double r = j + 1 == g.size() ? lat.back() : rho_of(T, g.nodes[j]);
      while (k < K && lat[static_cast<std::size_t>(k)] < r - 1e-12 * std::max(1.0, r)) ++k;
      node_at[static_cast<std::size_t>(j)] = k;
    }
  }

  const Index n = ens.n_paths, m = g.size();
  MultRepResult out;
  out.c = c;
  out.mean_xi = mean_xi;
  out.tau = Eigen::VectorXd::Constant(n, kNaN);
  out.rho_tau = Eigen::VectorXd::Constant(n, kNaN);
  out.x_tau = Eigen::VectorXd::Constant(n, kNaN);
  out.log_expo.resize(n);
  out.xi.resize(n);
  out.error.resize(n);
  out.hit.assign(static_cast<std::size_t>(n), 0);
  if (opt.record_nodes) {
    out.alpha.resize(n, m);
    out.int_dw.resize(n, m);
    out.int_dt.resize(n, m);
    out.int_sq.resize(n, m);
    out.w.resize(n, m);
  }
  const double h_fine = opt.base_step / std::pow(4.0, opt.refinement);
  const double drift = opt.driftless ? 0.0 : 0.5;

  parallel_for(n, [&](std::ptrdiff_t pb, std::ptrdiff_t pe) {
    for (std::ptrdiff_t p = pb; p < pe; ++p) {
      const Walker wk{xi, T, c, drift, h_fine, ens.seed, static_cast<std::uint64_t>(p)};
      const CounterRng coarse(ens.seed, static_cast<std::uint64_t>(p), Stream::lattice);
      State s{0, 0, 0, 0};
      double d = wk.distance(s);
      bool stopped = d <= 0;
      State stop = s;
      // integrals of alpha after the stop
      double a_dw = 0, a_dt = 0, a_sq = 0;
      std::size_t next_node = 0;
      auto record = [&](Index k, const State& at) {
        while (next_node < static_cast<std::size_t>(m) && node_at[next_node] == k) {
          if (opt.record_nodes) {
            const Index j = static_cast<Index>(next_node);
            out.w(p, j) = at.W;
            if (stopped) {
              out.alpha(p, j) = xi_log_gradient(xi, T, at.t, at.W);
              out.int_dw(p, j) = stop.I + a_dw;
              out.int_sq(p, j) = stop.rho + a_sq;
              out.int_dt(p, j) = std::log(T / (T - stop.t)) + a_dt;
            } else {
              out.alpha(p, j) = 1 / (T - at.t);
              out.int_dw(p, j) = at.I;
              out.int_sq(p, j) = at.rho;
              out.int_dt(p, j) = std::log(T / (T - at.t));
            }
          }
          ++next_node;
        }
      };
      record(0, s);
      for (Index k = 0; k < K; ++k) {
        const double r1 = lat[static_cast<std::size_t>(k + 1)];
        const double t1 = k + 1 == K ? g.nodes[m - 1] : t_of(T, r1);
        const double dr = r1 - s.rho, dt = t1 - s.t;
        const double cv = std::log((T - s.t) / (T - t1));
        const auto nn = coarse.normal_pair(static_cast<std::uint64_t>(k));
        const double dI = std::sqrt(dr) * nn.first;
        const double beta = cv / dr;
        const double dW = beta * dI + std::sqrt(residual_variance(T, s.t, t1)) * nn.second;
        const State s1{t1, r1, s.I + dI, s.W + dW};
        if (!stopped) {
          const double d1 = wk.distance(s1);
          if (d1 <= 0 || bridge_cross(d, d1, dr) >= 1e-12) {
            const std::uint64_t base = static_cast<std::uint64_t>(k) << 44;
            if (auto hit = wk.descend(s, s1, d, d1, 1, base)) {
              stopped = true;
              stop = *hit;
              // alpha-bar over the rest of this cell
              const double al = xi_log_gradient(xi, T, stop.t, stop.W);
              const double h = s1.t - stop.t;
              a_dw += al * (s1.W - stop.W);
              a_dt += al * h;
              a_sq += al * al * h;
            }
          }
          d = d1;
        } else {
          const double al = xi_log_gradient(xi, T, s.t, s.W);
          a_dw += al * dW;
          a_dt += al * dt;
          a_sq += al * al * dt;
        }
        s = s1;
        record(k + 1, s);
        // nothing moves after the stop when xi is constant
        if (stopped && xi.is_constant() && !opt.record_nodes) break;
      }
      const double xi_p = xi.is_constant() ? xi.value : xi.g(s.W);
      double le;
      if (stopped) {
        out.hit[static_cast<std::size_t>(p)] = 1;
        out.tau[p] = stop.t;
        out.rho_tau[p] = stop.rho;
        out.x_tau[p] = stop.I - drift * stop.rho;
        le = stop.I - 0.5 * stop.rho + a_dw - 0.5 * a_sq;
      } else {
        out.x_tau[p] = s.I - drift * s.rho;
        le = s.I - 0.5 * s.rho;
      }
      out.log_expo[p] = le;
      out.xi[p] = xi_p;
      out.error[p] = std::abs(xi_p - c * std::exp(le));
    }
  });
  return out;
}

}  // namespace

MultRepResult mult_rep(const XiFunctional& xi, double c, const PathEnsemble& ens, const MultRepOptions& opt) {
  MultRepOptions o = opt;
  o.driftless = false;
  return walk(xi, c, ens, o);
}

MeanEstimate tau_exp_moment(double lower, double c, const PathEnsemble& ens, const MultRepOptions& opt) {
  MultRepOptions o = opt;
  o.driftless = true;
  o.record_nodes = false;
  const MultRepResult r = walk(XiFunctional::constant(lower), c, ens, o);
  // dP/dQ on F_tau = exp(-X/2 - rho/8) turns exp(rho/8) into exp(-X/2)
  Eigen::VectorXd v(r.x_tau.size());
  for (Index p = 0; p < v.size(); ++p) v[p] = r.hit[static_cast<std::size_t>(p)] ? std::exp(-0.5 * r.x_tau[p]) : 0.0;
  return mean_se(v);
}

ContinuumResult continuum(const MprSpec& s, double q, double b_offset, const PathEnsemble& ens,
                          const MultRepOptions& opt) {
  validate(s);
  if (!(q < 1)) throw std::invalid_argument("continuum: q must be < 1");
  if (!(b_offset >= 0) || !std::isfinite(b_offset)) throw std::invalid_argument("continuum: b_offset must be >= 0");
  if (s.kind != MprKind::Zero && s.kind != MprKind::Constant)
    throw std::invalid_argument("continuum: " + kind_name(s.kind) +
                                " has no pathwise bound on int lambda^2 dt (supported: Zero, Constant)");
  const double T = ens.grid.T;
  const double lam = s.kind == MprKind::Constant ? s.c * s.level : 0.0;
  const double k2 = 0.5 * q * (q - 1) * lam * lam;  // log xi = k2 * T
  ContinuumResult res;
  res.xi = std::exp(k2 * T);
  res.c = res.xi + b_offset;
  res.psi0_formula = std::log(res.c) / (1 - q);

  MultRepOptions o = opt;
  o.record_nodes = true;
  const MultRepResult mr = mult_rep(XiFunctional::constant(res.xi), res.c, ens, o);

  const TimeGrid& g = ens.grid;
  const Index n = ens.n_paths, m = g.size();
  SolutionTriple& tr = res.triple;
  tr.grid = g;
  tr.provenance = Provenance::Continuum;
  tr.parameter = b_offset;
  tr.psi.resize(n, m);
  tr.z.resize(n, m);
  tr.zdw.resize(n, m);
  tr.zdt.resize(n, m);
  tr.zsq.resize(n, m);
  const double lc = std::log(res.c);
  for (Index p = 0; p < n; ++p)
    for (Index j = 0; j < m; ++j) {
      const double t = g.nodes[j];
      tr.psi(p, j) = (lc + mr.int_dw(p, j) - 0.5 * mr.int_sq(p, j) - k2 * t) / (1 - q);
      tr.z(p, j) = mr.alpha(p, j) / (1 - q);
      // the paths are Brownian under the tilde measure: dW = dW~ - q lambda dt
      tr.zdw(p, j) = (mr.int_dw(p, j) - q * lam * mr.int_dt(p, j)) / (1 - q);
      tr.zdt(p, j) = mr.int_dt(p, j) / (1 - q);
      tr.zsq(p, j) = mr.int_sq(p, j) / ((1 - q) * (1 - q));
    }

  // backward from the terminal condition, per path
  Eigen::VectorXd back(n), mism(n), expo(n);
  for (Index p = 0; p < n; ++p) {
    back[p] = (std::log(res.xi) - mr.log_expo[p]) / (1 - q);
    mism[p] = std::abs(tr.psi(p, m - 1));
    expo[p] = std::exp(mr.log_expo[p]);
  }
  const MeanEstimate b = mean_se(back);
  res.psi0 = b.mean;
  res.psi0_se = b.se;
  res.psi0_tolerance = 3 * b.se + mism.mean();
  std::vector<double> v(mism.data(), mism.data() + n);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  res.median_mismatch = v[v.size() / 2];

  res.martingale = mean_se(expo);
  res.martingale_passes = std::abs(res.martingale.mean - 1) <= 3 * res.martingale.se;
  return res;
}

}  // namespace bsdelab
