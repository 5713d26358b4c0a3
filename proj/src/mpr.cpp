#include "bsdelab/mpr.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <fmt/format.h>

#include "bsdelab/bmo.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/stats.hpp"

namespace bsdelab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

// int_x^inf u^-2 e^-u du = E_2(x)/x
double upper_tail(double x) { return boost::math::expint(2, x) / x; }

}  // namespace

MprSpec MprSpec::zero(double T) {
  MprSpec s;
  s.T = T;
  return s;
}

MprSpec MprSpec::constant(double level, double T) {
  MprSpec s;
  s.kind = MprKind::Constant;
  s.level = level;
  s.T = T;
  return s;
}

MprSpec MprSpec::reverting(double T) {
  MprSpec s;
  s.kind = MprKind::Reverting;
  s.T = T;
  return s;
}

MprSpec MprSpec::nosol(double q, double T) {
  MprSpec s;
  s.kind = MprKind::NoSol;
  s.q = q;
  s.T = T;
  return s;
}

MprSpec MprSpec::alpha_arccos(double q, double T) {
  MprSpec s = nosol(q, T);
  s.kind = MprKind::AlphaArccos;
  return s;
}

MprSpec MprSpec::sigma_gamma(double q, double T) {
  MprSpec s = nosol(q, T);
  s.kind = MprKind::SigmaGamma;
  return s;
}

MprSpec MprSpec::tilde(double b, double T) {
  MprSpec s;
  s.kind = MprKind::Tilde;
  s.b = b;
  s.T = T;
  return s;
}

MprSpec MprSpec::scaled(double a, double b, double q, double T) {
  MprSpec s;
  s.kind = MprKind::Scaled;
  s.a = a;
  s.b = b;
  s.q = q;
  s.T = T;
  return s;
}

MprSpec MprSpec::scaled_by(double factor) const {
  MprSpec s = *this;
  s.c *= factor;
  return s;
}

MprSpec MprSpec::under(Measure m) const {
  MprSpec s = *this;
  s.measure = m;
  return s;
}

void validate(const MprSpec& s) {
  if (!std::isfinite(s.T) || s.T <= 0) throw std::invalid_argument("spec: T must be finite and positive");
  if (!std::isfinite(s.c)) throw std::invalid_argument("spec: c must be finite");
  switch (s.kind) {
    case MprKind::Constant:
      if (!std::isfinite(s.level)) throw std::invalid_argument("spec: Constant level must be finite");
      break;
    case MprKind::NoSol:
    case MprKind::AlphaArccos:
    case MprKind::SigmaGamma:
      if (!(s.q < 0)) throw std::invalid_argument(fmt::format("spec: {} requires q < 0", kind_name(s.kind)));
      break;
    case MprKind::Scaled:
      if (!(s.a > 0) || !std::isfinite(s.a)) throw std::invalid_argument("spec: Scaled requires a > 0");
      if (!std::isfinite(s.b)) throw std::invalid_argument("spec: b must be finite");
      break;
    case MprKind::Tilde:
      if (!std::isfinite(s.b)) throw std::invalid_argument("spec: b must be finite");
      break;
    default:
      break;
  }
}

std::string kind_name(MprKind k) {
  switch (k) {
    case MprKind::Zero: return "Zero";
    case MprKind::Constant: return "Constant";
    case MprKind::Reverting: return "Reverting";
    case MprKind::NoSol: return "NoSol";
    case MprKind::AlphaArccos: return "AlphaArccos";
    case MprKind::SigmaGamma: return "SigmaGamma";
    case MprKind::Tilde: return "Tilde";
    case MprKind::Scaled: return "Scaled";
  }
  return "?";
}

MprKind kind_from_name(const std::string& name) {
  for (auto k : {MprKind::Zero, MprKind::Constant, MprKind::Reverting, MprKind::NoSol, MprKind::AlphaArccos,
                 MprKind::SigmaGamma, MprKind::Tilde, MprKind::Scaled})
    if (kind_name(k) == name) return k;
  throw std::invalid_argument("unknown spec kind '" + name + "'");
}

bool uses_clock(MprKind k) {
  return k == MprKind::NoSol || k == MprKind::AlphaArccos || k == MprKind::SigmaGamma || k == MprKind::Tilde ||
         k == MprKind::Scaled;
}

bool has_half_state(MprKind k) {
  return k == MprKind::AlphaArccos || k == MprKind::SigmaGamma || k == MprKind::Tilde || k == MprKind::Scaled;
}

double qv_bound(const MprSpec& s) {
  switch (s.kind) {
    case MprKind::Zero: return 0.0;
    case MprKind::Constant: return s.c * s.c * s.level * s.level * s.T;
    default: return kInf;
  }
}

std::string to_text(const MprSpec& s) {
  std::string out;
  out += fmt::format("kind = {}\n", kind_name(s.kind));
  out += fmt::format("T = {:.17g}\n", s.T);
  if (!std::isnan(s.q)) out += fmt::format("q = {:.17g}\n", s.q);
  out += fmt::format("level = {:.17g}\n", s.level);
  out += fmt::format("a = {:.17g}\n", s.a);
  out += fmt::format("b = {:.17g}\n", s.b);
  out += fmt::format("c = {:.17g}\n", s.c);
  out += fmt::format("seed = {}\n", s.seed);
  out += fmt::format("measure = {}\n", s.measure == Measure::P ? "P" : "Tilde");
  return out;
}

MprSpec spec_from_text(const std::string& text) {
  MprSpec s;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_kind = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(fmt::format("spec line {}: expected key = value", lineno));
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r");
      const auto e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto number = [&]() {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(val, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != val.size())
        throw std::invalid_argument(fmt::format("spec line {}: '{}' is not a number", lineno, val));
      return v;
    };
    if (key == "kind") {
      s.kind = kind_from_name(val);
      have_kind = true;
    } else if (key == "T") {
      s.T = number();
    } else if (key == "q") {
      s.q = number();
    } else if (key == "level") {
      s.level = number();
    } else if (key == "a") {
      s.a = number();
    } else if (key == "b") {
      s.b = number();
    } else if (key == "c") {
      s.c = number();
    } else if (key == "seed") {
      try {
        s.seed = std::stoull(val);
      } catch (const std::exception&) {
        throw std::invalid_argument(fmt::format("spec line {}: bad seed '{}'", lineno, val));
      }
    } else if (key == "measure") {
      if (val == "P")
        s.measure = Measure::P;
      else if (val == "Tilde")
        s.measure = Measure::Tilde;
      else
        throw std::invalid_argument(fmt::format("spec line {}: measure must be P or Tilde", lineno));
    } else {
      throw std::invalid_argument(fmt::format("spec line {}: unknown key '{}'", lineno, key));
    }
  }
  if (!have_kind) throw std::invalid_argument("spec: missing kind");
  validate(s);
  return s;
}

double alpha_of(double w_half, double T) {
  if (w_half == -kInf) return 1.0;
  if (w_half == kInf) return 0.0;
  return 2 / kPi * std::acos(std::sqrt(normal_cdf(std::sqrt(2 / T) * w_half)));
}

double SigmaSampler::cdf(double s) const {
  if (s <= T / 2) return 0.0;
  if (s >= T) return 1.0;
  return 1 - c0 * upper_tail(1 / (T - s));
}

double SigmaSampler::inverse(double u) const {
  if (!(u > 0 && u <= 1)) throw std::invalid_argument("SigmaSampler::inverse: u must lie in (0,1]");
  if (u == 1) return T;
  // solve c0 * G(x) = 1 - u for x = 1/(T-s) on [2/T, inf), G decreasing
  const double target = 1 - u;
  double lo = 2 / T, hi = 4 / T;
  while (c0 * upper_tail(hi) > target) {
    lo = hi;
    hi *= 2;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (c0 * upper_tail(mid) > target ? lo : hi) = mid;
    if (1 / lo - 1 / hi < 1e-12) break;
  }
  return T - 1 / (0.5 * (lo + hi));
}

double SigmaSampler::sigma_of(double w_half) const {
  if (w_half == kInf) return T;
  if (w_half == -kInf) return T / 2;
  // work with the upper tail so large w keeps its precision
  const double tail = normal_cdf(-std::sqrt(2 / T) * w_half);
  if (tail <= 0) return T;
  double lo = 2 / T, hi = 4 / T;
  while (c0 * upper_tail(hi) > tail) {
    lo = hi;
    hi *= 2;
  }
  // Newton on log G with bisection safeguard
  double x = 0.5 * (lo + hi);
  const double lt = std::log(tail / c0);
  for (int it = 0; it < 100; ++it) {
    const double G = upper_tail(x);
    const double g = std::log(G) - lt;
    if (g > 0)
      lo = x;
    else
      hi = x;
    const double dg = -std::exp(-x) / (x * x) / G;
    double nx = x - g / dg;
    if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
    if (std::abs(1 / nx - 1 / x) < 1e-14) {
      x = nx;
      break;
    }
    x = nx;
  }
  return T - 1 / x;
}

double SigmaSampler::clock_of(double sigma) const {
  if (sigma >= T) return kInf;
  return std::log((T / 2) / (T - sigma));
}

SigmaSampler make_sigma_sampler(double T) {
  if (!std::isfinite(T) || T <= 0) throw std::invalid_argument("make_sigma_sampler: T must be positive");
  // u = 1/(T-s): int_{T/2}^T e^{-1/(T-s)} ds = int_{2/T}^inf u^-2 e^-u du
  const double a = 2 / T;
  double err = 0;
  auto integrand = [a](double v) { return std::exp(-(a + v)) / ((a + v) * (a + v)); };
  const double I = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-12, &err);
  return {T, 1 / I};
}

double sigma_clock_moment(double T, int rho) {
  if (rho < 2) throw std::invalid_argument("sigma_clock_moment: rho must be >= 2");
  const double c0 = make_sigma_sampler(T).c0;
  double fact = 1;
  for (int k = 2; k <= rho - 2; ++k) fact *= k;
  double sum = 0, term = 1;
  for (int k = 0; k <= rho - 2; ++k) {
    sum += term;
    term *= (2 / T) / (k + 1);
  }
  return c0 * std::pow(T / 2, rho) * fact * std::exp(-2 / T) * sum;
}

double clock_coefficient(const MprSpec& s) {
  switch (s.kind) {
    case MprKind::NoSol:
    case MprKind::AlphaArccos:
    case MprKind::SigmaGamma: return s.c * kPi / (2 * std::sqrt(-s.q));
    case MprKind::Tilde: return s.c * kPi / std::sqrt(8.0);
    case MprKind::Scaled: return s.c * kPi / (std::sqrt(8.0) * s.a);
    default: return 0.0;
  }
}

namespace {

bool drifted(const MprSpec& s) {
  return (s.kind == MprKind::Tilde || s.kind == MprKind::Scaled) && s.measure == Measure::P && s.b != 0;
}

bool alpha_weighted(MprKind k) { return k == MprKind::AlphaArccos || k == MprKind::Tilde || k == MprKind::Scaled; }

Realization realize_grid(const MprSpec& s, const PathEnsemble& ens) {
  Realization r;
  r.spec = s;
  const double c = s.c;
  switch (s.kind) {
    case MprKind::Zero: r.f = ito_integral(ens, [](Index, Index, double, double) { return 0.0; }); break;
    case MprKind::Constant: {
      const double l = c * s.level;
      r.f = ito_integral(ens, [l](Index, Index, double, double) { return l; });
      break;
    }
    case MprKind::Reverting:
      r.f = ito_integral(ens, [c](Index, Index, double, double w) {
        return -c * (w > 0 ? 1.0 : (w < 0 ? -1.0 : 0.0)) * std::sqrt(std::abs(w));
      });
      break;
    default: throw std::logic_error("realize_grid: not a grid construction");
  }
  return r;
}

Realization realize_clock(const MprSpec& s, const PathEnsemble& ens, const HittingClock* shared) {
  const TimeGrid& g = ens.grid;
  if (std::abs(g.T - s.T) > 1e-12 * s.T) throw std::invalid_argument("realize: spec horizon differs from the grid");
  Realization r;
  r.spec = s;
  const Index n = ens.n_paths;
  const Eigen::VectorXd w_half = ens.w_at(g.half);

  Eigen::VectorXd param = Eigen::VectorXd::Constant(n, kNaN);
  Eigen::VectorXd alpha = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd stop_clock = Eigen::VectorXd::Constant(n, kInf);
  if (alpha_weighted(s.kind)) {
    for (Index p = 0; p < n; ++p) alpha[p] = param[p] = alpha_of(w_half[p], s.T);
  } else if (s.kind == MprKind::SigmaGamma) {
    r.sigma = make_sigma_sampler(s.T);
    for (Index p = 0; p < n; ++p) {
      param[p] = r.sigma->sigma_of(w_half[p]);
      stop_clock[p] = r.sigma->clock_of(param[p]);
    }
  }

  if (drifted(s)) {
    r.clock = hitting_time(ens, s.b, alpha);
  } else if (shared) {
    r.clock = *shared;
  } else {
    r.clock = shared_clock(ens);
  }
  const HittingClock& clk = *r.clock;
  if (s.kind == MprKind::SigmaGamma && clk.x_mark.size() != n)
    throw std::invalid_argument("realize: shared clock lacks the sigma marks");

  const double k0 = clock_coefficient(s);
  const Index m = g.size();
  PathFunctionals& f = r.f;
  f.grid = g;
  f.integral.setZero(n, m);
  f.qv.setZero(n, m);
  f.state.resize(n, m);
  f.stop.resize(n);
  f.mark = param;
  f.flag.assign(static_cast<std::size_t>(n), PathFlag::ok);
  const RowMatrix W = ens.w();

  parallel_for(n, [&](std::ptrdiff_t pb, std::ptrdiff_t pe) {
    for (std::ptrdiff_t p = pb; p < pe; ++p) {
      const double kappa = k0 * (alpha_weighted(s.kind) ? alpha[p] : 1.0);
      const double mu = drifted(s) ? clk.mu[p] : 0.0;
      const double H = clk.H[p];
      const double e = std::min(H, stop_clock[p]);
      double x_end = clk.side[p];
      if (s.kind == MprKind::SigmaGamma && stop_clock[p] < H) x_end = clk.x_mark[p];
      if (clk.censored[static_cast<std::size_t>(p)]) {
        f.flag[static_cast<std::size_t>(p)] = PathFlag::censored;
        x_end = clk.x_nodes(p, clk.x_nodes.cols() - 1);
      }
      for (Index j = 0; j <= g.half; ++j) f.state(p, j) = W(p, j);
      for (Index k = 1; k < clk.u_nodes.size(); ++k) {
        const Index j = g.half + k;
        const double u = clk.u_nodes[k];
        if (u < e) {
          const double x = clk.x_nodes(p, k);
          f.integral(p, j) = kappa * (x - mu * u);
          f.qv(p, j) = kappa * kappa * u;
          f.state(p, j) = x;
        } else {
          f.integral(p, j) = kappa * (x_end - mu * e);
          f.qv(p, j) = kappa * kappa * e;
          f.state(p, j) = kNaN;
        }
      }
      // the last node stands for T: paths that stopped have their terminal values
      if (!clk.censored[static_cast<std::size_t>(p)]) {
        f.integral(p, m - 1) = kappa * (x_end - mu * e);
        f.qv(p, m - 1) = kappa * kappa * e;
      }
      f.stop[p] = std::isinf(e) ? s.T : s.T - (s.T / 2) * std::exp(-e);
    }
  });
  return r;
}

}  // namespace

HittingClock shared_clock(const PathEnsemble& ens) {
  const SigmaSampler sig = make_sigma_sampler(ens.grid.T);
  const Eigen::VectorXd w_half = ens.w_at(ens.grid.half);
  ClockOptions opt;
  opt.mark.resize(ens.n_paths);
  for (Index p = 0; p < ens.n_paths; ++p) opt.mark[p] = sig.clock_of(sig.sigma_of(w_half[p]));
  return hitting_time(ens, 0.0, 1.0, opt);
}

Realization realize(const MprSpec& s, const PathEnsemble& ens) {
  validate(s);
  if (!uses_clock(s.kind)) return realize_grid(s, ens);
  return realize_clock(s, ens, nullptr);
}

Realization realize(const MprSpec& s, const PathEnsemble& ens, const HittingClock& shared) {
  validate(s);
  if (!uses_clock(s.kind)) return realize_grid(s, ens);
  return realize_clock(s, ens, &shared);
}

double supremum_state(const MprSpec& s) {
  if (alpha_weighted(s.kind)) return -kInf;
  if (s.kind == MprKind::SigmaGamma) return kInf;
  return 0.0;
}

HalfRemainder remainder_from_half(const MprSpec& s, const PathEnsemble& ens, double w_half, const HittingClock* driftless) {
  validate(s);
  if (!uses_clock(s.kind)) throw std::invalid_argument("remainder_from_half: construction has no clock after T/2");
  HalfRemainder out;
  double alpha = 1.0, stop = kInf;
  if (alpha_weighted(s.kind)) {
    alpha = alpha_of(w_half, s.T);
    out.parameter = alpha;
  } else if (s.kind == MprKind::SigmaGamma) {
    const SigmaSampler sig = make_sigma_sampler(s.T);
    out.parameter = sig.sigma_of(w_half);
    stop = sig.clock_of(out.parameter);
  }
  std::optional<HittingClock> own;
  const HittingClock* clk = driftless;
  if (drifted(s)) {
    own = hitting_time(ens, s.b, alpha);
    clk = &*own;
  } else if (std::isfinite(stop)) {
    ClockOptions opt;
    opt.mark = Eigen::VectorXd::Constant(ens.n_paths, stop);
    own = hitting_time(ens, 0.0, 1.0, opt);
    clk = &*own;
  } else if (!clk) {
    own = hitting_time(ens, 0.0, 1.0);
    clk = &*own;
  }
  const double kappa = clock_coefficient(s) * (alpha_weighted(s.kind) ? alpha : 1.0);
  const Index n = ens.n_paths;
  out.integral.resize(n);
  out.qv.resize(n);
  for (Index p = 0; p < n; ++p) {
    const double H = clk->H[p];
    const double e = std::min(H, stop);
    double x_end = stop < H ? clk->x_mark[p] : clk->side[p];
    if (clk->censored[static_cast<std::size_t>(p)]) x_end = clk->x_nodes(p, clk->x_nodes.cols() - 1);
    const double mu = drifted(s) ? clk->mu[p] : 0.0;
    out.integral[p] = kappa * (x_end - mu * e);
    out.qv[p] = kappa * kappa * e;
  }
  return out;
}

PathFunctionals lambda_zero(const PathEnsemble& ens) { return realize(MprSpec::zero(ens.grid.T), ens).f; }

PathFunctionals lambda_constant(const PathEnsemble& ens, double level) {
  return realize(MprSpec::constant(level, ens.grid.T), ens).f;
}

PathFunctionals lambda_reverting(const PathEnsemble& ens) { return realize(MprSpec::reverting(ens.grid.T), ens).f; }

PathFunctionals lambda_nosol(const PathEnsemble& ens, double q) {
  return realize(MprSpec::nosol(q, ens.grid.T), ens).f;
}

PathFunctionals lambda_alpha(const PathEnsemble& ens, double q) {
  return realize(MprSpec::alpha_arccos(q, ens.grid.T), ens).f;
}

std::pair<PathFunctionals, SigmaSampler> lambda_sigma(const PathEnsemble& ens, double q) {
  auto r = realize(MprSpec::sigma_gamma(q, ens.grid.T), ens);
  return {std::move(r.f), *r.sigma};
}

PathFunctionals lambda_tilde(const PathEnsemble& ens, double b, Measure m) {
  return realize(MprSpec::tilde(b, ens.grid.T).under(m), ens).f;
}

ScaledChoice choose_scaled(double q, double k, ScaledMode mode) {
  if (!(q < 0)) throw std::invalid_argument("choose_scaled: q must be negative");
  const double kq_value = kq(q);
  ScaledChoice ch;
  if (mode == ScaledMode::at_threshold) {
    ch.a = 0.5 * std::sqrt(kq_value);
    ch.b = std::sqrt(2 * kq_value / (ch.a * ch.a) - 2);
    return ch;
  }
  if (!(k < kq_value)) throw std::invalid_argument("choose_scaled: k must lie below k_q");
  // aim halfway between k and k_q on the curve q^2 - q/2 - q r, r = sqrt(q^2 - q - 2a^2)
  const double target = 0.5 * (k + kq_value);
  const double r = std::max(0.0, (target - q * q + q / 2) / (-q));
  ch.a = std::sqrt((q * q - q - r * r) / 2);
  ch.b = (q - r) / ch.a;
  return ch;
}

ScaledResult lambda_scaled(const PathEnsemble& ens, double q, double k, ScaledMode mode) {
  const auto ch = choose_scaled(q, k, mode);
  ScaledResult out;
  out.a = ch.a;
  out.b = ch.b;
  out.f = realize(MprSpec::scaled(ch.a, ch.b, q, ens.grid.T), ens).f;
  return out;
}

Eigen::VectorXd mvt_terminal(const PathFunctionals& f) { return f.terminal_qv(); }

}  // namespace bsdelab
