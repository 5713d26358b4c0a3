#include "bsdelab/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "bsdelab/parallel.hpp"

namespace bsdelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_q(double q, const char* who) {
  if (!(q < 1)) throw std::invalid_argument(fmt::format("{}: q must be < 1", who));
}

// Mean of exp(ls) with the zero-mean control subtracted at its optimal weight.
MeanEstimate controlled_mean(const Eigen::VectorXd& ls, const Eigen::VectorXd& control, bool use_control) {
  std::vector<double> y, c;
  y.reserve(static_cast<std::size_t>(ls.size()));
  c.reserve(static_cast<std::size_t>(ls.size()));
  for (Index i = 0; i < ls.size(); ++i) {
    if (std::isnan(ls[i]) || std::isnan(control[i])) continue;
    y.push_back(std::exp(ls[i]));
    c.push_back(control[i]);
  }
  const Index n = static_cast<Index>(y.size());
  if (n == 0) return {kNaN, kNaN, 0};
  Eigen::Map<Eigen::VectorXd> Y(y.data(), n), C(c.data(), n);
  if (!Y.allFinite()) return {kInf, kInf, n};
  double beta = 0;
  if (use_control && n > 2) {
    const double cm = C.mean(), ym = Y.mean();
    const double var = (C.array() - cm).square().sum();
    if (var > 0) beta = ((C.array() - cm) * (Y.array() - ym)).sum() / var;
  }
  const Eigen::VectorXd adj = Y - beta * C;
  return mean_se(adj);
}

OpportunityEstimate finish(OpportunityEstimate e, double q, const MeanEstimate& m) {
  e.moment = m.mean;
  e.moment_se = m.se;
  if (e.diverged || !std::isfinite(m.mean) || !(m.mean > 0)) {
    e.diverged = e.diverged || !std::isfinite(m.mean);
    e.estimate = e.diverged ? kInf : kNaN;
    e.se = e.diverged ? kInf : kNaN;
    return e;
  }
  e.estimate = std::log(m.mean) / (1 - q);
  e.se = m.se / (m.mean * (1 - q));
  return e;
}

// Gram-matrix condition number of the standardized basis, sqrt of the eigenvalue ratio.
double condition_number(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd G = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  const auto ev = es.eigenvalues();
  if (!(ev[0] > 0)) return kInf;
  return std::sqrt(ev[ev.size() - 1] / ev[0]);
}

struct Basis {
  Eigen::MatrixXd X;  // rows: live paths
  int degree = 3;
  bool mark = false;
};

Basis make_basis(const std::vector<Index>& rows, const RowMatrix& state, Index j, const Eigen::VectorXd& mark,
                 bool use_mark, int degree) {
  const Index n = static_cast<Index>(rows.size());
  double m = 0, s = 0;
  for (Index r : rows) m += state(r, j);
  m /= std::max<Index>(n, 1);
  for (Index r : rows) s += (state(r, j) - m) * (state(r, j) - m);
  s = n > 1 ? std::sqrt(s / static_cast<double>(n - 1)) : 0.0;
  if (!(s > 1e-12)) degree = 0;
  double mm = 0, ms = 0;
  if (use_mark) {
    for (Index r : rows) mm += mark[r];
    mm /= std::max<Index>(n, 1);
    for (Index r : rows) ms += (mark[r] - mm) * (mark[r] - mm);
    ms = n > 1 ? std::sqrt(ms / static_cast<double>(n - 1)) : 0.0;
    if (!(ms > 1e-12)) use_mark = false;
  }
  const Index p = 1 + degree + (use_mark ? 3 : 0);
  Basis b;
  b.degree = degree;
  b.mark = use_mark;
  b.X.resize(n, p);
  for (Index i = 0; i < n; ++i) {
    const double z = degree > 0 ? (state(rows[static_cast<std::size_t>(i)], j) - m) / s : 0.0;
    Index k = 0;
    double zp = 1;
    for (int d = 0; d <= degree; ++d) {
      b.X(i, k++) = zp;
      zp *= z;
    }
    if (use_mark) {
      const double a = (mark[rows[static_cast<std::size_t>(i)]] - mm) / ms;
      b.X(i, k++) = a;
      b.X(i, k++) = a * a;
      b.X(i, k++) = a * z;
    }
  }
  return b;
}

}  // namespace

Eigen::VectorXd log_power_summand(const Eigen::VectorXd& integral, const Eigen::VectorXd& qv, double q) {
  return (-q * integral.array() - 0.5 * q * qv.array()).matrix();
}

OpportunityEstimate psi_unconditional(const MprSpec& s, double q, const PathEnsemble& ens, const PsiOptions& opt) {
  check_q(q, "psi_unconditional");
  if (q == 0) {
    OpportunityEstimate e;
    e.n_inner = ens.n_paths;
    e.moment = 1;
    return e;
  }
  return psi_unconditional(realize(s, ens), q, opt);
}

OpportunityEstimate psi_unconditional(const Realization& r, double q, const PsiOptions& opt) {
  check_q(q, "psi_unconditional");
  OpportunityEstimate e;
  e.n_inner = r.f.n_paths();
  if (q == 0) {
    e.moment = 1;
    return e;
  }
  Eigen::VectorXd I = r.f.terminal_integral(), Q = r.f.terminal_qv();
  for (Index p = 0; p < I.size(); ++p)
    if (!r.f.ok(p)) I[p] = Q[p] = kNaN;
  const Eigen::VectorXd ls = log_power_summand(I, Q, q);
  e.evidence = divergence_test(ls, opt.divergence);
  e.diverged = q < 0 && e.evidence.diverged;
  return finish(e, q, controlled_mean(ls, I, opt.control_variate));
}

OpportunityEstimate psi_conditional_halfT(const MprSpec& s, double q, double w_half, const PathEnsemble& inner,
                                          const HittingClock* driftless) {
  check_q(q, "psi_conditional_halfT");
  if (!has_half_state(s.kind))
    throw std::invalid_argument("psi_conditional_halfT: " + kind_name(s.kind) + " has no F_{T/2} factorization");
  OpportunityEstimate e;
  e.t = s.T / 2;
  e.state = fmt::format("W_T/2={:.17g}", w_half);
  e.n_inner = inner.n_paths;
  if (q == 0) {
    e.moment = 1;
    e.lower_bound = 0;
    return e;
  }
  const HalfRemainder rem = remainder_from_half(s, inner, w_half, driftless);
  const Eigen::VectorXd ls = log_power_summand(rem.integral, rem.qv, q);
  e.evidence = divergence_test(ls);
  e.diverged = q < 0 && e.evidence.diverged;
  e = finish(e, q, controlled_mean(ls, rem.integral, true));

  // -q kappa X >= -|q| kappa_unit because |X| <= 1 and alpha <= 1
  if (q < 0 && (s.kind == MprKind::AlphaArccos || s.kind == MprKind::SigmaGamma)) {
    const double unit = clock_coefficient(s);
    const double kappa = unit * (s.kind == MprKind::AlphaArccos ? rem.parameter : 1.0);
    const double theta = -0.5 * q * kappa * kappa;
    double S = kInf;
    if (s.kind == MprKind::SigmaGamma) S = make_sigma_sampler(s.T).clock_of(rem.parameter);
    const double M = exit_moment_truncated(theta, S);
    e.lower_bound = (q * unit + std::log(M)) / (1 - q);
  }
  return e;
}

SolutionTriple psi_path(const MprSpec& s, double q, const PathEnsemble& ens) {
  return psi_path(realize(s, ens), q, ens);
}

SolutionTriple psi_path(const Realization& r, double q, const PathEnsemble& ens) {
  check_q(q, "psi_path");
  const PathFunctionals& f = r.f;
  const TimeGrid& g = f.grid;
  const Index n = f.n_paths(), m = g.size(), N = m - 1;
  SolutionTriple tr;
  tr.grid = g;
  tr.provenance = Provenance::Explicit;
  tr.psi = RowMatrix::Zero(n, m);
  tr.z = RowMatrix::Zero(n, m);
  if (q == 0) return tr;
  if (r.spec.kind == MprKind::Zero) return tr;

  const bool clock = uses_clock(r.spec.kind);
  if (clock)
    tr.warnings.push_back("Z after T/2 is not identified: the clock noise is independent of the grid increments");

  const RowMatrix W = ens.w();
  for (Index j = N - 1; j >= 0; --j) {
    std::vector<Index> rows;
    for (Index p = 0; p < n; ++p)
      if (f.ok(p) && !std::isnan(f.state(p, j))) rows.push_back(p);
    if (rows.empty()) continue;
    const bool use_mark = clock && j > g.half && f.mark.size() == n;

    Eigen::VectorXd y(static_cast<Index>(rows.size())), ctrl(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Index p = rows[i];
      const double dI = f.integral(p, N) - f.integral(p, j);
      const double dQ = f.qv(p, N) - f.qv(p, j);
      y[static_cast<Index>(i)] = std::exp(-q * dI - 0.5 * q * dQ);
      ctrl[static_cast<Index>(i)] = dI;
    }

    int degree = 3;
    Basis b;
    for (;;) {
      b = make_basis(rows, f.state, j, f.mark, use_mark, degree);
      Eigen::MatrixXd full(b.X.rows(), b.X.cols() + 1);
      full << b.X, ctrl;
      const double cond = condition_number(full);
      if (cond <= 1e12 || b.degree == 0) {
        if (cond > 1e12)
          tr.warnings.push_back(fmt::format("node {}: basis ill-conditioned even at degree 0 ({:.3g})", j, cond));
        break;
      }
      tr.warnings.push_back(fmt::format("node {}: condition number {:.3g}, basis reduced to degree {}", j, cond,
                                        b.degree - 1));
      degree = b.degree - 1;
    }
    Eigen::MatrixXd full(b.X.rows(), b.X.cols() + 1);
    full << b.X, ctrl;
    Eigen::VectorXd ctrl_var = ctrl.array() - ctrl.mean();
    Eigen::VectorXd coef;
    if (ctrl_var.squaredNorm() > 1e-300)
      coef = full.colPivHouseholderQr().solve(y);
    else {
      coef = Eigen::VectorXd::Zero(full.cols());
      coef.head(b.X.cols()) = b.X.colPivHouseholderQr().solve(y);
    }
    const Eigen::VectorXd fit = b.X * coef.head(b.X.cols());

    // Z from E[Psi_{j+1} dW | F_j] / dt
    const double dt = g.dt(j);
    Eigen::VectorXd zy(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Index p = rows[i];
      zy[static_cast<Index>(i)] = tr.psi(p, j + 1) * (W(p, j + 1) - W(p, j)) / dt;
    }
    const Eigen::VectorXd zc = b.X.colPivHouseholderQr().solve(zy);
    const Eigen::VectorXd zfit = b.X * zc;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Index p = rows[i];
      tr.psi(p, j) = std::log(std::max(fit[static_cast<Index>(i)], 1e-300)) / (1 - q);
      tr.z(p, j) = zfit[static_cast<Index>(i)];
    }
  }
  return tr;
}

void write_triple_csv(const SolutionTriple& tr, std::ostream& os, Index max_paths) {
  os << "path,t,psi,z\n";
  const Index n = max_paths < 0 ? tr.psi.rows() : std::min(max_paths, tr.psi.rows());
  for (Index p = 0; p < n; ++p)
    for (Index j = 0; j < tr.psi.cols(); ++j)
      os << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", p, tr.grid.nodes[j], tr.psi(p, j), tr.z(p, j));
}

RowMatrix lambda_at_nodes(const MprSpec& s, const PathEnsemble& ens) {
  const Index n = ens.n_paths, m = ens.grid.size();
  switch (s.kind) {
    case MprKind::Zero: return RowMatrix::Zero(n, m);
    case MprKind::Constant: return RowMatrix::Constant(n, m, s.c * s.level);
    case MprKind::Reverting: {
      RowMatrix W = ens.w();
      return W.unaryExpr([c = s.c](double w) { return -c * (w > 0 ? 1.0 : (w < 0 ? -1.0 : 0.0)) * std::sqrt(std::abs(w)); });
    }
    default:
      throw std::invalid_argument("lambda_at_nodes: " + kind_name(s.kind) + " is singular between grid nodes");
  }
}

// Generator in the form Psi_t = Psi_T + int_t^T f ds - int_t^T Z dW.
double driver(double q, double z, double lambda) { return 0.5 * z * z - 0.5 * q * (z + lambda) * (z + lambda); }

ResidualSummary driver_residual(const SolutionTriple& tr, const MprSpec& s, double q, const PathEnsemble& ens) {
  const TimeGrid& g = tr.grid;
  const Index n = tr.psi.rows(), m = tr.psi.cols(), N = m - 1;
  ResidualSummary out;
  out.per_path.resize(n);
  const bool exact = tr.zdw.size() > 0;
  RowMatrix lam, W;
  double lam0 = 0;
  if (exact) {
    if (s.kind != MprKind::Zero && s.kind != MprKind::Constant)
      throw std::invalid_argument("driver_residual: exact integrals need a constant lambda");
    lam0 = s.kind == MprKind::Constant ? s.c * s.level : 0.0;
  } else {
    lam = lambda_at_nodes(s, ens);
    W = ens.w();
  }
  parallel_for(n, [&](std::ptrdiff_t b, std::ptrdiff_t e) {
    for (std::ptrdiff_t p = b; p < e; ++p) {
      double worst = 0, tail = 0;  // tail: int_j^N Z dW - int_j^N f ds
      for (Index j = N; j >= 0; --j) {
        if (j < N) {
          if (exact) {
            const double dt = g.dt(j);
            const double dzdw = tr.zdw(p, j + 1) - tr.zdw(p, j);
            const double dzdt = tr.zdt(p, j + 1) - tr.zdt(p, j);
            const double dzsq = tr.zsq(p, j + 1) - tr.zsq(p, j);
            // int f ds = int z^2/2 - q/2 (z + lambda)^2 ds
            const double fint = 0.5 * (1 - q) * dzsq - q * lam0 * dzdt - 0.5 * q * lam0 * lam0 * dt;
            tail += dzdw - fint;
          } else {
            const double z = tr.z(p, j), l = lam(p, j);
            tail += z * (W(p, j + 1) - W(p, j)) - driver(q, z, l) * g.dt(j);
          }
        }
        // Psi_j = 0 + int f - int Z dW
        worst = std::max(worst, std::abs(tr.psi(p, j) + tail));
      }
      out.per_path[p] = worst;
    }
  });
  std::vector<double> v(out.per_path.data(), out.per_path.data() + n);
  std::sort(v.begin(), v.end());
  if (!v.empty()) {
    out.median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    out.p95 = v[std::min(v.size() - 1, static_cast<std::size_t>(0.95 * static_cast<double>(v.size())))];
  }
  return out;
}

OptimizerPaths optimizers(const SolutionTriple& tr, const MprSpec& s, double q, double x, const PathEnsemble& ens) {
  check_q(q, "optimizers");
  if (!(x > 0)) throw std::invalid_argument("optimizers: initial wealth must be positive");
  const TimeGrid& g = tr.grid;
  const Index n = tr.psi.rows(), m = tr.psi.cols();
  const RowMatrix lam = lambda_at_nodes(s, ens);
  const RowMatrix W = ens.w();
  const double p_util = q / (q - 1);
  OptimizerPaths out;
  out.wealth.resize(n, m);
  out.dual.resize(n, m);
  out.strategy.resize(n, m);
  out.product.resize(n, m);
  const double psi0 = tr.psi.col(0).mean();
  const double y0 = std::exp(psi0) * std::pow(x, p_util - 1);
  out.initial_product = x * y0;
  parallel_for(n, [&](std::ptrdiff_t b, std::ptrdiff_t e) {
    for (std::ptrdiff_t p = b; p < e; ++p) {
      double lx = std::log(x), ly = std::log(y0);
      for (Index j = 0; j < m; ++j) {
        const double nu = (1 - q) * (tr.z(p, j) + lam(p, j));
        out.strategy(p, j) = nu;
        out.wealth(p, j) = std::exp(lx);
        out.dual(p, j) = std::exp(ly);
        out.product(p, j) = std::exp(lx + ly);
        if (j + 1 < m) {
          const double dw = W(p, j + 1) - W(p, j), dt = g.dt(j), l = lam(p, j);
          lx += nu * dw + nu * l * dt - 0.5 * nu * nu * dt;
          ly += -l * dw - 0.5 * l * l * dt;
        }
      }
    }
  });
  out.terminal_product = mean_se(out.product.col(m - 1));
  return out;
}

double default_eps0(double q) {
  const double v = std::sqrt(std::abs(q * (1 - q)));
  return v > 0 ? v : 1.0;
}

DriverVerdict driver_props(double q, const Eigen::VectorXd& z, const Eigen::VectorXd& lambda, double eps0) {
  check_q(q, "driver_props");
  if (!(eps0 > 0)) throw std::invalid_argument("driver_props: eps0 must be positive");
  if (z.size() != lambda.size()) throw std::invalid_argument("driver_props: z and lambda sizes differ");
  const double gamma = 1 - q + eps0;
  const double cl = 0.5 * std::max(q * (q - eps0) / eps0, q / (1 - q));
  const double lip = std::max((1 - q) / 2, std::abs(q));
  DriverVerdict v;
  v.samples = z.size();
  v.growth = v.lipschitz = v.convex = true;
  for (Index i = 0; i < z.size(); ++i) {
    const double f = driver(q, z[i], lambda[i]);
    const double bound = cl * lambda[i] * lambda[i] + 0.5 * gamma * z[i] * z[i];
    if (std::abs(f) > bound * (1 + 1e-12) + 1e-300) v.growth = false;
  }
  for (Index i = 0; i + 1 < z.size(); i += 2) {
    const double z1 = z[i], z2 = z[i + 1], l = lambda[i];
    const double f1 = driver(q, z1, l), f2 = driver(q, z2, l);
    const double lhs = std::abs(f1 - f2);
    const double rhs = lip * (std::abs(l) + std::abs(z1) + std::abs(z2)) * std::abs(z1 - z2);
    if (lhs > rhs * (1 + 1e-12) + 1e-12 * (std::abs(f1) + std::abs(f2))) v.lipschitz = false;
    const double mid = driver(q, 0.5 * (z1 + z2), l);
    if (mid > 0.5 * (f1 + f2) + 1e-12 * (std::abs(f1) + std::abs(f2) + 1)) v.convex = false;
  }
  return v;
}

}  // namespace bsdelab
