#include "bsdelab/bmo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>

#include "bsdelab/bsde.hpp"

namespace bsdelab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZ999 = 3.090232306167813;  // normal 99.9% quantile

// Same grid and seed family, no grid increments: enough to drive the clock.
PathEnsemble clock_only(const TimeGrid& g, Index n, std::uint64_t seed) {
  PathEnsemble e;
  e.grid = g;
  e.n_paths = n;
  e.seed = seed;
  return e;
}

BinnedProfile profile_values(const FamilyMember& m, const Eigen::VectorXd& values, Index min_count) {
  BinnedProfile pr;
  pr.label = m.label;
  pr.t = m.t;
  pr.limit = m.limit;
  pr.bins = bin_means(m.stat, values, min_count);
  for (const auto& b : pr.bins)
    if (!(b.mean <= pr.max_mean)) {
      pr.max_mean = b.mean;
      pr.max_se = b.se;
    }
  pr.lower = tail_trend(pr.bins, false);
  pr.upper = tail_trend(pr.bins, true);
  return pr;
}

// Growth along the state grid only means something where the state is W and no
// supremum state certifies the bound.
bool growth_counts(const FamilyMember& m, bool has_limit, double T) {
  return !has_limit && !m.limit && !std::isnan(m.t) && m.t <= T / 2 + 1e-12;
}

bool any_limit(const std::vector<FamilyMember>& fam) {
  return std::any_of(fam.begin(), fam.end(), [](const FamilyMember& m) { return m.limit; });
}

}  // namespace

double kq(double q) {
  if (!(q < 0)) throw std::invalid_argument("kq: q must be negative");
  const double d = q - std::sqrt(q * q - q);
  return 0.5 * d * d;
}

double kq_numeric(double q) {
  if (!(q < 0)) throw std::invalid_argument("kq_numeric: q must be negative");
  auto f = [q](double eps) { return 0.5 * (q * q * (1 - q) / eps - q + 2 * q * q - q * eps); };
  // minimizer sqrt(-q(1-q)) lies well inside this bracket
  const double centre = std::sqrt(-q * (1 - q));
  const auto r = boost::math::tools::brent_find_minima(f, centre * 1e-3, centre * 1e3, 60);
  return r.second;
}

std::vector<FamilyMember> stopping_family(const Realization& r, const PathEnsemble& ens, const FamilyOptions& opt) {
  const PathFunctionals& f = r.f;
  const TimeGrid& g = f.grid;
  const Index n = f.n_paths(), N = f.last();
  std::vector<FamilyMember> fam;
  for (Index j = 0; j < N; ++j) {
    FamilyMember m;
    m.t = g.nodes[j];
    m.label = fmt::format("t={:.6g}", m.t);
    m.stat = f.state.col(j);
    m.integral = f.integral.col(N) - f.integral.col(j);
    m.qv = f.qv.col(N) - f.qv.col(j);
    for (Index p = 0; p < n; ++p)
      if (!f.ok(p)) m.integral[p] = m.qv[p] = kNaN;
    fam.push_back(std::move(m));
  }
  if (uses_clock(r.spec.kind)) {
    FamilyMember m;
    m.t = kNaN;
    m.label = "own stopping time";
    m.stat = Eigen::VectorXd::Zero(n);
    m.integral = Eigen::VectorXd::Zero(n);
    m.qv = Eigen::VectorXd::Zero(n);
    fam.push_back(std::move(m));
  }
  if (opt.include_limit && has_half_state(r.spec.kind)) {
    const double w = supremum_state(r.spec);
    HalfRemainder rem;
    if (opt.limit_paths > 0) {
      const PathEnsemble e = clock_only(g, opt.limit_paths, ens.seed ^ 0x5deece66dULL);
      rem = remainder_from_half(r.spec, e, w);
    } else {
      const bool shared = r.clock && r.spec.kind != MprKind::Tilde && r.spec.kind != MprKind::Scaled;
      rem = remainder_from_half(r.spec, ens, w, shared ? &*r.clock : nullptr);
    }
    FamilyMember m;
    m.t = g.T / 2;
    m.limit = true;
    m.label = fmt::format("T/2 at W_T/2={}", w > 0 ? "+inf" : "-inf");
    m.stat = Eigen::VectorXd::Zero(rem.qv.size());
    m.integral = rem.integral;
    m.qv = rem.qv;
    fam.push_back(std::move(m));
  }
  return fam;
}

BinnedProfile profile(const FamilyMember& m, const Eigen::VectorXd& log_value, const DivergenceOptions* div,
                      Index min_count) {
  BinnedProfile pr = profile_values(m, log_value.array().exp().matrix(), min_count);
  if (div) {
    pr.evidence = divergence_test(log_value, *div);
    pr.diverged = pr.evidence.diverged || !std::isfinite(pr.max_mean);
  }
  return pr;
}

BmoEstimate bmo_norm(const Realization& r, const PathEnsemble& ens, const FamilyOptions& opt) {
  const auto fam = stopping_family(r, ens, opt);
  const bool lim = any_limit(fam);
  BmoEstimate est;
  for (const auto& m : fam) {
    BinnedProfile pr = profile_values(m, m.qv, 200);
    if (pr.max_mean > est.value || est.profiles.empty()) {
      est.value = pr.max_mean;
      est.se = pr.max_se;
    }
    if (growth_counts(m, lim, r.spec.T) && (pr.lower.growing || pr.upper.growing)) est.infinite = true;
    est.profiles.push_back(std::move(pr));
  }
  est.upper = est.value + kZ999 * est.se;
  if (est.infinite) est.value = est.upper = kInf;
  return est;
}

DivergenceOptions moment_gate() {
  DivergenceOptions o;
  o.hill_max = 1.0;
  o.growth_min = 1.0;
  return o;
}

MomentEstimate dyn_exp_moment(const std::vector<FamilyMember>& family, double k, const DivergenceOptions& gate) {
  if (!(k > 0)) throw std::invalid_argument("dyn_exp_moment: k must be positive");
  MomentEstimate est;
  est.k = k;
  for (const auto& m : family) {
    const Eigen::VectorXd lv = k * m.qv;
    const BinnedProfile pr = profile(m, lv, &gate);
    if (pr.max_mean > est.value) {
      est.value = pr.max_mean;
      est.se = pr.max_se;
      est.worst = m.label;
    }
    if (pr.diverged) {
      if (!est.diverged) est.worst = m.label;
      est.diverged = true;
    }
  }
  if (est.diverged) est.value = kInf;
  return est;
}

MomentEstimate dyn_exp_moment(const Realization& r, const PathEnsemble& ens, double k, const FamilyOptions& opt) {
  return dyn_exp_moment(stopping_family(r, ens, opt), k);
}

ExponentInterval critical_exponent(const std::vector<FamilyMember>& family, const ExponentOptions& opt) {
  ExponentInterval iv;
  double lo = 0, hi = kInf;
  for (double k = opt.k_start; k <= opt.k_max * (1 + 1e-12); k *= 2) {
    const auto m = dyn_exp_moment(family, k);
    iv.trail.push_back(m);
    if (m.diverged) {
      hi = k;
      break;
    }
    lo = k;
  }
  if (std::isinf(hi)) {
    iv.lo = lo;
    iv.infinite = true;
    return iv;
  }
  if (lo == 0) lo = hi / 2;  // diverged at the first probe; report one halving below
  while (hi / lo > opt.ratio && iv.iterations < opt.max_iterations) {
    const double mid = std::sqrt(lo * hi);
    const auto m = dyn_exp_moment(family, mid);
    iv.trail.push_back(m);
    (m.diverged ? hi : lo) = mid;
    ++iv.iterations;
  }
  iv.lo = lo;
  iv.hi = hi;
  return iv;
}

ExponentInterval critical_exponent(const Realization& r, const PathEnsemble& ens, const ExponentOptions& opt) {
  return critical_exponent(stopping_family(r, ens, opt.family), opt);
}

Verdict john_nirenberg_check(const Realization& r, const PathEnsemble& ens, const FamilyOptions& opt) {
  Verdict v;
  v.name = "John-Nirenberg";
  const auto fam = stopping_family(r, ens, opt);
  const bool lim = any_limit(fam);
  double norm2 = 0, norm_se = 0;
  bool infinite = false;
  for (const auto& m : fam) {
    const auto pr = profile_values(m, m.qv, 200);
    if (pr.max_mean > norm2) {
      norm2 = pr.max_mean;
      norm_se = pr.max_se;
    }
    infinite = infinite || (growth_counts(m, lim, r.spec.T) && (pr.lower.growing || pr.upper.growing));
  }
  const double upper = norm2 + kZ999 * norm_se;
  if (infinite || upper >= 1) {
    v.skipped = true;
    v.passed = true;
    v.detail = fmt::format("skipped: BMO2 norm^2 estimate {:.4g} (upper {:.4g}) is not below 1", norm2, upper);
    return v;
  }
  const double bound = 1 / (1 - upper);
  double worst = -kInf;
  std::string where;
  v.passed = true;
  for (const auto& m : fam) {
    const auto pr = profile(m, m.qv, nullptr);
    for (const auto& b : pr.bins) {
      const double excess = (b.mean - bound) / std::max(b.se, 1e-300);
      if (b.mean - bound > worst) {
        worst = b.mean - bound;
        where = m.label;
      }
      if (b.mean > bound + 3 * b.se && excess > 3) v.passed = false;
    }
  }
  v.detail = fmt::format("norm^2 {:.4g}, bound 1/(1-norm^2) = {:.4g}, largest bin excess {:.3g} at {}", norm2, bound,
                         worst, where);
  return v;
}

HolderReport reverse_holder(const Realization& r, const PathEnsemble& ens, double q, const FamilyOptions& opt) {
  if (!(q < 1)) throw std::invalid_argument("reverse_holder: q must be < 1");
  HolderReport rep;
  rep.verdict.name = "reverse Hoelder";
  if (q == 0) {
    rep.sup = 1;
    rep.verdict.passed = true;
    rep.verdict.detail = "q = 0: the ratio is identically 1";
    return rep;
  }
  const auto fam = stopping_family(r, ens, opt);
  const bool lim = any_limit(fam);
  const DivergenceOptions gate;
  double sup_half = 0, se_half = 0;
  std::string worst;
  for (const auto& m : fam) {
    const Eigen::VectorXd lv = log_power_summand(m.integral, m.qv, q);
    BinnedProfile pr = profile(m, lv, q < 0 ? &gate : nullptr);
    if (pr.diverged) rep.diverged = true;
    if (growth_counts(m, lim, r.spec.T) && (pr.lower.growing || pr.upper.growing)) rep.growing = true;
    if (pr.max_mean > rep.sup) {
      rep.sup = pr.max_mean;
      rep.sup_se = pr.max_se;
      worst = m.label;
    }
    // the same member on the first half of the paths
    const Index h = lv.size() / 2;
    FamilyMember half{m.label, m.t, m.stat.head(h), m.integral.head(h), m.qv.head(h), m.limit};
    const auto ph = profile(half, lv.head(h), nullptr);
    if (ph.max_mean > sup_half) {
      sup_half = ph.max_mean;
      se_half = ph.max_se;
    }
    rep.profiles.push_back(std::move(pr));
  }
  const double diff = std::abs(rep.sup - sup_half);
  rep.stable = std::isfinite(rep.sup) &&
               (diff <= 4 * std::hypot(rep.sup_se, se_half) || diff <= 0.1 * std::max(rep.sup, sup_half));
  rep.bounded = !rep.diverged && !rep.growing && rep.stable;
  rep.verdict.passed = rep.bounded;
  rep.verdict.detail =
      fmt::format("sup {:.4g} (se {:.3g}) at {}; half-sample sup {:.4g}; diverged={} growing={} stable={}", rep.sup,
                  rep.sup_se, worst, sup_half, rep.diverged, rep.growing, rep.stable);
  return rep;
}

AprioriReport apriori_bound(const Realization& r, const PathEnsemble& ens, double q, const FamilyOptions& opt) {
  if (!(q >= 0 && q < 1)) throw std::invalid_argument("apriori_bound: q must lie in [0,1)");
  AprioriReport rep;
  rep.verdict.name = "a priori bound";
  rep.verdict.passed = true;
  if (q == 0) {
    rep.verdict.detail = "q = 0: Psi is identically 0";
    return rep;
  }
  const double lc = q / (2 * (1 - q));
  const auto fam = stopping_family(r, ens, opt);
  rep.worst_upper_excess = rep.worst_lower_excess = -kInf;
  for (const auto& m : fam) {
    const Eigen::VectorXd lv = log_power_summand(m.integral, m.qv, q);
    const auto pm = profile(m, lv, nullptr);
    const auto pq = profile_values(m, m.qv, 200);
    for (std::size_t i = 0; i < pm.bins.size(); ++i) {
      const Bin& b = pm.bins[i];
      const Bin& bq = pq.bins[i];
      const double psi = std::log(b.mean) / (1 - q);
      const double se = b.se / (b.mean * (1 - q)) + 1e-15;
      const double lower = -lc * bq.mean;
      const double se_l = se + lc * bq.se;
      rep.worst_upper_excess = std::max(rep.worst_upper_excess, psi / se);
      rep.worst_lower_excess = std::max(rep.worst_lower_excess, (lower - psi) / se_l);
      if (psi > 3 * se || lower - psi > 3 * se_l) rep.verdict.passed = false;
      ++rep.bins_checked;
    }
  }
  rep.verdict.detail = fmt::format("{} bins; worst upper excess {:.3g} SE, worst lower excess {:.3g} SE",
                                   rep.bins_checked, rep.worst_upper_excess, rep.worst_lower_excess);
  return rep;
}

WitnessReport reverting_witness(const Realization& r, const PathEnsemble& ens, double q) {
  if (r.spec.kind != MprKind::Reverting) throw std::invalid_argument("reverting_witness: Reverting spec required");
  if (!(q < 0)) throw std::invalid_argument("reverting_witness: q must be negative");
  WitnessReport rep;
  rep.verdict.name = "reverting lower bound";
  rep.verdict.passed = true;
  rep.worst_deficit = -kInf;
  const double T = r.spec.T;
  FamilyOptions fo;
  fo.include_limit = false;
  for (const auto& m : stopping_family(r, ens, fo)) {
    if (std::isnan(m.t) || m.t >= T - 1e-12) continue;
    const Eigen::VectorXd value = log_power_summand(m.integral, m.qv, q).array().exp().matrix();
    const Eigen::VectorXd bound = (-q * (T - m.t) / 2 * m.stat.array().abs()).exp().matrix();
    const auto bv = bin_means(m.stat, value);
    const auto bb = bin_means(m.stat, bound);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < bv.size(); ++i) {
      if (bv[i].stopped) continue;
      const double se = bv[i].se + bb[i].se + 1e-300;
      const double deficit = (bb[i].mean - bv[i].mean) / se;
      rep.worst_deficit = std::max(rep.worst_deficit, deficit);
      if (deficit > 3) rep.verdict.passed = false;
      ++rep.bins_checked;
      x.push_back(std::abs(bv[i].center));
      y.push_back(std::log(bv[i].mean));
    }
    if (rep.slope_ratio == 0 && x.size() > 2) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
      mx /= x.size(), my /= y.size();
      double sxy = 0, sxx = 0;
      for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
      if (sxx > 0) rep.slope_ratio = (sxy / sxx) / (-q * (T - m.t) / 2);
    }
  }
  rep.verdict.detail = fmt::format("{} bins; worst deficit {:.3g} SE; log-slope {:.3g} x q(T-t)/2 at the first node",
                                   rep.bins_checked, rep.worst_deficit, rep.slope_ratio);
  return rep;
}

std::string solution_name(Solution s) {
  switch (s) {
    case Solution::Bounded: return "BoundedSolution";
    case Solution::Unbounded: return "UnboundedSolution";
    case Solution::None: return "NoSolution";
  }
  return "?";
}

Classification classify(const MprSpec& s, double q, const PathEnsemble& ens, const ClassifyOptions& opt) {
  return classify(realize(s, ens), q, ens, opt);
}

Classification classify(const Realization& r, double q, const PathEnsemble& ens, const ClassifyOptions& opt) {
  if (!(q < 1)) throw std::invalid_argument("classify: q must be < 1");
  Classification cl;
  if (q < 0) cl.kq_value = kq(q);

  const auto psi = psi_unconditional(r, q);
  Verdict vu;
  vu.name = "unconditional moment";
  vu.passed = !psi.diverged;
  vu.detail = psi.diverged ? fmt::format("diverged: Hill {:.3g}, block growth {}", psi.evidence.hill,
                                         fmt::join(psi.evidence.growth, "/"))
                           : fmt::format("Psi_0 = {:.6g} (se {:.2g}), Hill {:.3g}", psi.estimate, psi.se,
                                         psi.evidence.hill);
  cl.evidence.push_back(vu);

  if (psi.diverged) {
    cl.verdict = Solution::None;
  } else {
    const auto rh = reverse_holder(r, ens, q);
    cl.evidence.push_back(rh.verdict);
    cl.verdict = rh.bounded ? Solution::Bounded : Solution::Unbounded;

    if (q < 0 && has_half_state(r.spec.kind)) {
      // conditional estimates walking toward the supremum state
      const double dir = supremum_state(r.spec) > 0 ? 1.0 : -1.0;
      const PathEnsemble inner = clock_only(ens.grid, opt.ladder_paths, ens.seed ^ 0x9e3779b97f4a7c15ULL);
      std::vector<double> est;
      for (double w : {0.0, 0.75, 1.5, 2.25, 3.0}) {
        const auto e = psi_conditional_halfT(r.spec, q, dir * w, inner);
        est.push_back(e.estimate);
      }
      Verdict vl;
      vl.name = "T/2 ladder toward the supremum state";
      bool increasing = true;
      for (std::size_t i = 1; i < est.size(); ++i) increasing = increasing && est[i] >= est[i - 1];
      vl.passed = increasing;
      vl.detail = fmt::format("Psi_T/2 along W_T/2 -> {}: {:.4g} ({})", dir > 0 ? "+inf" : "-inf",
                              fmt::join(est, ", "), increasing ? "increasing" : "not monotone");
      cl.evidence.push_back(vl);
    }
  }

  if (opt.exponent) {
    cl.exponent = critical_exponent(r, ens, opt.exponent_options);
    if (q < 0) {
      if (cl.exponent.infinite || cl.exponent.lo > cl.kq_value)
        cl.side = "above k_q";
      else if (cl.exponent.hi < cl.kq_value)
        cl.side = "below k_q";
      else
        cl.side = "straddles k_q";
    }
  }
  return cl;
}

BmoReport bmo_report(const Realization& r, const PathEnsemble& ens, double q, const std::vector<double>& ks,
                     const ExponentOptions& opt) {
  BmoReport rep;
  rep.bmo = bmo_norm(r, ens, opt.family);
  const auto fam = stopping_family(r, ens, opt.family);
  std::vector<double> sorted = ks;
  std::sort(sorted.begin(), sorted.end());
  bool diverged = false;
  double prev = 0;
  for (double k : sorted) {
    auto m = dyn_exp_moment(fam, k);
    diverged = diverged || m.diverged;
    m.diverged = diverged;
    if (diverged) m.value = kInf;
    m.value = std::max(m.value, prev);
    prev = m.value;
    rep.moments.push_back(m);
  }
  rep.exponent = critical_exponent(fam, opt);
  if (q < 0) rep.kq_value = kq(q);
  return rep;
}

}  // namespace bsdelab
