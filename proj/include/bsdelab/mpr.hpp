#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "bsdelab/clock.hpp"
#include "bsdelab/functionals.hpp"

namespace bsdelab {

enum class MprKind { Zero, Constant, Reverting, NoSol, AlphaArccos, SigmaGamma, Tilde, Scaled };

// Law of the paths: the original measure, or the one under which the clock of
// the tilde constructions is driftless.
enum class Measure { P, Tilde };

struct MprSpec {
  MprKind kind = MprKind::Zero;
  double T = 1.0;
  double q = std::numeric_limits<double>::quiet_NaN();
  double level = 0.0;  // Constant
  double a = 1.0;      // Scaled
  double b = 0.0;      // Tilde, Scaled
  double c = 1.0;      // overall multiplier of lambda
  std::uint64_t seed = 0;
  Measure measure = Measure::P;

  static MprSpec zero(double T = 1.0);
  static MprSpec constant(double level, double T = 1.0);
  static MprSpec reverting(double T = 1.0);
  static MprSpec nosol(double q, double T = 1.0);
  static MprSpec alpha_arccos(double q, double T = 1.0);
  static MprSpec sigma_gamma(double q, double T = 1.0);
  static MprSpec tilde(double b, double T = 1.0);
  static MprSpec scaled(double a, double b, double q, double T = 1.0);

  MprSpec scaled_by(double factor) const;
  MprSpec under(Measure m) const;
};

void validate(const MprSpec& s);
std::string kind_name(MprKind k);
MprKind kind_from_name(const std::string& name);

// Lambda lives on (T/2, stop] through the hitting clock.
bool uses_clock(MprKind k);
// Lambda after T/2 depends on an F_{T/2}-measurable parameter.
bool has_half_state(MprKind k);
// Pathwise bound on int lambda^2 dt, +inf when there is none.
double qv_bound(const MprSpec& s);

// Key-value text, one "key = value" per line: kind, q, level, a, b, c, T, seed, measure.
std::string to_text(const MprSpec& s);
MprSpec spec_from_text(const std::string& text);

// alpha = (2/pi) arccos sqrt(Phi(sqrt(2/T) w)); w = -inf gives 1.
double alpha_of(double w_half, double T);

// Density c0 exp(-1/(T-s)) on (T/2, T].
struct SigmaSampler {
  double T = 1.0;
  double c0 = 0.0;
  double cdf(double s) const;
  double inverse(double u) const;
  // sigma = F^{-1}(Phi(sqrt(2/T) w)); w = +inf gives T.
  double sigma_of(double w_half) const;
  // Clock value log((T/2)/(T-sigma)), +inf at sigma = T.
  double clock_of(double sigma) const;
};

SigmaSampler make_sigma_sampler(double T);
// E[exp(rho int_{T/2}^sigma dt/(T-t))] for integer rho >= 2, closed form.
double sigma_clock_moment(double T, int rho);

// Unit scale of lambda sqrt(T-t) on the active stretch before the alpha factor.
double clock_coefficient(const MprSpec& s);

// A construction evaluated on an ensemble.
struct Realization {
  MprSpec spec;
  PathFunctionals f;
  std::optional<HittingClock> clock;
  std::optional<SigmaSampler> sigma;
};

// Driftless clock of the ensemble, with the sigma stop recorded as its mark;
// shared by every construction whose clock has no drift.
HittingClock shared_clock(const PathEnsemble& ens);

Realization realize(const MprSpec& s, const PathEnsemble& ens);
// Reuses a clock from shared_clock on the same ensemble.
Realization realize(const MprSpec& s, const PathEnsemble& ens, const HittingClock& shared);

// Functionals from T/2 to T with the F_{T/2} parameter fixed by w_half
// (w_half may be +-inf for the limiting states); the ensemble supplies the clock.
struct HalfRemainder {
  Eigen::VectorXd integral;
  Eigen::VectorXd qv;
  double parameter = 0;  // alpha or sigma used
};
HalfRemainder remainder_from_half(const MprSpec& s, const PathEnsemble& ens, double w_half,
                                  const HittingClock* driftless = nullptr);
// The F_{T/2} state at which the conditional tradeoff is largest: w_half = -inf
// for the alpha constructions, +inf for sigma, 0 when there is no state.
double supremum_state(const MprSpec& s);

PathFunctionals lambda_zero(const PathEnsemble& ens);
PathFunctionals lambda_constant(const PathEnsemble& ens, double level);
PathFunctionals lambda_reverting(const PathEnsemble& ens);
PathFunctionals lambda_nosol(const PathEnsemble& ens, double q);
PathFunctionals lambda_alpha(const PathEnsemble& ens, double q);
std::pair<PathFunctionals, SigmaSampler> lambda_sigma(const PathEnsemble& ens, double q);
PathFunctionals lambda_tilde(const PathEnsemble& ens, double b, Measure m = Measure::P);

enum class ScaledMode { below_threshold, at_threshold };

struct ScaledChoice {
  double a = 0;
  double b = 0;
};
ScaledChoice choose_scaled(double q, double k, ScaledMode mode);

struct ScaledResult {
  PathFunctionals f;
  double a = 0;
  double b = 0;
};
ScaledResult lambda_scaled(const PathEnsemble& ens, double q, double k, ScaledMode mode = ScaledMode::below_threshold);

Eigen::VectorXd mvt_terminal(const PathFunctionals& f);

}  // namespace bsdelab
