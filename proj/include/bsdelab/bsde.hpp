#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bsdelab/mpr.hpp"
#include "bsdelab/stats.hpp"

namespace bsdelab {

struct OpportunityEstimate {
  double t = 0;
  std::string state = "none";
  double estimate = 0;  // Psi_t, +inf when diverged
  double se = 0;
  bool diverged = false;
  Index n_inner = 0;
  Index n_outer = 1;
  double moment = 0;     // E[E(-lambda.W)^q] behind the estimate
  double moment_se = 0;
  double lower_bound = std::numeric_limits<double>::quiet_NaN();
  DivergenceEvidence evidence;
};

struct PsiOptions {
  bool control_variate = true;  // subtract the zero-mean integral int lambda dW
  DivergenceOptions divergence;
};

// Summand E(-lambda.W)_T^q in log form: -q int lambda dW - (q/2) int lambda^2.
Eigen::VectorXd log_power_summand(const Eigen::VectorXd& integral, const Eigen::VectorXd& qv, double q);

OpportunityEstimate psi_unconditional(const MprSpec& s, double q, const PathEnsemble& ens, const PsiOptions& opt = {});
OpportunityEstimate psi_unconditional(const Realization& r, double q, const PsiOptions& opt = {});

// exp((1-q) Psi_{T/2}) as an expectation over the clock with the F_{T/2}
// parameter fixed by w_half; `inner` supplies the clock paths.
OpportunityEstimate psi_conditional_halfT(const MprSpec& s, double q, double w_half, const PathEnsemble& inner,
                                          const HittingClock* driftless = nullptr);

enum class Provenance { Explicit, Continuum, MultRep };

struct SolutionTriple {
  TimeGrid grid;
  RowMatrix psi;  // n_paths x nodes
  RowMatrix z;
  Provenance provenance = Provenance::Explicit;
  double parameter = 0;  // b_offset or c
  // Exact running integrals of Z when Z is singular between nodes; empty otherwise.
  RowMatrix zdw, zdt, zsq;
  std::vector<std::string> warnings;
  // N vanishes identically in the Brownian filtration.
  static constexpr bool n_is_zero = true;
};

SolutionTriple psi_path(const MprSpec& s, double q, const PathEnsemble& ens);
SolutionTriple psi_path(const Realization& r, double q, const PathEnsemble& ens);

// CSV rows: path,t,psi,z (17 significant digits).
void write_triple_csv(const SolutionTriple& tr, std::ostream& os, Index max_paths = -1);

// Bounded positive functional xi: a constant, or g(W_T).
struct XiFunctional {
  std::function<double(double)> g;  // empty for a constant
  double value = 1;                 // the constant
  double lower = 1, upper = 1;
  bool is_constant() const { return !g; }
  static XiFunctional constant(double v);
  static XiFunctional of_terminal(std::function<double(double)> g, double lower, double upper);
};

// E[xi | W_t = w] and its log-derivative in w.
double xi_conditional(const XiFunctional& xi, double T, double t, double w);
double xi_log_gradient(const XiFunctional& xi, double T, double t, double w);

struct MultRepOptions {
  int refinement = 0;         // fine step h0 / 4^refinement in the rho clock
  double base_step = 2.5e-5;  // h0
  double coarse_step = 0.01;  // rho lattice up to rho = 1, then geometric
  double growth = 1.02;
  bool record_nodes = false;
  bool driftless = false;     // simulate X = I - rho/2 without its drift (importance sampling)
};

struct MultRepResult {
  double c = 0;
  double mean_xi = 0;
  Eigen::VectorXd tau;      // stopping time tau_c in calendar time
  Eigen::VectorXd rho_tau;  // rho(tau_c)
  Eigen::VectorXd x_tau;    // I - rho/2 at the stop
  Eigen::VectorXd log_expo; // log E(alpha^c . W)_T
  Eigen::VectorXd xi;       // xi on each path
  Eigen::VectorXd error;    // |xi - c E(alpha^c . W)_T|
  std::vector<std::uint8_t> hit;
  // node records when requested, n_paths x grid nodes
  RowMatrix alpha, int_dw, int_dt, int_sq, w;
  double median_error() const;
};

MultRepResult mult_rep(const XiFunctional& xi, double c, const PathEnsemble& ens, const MultRepOptions& opt = {});

// E[exp(rho(tau_bar)/8)] for constant xi = lower, by sampling X without drift and
// weighting with exp(-X_tau/2).
MeanEstimate tau_exp_moment(double lower, double c, const PathEnsemble& ens, const MultRepOptions& opt = {});

struct ContinuumResult {
  SolutionTriple triple;
  double c = 0;
  double xi = 0;              // E_Ptilde[xi]; xi is constant here
  double psi0 = 0;            // backward per-path estimate of Psi^b_0
  double psi0_se = 0;
  double psi0_tolerance = 0;  // 3 SE plus the mean terminal mismatch
  double psi0_formula = 0;    // log(c)/(1-q)
  MeanEstimate martingale;    // E_P[E(((1-q)Z - q lambda).W)_T]
  bool martingale_passes = false;
  double median_mismatch = 0;
};

ContinuumResult continuum(const MprSpec& s, double q, double b_offset, const PathEnsemble& ens,
                          const MultRepOptions& opt = {});

struct ResidualSummary {
  Eigen::VectorXd per_path;  // max over nodes of the absolute residual
  double median = 0;
  double p95 = 0;
};

// Terminal condition Psi_T = 0 against Psi_t + int Z dW + int F ds.
ResidualSummary driver_residual(const SolutionTriple& tr, const MprSpec& s, double q, const PathEnsemble& ens);

struct OptimizerPaths {
  RowMatrix wealth, dual, strategy, product;
  MeanEstimate terminal_product;  // E[X_T Y_T]
  double initial_product = 0;
};

OptimizerPaths optimizers(const SolutionTriple& tr, const MprSpec& s, double q, double x, const PathEnsemble& ens);

// Lambda at the grid nodes for the grid constructions (Zero, Constant, Reverting).
RowMatrix lambda_at_nodes(const MprSpec& s, const PathEnsemble& ens);

double driver(double q, double z, double lambda);

struct DriverVerdict {
  bool growth = false, lipschitz = false, convex = false;
  Index samples = 0;
  bool all() const { return growth && lipschitz && convex; }
};

// z, lambda samples; pairs (z1, z2) are consecutive entries of z.
DriverVerdict driver_props(double q, const Eigen::VectorXd& z, const Eigen::VectorXd& lambda, double eps0);
double default_eps0(double q);

}  // namespace bsdelab
