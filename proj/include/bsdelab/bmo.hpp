#pragma once

#include <limits>
#include <string>
#include <vector>

#include "bsdelab/mpr.hpp"
#include "bsdelab/stats.hpp"

namespace bsdelab {

// k_q = (q - sqrt(q^2 - q))^2 / 2
double kq(double q);
// Minimum over eps > 0 of (q^2(1-q)/eps - q + 2q^2 - q eps)/2 by Brent's method.
double kq_numeric(double q);

// One member of the stopping family with what remains of the tradeoff after it.
struct FamilyMember {
  std::string label;
  double t = 0;             // NaN for the construction's own stopping time
  Eigen::VectorXd stat;     // conditioning statistic, NaN where the path has stopped
  Eigen::VectorXd integral; // int_tau^T lambda dW
  Eigen::VectorXd qv;       // int_tau^T lambda^2 dt
  bool limit = false;       // T/2 with the F_{T/2} parameter at its supremum state
};

struct FamilyOptions {
  bool include_limit = true;
  // paths for the limit member; 0 uses the realization's ensemble
  Index limit_paths = 0;
};

std::vector<FamilyMember> stopping_family(const Realization& r, const PathEnsemble& ens, const FamilyOptions& opt = {});

struct BinnedProfile {
  std::string label;
  double t = 0;
  bool limit = false;
  std::vector<Bin> bins;
  double max_mean = 0;
  double max_se = 0;
  TailTrend lower, upper;
  DivergenceEvidence evidence;
  bool diverged = false;
};

// Bins of exp(log_value) over one member.
BinnedProfile profile(const FamilyMember& m, const Eigen::VectorXd& log_value, const DivergenceOptions* div = nullptr,
                      Index min_count = 200);

struct BmoEstimate {
  double value = 0;   // sup over the family of the binned E[int_tau^T lambda^2 | F_tau]
  double se = 0;
  double upper = 0;   // value + 3.09 SE (normal 99.9% bound)
  bool infinite = false;  // linear growth along the state grid
  std::string caveat = "lower bound over a restricted stopping family";
  std::vector<BinnedProfile> profiles;
};

BmoEstimate bmo_norm(const Realization& r, const PathEnsemble& ens, const FamilyOptions& opt = {});

// Gate used by the moment scan: Hill index <= 1 with nondecreasing block medians.
DivergenceOptions moment_gate();

struct MomentEstimate {
  double k = 0;
  double value = 0;
  double se = 0;
  bool diverged = false;
  std::string worst;  // family member holding the sup
};

MomentEstimate dyn_exp_moment(const std::vector<FamilyMember>& family, double k, const DivergenceOptions& gate = moment_gate());
MomentEstimate dyn_exp_moment(const Realization& r, const PathEnsemble& ens, double k, const FamilyOptions& opt = {});

struct ExponentInterval {
  double lo = 0;
  double hi = std::numeric_limits<double>::infinity();
  bool infinite = false;
  int iterations = 0;
  std::vector<MomentEstimate> trail;
};

struct ExponentOptions {
  double k_max = 64;
  double k_start = 0.125;
  double ratio = 1.25;
  int max_iterations = 12;
  FamilyOptions family;
};

ExponentInterval critical_exponent(const std::vector<FamilyMember>& family, const ExponentOptions& opt = {});
ExponentInterval critical_exponent(const Realization& r, const PathEnsemble& ens, const ExponentOptions& opt = {});

struct Verdict {
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
};

Verdict john_nirenberg_check(const Realization& r, const PathEnsemble& ens, const FamilyOptions& opt = {});

struct HolderReport {
  bool bounded = true;
  bool diverged = false;  // some member, typically the limit state, has an infinite moment
  bool growing = false;   // bin estimates keep rising along the state grid
  bool stable = true;     // sup over bins agrees between half and full samples
  double sup = 0;
  double sup_se = 0;
  std::vector<BinnedProfile> profiles;
  Verdict verdict;
};

// Binned E[(Y_T/Y_tau)^q | F_tau] over the stopping family, Y = E(-lambda.W).
HolderReport reverse_holder(const Realization& r, const PathEnsemble& ens, double q, const FamilyOptions& opt = {});

// Reverting drift: per W_t bin, E[(Y_T/Y_t)^q | W_t] against exp(-q(T-t)|W_t|/2)
// at every grid node before T, within 3 SE.
struct WitnessReport {
  Verdict verdict;
  double worst_deficit = 0;  // max over bins of (bound - estimate) in SE units
  double slope_ratio = 0;    // fitted log-slope in |w| over q(T-t)/2 at the first node
  Index bins_checked = 0;
};
WitnessReport reverting_witness(const Realization& r, const PathEnsemble& ens, double q);

struct AprioriReport {
  Verdict verdict;
  double worst_upper_excess = 0;  // max over bins of Psi - upper bound, in SE units
  double worst_lower_excess = 0;  // max over bins of lower bound - Psi, in SE units
  Index bins_checked = 0;
};

// For q in [0,1): -(q/(2(1-q))) E[int_t^T lambda^2 | F_t] <= Psi_t <= 0 on every bin.
AprioriReport apriori_bound(const Realization& r, const PathEnsemble& ens, double q, const FamilyOptions& opt = {});

enum class Solution { Bounded, Unbounded, None };
std::string solution_name(Solution s);

struct ClassifyOptions {
  bool exponent = false;  // also bracket the critical exponent
  ExponentOptions exponent_options;
  Index ladder_paths = 8192;
};

struct Classification {
  Solution verdict = Solution::Bounded;
  std::vector<Verdict> evidence;
  double kq_value = std::numeric_limits<double>::quiet_NaN();
  ExponentInterval exponent;
  std::string side;  // position of the critical exponent relative to k_q
};

Classification classify(const MprSpec& s, double q, const PathEnsemble& ens, const ClassifyOptions& opt = {});
Classification classify(const Realization& r, double q, const PathEnsemble& ens, const ClassifyOptions& opt = {});

struct BmoReport {
  BmoEstimate bmo;
  std::vector<MomentEstimate> moments;
  ExponentInterval exponent;
  double kq_value = std::numeric_limits<double>::quiet_NaN();
};

BmoReport bmo_report(const Realization& r, const PathEnsemble& ens, double q, const std::vector<double>& ks,
                     const ExponentOptions& opt = {});

}  // namespace bsdelab
