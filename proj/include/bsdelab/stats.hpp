#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bsdelab {

using Eigen::Index;

struct MeanEstimate {
  double mean = 0;
  double se = 0;
  Index n = 0;
};

// Mean and standard error over the finite entries.
MeanEstimate mean_se(const Eigen::Ref<const Eigen::VectorXd>& x);
// Same for exp(log_x), computed stably; mean may overflow to +inf.
MeanEstimate mean_se_log(const Eigen::Ref<const Eigen::VectorXd>& log_x);

// Hill tail index from the top fraction of log-values (index alpha: P(X>x) ~ x^-alpha).
double hill_index(const Eigen::Ref<const Eigen::VectorXd>& log_x, double top_fraction = 0.01);

struct DivergenceOptions {
  double hill_max = 1.2;
  double growth_min = 1.15;
  double top_fraction = 0.01;
};

struct DivergenceEvidence {
  bool diverged = false;
  double hill = 0;
  std::vector<Index> block_sizes;
  std::vector<double> block_medians;  // median of block means per block size
  std::vector<double> growth;         // ratio of successive block medians
  std::vector<double> running_means;  // prefix means at n/100, n/10, n
};

// Paired heuristic on a sample given by its logs: block-median growth across
// block sizes n/1000, n/100, n/10 and the Hill index of the top fraction.
DivergenceEvidence divergence_test(const Eigen::Ref<const Eigen::VectorXd>& log_x, const DivergenceOptions& opt = {});

// Kolmogorov-Smirnov distance of a sample to the uniform law on (0,1).
double ks_uniform(Eigen::VectorXd u);

struct Bin {
  double lo = 0, hi = 0;  // statistic range; NaN for the stopped bin
  double center = 0;      // mean statistic
  double mean = 0, se = 0;
  Index count = 0;
  bool stopped = false;
};

// Equal-count bins of `value` over the sorted statistic, each holding at least
// min_count entries; entries with NaN statistic go to one extra stopped bin.
std::vector<Bin> bin_means(const Eigen::Ref<const Eigen::VectorXd>& stat, const Eigen::Ref<const Eigen::VectorXd>& value,
                           Index min_count = 200, Index max_bins = 20);

// Slope of bin means against the outward statistic over the outer half of bins
// on one side; used to spot growth along the state grid.
struct TailTrend {
  double slope = 0, se = 0;
  double rise = 0;  // last minus first bin mean over the tail
  bool growing = false;
};
TailTrend tail_trend(const std::vector<Bin>& bins, bool upper);

double normal_cdf(double x);
double normal_quantile(double p);

}  // namespace bsdelab
