#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bsdelab/bmo.hpp"
#include "bsdelab/config.hpp"

namespace bsdelab {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;
  std::vector<std::string> files;  // artifacts written, relative to the output directory
  bool passed() const;
};

// The spec with the construction parameter q taken from [run] when [spec] leaves it out.
MprSpec effective_spec(const ExperimentConfig& c);
TimeGrid config_grid(const ExperimentConfig& c);

struct KqPoint {
  double p, q, kq;
};
// n points p = i/(n+1), i = 1..n.
std::vector<KqPoint> kq_curve(int n);
std::string kq_csv(const std::vector<KqPoint>& pts);

// Known verdict pattern for the three constructions scaled by c.
Solution expected_table2(MprKind kind, double c);

// Runs the configured suite into `out`, writing the artifacts, checks.json and
// manifest.json. Progress goes to `log`.
SuiteResult run_suite(const ExperimentConfig& c, const std::filesystem::path& out, std::ostream& log);

// Summary of an artifact directory: 0 all checks pass, 1 some failed, 2 nothing to report.
int report(const std::filesystem::path& dir, std::ostream& os);

}  // namespace bsdelab
