#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsdelab/mpr.hpp"

namespace bsdelab {

struct ConfigError : std::runtime_error {
  int line = 0, column = 0;
  ConfigError(int line, int column, const std::string& what);
};

struct ExperimentConfig {
  MprSpec spec;
  bool spec_q_set = false;
  // ensemble
  Index n_paths = 100000;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // table2 repeats; defaults to {seed}
  int coarse_steps = 16;
  double ratio = 0.5;
  double gap = 0x1p-20;
  // run
  std::string suite = "figure-kq";
  std::string out = "results";
  double q = -1;  // exponent of the utility, q = p/(p-1)
  std::vector<double> b_offsets{0.0, 0.5, 1.0};
  std::vector<double> c_values{0.5, 1.0, 1.5};
  int kq_points = 99;
  int refinement = 2;
  bool exponent = false;  // classify: also bracket the critical exponent
  std::string text;       // the source, echoed into the manifest
};

const std::vector<std::string>& suite_names();

// Sections [spec], [ensemble], [run]; `key = value` lines; '#' or ';' comments.
// Unknown sections and keys, duplicates and bad values raise ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Cross-field checks run before any simulation; throws ConfigError at 0:0.
void validate(const ExperimentConfig& c);

std::string format_config(const ExperimentConfig& c);

}  // namespace bsdelab
