#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "coup/harness/experiments.hpp"

namespace coup::harness {

inline constexpr const char* kArtifactVersion = "coup-lab 0.1.0";

struct ResultRow {
  std::string experiment;
  double lambda = 0.0;
  double c = 0.0;
  double t_star = 0.0;
  double step = 0.0;
  std::size_t trials = 0;
  std::string metric;
  double value = 0.0;
  // Present for every Monte Carlo estimate.
  std::optional<double> ci_half_width;
  std::uint64_t seed = 0;
};

// Header: experiment,lambda,c,t_star,step,trials,metric,value,ci_half_width,seed
void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::string format_number(double v);

struct RunManifest {
  std::string config_digest;
  std::uint64_t master_seed = 0;
  std::string version = kArtifactVersion;
  double wall_clock_seconds = 0.0;
};

void write_manifest(std::ostream& out, const RunManifest& manifest);

// Hex SHA-1 of `text`.
std::string digest(const std::string& text);

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace);

}  // namespace coup::harness
