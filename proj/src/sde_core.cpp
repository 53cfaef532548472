#include "coup/sde_core.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <fmt/format.h>

#include "coup/errors.hpp"
#include "coup/philox.hpp"

namespace coup {

namespace {

void check_unit_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError(fmt::format("{}: time {} outside [0, 1]", what, t));
  }
}

// Relative slack when counting grid steps so that e.g. 0.1 / 1e-3 gives 100
// steps rather than 101.
constexpr double kStepCountSlack = 1e-9;

}  // namespace

Schedule::Schedule(double beta_min, double beta_max) : beta_min_(beta_min), beta_max_(beta_max) {
  if (!(beta_min > 0.0 && beta_min < beta_max && std::isfinite(beta_max))) {
    throw DomainError(
        fmt::format("schedule requires 0 < beta_min < beta_max, got ({}, {})", beta_min, beta_max));
  }
}

double Schedule::beta(double t) const {
  check_unit_time(t, "beta");
  return beta_min_ + t * (beta_max_ - beta_min_);
}

double Schedule::gamma(double t) const {
  check_unit_time(t, "gamma");
  return 0.5 * (beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t);
}

double Schedule::alpha(double t) const { return std::exp(-2.0 * gamma(t)); }

double beta_at(const Schedule& schedule, double t) { return schedule.beta(t); }
double gamma_of(const Schedule& schedule, double t_star) { return schedule.gamma(t_star); }
double alpha_of(const Schedule& schedule, double t) { return schedule.alpha(t); }

LinearReverseStats linear_reverse_stats(const Schedule& schedule, double t_star) {
  const double g = schedule.gamma(t_star);
  return {std::exp(g), std::sqrt(std::expm1(2.0 * g))};
}

TimeGrid::TimeGrid(double t_start, double t_end, double step)
    : t_start_(t_start), t_end_(t_end), step_(step) {
  check_unit_time(t_start, "grid start");
  check_unit_time(t_end, "grid end");
  if (!(step > 0.0 && std::isfinite(step))) {
    throw DomainError(fmt::format("grid step must be positive, got {}", step));
  }
  const double ratio = std::abs(t_end - t_start) / step;
  num_steps_ = static_cast<std::size_t>(std::ceil(ratio * (1.0 - kStepCountSlack)));
}

double TimeGrid::time(std::size_t k) const noexcept {
  if (k >= num_steps_) {
    return t_end_;
  }
  const double dir = t_end_ >= t_start_ ? 1.0 : -1.0;
  return t_start_ + dir * static_cast<double>(k) * step_;
}

std::vector<double> TimeGrid::times() const {
  std::vector<double> out(num_steps_ + 1);
  for (std::size_t k = 0; k <= num_steps_; ++k) {
    out[k] = time(k);
  }
  return out;
}

namespace {

PhiloxCounter draw_block(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                         std::uint32_t block) noexcept {
  // Steps beyond 2^32 fold into the key; no realistic grid reaches them.
  const PhiloxCounter ctr = {block, static_cast<std::uint32_t>(step),
                             static_cast<std::uint32_t>(stream),
                             static_cast<std::uint32_t>(stream >> 32)};
  const std::uint64_t key64 = seed ^ mix64(step >> 32);
  const PhiloxKey key = {static_cast<std::uint32_t>(key64), static_cast<std::uint32_t>(key64 >> 32)};
  return philox4x32_10(ctr, key);
}

// 53-bit uniform on (0, 1) from two 32-bit words.
double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

double NoiseDriver::normal(std::uint64_t step, std::uint32_t component) const noexcept {
  const PhiloxCounter r = draw_block(master_seed_, stream_id_, step, component / 2);
  const double u1 = to_open_unit(r[0], r[1]);
  const double u2 = to_open_unit(r[2], r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (component % 2 == 0) ? radius * std::cos(angle) : radius * std::sin(angle);
}

Vec NoiseDriver::normals(std::uint64_t step, Eigen::Index dim) const {
  Vec z(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    z[i] = normal(step, static_cast<std::uint32_t>(i));
  }
  return z;
}

double NoiseDriver::uniform(std::uint64_t step, std::uint32_t component) const noexcept {
  // Separate counter half-space from the normal draws.
  const PhiloxCounter r =
      draw_block(master_seed_, stream_id_, step, 0x80000000u | (component / 2));
  return (component % 2 == 0) ? to_open_unit(r[0], r[1]) : to_open_unit(r[2], r[3]);
}

NoiseDriver NoiseDriver::derive(std::uint64_t tag) const noexcept {
  return {master_seed_, mix64(stream_id_ ^ mix64(tag + 0x632BE59BD9B4E019ull))};
}

Trajectory euler_maruyama(const DriftFn& drift, const DiffusionFn& diffusion, const Vec& x0,
                          const TimeGrid& grid, const NoiseDriver& driver,
                          const EulerOptions& options) {
  const std::size_t n = grid.num_steps();
  Trajectory path;
  if (options.record_path) {
    path.times.reserve(n + 1);
    path.states.reserve(n + 1);
  }
  path.times.push_back(grid.time(0));
  path.states.push_back(x0);
  if (options.record_increments) {
    path.increments.emplace();
    path.increments->reserve(n);
  }

  Vec x = x0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = grid.time(k);
    const double dt = grid.time(k + 1) - t;
    Vec next = x + drift(x, t) * dt;
    if (options.noise_enabled) {
      Vec inc = driver.normals(k, x.size()) * (diffusion(t) * std::sqrt(std::abs(dt)));
      next += inc;
      if (options.record_increments) {
        path.increments->push_back(std::move(inc));
      }
    } else if (options.record_increments) {
      path.increments->push_back(Vec::Zero(x.size()));
    }
    if (!next.allFinite()) {
      throw IntegrationError(k, "non-finite state in Euler-Maruyama solve");
    }
    x = std::move(next);
    if (options.observer) {
      options.observer(k + 1, grid.time(k + 1), x);
    }
    if (options.record_path) {
      path.times.push_back(grid.time(k + 1));
      path.states.push_back(x);
    }
  }
  if (!options.record_path && n > 0) {
    path.times.push_back(grid.time(n));
    path.states.push_back(std::move(x));
  }
  return path;
}

Vec forward_perturb(const Vec& x0, double t, const Schedule& schedule, const NoiseDriver& driver) {
  const double a = schedule.alpha(t);
  if (t == 0.0) {
    return x0;
  }
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * driver.normals(0, x0.size());
}

}  // namespace coup
