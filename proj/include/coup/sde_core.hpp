#pragma once

// VP-SDE schedule arithmetic, Euler-Maruyama integration and reproducible
// Gaussian noise streams.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace coup {

using Vec = Eigen::VectorXd;

inline constexpr double kDefaultStep = 1e-3;

// Affine noise rate beta(t) = beta_min + t (beta_max - beta_min) on [0,1].
class Schedule {
 public:
  Schedule() = default;
  Schedule(double beta_min, double beta_max);

  double beta_min() const noexcept { return beta_min_; }
  double beta_max() const noexcept { return beta_max_; }

  double beta(double t) const;
  // Half-integral of beta over [0, t].
  double gamma(double t) const;
  // exp(-integral of beta over [0, t]) = exp(-2 gamma(t)).
  double alpha(double t) const;

 private:
  double beta_min_ = 0.1;
  double beta_max_ = 20.0;
};

double beta_at(const Schedule& schedule, double t);
double gamma_of(const Schedule& schedule, double t_star);
double alpha_of(const Schedule& schedule, double t);

struct LinearReverseStats {
  double scale;  // e^{gamma}
  double std;    // sqrt(e^{2 gamma} - 1)
};

// Law of the score-free, guidance-free reverse solve from t_star to 0:
// x(0) ~ N(scale * x, std^2 I).
LinearReverseStats linear_reverse_stats(const Schedule& schedule, double t_star);

// Uniform grid from t_start to t_end (either direction). The last step is
// shortened so the grid lands exactly on t_end.
class TimeGrid {
 public:
  TimeGrid(double t_start, double t_end, double step = kDefaultStep);

  double t_start() const noexcept { return t_start_; }
  double t_end() const noexcept { return t_end_; }
  double step() const noexcept { return step_; }
  std::size_t num_steps() const noexcept { return num_steps_; }

  // Time of grid point k, k in [0, num_steps()].
  double time(std::size_t k) const noexcept;
  std::vector<double> times() const;

 private:
  double t_start_;
  double t_end_;
  double step_;
  std::size_t num_steps_;
};

// Independent standard-normal stream identified by (master_seed, stream_id).
// Draw (step, component) is a pure function of the identifiers, so any
// increment can be regenerated later.
class NoiseDriver {
 public:
  NoiseDriver() = default;
  NoiseDriver(std::uint64_t master_seed, std::uint64_t stream_id)
      : master_seed_(master_seed), stream_id_(stream_id) {}

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  double normal(std::uint64_t step, std::uint32_t component) const noexcept;
  Vec normals(std::uint64_t step, Eigen::Index dim) const;
  // Uniform on the open interval (0, 1).
  double uniform(std::uint64_t step, std::uint32_t component) const noexcept;

  // A statistically independent stream keyed by this one and `tag`.
  NoiseDriver derive(std::uint64_t tag) const noexcept;

 private:
  std::uint64_t master_seed_ = 0;
  std::uint64_t stream_id_ = 0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  // Scaled noise actually added at each step (diffusion * sqrt|dt| * z),
  // present only when recording was requested.
  std::optional<std::vector<Vec>> increments;

  std::size_t size() const noexcept { return states.size(); }
  const Vec& back() const { return states.back(); }
};

using DriftFn = std::function<Vec(const Vec& x, double t)>;
using DiffusionFn = std::function<double(double t)>;
// Called after every accepted step with the new grid index, time and state.
using StepObserver = std::function<void(std::size_t k, double t, const Vec& x)>;

struct EulerOptions {
  bool noise_enabled = true;
  // When false only the initial and final states are kept.
  bool record_path = true;
  bool record_increments = false;
  StepObserver observer;
};

// x_{k+1} = x_k + drift(x_k, t_k) dt_k + diffusion(t_k) sqrt|dt_k| z_k with
// signed dt_k. Throws IntegrationError on a non-finite state.
Trajectory euler_maruyama(const DriftFn& drift, const DiffusionFn& diffusion, const Vec& x0,
                          const TimeGrid& grid, const NoiseDriver& driver,
                          const EulerOptions& options = {});

// Exact sample of the VP forward kernel N(sqrt(alpha_t) x0, (1 - alpha_t) I).
Vec forward_perturb(const Vec& x0, double t, const Schedule& schedule, const NoiseDriver& driver);

}  // namespace coup
