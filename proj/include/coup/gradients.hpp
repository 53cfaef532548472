#pragma once

// Pathwise gradients through the guided purification solve.
//
// The adjoint differentiates the Euler recursion actually taken by the
// primal solve: for x_{k+1} = x_k + f(x_k, t_k) dt_k + noise_k the loss
// gradient is pulled back as z_k = (I + dt_k J_k)^T z_{k+1}, with J_k the
// Jacobian of the guided drift at the recorded state. The additive noise
// does not depend on x, so replaying the recorded increments only serves to
// confirm that the stored path is the one the drift produces.

#include <functional>

#include "coup/purifier.hpp"

namespace coup {

struct AugmentedState {
  Vec x;  // primal state
  Vec z;  // dL/dx at the current time
};

struct JvpMode {
  enum class Kind { analytic, finite_difference };
  Kind kind = Kind::analytic;
  // <= 0 selects max(1e-5, 1e-7 |x|).
  double fd_step = 0.0;
};

struct JvpResult {
  Vec value;
  // Analytic mode only: the two largest class probabilities are within
  // kBoundaryGap, so the argmax (and the guidance field) may switch nearby.
  bool near_boundary = false;
};

inline constexpr double kBoundaryGap = 1e-6;

// J(x, t) v for J the Jacobian of guided_drift.
JvpResult drift_jvp(const GuidedModel& model, const Vec& x, double t, const Vec& v,
                    JvpMode mode = {});

struct AdjointResult {
  Vec grad;  // dL/dx_adv
  // The argmax label changed along the recorded path.
  bool crossed_boundary = false;
};

// Pulls grad_out = dL/dx_ben back to dL/dx_adv along `recorded`, which must
// come from coup_purify(model) with record_increments set and end at x_ben.
AdjointResult augmented_solve(const Vec& x_ben, const Vec& grad_out, const Trajectory& recorded,
                              const GuidedModel& model);

// Central differences of a deterministic (frozen-noise) scalar pipeline.
Vec fd_pathwise_grad(const std::function<double(const Vec&)>& pipeline, const Vec& x, double h);

}  // namespace coup
