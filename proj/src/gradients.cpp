#include "coup/gradients.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "coup/errors.hpp"

namespace coup {

namespace {

bool probs_near_tie(const std::vector<double>& p) {
  if (p.size() < 2) return false;
  std::vector<double> sorted = p;
  std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end(), std::greater<>());
  return sorted[0] - sorted[1] < kBoundaryGap;
}

}  // namespace

JvpResult drift_jvp(const GuidedModel& model, const Vec& x, double t, const Vec& v, JvpMode mode) {
  if (v.size() != x.size()) {
    throw DomainError("JVP direction must match the state dimension");
  }
  if (mode.kind == JvpMode::Kind::finite_difference) {
    if (v.isZero(0.0)) return {Vec::Zero(x.size()), false};
    const double h = mode.fd_step > 0.0 ? mode.fd_step : fd_step(x);
    const double norm = v.norm();
    const Vec u = v / norm;
    return {(guided_drift(model, x + h * u, t) - guided_drift(model, x - h * u, t)) *
                (norm / (2.0 * h)),
            false};
  }

  const double beta = model.schedule.beta(t);
  Vec force_jvp = Vec::Zero(x.size());
  if (model.prior) {
    force_jvp += model.prior->diffuse(model.schedule.alpha(t)).score_jvp(x, v);
  }
  bool near = false;
  const double lambda = model.effective_lambda();
  if (lambda != 0.0) {
    const ConfidenceReport report = confidence(*model.classifier, x);
    near = probs_near_tie(report.probs);
    force_jvp += lambda * hess_log_conf_vp(*model.classifier, x, report.argmax_label, v);
  }
  return {-0.5 * beta * v - beta * force_jvp, near};
}

AdjointResult augmented_solve(const Vec& x_ben, const Vec& grad_out, const Trajectory& recorded,
                              const GuidedModel& model) {
  if (recorded.states.empty() || recorded.times.size() != recorded.states.size()) {
    throw ReplayError("recorded trajectory is empty or inconsistent");
  }
  const Eigen::Index d = recorded.states.front().size();
  if (x_ben.size() != d || grad_out.size() != d) {
    throw DomainError(fmt::format("adjoint expects dimension {}, got x {} and gradient {}", d,
                                  x_ben.size(), grad_out.size()));
  }
  const std::size_t n = recorded.states.size() - 1;
  if (n > 0 && (!recorded.increments || recorded.increments->size() != n)) {
    throw ReplayError("trajectory was recorded without noise increments");
  }
  const double scale = 1.0 + recorded.back().norm();
  if ((recorded.back() - x_ben).norm() > 1e-12 * scale) {
    throw ReplayError("x_ben is not the endpoint of the recorded trajectory");
  }

  const double lambda = model.effective_lambda();
  AugmentedState state{recorded.back(), grad_out};
  AdjointResult result{grad_out, false};
  int next_label = -1;
  for (std::size_t k = n; k-- > 0;) {
    const Vec& x = recorded.states[k];
    const double t = recorded.times[k];
    const double dt = recorded.times[k + 1] - t;

    // Replay the primal step with the stored increment.
    const Vec replay = x + guided_drift(model, x, t) * dt + (*recorded.increments)[k];
    const double tol = 1e-9 * (1.0 + recorded.states[k + 1].norm());
    if (!((replay - recorded.states[k + 1]).norm() <= tol)) {
      throw ReplayError(fmt::format("recorded step {} does not match the drift replay", k));
    }

    if (lambda != 0.0) {
      const int label = confidence(*model.classifier, x).argmax_label;
      if (next_label >= 0 && label != next_label) result.crossed_boundary = true;
      next_label = label;
    }
    // The drift Jacobian is symmetric (Hessians of log densities plus a
    // multiple of I), so J^T z = J z.
    state.z += dt * drift_jvp(model, x, t, state.z).value;
    state.x = x;
  }
  result.grad = std::move(state.z);
  return result;
}

Vec fd_pathwise_grad(const std::function<double(const Vec&)>& pipeline, const Vec& x, double h) {
  if (!(h > 0.0)) {
    throw DomainError("finite-difference step must be positive");
  }
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec plus = x;
    Vec minus = x;
    plus[i] += h;
    minus[i] -= h;
    g[i] = (pipeline(plus) - pipeline(minus)) / (2.0 * h);
  }
  return g;
}

}  // namespace coup
