#include <cmath>

#include "doctest.h"

#include "coup/errors.hpp"
#include "coup/gradients.hpp"

using namespace coup;

namespace {

const Schedule kSched{};

struct Config {
  GaussianMixture prior;
  Classifier classifier;
  double lambda;
  double t_star;
  Vec x;
  Vec w;  // loss is w . x_out + 0.5 |x_out|^2
  std::uint64_t stream;
};

Config random_config(std::uint64_t i) {
  const NoiseDriver d(404, i);
  const int dim = 1 + static_cast<int>(i % 2);
  std::vector<MixtureComponent> comps{{0.5, d.normals(0, dim), 0.4 + d.uniform(1, 0), 0},
                                      {0.5, d.normals(2, dim), 0.4 + d.uniform(1, 1), 1}};
  GaussianMixture prior(comps);
  Classifier cls = BayesClassifier::from_mixture(prior);
  const double lambdas[] = {0.0, 0.5, 1.0};
  const double tstars[] = {0.05, 0.1};
  return {prior, cls, lambdas[i % 3], tstars[(i / 3) % 2], d.normals(3, dim), d.normals(4, dim), i};
}

PurifySpec frozen(double t_star, std::uint64_t stream, bool record) {
  PurifySpec s;
  s.t_star = t_star;
  s.master_seed = 31;
  s.stream_id = stream;
  s.record_increments = record;
  return s;
}

double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1e-12); }

}  // namespace

TEST_SUITE("gradients") {

TEST_CASE("drift jvp examples") {
  const GuidedModel linear{nullptr, nullptr, kSched, {0.0}};
  const Vec v = (Vec(2) << 1.0, 0.0).finished();
  const Vec j = drift_jvp(linear, Vec::Constant(2, 3.0), 0.0, v).value;
  CHECK(j[0] == doctest::Approx(-0.05).epsilon(1e-15));
  CHECK(j[1] == 0.0);
  const Config c = random_config(2);
  const GuidedModel m{&c.prior, &c.classifier, kSched, {1.0}};
  CHECK(drift_jvp(m, c.x, 0.05, Vec::Zero(c.x.size())).value.norm() == 0.0);
  CHECK_THROWS_AS(drift_jvp(m, c.x, 0.05, Vec::Zero(c.x.size() + 1)), DomainError);
}

TEST_CASE("drift jvp analytic and finite-difference modes agree") {
  for (std::uint64_t i = 0; i < 30; ++i) {
    const Config c = random_config(i);
    const GuidedModel m{&c.prior, &c.classifier, kSched, {c.lambda}};
    const Vec v = NoiseDriver(5, i).normals(0, c.x.size());
    const auto a = drift_jvp(m, c.x, c.t_star, v);
    if (a.near_boundary) continue;
    const auto f = drift_jvp(m, c.x, c.t_star, v, {JvpMode::Kind::finite_difference, 0.0});
    CHECK(rel_err(f.value, a.value) < 1e-4);
  }
}

TEST_CASE("adjoint on an empty path is the identity") {
  const Config c = random_config(0);
  const GuidedModel m{&c.prior, &c.classifier, kSched, {1.0}};
  const auto r = coup_purify(c.x, m, frozen(0.0, 0, true));
  const auto adj = augmented_solve(r.x_out, c.w, *r.trajectory, m);
  CHECK(adj.grad == c.w);
}

TEST_CASE("adjoint of the linear map") {
  const GuidedModel linear{nullptr, nullptr, kSched, {0.0}};
  const Vec x = (Vec(2) << 0.3, -1.0).finished();
  const auto r = coup_purify(x, linear, frozen(0.1, 1, true));
  const Vec g = (Vec(2) << 2.0, 0.5).finished();
  const Vec adj = augmented_solve(r.x_out, g, *r.trajectory, linear).grad;
  double euler = 1.0;
  const TimeGrid grid(0.1, 0.0, 1e-3);
  for (std::size_t k = 0; k < grid.num_steps(); ++k) {
    euler *= 1.0 - 0.5 * kSched.beta(grid.time(k)) * (grid.time(k + 1) - grid.time(k));
  }
  CHECK(rel_err(adj, euler * g) < 1e-13);
  CHECK(rel_err(adj, linear_reverse_stats(kSched, 0.1).scale * g) < 1e-3);
}

TEST_CASE("adjoint matches frozen-noise finite differences") {
  int checked = 0;
  for (std::uint64_t i = 0; i < 30; ++i) {
    const Config c = random_config(i);
    const GuidedModel m{&c.prior, &c.classifier, kSched, {c.lambda}};
    const auto r = coup_purify(c.x, m, frozen(c.t_star, c.stream, true));
    const Vec g_out = c.w + r.x_out;
    const auto adj = augmented_solve(r.x_out, g_out, *r.trajectory, m);
    if (adj.crossed_boundary) continue;
    auto loss = [&](const Vec& x) {
      const Vec y = coup_purify(x, m, frozen(c.t_star, c.stream, false)).x_out;
      return c.w.dot(y) + 0.5 * y.squaredNorm();
    };
    const Vec fd = fd_pathwise_grad(loss, c.x, 1e-5);
    CHECK(rel_err(adj.grad, fd) < 1e-3);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("adjoint is linear in the output gradient") {
  const Config c = random_config(7);
  const GuidedModel m{&c.prior, &c.classifier, kSched, {1.0}};
  const auto r = coup_purify(c.x, m, frozen(0.1, 3, true));
  const Vec a = augmented_solve(r.x_out, c.w, *r.trajectory, m).grad;
  const Vec b = augmented_solve(r.x_out, -2.5 * c.w, *r.trajectory, m).grad;
  const Vec e = Vec::Ones(c.x.size());
  const Vec s = augmented_solve(r.x_out, c.w + e, *r.trajectory, m).grad;
  CHECK(rel_err(b, -2.5 * a) < 1e-12);
  CHECK(rel_err(s, a + augmented_solve(r.x_out, e, *r.trajectory, m).grad) < 1e-12);
}

TEST_CASE("chain consistency for score-free configs") {
  // Without a score or guidance each step is (1 - beta dt / 2) I; the
  // composed map applied to grad_out must match the adjoint.
  const GuidedModel linear{nullptr, nullptr, kSched, {0.0}};
  const Vec x = Vec::Constant(3, 0.4);
  const auto r = coup_purify(x, linear, frozen(0.3, 9, true));
  const Vec g = (Vec(3) << 1.0, -2.0, 0.25).finished();
  Eigen::MatrixXd map = Eigen::MatrixXd::Identity(3, 3);
  const auto& tr = *r.trajectory;
  for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
    map = (1.0 - 0.5 * kSched.beta(tr.times[k]) * (tr.times[k + 1] - tr.times[k])) * map;
  }
  CHECK(rel_err(augmented_solve(r.x_out, g, tr, linear).grad, map.transpose() * g) < 1e-6);
}

TEST_CASE("replay guards") {
  const Config c = random_config(4);
  const GuidedModel m{&c.prior, &c.classifier, kSched, {1.0}};
  PurifySpec s = frozen(0.1, 2, false);
  s.record_trajectory = true;
  const auto no_inc = coup_purify(c.x, m, s);
  CHECK_THROWS_AS(augmented_solve(no_inc.x_out, c.w, *no_inc.trajectory, m), ReplayError);

  const auto r = coup_purify(c.x, m, frozen(0.1, 2, true));
  CHECK_THROWS_AS(augmented_solve(r.x_out + Vec::Constant(c.x.size(), 0.1), c.w, *r.trajectory, m),
                  ReplayError);
  const GuidedModel other{&c.prior, &c.classifier, kSched, {3.0}};
  CHECK_THROWS_AS(augmented_solve(r.x_out, c.w, *r.trajectory, other), ReplayError);
  CHECK_THROWS_AS(augmented_solve(r.x_out, Vec::Zero(c.x.size() + 1), *r.trajectory, m), DomainError);
}

TEST_CASE("finite-difference oracle basics") {
  const Vec x = (Vec(3) << 1.0, -2.0, 0.5).finished();
  CHECK(fd_pathwise_grad([](const Vec&) { return 4.0; }, x, 1e-4).norm() == 0.0);
  CHECK(rel_err(fd_pathwise_grad([](const Vec& y) { return 0.5 * y.squaredNorm(); }, x, 1e-4), x) < 1e-10);
  CHECK_THROWS_AS(fd_pathwise_grad([](const Vec&) { return 0.0; }, x, 0.0), DomainError);
}

}  // TEST_SUITE
