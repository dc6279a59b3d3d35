#pragma once

// Shared data sets and reference solutions for the test programs.

#include <algorithm>
#include <array>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kroa/basis.hpp"
#include "kroa/dynamics.hpp"
#include "kroa/edmd.hpp"
#include "kroa/roa.hpp"

namespace kroa::fixtures {

struct Split {
  dynamics::TrajectoryDataset train;
  dynamics::TrajectoryDataset test;
};

/// Random initial conditions in the model's initial box, simulated and split
/// in half with seeds derived from `seed`.
inline Split simulate_split(const dynamics::OdeModel& model, int count, double t_final,
                            std::uint64_t seed, double dt = 0.1) {
  const auto ics = dynamics::sample_initial_conditions(model.initial_box, count,
                                                       dynamics::derive_seed(seed, "ics"));
  const int steps = static_cast<int>(t_final / dt + 0.5);
  const auto sim = dynamics::simulate(model, ics, dt, steps, seed);
  auto [train, test] = dynamics::split(sim.dataset, 0.5, dynamics::derive_seed(seed, "split"));
  return {std::move(train), std::move(test)};
}

/// 200 trajectories on [0,2]^2, dt 0.1, t = 20, seed 7.
inline const Split& competition_data() {
  static const Split data = simulate_split(dynamics::competition_model(), 200, 20.0, 7);
  return data;
}

/// Legendre dictionary with [0,1]^5 mapped onto [-1,1]^5.
inline basis::DomainScale mak_scale() {
  return basis::DomainScale::from_box(Eigen::VectorXd::Zero(5), Eigen::VectorXd::Ones(5), -1.0,
                                      1.0);
}

/// Plain RK4 with a fine step, independent of the library integrator.
template <typename Rhs>
Eigen::VectorXd reference_integrate(Rhs&& rhs, Eigen::VectorXd x, double t_final, double h) {
  const int steps = static_cast<int>(t_final / h + 0.5);
  for (int i = 0; i < steps; ++i) {
    const Eigen::VectorXd a = rhs(x);
    const Eigen::VectorXd b = rhs(x + 0.5 * h * a);
    const Eigen::VectorXd c = rhs(x + 0.5 * h * b);
    const Eigen::VectorXd d = rhs(x + h * c);
    x += h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
  }
  return x;
}

/// Newton on the continuous right-hand side with a forward-difference Jacobian.
template <typename Rhs>
Eigen::VectorXd newton_equilibrium(Rhs&& rhs, Eigen::VectorXd x) {
  const Eigen::Index n = x.size();
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd f = rhs(x);
    if (f.norm() < 1e-14) break;
    Eigen::MatrixXd J(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::VectorXd xp = x;
      const double h = 1e-7 * std::max(1.0, std::abs(x(j)));
      xp(j) += h;
      J.col(j) = (rhs(xp) - f) / h;
    }
    x -= J.colPivHouseholderQr().solve(f);
  }
  return x;
}

/// Reactor equilibria (working point, saddle, second working point, second
/// saddle, wash-out) refined from rounded starting guesses.
inline std::array<Eigen::VectorXd, 5> mak_equilibria() {
  const Eigen::VectorXd k = dynamics::default_mak_rates();
  auto rhs = [&](const Eigen::VectorXd& x) {
    return dynamics::mak_rhs(x, k, dynamics::kDefaultDilution);
  };
  const double guesses[5][5] = {{0.24, 0.09, 0.30, 0.53, 0.61},
                                {0.24, 0.67, 0.30, 0.07, 0.49},
                                {0.24, 0.76, 0.30, 0.0, 0.47},
                                {0.76, 0.24, 0.09, 0.0, 0.14},
                                {1.0, 0.0, 0.0, 0.0, 0.0}};
  std::array<Eigen::VectorXd, 5> out;
  for (int i = 0; i < 5; ++i) {
    out[static_cast<std::size_t>(i)] =
        newton_equilibrium(rhs, Eigen::Map<const Eigen::VectorXd>(guesses[i], 5));
  }
  return out;
}

/// 720 trajectories from the reactor's initial box, dt 0.1, t = 40, seed 7.
inline const Split& mak_data() {
  static const Split data = simulate_split(dynamics::mak_model(), 720, 40.0, 7);
  return data;
}

/// Scaled Legendre dictionary, p = 4, q = 1 (126 functions).
inline roa::PipelineConfig mak_config() {
  roa::PipelineConfig config;
  config.family = basis::Family::Legendre;
  config.p = 4;
  config.q = 1.0;
  config.scale = mak_scale();
  config.seed = 7;
  return config;
}

struct LabeledSet {
  std::vector<dynamics::State> points;
  std::vector<int> equilibrium;  // index into mak_equilibria()
};

/// 30 starts per stable equilibrium (0, 2, 4), drawn from the initial box
/// with seed 99 and labeled by integrating to t = 60.
inline LabeledSet balanced_mak_set() {
  const auto model = dynamics::mak_model();
  const auto eq = mak_equilibria();
  const auto starts = dynamics::sample_initial_conditions(model.initial_box, 3000, 99);
  const auto sim = dynamics::simulate(model, starts, 0.1, 600);
  LabeledSet out;
  int count[5] = {0, 0, 0, 0, 0};
  for (const auto& t : sim.dataset.trajectories) {
    for (int a : {0, 2, 4}) {
      if ((t.states.back() - eq[static_cast<std::size_t>(a)]).norm() < 0.05 && count[a] < 30) {
        ++count[a];
        out.points.push_back(t.states.front());
        out.equilibrium.push_back(a);
      }
    }
  }
  return out;
}

/// Index of the closest entry of `table` in the max norm, with that distance.
template <typename Table>
std::pair<int, double> nearest(const Table& table, const Eigen::VectorXd& x) {
  int best = -1;
  double dist = 1e300;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double d = (table[i] - x).cwiseAbs().maxCoeff();
    if (d < dist) {
      dist = d;
      best = static_cast<int>(i);
    }
  }
  return {best, dist};
}

/// Central-difference Jacobian of a right-hand side.
template <typename Rhs>
Eigen::MatrixXd rhs_jacobian(Rhs&& rhs, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd J(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd a = x, b = x;
    a(j) += 1e-6;
    b(j) -= 1e-6;
    J.col(j) = (rhs(a) - rhs(b)) / 2e-6;
  }
  return J;
}

/// |eig(expm(J dt))| for the continuous Jacobian J, descending.
inline Eigen::VectorXd discrete_magnitudes(const Eigen::MatrixXd& J, double dt) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(J);
  Eigen::VectorXd m = (es.eigenvalues() * dt).array().exp().abs().real();
  std::sort(m.data(), m.data() + m.size(), std::greater<>());
  return m;
}

}  // namespace kroa::fixtures
