#pragma once

// Benchmark ODE systems, fixed-step integration and trajectory datasets.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace kroa::dynamics {

using State = Eigen::VectorXd;

/// Axis-aligned interval box.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int dimension() const { return static_cast<int>(lower.size()); }
  bool contains(const State& x) const;
  /// Same center, half-widths multiplied by factor.
  Box expanded(double factor) const;
  /// "a,bxc,d" -> [a,b] x [c,d].
  static Box parse(std::string_view text);
  std::string to_string() const;
};

struct OdeModel {
  std::string name;
  int dimension = 0;
  Eigen::VectorXd parameters;
  std::function<State(const State&)> rhs;
  /// Region the state is expected to stay in; simulation stops outside twice its size.
  Box domain;
  /// Default box for random initial conditions (a sub-box of the domain).
  Box initial_box;
};

/// r = (r1..r6): x1' = r1 x1 - r2 x1^2 - r5 x1 x2, x2' = r3 x2 - r4 x2^2 - r6 x1 x2.
Eigen::VectorXd competition_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& r);
/// Auto-catalytic replicator in a stirred tank, rates k = (k1..k4), dilution d.
Eigen::VectorXd mak_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& k, double d);

Eigen::VectorXd default_competition_rates();
Eigen::VectorXd default_mak_rates();
inline constexpr double kDefaultDilution = 0.19;

/// Domain and initial box [0,2]^2.
OdeModel competition_model(const Eigen::VectorXd& r = default_competition_rates());
/// Domain [0,2]^5 (x2 overshoots 1 on the way to the working points).
/// Initial box [0,1] x [0,1] x [0,0.6] x [0,0.2] x [0,1]; the narrow species
/// ranges give each of the three basins a useful share of random starts.
OdeModel mak_model(const Eigen::VectorXd& k = default_mak_rates(),
                   double d = kDefaultDilution);

/// Classical fourth-order Runge-Kutta. Throws NumericalError on non-finite output.
State rk4_step(const OdeModel& model, const State& x, double dt);

struct Trajectory {
  int id = 0;
  std::vector<State> states;
};

struct TrajectoryDataset {
  double dt = 0.0;
  std::vector<Trajectory> trajectories;
  std::uint64_t seed = 0;

  int dimension() const;
  std::size_t sample_count() const;
  std::size_t pair_count() const;
};

struct TruncationNote {
  int trajectory_id = 0;
  int kept_samples = 0;
  std::string reason;
};

struct SimulationResult {
  TrajectoryDataset dataset;
  /// Trajectories cut short (or dropped when fewer than 2 samples survive).
  std::vector<TruncationNote> truncations;
};

/// One trajectory per initial condition, ids 0..count-1. A trajectory stops
/// when its state leaves model.domain expanded by 2 or becomes non-finite.
SimulationResult simulate(const OdeModel& model, const std::vector<State>& initial_conditions,
                          double dt, int steps, std::uint64_t seed = 0);

/// Uniform i.i.d. samples in the box, deterministic given the seed.
std::vector<State> sample_initial_conditions(const Box& box, int count, std::uint64_t seed);

/// Seed for a named pipeline stage, derived from the run seed with splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

struct SnapshotPairs {
  Eigen::MatrixXd X;  // n x N
  Eigen::MatrixXd Y;  // n x N
  double dt = 0.0;

  Eigen::Index count() const { return X.cols(); }
  int dimension() const { return static_cast<int>(X.rows()); }
};

/// Consecutive samples of every trajectory; never pairs across trajectories.
SnapshotPairs to_snapshots(const TrajectoryDataset& dataset);

/// Trajectory-level split; train receives round(fraction * count) trajectories
/// (at least one each side). Both halves keep ascending id order.
std::pair<TrajectoryDataset, TrajectoryDataset> split(const TrajectoryDataset& dataset,
                                                      double fraction, std::uint64_t seed);

// Trajectory CSV: header traj_id,t,x1,...,xn; rows ordered by (traj_id, t).
void write_trajectory_csv(const TrajectoryDataset& dataset, std::ostream& out);
void save_trajectory_csv(const TrajectoryDataset& dataset, const std::string& path);
TrajectoryDataset read_trajectory_csv(std::istream& in);
TrajectoryDataset load_trajectory_csv(const std::string& path);

}  // namespace kroa::dynamics
