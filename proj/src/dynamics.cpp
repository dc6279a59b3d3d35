#include "kroa/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "kroa/detail/parallel.hpp"
#include "kroa/error.hpp"
#include "kroa/numeric_text.hpp"

namespace kroa::dynamics {

bool Box::contains(const State& x) const {
  if (x.size() != lower.size()) return false;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (!(x(j) >= lower(j) && x(j) <= upper(j))) return false;
  }
  return true;
}

Box Box::expanded(double factor) const {
  const Eigen::VectorXd center = 0.5 * (lower + upper);
  const Eigen::VectorXd half = 0.5 * (upper - lower) * factor;
  return {center - half, center + half};
}

Box Box::parse(std::string_view text) {
  std::vector<std::pair<double, double>> intervals;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('x', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view part = text.substr(start, end - start);
    const std::size_t comma = part.find(',');
    if (comma == std::string_view::npos) {
      throw InvalidInput("box interval '" + std::string(part) + "' is not of the form lo,hi");
    }
    intervals.emplace_back(parse_double(part.substr(0, comma)),
                           parse_double(part.substr(comma + 1)));
    start = end + 1;
  }
  Box box;
  box.lower.resize(static_cast<Eigen::Index>(intervals.size()));
  box.upper.resize(static_cast<Eigen::Index>(intervals.size()));
  for (std::size_t j = 0; j < intervals.size(); ++j) {
    if (!(intervals[j].first <= intervals[j].second)) {
      throw InvalidInput("box interval has lower bound above upper bound");
    }
    box.lower(static_cast<Eigen::Index>(j)) = intervals[j].first;
    box.upper(static_cast<Eigen::Index>(j)) = intervals[j].second;
  }
  return box;
}

std::string Box::to_string() const {
  std::string s;
  for (Eigen::Index j = 0; j < lower.size(); ++j) {
    if (j > 0) s += 'x';
    s += format_double(lower(j)) + "," + format_double(upper(j));
  }
  return s;
}

Eigen::VectorXd competition_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& r) {
  if (x.size() != 2 || r.size() != 6) {
    throw InvalidInput("competition model needs a 2-state and 6 rates");
  }
  Eigen::VectorXd dx(2);
  dx(0) = r(0) * x(0) - r(1) * x(0) * x(0) - r(4) * x(0) * x(1);
  dx(1) = r(2) * x(1) - r(3) * x(1) * x(1) - r(5) * x(0) * x(1);
  return dx;
}

Eigen::VectorXd mak_rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& k, double d) {
  if (x.size() != 5 || k.size() != 4) {
    throw InvalidInput("reactor model needs a 5-state and 4 rates");
  }
  const double growth3 = k(0) * x(0) * x(2) * x(2);
  const double growth4 = k(1) * x(1) * x(3) * x(3);
  Eigen::VectorXd dx(5);
  dx(0) = -growth3 + d - d * x(0);
  dx(1) = growth3 - growth4 - d * x(1);
  dx(2) = growth3 - k(2) * x(2) - d * x(2);
  dx(3) = growth4 - k(3) * x(3) - d * x(3);
  dx(4) = k(2) * x(2) + k(3) * x(3) - d * x(4);
  return dx;
}

Eigen::VectorXd default_competition_rates() {
  Eigen::VectorXd r(6);
  r << 2, 1, 2, 1, 3, 3;
  return r;
}

Eigen::VectorXd default_mak_rates() {
  Eigen::VectorXd k(4);
  k << 7, 5, 0.3, 0.05;
  return k;
}

OdeModel competition_model(const Eigen::VectorXd& r) {
  if (r.size() != 6) throw InvalidInput("competition model needs 6 rates");
  OdeModel m;
  m.name = "competition";
  m.dimension = 2;
  m.parameters = r;
  m.rhs = [r](const State& x) { return competition_rhs(x, r); };
  m.domain = {Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 2)};
  m.initial_box = m.domain;
  return m;
}

OdeModel mak_model(const Eigen::VectorXd& k, double d) {
  if (k.size() != 4) throw InvalidInput("reactor model needs 4 rates");
  if (!(d > 0.0)) throw InvalidInput("dilution rate must be positive");
  OdeModel m;
  m.name = "mak";
  m.dimension = 5;
  m.parameters.resize(5);
  m.parameters << k, d;
  m.rhs = [k, d](const State& x) { return mak_rhs(x, k, d); };
  const Eigen::VectorXd lo = Eigen::VectorXd::Zero(5);
  Eigen::VectorXd hi(5);
  hi << 1.0, 1.0, 0.6, 0.2, 1.0;
  m.domain = {lo, Eigen::VectorXd::Constant(5, 2.0)};
  m.initial_box = {lo, hi};
  return m;
}

State rk4_step(const OdeModel& model, const State& x, double dt) {
  if (!(dt > 0.0)) throw InvalidInput("time step must be positive");
  const State k1 = model.rhs(x);
  const State k2 = model.rhs(x + 0.5 * dt * k1);
  const State k3 = model.rhs(x + 0.5 * dt * k2);
  const State k4 = model.rhs(x + dt * k3);
  State next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericalError("integration produced non-finite state");
  return next;
}

int TrajectoryDataset::dimension() const {
  for (const auto& t : trajectories) {
    if (!t.states.empty()) return static_cast<int>(t.states.front().size());
  }
  return 0;
}

std::size_t TrajectoryDataset::sample_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.states.size();
  return n;
}

std::size_t TrajectoryDataset::pair_count() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.states.empty() ? 0 : t.states.size() - 1;
  return n;
}

SimulationResult simulate(const OdeModel& model, const std::vector<State>& initial_conditions,
                          double dt, int steps, std::uint64_t seed) {
  if (steps < 1) throw InvalidInput("steps per trajectory must be >= 1");
  if (!(dt > 0.0)) throw InvalidInput("time step must be positive");
  const Box escape = model.domain.expanded(2.0);

  struct Slot {
    Trajectory trajectory;
    std::string reason;
  };
  std::vector<Slot> slots(initial_conditions.size());
  detail::parallel_for(initial_conditions.size(), [&](std::size_t i) {
    Slot& slot = slots[i];
    slot.trajectory.id = static_cast<int>(i);
    const State& x0 = initial_conditions[i];
    if (x0.size() != model.dimension) {
      throw InvalidInput("initial condition has wrong dimension");
    }
    auto& states = slot.trajectory.states;
    states.reserve(static_cast<std::size_t>(steps) + 1);
    states.push_back(x0);
    for (int s = 0; s < steps; ++s) {
      State next;
      try {
        next = rk4_step(model, states.back(), dt);
      } catch (const NumericalError&) {
        slot.reason = "non-finite state";
        break;
      }
      if (!escape.contains(next)) {
        slot.reason = "left the expanded domain";
        break;
      }
      states.push_back(std::move(next));
    }
  });

  SimulationResult result;
  result.dataset.dt = dt;
  result.dataset.seed = seed;
  for (auto& slot : slots) {
    const int kept = static_cast<int>(slot.trajectory.states.size());
    if (!slot.reason.empty()) {
      result.truncations.push_back({slot.trajectory.id, kept < 2 ? 0 : kept, slot.reason});
    }
    if (kept >= 2) result.dataset.trajectories.push_back(std::move(slot.trajectory));
  }
  return result;
}

std::vector<State> sample_initial_conditions(const Box& box, int count, std::uint64_t seed) {
  if (count < 1) throw InvalidInput("initial condition count must be >= 1");
  if (box.dimension() < 1) throw InvalidInput("sampling box is empty");
  for (int j = 0; j < box.dimension(); ++j) {
    if (!(box.lower(j) <= box.upper(j))) throw InvalidInput("sampling box is empty");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<State> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    State x(box.dimension());
    for (int j = 0; j < box.dimension(); ++j) {
      x(j) = box.lower(j) + (box.upper(j) - box.lower(j)) * unit(rng);
    }
    out.push_back(std::move(x));
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  // FNV-1a of the stage name, mixed into the seed with splitmix64.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : stage) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed + h + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

SnapshotPairs to_snapshots(const TrajectoryDataset& dataset) {
  const int n = dataset.dimension();
  const auto count = static_cast<Eigen::Index>(dataset.pair_count());
  SnapshotPairs pairs;
  pairs.dt = dataset.dt;
  pairs.X.resize(n, count);
  pairs.Y.resize(n, count);
  Eigen::Index col = 0;
  for (const auto& t : dataset.trajectories) {
    for (std::size_t s = 0; s + 1 < t.states.size(); ++s) {
      pairs.X.col(col) = t.states[s];
      pairs.Y.col(col) = t.states[s + 1];
      ++col;
    }
  }
  return pairs;
}

std::pair<TrajectoryDataset, TrajectoryDataset> split(const TrajectoryDataset& dataset,
                                                      double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InvalidInput("split fraction must lie strictly between 0 and 1");
  }
  const std::size_t total = dataset.trajectories.size();
  if (total < 2) throw InvalidInput("need at least 2 trajectories to split");

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (std::size_t i = total - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  n_train = std::clamp<std::size_t>(n_train, 1, total - 1);

  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<long>(n_train), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  TrajectoryDataset train{dataset.dt, {}, dataset.seed};
  TrajectoryDataset test{dataset.dt, {}, dataset.seed};
  for (auto i : train_idx) train.trajectories.push_back(dataset.trajectories[i]);
  for (auto i : test_idx) test.trajectories.push_back(dataset.trajectories[i]);
  return {std::move(train), std::move(test)};
}

}  // namespace kroa::dynamics
