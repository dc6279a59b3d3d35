#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "kroa/detail/parallel.hpp"
#include "kroa/error.hpp"
#include "kroa/roa.hpp"

namespace kroa::roa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double half_squared_step(const edmd::FlowOperator& flow, const State& x) {
  const State r = flow(x) - x;
  const double j = 0.5 * r.squaredNorm();
  return std::isfinite(j) ? j : kInf;
}

Eigen::MatrixXd jacobian_with(const edmd::FlowOperator& flow, const State& x) {
  const Eigen::Index n = x.size();
  const double cbrt_eps = std::cbrt(std::numeric_limits<double>::epsilon());
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = cbrt_eps * std::max(1.0, std::abs(x(j)));
    State plus = x;
    State minus = x;
    plus(j) += h;
    minus(j) -= h;
    H.col(j) = (flow(plus) - flow(minus)) / ((plus(j) - minus(j)));
  }
  if (!H.allFinite()) throw NumericalError("flow is not finite around the linearization point");
  return H;
}

struct Minimum {
  State x;
  double J = kInf;
};

// Nelder-Mead with standard coefficients (1, 2, 0.5, 0.5).
Minimum simplex_descent(const edmd::FlowOperator& flow, const State& start,
                        const Eigen::VectorXd& edge, int max_iterations) {
  const Eigen::Index n = start.size();
  std::vector<State> vertex(static_cast<std::size_t>(n) + 1, start);
  std::vector<double> value(vertex.size());
  for (Eigen::Index j = 0; j < n; ++j) vertex[static_cast<std::size_t>(j) + 1](j) += edge(j);
  for (std::size_t i = 0; i < vertex.size(); ++i) value[i] = half_squared_step(flow, vertex[i]);

  std::vector<std::size_t> order(vertex.size());
  for (int iter = 0; iter < max_iterations; ++iter) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double diameter = 0.0;
    for (std::size_t i = 0; i < vertex.size(); ++i) {
      diameter = std::max(diameter, (vertex[i] - vertex[best]).cwiseAbs().maxCoeff());
    }
    if (value[best] < 1e-30 ||
        (diameter < 1e-10 * std::max(1.0, vertex[best].cwiseAbs().maxCoeff()) &&
         value[worst] - value[best] <= 1e-15 * (1.0 + value[best]))) {
      break;
    }

    State centroid = State::Zero(n);
    for (std::size_t i = 0; i < vertex.size(); ++i) {
      if (i != worst) centroid += vertex[i];
    }
    centroid /= static_cast<double>(n);

    const State reflected = centroid + (centroid - vertex[worst]);
    const double fr = half_squared_step(flow, reflected);
    if (fr < value[best]) {
      const State expanded = centroid + 2.0 * (centroid - vertex[worst]);
      const double fe = half_squared_step(flow, expanded);
      if (fe < fr) {
        vertex[worst] = expanded;
        value[worst] = fe;
      } else {
        vertex[worst] = reflected;
        value[worst] = fr;
      }
      continue;
    }
    if (fr < value[second]) {
      vertex[worst] = reflected;
      value[worst] = fr;
      continue;
    }
    const bool outside = fr < value[worst];
    const State contracted = outside ? State(centroid + 0.5 * (reflected - centroid))
                                     : State(centroid + 0.5 * (vertex[worst] - centroid));
    const double fc = half_squared_step(flow, contracted);
    if (fc < (outside ? fr : value[worst])) {
      vertex[worst] = contracted;
      value[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < vertex.size(); ++i) {
      if (i == best) continue;
      vertex[i] = vertex[best] + 0.5 * (vertex[i] - vertex[best]);
      value[i] = half_squared_step(flow, vertex[i]);
    }
  }
  const auto it = std::min_element(value.begin(), value.end());
  return {vertex[static_cast<std::size_t>(it - value.begin())], *it};
}

// Gauss-Newton on r(x) = flow(x) - x with step halving.
Minimum polish(const edmd::FlowOperator& flow, Minimum m, int max_iterations) {
  if (!std::isfinite(m.J)) return m;
  const Eigen::Index n = m.x.size();
  for (int iter = 0; iter < max_iterations && m.J > 0.0; ++iter) {
    Eigen::MatrixXd Jr;
    try {
      Jr = jacobian_with(flow, m.x) - Eigen::MatrixXd::Identity(n, n);
    } catch (const NumericalError&) {
      break;
    }
    const State r = flow(m.x) - m.x;
    const State step = Jr.completeOrthogonalDecomposition().solve(-r);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 30; ++halving, t *= 0.5) {
      const State trial = m.x + t * step;
      const double J = half_squared_step(flow, trial);
      if (J < m.J) {
        m.x = trial;
        m.J = J;
        improved = true;
        break;
      }
    }
    if (!improved || t * step.norm() < 1e-14 * std::max(1.0, m.x.norm())) break;
  }
  return m;
}

}  // namespace

double residual_objective(const KoopmanModel& model, const State& x, int k) {
  if (k < 1) throw InvalidInput("residual steps k must be >= 1");
  return 0.5 * (model.flow(x, k) - x).squaredNorm();
}

std::string stability_label(const FixedPointReport& point) {
  switch (point.stability) {
    case Stability::AsymptoticallyStable:
      return "AS";
    case Stability::Unstable:
      return "Unstable";
    case Stability::Saddle:
      return "Saddle(" + std::to_string(point.unstable_count) + ")";
    case Stability::NonHyperbolic:
      return "NonHyperbolic";
    case Stability::Unclassified:
      break;
  }
  return "Unclassified";
}

FixedPointSearch find_fixed_points(const KoopmanModel& model, const std::vector<State>& starts,
                                   const FixedPointOptions& options) {
  if (starts.empty()) throw InvalidInput("fixed-point search needs at least one start");
  if (options.steps < 1) throw InvalidInput("residual steps k must be >= 1");
  if (!(options.tol_J > 0.0) || !(options.merge_distance > 0.0)) {
    throw InvalidInput("fixed-point tolerances must be positive");
  }
  const int n = model.dimension();
  for (const auto& s : starts) {
    if (s.size() != n) throw InvalidInput("start point has wrong dimension");
  }
  const edmd::FlowOperator flow = model.flow_operator(options.steps);

  // Simplex edge: a fraction of the spread of the starts, never degenerate.
  Eigen::VectorXd lo = starts.front();
  Eigen::VectorXd hi = starts.front();
  for (const auto& s : starts) {
    lo = lo.cwiseMin(s);
    hi = hi.cwiseMax(s);
  }
  Eigen::VectorXd edge = options.simplex_scale * (hi - lo);
  for (int j = 0; j < n; ++j) {
    if (!(edge(j) > 0.0)) edge(j) = options.simplex_scale * std::max(1.0, std::abs(lo(j)));
  }

  std::vector<Minimum> minima(starts.size());
  detail::parallel_for(starts.size(), [&](std::size_t i) {
    Minimum m = simplex_descent(flow, starts[i], edge, options.max_simplex_iterations);
    minima[i] = polish(flow, std::move(m), options.max_polish_iterations);
  });

  FixedPointSearch search;
  search.starts = static_cast<int>(starts.size());
  search.best_rejected = kInf;
  std::vector<Minimum> accepted;
  for (auto& m : minima) {
    if (m.J < options.tol_J && m.x.allFinite()) {
      accepted.push_back(std::move(m));
    } else {
      search.best_rejected = std::min(search.best_rejected, m.J);
    }
  }
  search.accepted = static_cast<int>(accepted.size());
  std::stable_sort(accepted.begin(), accepted.end(),
                   [](const Minimum& a, const Minimum& b) { return a.J < b.J; });
  for (const auto& m : accepted) {
    const bool duplicate = std::any_of(search.points.begin(), search.points.end(), [&](const auto& p) {
      return (p.location - m.x).norm() < options.merge_distance;
    });
    if (!duplicate) {
      FixedPointReport report;
      report.location = m.x;
      report.residual = m.J;
      search.points.push_back(std::move(report));
    }
  }
  std::sort(search.points.begin(), search.points.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.location.begin(), a.location.end(),
                                        b.location.begin(), b.location.end());
  });
  return search;
}

std::vector<State> default_starts(const dynamics::TrajectoryDataset& data, std::uint64_t seed,
                                  int spread, int slow) {
  struct Sample {
    State x;
    double displacement;
  };
  std::vector<Sample> samples;
  samples.reserve(data.sample_count());
  for (const auto& t : data.trajectories) {
    for (std::size_t s = 0; s + 1 < t.states.size(); ++s) {
      samples.push_back({t.states[s], (t.states[s + 1] - t.states[s]).norm()});
    }
  }
  if (samples.empty()) throw InvalidInput("no data to draw fixed-point starts from");
  const Eigen::Index n = samples.front().x.size();

  // Distances in coordinates normalized by the data spread.
  Eigen::VectorXd lo = samples.front().x;
  Eigen::VectorXd hi = samples.front().x;
  for (const auto& s : samples) {
    lo = lo.cwiseMin(s.x);
    hi = hi.cwiseMax(s.x);
  }
  Eigen::VectorXd inv_width(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    inv_width(j) = hi(j) > lo(j) ? 1.0 / (hi(j) - lo(j)) : 1.0;
  }
  auto distance = [&](const State& a, const State& b) {
    return (a - b).cwiseProduct(inv_width).norm();
  };

  std::vector<State> starts;
  if (spread > 0) {
    std::mt19937_64 rng(seed);
    std::size_t pick = static_cast<std::size_t>(rng() % samples.size());
    std::vector<double> nearest(samples.size(), kInf);
    for (int c = 0; c < spread && c < static_cast<int>(samples.size()); ++c) {
      starts.push_back(samples[pick].x);
      double far = -1.0;
      std::size_t next = pick;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        nearest[i] = std::min(nearest[i], distance(samples[i].x, samples[pick].x));
        if (nearest[i] > far) {
          far = nearest[i];
          next = i;
        }
      }
      if (far <= 0.0) break;
      pick = next;
    }
  }
  if (slow > 0) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return samples[a].displacement < samples[b].displacement;
    });
    std::vector<State> kept;
    for (std::size_t i : order) {
      if (static_cast<int>(kept.size()) >= slow) break;
      const bool close = std::any_of(kept.begin(), kept.end(), [&](const State& k) {
        return distance(k, samples[i].x) < 0.05;
      });
      if (!close) kept.push_back(samples[i].x);
    }
    starts.insert(starts.end(), kept.begin(), kept.end());
  }
  return starts;
}

Eigen::MatrixXd local_jacobian(const KoopmanModel& model, const State& x) {
  if (x.size() != model.dimension()) throw InvalidInput("state has wrong dimension");
  return jacobian_with(model.flow_operator(1), x);
}

StabilityClass classify_magnitudes(Eigen::VectorXd magnitudes, double eps_hyp) {
  if (!(eps_hyp > 0.0)) throw InvalidInput("hyperbolicity margin must be positive");
  std::sort(magnitudes.begin(), magnitudes.end(), std::greater<>());
  StabilityClass c;
  c.margin = kInf;
  for (double m : magnitudes) {
    if (m > 1.0) ++c.unstable_count;
    c.margin = std::min(c.margin, std::abs(m - 1.0));
  }
  const auto n = static_cast<int>(magnitudes.size());
  if (c.margin < eps_hyp) {
    c.stability = Stability::NonHyperbolic;
  } else if (c.unstable_count == 0) {
    c.stability = Stability::AsymptoticallyStable;
  } else if (c.unstable_count == n) {
    c.stability = Stability::Unstable;
  } else {
    c.stability = Stability::Saddle;
  }
  c.magnitudes = std::move(magnitudes);
  return c;
}

StabilityClass classify_stability(const Eigen::MatrixXd& H, double eps_hyp) {
  if (H.rows() != H.cols() || H.rows() == 0) throw InvalidInput("Jacobian must be square");
  if (!H.allFinite()) throw NumericalError("Jacobian has non-finite entries");
  Eigen::EigenSolver<Eigen::MatrixXd> es(H, false);
  if (es.info() != Eigen::Success) throw NumericalError("Jacobian eigenvalues did not converge");
  return classify_magnitudes(es.eigenvalues().cwiseAbs(), eps_hyp);
}

void classify_fixed_points(const KoopmanModel& model, std::vector<FixedPointReport>& points,
                           double eps_hyp) {
  const edmd::FlowOperator flow = model.flow_operator(1);
  for (auto& p : points) {
    const StabilityClass c = classify_stability(jacobian_with(flow, p.location), eps_hyp);
    p.magnitudes = c.magnitudes;
    p.stability = c.stability;
    p.unstable_count = c.unstable_count;
    p.hyperbolicity_margin = c.margin;
  }
}

}  // namespace kroa::roa
