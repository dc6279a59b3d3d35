#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "kroa/error.hpp"
#include "kroa/roa.hpp"

namespace kroa::roa {

namespace {

using Json = nlohmann::ordered_json;

Eigen::MatrixXd sample_states(const dynamics::TrajectoryDataset& data, std::size_t limit) {
  const std::size_t total = data.sample_count();
  const std::size_t stride = std::max<std::size_t>(1, (total + limit - 1) / limit);
  std::vector<const State*> picked;
  std::size_t k = 0;
  for (const auto& t : data.trajectories) {
    for (const auto& x : t.states) {
      if (k++ % stride == 0) picked.push_back(&x);
    }
  }
  Eigen::MatrixXd out(data.dimension(), static_cast<Eigen::Index>(picked.size()));
  for (std::size_t i = 0; i < picked.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = *picked[i];
  return out;
}

std::vector<LabeledPoint> label_trajectories(const dynamics::TrajectoryDataset& data,
                                             const std::vector<FixedPointReport>& points,
                                             double radius) {
  std::vector<LabeledPoint> out;
  out.reserve(data.trajectories.size());
  for (const auto& t : data.trajectories) {
    out.push_back({t.states.front(), endpoint_label(t.states.back(), points, radius)});
  }
  return out;
}

std::vector<UnitaryEigenfunction> unitary_pool(const KoopmanModel& model,
                                               const std::vector<UnitaryCandidate>& ranked,
                                               const RoaOptions& options) {
  std::vector<UnitaryEigenfunction> pool;
  std::vector<const UnitaryCandidate*> above;
  std::vector<const UnitaryCandidate*> below;
  for (const auto& c : ranked) {
    if (!c.real_positive) continue;
    if (c.direct) {
      if (static_cast<int>(pool.size()) < options.max_candidates) {
        pool.push_back(UnitaryEigenfunction::direct(model, c.index));
      }
    } else if (c.mu.real() > 1.0) {
      above.push_back(&c);
    } else {
      below.push_back(&c);
    }
  }
  // Products of the closest eigenvalues on either side of one.
  std::vector<std::pair<const UnitaryCandidate*, const UnitaryCandidate*>> pairs;
  const auto width = static_cast<std::size_t>(std::max(options.max_pairs, 0));
  for (std::size_t a = 0; a < above.size() && a < width; ++a) {
    for (std::size_t b = 0; b < below.size() && b < width; ++b) pairs.emplace_back(above[a], below[b]);
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
    return x.first->distance + x.second->distance < y.first->distance + y.second->distance;
  });
  if (pairs.size() > width) pairs.resize(width);
  for (const auto& [a, b] : pairs) pool.push_back(UnitaryEigenfunction::product(model, a->index, b->index));
  return pool;
}

}  // namespace

namespace {

void check_inputs(const dynamics::TrajectoryDataset& train, const dynamics::TrajectoryDataset& test) {
  if (train.trajectories.empty()) throw InvalidInput("training set is empty");
  if (test.trajectories.empty()) throw InvalidInput("test set is empty");
  if (train.dimension() != test.dimension()) {
    throw InvalidInput("training and test sets differ in dimension");
  }
}

void analyze(PipelineReport& report, std::string& stage, const dynamics::TrajectoryDataset& train,
             const dynamics::TrajectoryDataset& test, const PipelineConfig& config) {
  const KoopmanModel& model = *report.model;
  const int n = model.dimension();

  stage = "fixed-points";
  const auto starts = default_starts(train, dynamics::derive_seed(config.seed, "starts"));
  report.fixed_points = find_fixed_points(model, starts, config.roa.fixed_points);
  if (report.fixed_points.points.empty()) {
    throw EmptyResult("no fixed point reached J < tol_J (best rejected J = " +
                      std::to_string(report.fixed_points.best_rejected) + ")");
  }
  classify_fixed_points(model, report.fixed_points.points, config.roa.eps_hyp);
  const auto& points = report.fixed_points.points;

  stage = "labels";
  const double radius = config.roa.label_radius_factor * config.roa.fixed_points.merge_distance;
  const std::vector<LabeledPoint> training = label_trajectories(train, points, radius);
  report.test_points = label_trajectories(test, points, radius);
  const bool any_saddle =
      std::any_of(points.begin(), points.end(), [](const auto& p) { return p.is_type_one_saddle(); });

  if (!any_saddle) {
    report.notes.push_back("no type-one saddle: no boundary to estimate");
    report.decisions = build_decision_list({}, points, training);
  } else {
    stage = "unitary";
    report.candidates =
        select_unitary_candidates(model, sample_states(train, 4000), config.roa.eps_unit);
    const auto pool = unitary_pool(model, report.candidates, config.roa);
    if (pool.empty()) throw EmptyResult("no real positive eigenfunction to build on");

    stage = "classifiers";
    report.decisions = build_decision_list(pool, points, training);
    if (report.decisions.rules.empty()) {
      throw EmptyResult("no eigenfunction separates the training basins at any saddle");
    }
  }

  stage = "classification";
  std::vector<State> xs;
  for (const auto& lp : report.test_points) xs.push_back(lp.x);
  report.test_predictions = classify_points(report.decisions, xs).labels;
  int right = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (report.test_points[i].label < 0) continue;
    ++report.test_evaluated;
    if (report.test_predictions[i] == report.test_points[i].label) ++right;
  }
  report.test_accuracy =
      report.test_evaluated > 0 ? static_cast<double>(right) / report.test_evaluated : 0.0;

  stage = "boundary";
  if (n == 2 || config.boundary_axes) {
    const std::array<int, 2> axes = config.boundary_axes.value_or(std::array<int, 2>{0, 1});
    const Eigen::MatrixXd states = sample_states(train, 1u << 30);
    std::array<double, 2> lo{states.row(axes[0]).minCoeff(), states.row(axes[1]).minCoeff()};
    std::array<double, 2> hi{states.row(axes[0]).maxCoeff(), states.row(axes[1]).maxCoeff()};
    if (config.boundary_lower) lo = *config.boundary_lower;
    if (config.boundary_upper) hi = *config.boundary_upper;
    for (const auto& rule : report.decisions.rules) {
      const State frozen = config.boundary_frozen.value_or(rule.saddle);
      report.boundaries.push_back(boundary_grid(rule.phi, rule.saddle, axes[0], axes[1], lo, hi,
                                                config.boundary_resolution, frozen));
    }
  }
}

template <typename Body>
PipelineReport guarded(Body&& body) {
  PipelineReport report;
  std::string stage = "fit";
  try {
    body(report, stage);
  } catch (const InvalidInput& ex) {
    report.failed_stage = stage;
    report.failure = ex.what();
    report.failure_code = 2;
  } catch (const EmptyResult& ex) {
    report.failed_stage = stage;
    report.failure = ex.what();
    report.failure_code = 4;
  } catch (const std::exception& ex) {
    report.failed_stage = stage;
    report.failure = ex.what();
    report.failure_code = 3;
  }
  return report;
}

}  // namespace

PipelineReport run_pipeline(const dynamics::TrajectoryDataset& train,
                            const dynamics::TrajectoryDataset& test, const PipelineConfig& config) {
  return guarded([&](PipelineReport& report, std::string& stage) {
    check_inputs(train, test);
    const int n = train.dimension();
    const dynamics::SnapshotPairs pairs = dynamics::to_snapshots(train);
    int p = config.p;
    double q = config.q;
    if (!config.sweep_p.empty() || !config.sweep_q.empty()) {
      const std::vector<int> ps = config.sweep_p.empty() ? std::vector<int>{p} : config.sweep_p;
      const std::vector<double> qs =
          config.sweep_q.empty() ? std::vector<double>{q} : config.sweep_q;
      report.sweep = edmd::pq_sweep(pairs, test, ps, qs, config.family, config.scale, config.fit);
      p = report.sweep.front().p;
      q = report.sweep.front().q;
    }
    basis::BasisSpec spec(config.family, basis::truncated_indices(n, p, q), config.scale);
    report.model = edmd::fit(pairs, spec, config.fit);
    report.error = edmd::empirical_error(*report.model, test);
    analyze(report, stage, train, test, config);
  });
}

PipelineReport run_pipeline(const KoopmanModel& model, const dynamics::TrajectoryDataset& train,
                            const dynamics::TrajectoryDataset& test, const PipelineConfig& config) {
  return guarded([&](PipelineReport& report, std::string& stage) {
    check_inputs(train, test);
    if (model.dimension() != train.dimension()) {
      throw InvalidInput("model dimension " + std::to_string(model.dimension()) +
                         " does not match data dimension " + std::to_string(train.dimension()));
    }
    report.model = model;
    report.error = edmd::empirical_error(model, test);
    analyze(report, stage, train, test, config);
  });
}

namespace {

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

void write_report(const PipelineReport& report, std::ostream& out) {
  Json doc;
  doc["format"] = "kroa-pipeline-report";
  doc["version"] = 1;
  doc["status"] = report.failed_stage.empty() ? "ok" : "failed";
  if (!report.failed_stage.empty()) {
    doc["failed_stage"] = report.failed_stage;
    doc["failure"] = report.failure;
  }
  if (report.model) {
    const auto& m = *report.model;
    doc["model"] = {{"family", std::string(basis::family_name(m.spec().family()))},
                    {"p", m.spec().index_set().max_degree},
                    {"q", m.spec().index_set().q},
                    {"d", m.size()},
                    {"pairs", m.diagnostics().pair_count},
                    {"relative_residual", m.diagnostics().relative_residual},
                    {"g_rank", m.diagnostics().g_rank}};
  }
  if (!report.sweep.empty()) {
    Json rows = Json::array();
    for (const auto& r : report.sweep) {
      Json row = {{"p", r.p}, {"q", r.q}, {"d", r.d}, {"e", finite_or_null(r.e)}};
      if (!r.failure.empty()) row["failure"] = r.failure;
      rows.push_back(std::move(row));
    }
    doc["sweep"] = std::move(rows);
  }
  if (report.error) {
    doc["empirical_error"] = {{"e", finite_or_null(report.error->e)},
                              {"trajectories", report.error->trajectory_count},
                              {"samples", report.error->evaluated_samples},
                              {"skipped", report.error->skipped_samples}};
  }
  Json fps = Json::array();
  for (const auto& p : report.fixed_points.points) {
    fps.push_back({{"location", vec(p.location)},
                   {"J", p.residual},
                   {"magnitudes", vec(p.magnitudes)},
                   {"class", stability_label(p)},
                   {"margin", finite_or_null(p.hyperbolicity_margin)}});
  }
  doc["fixed_points"] = std::move(fps);
  Json cands = Json::array();
  for (const auto& c : report.candidates) {
    cands.push_back({{"index", c.index},
                     {"mu", {c.mu.real(), c.mu.imag()}},
                     {"distance", c.distance},
                     {"direct", c.direct}});
  }
  doc["unitary_candidates"] = std::move(cands);
  Json rules = Json::array();
  for (const auto& r : report.decisions.rules) {
    Json phi = {{"first", r.phi.first()}, {"mu_bar", r.phi.mu_bar()}};
    if (!r.phi.is_direct()) {
      phi["second"] = r.phi.second();
      phi["k2"] = r.phi.k2();
    }
    rules.push_back({{"eigenfunction", std::move(phi)},
                     {"saddle", r.saddle_index},
                     {"threshold", r.threshold},
                     {"sigma", r.sigma},
                     {"target", r.target},
                     {"training_accuracy", r.training_accuracy}});
  }
  doc["classifiers"] = std::move(rules);
  doc["residual_label"] = report.decisions.residual_label;
  doc["test"] = {{"points", report.test_points.size()},
                 {"evaluated", report.test_evaluated},
                 {"accuracy", report.test_accuracy}};
  Json grids = Json::array();
  for (const auto& g : report.boundaries) {
    Json grid = {{"axes", {g.axis_a, g.axis_b}},
                 {"level", g.level},
                 {"segments", g.segments.size()}};
    if (!g.diagnostic.empty()) grid["diagnostic"] = g.diagnostic;
    grids.push_back(std::move(grid));
  }
  doc["boundaries"] = std::move(grids);
  doc["notes"] = report.notes;
  out << doc.dump(1) << '\n';
}

}  // namespace kroa::roa
