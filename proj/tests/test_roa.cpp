#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "kroa/error.hpp"
#include "kroa/roa.hpp"
#include "support.hpp"

using namespace kroa;
using basis::BasisSpec;
using basis::Family;
using roa::Stability;

namespace {

edmd::KoopmanModel halving_model() {
  Eigen::MatrixXd X(1, 3);
  X << 1.0, 2.0, 3.0;
  dynamics::SnapshotPairs pairs;
  pairs.X = X;
  pairs.Y = 0.5 * X;
  pairs.dt = 0.1;
  return edmd::fit(pairs, BasisSpec(Family::Laguerre, basis::truncated_indices(1, 1, 1.0)));
}

const roa::PipelineReport& competition_report() {
  static const roa::PipelineReport report = [] {
    roa::PipelineConfig config;
    config.seed = 7;
    const auto& data = fixtures::competition_data();
    return roa::run_pipeline(data.train, data.test, config);
  }();
  return report;
}

const std::array<Eigen::Vector2d, 4> kCompetitionPoints = {
    Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(0.0, 2.0), Eigen::Vector2d(2.0, 0.0),
    Eigen::Vector2d(0.5, 0.5)};

Stability oracle_class(const Eigen::VectorXd& magnitudes) {
  return roa::classify_magnitudes(magnitudes).stability;
}

int stable_index_near(const roa::PipelineReport& report, const Eigen::Vector2d& x) {
  const auto& pts = report.fixed_points.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if ((pts[i].location - x).norm() < 0.05) return static_cast<int>(i);
  }
  return -1;
}

// Basin of the reference ODE solution: 0 for (2,0), 1 for (0,2).
int competition_oracle(const Eigen::Vector2d& x0) {
  const Eigen::VectorXd r = dynamics::default_competition_rates();
  const Eigen::VectorXd end = fixtures::reference_integrate(
      [&](const Eigen::VectorXd& x) { return dynamics::competition_rhs(x, r); }, x0, 60.0, 0.01);
  return end(0) > end(1) ? 0 : 1;
}

}  // namespace

TEST(ResidualObjective, Examples) {
  const auto model = halving_model();
  EXPECT_NEAR(roa::residual_objective(model, Eigen::VectorXd::Constant(1, 1.0)), 0.125, 1e-12);
  EXPECT_NEAR(roa::residual_objective(model, Eigen::VectorXd::Zero(1)), 0.0, 1e-24);
  EXPECT_NEAR(roa::residual_objective(model, Eigen::VectorXd::Constant(1, 1.0), 2), 0.5 * 0.75 * 0.75,
              1e-12);
  EXPECT_THROW(roa::residual_objective(model, Eigen::VectorXd::Zero(1), 0), InvalidInput);
}

TEST(ResidualObjective, NonNegative) {
  const auto& model = *competition_report().model;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.5, 2.5);
  for (int i = 0; i < 100; ++i) {
    EXPECT_GE(roa::residual_objective(model, Eigen::Vector2d(u(rng), u(rng))), 0.0);
  }
}

TEST(FindFixedPoints, ExactScalarModel) {
  const auto model = halving_model();
  std::vector<dynamics::State> starts;
  for (double x : {-2.0, -0.3, 0.7, 3.0}) starts.push_back(Eigen::VectorXd::Constant(1, x));
  const auto search = roa::find_fixed_points(model, starts);
  ASSERT_EQ(search.points.size(), 1u);
  EXPECT_NEAR(search.points[0].location(0), 0.0, 1e-6);
  EXPECT_LT(search.points[0].residual, 1e-8);
}

TEST(FindFixedPoints, RejectsBadStarts) {
  const auto model = halving_model();
  EXPECT_THROW(roa::find_fixed_points(model, {}), InvalidInput);
  EXPECT_THROW(roa::find_fixed_points(model, {Eigen::Vector2d::Zero()}), InvalidInput);
}

TEST(FindFixedPoints, CompetitionTable) {
  const auto& report = competition_report();
  ASSERT_TRUE(report.failed_stage.empty()) << report.failure;
  const auto& pts = report.fixed_points.points;
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& ref : kCompetitionPoints) {
    const auto [i, d] = fixtures::nearest(std::vector<Eigen::VectorXd>{pts[0].location, pts[1].location,
                                                                        pts[2].location, pts[3].location},
                                          ref);
    EXPECT_LE(d, 0.05) << ref.transpose();
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_TRUE(std::lexicographical_compare(pts[i - 1].location.data(), pts[i - 1].location.data() + 2,
                                             pts[i].location.data(), pts[i].location.data() + 2));
  }
}

TEST(FindFixedPoints, Idempotent) {
  const auto& report = competition_report();
  std::vector<dynamics::State> starts;
  for (const auto& p : report.fixed_points.points) starts.push_back(p.location);
  const auto again = roa::find_fixed_points(*report.model, starts);
  ASSERT_EQ(again.points.size(), report.fixed_points.points.size());
  for (std::size_t i = 0; i < again.points.size(); ++i) {
    EXPECT_LT((again.points[i].location - report.fixed_points.points[i].location).norm(), 1e-2);
  }
}

TEST(LocalJacobian, ExactScalarModel) {
  const auto H = roa::local_jacobian(halving_model(), Eigen::VectorXd::Constant(1, 0.3));
  ASSERT_EQ(H.rows(), 1);
  EXPECT_NEAR(H(0, 0), 0.5, 1e-8);
}

TEST(LocalJacobian, CompetitionMagnitudesMatchContinuousOracle) {
  const auto& report = competition_report();
  const Eigen::VectorXd r = dynamics::default_competition_rates();
  auto rhs = [&](const Eigen::VectorXd& x) { return dynamics::competition_rhs(x, r); };
  for (const auto& p : report.fixed_points.points) {
    const auto [i, d] = fixtures::nearest(kCompetitionPoints, p.location);
    ASSERT_LE(d, 0.05);
    const Eigen::VectorXd oracle = fixtures::discrete_magnitudes(
        fixtures::rhs_jacobian(rhs, kCompetitionPoints[static_cast<std::size_t>(i)]), 0.1);
    EXPECT_LT((p.magnitudes - oracle).cwiseAbs().maxCoeff(), 0.05)
        << p.magnitudes.transpose() << " vs " << oracle.transpose();
    EXPECT_EQ(p.stability, oracle_class(oracle));
  }
}

TEST(ClassifyStability, Examples) {
  auto c = roa::classify_magnitudes(Eigen::Vector2d(0.66, 0.82));
  EXPECT_EQ(c.stability, Stability::AsymptoticallyStable);
  EXPECT_NEAR(c.margin, 0.18, 1e-12);
  c = roa::classify_magnitudes(Eigen::Vector2d(0.81, 1.10));
  EXPECT_EQ(c.stability, Stability::Saddle);
  EXPECT_EQ(c.unstable_count, 1);
  EXPECT_NEAR(c.magnitudes(0), 1.10, 1e-12);
  c = roa::classify_magnitudes(Eigen::Vector2d(1.0, 0.5));
  EXPECT_EQ(c.stability, Stability::NonHyperbolic);
  c = roa::classify_magnitudes(Eigen::Vector2d(1.2, 1.3));
  EXPECT_EQ(c.stability, Stability::Unstable);
  c = roa::classify_magnitudes(Eigen::Vector3d(1.2, 1.3, 0.4));
  EXPECT_EQ(c.stability, Stability::Saddle);
  EXPECT_EQ(c.unstable_count, 2);
  EXPECT_THROW(roa::classify_magnitudes(Eigen::Vector2d(0.5, 0.5), 0.0), InvalidInput);
}

TEST(ClassifyStability, FromMatrix) {
  Eigen::Matrix2d rotation;
  rotation << 0.0, -0.9, 0.9, 0.0;
  const auto c = roa::classify_stability(rotation);
  EXPECT_EQ(c.stability, Stability::AsymptoticallyStable);
  EXPECT_NEAR(c.magnitudes(0), 0.9, 1e-12);
  EXPECT_THROW(roa::classify_stability(Eigen::MatrixXd(2, 3)), InvalidInput);
}

TEST(StabilityLabel, Text) {
  roa::FixedPointReport p;
  p.stability = Stability::Saddle;
  p.unstable_count = 1;
  EXPECT_EQ(roa::stability_label(p), "Saddle(1)");
  EXPECT_TRUE(p.is_type_one_saddle());
  p.stability = Stability::AsymptoticallyStable;
  EXPECT_EQ(roa::stability_label(p), "AS");
  EXPECT_FALSE(p.is_type_one_saddle());
}

TEST(UnitaryExponent, Examples) {
  EXPECT_NEAR(roa::unitary_exponent(2.0, 0.5), 1.0, 1e-15);
  const double k2 = roa::unitary_exponent(1.07, 0.83);
  EXPECT_NEAR(k2, 0.3631, 5e-5);
  EXPECT_NEAR(1.07 * std::pow(0.83, k2), 1.0, 1e-12);
  EXPECT_THROW(roa::unitary_exponent(1.07, 1.0), InvalidInput);
  EXPECT_THROW(roa::unitary_exponent(-1.07, 0.5), InvalidInput);
}

TEST(UnitaryCandidates, CompetitionFit) {
  const auto& report = competition_report();
  const auto& c = report.candidates;
  ASSERT_FALSE(c.empty());
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LE(c[i - 1].distance, c[i].distance);
  for (const auto& u : c) {
    EXPECT_NEAR(u.distance, std::abs(u.mu - 1.0), 1e-15);
    EXPECT_EQ(u.direct, u.distance < 5e-3);
  }
}

TEST(UnitaryCandidates, OnlyTrivialStructure) {
  const auto model = halving_model();
  Eigen::MatrixXd states(1, 2);
  states << 0.7, 0.7;
  EXPECT_THROW(roa::select_unitary_candidates(model, states), EmptyResult);
}

TEST(UnitaryEigenfunction, ProductsHaveUnitEigenvalue) {
  const auto& model = *competition_report().model;
  const auto& mu = model.eigenvalues();
  int built = 0;
  for (int i = 0; i < model.size(); ++i) {
    for (int j = 0; j < model.size(); ++j) {
      const bool real_pos = std::abs(mu(i).imag()) == 0.0 && std::abs(mu(j).imag()) == 0.0 &&
                            mu(i).real() > 0.0 && mu(j).real() > 0.0;
      if (i == j || !real_pos || std::abs(std::log(mu(j).real())) < 1e-6) continue;
      const auto phi = roa::UnitaryEigenfunction::product(model, i, j);
      EXPECT_NEAR(phi.mu_bar(), 1.0, 1e-12);
      EXPECT_EQ(phi.k1(), 1.0);
      ++built;
    }
  }
  EXPECT_GT(built, 0);
}

TEST(UnitaryEigenfunction, DirectHasNoSecondFactor) {
  const auto model = halving_model();
  const auto phi = roa::UnitaryEigenfunction::direct(model, 0);
  EXPECT_TRUE(phi.is_direct());
  EXPECT_EQ(phi.k2(), 0.0);
  EXPECT_EQ(phi.mu_bar(), phi.mu1());
  // The trivial eigenfunction takes one value everywhere.
  EXPECT_NEAR(phi.value(Eigen::VectorXd::Constant(1, 0.2)), phi.value(Eigen::VectorXd::Constant(1, 5.0)),
              1e-12);
  EXPECT_EQ(phi.branch(Eigen::VectorXd::Constant(1, -4.0)), 1);
  const auto phi2 = roa::UnitaryEigenfunction::direct(model, 1);
  EXPECT_NEAR(roa::eval_unitary(phi2, Eigen::VectorXd::Constant(1, 2.0)).real(),
              phi2.value(Eigen::VectorXd::Constant(1, 2.0)), 1e-15);
  EXPECT_THROW(roa::UnitaryEigenfunction::product(model, 1, 0), InvalidInput);
  EXPECT_THROW(roa::UnitaryEigenfunction::product(model, 1, 1), InvalidInput);
}

TEST(UnitaryEigenfunction, ProductFollowsEigenvalueOverTrainingPairs) {
  const auto& model = *competition_report().model;
  const auto pairs = dynamics::to_snapshots(fixtures::competition_data().train);
  const auto& mu = model.eigenvalues();
  for (int i = 1; i + 1 < model.size() && i < 5; ++i) {
    const int j = i + 1;
    double lhs = 0.0, bound = 0.0;
    for (Eigen::Index c = 0; c < pairs.count(); ++c) {
      const auto ax = model.eigenfunction(i, pairs.X.col(c));
      const auto bx = model.eigenfunction(j, pairs.X.col(c));
      const auto ay = model.eigenfunction(i, pairs.Y.col(c));
      const auto by = model.eigenfunction(j, pairs.Y.col(c));
      lhs += std::abs(ay * by - mu(i) * mu(j) * ax * bx);
      bound += std::abs(ay - mu(i) * ax) * std::abs(by) + std::abs(mu(i) * ax) * std::abs(by - mu(j) * bx);
    }
    // Each factor contributes its own propagation residual.
    EXPECT_LE(lhs, bound * (1.0 + 1e-12)) << "i=" << i;
  }
}

TEST(UnitaryEigenfunction, ScaledCopy) {
  const auto& rule = competition_report().decisions.rules.at(0);
  const auto twice = rule.phi.scaled(2.0);
  const Eigen::Vector2d x(0.3, 1.2);
  EXPECT_NEAR(twice.value(x), 2.0 * rule.phi.value(x), 1e-12 * std::abs(rule.phi.value(x)) + 1e-15);
}

TEST(UnitaryEigenfunction, NearlyInvariantAlongTrajectory) {
  const auto& report = competition_report();
  const auto& phi = report.decisions.rules.at(0).phi;
  const auto& data = fixtures::competition_data().test;
  int checked = 0;
  for (const auto& t : data.trajectories) {
    if (t.states.size() < 51) continue;
    const double v0 = phi.value(t.states[0]);
    double drift = 0.0;
    for (int k = 1; k <= 50; ++k) drift = std::max(drift, std::abs(phi.value(t.states[static_cast<std::size_t>(k)]) - v0));
    EXPECT_LT(drift, 0.05 * std::abs(v0)) << "trajectory " << t.id;
    if (++checked == 1) break;
  }
  EXPECT_EQ(checked, 1);
}

TEST(EndpointLabel, NearestStableWithinRadius) {
  std::vector<roa::FixedPointReport> pts(3);
  pts[0].location = Eigen::Vector2d(0, 0);
  pts[0].stability = Stability::AsymptoticallyStable;
  pts[1].location = Eigen::Vector2d(1, 0);
  pts[1].stability = Stability::Saddle;
  pts[2].location = Eigen::Vector2d(2, 0);
  pts[2].stability = Stability::AsymptoticallyStable;
  EXPECT_EQ(roa::endpoint_label(Eigen::Vector2d(0.05, 0), pts, 0.1), 0);
  EXPECT_EQ(roa::endpoint_label(Eigen::Vector2d(1.0, 0), pts, 0.1), -1);
  EXPECT_EQ(roa::endpoint_label(Eigen::Vector2d(1.95, 0), pts, 0.1), 2);
  EXPECT_EQ(roa::endpoint_label(Eigen::Vector2d(1.5, 0), pts, 0.1), -1);
}

TEST(Classifier, CompetitionOracleExamples) {
  const auto& report = competition_report();
  ASSERT_FALSE(report.decisions.rules.empty());
  const int b20 = stable_index_near(report, Eigen::Vector2d(2, 0));
  const int b02 = stable_index_near(report, Eigen::Vector2d(0, 2));
  ASSERT_GE(b20, 0);
  ASSERT_GE(b02, 0);
  const auto c = roa::classify_points(report.decisions, {Eigen::Vector2d(1.5, 0.5), Eigen::Vector2d(0.5, 1.5)});
  EXPECT_EQ(competition_oracle(Eigen::Vector2d(1.5, 0.5)), 0);
  EXPECT_EQ(competition_oracle(Eigen::Vector2d(0.5, 1.5)), 1);
  EXPECT_EQ(c.labels[0], b20);
  EXPECT_EQ(c.labels[1], b02);
}

TEST(Classifier, SaddlePointGoesToTarget) {
  const auto& report = competition_report();
  for (const auto& rule : report.decisions.rules) {
    EXPECT_NEAR(rule.threshold, rule.phi.value(rule.saddle), 1e-12 * std::max(1.0, std::abs(rule.threshold)));
    EXPECT_EQ(rule.score(rule.saddle), 0.0);
    EXPECT_TRUE(rule.accepts(rule.saddle));
    const auto c = roa::classify_points({{rule}, -1}, {rule.saddle});
    EXPECT_EQ(c.labels[0], rule.target);
  }
}

TEST(Classifier, InvariantUnderPositiveScaling) {
  const auto& report = competition_report();
  const auto& rule = report.decisions.rules.at(0);
  const auto& saddle = report.fixed_points.points.at(static_cast<std::size_t>(rule.saddle_index));
  std::vector<roa::LabeledPoint> training;
  for (const auto& p : report.test_points) training.push_back(p);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<dynamics::State> probes;
  for (int i = 0; i < 200; ++i) probes.push_back(Eigen::Vector2d(u(rng), u(rng)));
  for (double factor : {1e-3, 0.5, 3.0, 1e4}) {
    const auto scaled = roa::build_classifier(rule.phi.scaled(factor), saddle, rule.saddle_index, training,
                                              rule.target);
    const auto base = roa::build_classifier(rule.phi, saddle, rule.saddle_index, training, rule.target);
    EXPECT_EQ(scaled.sigma, base.sigma);
    for (const auto& x : probes) EXPECT_EQ(scaled.accepts(x), base.accepts(x)) << factor;
  }
}

TEST(Classifier, RejectsUninformativeEigenfunction) {
  const auto& report = competition_report();
  const auto& rule = report.decisions.rules.at(0);
  const auto& saddle = report.fixed_points.points.at(static_cast<std::size_t>(rule.saddle_index));
  // The trivial eigenfunction is constant, so it cannot beat chance.
  const auto& model = *report.model;
  int trivial = -1;
  for (int i = 0; i < model.size(); ++i) {
    if (std::abs(model.eigenvalues()(i) - 1.0) < 1e-9) trivial = i;
  }
  std::vector<roa::LabeledPoint> balanced;
  for (const auto& p : report.test_points) balanced.push_back(p);
  int a = 0, b = 0;
  for (const auto& p : balanced) (p.label == rule.target ? a : b)++;
  if (trivial >= 0 && a == b) {
    EXPECT_THROW(roa::build_classifier(roa::UnitaryEigenfunction::direct(model, trivial), saddle,
                                       rule.saddle_index, balanced, rule.target),
                 EmptyResult);
  }
  std::vector<roa::LabeledPoint> one_each{{Eigen::Vector2d(1.5, 0.5), rule.target},
                                          {Eigen::Vector2d(0.5, 1.5), rule.target}};
  one_each.push_back({Eigen::Vector2d(1.5, 0.6), 1 - rule.target == rule.target ? 0 : 1 - rule.target});
  one_each.push_back({Eigen::Vector2d(0.6, 1.5), one_each.back().label});
  EXPECT_THROW(roa::build_classifier(rule.phi, saddle, rule.saddle_index, one_each, rule.target),
               EmptyResult);
}

TEST(ClassifyPoints, FirstMatchThenResidual) {
  const auto& report = competition_report();
  roa::DecisionList none;
  none.residual_label = 3;
  const auto c = roa::classify_points(none, {Eigen::Vector2d(1, 1)});
  EXPECT_EQ(c.labels[0], 3);

  const auto& rule = report.decisions.rules.at(0);
  roa::SaddleClassifier flipped = rule;
  flipped.sigma = -rule.sigma;
  flipped.target = 99;
  const roa::DecisionList list{{rule, flipped}, 7};
  const std::vector<dynamics::State> pts{Eigen::Vector2d(1.5, 0.5), Eigen::Vector2d(0.5, 1.5)};
  const auto out = roa::classify_points(list, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(out.labels[i], rule.accepts(pts[i]) ? rule.target : 99);
  }
}

TEST(Pipeline, CompetitionEndToEnd) {
  const auto& report = competition_report();
  ASSERT_TRUE(report.failed_stage.empty()) << report.failure;
  int as = 0, saddles = 0, unstable = 0;
  for (const auto& p : report.fixed_points.points) {
    as += p.stability == Stability::AsymptoticallyStable;
    saddles += p.is_type_one_saddle();
    unstable += p.stability == Stability::Unstable;
  }
  EXPECT_EQ(as, 2);
  EXPECT_EQ(saddles, 1);
  EXPECT_EQ(unstable, 1);
  EXPECT_GE(report.test_evaluated, 100);
  EXPECT_GE(report.test_accuracy, 0.95);
  EXPECT_EQ(report.decisions.rules.size(), 1u);
}

TEST(Pipeline, HeldOutLabelsAgreeWithOracle) {
  const auto& report = competition_report();
  const auto& data = fixtures::competition_data().test;
  const int b20 = stable_index_near(report, Eigen::Vector2d(2, 0));
  int agree = 0, total = 0;
  for (std::size_t i = 0; i < report.test_points.size(); ++i) {
    if (report.test_points[i].label < 0) continue;
    const int oracle = competition_oracle(data.trajectories[i].states.front());
    agree += (report.test_points[i].label == b20) == (oracle == 0);
    ++total;
  }
  EXPECT_EQ(agree, total);
}

TEST(Boundary, CompetitionContourFollowsDiagonal) {
  const auto& report = competition_report();
  ASSERT_EQ(report.boundaries.size(), 1u);
  const auto& grid = report.boundaries[0];
  ASSERT_FALSE(grid.segments.empty()) << grid.diagnostic;
  double sum = 0.0;
  for (const auto& s : grid.segments) sum += std::abs(s.a[0] - s.a[1]) + std::abs(s.b[0] - s.b[1]);
  EXPECT_LE(sum / (2.0 * static_cast<double>(grid.segments.size())), 0.10);
}

TEST(Boundary, ContourVerticesSitOnTheLevel) {
  const auto& report = competition_report();
  const auto& rule = report.decisions.rules.at(0);
  const auto grid = roa::boundary_grid(rule.phi, rule.saddle, 0, 1, {0.0, 0.0}, {2.0, 2.0}, 60,
                                       Eigen::Vector2d::Zero());
  EXPECT_EQ(grid.values.rows(), 60);
  EXPECT_NEAR(grid.level, rule.phi.value(rule.saddle), 1e-12);
  double step = 0.0;
  for (Eigen::Index i = 0; i + 1 < grid.values.rows(); ++i) {
    for (Eigen::Index j = 0; j + 1 < grid.values.cols(); ++j) {
      step = std::max({step, std::abs(grid.values(i + 1, j) - grid.values(i, j)),
                       std::abs(grid.values(i, j + 1) - grid.values(i, j))});
    }
  }
  ASSERT_FALSE(grid.segments.empty());
  for (const auto& s : grid.segments) {
    for (const auto& v : {s.a, s.b}) {
      EXPECT_LE(std::abs(rule.phi.value(Eigen::Vector2d(v[0], v[1])) - grid.level), step);
    }
  }
}

TEST(Boundary, ConstantEigenfunctionGivesEmptyContour) {
  const auto model = halving_model();
  const auto phi = roa::UnitaryEigenfunction::direct(model, 0);
  Eigen::MatrixXd X(2, 40);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (Eigen::Index i = 0; i < X.cols(); ++i) X.col(i) = Eigen::Vector2d(u(rng), u(rng));
  dynamics::SnapshotPairs pairs;
  pairs.X = X;
  pairs.Y = 0.5 * X;
  const auto m2 = edmd::fit(pairs, BasisSpec(Family::Laguerre, basis::truncated_indices(2, 1, 1.0)));
  int trivial = 0;
  for (int i = 0; i < m2.size(); ++i) {
    if (std::abs(m2.eigenvalues()(i) - 1.0) < 1e-9) trivial = i;
  }
  const auto grid = roa::boundary_grid(roa::UnitaryEigenfunction::direct(m2, trivial), Eigen::Vector2d(1, 1),
                                       0, 1, {0.0, 0.0}, {2.0, 2.0}, 20, Eigen::Vector2d::Zero());
  EXPECT_TRUE(grid.segments.empty());
  EXPECT_FALSE(grid.diagnostic.empty());
  EXPECT_THROW(roa::boundary_grid(phi, Eigen::VectorXd::Zero(1), 0, 0, {0.0, 0.0}, {1.0, 1.0}, 10,
                                  Eigen::VectorXd::Zero(1)),
               InvalidInput);
}

TEST(Boundary, CsvLayout) {
  const auto& grid = competition_report().boundaries.at(0);
  std::ostringstream out;
  roa::write_boundary_csv(grid, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x_a,x_b,re_phi,on_contour");
  std::size_t rows = 0, contour = 0;
  while (std::getline(in, line)) {
    ++rows;
    contour += line.back() == '1';
  }
  EXPECT_EQ(rows, static_cast<std::size_t>(grid.values.size()) + 2 * grid.segments.size());
  EXPECT_EQ(contour, 2 * grid.segments.size());
}

TEST(Pipeline, StableLinearSystemHasNoBoundary) {
  dynamics::OdeModel linear;
  linear.name = "linear";
  linear.dimension = 2;
  linear.rhs = [](const dynamics::State& x) {
    Eigen::Matrix2d A;
    A << -0.5, 0.2, -0.1, -0.3;
    return Eigen::VectorXd(A * x);
  };
  linear.domain = {Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1)};
  linear.initial_box = linear.domain;
  const auto data = fixtures::simulate_split(linear, 60, 10.0, 5);
  roa::PipelineConfig config;
  config.p = 2;
  const auto report = roa::run_pipeline(data.train, data.test, config);
  ASSERT_TRUE(report.failed_stage.empty()) << report.failed_stage << ": " << report.failure;
  ASSERT_EQ(report.fixed_points.points.size(), 1u);
  EXPECT_EQ(report.fixed_points.points[0].stability, Stability::AsymptoticallyStable);
  EXPECT_LT(report.fixed_points.points[0].location.norm(), 1e-6);
  EXPECT_TRUE(report.boundaries.empty());
  ASSERT_FALSE(report.notes.empty());
  EXPECT_NE(std::find(report.notes.begin(), report.notes.end(), "no type-one saddle: no boundary to estimate"),
            report.notes.end());
}

TEST(Pipeline, RejectsMismatchedInputs) {
  const auto& comp = fixtures::competition_data();
  const auto report = roa::run_pipeline(comp.train, dynamics::TrajectoryDataset{}, roa::PipelineConfig{});
  EXPECT_EQ(report.failure_code, 2);
  EXPECT_FALSE(report.failed_stage.empty());
}

TEST(Pipeline, ReportJson) {
  std::ostringstream out;
  roa::write_report(competition_report(), out);
  const auto doc = nlohmann::json::parse(out.str());
  EXPECT_TRUE(doc.contains("fixed_points"));
  EXPECT_EQ(doc["fixed_points"].size(), 4u);
}

TEST(Pipeline, MakEndToEnd) {
  const auto& data = fixtures::mak_data();
  const auto report = roa::run_pipeline(data.train, data.test, fixtures::mak_config());
  ASSERT_TRUE(report.failed_stage.empty()) << report.failure;
  const auto eq = fixtures::mak_equilibria();
  const auto& pts = report.fixed_points.points;
  ASSERT_EQ(pts.size(), 5u);
  int as = 0, saddles = 0;
  const double rates_d = dynamics::kDefaultDilution;
  const Eigen::VectorXd k = dynamics::default_mak_rates();
  auto rhs = [&](const Eigen::VectorXd& x) { return dynamics::mak_rhs(x, k, rates_d); };
  for (const auto& p : pts) {
    as += p.stability == Stability::AsymptoticallyStable;
    saddles += p.is_type_one_saddle();
    const auto [i, dist] = fixtures::nearest(eq, p.location);
    EXPECT_LE(dist, 0.06);
    const auto oracle = fixtures::discrete_magnitudes(fixtures::rhs_jacobian(rhs, eq[static_cast<std::size_t>(i)]), 0.1);
    EXPECT_EQ(p.stability, oracle_class(oracle)) << "equilibrium " << i;
  }
  EXPECT_EQ(as, 3);
  EXPECT_EQ(saddles, 2);
  EXPECT_GE(report.test_accuracy, 0.85);
  for (const auto& c : report.candidates) {
    if (c.direct) EXPECT_LT(std::abs(c.mu - 1.0), 5e-3);
  }
}
