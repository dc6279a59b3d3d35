#pragma once

// Regions of attraction from a fitted Koopman model: fixed points and their
// stability, unitary eigenfunctions, saddle level-set classifiers, boundary
// grids and the end-to-end pipeline.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kroa/basis.hpp"
#include "kroa/dynamics.hpp"
#include "kroa/edmd.hpp"

namespace kroa::roa {

using dynamics::State;
using edmd::Complex;
using edmd::KoopmanModel;

// ---------------------------------------------------------------------------
// Fixed points

/// J(x) = 0.5 ||flow(x, k) - x||^2.
double residual_objective(const KoopmanModel& model, const State& x, int k = 1);

enum class Stability { Unclassified, AsymptoticallyStable, Unstable, Saddle, NonHyperbolic };

struct FixedPointReport {
  State location;
  double residual = 0.0;
  /// |lambda_i| of the local Jacobian, descending.
  Eigen::VectorXd magnitudes;
  Stability stability = Stability::Unclassified;
  /// Number of magnitudes above one.
  int unstable_count = 0;
  double hyperbolicity_margin = 0.0;

  bool is_type_one_saddle() const { return stability == Stability::Saddle && unstable_count == 1; }
};

/// "AS", "Unstable", "Saddle(k)", "NonHyperbolic" or "Unclassified".
std::string stability_label(const FixedPointReport& point);

struct FixedPointOptions {
  double tol_J = 1e-8;
  double merge_distance = 1e-2;
  int steps = 1;
  /// Simplex edge as a fraction of the per-coordinate spread of the starts.
  double simplex_scale = 0.05;
  int max_simplex_iterations = 600;
  int max_polish_iterations = 30;
};

struct FixedPointSearch {
  std::vector<FixedPointReport> points;  // lexicographic by location
  int starts = 0;
  int accepted = 0;
  /// Smallest J among rejected minima (+inf when none were rejected).
  double best_rejected = 0.0;
};

/// Simplex descent on J from every start, then Gauss-Newton polish. Minima
/// with J < tol_J are kept; minima closer than merge_distance collapse onto
/// the one with smallest J.
FixedPointSearch find_fixed_points(const KoopmanModel& model, const std::vector<State>& starts,
                                   const FixedPointOptions& options = {});

/// Up to `spread` samples chosen by farthest-point sampling over all states,
/// plus up to `slow` mutually distinct samples with the smallest one-step
/// displacement.
std::vector<State> default_starts(const dynamics::TrajectoryDataset& data, std::uint64_t seed,
                                  int spread = 64, int slow = 64);

/// Central differences of x -> flow(x, 1), h_j = eps^(1/3) max(1, |x_j|).
Eigen::MatrixXd local_jacobian(const KoopmanModel& model, const State& x);

struct StabilityClass {
  Stability stability = Stability::Unclassified;
  int unstable_count = 0;
  double margin = 0.0;
  Eigen::VectorXd magnitudes;
};

StabilityClass classify_stability(const Eigen::MatrixXd& H, double eps_hyp = 1e-3);
StabilityClass classify_magnitudes(Eigen::VectorXd magnitudes, double eps_hyp = 1e-3);

/// Fills magnitudes and class of every point.
void classify_fixed_points(const KoopmanModel& model, std::vector<FixedPointReport>& points,
                           double eps_hyp = 1e-3);

// ---------------------------------------------------------------------------
// Unitary eigenfunctions

struct UnitaryCandidate {
  int index = 0;
  Complex mu;
  double distance = 0.0;  // |mu - 1|
  bool real_positive = false;
  bool direct = false;  // |mu - 1| < eps_unit
  double relative_spread = 0.0;
};

/// Non-trivial eigenfunctions ranked by |mu - 1|. An eigenfunction is trivial
/// when std(Re phi) / |mean(Re phi)| over `states` (columns) is below
/// trivial_tolerance. Throws EmptyResult when nothing non-trivial remains.
std::vector<UnitaryCandidate> select_unitary_candidates(const KoopmanModel& model,
                                                        const Eigen::MatrixXd& states,
                                                        double eps_unit = 5e-3,
                                                        double trivial_tolerance = 1e-6);

/// k2 such that mu1 * mu2^k2 = 1 (k1 = 1).
double unitary_exponent(double mu1, double mu2);

/// phi_+ = phi_1 * sign(phi_2) * |phi_2|^k2, or phi_1 alone when direct. Holds
/// its own copy of the dictionary and real coefficient rows, so it outlives
/// the model it came from.
class UnitaryEigenfunction {
 public:
  UnitaryEigenfunction() = default;

  static UnitaryEigenfunction direct(const KoopmanModel& model, int index);
  static UnitaryEigenfunction product(const KoopmanModel& model, int i1, int i2);

  bool is_direct() const { return i2_ < 0; }
  int first() const { return i1_; }
  int second() const { return i2_; }
  double k1() const { return 1.0; }
  double k2() const { return k2_; }
  double mu1() const { return mu1_; }
  double mu2() const { return mu2_; }
  /// mu1 * mu2^k2 (mu1 when direct).
  double mu_bar() const;
  const Eigen::VectorXd& coefficients() const { return w1_; }
  const Eigen::VectorXd& second_coefficients() const { return w2_; }
  const basis::BasisSpec& spec() const { return spec_; }

  /// Real value of phi_+ at x.
  double value(const State& x) const;
  /// sign(phi_2(x)) in {-1, +1}; always +1 when direct.
  int branch(const State& x) const;
  /// Same eigenfunction with phi_1's coefficients multiplied by factor.
  UnitaryEigenfunction scaled(double factor) const;

 private:
  basis::BasisSpec spec_;
  int i1_ = -1;
  int i2_ = -1;
  double mu1_ = 1.0;
  double mu2_ = 1.0;
  double k2_ = 0.0;
  Eigen::VectorXd w1_;
  Eigen::VectorXd w2_;
};

Complex eval_unitary(const UnitaryEigenfunction& phi, const State& x);

// ---------------------------------------------------------------------------
// Classification

struct LabeledPoint {
  State x;
  int label = -1;  // index of a stable fixed point, -1 when unresolved
};

/// Nearest stable fixed point within `radius` of the final state, else -1.
int endpoint_label(const State& final_state, const std::vector<FixedPointReport>& points,
                   double radius);

struct SaddleClassifier {
  UnitaryEigenfunction phi;
  State saddle;
  int saddle_index = -1;
  double threshold = 0.0;
  int sigma = 1;
  int saddle_branch = 1;
  int target = -1;
  double training_accuracy = 0.0;

  /// sigma * (Re phi_+(x) - c); points on another branch of sign(phi_2)
  /// score sigma * (sign(Re phi_+(x)) - sign(c)).
  double score(const State& x) const;
  bool accepts(const State& x) const { return score(x) >= 0.0; }
};

/// Threshold at the saddle, sigma calibrated on the binary task "label ==
/// target". Throws EmptyResult when the best accuracy is <= 0.5.
SaddleClassifier build_classifier(const UnitaryEigenfunction& phi, const FixedPointReport& saddle,
                                  int saddle_index, const std::vector<LabeledPoint>& training,
                                  int target);

struct DecisionList {
  std::vector<SaddleClassifier> rules;
  int residual_label = -1;
};

struct Classification {
  std::vector<int> labels;
  std::vector<double> scores;
};

/// First matching rule wins; otherwise the residual label.
Classification classify_points(const DecisionList& list, const std::vector<State>& points);

/// One rule per saddle, up to one fewer rules than there are basins. Every
/// ordering of saddles and targets, with every candidate and orientation per
/// rule, is scored on the training points with each basin weighted equally;
/// the best list wins. The residual label is the majority among unclaimed
/// points. Larger searches fall back to greedy rule-by-rule calibration.
DecisionList build_decision_list(const std::vector<UnitaryEigenfunction>& candidates,
                                 const std::vector<FixedPointReport>& points,
                                 const std::vector<LabeledPoint>& training);

// ---------------------------------------------------------------------------
// Boundary grids

struct ContourSegment {
  std::array<double, 2> a;
  std::array<double, 2> b;
};

struct BoundaryGrid {
  int axis_a = 0;
  int axis_b = 1;
  Eigen::VectorXd xs;      // axis_a coordinates
  Eigen::VectorXd ys;      // axis_b coordinates
  Eigen::MatrixXd values;  // values(i, j) at (xs(i), ys(j))
  double level = 0.0;
  std::vector<ContourSegment> segments;
  std::string diagnostic;
};

/// Re phi_+ on a resolution x resolution grid over [lower, upper] in the two
/// axes (other coordinates taken from `frozen`), plus the marching-squares
/// contour at level phi_+(saddle).
BoundaryGrid boundary_grid(const UnitaryEigenfunction& phi, const State& saddle, int axis_a,
                           int axis_b, const std::array<double, 2>& lower,
                           const std::array<double, 2>& upper, int resolution,
                           const State& frozen);

/// CSV x_a,x_b,re_phi,on_contour: grid nodes (flag 0) then contour vertices (flag 1).
void write_boundary_csv(const BoundaryGrid& grid, std::ostream& out);

// ---------------------------------------------------------------------------
// Pipeline

struct RoaOptions {
  FixedPointOptions fixed_points;
  double eps_hyp = 1e-3;
  double eps_unit = 5e-3;
  /// Ranked non-direct candidates paired into products (one above, one below 1).
  int max_pairs = 4;
  /// Candidates tried per saddle when building the decision list.
  int max_candidates = 8;
  /// Endpoint labels use a radius of label_radius_factor * merge_distance.
  double label_radius_factor = 10.0;
};

struct PipelineConfig {
  basis::Family family = basis::Family::Laguerre;
  int p = 4;
  double q = 1.0;
  /// Non-empty lists switch the fit stage to a p-q sweep.
  std::vector<int> sweep_p;
  std::vector<double> sweep_q;
  basis::DomainScale scale;
  edmd::FitOptions fit;
  RoaOptions roa;
  std::uint64_t seed = 0;
  /// Boundary grid axes; defaults to (0, 1) for two-dimensional data.
  std::optional<std::array<int, 2>> boundary_axes;
  std::optional<std::array<double, 2>> boundary_lower;
  std::optional<std::array<double, 2>> boundary_upper;
  std::optional<State> boundary_frozen;
  int boundary_resolution = 200;
};

struct PipelineReport {
  std::optional<KoopmanModel> model;
  std::vector<edmd::SweepRow> sweep;
  std::optional<edmd::ErrorReport> error;
  FixedPointSearch fixed_points;
  std::vector<UnitaryCandidate> candidates;
  DecisionList decisions;
  std::vector<LabeledPoint> test_points;
  std::vector<int> test_predictions;
  double test_accuracy = 0.0;
  int test_evaluated = 0;
  std::vector<BoundaryGrid> boundaries;
  std::vector<std::string> notes;

  /// Empty on success; otherwise the stage that failed.
  std::string failed_stage;
  std::string failure;
  /// 2 invalid input, 3 numerical failure, 4 empty result.
  int failure_code = 0;
};

/// fit (or sweep) -> fixed points -> stability -> unitary candidates ->
/// decision list -> test labels -> boundary grids. A failing stage stops the
/// run and is recorded in the report with everything computed so far.
PipelineReport run_pipeline(const dynamics::TrajectoryDataset& train,
                            const dynamics::TrajectoryDataset& test, const PipelineConfig& config);

/// Same stages on an already fitted model; the fit stage only evaluates the
/// empirical error on `test`.
PipelineReport run_pipeline(const KoopmanModel& model, const dynamics::TrajectoryDataset& train,
                            const dynamics::TrajectoryDataset& test, const PipelineConfig& config);

/// Versioned JSON summary (the model itself is stored separately).
void write_report(const PipelineReport& report, std::ostream& out);

}  // namespace kroa::roa
