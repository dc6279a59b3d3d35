#pragma once

// Extended dynamic mode decomposition: a finite Koopman matrix fitted on a
// polynomial dictionary, its spectrum, eigenfunctions and flow maps.

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kroa/basis.hpp"
#include "kroa/dynamics.hpp"

namespace kroa::edmd {

using Complex = std::complex<double>;
using basis::BasisSpec;
using dynamics::SnapshotPairs;
using dynamics::State;
using dynamics::TrajectoryDataset;

struct MomentMatrices {
  Eigen::MatrixXd G;  // (1/N) sum Psi(x) Psi(x)^T
  Eigen::MatrixXd A;  // (1/N) sum Psi(y) Psi(x)^T
  Eigen::Index N = 0;
};

/// Chunked accumulation, merged in a fixed pairwise tree so the result does
/// not depend on the worker count. Throws NumericalError naming the first
/// pair whose dictionary values are not finite.
MomentMatrices accumulate_moments(const SnapshotPairs& pairs, const BasisSpec& spec);

struct FitOptions {
  /// Eigenvalues of G below rtol * max eigenvalue are dropped from G^+.
  double rtol = 1e-10;
  /// Cholesky solve is used while cond(G) stays below this.
  double cholesky_condition_limit = 1e8;
};

struct FitDiagnostics {
  std::int64_t pair_count = 0;
  int dictionary_size = 0;
  /// (1/N) sum ||Psi(y) - U Psi(x)||^2 over the training pairs.
  double residual = 0.0;
  /// residual divided by (1/N) sum ||Psi(y)||^2.
  double relative_residual = 0.0;
  double g_condition = 0.0;
  int g_rank = 0;
  bool cholesky = false;
  /// ||U Xi - Xi diag(mu)|| / ||U||.
  double spectral_residual = 0.0;
  std::vector<std::string> warnings;
};

/// Linear map x -> flow(x, k) precomputed for one k: the real n x d matrix
/// Re(B Xi diag(mu)^k W) followed by the injective inverse.
class FlowOperator {
 public:
  FlowOperator(BasisSpec spec, Eigen::MatrixXd map, int steps)
      : spec_(std::move(spec)), map_(std::move(map)), steps_(steps) {}

  int steps() const { return steps_; }
  const Eigen::MatrixXd& matrix() const { return map_; }
  State operator()(const State& x) const;

 private:
  BasisSpec spec_;
  Eigen::MatrixXd map_;
  int steps_ = 0;
};

class KoopmanModel {
 public:
  KoopmanModel() = default;
  /// Decomposes U, normalizes and orders the spectrum, validates.
  KoopmanModel(BasisSpec spec, Eigen::MatrixXd koopman, FitDiagnostics diagnostics);
  /// Rebuilds from a stored decomposition (no re-decomposition); validates.
  KoopmanModel(BasisSpec spec, Eigen::MatrixXd koopman, Eigen::VectorXcd eigenvalues,
               Eigen::MatrixXcd eigenvectors, FitDiagnostics diagnostics);

  const BasisSpec& spec() const { return spec_; }
  int dimension() const { return spec_.dimension(); }
  int size() const { return spec_.size(); }
  const Eigen::MatrixXd& koopman_matrix() const { return U_; }
  /// Sorted by descending |mu|, then descending real part, then descending
  /// imaginary part.
  const Eigen::VectorXcd& eigenvalues() const { return mu_; }
  /// Right eigenvectors (modes) as columns, unit norm, largest entry real positive.
  const Eigen::MatrixXcd& eigenvectors() const { return Xi_; }
  /// W = Xi^{-1}; row i gives phi_i = W.row(i) Psi.
  const Eigen::MatrixXcd& left_eigenvectors() const { return W_; }
  const FitDiagnostics& diagnostics() const { return diag_; }
  FitDiagnostics& diagnostics() { return diag_; }

  /// Phi(x) = W Psi(x).
  Eigen::VectorXcd eigenfunctions(const State& x) const;
  /// phi_i(x) for a single index.
  Complex eigenfunction(int i, const State& x) const;
  /// Re(Xi diag(mu)^k Phi(x)); k < 0 evolves backwards. Throws NumericalError
  /// when the discarded imaginary part exceeds 1e-6 relative or when k < 0
  /// meets an eigenvalue below 1e-12 in magnitude.
  Eigen::VectorXd predict_observables(const State& x, int k) const;
  State flow(const State& x, int k) const;
  FlowOperator flow_operator(int k) const;

  /// Re-checks the spectral invariants; throws NumericalError on failure.
  void validate() const;

 private:
  void finish();

  BasisSpec spec_;
  Eigen::MatrixXd U_;
  Eigen::VectorXcd mu_;
  Eigen::MatrixXcd Xi_;
  Eigen::MatrixXcd W_;
  FitDiagnostics diag_;
};

/// Least-squares Koopman matrix U = A G^+ from snapshot pairs.
KoopmanModel fit(const SnapshotPairs& pairs, const BasisSpec& spec, const FitOptions& options = {});

struct TrajectoryError {
  int trajectory_id = 0;
  int horizon = 0;  // K_i
  double mean_relative_error = 0.0;
};

struct ErrorReport {
  double e = 0.0;
  int trajectory_count = 0;
  std::int64_t evaluated_samples = 0;
  std::int64_t skipped_samples = 0;
  std::vector<TrajectoryError> per_trajectory;
};

/// e = (1/sum K_i) sum_i sum_{k=1..K_i} |x_i(k) - flow(x_i(0), k)| / |x_i(k)|.
/// Samples with |x_i(k)| < 1e-9 are skipped and counted.
ErrorReport empirical_error(const KoopmanModel& model, const TrajectoryDataset& test);

struct SweepRow {
  int p = 0;
  double q = 0.0;
  int d = 0;
  double e = std::numeric_limits<double>::infinity();
  std::string failure;  // empty on success
};

/// One fit per (p, q); rows ascending by e, failures last with e = +inf.
/// Throws EmptyResult when every candidate fails.
std::vector<SweepRow> pq_sweep(const SnapshotPairs& train, const TrajectoryDataset& test,
                               const std::vector<int>& p_candidates,
                               const std::vector<double>& q_candidates, basis::Family family,
                               const basis::DomainScale& scale = basis::DomainScale::identity(),
                               const FitOptions& options = {});

// Model file: versioned JSON document.
void write_model(const KoopmanModel& model, std::ostream& out);
void save_model(const KoopmanModel& model, const std::string& path);
KoopmanModel read_model(std::istream& in);
KoopmanModel load_model(const std::string& path);

}  // namespace kroa::edmd
