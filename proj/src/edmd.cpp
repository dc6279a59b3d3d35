#include "kroa/edmd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kroa/detail/parallel.hpp"
#include "kroa/error.hpp"

namespace kroa::edmd {

namespace {

constexpr Eigen::Index kChunk = 2048;

Complex int_power(Complex base, int k) {
  if (k < 0) return 1.0 / int_power(base, -k);
  Complex result = 1.0;
  while (k > 0) {
    if (k & 1) result *= base;
    base *= base;
    k >>= 1;
  }
  return result;
}

/// Dictionary values of columns [start, start + count) of X, one per column.
void evaluate_columns(const BasisSpec& spec, const Eigen::MatrixXd& X, Eigen::Index start,
                      Eigen::Index count, Eigen::MatrixXd& out) {
  out.resize(spec.size(), count);
  for (Eigen::Index c = 0; c < count; ++c) {
    spec.evaluate_into(X.col(start + c), out.col(c));
    if (!out.col(c).allFinite()) {
      throw NumericalError("dictionary is not finite at snapshot pair " +
                           std::to_string(start + c));
    }
  }
}

template <typename T, typename Merge>
T tree_reduce(std::vector<T> parts, Merge merge) {
  while (parts.size() > 1) {
    std::vector<T> next;
    next.reserve((parts.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
      next.push_back(merge(std::move(parts[i]), std::move(parts[i + 1])));
    }
    if (parts.size() % 2 == 1) next.push_back(std::move(parts.back()));
    parts = std::move(next);
  }
  return std::move(parts.front());
}

void check_pairs(const SnapshotPairs& pairs, const BasisSpec& spec) {
  if (pairs.count() < 1) throw InvalidInput("no snapshot pairs");
  if (pairs.dimension() != spec.dimension()) {
    throw InvalidInput("snapshot dimension " + std::to_string(pairs.dimension()) +
                       " does not match basis dimension " + std::to_string(spec.dimension()));
  }
  if (pairs.Y.rows() != pairs.X.rows() || pairs.Y.cols() != pairs.X.cols()) {
    throw InvalidInput("snapshot matrices X and Y differ in shape");
  }
}

}  // namespace

MomentMatrices accumulate_moments(const SnapshotPairs& pairs, const BasisSpec& spec) {
  check_pairs(pairs, spec);
  const Eigen::Index N = pairs.count();
  const int d = spec.size();
  const auto chunks = static_cast<std::size_t>((N + kChunk - 1) / kChunk);

  struct Partial {
    Eigen::MatrixXd G, A;
  };
  std::vector<Partial> parts(chunks);
  detail::parallel_for(chunks, [&](std::size_t c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * kChunk;
    const Eigen::Index count = std::min(kChunk, N - start);
    Eigen::MatrixXd px, py;
    evaluate_columns(spec, pairs.X, start, count, px);
    evaluate_columns(spec, pairs.Y, start, count, py);
    parts[c].G = Eigen::MatrixXd::Zero(d, d);
    parts[c].G.selfadjointView<Eigen::Lower>().rankUpdate(px);
    parts[c].G.triangularView<Eigen::StrictlyUpper>() =
        parts[c].G.transpose().triangularView<Eigen::StrictlyUpper>();
    parts[c].A.noalias() = py * px.transpose();
  });
  Partial total = tree_reduce(std::move(parts), [](Partial a, Partial b) {
    a.G += b.G;
    a.A += b.A;
    return a;
  });
  MomentMatrices m;
  m.N = N;
  m.G = total.G / static_cast<double>(N);
  m.A = total.A / static_cast<double>(N);
  return m;
}

State FlowOperator::operator()(const State& x) const {
  return spec_.invert_injective(map_ * spec_.evaluate(x));
}

KoopmanModel::KoopmanModel(BasisSpec spec, Eigen::MatrixXd koopman, FitDiagnostics diagnostics)
    : spec_(std::move(spec)), U_(std::move(koopman)), diag_(std::move(diagnostics)) {
  const int d = spec_.size();
  if (U_.rows() != d || U_.cols() != d) {
    throw InvalidInput("Koopman matrix shape does not match dictionary size");
  }
  if (!U_.allFinite()) throw NumericalError("Koopman matrix has non-finite entries");
  Eigen::EigenSolver<Eigen::MatrixXd> es(U_, true);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of U did not converge");
  mu_ = es.eigenvalues();
  Xi_ = es.eigenvectors();
  finish();
}

KoopmanModel::KoopmanModel(BasisSpec spec, Eigen::MatrixXd koopman, Eigen::VectorXcd eigenvalues,
                           Eigen::MatrixXcd eigenvectors, FitDiagnostics diagnostics)
    : spec_(std::move(spec)),
      U_(std::move(koopman)),
      mu_(std::move(eigenvalues)),
      Xi_(std::move(eigenvectors)),
      diag_(std::move(diagnostics)) {
  const int d = spec_.size();
  if (U_.rows() != d || U_.cols() != d || mu_.size() != d || Xi_.rows() != d ||
      Xi_.cols() != d) {
    throw InvalidInput("stored spectrum shape does not match dictionary size " +
                       std::to_string(d));
  }
  W_ = Xi_.partialPivLu().inverse();
  validate();
}

void KoopmanModel::finish() {
  const Eigen::Index d = mu_.size();
  // Unit columns, phase chosen so the largest-magnitude entry is real positive.
  for (Eigen::Index i = 0; i < d; ++i) {
    auto col = Xi_.col(i);
    const double norm = col.norm();
    if (!(norm > 0.0)) throw NumericalError("zero eigenvector");
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    const Complex phase = col(arg) / std::abs(col(arg));
    col /= phase * norm;
    col(arg) = Complex(col(arg).real(), 0.0);
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double ma = std::abs(mu_(a));
    const double mb = std::abs(mu_(b));
    if (ma != mb) return ma > mb;
    if (mu_(a).real() != mu_(b).real()) return mu_(a).real() > mu_(b).real();
    return mu_(a).imag() > mu_(b).imag();
  });
  Eigen::VectorXcd mu(d);
  Eigen::MatrixXcd xi(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    mu(i) = mu_(order[static_cast<std::size_t>(i)]);
    xi.col(i) = Xi_.col(order[static_cast<std::size_t>(i)]);
  }
  mu_ = std::move(mu);
  Xi_ = std::move(xi);
  W_ = Xi_.partialPivLu().inverse();
  const double unorm = std::max(U_.norm(), std::numeric_limits<double>::min());
  diag_.spectral_residual =
      (U_.cast<Complex>() * Xi_ - Xi_ * mu_.asDiagonal()).norm() / unorm;
  validate();
}

void KoopmanModel::validate() const {
  const Eigen::Index d = mu_.size();
  if (!mu_.allFinite() || !Xi_.allFinite() || !W_.allFinite()) {
    throw NumericalError("spectrum has non-finite entries");
  }
  const double unorm = std::max(U_.norm(), std::numeric_limits<double>::min());
  const Eigen::MatrixXcd Uc = U_.cast<Complex>();
  const double right = (Uc * Xi_ - Xi_ * mu_.asDiagonal()).norm() / unorm;
  if (!(right < 1e-8)) {
    throw NumericalError("right eigenvectors fail U Xi = Xi diag(mu): residual " +
                         std::to_string(right));
  }
  const double left = (W_ * Uc - mu_.asDiagonal() * W_).norm() / unorm;
  if (!(left < 1e-8)) {
    throw NumericalError("left eigenvectors fail W U = diag(mu) W: residual " +
                         std::to_string(left));
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    const double scale = std::max(1.0, std::abs(mu_(i)));
    if (std::abs(mu_(i).imag()) <= 1e-12 * scale) continue;
    bool paired = false;
    for (Eigen::Index j = 0; j < d && !paired; ++j) {
      paired = j != i && std::abs(mu_(j) - std::conj(mu_(i))) <= 1e-8 * scale;
    }
    if (!paired) throw NumericalError("spectrum lacks conjugate-pair symmetry");
  }
}

Eigen::VectorXcd KoopmanModel::eigenfunctions(const State& x) const {
  return W_ * spec_.evaluate(x).cast<Complex>();
}

Complex KoopmanModel::eigenfunction(int i, const State& x) const {
  if (i < 0 || i >= size()) throw InvalidInput("eigenfunction index out of range");
  return W_.row(i) * spec_.evaluate(x).cast<Complex>();
}

namespace {

void check_backward(const Eigen::VectorXcd& mu, int k) {
  if (k >= 0) return;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (std::abs(mu(i)) < 1e-12) {
      throw NumericalError("backward flow is singular: eigenvalue " + std::to_string(i) +
                           " is below 1e-12 in magnitude");
    }
  }
}

Eigen::VectorXcd powers(const Eigen::VectorXcd& mu, int k) {
  Eigen::VectorXcd out(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) out(i) = int_power(mu(i), k);
  return out;
}

}  // namespace

Eigen::VectorXd KoopmanModel::predict_observables(const State& x, int k) const {
  check_backward(mu_, k);
  const Eigen::VectorXcd z = Xi_ * powers(mu_, k).cwiseProduct(eigenfunctions(x));
  const Eigen::VectorXd re = z.real();
  if (z.imag().norm() > 1e-6 * std::max(re.norm(), 1e-300)) {
    throw NumericalError("prediction keeps an imaginary part above 1e-6 relative");
  }
  return re;
}

State KoopmanModel::flow(const State& x, int k) const {
  return spec_.invert_injective(spec_.select_injective(predict_observables(x, k)));
}

FlowOperator KoopmanModel::flow_operator(int k) const {
  check_backward(mu_, k);
  const int n = dimension();
  Eigen::MatrixXcd rows(n, size());
  for (const auto& pos : spec_.injective_positions()) rows.row(pos.coordinate) = Xi_.row(pos.position);
  const Eigen::MatrixXcd map = rows * powers(mu_, k).asDiagonal() * W_;
  const Eigen::MatrixXd re = map.real();
  if (map.imag().norm() > 1e-6 * std::max(re.norm(), 1e-300)) {
    throw NumericalError("flow map keeps an imaginary part above 1e-6 relative");
  }
  return FlowOperator(spec_, re, k);
}

KoopmanModel fit(const SnapshotPairs& pairs, const BasisSpec& spec, const FitOptions& options) {
  if (!(options.rtol > 0.0) || !(options.cholesky_condition_limit > 0.0)) {
    throw InvalidInput("fit tolerances must be positive");
  }
  const MomentMatrices m = accumulate_moments(pairs, spec);
  const int d = spec.size();
  const int n = spec.dimension();

  FitDiagnostics diag;
  diag.pair_count = m.N;
  diag.dictionary_size = d;
  if (m.N < d) {
    diag.warnings.push_back("fewer snapshot pairs (" + std::to_string(m.N) +
                            ") than dictionary elements (" + std::to_string(d) + ")");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.G);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of G failed");
  const Eigen::VectorXd lambda = es.eigenvalues();
  const double top = lambda.maxCoeff();
  if (!(top > 0.0)) throw NumericalError("G is zero; the data carry no information");
  const double cutoff = options.rtol * top;
  diag.g_rank = static_cast<int>((lambda.array() > cutoff).count());
  const double bottom = lambda.minCoeff();
  diag.g_condition = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
  if (diag.g_rank < n + 1) {
    throw NumericalError("G has numerical rank " + std::to_string(diag.g_rank) +
                         ", below the " + std::to_string(n + 1) +
                         " needed for state recovery; use a smaller p or q");
  }
  if (diag.g_rank < d) {
    diag.warnings.push_back("G is rank deficient (" + std::to_string(diag.g_rank) + " of " +
                            std::to_string(d) + "); consider a smaller p or q");
  }

  Eigen::MatrixXd U;
  if (diag.g_condition < options.cholesky_condition_limit) {
    Eigen::LLT<Eigen::MatrixXd> llt(m.G);
    if (llt.info() == Eigen::Success) {
      U = llt.solve(m.A.transpose()).transpose();
      diag.cholesky = true;
    }
  }
  if (!diag.cholesky) {
    const Eigen::MatrixXd& V = es.eigenvectors();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) {
      if (lambda(i) > cutoff) inv(i) = 1.0 / lambda(i);
    }
    U = (m.A * V) * inv.asDiagonal() * V.transpose();
  }

  // Training residual, in a second chunked pass.
  const Eigen::Index N = pairs.count();
  const auto chunks = static_cast<std::size_t>((N + kChunk - 1) / kChunk);
  std::vector<std::pair<double, double>> sums(chunks);
  detail::parallel_for(chunks, [&](std::size_t c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * kChunk;
    const Eigen::Index count = std::min(kChunk, N - start);
    Eigen::MatrixXd px, py;
    evaluate_columns(spec, pairs.X, start, count, px);
    evaluate_columns(spec, pairs.Y, start, count, py);
    sums[c] = {(py - U * px).squaredNorm(), py.squaredNorm()};
  });
  const auto total = tree_reduce(std::move(sums), [](auto a, auto b) {
    return std::pair{a.first + b.first, a.second + b.second};
  });
  diag.residual = total.first / static_cast<double>(N);
  diag.relative_residual = total.second > 0.0 ? total.first / total.second : 0.0;

  return KoopmanModel(spec, std::move(U), std::move(diag));
}

ErrorReport empirical_error(const KoopmanModel& model, const TrajectoryDataset& test) {
  if (test.trajectories.empty()) throw InvalidInput("empty test set");
  if (test.dimension() != model.dimension()) {
    throw InvalidInput("test data dimension does not match the model");
  }
  std::size_t horizon = 0;
  for (const auto& t : test.trajectories) {
    if (t.states.size() < 2) throw InvalidInput("test trajectory with fewer than 2 samples");
    horizon = std::max(horizon, t.states.size() - 1);
  }
  std::vector<Eigen::MatrixXd> maps(horizon + 1);
  detail::parallel_for(horizon, [&](std::size_t k) {
    maps[k + 1] = model.flow_operator(static_cast<int>(k + 1)).matrix();
  });

  struct Partial {
    double sum = 0.0;
    std::int64_t used = 0;
    std::int64_t skipped = 0;
  };
  const auto& spec = model.spec();
  std::vector<Partial> parts(test.trajectories.size());
  detail::parallel_for(test.trajectories.size(), [&](std::size_t i) {
    const auto& states = test.trajectories[i].states;
    const Eigen::VectorXd psi0 = spec.evaluate(states.front());
    for (std::size_t k = 1; k < states.size(); ++k) {
      const double ref = states[k].norm();
      if (ref < 1e-9) {
        ++parts[i].skipped;
        continue;
      }
      const State predicted = spec.invert_injective(maps[k] * psi0);
      parts[i].sum += (states[k] - predicted).norm() / ref;
      ++parts[i].used;
    }
  });

  ErrorReport report;
  report.trajectory_count = static_cast<int>(test.trajectories.size());
  double total = 0.0;
  std::int64_t horizon_sum = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& t = test.trajectories[i];
    const int K = static_cast<int>(t.states.size()) - 1;
    horizon_sum += K;
    total += parts[i].sum;
    report.evaluated_samples += parts[i].used;
    report.skipped_samples += parts[i].skipped;
    report.per_trajectory.push_back(
        {t.id, K, parts[i].used > 0 ? parts[i].sum / static_cast<double>(parts[i].used) : 0.0});
  }
  report.e = total / static_cast<double>(horizon_sum);
  if (std::isnan(report.e)) report.e = std::numeric_limits<double>::infinity();
  return report;
}

std::vector<SweepRow> pq_sweep(const SnapshotPairs& train, const TrajectoryDataset& test,
                               const std::vector<int>& p_candidates,
                               const std::vector<double>& q_candidates, basis::Family family,
                               const basis::DomainScale& scale, const FitOptions& options) {
  if (p_candidates.empty() || q_candidates.empty()) {
    throw InvalidInput("sweep needs at least one p and one q candidate");
  }
  std::vector<SweepRow> rows;
  for (int p : p_candidates) {
    for (double q : q_candidates) rows.push_back({p, q, 0, 0.0, {}});
  }
  const int n = train.dimension();
  detail::parallel_for(rows.size(), [&](std::size_t r) {
    SweepRow& row = rows[r];
    try {
      BasisSpec spec(family, basis::truncated_indices(n, row.p, row.q), scale);
      row.d = spec.size();
      const KoopmanModel model = fit(train, spec, options);
      row.e = empirical_error(model, test).e;
    } catch (const std::exception& ex) {
      row.e = std::numeric_limits<double>::infinity();
      row.failure = ex.what();
    }
  });
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.e < b.e; });
  if (std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.failure.empty(); })) {
    throw EmptyResult("every sweep candidate failed; first failure: " + rows.front().failure);
  }
  return rows;
}

}  // namespace kroa::edmd
