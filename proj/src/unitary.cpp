#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kroa/error.hpp"
#include "kroa/roa.hpp"

namespace kroa::roa {

namespace {

bool real_positive(Complex mu) {
  return std::abs(mu.imag()) <= 1e-10 * std::max(1.0, std::abs(mu)) && mu.real() > 0.0;
}

Eigen::VectorXd real_row(const KoopmanModel& model, int index) {
  if (index < 0 || index >= model.size()) throw InvalidInput("eigenfunction index out of range");
  const Eigen::RowVectorXcd row = model.left_eigenvectors().row(index);
  const Eigen::VectorXd re = row.real().transpose();
  if (row.imag().norm() > 1e-8 * std::max(re.norm(), 1e-300)) {
    throw InvalidInput("eigenfunction " + std::to_string(index) + " is not real");
  }
  return re;
}

}  // namespace

std::vector<UnitaryCandidate> select_unitary_candidates(const KoopmanModel& model,
                                                        const Eigen::MatrixXd& states,
                                                        double eps_unit,
                                                        double trivial_tolerance) {
  if (model.size() < 2) throw InvalidInput("model needs at least two eigenvalues");
  if (states.rows() != model.dimension() || states.cols() < 2) {
    throw InvalidInput("candidate selection needs at least two states of the model dimension");
  }
  const auto& spec = model.spec();
  Eigen::MatrixXd psi(spec.size(), states.cols());
  for (Eigen::Index c = 0; c < states.cols(); ++c) spec.evaluate_into(states.col(c), psi.col(c));
  const Eigen::MatrixXd phi = model.left_eigenvectors().real() * psi;

  std::vector<UnitaryCandidate> out;
  const auto m = static_cast<double>(states.cols());
  for (int i = 0; i < model.size(); ++i) {
    const Eigen::RowVectorXd v = phi.row(i);
    const double mean = v.mean();
    const double stdev = std::sqrt((v.array() - mean).square().sum() / m);
    const double spread = std::abs(mean) > 0.0 ? stdev / std::abs(mean)
                                               : std::numeric_limits<double>::infinity();
    if (spread < trivial_tolerance) continue;
    UnitaryCandidate c;
    c.index = i;
    c.mu = model.eigenvalues()(i);
    c.distance = std::abs(c.mu - 1.0);
    c.real_positive = real_positive(c.mu);
    c.direct = c.real_positive && c.distance < eps_unit;
    c.relative_spread = spread;
    out.push_back(c);
  }
  if (out.empty()) throw EmptyResult("model has only trivial eigenfunctions");
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.distance < b.distance;
  });
  return out;
}

double unitary_exponent(double mu1, double mu2) {
  if (!(mu1 > 0.0) || !(mu2 > 0.0)) {
    throw InvalidInput("unitary construction needs real positive eigenvalues");
  }
  const double log2 = std::log(mu2);
  if (std::abs(log2) < 1e-12) throw InvalidInput("second eigenvalue equals one; nothing to cancel");
  return -std::log(mu1) / log2;
}

UnitaryEigenfunction UnitaryEigenfunction::direct(const KoopmanModel& model, int index) {
  if (index < 0 || index >= model.size()) throw InvalidInput("eigenfunction index out of range");
  const Complex mu = model.eigenvalues()(index);
  if (!real_positive(mu)) throw InvalidInput("direct unitary eigenfunction needs a real eigenvalue");
  UnitaryEigenfunction f;
  f.spec_ = model.spec();
  f.i1_ = index;
  f.mu1_ = mu.real();
  f.w1_ = real_row(model, index);
  return f;
}

UnitaryEigenfunction UnitaryEigenfunction::product(const KoopmanModel& model, int i1, int i2) {
  if (i1 == i2) throw InvalidInput("product needs two distinct eigenfunctions");
  if (i1 < 0 || i2 < 0 || i1 >= model.size() || i2 >= model.size()) {
    throw InvalidInput("eigenfunction index out of range");
  }
  const Complex m1 = model.eigenvalues()(i1);
  const Complex m2 = model.eigenvalues()(i2);
  if (!real_positive(m1) || !real_positive(m2)) {
    throw InvalidInput("unitary construction needs real positive eigenvalues");
  }
  UnitaryEigenfunction f;
  f.spec_ = model.spec();
  f.i1_ = i1;
  f.i2_ = i2;
  f.mu1_ = m1.real();
  f.mu2_ = m2.real();
  f.k2_ = unitary_exponent(f.mu1_, f.mu2_);
  f.w1_ = real_row(model, i1);
  f.w2_ = real_row(model, i2);
  return f;
}

double UnitaryEigenfunction::mu_bar() const {
  return is_direct() ? mu1_ : mu1_ * std::pow(mu2_, k2_);
}

double UnitaryEigenfunction::value(const State& x) const {
  if (w1_.size() == 0) throw InvalidInput("empty unitary eigenfunction");
  const Eigen::VectorXd psi = spec_.evaluate(x);
  const double phi1 = w1_.dot(psi);
  if (is_direct()) return phi1;
  const double phi2 = w2_.dot(psi);
  const double sign = phi2 < 0.0 ? -1.0 : 1.0;
  return phi1 * sign * std::pow(std::abs(phi2), k2_);
}

int UnitaryEigenfunction::branch(const State& x) const {
  if (is_direct()) return 1;
  return w2_.dot(spec_.evaluate(x)) < 0.0 ? -1 : 1;
}

UnitaryEigenfunction UnitaryEigenfunction::scaled(double factor) const {
  UnitaryEigenfunction f = *this;
  f.w1_ *= factor;
  return f;
}

Complex eval_unitary(const UnitaryEigenfunction& phi, const State& x) {
  return {phi.value(x), 0.0};
}

}  // namespace kroa::roa
