#include "kroa/basis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "kroa/error.hpp"

namespace kroa::basis {

std::string_view family_name(Family family) {
  switch (family) {
    case Family::Laguerre:
      return "laguerre";
    case Family::Hermite:
      return "hermite";
    case Family::Legendre:
      return "legendre";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "laguerre") return Family::Laguerre;
  if (lower == "hermite") return Family::Hermite;
  if (lower == "legendre") return Family::Legendre;
  throw InvalidInput("unknown polynomial family '" + std::string(name) + "'");
}

double quasi_norm(const MultiIndex& alpha, double q) {
  double sum = 0.0;
  for (int a : alpha) {
    if (a > 0) sum += std::pow(static_cast<double>(a), q);
  }
  return std::pow(sum, 1.0 / q);
}

namespace {

constexpr double kQuasiNormRelTol = 1e-12;

void enumerate(int coordinate, double budget, double q, MultiIndex& current,
               std::vector<MultiIndex>& out) {
  const int n = static_cast<int>(current.size());
  if (coordinate == n) {
    out.push_back(current);
    return;
  }
  for (int a = 0;; ++a) {
    const double cost = a == 0 ? 0.0 : std::pow(static_cast<double>(a), q);
    if (cost > budget) break;
    current[coordinate] = a;
    enumerate(coordinate + 1, budget - cost, q, current, out);
  }
  current[coordinate] = 0;
}

bool graded_lex_less(const MultiIndex& a, const MultiIndex& b) {
  const int da = std::accumulate(a.begin(), a.end(), 0);
  const int db = std::accumulate(b.begin(), b.end(), 0);
  if (da != db) return da < db;
  return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

MultiIndexSet truncated_indices(int dimension, int max_degree, double q) {
  if (dimension < 1) throw InvalidInput("basis dimension must be >= 1");
  if (max_degree < 1) {
    throw InvalidInput(
        "max degree p must be >= 1 so the state can be recovered");
  }
  if (!(q > 0.0) || !std::isfinite(q)) {
    throw InvalidInput("quasi-norm exponent q must be positive");
  }

  // sum alpha^q <= p^q, with the relative slack applied to the norm itself.
  const double limit = static_cast<double>(max_degree) * (1.0 + kQuasiNormRelTol);
  const double budget = std::pow(limit, q);

  MultiIndexSet set;
  set.dimension = dimension;
  set.max_degree = max_degree;
  set.q = q;
  MultiIndex current(dimension, 0);
  enumerate(0, budget, q, current, set.indices);

  // The pruned enumeration works on powered sums; re-check on the norm so the
  // result is exactly the documented filter.
  std::erase_if(set.indices, [&](const MultiIndex& alpha) {
    return quasi_norm(alpha, q) - max_degree > kQuasiNormRelTol * max_degree;
  });
  std::sort(set.indices.begin(), set.indices.end(), graded_lex_less);
  return set;
}

double eval_univariate(Family family, int degree, double t) {
  if (degree < 0) throw InvalidInput("polynomial degree must be >= 0");
  if (degree == 0) return 1.0;
  double prev = 1.0;
  double curr = family == Family::Laguerre ? 1.0 - t : t;
  for (int k = 1; k < degree; ++k) {
    double next = 0.0;
    switch (family) {
      case Family::Laguerre:
        next = ((2 * k + 1 - t) * curr - k * prev) / (k + 1);
        break;
      case Family::Hermite:
        next = t * curr - k * prev;
        break;
      case Family::Legendre:
        next = ((2 * k + 1) * t * curr - k * prev) / (k + 1);
        break;
    }
    prev = curr;
    curr = next;
  }
  return curr;
}

DomainScale DomainScale::from_box(const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper,
                                  double to_lower, double to_upper) {
  if (lower.size() != upper.size()) {
    throw InvalidInput("scaling box bounds differ in dimension");
  }
  DomainScale s;
  s.shift.resize(lower.size());
  s.factor.resize(lower.size());
  for (Eigen::Index j = 0; j < lower.size(); ++j) {
    const double width = upper(j) - lower(j);
    if (!(width > 0.0)) throw InvalidInput("scaling box has empty extent");
    s.factor(j) = (to_upper - to_lower) / width;
    s.shift(j) = lower(j) - to_lower / s.factor(j);
  }
  return s;
}

BasisSpec::BasisSpec(Family family, MultiIndexSet index_set, DomainScale scale)
    : family_(family), index_set_(std::move(index_set)), scale_(std::move(scale)) {
  const int n = index_set_.dimension;
  if (n < 1) throw InvalidInput("basis dimension must be >= 1");
  if (!scale_.is_identity()) {
    if (scale_.shift.size() != n || scale_.factor.size() != n) {
      throw InvalidInput("domain scale dimension does not match the basis");
    }
    for (int j = 0; j < n; ++j) {
      if (!(scale_.factor(j) != 0.0) || !std::isfinite(scale_.factor(j))) {
        throw InvalidInput("domain scale factors must be finite and nonzero");
      }
    }
  }
  injective_.assign(n, InjectivePosition{});
  std::vector<bool> seen(n, false);
  for (std::size_t l = 0; l < index_set_.indices.size(); ++l) {
    const MultiIndex& alpha = index_set_.indices[l];
    if (static_cast<int>(alpha.size()) != n) {
      throw InvalidInput("multi-index length does not match basis dimension");
    }
    int total = 0;
    int where = -1;
    for (int j = 0; j < n; ++j) {
      if (alpha[j] < 0 || alpha[j] > index_set_.max_degree) {
        throw InvalidInput("multi-index entry outside [0, p]");
      }
      total += alpha[j];
      if (alpha[j] == 1) where = j;
    }
    if (total == 1) {
      injective_[where] = {where, static_cast<int>(l)};
      seen[where] = true;
    }
  }
  for (int j = 0; j < n; ++j) {
    if (!seen[j]) {
      throw InvalidInput("index set lacks the unit index for coordinate " +
                         std::to_string(j + 1));
    }
  }
}

void BasisSpec::evaluate_into(const Eigen::Ref<const Eigen::VectorXd>& x,
                              Eigen::Ref<Eigen::VectorXd> out) const {
  const int n = dimension();
  const int p = index_set_.max_degree;
  // Per-coordinate univariate tables, degrees 0..p, on the stack for small n.
  constexpr int kInline = 16 * 12;
  double inline_buf[kInline];
  std::vector<double> heap;
  double* table = inline_buf;
  if (n * (p + 1) > kInline) {
    heap.resize(static_cast<std::size_t>(n) * (p + 1));
    table = heap.data();
  }
  for (int j = 0; j < n; ++j) {
    const double t = scale_.is_identity()
                         ? x(j)
                         : (x(j) - scale_.shift(j)) * scale_.factor(j);
    double* row = table + j * (p + 1);
    row[0] = 1.0;
    if (p >= 1) row[1] = family_ == Family::Laguerre ? 1.0 - t : t;
    for (int k = 1; k < p; ++k) {
      switch (family_) {
        case Family::Laguerre:
          row[k + 1] = ((2 * k + 1 - t) * row[k] - k * row[k - 1]) / (k + 1);
          break;
        case Family::Hermite:
          row[k + 1] = t * row[k] - k * row[k - 1];
          break;
        case Family::Legendre:
          row[k + 1] = ((2 * k + 1) * t * row[k] - k * row[k - 1]) / (k + 1);
          break;
      }
    }
  }
  const auto& indices = index_set_.indices;
  for (std::size_t l = 0; l < indices.size(); ++l) {
    double v = 1.0;
    for (int j = 0; j < n; ++j) {
      const int a = indices[l][j];
      if (a != 0) v *= table[j * (p + 1) + a];
    }
    out(static_cast<Eigen::Index>(l)) = v;
  }
}

Eigen::VectorXd BasisSpec::evaluate(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) {
    throw InvalidInput("state has dimension " + std::to_string(x.size()) +
                       ", basis expects " + std::to_string(dimension()));
  }
  Eigen::VectorXd out(size());
  evaluate_into(x, out);
  return out;
}

Eigen::VectorXd BasisSpec::select_injective(const Eigen::VectorXd& psi) const {
  Eigen::VectorXd v(dimension());
  for (const auto& pos : injective_) v(pos.coordinate) = psi(pos.position);
  return v;
}

Eigen::VectorXd BasisSpec::invert_injective(const Eigen::VectorXd& values) const {
  if (values.size() != dimension()) {
    throw InvalidInput("injective vector has wrong dimension");
  }
  Eigen::VectorXd x(values.size());
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    const double t = family_ == Family::Laguerre ? 1.0 - values(j) : values(j);
    x(j) = scale_.is_identity() ? t : t / scale_.factor(j) + scale_.shift(j);
  }
  return x;
}

}  // namespace kroa::basis
