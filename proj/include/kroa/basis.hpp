#pragma once

// Truncated tensor-product orthogonal polynomial dictionaries.
//
// A dictionary element is psi_alpha(x) = prod_j pi_{alpha_j}(t_j), where
// t = (x - shift) * factor is the affinely scaled state and pi_k is the
// degree-k member of a univariate orthogonal family. The retained
// multi-indices are those with q-quasi-norm (sum_j alpha_j^q)^(1/q) <= p.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace kroa::basis {

enum class Family { Laguerre, Hermite, Legendre };

std::string_view family_name(Family family);
/// Accepts "laguerre", "hermite" (probabilists') and "legendre".
Family parse_family(std::string_view name);

using MultiIndex = std::vector<int>;

struct MultiIndexSet {
  int dimension = 0;
  int max_degree = 0;
  double q = 1.0;
  std::vector<MultiIndex> indices;

  std::size_t size() const { return indices.size(); }
};

/// q-quasi-norm of a multi-index.
double quasi_norm(const MultiIndex& alpha, double q);

/// All alpha in N^n with ||alpha||_q <= p, graded lexicographic order: by
/// total degree, then by descending alpha_1, alpha_2, ...
MultiIndexSet truncated_indices(int dimension, int max_degree, double q);

/// Degree-k member of the family at t via three-term recurrence.
double eval_univariate(Family family, int degree, double t);

/// t_j = (x_j - shift_j) * factor_j. Empty vectors mean identity.
struct DomainScale {
  Eigen::VectorXd shift;
  Eigen::VectorXd factor;

  bool is_identity() const { return shift.size() == 0; }
  static DomainScale identity() { return {}; }
  /// Maps the box [lower, upper] onto [to_lower, to_upper] per coordinate.
  static DomainScale from_box(const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper, double to_lower,
                              double to_upper);
};

struct InjectivePosition {
  int coordinate = 0;
  int position = 0;
};

class BasisSpec {
 public:
  BasisSpec() = default;
  BasisSpec(Family family, MultiIndexSet index_set,
            DomainScale scale = DomainScale::identity());

  Family family() const { return family_; }
  const MultiIndexSet& index_set() const { return index_set_; }
  const DomainScale& scale() const { return scale_; }
  int dimension() const { return index_set_.dimension; }
  int size() const { return static_cast<int>(index_set_.size()); }

  /// Psi(x), length size().
  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;
  /// Writes Psi(x) into out without allocating (out must have length size()).
  void evaluate_into(const Eigen::Ref<const Eigen::VectorXd>& x,
                     Eigen::Ref<Eigen::VectorXd> out) const;

  /// For each coordinate j, the dictionary position of alpha = e_j.
  const std::vector<InjectivePosition>& injective_positions() const {
    return injective_;
  }
  /// Inverts the degree-one observables coordinate-wise, then the scaling.
  Eigen::VectorXd invert_injective(const Eigen::VectorXd& values) const;
  /// Picks the injective components out of a dictionary vector.
  Eigen::VectorXd select_injective(const Eigen::VectorXd& psi) const;

 private:
  Family family_ = Family::Laguerre;
  MultiIndexSet index_set_;
  DomainScale scale_;
  std::vector<InjectivePosition> injective_;
};

/// Free-function spellings of the member operations.
inline Eigen::VectorXd eval_basis(const BasisSpec& spec,
                                  const Eigen::VectorXd& x) {
  return spec.evaluate(x);
}
inline const std::vector<InjectivePosition>& injective_positions(
    const BasisSpec& spec) {
  return spec.injective_positions();
}
inline Eigen::VectorXd invert_injective(const BasisSpec& spec,
                                        const Eigen::VectorXd& values) {
  return spec.invert_injective(values);
}

}  // namespace kroa::basis
