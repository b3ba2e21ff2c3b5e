#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace subradius {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A word over a matrix set: a finite sequence of element indices (0-based).
/// Read right-to-left as a product, i.e. the first index is applied first:
/// the word (i1, i2, ..., in) denotes A[in] * ... * A[i2] * A[i1].
struct Word {
  std::vector<int> indices;

  Word() = default;
  explicit Word(std::vector<int> idx) : indices(std::move(idx)) {}

  int length() const { return static_cast<int>(indices.size()); }
  bool empty() const { return indices.empty(); }

  /// Lexicographically smallest cyclic rotation (the canonical class
  /// representative; the spectral radius of the product is constant on
  /// rotation classes).
  Word canonical_rotation() const;

  bool operator==(const Word& other) const { return indices == other.indices; }

  /// Orders by length first, then lexicographically. Used for deterministic
  /// tie-breaking between witness words of equal value.
  bool precedes(const Word& other) const;
};

/// A finite set of invertible d x d matrices with unique labels.
/// Immutable after construction; all operations on it are pure functions.
class MatrixSet {
 public:
  MatrixSet(int dim, std::vector<Matrix> matrices, std::vector<std::string> labels);

  /// Convenience constructor that auto-labels elements "A1", "A2", ...
  MatrixSet(int dim, std::vector<Matrix> matrices);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(matrices_.size()); }
  const Matrix& matrix(int i) const { return matrices_.at(static_cast<std::size_t>(i)); }
  const std::string& label(int i) const { return labels_.at(static_cast<std::size_t>(i)); }
  const std::vector<Matrix>& matrices() const { return matrices_; }
  const std::vector<std::string>& labels() const { return labels_; }

  // Cached per-element quantities (computed once at construction).
  double log_abs_det(int i) const { return log_abs_dets_.at(static_cast<std::size_t>(i)); }
  double det_sign(int i) const { return det_signs_.at(static_cast<std::size_t>(i)); }
  double op_norm(int i) const { return op_norms_.at(static_cast<std::size_t>(i)); }
  double sigma_min(int i) const { return sigma_mins_.at(static_cast<std::size_t>(i)); }

  double min_sigma_min() const;   ///< min over elements of the smallest singular value
  double min_abs_det() const;     ///< min over elements of |det|
  double max_op_norm() const;     ///< max over elements of the operator norm

  /// True when every element is a diagonal matrix (exact zero off-diagonals).
  bool all_diagonal() const;

  /// Labels joined for word display, e.g. "D.I.D".
  std::string word_labels(const Word& w) const;

  void validate_word(const Word& w) const;  ///< throws std::invalid_argument on bad indices

 private:
  void init();

  int dim_ = 0;
  std::vector<Matrix> matrices_;
  std::vector<std::string> labels_;
  std::vector<double> log_abs_dets_, det_signs_, op_norms_, sigma_mins_;
};

/// Linear-scale observables of a single matrix. Singular values and
/// eigenvalue moduli are sorted in decreasing order.
struct Observables {
  double norm = 0.0;             ///< operator (spectral) norm, = singular_values(0)
  Vector singular_values;
  double spectral_radius = 0.0;  ///< max |eigenvalue|
  double determinant = 0.0;
  Vector eig_moduli;
};

/// Log-scale observables, safe for very long products whose entries overflow
/// or underflow the double range.
struct LogObservables {
  double log_norm = 0.0;
  std::vector<double> log_singular_values;
  double log_spectral_radius = 0.0;
  double log_abs_det = 0.0;
  double det_sign = 1.0;
};

/// A matrix in factored form exp(log_scale) * unit, with the log of |det|
/// accumulated exactly alongside. `unit` is kept Frobenius-normalized, so
/// arbitrarily long products never overflow.
struct ScaledMatrix {
  Matrix unit;
  double log_scale = 0.0;
  double log_abs_det = 0.0;
  double det_sign = 1.0;

  static ScaledMatrix identity(int dim);
  int dim() const { return static_cast<int>(unit.rows()); }

  /// Left-multiplies by an element of `set` and renormalizes.
  void apply(const MatrixSet& set, int index);

  /// Left-multiplies by another scaled matrix: result = other * this.
  ScaledMatrix compose_left(const ScaledMatrix& other) const;
};

/// Product of the word over the set, accumulated left-to-right as
/// A[i_n] * (... * (A[i_2] * A[i_1])). Plain double scale; use
/// scaled_product for words long enough to overflow.
Matrix product(const MatrixSet& set, const Word& w);

/// Same accumulation order as product(), but continuing from an initial
/// matrix (the empty word returns `initial` unchanged).
Matrix product(const MatrixSet& set, const Word& w, const Matrix& initial);

/// Log-scale product for words of any length.
ScaledMatrix scaled_product(const MatrixSet& set, const Word& w);

/// Observables of a plain matrix (throws std::invalid_argument if empty or
/// non-square).
Observables observables(const Matrix& m);

/// Observables of a scaled product, reported in log scale. The smallest
/// log-singular value is recovered through the exactly-accumulated log |det|,
/// which keeps it meaningful far below the double underflow threshold.
LogObservables log_observables(const ScaledMatrix& sm);

/// k-th exterior power: the C(d,k) x C(d,k) matrix of k x k minors, rows and
/// columns indexed by k-element index subsets in lexicographic order.
Matrix exterior_power(const Matrix& m, int k);

/// Lifts every element of the set to its k-th exterior power. Labels get a
/// "_w<k>" suffix.
MatrixSet lift_set(const MatrixSet& set, int k);

/// Hausdorff distance between two sets under the Euclidean operator norm.
double hausdorff_distance(const MatrixSet& a, const MatrixSet& b);

/// Largest singular value.
double operator_norm(const Matrix& m);

/// All k-element subsets of {0..n-1} in lexicographic order.
std::vector<std::vector<int>> index_subsets(int n, int k);

}  // namespace subradius
