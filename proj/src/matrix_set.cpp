#include "subradius/matrix_set.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace subradius {

namespace {

constexpr double kInvertibilityTolerance = 1e-12;  // relative to norm^d

// Closed-form largest singular value of a 2x2 matrix. Uses the rotation
// decomposition sigma_{1,2} = (s+ ± s-)/2 with s± = hypot(a±d, b∓c), which
// stays accurate when the two singular values coincide (the discriminant
// form cancels catastrophically there).
double norm_2x2(const Matrix& m) {
  const double sp = std::hypot(m(0, 0) + m(1, 1), m(0, 1) - m(1, 0));
  const double sm = std::hypot(m(0, 0) - m(1, 1), m(0, 1) + m(1, 0));
  return 0.5 * (sp + sm);
}

// Eigenvalue moduli of a 2x2 matrix via the trace/determinant quadratic,
// sorted in decreasing order.
void eig_moduli_2x2(const Matrix& m, double& hi, double& lo) {
  const double t = m(0, 0) + m(1, 1);
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double disc = t * t - 4.0 * det;
  if (disc >= 0.0) {
    const double r = std::sqrt(disc);
    const double a = std::abs((t + r) / 2.0);
    const double b = std::abs((t - r) / 2.0);
    hi = std::max(a, b);
    lo = std::min(a, b);
  } else {
    hi = lo = std::sqrt(det);  // complex conjugate pair, |mu|^2 = det > 0
  }
}

}  // namespace

Word Word::canonical_rotation() const {
  const int n = length();
  if (n <= 1) return *this;
  int best = 0;
  for (int s = 1; s < n; ++s) {
    for (int k = 0; k < n; ++k) {
      const int a = indices[static_cast<std::size_t>((s + k) % n)];
      const int b = indices[static_cast<std::size_t>((best + k) % n)];
      if (a != b) {
        if (a < b) best = s;
        break;
      }
    }
  }
  Word out;
  out.indices.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out.indices.push_back(indices[static_cast<std::size_t>((best + k) % n)]);
  return out;
}

bool Word::precedes(const Word& other) const {
  if (indices.size() != other.indices.size()) return indices.size() < other.indices.size();
  return indices < other.indices;
}

MatrixSet::MatrixSet(int dim, std::vector<Matrix> matrices, std::vector<std::string> labels)
    : dim_(dim), matrices_(std::move(matrices)), labels_(std::move(labels)) {
  init();
}

MatrixSet::MatrixSet(int dim, std::vector<Matrix> matrices) : dim_(dim), matrices_(std::move(matrices)) {
  labels_.reserve(matrices_.size());
  for (std::size_t i = 0; i < matrices_.size(); ++i) labels_.push_back("A" + std::to_string(i + 1));
  init();
}

void MatrixSet::init() {
  if (dim_ < 1) throw std::invalid_argument("MatrixSet: dimension must be positive");
  if (matrices_.empty()) throw std::invalid_argument("MatrixSet: set must be nonempty");
  if (labels_.size() != matrices_.size())
    throw std::invalid_argument("MatrixSet: label count does not match matrix count");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) throw std::invalid_argument("MatrixSet: duplicate label '" + l + "'");
  }
  log_abs_dets_.reserve(matrices_.size());
  det_signs_.reserve(matrices_.size());
  op_norms_.reserve(matrices_.size());
  sigma_mins_.reserve(matrices_.size());
  for (std::size_t i = 0; i < matrices_.size(); ++i) {
    const Matrix& m = matrices_[i];
    if (m.rows() != dim_ || m.cols() != dim_)
      throw std::invalid_argument("MatrixSet: element '" + labels_[i] + "' is not " + std::to_string(dim_) + "x" +
                                  std::to_string(dim_));
    const Observables obs = observables(m);
    const double tol = kInvertibilityTolerance * std::pow(std::max(obs.norm, 1e-300), dim_);
    if (!(std::abs(obs.determinant) > tol))
      throw std::invalid_argument("MatrixSet: element '" + labels_[i] + "' is singular within tolerance");
    log_abs_dets_.push_back(std::log(std::abs(obs.determinant)));
    det_signs_.push_back(obs.determinant >= 0.0 ? 1.0 : -1.0);
    op_norms_.push_back(obs.norm);
    sigma_mins_.push_back(obs.singular_values(obs.singular_values.size() - 1));
  }
}

double MatrixSet::min_sigma_min() const {
  return *std::min_element(sigma_mins_.begin(), sigma_mins_.end());
}

double MatrixSet::min_abs_det() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < matrices_.size(); ++i) best = std::min(best, std::exp(log_abs_dets_[i]));
  return best;
}

double MatrixSet::max_op_norm() const {
  return *std::max_element(op_norms_.begin(), op_norms_.end());
}

bool MatrixSet::all_diagonal() const {
  for (const auto& m : matrices_) {
    for (int r = 0; r < dim_; ++r) {
      for (int c = 0; c < dim_; ++c) {
        if (r != c && m(r, c) != 0.0) return false;
      }
    }
  }
  return true;
}

std::string MatrixSet::word_labels(const Word& w) const {
  std::string out;
  for (std::size_t k = 0; k < w.indices.size(); ++k) {
    if (k > 0) out += '.';
    out += label(w.indices[k]);
  }
  return out;
}

void MatrixSet::validate_word(const Word& w) const {
  for (int idx : w.indices) {
    if (idx < 0 || idx >= size()) throw std::invalid_argument("Word: index out of range");
  }
}

ScaledMatrix ScaledMatrix::identity(int dim) {
  ScaledMatrix sm;
  sm.unit = Matrix::Identity(dim, dim);
  return sm;
}

void ScaledMatrix::apply(const MatrixSet& set, int index) {
  unit = set.matrix(index) * unit;
  const double f = unit.norm();  // Frobenius
  if (!(f > 0.0) || !std::isfinite(f)) throw std::runtime_error("ScaledMatrix: product norm left the double range");
  unit /= f;
  log_scale += std::log(f);
  log_abs_det += set.log_abs_det(index);
  det_sign *= set.det_sign(index);
}

ScaledMatrix ScaledMatrix::compose_left(const ScaledMatrix& other) const {
  ScaledMatrix out;
  out.unit = other.unit * unit;
  const double f = out.unit.norm();
  if (!(f > 0.0) || !std::isfinite(f)) throw std::runtime_error("ScaledMatrix: product norm left the double range");
  out.unit /= f;
  out.log_scale = log_scale + other.log_scale + std::log(f);
  out.log_abs_det = log_abs_det + other.log_abs_det;
  out.det_sign = det_sign * other.det_sign;
  return out;
}

Matrix product(const MatrixSet& set, const Word& w) {
  return product(set, w, Matrix::Identity(set.dim(), set.dim()));
}

Matrix product(const MatrixSet& set, const Word& w, const Matrix& initial) {
  set.validate_word(w);
  Matrix p = initial;
  for (int idx : w.indices) p = set.matrix(idx) * p;
  return p;
}

ScaledMatrix scaled_product(const MatrixSet& set, const Word& w) {
  set.validate_word(w);
  ScaledMatrix sm = ScaledMatrix::identity(set.dim());
  for (int idx : w.indices) sm.apply(set, idx);
  return sm;
}

Observables observables(const Matrix& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) throw std::invalid_argument("observables: matrix must be square and nonempty");
  const int d = static_cast<int>(m.rows());
  Observables obs;
  obs.determinant = m.determinant();
  if (d == 1) {
    obs.norm = std::abs(m(0, 0));
    obs.singular_values = Vector::Constant(1, obs.norm);
    obs.spectral_radius = obs.norm;
    obs.eig_moduli = Vector::Constant(1, obs.norm);
    return obs;
  }
  Eigen::JacobiSVD<Matrix> svd(m);
  obs.singular_values = svd.singularValues();
  obs.norm = obs.singular_values(0);
  if (d == 2) {
    double hi = 0.0, lo = 0.0;
    eig_moduli_2x2(m, hi, lo);
    obs.eig_moduli = Vector(2);
    obs.eig_moduli << hi, lo;
    obs.spectral_radius = hi;
  } else {
    Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
    obs.eig_moduli = es.eigenvalues().cwiseAbs();
    std::sort(obs.eig_moduli.data(), obs.eig_moduli.data() + d, std::greater<double>());
    obs.spectral_radius = obs.eig_moduli(0);
  }
  return obs;
}

LogObservables log_observables(const ScaledMatrix& sm) {
  const int d = sm.dim();
  LogObservables lo;
  lo.log_abs_det = sm.log_abs_det;
  lo.det_sign = sm.det_sign;
  lo.log_singular_values.resize(static_cast<std::size_t>(d));
  if (d == 1) {
    // The unit 1x1 matrix is +-1 after Frobenius normalization.
    lo.log_norm = sm.log_scale;
    lo.log_singular_values[0] = sm.log_scale;
    lo.log_spectral_radius = sm.log_scale;
    return lo;
  }
  if (d == 2) {
    const Matrix& u = sm.unit;
    const double n_u = norm_2x2(u);
    lo.log_norm = sm.log_scale + std::log(n_u);
    lo.log_singular_values[0] = lo.log_norm;
    // sigma_2 = |det| / sigma_1, evaluated entirely in log scale so that
    // extreme products (sigma_2 / sigma_1 far below double underflow) stay exact.
    lo.log_singular_values[1] = sm.log_abs_det - lo.log_norm;
    const double t = u(0, 0) + u(1, 1);
    const double log_det_u = sm.log_abs_det - 2.0 * sm.log_scale;
    const double q = sm.det_sign * std::exp(log_det_u);
    if (sm.det_sign > 0.0 && t * t < 4.0 * q) {
      lo.log_spectral_radius = 0.5 * sm.log_abs_det;  // complex pair: rho^2 = det
    } else if (t == 0.0) {
      lo.log_spectral_radius = 0.5 * sm.log_abs_det;  // eigenvalues +-sqrt(-det)
    } else {
      const double disc = std::max(0.0, t * t - 4.0 * q);
      lo.log_spectral_radius = sm.log_scale + std::log(0.5 * (std::abs(t) + std::sqrt(disc)));
    }
    return lo;
  }
  Eigen::JacobiSVD<Matrix> svd(sm.unit);
  const Vector sv = svd.singularValues();
  double partial = 0.0;
  for (int k = 0; k < d; ++k) {
    lo.log_singular_values[static_cast<std::size_t>(k)] = sm.log_scale + std::log(sv(k));
    if (k + 1 < d) partial += lo.log_singular_values[static_cast<std::size_t>(k)];
  }
  // Recover the smallest singular value through the exact log |det| when the
  // SVD of the normalized factor loses it to rounding or underflow.
  if (!(sv(d - 1) > sv(0) * 1e-13)) {
    lo.log_singular_values[static_cast<std::size_t>(d - 1)] = sm.log_abs_det - partial;
  }
  lo.log_norm = lo.log_singular_values[0];
  Eigen::EigenSolver<Matrix> es(sm.unit, /*computeEigenvectors=*/false);
  lo.log_spectral_radius = sm.log_scale + std::log(es.eigenvalues().cwiseAbs().maxCoeff());
  return lo;
}

std::vector<std::vector<int>> index_subsets(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > n) return out;
  std::vector<int> cur(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i;
  for (;;) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

Matrix exterior_power(const Matrix& m, int k) {
  if (m.rows() != m.cols()) throw std::invalid_argument("exterior_power: matrix must be square");
  const int d = static_cast<int>(m.rows());
  if (k < 1 || k > d) throw std::invalid_argument("exterior_power: k must be in [1, d]");
  if (k == 1) return m;
  const auto subsets = index_subsets(d, k);
  const int n = static_cast<int>(subsets.size());
  Matrix out(n, n);
  Matrix minor(k, k);
  for (int col = 0; col < n; ++col) {
    for (int row = 0; row < n; ++row) {
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          minor(a, b) = m(subsets[static_cast<std::size_t>(row)][static_cast<std::size_t>(a)],
                          subsets[static_cast<std::size_t>(col)][static_cast<std::size_t>(b)]);
        }
      }
      out(row, col) = minor.determinant();
    }
  }
  return out;
}

MatrixSet lift_set(const MatrixSet& set, int k) {
  if (k < 1 || k > set.dim()) throw std::invalid_argument("lift_set: k must be in [1, dim]");
  std::vector<Matrix> lifted;
  std::vector<std::string> labels;
  lifted.reserve(static_cast<std::size_t>(set.size()));
  labels.reserve(static_cast<std::size_t>(set.size()));
  for (int i = 0; i < set.size(); ++i) {
    lifted.push_back(exterior_power(set.matrix(i), k));
    labels.push_back(set.label(i) + "_w" + std::to_string(k));
  }
  const int lifted_dim = static_cast<int>(lifted.front().rows());
  return MatrixSet(lifted_dim, std::move(lifted), std::move(labels));
}

double operator_norm(const Matrix& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  if (m.rows() == 2 && m.cols() == 2) return norm_2x2(m);
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double hausdorff_distance(const MatrixSet& a, const MatrixSet& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("hausdorff_distance: dimension mismatch");
  double worst = 0.0;
  const auto directed = [](const MatrixSet& x, const MatrixSet& y) {
    double sup = 0.0;
    for (int i = 0; i < x.size(); ++i) {
      double inf = std::numeric_limits<double>::infinity();
      for (int j = 0; j < y.size(); ++j) inf = std::min(inf, operator_norm(x.matrix(i) - y.matrix(j)));
      sup = std::max(sup, inf);
    }
    return sup;
  };
  worst = std::max(directed(a, b), directed(b, a));
  return worst;
}

}  // namespace subradius
