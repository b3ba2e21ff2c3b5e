#include "subradius/access_perturb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "subradius/domination.hpp"
#include "subradius/parallel.hpp"
#include "subradius/projective.hpp"

namespace subradius {

namespace {

constexpr double kAlignTol = 1e-8;        // |sin| residual accepted by align_2d
constexpr int kBisectionCap = 200;        // bisection iterations per root
constexpr double kDegenerateTol = 1e-9;   // relative sigma_p ~ sigma_{p+1}
constexpr double kPrincipalTol = 1e-6;    // accepted (L..L)e vs f principal angle
constexpr double kSelectionTol = 1e-6;    // residual of the v / w subspace selection
constexpr double kQualSlack = 1e-12;      // relative slack in the z_n qualification test

const double kInf = std::numeric_limits<double>::infinity();

Eigen::Matrix2d rotation2(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

SpectrumProfile profile_from_logs(const std::vector<double>& log_sv, int upto_k) {
  const int d = static_cast<int>(log_sv.size());
  const int cap = upto_k <= 0 ? d : upto_k;
  if (cap < 1 || cap > d) throw std::invalid_argument("spectrum_profile: upto_k out of range");
  SpectrumProfile out;
  out.lambdas = log_sv;
  out.taus.resize(static_cast<std::size_t>(d));
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    acc += log_sv[static_cast<std::size_t>(i)];
    out.taus[static_cast<std::size_t>(i)] = acc;
  }
  double tau_prefix = 0.0;  // tau_1 + ... + tau_{k-1}
  for (int k = 2; k <= cap; ++k) {
    tau_prefix += out.taus[static_cast<std::size_t>(k - 2)];
    out.zetas.push_back(tau_prefix - 0.5 * (k - 1) * out.taus[static_cast<std::size_t>(k - 1)]);
  }
  return out;
}

/// Orthonormal basis of the column span; throws when numerically rank-deficient.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& a, const char* what) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (int i = 0; i < a.cols(); ++i) {
    if (std::fabs(r(i, i)) <= 1e-12 * (1.0 + a.norm())) {
      throw std::invalid_argument(std::string(what) + ": basis is numerically rank-deficient");
    }
  }
  return qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
}

/// Like orthonormalize, but reports failure instead of throwing (for images
/// under extremely ill-conditioned products).
bool try_orthonormalize(const Eigen::MatrixXd& a, Eigen::MatrixXd& out) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (int i = 0; i < a.cols(); ++i) {
    if (std::fabs(r(i, i)) <= 1e-14 * (1.0 + a.norm())) return false;
  }
  out = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  return true;
}

/// Smallest principal angle between two spans given by orthonormal bases.
double smallest_principal_angle(const Eigen::MatrixXd& aq, const Eigen::MatrixXd& bq) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(aq.transpose() * bq);
  const double c = std::min(1.0, svd.singularValues()(0));
  return std::acos(c);
}

/// Unit vector in span(aq) closest to span(bq), with the distance
/// ||(I - bq bq^T) v|| it achieves.
std::pair<Eigen::VectorXd, double> closest_span_vector(const Eigen::MatrixXd& aq,
                                                       const Eigen::MatrixXd& bq) {
  const Eigen::MatrixXd m = aq - bq * (bq.transpose() * aq);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const int last = static_cast<int>(m.cols()) - 1;
  const Eigen::VectorXd x = svd.matrixV().col(last);
  Eigen::VectorXd v = aq * x;
  v.normalize();
  return {v, svd.singularValues()(last)};
}

// ---------------------------------------------------------------------------
// align_2d: closed-form lifted achieved angle + monotone bisection
// ---------------------------------------------------------------------------

/// Evaluates the direction of R_theta A_n ... R_theta A_1 v together with an
/// exact continuous lift of its angle, renormalizing after every factor so
/// arbitrarily long chains stay finite.
///
/// Every factor with positive determinant splits as A = R_alpha S with S
/// symmetric positive definite. Since u . (S u) = u^T S u > 0, S turns any
/// direction by strictly less than pi/2, so the vector-angle map of A lifts
/// to phi -> phi + alpha + h(phi) with |h| < pi/2 recoverable from the sample
/// at phi alone. The lift of the whole chain is therefore computable at each
/// theta in isolation — chains that wind many full turns between samples
/// cannot alias — and it is strictly increasing in theta (angle maps of
/// positive-determinant factors are monotone and each rotation adds theta
/// directly), so crossings of a target class can be found by bisection.
struct LiftedChain {
  const std::vector<Matrix>* mats = nullptr;
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  std::vector<double> alphas;  // polar rotation angle of each factor

  LiftedChain(const std::vector<Matrix>& m, const Eigen::Vector2d& start) : mats(&m), v(start) {
    alphas.reserve(m.size());
    for (const auto& a : m) alphas.push_back(std::atan2(a(1, 0) - a(0, 1), a(0, 0) + a(1, 1)));
  }

  Eigen::Vector2d apply(double theta) const {
    const Eigen::Matrix2d rot = rotation2(theta);
    Eigen::Vector2d u = v;
    for (const auto& a : *mats) {
      u = rot * (a * u);
      u.normalize();
    }
    return u;
  }

  double lift(double theta) const {
    double phi = std::atan2(v.y(), v.x());
    Eigen::Vector2d u = v;
    for (std::size_t i = 0; i < mats->size(); ++i) {
      const Eigen::Vector2d y = ((*mats)[i] * u).normalized();
      double h = std::fmod(std::atan2(y.y(), y.x()) - phi - alphas[i], 2.0 * kPi);
      if (h > kPi) h -= 2.0 * kPi;
      if (h < -kPi) h += 2.0 * kPi;
      phi += alphas[i] + h + theta;
      u = rotation2(theta) * y;
    }
    return phi;
  }
};

/// Bisects the increasing chain lift for lift(theta) == val on [a, b].
double bisect_lift(const LiftedChain& chain, double a, double b, double val) {
  for (int it = 0; it < kBisectionCap; ++it) {
    if (b - a <= 1e-15 * (1.0 + std::fabs(a) + std::fabs(b))) break;
    const double m = 0.5 * (a + b);
    if (chain.lift(m) <= val) {
      a = m;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

std::string join_labels(const MatrixSet& set) {
  std::string id;
  for (int i = 0; i < set.size(); ++i) {
    if (i) id += ",";
    id += set.label(i);
  }
  return id;
}

Word repeat_word(const Word& base, int times) {
  Word w;
  w.indices.reserve(static_cast<std::size_t>(base.length()) * static_cast<std::size_t>(times));
  for (int t = 0; t < times; ++t) {
    w.indices.insert(w.indices.end(), base.indices.begin(), base.indices.end());
  }
  return w;
}

ScaledMatrix make_scaled(const Matrix& m) {
  ScaledMatrix sm;
  const double f = m.norm();
  sm.unit = m / f;
  sm.log_scale = std::log(f);
  const double det = m.determinant();
  sm.log_abs_det = std::log(std::fabs(det));
  sm.det_sign = det < 0.0 ? -1.0 : 1.0;
  return sm;
}

ScaledMatrix scaled_chain(const std::vector<Matrix>& mats) {
  ScaledMatrix acc = make_scaled(mats.front());
  for (std::size_t i = 1; i < mats.size(); ++i) {
    acc = acc.compose_left(make_scaled(mats[i]));
  }
  return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// spectrum profile
// ---------------------------------------------------------------------------

double SpectrumProfile::lambda(int k) const {
  if (k < 1 || k > dim()) throw std::invalid_argument("SpectrumProfile::lambda: k out of range");
  return lambdas[static_cast<std::size_t>(k - 1)];
}

double SpectrumProfile::tau(int k) const {
  if (k < 0 || k > dim()) throw std::invalid_argument("SpectrumProfile::tau: k out of range");
  return k == 0 ? 0.0 : taus[static_cast<std::size_t>(k - 1)];
}

double SpectrumProfile::zeta(int k) const {
  if (k < 2 || k - 2 >= static_cast<int>(zetas.size())) {
    throw std::invalid_argument("SpectrumProfile::zeta: k out of range");
  }
  return zetas[static_cast<std::size_t>(k - 2)];
}

SpectrumProfile spectrum_profile(const Matrix& m, int upto_k) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    throw std::invalid_argument("spectrum_profile: matrix must be square and nonempty");
  }
  Eigen::JacobiSVD<Matrix> svd(m);
  const Eigen::VectorXd sv = svd.singularValues();
  std::vector<double> logs(static_cast<std::size_t>(sv.size()));
  for (int i = 0; i < sv.size(); ++i) {
    if (!(sv(i) > 0.0)) throw std::invalid_argument("spectrum_profile: matrix is singular");
    logs[static_cast<std::size_t>(i)] = std::log(sv(i));
  }
  return profile_from_logs(logs, upto_k);
}

SpectrumProfile spectrum_profile(const ScaledMatrix& m, int upto_k) {
  return profile_from_logs(log_observables(m).log_singular_values, upto_k);
}

PivotSplit pivot(const SpectrumProfile& profile, int ell) {
  const int d = profile.dim();
  if (ell < 2 || ell > d) throw std::invalid_argument("pivot: ell must lie in [2, dim]");
  PivotSplit out{1, (profile.lambdas[0] - profile.lambdas[1]) / 2.0};
  for (int p = 2; p < ell; ++p) {
    const double g =
        (profile.lambdas[static_cast<std::size_t>(p - 1)] - profile.lambdas[static_cast<std::size_t>(p)]) /
        2.0;
    if (g > out.gap) {
      out.p = p;
      out.gap = g;
    }
  }
  return out;
}

PivotSplit pivot(const Matrix& m, int ell) { return pivot(spectrum_profile(m), ell); }

EFSubspaces ef_subspaces(const Matrix& p_mat, int p) {
  if (p_mat.rows() == 0 || p_mat.rows() != p_mat.cols()) {
    throw std::invalid_argument("ef_subspaces: matrix must be square and nonempty");
  }
  const int d = static_cast<int>(p_mat.rows());
  if (p < 1 || p >= d) throw std::invalid_argument("ef_subspaces: p must lie in [1, dim - 1]");
  Eigen::JacobiSVD<Matrix> svd(p_mat, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  EFSubspaces out;
  out.e = svd.matrixU().leftCols(p);
  out.f = svd.matrixV().rightCols(d - p);
  out.degenerate = (sv(p - 1) - sv(p)) <= kDegenerateTol * sv(0);
  return out;
}

// ---------------------------------------------------------------------------
// align_2d
// ---------------------------------------------------------------------------

AlignmentCertificate align_2d(const std::vector<Matrix>& mats, const Eigen::Vector2d& v,
                              const Eigen::Vector2d& w, double delta) {
  if (mats.empty()) throw std::invalid_argument("align_2d: empty factor list");
  for (const auto& a : mats) {
    if (a.rows() != 2 || a.cols() != 2) throw std::invalid_argument("align_2d: factors must be 2x2");
    if (!(a.determinant() > 0.0)) {
      throw std::invalid_argument("align_2d: factors must have positive determinant");
    }
  }
  if (!(v.norm() > 0.0) || !(w.norm() > 0.0)) {
    throw std::invalid_argument("align_2d: v and w must be nonzero");
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("align_2d: delta must be positive and finite");
  }

  AlignmentCertificate cert;
  cert.v = v.normalized();
  cert.w = w.normalized();

  // Unperturbed target direction A_n ... A_1 w.
  Eigen::Vector2d t = cert.w;
  for (const auto& a : mats) {
    t = a * t;
    t.normalize();
  }
  const double target_raw = principal_angle(t);

  LiftedChain chain(mats, cert.v);
  const double lift_lo = chain.lift(-delta);
  const double lift_hi = chain.lift(delta);
  cert.achieved_lo = lift_lo;
  cert.achieved_hi = lift_hi;
  cert.target = target_raw + kPi * std::round((0.5 * (lift_lo + lift_hi) - target_raw) / kPi);

  // The two crossings nearest theta = 0: the representatives of the target
  // class immediately below and above the lifted value at 0.
  const double lift0 = chain.lift(0.0);
  const double base_k = std::floor((lift0 - target_raw) / kPi);
  double best_theta = kInf;
  bool found = false;
  for (int dk = 0; dk <= 1; ++dk) {
    const double val = target_raw + (base_k + dk) * kPi;
    if (val < lift_lo - 1e-12 || val > lift_hi + 1e-12) continue;
    const double theta = bisect_lift(chain, -delta, delta, val);
    if (!found || std::fabs(theta) < std::fabs(best_theta) - 4e-12 ||
        (std::fabs(std::fabs(theta) - std::fabs(best_theta)) <= 4e-12 && theta > best_theta)) {
      best_theta = theta;
      found = true;
    }
  }

  if (!found) {
    std::ostringstream os;
    os << "target direction outside the achieved-angle range [" << lift_lo << ", " << lift_hi
       << "] (target class " << cert.target << ")";
    cert.note = os.str();
    return cert;
  }

  cert.theta = std::clamp(best_theta, -delta, delta);
  const Eigen::Vector2d u = chain.apply(cert.theta);
  cert.residual = std::fabs(u.x() * t.y() - u.y() * t.x());
  if (cert.residual > kAlignTol) {
    std::ostringstream os;
    os << "bisection stalled: residual " << cert.residual << " above tolerance " << kAlignTol;
    cert.note = os.str();
    return cert;
  }
  cert.success = true;
  return cert;
}

// ---------------------------------------------------------------------------
// plane_rotation_align
// ---------------------------------------------------------------------------

PlaneRotationResult plane_rotation_align(const MatrixSet& set, const Word& word,
                                         const Eigen::MatrixXd& e, const Eigen::MatrixXd& f,
                                         double epsilon) {
  const int d = set.dim();
  if (e.rows() != d || f.rows() != d) {
    throw std::invalid_argument("plane_rotation_align: subspace dimensions do not match the set");
  }
  const int p = static_cast<int>(e.cols());
  if (p < 1 || p >= d) throw std::invalid_argument("plane_rotation_align: dim e must lie in [1, d-1]");
  if (static_cast<int>(f.cols()) != d - p) {
    throw std::invalid_argument("plane_rotation_align: f must have codimension equal to dim e");
  }
  if (!(epsilon >= 0.0)) throw std::invalid_argument("plane_rotation_align: epsilon must be >= 0");
  set.validate_word(word);
  if (word.empty()) throw std::invalid_argument("plane_rotation_align: empty word");

  PlaneRotationResult out;
  const Eigen::MatrixXd eq = orthonormalize(e, "plane_rotation_align: e");
  const Eigen::MatrixXd fq = orthonormalize(f, "plane_rotation_align: f");
  const int m = word.length();
  const ScaledMatrix p_sm = scaled_product(set, word);

  // Zero-perturbation path: the word already carries e into f.
  {
    Eigen::MatrixXd img;
    if (try_orthonormalize(p_sm.unit * eq, img)) {
      const double ang = smallest_principal_angle(img, fq);
      if (ang <= kPrincipalTol) {
        out.success = true;
        out.principal_angle_to_f = ang;
        out.perturbed.reserve(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) out.perturbed.push_back(set.matrix(word.indices[static_cast<std::size_t>(i)]));
        out.note = "already aligned; zero perturbation";
        return out;
      }
    }
  }

  // Select v in e meeting the slow right-singular span of the product, and w
  // in the fast span whose image lies in f.
  Eigen::JacobiSVD<Matrix> svd(p_sm.unit, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  out.degenerate = (sv(p - 1) - sv(p)) <= kDegenerateTol * sv(0);
  const Eigen::MatrixXd slow = svd.matrixV().rightCols(d - p + 1);  // sigma <= sigma_p
  const Eigen::MatrixXd fast = svd.matrixV().leftCols(p + 1);       // sigma >= sigma_{p+1}

  auto [v_vec, v_res] = closest_span_vector(eq, slow);
  const Eigen::MatrixXd pfast = p_sm.unit * fast;
  Eigen::JacobiSVD<Eigen::MatrixXd> wsvd(pfast - fq * (fq.transpose() * pfast), Eigen::ComputeFullV);
  const Eigen::VectorXd y = wsvd.matrixV().col(p);
  Eigen::VectorXd w_vec = fast * y;
  w_vec.normalize();
  const double pw_norm = (p_sm.unit * w_vec).norm();
  const double w_res = pw_norm > 0.0 ? wsvd.singularValues()(p) / pw_norm : kInf;
  if (v_res > kSelectionTol || w_res > kSelectionTol) {
    out.degenerate = true;
    out.note = "subspace selection is numerically degenerate; ";
  }
  const double pv_norm = (p_sm.unit * v_vec).norm();
  out.gap_check = pw_norm > 0.0 ? pv_norm / pw_norm : kInf;
  out.v_selection_residual = v_res;
  if (pw_norm > 0.0) {
    Eigen::VectorXd target = p_sm.unit * w_vec;
    target /= pw_norm;
    out.target_residual_to_f = (target - fq * (fq.transpose() * target)).norm();
  } else {
    out.target_residual_to_f = kInf;
  }

  // Oriented plane chain V_i = A_i ... A_1 span{v, w}.
  const double c = v_vec.dot(w_vec);
  Eigen::VectorXd wperp = w_vec - c * v_vec;
  const double nf = wperp.norm();
  if (nf < 1e-9) {
    out.degenerate = true;
    out.note += "v and w are nearly parallel, no rotation plane exists";
    return out;
  }
  wperp /= nf;
  Eigen::MatrixXd q(d, 2);
  q.col(0) = v_vec;
  q.col(1) = wperp;
  const Eigen::Vector2d v_coord(1.0, 0.0);
  const Eigen::Vector2d w_coord(c, nf);

  std::vector<Eigen::MatrixXd> planes;  // Q_i, the basis of V_i
  std::vector<Matrix> restricted;       // B_i, the 2x2 restriction A_i : V_{i-1} -> V_i
  planes.reserve(static_cast<std::size_t>(m));
  restricted.reserve(static_cast<std::size_t>(m));
  Eigen::MatrixXd q_prev = q;
  for (int i = 0; i < m; ++i) {
    const Matrix& a = set.matrix(word.indices[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd img = a * q_prev;
    Eigen::MatrixXd qi;
    if (!try_orthonormalize(img, qi)) {
      out.note += "rotation plane collapsed under the word";
      return out;
    }
    Matrix bi = qi.transpose() * img;
    if (bi.determinant() < 0.0) {
      qi.col(1) = -qi.col(1);
      bi = qi.transpose() * img;
    }
    planes.push_back(qi);
    restricted.push_back(bi);
    q_prev = qi;
  }

  const AlignmentCertificate al = align_2d(restricted, v_coord, w_coord, kPi / 2.0);
  if (!al.success) {
    out.note += "in-plane alignment failed: " + al.note;
    return out;
  }
  out.theta = al.theta;
  out.needed_theta = al.theta;

  // Build the perturbed letters and check the budget against exact norms.
  const Eigen::Matrix2d r2 = rotation2(al.theta);
  std::vector<Matrix> perturbed;
  perturbed.reserve(static_cast<std::size_t>(m));
  double max_pert = 0.0;
  for (int i = 0; i < m; ++i) {
    const Matrix& a = set.matrix(word.indices[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd& qi = planes[static_cast<std::size_t>(i)];
    Matrix rhat = Matrix::Identity(d, d);
    rhat += qi * (r2 - Eigen::Matrix2d::Identity()) * qi.transpose();
    Matrix li = rhat * a;
    max_pert = std::max(max_pert, operator_norm(li - a));
    perturbed.push_back(std::move(li));
  }
  out.needed_epsilon = max_pert;
  if (max_pert > epsilon * (1.0 + 1e-12) + 1e-15) {
    std::ostringstream os;
    os << "needed rotation angle " << al.theta << " requires epsilon " << max_pert
       << " > budget " << epsilon;
    out.note += os.str();
    return out;
  }

  // Verify: the perturbed word must carry e into a direction meeting f.
  Eigen::MatrixXd image = eq;
  for (const auto& li : perturbed) {
    image = li * image;
    image /= image.norm();
  }
  Eigen::MatrixXd image_q;
  if (!try_orthonormalize(image, image_q)) {
    out.note += "perturbed image of e is numerically rank-deficient";
    return out;
  }
  out.principal_angle_to_f = smallest_principal_angle(image_q, fq);
  if (out.principal_angle_to_f > kPrincipalTol) {
    std::ostringstream os;
    os << "verification failed: perturbed image misses the target subspace by angle "
       << out.principal_angle_to_f;
    out.note += os.str();
    return out;
  }

  out.success = true;
  out.perturbed = std::move(perturbed);
  out.max_perturbation = max_pert;
  return out;
}

// ---------------------------------------------------------------------------
// z_delta_profile
// ---------------------------------------------------------------------------

namespace {

struct ZAccumulator {
  double best = kInf;
  Word witness;
  std::uint64_t qualifying = 0;
  std::uint64_t evaluations = 0;

  void offer(double z, const Word& w) {
    ++qualifying;
    if (z < best || (z == best && (witness.empty() || w.precedes(witness)))) {
      best = z;
      witness = w;
    }
  }
  void merge(const ZAccumulator& o) {
    qualifying += o.qualifying;
    evaluations += o.evaluations;
    if (o.best < best || (o.best == best && !o.witness.empty() &&
                          (witness.empty() || o.witness.precedes(witness)))) {
      best = o.best;
      witness = o.witness;
    }
  }
};

/// Evaluates every word of length n with the given first letter (or all words
/// when first < 0) against the qualification threshold.
void z_scan(const MatrixSet& set, int n, int first, int ell, double log_cap, ZAccumulator& acc) {
  const int k = set.size();
  Word w;
  w.indices.assign(static_cast<std::size_t>(n), 0);
  if (first >= 0) w.indices[0] = first;
  for (;;) {
    const ScaledMatrix sm = scaled_product(set, w);
    const LogObservables lo = log_observables(sm);
    ++acc.evaluations;
    double tau = 0.0;
    for (int i = 0; i < ell; ++i) tau += lo.log_singular_values[static_cast<std::size_t>(i)];
    if (tau <= n * log_cap + kQualSlack * (1.0 + std::fabs(n * log_cap))) {
      double tau_prefix = 0.0, run = 0.0;
      for (int i = 0; i + 1 < ell; ++i) {
        run += lo.log_singular_values[static_cast<std::size_t>(i)];
        tau_prefix += run;
      }
      const double zeta = tau_prefix - 0.5 * (ell - 1) * tau;
      acc.offer(zeta / n, w);
    }
    // Odometer step over the free positions (all but a fixed first letter).
    int pos = n - 1;
    const int lowest = first >= 0 ? 1 : 0;
    while (pos >= lowest && w.indices[static_cast<std::size_t>(pos)] == k - 1) {
      w.indices[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < lowest) break;
    ++w.indices[static_cast<std::size_t>(pos)];
  }
}

}  // namespace

ZDeltaProfile z_delta_profile(const MatrixSet& set, double delta, int ell, int n_lo, int n_hi,
                              const BracketConfig& cfg) {
  const int d = set.dim();
  if (ell < 2 || ell > d) {
    throw std::invalid_argument("z_delta_profile: ell must lie in [2, dim] (the level-1 defect vanishes)");
  }
  if (!std::isfinite(delta)) throw std::invalid_argument("z_delta_profile: delta must be finite");
  if (n_lo < 1 || n_hi < n_lo) throw std::invalid_argument("z_delta_profile: bad length range");

  ZDeltaProfile out;
  out.ell = ell;
  out.delta = delta;
  const MatrixSet lifted = lift_set(set, ell);
  out.wedge_upper = subradius_bracket(lifted, n_hi, cfg).upper;
  const double log_cap = delta + std::log(out.wedge_upper);

  const int k = set.size();
  const int workers = worker_count(cfg.threads);
  for (int n = n_lo; n <= n_hi; ++n) {
    // A length is enumerated either completely or not at all, so every
    // reported point is exact.
    double words = std::pow(static_cast<double>(k), n);
    if (static_cast<double>(out.evaluations) + words > static_cast<double>(cfg.budget)) {
      out.complete = false;
      break;
    }
    ZAccumulator acc;
    if (workers > 1 && k > 1 && n > 1) {
      std::vector<ZAccumulator> parts(static_cast<std::size_t>(k));
      parallel_for(
          static_cast<std::size_t>(k),
          [&](std::size_t i) {
            z_scan(set, n, static_cast<int>(i), ell, log_cap, parts[i]);
          },
          workers);
      for (const auto& part : parts) acc.merge(part);
    } else {
      z_scan(set, n, -1, ell, log_cap, acc);
    }
    out.evaluations += acc.evaluations;
    ZDeltaPoint pt;
    pt.n = n;
    pt.qualifying = acc.qualifying;
    if (acc.qualifying == 0) {
      pt.z = kInf;
      pt.infinite = true;
    } else {
      pt.z = acc.best;
      pt.witness = acc.witness;
    }
    out.points.push_back(std::move(pt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// perturb_reduce
// ---------------------------------------------------------------------------

namespace {

struct ConnectorOutcome {
  bool found = false;
  Word base;
  int reps = 0;
  PlaneRotationResult res;
  double min_needed = kInf;  // smallest epsilon any probed candidate required
};

std::vector<Word> words_of_length(int k, int len) {
  std::vector<Word> out;
  Word w;
  w.indices.assign(static_cast<std::size_t>(len), 0);
  for (;;) {
    out.push_back(w);
    int pos = len - 1;
    while (pos >= 0 && w.indices[static_cast<std::size_t>(pos)] == k - 1) {
      w.indices[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++w.indices[static_cast<std::size_t>(pos)];
  }
  return out;
}

/// Searches for the shortest connector word whose in-plane rotation fits the
/// budget: base words by increasing length, within a length by the rotation
/// angle a single pass needs, repetitions doubled then minimized.
ConnectorOutcome search_connector(const MatrixSet& set, const Eigen::MatrixXd& eq,
                                  const Eigen::MatrixXd& fq, double epsilon,
                                  const PerturbConfig& cfg) {
  ConnectorOutcome out;
  for (int len = 1; len <= cfg.connector_max_len && !out.found; ++len) {
    std::vector<std::pair<double, Word>> probes;
    for (const Word& w : words_of_length(set.size(), len)) {
      const PlaneRotationResult res = plane_rotation_align(set, w, eq, fq, kInf);
      if (res.success) probes.emplace_back(std::fabs(res.theta), w);
    }
    std::stable_sort(probes.begin(), probes.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [theta1, base] : probes) {
      const int cap = std::max(1, cfg.connector_power_cap / len);
      int hit = -1;
      PlaneRotationResult hit_res;
      int last_fail = 0;
      for (int r = 1;; r = std::min(cap, 2 * r)) {
        PlaneRotationResult res = plane_rotation_align(set, repeat_word(base, r), eq, fq, epsilon);
        if (res.success) {
          hit = r;
          hit_res = std::move(res);
          break;
        }
        if (res.needed_epsilon > 0.0) out.min_needed = std::min(out.min_needed, res.needed_epsilon);
        last_fail = r;
        if (r == cap) break;
      }
      if (hit < 0) continue;
      // Minimal repetition count in (last_fail, hit].
      int lo = last_fail + 1, hi = hit;
      while (lo < hi) {
        const int mid = lo + (hi - lo) / 2;
        PlaneRotationResult res = plane_rotation_align(set, repeat_word(base, mid), eq, fq, epsilon);
        if (res.success) {
          hi = mid;
          hit_res = std::move(res);
        } else {
          if (res.needed_epsilon > 0.0) out.min_needed = std::min(out.min_needed, res.needed_epsilon);
          lo = mid + 1;
        }
      }
      out.found = true;
      out.base = base;
      out.reps = hi;
      out.res = std::move(hit_res);
      break;
    }
  }
  return out;
}

struct PivotAttempt {
  bool evaluated = false;
  double rate = kInf;
  int m = 0;
  Word pivot_word;
  ConnectorOutcome conn;
  PivotSplit split;
};

/// Certified log spectral radius bound for the composite P R P, evaluated in
/// the singular frame of P. With P = U S V^T the composite is similar (up to
/// an orthogonal factor that cannot increase the norm) to S G S with
/// G = V^T R U, so rho(PRP) <= ||S G S||. At the exact alignment root the
/// first column of G vanishes on the expanding rows; the measured selection
/// residuals cap what is left of it. Everything is assembled in log scale so
/// pivot powers far beyond double range stay exact.
double certified_composite_log_rho(const ScaledMatrix& p_sm, const SpectrumProfile& prof,
                                   const ScaledMatrix& r_sm, int p, double leak) {
  const int d = static_cast<int>(p_sm.unit.rows());
  Eigen::JacobiSVD<Matrix> svd(p_sm.unit, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix g = svd.matrixV().transpose() * r_sm.unit * svd.matrixU();
  const double ru_norm = (r_sm.unit * svd.matrixU().col(0)).norm();

  Eigen::MatrixXd logs(d, d);
  double top = -kInf;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      double mag = std::abs(g(i, j));
      if (j == 0 && i < p) mag = std::min(mag, leak * ru_norm);
      logs(i, j) = prof.lambda(i + 1) + prof.lambda(j + 1) + r_sm.log_scale +
                   (mag > 0.0 ? std::log(mag) : -kInf);
      top = std::max(top, logs(i, j));
    }
  }
  if (!std::isfinite(top)) return -kInf;
  Matrix shifted(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      shifted(i, j) = std::isfinite(logs(i, j)) ? std::exp(logs(i, j) - top) : 0.0;
    }
  }
  return top + std::log(operator_norm(shifted));
}

}  // namespace

PerturbationCertificate perturb_reduce(const MatrixSet& set, double epsilon,
                                       const PerturbConfig& cfg) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("perturb_reduce: epsilon must be finite and >= 0");
  }
  PerturbationCertificate cert;
  cert.base_set_id = join_labels(set);
  cert.epsilon = epsilon;

  const DominationIndex di = least_domination_index(set, cfg.n_max, cfg.bracket);
  if (di.ell <= 1) {
    cert.note =
        "set is 1-dominated: products keep a uniform top singular-value gap, so no small "
        "perturbation can lower the growth rate";
    return cert;
  }
  cert.ell = di.ell;

  cert.reference_rate = subradius_bracket(set, cfg.n_max, cfg.bracket).upper;

  const MatrixSet lifted = lift_set(set, cert.ell);
  const SubradiusBracket lifted_bracket = subradius_bracket(lifted, cfg.n_max, cfg.bracket);
  const Word base = lifted_bracket.best_norm_word;
  if (base.empty()) {
    cert.note = "no pivot word: the lifted bracket search returned nothing";
    return cert;
  }

  const int m_cap = std::max(1, cfg.max_pivot_len / base.length());
  std::vector<int> powers;
  for (int m = 1; m < m_cap; m *= 2) powers.push_back(m);
  powers.push_back(m_cap);

  // Connector searches are cached per (e, f) pair: for repeated pivot words
  // the subspaces stabilize quickly, and the search outcome carries over.
  bool memo_valid = false;
  Eigen::MatrixXd memo_e_proj, memo_f_proj;
  ConnectorOutcome memo_conn;
  double min_needed = kInf;

  PivotAttempt best;
  auto try_power = [&](int m) {
    if (m < 1 || m > m_cap) return;
    const Word pivot_word = repeat_word(base, m);
    const ScaledMatrix p_sm = scaled_product(set, pivot_word);
    const SpectrumProfile prof = spectrum_profile(p_sm, cert.ell);
    const PivotSplit split = pivot(prof, cert.ell);
    if (!(split.gap > 1e-12)) return;  // no singular-value gap to exploit
    const EFSubspaces ef = ef_subspaces(p_sm.unit, split.p);

    ConnectorOutcome conn;
    const Eigen::MatrixXd e_proj = ef.e * ef.e.transpose();
    const Eigen::MatrixXd f_proj = ef.f * ef.f.transpose();
    if (memo_valid && (e_proj - memo_e_proj).norm() <= 1e-10 &&
        (f_proj - memo_f_proj).norm() <= 1e-10) {
      conn = memo_conn;
    } else {
      conn = search_connector(set, ef.e, ef.f, epsilon, cfg);
      memo_valid = true;
      memo_e_proj = e_proj;
      memo_f_proj = f_proj;
      memo_conn = conn;
    }
    min_needed = std::min(min_needed, conn.min_needed);
    if (!conn.found) return;

    const ScaledMatrix r_sm = scaled_chain(conn.res.perturbed);
    const int total = 2 * pivot_word.length() + conn.reps * conn.base.length();
    const double leak = conn.res.target_residual_to_f + conn.res.v_selection_residual;
    const double log_rho = certified_composite_log_rho(p_sm, prof, r_sm, split.p, leak);
    if (!std::isfinite(log_rho)) return;
    const double rate = std::exp(log_rho / total);
    if (!best.evaluated || rate < best.rate) {
      best.evaluated = true;
      best.rate = rate;
      best.m = m;
      best.pivot_word = pivot_word;
      best.conn = conn;
      best.split = split;
    }
  };

  for (int m : powers) {
    try_power(m);
    if (cfg.target > 0.0 && best.evaluated && best.rate <= cfg.target) break;
  }
  // Greedy refinement around the best power while it keeps improving.
  for (int round = 1; round < cfg.rounds && best.evaluated; ++round) {
    const double before = best.rate;
    const int m0 = best.m;
    for (int dm : {m0 / 8, m0 / 16, -m0 / 8, -m0 / 16}) {
      if (dm != 0) try_power(m0 + dm);
    }
    if (!(best.rate < before * (1.0 - cfg.improve_tol))) break;
  }

  if (!best.evaluated) {
    if (std::isfinite(min_needed)) {
      std::ostringstream os;
      os << "epsilon too small: the cheapest connector candidate needs epsilon >= " << min_needed;
      cert.note = os.str();
      cert.needed_epsilon = min_needed;
    } else {
      cert.note = "no aligning connector word found";
    }
    return cert;
  }

  cert.pivot_word = best.pivot_word;
  cert.connector_word = repeat_word(best.conn.base, best.conn.reps);
  cert.perturbed_matrices = best.conn.res.perturbed;
  cert.source_indices = cert.connector_word.indices;
  cert.total_length = 2 * best.pivot_word.length() + cert.connector_word.length();
  cert.achieved_rate = best.rate;
  cert.gap_check = best.conn.res.gap_check;
  cert.theta = best.conn.res.theta;
  cert.pivot_index = best.split.p;
  cert.pivot_gap = best.split.gap;
  {
    std::ostringstream os;
    const std::string bs = set.word_labels(base);
    const std::string cs = set.word_labels(best.conn.base);
    const std::string bw = base.length() > 1 ? "(" + bs + ")" : bs;
    const std::string cw = best.conn.base.length() > 1 ? "(" + cs + ")" : cs;
    os << bw << "^" << best.m << " . [rot(" << best.conn.res.theta << ")*" << cw << "]^"
       << best.conn.reps << " . " << bw << "^" << best.m;
    cert.full_word = os.str();
  }

  if (best.rate < cert.reference_rate) {
    cert.success = true;
  } else {
    std::ostringstream os;
    os << "no drop: best achievable rate " << best.rate << " does not beat the reference "
       << cert.reference_rate;
    cert.note = os.str();
  }
  return cert;
}

CertificateCheck verify_certificate(const MatrixSet& set, const PerturbationCertificate& cert) {
  CertificateCheck chk;
  const auto fail = [&chk](std::string why) {
    chk.failure = std::move(why);
    return chk;
  };

  if (!cert.success) return fail("certificate records a failed search; nothing to verify");
  if (!(cert.epsilon >= 0.0) || !std::isfinite(cert.epsilon)) {
    return fail("epsilon is not finite and nonnegative");
  }
  if (cert.ell < 2 || cert.ell > set.dim()) return fail("ell is outside [2, dim]");
  try {
    set.validate_word(cert.pivot_word);
    set.validate_word(cert.connector_word);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  if (cert.pivot_word.empty() || cert.connector_word.empty()) {
    return fail("pivot and connector words must be nonempty");
  }
  if (cert.total_length != 2 * cert.pivot_word.length() + cert.connector_word.length()) {
    return fail("total_length does not equal 2|pivot| + |connector|");
  }
  if (cert.source_indices != cert.connector_word.indices) {
    return fail("source_indices do not match the connector word");
  }
  if (cert.perturbed_matrices.size() != cert.connector_word.indices.size()) {
    return fail("perturbed letter count does not match the connector word");
  }
  const int d = set.dim();
  for (const Matrix& l : cert.perturbed_matrices) {
    if (l.rows() != d || l.cols() != d) return fail("a perturbed letter has wrong dimensions");
  }

  // Distance claims: every stored letter stays within epsilon of its source,
  // and adjoining the letters moves the set by at most epsilon in Hausdorff
  // distance.
  const double dist_tol = 1e-12 * std::max(1.0, set.max_op_norm());
  for (std::size_t i = 0; i < cert.perturbed_matrices.size(); ++i) {
    const Matrix& src = set.matrix(cert.source_indices[i]);
    chk.max_letter_distance =
        std::max(chk.max_letter_distance, operator_norm(cert.perturbed_matrices[i] - src));
  }
  if (chk.max_letter_distance > cert.epsilon + dist_tol) {
    return fail("a perturbed letter is farther than epsilon from its source");
  }
  try {
    std::vector<Matrix> joined = set.matrices();
    joined.insert(joined.end(), cert.perturbed_matrices.begin(), cert.perturbed_matrices.end());
    chk.hausdorff = hausdorff_distance(set, MatrixSet(d, std::move(joined)));
  } catch (const std::exception& e) {
    return fail(std::string("perturbed letters do not form a valid set: ") + e.what());
  }
  if (chk.hausdorff > cert.epsilon + dist_tol) {
    return fail("the perturbed set is farther than epsilon in Hausdorff distance");
  }

  // Pivot data reproduces from the pivot word alone.
  const ScaledMatrix p_sm = scaled_product(set, cert.pivot_word);
  const SpectrumProfile prof = spectrum_profile(p_sm, cert.ell);
  const PivotSplit split = pivot(prof, cert.ell);
  if (split.p != cert.pivot_index) return fail("pivot index does not reproduce");
  if (std::fabs(split.gap - cert.pivot_gap) > 1e-9 * std::max(1.0, std::fabs(cert.pivot_gap))) {
    return fail("pivot gap does not reproduce");
  }

  // The alignment of the stored connector word reproduces the stored angle
  // and letters. The letters round-trip files at 17 significant digits, so
  // they are compared near machine precision.
  const EFSubspaces ef = ef_subspaces(p_sm.unit, split.p);
  const PlaneRotationResult res =
      plane_rotation_align(set, cert.connector_word, ef.e, ef.f, cert.epsilon);
  if (!res.success) {
    return fail(res.note.empty() ? "connector alignment does not reproduce"
                                 : "connector alignment does not reproduce: " + res.note);
  }
  chk.recomputed_theta = res.theta;
  if (std::fabs(res.theta - cert.theta) > 1e-9 * std::max(1.0, std::fabs(cert.theta))) {
    return fail("alignment angle does not reproduce");
  }
  for (std::size_t i = 0; i < cert.perturbed_matrices.size(); ++i) {
    const double gap = (res.perturbed[i] - cert.perturbed_matrices[i]).cwiseAbs().maxCoeff();
    chk.letter_mismatch = std::max(chk.letter_mismatch, gap);
  }
  if (chk.letter_mismatch > 1e-9 * std::max(1.0, set.max_op_norm())) {
    return fail("perturbed letters do not reproduce");
  }

  // The certified composite rate reproduces from the stored letters.
  const ScaledMatrix r_sm = scaled_chain(cert.perturbed_matrices);
  const double leak = res.target_residual_to_f + res.v_selection_residual;
  const double log_rho = certified_composite_log_rho(p_sm, prof, r_sm, split.p, leak);
  chk.recomputed_rate = std::isfinite(log_rho) ? std::exp(log_rho / cert.total_length) : 0.0;
  chk.rate_mismatch = std::fabs(chk.recomputed_rate - cert.achieved_rate) /
                      std::max(cert.achieved_rate, 1e-300);
  if (chk.rate_mismatch > 1e-9) return fail("certified composite rate does not reproduce");
  if (!(chk.recomputed_rate < cert.reference_rate)) {
    return fail("recomputed rate does not beat the recorded reference rate");
  }

  chk.verified = true;
  return chk;
}

}  // namespace subradius
