#include "subradius/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "subradius/parallel.hpp"
#include "subradius/projective.hpp"

namespace subradius {

namespace {

constexpr double kRelMargin = 1e-6;  // relative verdict margin (continuity, scans)
constexpr double kImpurityMargin = 1e-6;

const double kInf = std::numeric_limits<double>::infinity();

// cos/sin residue at multiples of pi/2 is snapped to an exact 0 or +-1.
// Long products amplify a stray diagonal entry by their condition number
// (2^2044 for the 512-letter witness of the perturbed example), so a quarter
// turn must be the exact permutation matrix, not one with cos(pi/2) ~ 6e-17.
Matrix rotation2(double theta) {
  auto snap = [](double x) {
    if (std::fabs(x) < 1e-15) return 0.0;
    if (std::fabs(x - 1.0) < 1e-15) return 1.0;
    if (std::fabs(x + 1.0) < 1e-15) return -1.0;
    return x;
  };
  const double c = snap(std::cos(theta)), s = snap(std::sin(theta));
  Matrix r(2, 2);
  r << c, -s, s, c;
  return r;
}

Matrix diag2(double a, double b) {
  Matrix m(2, 2);
  m << a, 0.0, 0.0, b;
  return m;
}

/// Angle of the line through v, reduced to (-pi/2, pi/2].
double line_angle(const Eigen::Vector2d& v) {
  double a = std::atan2(v.y(), v.x());
  if (a > 0.5 * kPi) a -= kPi;
  if (a <= -0.5 * kPi) a += kPi;
  return a;
}

/// Signed distance between two line angles, reduced to (-pi/2, pi/2].
double line_angle_diff(double a, double b) {
  double d = std::fmod(a - b, kPi);
  if (d > 0.5 * kPi) d -= kPi;
  if (d <= -0.5 * kPi) d += kPi;
  return d;
}

}  // namespace

const char* to_string(ContinuityOutcome o) {
  switch (o) {
    case ContinuityOutcome::Continuous:
      return "continuous";
    case ContinuityOutcome::Discontinuous:
      return "discontinuous";
    case ContinuityOutcome::Undetermined:
      return "undetermined";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// continuity_check
// ---------------------------------------------------------------------------

ContinuityVerdict continuity_check(const MatrixSet& set, int n_max, const BracketConfig& cfg) {
  ContinuityVerdict out;
  out.domination = least_domination_index(set, std::min(n_max, 12), cfg);
  out.ell = out.domination.ell;
  out.lhs = subradius_bracket(set, n_max, cfg);

  const int d = set.dim();
  if (out.ell == 1) {
    out.rhs_lower = out.lhs.lower;
    out.rhs_upper = out.lhs.upper;
    out.outcome = ContinuityOutcome::Continuous;
    out.margin = kRelMargin * std::max(std::fabs(out.lhs.upper), 1e-300);
    out.reason =
        "least domination index is 1: the criterion compares the lower spectral "
        "radius with itself and holds identically";
    return out;
  }

  if (out.ell == d) {
    // The top exterior power is one-dimensional: its lower spectral radius is
    // exactly the smallest |det|, no enumeration involved.
    const double v = std::pow(set.min_abs_det(), 1.0 / d);
    out.rhs_lower = v;
    out.rhs_upper = v;
    out.rhs_exact = true;
  } else {
    const SubradiusBracket wb = subradius_bracket(lift_set(set, out.ell), n_max, cfg);
    out.rhs_lower = std::pow(wb.lower, 1.0 / out.ell);
    out.rhs_upper = std::pow(wb.upper, 1.0 / out.ell);
  }

  out.margin = kRelMargin * std::max(std::fabs(out.lhs.upper), std::fabs(out.rhs_upper));
  std::ostringstream os;
  if (out.lhs.lower >= out.rhs_upper + out.margin) {
    out.outcome = ContinuityOutcome::Discontinuous;
    os << "certified lower bound " << out.lhs.lower << " separates from the order-" << out.ell
       << " lifted value (<= " << out.rhs_upper << ") by more than the margin " << out.margin;
  } else if (std::fabs(out.lhs.upper - out.rhs_lower) <= out.margin) {
    out.outcome = ContinuityOutcome::Continuous;
    os << "attained upper bound " << out.lhs.upper << " (word " << set.word_labels(out.lhs.best_word)
       << ") matches the order-" << out.ell << " lifted lower bound " << out.rhs_lower
       << " within the margin " << out.margin;
  } else {
    out.outcome = ContinuityOutcome::Undetermined;
    os << "brackets overlap within the margin: [" << out.lhs.lower << ", " << out.lhs.upper
       << "] vs lifted [" << out.rhs_lower << ", " << out.rhs_upper << "]";
  }
  out.reason = os.str();
  return out;
}

// ---------------------------------------------------------------------------
// rotation_scan
// ---------------------------------------------------------------------------

RotationScan rotation_scan(const MatrixSet& set, const std::vector<double>& theta_grid, int n_max,
                           const BracketConfig& cfg) {
  if (set.dim() != 2) {
    throw std::invalid_argument("rotation_scan: the rotation family is defined for 2x2 sets");
  }
  if (theta_grid.empty()) throw std::invalid_argument("rotation_scan: empty theta grid");

  RotationScan out;
  out.thetas = theta_grid;
  out.upper_rates.assign(theta_grid.size(), 0.0);
  out.lower_rates.assign(theta_grid.size(), 0.0);

  const SubradiusBracket base = subradius_bracket(set, n_max, cfg);
  out.baseline_lower = base.lower;
  out.baseline_upper = base.upper;

  parallel_for(
      static_cast<int>(theta_grid.size()),
      [&](int i) {
        const Matrix rot = rotation2(theta_grid[static_cast<std::size_t>(i)]);
        std::vector<Matrix> rotated;
        rotated.reserve(set.matrices().size());
        for (const auto& a : set.matrices()) rotated.push_back(rot * a);
        const MatrixSet rset(2, std::move(rotated), set.labels());
        const SubradiusBracket b = subradius_bracket(rset, n_max, cfg);
        out.upper_rates[static_cast<std::size_t>(i)] = b.upper;
        out.lower_rates[static_cast<std::size_t>(i)] = b.lower;
      },
      cfg.threads);

  out.margin = kRelMargin * out.baseline_lower;
  double min_upper = kInf;
  for (std::size_t i = 0; i < theta_grid.size(); ++i) {
    if (theta_grid[i] != 0.0) min_upper = std::min(min_upper, out.upper_rates[i]);
  }
  if (std::isfinite(min_upper)) {
    out.drop_detected = min_upper <= out.baseline_lower - out.margin;
    out.drop_magnitude = std::max(0.0, out.baseline_lower - min_upper);
  }
  return out;
}

// ---------------------------------------------------------------------------
// gallery
// ---------------------------------------------------------------------------

MatrixSet gallery_simple() {
  return MatrixSet(2, {diag2(2.0, 0.125), Matrix::Identity(2, 2)}, {"D", "I"});
}

MatrixSet gallery_simple_perturbed(int n) {
  if (n < 1) throw std::invalid_argument("gallery_simple_perturbed: n must be >= 1");
  return MatrixSet(2, {diag2(2.0, 0.125), rotation2(0.5 * kPi / n)}, {"D", "R"});
}

MatrixSet gallery_nasty1() {
  return MatrixSet(2, {diag2(1.0 / 3.0, 3.0), diag2(2.0, 0.5)}, {"A1", "A2"});
}

MatrixSet gallery_no_discontinuity() {
  return MatrixSet(2, {diag2(2.0, 0.125), diag2(1.0, -1.0)}, {"A1", "A2"});
}

MatrixSet gallery_non_dom_invertibilized(int m) {
  if (m < 0 || m > 500) {
    throw std::invalid_argument("gallery_non_dom_invertibilized: m must lie in [0, 500]");
  }
  const double t = std::ldexp(1.0, -m);
  Matrix a(3, 3), b(3, 3);
  a << 2.0, 0, 0, 0, t, 0, 0, 0, 1.0;
  b << t, 0, 0, 0, 2.0, 0, 0, 0, 1.0;
  return MatrixSet(3, {a, b}, {"A1", "A2"});
}

MatrixSet gallery_block_direct_sum(const MatrixSet& b1, const MatrixSet& b2, double lambda,
                                   const Matrix& r1, const Matrix& r2) {
  const int d1 = b1.dim(), d2 = b2.dim();
  if (r1.rows() != d1 || r1.cols() != d1 || r2.rows() != d2 || r2.cols() != d2) {
    throw std::invalid_argument("gallery_block_direct_sum: rotation blocks must match the set dims");
  }
  const double ortho1 = (r1.transpose() * r1 - Matrix::Identity(d1, d1)).norm();
  const double ortho2 = (r2.transpose() * r2 - Matrix::Identity(d2, d2)).norm();
  if (ortho1 > 1e-12) throw std::invalid_argument("gallery_block_direct_sum: R1 is not orthogonal");
  if (ortho2 > 1e-12) throw std::invalid_argument("gallery_block_direct_sum: R2 is not orthogonal");

  const double sig = b1.min_sigma_min();
  const double det_floor = std::pow(b1.min_abs_det() * b2.min_abs_det(), 1.0 / (d1 + d2));
  if (!(sig > lambda)) {
    std::ostringstream os;
    os << "gallery_block_direct_sum: violated inf sigma_min(B1) > lambda: " << sig
       << " <= " << lambda;
    throw std::invalid_argument(os.str());
  }
  if (!(lambda > det_floor)) {
    std::ostringstream os;
    os << "gallery_block_direct_sum: violated lambda > (inf |det B1 det B2|)^(1/(d1+d2)): "
       << lambda << " <= " << det_floor;
    throw std::invalid_argument(os.str());
  }

  const int d = d1 + d2;
  std::vector<Matrix> mats;
  std::vector<std::string> labels;
  mats.reserve(static_cast<std::size_t>(b1.size() * b2.size()) + 1);
  for (int i = 0; i < b1.size(); ++i) {
    for (int j = 0; j < b2.size(); ++j) {
      Matrix m = Matrix::Zero(d, d);
      m.topLeftCorner(d1, d1) = b1.matrix(i);
      m.bottomRightCorner(d2, d2) = b2.matrix(j);
      mats.push_back(std::move(m));
      labels.push_back(b1.label(i) + "+" + b2.label(j));
    }
  }
  Matrix iso = Matrix::Zero(d, d);
  iso.topLeftCorner(d1, d1) = lambda * r1;
  iso.bottomRightCorner(d2, d2) = lambda * r2;
  mats.push_back(std::move(iso));
  labels.emplace_back("rot");
  return MatrixSet(d, std::move(mats), std::move(labels));
}

MatrixSet gallery_rational_rotation(int p, int q, double delta, unsigned seed) {
  (void)seed;  // reserved; the construction is deterministic
  if (p < 1) throw std::invalid_argument("gallery_rational_rotation: p must be >= 1");
  if (std::gcd(std::abs(q), p) != 1) {
    throw std::invalid_argument("gallery_rational_rotation: p and q must be relatively prime");
  }
  if (delta <= 0.0) delta = 0.25 * kPi / p;
  if (!(delta < 0.5 * kPi / p)) {
    std::ostringstream os;
    os << "gallery_rational_rotation: violated delta < pi/(2p): " << delta
       << " >= " << 0.5 * kPi / p;
    throw std::invalid_argument(os.str());
  }

  const Matrix rot = rotation2(q * kPi / p);

  // The invariant direction family: arcs of half-width delta around the
  // rotation orbit of the x-axis, which is {j pi / p} as line angles because
  // p and q are coprime.
  std::vector<double> centers(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) centers[static_cast<std::size_t>(j)] = j * kPi / p;

  // Projection onto the x-axis along the kernel direction at angle
  // psi = pi/(2p), the midpoint of the gap between the arcs at 0 and pi/p —
  // as far from the whole family as a line can be.
  const double psi = 0.5 * kPi / p;
  Matrix proj(2, 2);
  proj << 1.0, -std::cos(psi) / std::sin(psi), 0.0, 0.0;

  // ||P u(t)|| = |sin(psi - t)| / sin(psi) attains its minimum over the arc
  // family at an arc endpoint (|sin| is monotone on either side of psi).
  double min_stretch = kInf;
  for (double c : centers) {
    for (double e : {c - delta, c + delta}) {
      min_stretch = std::min(min_stretch, std::fabs(std::sin(psi - e)) / std::sin(psi));
    }
  }
  const double kappa = 0.5 * min_stretch;

  // Regularize the projection: largest eta whose perturbed matrix still maps
  // the whole family strictly into the base arc, keeps |det| below kappa^2,
  // and never shrinks family vectors below kappa.
  constexpr int kSamplesPerArc = 257;
  std::string failure;
  for (double eta : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    const Matrix pt = proj + eta * Matrix::Identity(2, 2);
    const double det = pt.determinant();
    if (!(std::fabs(det) < kappa * kappa)) {
      std::ostringstream os;
      os << "eta " << eta << ": violated |det(P + eta I)| < kappa^2: " << std::fabs(det)
         << " >= " << kappa * kappa;
      failure = os.str();
      continue;
    }
    bool ok = true;
    for (double c : centers) {
      for (int s = 0; s < kSamplesPerArc && ok; ++s) {
        const double t = c - delta + 2.0 * delta * s / (kSamplesPerArc - 1);
        const Eigen::Vector2d u(std::cos(t), std::sin(t));
        const Eigen::Vector2d img = pt * u;
        if (img.norm() < kappa) {
          std::ostringstream os;
          os << "eta " << eta << ": violated ||(P + eta I) v|| >= kappa on the cone: "
             << img.norm() << " < " << kappa;
          failure = os.str();
          ok = false;
          break;
        }
        if (std::fabs(line_angle(img)) > delta) {
          std::ostringstream os;
          os << "eta " << eta << ": violated (P + eta I) cone containment: image angle "
             << line_angle(img) << " outside +-" << delta;
          failure = os.str();
          ok = false;
          break;
        }
        // The rotation letter must keep the sample inside the family.
        const double rt = line_angle(rot * u);
        double dist = kInf;
        for (double c2 : centers) dist = std::min(dist, std::fabs(line_angle_diff(rt, c2)));
        if (dist > delta + 1e-9) {
          std::ostringstream os;
          os << "eta " << eta << ": violated rotation invariance of the cone family: distance "
             << dist << " > delta";
          failure = os.str();
          ok = false;
          break;
        }
      }
      if (!ok) break;
    }
    if (!ok) continue;

    const Matrix h = pt / kappa;
    if (!(std::fabs(h.determinant()) < 1.0)) {
      std::ostringstream os;
      os << "eta " << eta << ": violated |det H| < 1: " << std::fabs(h.determinant());
      failure = os.str();
      continue;
    }
    return MatrixSet(2, {rot, h}, {"R", "H"});
  }
  throw std::invalid_argument("gallery_rational_rotation: no regularization in {1e-1..1e-6} passes: " +
                              failure);
}

// ---------------------------------------------------------------------------
// resists_impurities_probe
// ---------------------------------------------------------------------------

namespace {

struct ImpurityBest {
  double rate = kInf;
  Word word;
};

/// Depth-first over all words, lexicographic within each length (H = 0
/// first), recording the minimal normalized log-norm per (length, R-count).
/// Strict improvement keeps the first word visited, so witnesses are
/// shortest-then-lex deterministic.
void impurity_scan(const Matrix& h, const Matrix& r, int n_max, std::vector<int>& word,
                   const Matrix& prefix, int r_count, std::vector<std::vector<ImpurityBest>>& best) {
  const int n = static_cast<int>(word.size());
  if (n > 0) {
    const double rate = std::log(operator_norm(prefix)) / n;
    ImpurityBest& slot = best[static_cast<std::size_t>(n)][static_cast<std::size_t>(r_count)];
    if (rate < slot.rate) {
      slot.rate = rate;
      slot.word = Word(word);
    }
  }
  if (n == n_max) return;
  for (int letter = 0; letter < 2; ++letter) {
    word.push_back(letter);
    const Matrix next = (letter == 0 ? h : r) * prefix;
    impurity_scan(h, r, n_max, word, next, r_count + letter, best);
    word.pop_back();
  }
}

}  // namespace

ImpurityProbe resists_impurities_probe(const Matrix& h, const Matrix& r,
                                       const std::vector<double>& eps_grid, int n_max) {
  if (h.rows() != 2 || h.cols() != 2 || r.rows() != 2 || r.cols() != 2) {
    throw std::invalid_argument("resists_impurities_probe: H and R must be 2x2");
  }
  for (const auto* m : {&h, &r}) {
    if (std::fabs(m->determinant() - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "resists_impurities_probe: determinant must be 1, got " << m->determinant();
      throw std::invalid_argument(os.str());
    }
  }
  if (eps_grid.empty()) throw std::invalid_argument("resists_impurities_probe: empty epsilon grid");
  if (n_max < 1 || n_max > 24) {
    throw std::invalid_argument(
        "resists_impurities_probe: n_max must lie in [1, 24] (exhaustive enumeration)");
  }

  std::vector<std::vector<ImpurityBest>> best(static_cast<std::size_t>(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) best[static_cast<std::size_t>(n)].resize(static_cast<std::size_t>(n) + 1);
  std::vector<int> word;
  word.reserve(static_cast<std::size_t>(n_max));
  impurity_scan(h, r, n_max, word, Matrix::Identity(2, 2), 0, best);

  // Prefix minima over the R-count so each epsilon cap is a single lookup.
  for (int n = 1; n <= n_max; ++n) {
    auto& row = best[static_cast<std::size_t>(n)];
    for (int c = 1; c <= n; ++c) {
      if (row[static_cast<std::size_t>(c - 1)].rate < row[static_cast<std::size_t>(c)].rate) {
        row[static_cast<std::size_t>(c)] = row[static_cast<std::size_t>(c - 1)];
      }
    }
  }

  ImpurityProbe out;
  out.epsilons = eps_grid;
  out.n_max = n_max;
  out.margin = kImpurityMargin;
  out.lambda_est.reserve(eps_grid.size());
  out.witnesses.reserve(eps_grid.size());
  bool all_positive = true;
  for (double eps : eps_grid) {
    if (!(eps >= 0.0)) {
      throw std::invalid_argument("resists_impurities_probe: epsilon must be >= 0");
    }
    double lambda = kInf;
    Word witness;
    for (int n = 1; n <= n_max; ++n) {
      const int cap = std::min(n, static_cast<int>(std::floor(eps * n + 1e-9)));
      const ImpurityBest& slot = best[static_cast<std::size_t>(n)][static_cast<std::size_t>(cap)];
      if (slot.rate < lambda) {
        lambda = slot.rate;
        witness = slot.word;
      }
    }
    out.lambda_est.push_back(lambda);
    out.witnesses.push_back(std::move(witness));
    all_positive = all_positive && lambda >= out.margin;
  }
  out.positive_with_margin = all_positive;
  return out;
}

}  // namespace subradius
