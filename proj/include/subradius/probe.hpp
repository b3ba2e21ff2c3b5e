#pragma once

#include "subradius/domination.hpp"
#include "subradius/estimators.hpp"
#include "subradius/matrix_set.hpp"

#include <string>
#include <vector>

namespace subradius {

enum class ContinuityOutcome { Continuous, Discontinuous, Undetermined };
const char* to_string(ContinuityOutcome o);

/// Outcome of the continuity criterion for the lower spectral radius: with
/// ell the least domination index, the map is continuous at the set exactly
/// when its lower spectral radius equals the ell-th root of the lower
/// spectral radius of the ell-th exterior-power lift.
struct ContinuityVerdict {
  int ell = 1;
  DominationIndex domination;  ///< evidence behind `ell`
  SubradiusBracket lhs;        ///< bracket of the set itself
  double rhs_lower = 0.0;      ///< bracket of the lifted value, ell-th root
  double rhs_upper = 0.0;
  bool rhs_exact = false;  ///< ell == dim: the top power is exactly (min |det|)^(1/d)
  ContinuityOutcome outcome = ContinuityOutcome::Undetermined;
  double margin = 0.0;  ///< absolute separation threshold applied
  std::string reason;
};

/// Applies the criterion with a relative margin of 1e-6 and hedged rules:
///  - ell == 1: continuous (the criterion compares the value with itself);
///  - lhs.lower >= rhs_upper + margin: discontinuous (the certified lower
///    bound separates from the lifted value);
///  - |lhs.upper - rhs_lower| <= margin: continuous (the word attaining
///    lhs.upper pinches the value onto the lifted bound);
///  - otherwise undetermined. The brackets are never forced to a verdict:
///  the lower spectral radius is only upper semi-continuous and a wrong
///  "discontinuous" cannot be walked back by more enumeration.
ContinuityVerdict continuity_check(const MatrixSet& set, int n_max, const BracketConfig& cfg = {});

/// Per-angle upper/lower bracket of the set with the rotation R_theta
/// composed on the left of every element (left composition matters: R_theta A
/// and A R_theta differ). `baseline_*` is the bracket of the unrotated set.
struct RotationScan {
  std::vector<double> thetas;
  std::vector<double> upper_rates;
  std::vector<double> lower_rates;
  double baseline_lower = 0.0;
  double baseline_upper = 0.0;
  bool drop_detected = false;   ///< some theta != 0 has upper <= baseline_lower - margin
  double drop_magnitude = 0.0;  ///< max(0, baseline_lower - min upper over theta != 0)
  double margin = 0.0;
};

/// Requires dim == 2 and a nonempty grid (throws std::invalid_argument).
/// Grid points run concurrently; each point runs the estimators' own
/// parallel enumeration.
RotationScan rotation_scan(const MatrixSet& set, const std::vector<double>& theta_grid, int n_max,
                           const BracketConfig& cfg = {});

// ---------------------------------------------------------------------------
// Example gallery
// ---------------------------------------------------------------------------

/// {diag(2, 1/8), I}: the standard two-letter discontinuity example.
MatrixSet gallery_simple();

/// {diag(2, 1/8), R_{pi/(2n)}}: the identity replaced by the rotation whose
/// n-th power is a quarter turn. Requires n >= 1.
MatrixSet gallery_simple_perturbed(int n);

/// {diag(1/3, 3), diag(2, 1/2)}: commuting pair whose lower spectral radius
/// equals 1 but is approached, never attained, by finite products.
MatrixSet gallery_nasty1();

/// {diag(2, 1/8), diag(1, -1)}: rotating this pair does not drop the lower
/// spectral radius (the second letter has negative determinant).
MatrixSet gallery_no_discontinuity();

/// {diag(2, 2^-m, 1), diag(2^-m, 2, 1)}: invertible version of the pair of
/// rank-deficient projections whose singular-value-gap domination is not an
/// interior property; here the gap closes along words with m-to-1 letter
/// ratio, so the set is not 1-dominated for any m >= 0.
MatrixSet gallery_non_dom_invertibilized(int m);

/// Block-diagonal join: every pairing diag(B1_i, B2_j) plus the scaled
/// isometry diag(lambda R1, lambda R2). Valid inputs must satisfy
///   inf sigma_min(B1) > lambda > (inf |det B1| * inf |det B2|)^(1/(d1+d2)),
/// which makes the joined set a discontinuity point with least domination
/// index d1 + d2 and lower spectral radius lambda. Throws
/// std::invalid_argument naming the violated inequality, and requires R1, R2
/// orthogonal.
MatrixSet gallery_block_direct_sum(const MatrixSet& b1, const MatrixSet& b2, double lambda,
                                   const Matrix& r1, const Matrix& r2);

/// {R, H} with R the rotation by q pi / p (p, q coprime, p >= 1) and H a
/// scaled near-projection built so the union of directions within delta of
/// the x-axis and its rotated copies is preserved by both letters while
/// |det H| < 1. The lower spectral radius is 1 but the top-wedge value is
/// below 1, so the pair is a discontinuity point for every rational angle.
///
/// delta <= 0 selects the default pi/(4p); otherwise requires
/// 0 < delta < pi/(2p). The construction is deterministic; `seed` is
/// accepted for interface stability and ignored. The projection direction is
/// the x-axis, the kernel direction is at angle pi/(2p), and the
/// regularization P + eta I uses the largest eta in {1e-1, ..., 1e-6}
/// passing the validation checks (image cone containment, |det| < kappa^2,
/// minimal stretch >= kappa on the cone). Throws std::invalid_argument
/// naming the first violated requirement.
MatrixSet gallery_rational_rotation(int p, int q, double delta = 0.0, unsigned seed = 0);

// ---------------------------------------------------------------------------
// Impurity resistance probe
// ---------------------------------------------------------------------------

/// For each epsilon in the grid: the minimum of (1/n) log ||A_n ... A_1||
/// over all words of length n <= n_max using at most epsilon*n instances of
/// R (the rest H). Positive values across small epsilons are evidence that
/// the pair resists impurities; never a proof.
struct ImpurityProbe {
  std::vector<double> epsilons;
  std::vector<double> lambda_est;
  std::vector<Word> witnesses;  ///< argmin word per epsilon (index 0 = H, 1 = R)
  int n_max = 0;
  double margin = 0.0;
  bool positive_with_margin = false;  ///< every lambda_est >= margin
};

/// Exhaustive over all 2^(n_max+1) words, so n_max is capped at 24. H and R
/// must be 2x2 with determinant 1 within 1e-9 (throws otherwise).
ImpurityProbe resists_impurities_probe(const Matrix& h, const Matrix& r,
                                       const std::vector<double>& eps_grid, int n_max);

}  // namespace subradius
