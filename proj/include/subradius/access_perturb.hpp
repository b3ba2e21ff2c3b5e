#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "subradius/estimators.hpp"
#include "subradius/matrix_set.hpp"

namespace subradius {

/// Logarithmic singular-value profile of a single invertible matrix:
///   lambda_k = log sigma_k (non-increasing),
///   tau_k    = lambda_1 + ... + lambda_k   (concave in k, tau_0 = 0),
///   zeta_k   = sum_{i<k} tau_i - ((k-1)/2) tau_k   for k = 2..d.
/// zeta_k measures how far the top-k singular values are from being equal:
/// it is nonnegative, and vanishes exactly when sigma_1 = ... = sigma_k.
struct SpectrumProfile {
  std::vector<double> lambdas;  ///< lambda_1..lambda_d
  std::vector<double> taus;     ///< tau_1..tau_d
  std::vector<double> zetas;    ///< zeta_2..zeta_K (K = upto_k), index k-2

  int dim() const { return static_cast<int>(lambdas.size()); }
  double lambda(int k) const;  ///< k in [1, d]
  double tau(int k) const;     ///< k in [0, d]; tau(0) == 0
  double zeta(int k) const;    ///< k in [2, upto_k]
};

/// Profile of an invertible matrix. `upto_k` limits how many zeta entries are
/// computed (0 = all of k = 2..d). Throws std::invalid_argument on empty,
/// non-square, or singular input.
SpectrumProfile spectrum_profile(const Matrix& m, int upto_k = 0);

/// Overflow-safe overload for long products accumulated in log scale.
SpectrumProfile spectrum_profile(const ScaledMatrix& m, int upto_k = 0);

/// The pivot of a matrix at level ell: the index p in [1, ell-1] where the
/// log singular-value gap lambda_p - lambda_{p+1} is largest (ties resolved
/// to the smallest p), and half that gap. zeta_ell > 0 guarantees gap > 0.
struct PivotSplit {
  int p = 0;
  double gap = 0.0;  ///< (lambda_p - lambda_{p+1}) / 2
};

/// Requires 2 <= ell <= d (throws std::invalid_argument otherwise).
PivotSplit pivot(const SpectrumProfile& profile, int ell);
PivotSplit pivot(const Matrix& m, int ell);

/// The two subspaces through which a large singular-value gap of P is
/// exploited: e = span of the top-p left singular vectors (where images of
/// generic vectors under P concentrate) and f = span of the bottom (d-p)
/// right singular vectors (the directions P expands least). Both are
/// returned as matrices with orthonormal columns. `degenerate` is set when
/// sigma_p and sigma_{p+1} are relatively equal to within 1e-9, in which
/// case the spans are numerically ambiguous but still returned.
struct EFSubspaces {
  Eigen::MatrixXd e;  ///< d x p
  Eigen::MatrixXd f;  ///< d x (d-p)
  bool degenerate = false;
};

/// Requires 1 <= p < d and invertible input.
EFSubspaces ef_subspaces(const Matrix& p_mat, int p);

/// Result of the two-dimensional alignment search: a single angle theta such
/// that inserting the rotation R_theta before every factor makes the product
/// applied to v proportional to the unperturbed product applied to w:
///   R_theta A_n ... R_theta A_1 v  ||  A_n ... A_1 w.
/// `residual` is |sin| of the angle between the two sides, re-verified by a
/// direct product evaluation. On failure (the target direction lies outside
/// the range of achieved angles over [-delta, delta]) `success` is false and
/// the achieved range is reported in `achieved_lo`/`achieved_hi` (lifted to
/// the universal cover; `target` lives in the same chart).
struct AlignmentCertificate {
  bool success = false;
  double theta = 0.0;
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  Eigen::Vector2d w = Eigen::Vector2d::Zero();
  double residual = 0.0;
  double achieved_lo = 0.0;
  double achieved_hi = 0.0;
  double target = 0.0;
  Word word;  ///< filled by callers that aligned a word of a set
  std::string note;
};

/// Finds theta in [-delta, delta] by bisection on the achieved-angle
/// function, which is strictly increasing because all factors preserve
/// orientation. Accepts when the re-verified residual is at most 1e-8.
/// When several angles work, the one smallest in absolute value is returned
/// (ties broken toward positive theta). Requires nonempty 2x2 factors with
/// positive determinant, nonzero v and w, and delta > 0 (throws
/// std::invalid_argument otherwise).
AlignmentCertificate align_2d(const std::vector<Matrix>& mats, const Eigen::Vector2d& v,
                              const Eigen::Vector2d& w, double delta);

/// Result of perturbing the letters of a word by in-plane rotations so that
/// the perturbed product carries the subspace e into a direction meeting f.
/// Each perturbed letter is L_i = Rhat_i A_i where Rhat_i rotates a 2-plane
/// by the common angle `theta` and fixes its orthogonal complement, so
/// ||L_i - A_i|| <= 2 sin(|theta|/2) ||A_i||; the exact norms are checked
/// against epsilon per matrix. On failure the rotation angle the alignment
/// would have needed and the corresponding epsilon are reported.
struct PlaneRotationResult {
  bool success = false;
  std::vector<Matrix> perturbed;  ///< L_1..L_m in application order
  double theta = 0.0;
  double max_perturbation = 0.0;     ///< max_i ||L_i - A_i||
  double needed_theta = 0.0;         ///< rotation angle the target required
  double needed_epsilon = 0.0;       ///< max_i 2 sin(|needed_theta|/2) ||A_i||
  double principal_angle_to_f = 0.0; ///< smallest principal angle of (L_m..L_1)e vs f
  double gap_check = 0.0;            ///< ||Pv|| / ||Pw|| for the selected unit v, w
  /// Sine of the angle between the unrotated word image of the selected w and
  /// f. The alignment root sends v exactly onto that image direction, so this
  /// residual (plus v_selection_residual) bounds the leakage of the aligned
  /// column outside f; it is exactly zero when the image lies in f.
  double target_residual_to_f = 0.0;
  double v_selection_residual = 0.0; ///< sine of the angle between v and the e span
  bool degenerate = false;           ///< numerically ambiguous subspace selection
  std::string note;
};

/// Drives the word's letters so that the perturbed product maps e into a
/// direction of f. The vectors the rotation chain interpolates between are
/// picked from the word product P: a unit v in the intersection of e with
/// the span of right singular vectors of P at sigma <= sigma_p, and a unit w
/// with Pw in f from the span at sigma >= sigma_{p+1} (p = e's dimension).
/// The planes V_i = A_i...A_1 span{v,w} are oriented so each restricted 2x2
/// map has positive determinant, the common rotation angle comes from
/// align_2d on those restrictions, and the rotations are embedded as the
/// identity on each plane's orthogonal complement. A zero-perturbation
/// path returns the letters unchanged when P e already meets f. Requires
/// dim e = codim f = p in [1, d-1] and epsilon >= 0.
PlaneRotationResult plane_rotation_align(const MatrixSet& set, const Word& word,
                                         const Eigen::MatrixXd& e, const Eigen::MatrixXd& f,
                                         double epsilon);

/// One depth of the normalized alignment-obstruction profile
///   z_n = min { zeta_ell(P_w) / n : |w| = n, ||wedge^ell P_w|| <= e^{n delta} ub^n }
/// where ub is the upper bracket for the lower spectral radius of the
/// ell-th exterior-power set. Words whose ell-volume growth stays within
/// e^{delta} of optimal are "qualifying"; among them z_n measures the
/// smallest per-step defect from conformality on the top ell directions.
struct ZDeltaPoint {
  int n = 0;
  double z = 0.0;       ///< +infinity when no word qualifies
  bool infinite = false;
  std::uint64_t qualifying = 0;  ///< number of qualifying words of length n
  Word witness;                  ///< attains z (empty when infinite)
};

struct ZDeltaProfile {
  int ell = 0;
  double delta = 0.0;
  double wedge_upper = 0.0;  ///< the ub used in the qualification test
  std::vector<ZDeltaPoint> points;
  std::uint64_t evaluations = 0;
  bool complete = true;  ///< false when cfg.budget truncated the enumeration
};

/// Exhaustive scan over word lengths n_lo..n_hi. Requires 2 <= ell <= d
/// (zeta_1 vanishes identically, so ell = 1 is rejected) and finite delta.
ZDeltaProfile z_delta_profile(const MatrixSet& set, double delta, int ell, int n_lo, int n_hi,
                              const BracketConfig& cfg = {});

struct PerturbConfig {
  int n_max = 12;          ///< depth for the reference / pivot-word brackets
  double target = 0.0;     ///< stop improving once achieved_rate <= target (0 = best effort)
  int max_pivot_len = 512; ///< cap on the repeated pivot word's length
  int connector_max_len = 2;     ///< base connector words up to this length
  int connector_power_cap = 256; ///< cap on connector-word repetitions
  int rounds = 4;                ///< greedy refinement rounds over the pivot power
  double improve_tol = 1e-6;     ///< relative rate improvement needed to continue
  BracketConfig bracket;         ///< budget / threads for bracket calls
};

/// Witness that an epsilon-perturbation of the set lowers the lower spectral
/// radius below the base set's bracket: a composite word P * R * P where P
/// is a repeated word chosen to minimize the ell-volume growth rate and R
/// is a connector word whose letters were rotated in-plane (within epsilon)
/// so that R carries the expanding subspace of P into its contracted one.
struct PerturbationCertificate {
  bool success = false;
  std::string base_set_id;  ///< labels of the base set, comma-joined
  double epsilon = 0.0;
  std::vector<Matrix> perturbed_matrices;  ///< connector letters L_i, application order
  std::vector<int> source_indices;         ///< base element each L_i perturbs
  Word pivot_word;      ///< P as a word over the base set
  Word connector_word;  ///< unperturbed connector letters, application order
  std::string full_word;  ///< human-readable P . R . P description
  int total_length = 0;   ///< 2 |P| + |R|
  /// Certified bound on rho(P R P)^(1/total_length) at the exact alignment
  /// root. The bisection bracket proves a root theta* exists at which the
  /// connector carries the pivot's expanding column into the contracted span;
  /// the bound evaluates the composite in the pivot's singular frame with the
  /// aligned column capped by the measured selection residuals, all in log
  /// scale. The emitted double-precision letters approximate the root letters
  /// to roughly machine precision, so a naive replay of the word matches this
  /// value for moderate pivot lengths, while very long pivots amplify the
  /// representation error past it (inherent to any fixed-precision listing).
  double achieved_rate = 0.0;
  double reference_rate = 0.0;  ///< base set's upper bracket at cfg.n_max
  double gap_check = 0.0;       ///< observed ||Rv||/||Rw|| alignment-condition ratio
  double theta = 0.0;           ///< per-letter connector rotation angle
  int ell = 0;                  ///< least domination index used
  int pivot_index = 0;          ///< pivot p of the repeated word
  double pivot_gap = 0.0;
  double needed_epsilon = 0.0;  ///< on failure: smallest epsilon any candidate needed
  std::string note;
};

/// Searches for a certificate. Fails (success = false, with a note) when the
/// set is 1-dominated, when every connector candidate needs more than
/// epsilon, or when no candidate lowers the rate below the reference.
/// epsilon = 0 admits only exact (zero-perturbation) alignments. Requires
/// epsilon >= 0 (throws std::invalid_argument otherwise).
PerturbationCertificate perturb_reduce(const MatrixSet& set, double epsilon,
                                       const PerturbConfig& cfg = {});

/// Outcome of re-checking a successful certificate against its base set.
/// Nothing is searched again: the pivot's singular profile and split, the
/// e-f subspaces, the connector alignment, the perturbation distances, and
/// the certified composite rate are all recomputed from the stored words and
/// epsilon alone, and each must reproduce the stored value. `failure` holds
/// the first failing check (empty when verified). The stored reference_rate
/// is recorded context (it depends on the search-time bracket depth), so the
/// check only confirms the recomputed rate still beats it.
struct CertificateCheck {
  bool verified = false;
  double recomputed_rate = 0.0;
  double recomputed_theta = 0.0;
  double max_letter_distance = 0.0;  ///< max over i of ||L_i - A_source(i)||
  double hausdorff = 0.0;            ///< d_H(base, base with the L_i adjoined)
  double letter_mismatch = 0.0;      ///< max entrywise |stored - recomputed| letter gap
  double rate_mismatch = 0.0;        ///< |recomputed - stored| / stored
  std::string failure;
};

CertificateCheck verify_certificate(const MatrixSet& set, const PerturbationCertificate& cert);

}  // namespace subradius
