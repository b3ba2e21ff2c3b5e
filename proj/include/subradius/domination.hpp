#pragma once

#include "subradius/estimators.hpp"
#include "subradius/matrix_set.hpp"
#include "subradius/projective.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace subradius {

/// k-domination: the set is k-dominated when the gap between the k-th and
/// (k+1)-th singular values of products grows uniformly exponentially, i.e.
///   sigma_{k+1}(P_w) / sigma_k(P_w) <= C * tau^n,  tau < 1,
/// over all words w of length n. Equivalently the k-th exterior power of the
/// set admits a dominated splitting of index one.

/// Worst-case singular value ratio per word length:
///   r_n = max_{|w| = n} sigma_{k+1}(P_w) / sigma_k(P_w)  in (0, 1].
struct RatioProfile {
  int k = 1;
  int n_max = 0;
  std::vector<double> max_ratio;  ///< r_1 .. r_{n_max}
  std::vector<Word> witness;      ///< per length, attains r_n (ties: lex-least)
  std::uint64_t evaluations = 0;
  bool complete = true;  ///< false when the budget truncated the enumeration
};

RatioProfile ratio_profile(const MatrixSet& set, int k, int n_max, const BracketConfig& cfg = {});

/// Approximate invariant multicone on the projective circle (d = 2 only):
/// a finite union of closed arcs C, neither empty nor the whole circle, with
/// A(C) contained in the interior of C for every element A. Existence is
/// equivalent to 1-domination.
struct MulticoneConfig {
  int max_rounds = 200;          ///< growth iterations before giving up
  double seed_half_width = 0.05; ///< initial arc half-width around each seed direction
  double widen = 1e-9;           ///< slack added around the union each round
  double strict_margin = 1e-7;   ///< minimal clearance accepted as strict invariance
};

struct Multicone {
  bool found = false;
  ArcUnion cone;
  double margin = 0.0;  ///< min over elements of the clearance of A(C) inside C
  int rounds = 0;
  std::string note;  ///< failure reason, or "strictly invariant"
};

Multicone find_multicone_2d(const MatrixSet& set, const MulticoneConfig& cfg = {});

/// Clearance of the candidate cone under every element of the set: the
/// minimum over elements A of cone.clearance(image of cone under A).
/// Positive means strictly invariant.
double multicone_margin(const MatrixSet& set, const ArcUnion& cone);

enum class DominationVerdict { Dominated, NotDominated, Undetermined };
const char* to_string(DominationVerdict v);

/// Statistical verdict on k-domination from the ratio profile, with an
/// exact-arithmetic certificate upgrade in dimension 2.
///
/// Decision rules (fixed thresholds, see the implementation):
///   - some r_n >= 1 - 1e-6        -> not dominated (witness word recorded)
///   - fitted r_n ~ C * tau^n over the last half of the profile with
///     tau <= 1 - margin and R^2 >= 0.99  -> dominated
///   - min_n r_n >= 0.5            -> not dominated
///   - otherwise                   -> undetermined
struct DominationReport {
  int k = 1;
  int n_max = 0;
  RatioProfile profile;
  double slope = 0.0;      ///< fitted d(log r_n)/dn over the last half
  double tau_fit = 1.0;    ///< exp(slope)
  double c_fit = 1.0;      ///< smallest C with r_n <= C * tau_fit^n over the profile
  double r_squared = 0.0;  ///< goodness of the affine fit of log r_n
  DominationVerdict verdict = DominationVerdict::Undetermined;
  std::optional<Word> witness;  ///< ratio ~ 1 word backing a not-dominated verdict
  bool certified = false;       ///< true when a strict multicone certifies the verdict
  std::optional<Multicone> multicone;  ///< populated when the certificate search ran
  std::string note;
};

DominationReport test_domination(const MatrixSet& set, int k, int n_max = 12, double margin = 0.02,
                                 const BracketConfig& cfg = {});

/// Smallest k in 1..d such that the set is k-dominated, taking k = d as
/// always dominated (the top exterior power is one-dimensional, where the
/// ratio is vacuous). Reports the verdict for every k below the result.
struct DominationIndex {
  int ell = 1;
  std::vector<DominationReport> per_k;  ///< reports for k = 1 .. d-1
};

DominationIndex least_domination_index(const MatrixSet& set, int n_max = 12,
                                       const BracketConfig& cfg = {});

}  // namespace subradius
