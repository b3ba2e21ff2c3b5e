#pragma once

#include "subradius/matrix_set.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace subradius {

/// Per-word growth rates. All rates are per-step geometric averages computed
/// in log scale, so words of arbitrary length stay in range.
struct WordEvaluation {
  double norm_rate = 0.0;  ///< ||P||^(1/n)
  double rho_rate = 0.0;   ///< rho(P)^(1/n); see note below
  double det_rate = 0.0;   ///< |det P|^(1/(n*d))
  int length = 0;
  LogObservables logobs;
};

/// Evaluates the product of the word. The spectral radius is computed on the
/// canonical cyclic rotation of the word (the spectral radius is invariant
/// under rotation, and fixing the representative makes independently computed
/// values bit-identical and cross-checkable). Norm and determinant use the
/// word as given.
WordEvaluation evaluate_word(const MatrixSet& set, const Word& w);

enum class LowerMethod { SigmaMinChain, DetWedge, CommutingLp, SingletonSpectral, Barabanov };
enum class CandidateKind { NormBased, SpectralRadiusBased };

const char* to_string(LowerMethod m);
const char* to_string(CandidateKind k);

struct BracketConfig {
  std::uint64_t budget = 50'000'000;  ///< hard cap on enumeration node expansions
  int threads = 0;                    ///< 0 = auto (SUBRADIUS_THREADS / hardware)
  std::optional<double> barabanov_lower;  ///< externally certified lower bound, if any
  bool allow_fast_paths = true;  ///< use the diagonal / singleton shortcuts when applicable
};

/// Two-sided bracket for the lower spectral radius
///   inf_n min_{|w|=n} ||P_w||^(1/n) = inf_n min_{|w|=n} rho(P_w)^(1/n).
/// `upper` is the minimum of min(norm_rate, rho_rate) over all examined words
/// of length <= n_max; `lower` is a certified lower bound.
struct SubradiusBracket {
  double lower = 0.0;
  double upper = 0.0;
  Word best_word;                 ///< attains `upper`; ties resolved shortest-then-lex
  CandidateKind best_value_kind = CandidateKind::SpectralRadiusBased;
  int n_max = 0;
  LowerMethod lower_method = LowerMethod::SigmaMinChain;
  std::uint64_t evaluations = 0;  ///< enumeration nodes expanded
  bool complete = true;           ///< false when the budget truncated the search
  double lower_sigma_chain = 0.0;  ///< min over elements of the smallest singular value
  double lower_det_wedge = 0.0;    ///< (min |det|)^(1/d)
  bool commuting_fast_path = false;
  /// Word minimizing the norm rate alone, over canonical (lexicographically
  /// minimal rotation) class representatives.
  Word best_norm_word;
  double best_norm_rate = 0.0;
};

SubradiusBracket subradius_bracket(const MatrixSet& set, int n_max, const BracketConfig& cfg = {});

/// Two-sided bracket for the upper (joint) spectral radius:
/// lower = max over words of rho^(1/n), upper = min over n of the per-length
/// maximal norm rate. Both bounds improve monotonically with n_max.
struct UpperRadiusBracket {
  double lower = 0.0;
  double upper = 0.0;
  Word witness_word;  ///< attains `lower`
  int n_max = 0;
  std::uint64_t evaluations = 0;
  bool complete = true;
};

UpperRadiusBracket upper_radius_bracket(const MatrixSet& set, int n_max, const BracketConfig& cfg = {});

/// Certified lower bound for the lower spectral radius through the k-th
/// exterior power chain. k = d gives the exact value (min |det|)^(1/d); for
/// k < d the bound is the certified lower bound of the lifted set, taken to
/// the 1/k power.
double wedge_lower_bound(const MatrixSet& set, int k, const BracketConfig& cfg = {});

/// Scans for a periodic product realizing the lower spectral radius.
/// `attained` is evidence, not proof: true when the best spectral-radius rate
/// pinches the certified lower bound within `tolerance`. When false the scan
/// only says "no witness up to n_max with this margin".
struct FinitenessScan {
  bool attained = false;
  double best_rho_rate = 0.0;
  Word witness;
  double gap = 0.0;           ///< bracket.upper - best_rho_rate (>= 0)
  double lower_margin = 0.0;  ///< best_rho_rate - bracket.lower (>= 0)
  double tolerance = 0.0;
  SubradiusBracket bracket;
  std::string note;
};

FinitenessScan finiteness_witness_scan(const MatrixSet& set, int n_max, double tolerance = 1e-3,
                                       const BracketConfig& cfg = {});

}  // namespace subradius
