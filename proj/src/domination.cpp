#include "subradius/domination.hpp"

#include "subradius/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace subradius {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Verdict thresholds, fixed here so reports are reproducible across runs.
constexpr double kWitnessTol = 1e-6;    ///< r >= 1 - this certifies a non-contracting word
constexpr double kMinRatioFloor = 0.5;  ///< profile never dipping below this -> not dominated
constexpr double kFitQuality = 0.99;    ///< minimal R^2 for a dominated verdict
constexpr double kPruneSlack = 1e-12;   ///< bias against pruning borderline branches
constexpr double kInvariantTol = 1e-9;  ///< clearance fuzz accepted as invariance

/// Per-task accumulator for the ratio profile enumeration. Values are kept in
/// log scale; index n-1 holds the best (largest) log ratio among words of
/// length n seen by this task.
struct ProfileAccumulator {
  std::vector<double> best_log;
  std::vector<Word> witness;
  std::uint64_t evaluations = 0;
  bool complete = true;

  explicit ProfileAccumulator(int n_max)
      : best_log(static_cast<std::size_t>(n_max), -kInf),
        witness(static_cast<std::size_t>(n_max)) {}

  void offer(int n, double log_r, const std::vector<int>& letters) {
    auto& slot = best_log[static_cast<std::size_t>(n - 1)];
    if (log_r > slot) {
      slot = log_r;
      witness[static_cast<std::size_t>(n - 1)] =
          Word(std::vector<int>(letters.begin() + 1, letters.begin() + 1 + n));
    }
  }

  /// Order-dependent merge: on ties the earlier (lexicographically smaller
  /// prefix) task keeps its witness, so the result is scheduling-independent.
  void merge(const ProfileAccumulator& other) {
    for (std::size_t i = 0; i < best_log.size(); ++i) {
      if (other.best_log[i] > best_log[i]) {
        best_log[i] = other.best_log[i];
        witness[i] = other.witness[i];
      }
    }
    evaluations += other.evaluations;
    complete = complete && other.complete;
  }
};

/// Depth-first enumeration of all words up to n_max, tracking the worst
/// sigma_{k+1}/sigma_k ratio per length. Branches are cut with the
/// submultiplicative envelope
///   r(QP) <= r(P) * (||Q|| / sigma_min(Q))
/// (from sigma_{k+1}(QP) <= ||Q|| sigma_{k+1}(P) and
///  sigma_k(QP) >= sigma_min(Q) sigma_k(P)), which bounds every descendant's
/// ratio; a subtree is dropped only when the envelope cannot raise any
/// remaining per-length maximum.
class ProfileEnumerator {
 public:
  ProfileEnumerator(const MatrixSet& set, int k, int n_max, std::uint64_t budget)
      : set_(set), k_(k), n_max_(n_max), depth_limit_(n_max), budget_(budget), acc_(n_max) {
    stack_.assign(static_cast<std::size_t>(n_max) + 1, ScaledMatrix::identity(set.dim()));
    letters_.assign(static_cast<std::size_t>(n_max) + 1, 0);
    last_log_ratio_.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
    log_cond_ = 0.0;
    for (int i = 0; i < set.size(); ++i) {
      log_cond_ = std::max(log_cond_, std::log(set.op_norm(i)) - std::log(set.sigma_min(i)));
    }
  }

  /// Caps the enumeration depth below n_max (the accumulator keeps its full
  /// size so results merge slot-for-slot with deeper runs).
  void limit_depth(int depth) { depth_limit_ = depth; }

  /// Enumerates the subtree below `prefix` (the prefix node itself included
  /// when nonempty; the root enumerates everything).
  void run(const Word& prefix) {
    int t = 0;
    for (int idx : prefix.indices) {
      letters_[static_cast<std::size_t>(t) + 1] = idx;
      stack_[static_cast<std::size_t>(t) + 1] = stack_[static_cast<std::size_t>(t)];
      stack_[static_cast<std::size_t>(t) + 1].apply(set_, idx);
      ++t;
    }
    if (t > 0) {
      if (!visit(t)) return;
      if (pruned(t)) return;
    }
    descend(t);
  }

  const ProfileAccumulator& result() const { return acc_; }

 private:
  bool visit(int t) {
    if (acc_.evaluations >= budget_) {
      acc_.complete = false;
      return false;
    }
    ++acc_.evaluations;
    const LogObservables obs = log_observables(stack_[static_cast<std::size_t>(t)]);
    const double log_r = obs.log_singular_values[static_cast<std::size_t>(k_)] -
                         obs.log_singular_values[static_cast<std::size_t>(k_) - 1];
    last_log_ratio_[static_cast<std::size_t>(t)] = log_r;
    acc_.offer(t, log_r, letters_);
    return true;
  }

  bool pruned(int t) const {
    const double base = last_log_ratio_[static_cast<std::size_t>(t)];
    for (int n = t + 1; n <= n_max_; ++n) {
      const double envelope = std::min(0.0, base + (n - t) * log_cond_);
      if (envelope >= acc_.best_log[static_cast<std::size_t>(n - 1)] - kPruneSlack) return false;
    }
    return true;
  }

  void descend(int t) {
    if (t >= depth_limit_) return;
    for (int c = 0; c < set_.size(); ++c) {
      letters_[static_cast<std::size_t>(t) + 1] = c;
      stack_[static_cast<std::size_t>(t) + 1] = stack_[static_cast<std::size_t>(t)];
      stack_[static_cast<std::size_t>(t) + 1].apply(set_, c);
      if (!visit(t + 1)) return;
      if (!pruned(t + 1)) descend(t + 1);
    }
  }

  const MatrixSet& set_;
  int k_;
  int n_max_;
  int depth_limit_ = 0;
  std::uint64_t budget_;
  ProfileAccumulator acc_;
  std::vector<ScaledMatrix> stack_;
  std::vector<int> letters_;
  std::vector<double> last_log_ratio_;
  double log_cond_ = 0.0;
};

struct TailFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int points = 0;
};

/// Least-squares affine fit of log r_n against n over the last half of the
/// profile, n in [n_max - floor(n_max/2) + 1, n_max].
TailFit fit_tail(const std::vector<double>& log_ratio) {
  const int n_max = static_cast<int>(log_ratio.size());
  const int lo = std::max(1, n_max - n_max / 2 + 1);
  TailFit fit;
  fit.points = n_max - lo + 1;
  if (fit.points < 2) return fit;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int n = lo; n <= n_max; ++n) {
    const double y = log_ratio[static_cast<std::size_t>(n - 1)];
    sx += n;
    sy += y;
    sxx += static_cast<double>(n) * n;
    sxy += n * y;
  }
  const double m = fit.points;
  const double denom = m * sxx - sx * sx;
  fit.slope = (m * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / m;
  double ss_res = 0.0, ss_tot = 0.0;
  const double mean = sy / m;
  for (int n = lo; n <= n_max; ++n) {
    const double y = log_ratio[static_cast<std::size_t>(n - 1)];
    const double pred = fit.intercept + fit.slope * n;
    ss_res += (y - pred) * (y - pred);
    ss_tot += (y - mean) * (y - mean);
  }
  if (ss_tot <= 1e-30) {
    fit.r_squared = (ss_res <= 1e-30) ? 1.0 : 0.0;
  } else {
    fit.r_squared = 1.0 - ss_res / ss_tot;
  }
  return fit;
}

std::vector<Word> words_up_to(int alphabet, int max_len) {
  std::vector<Word> out;
  for (int len = 1; len <= max_len; ++len) {
    std::vector<int> idx(static_cast<std::size_t>(len), 0);
    for (;;) {
      out.emplace_back(idx);
      int p = len - 1;
      while (p >= 0 && idx[static_cast<std::size_t>(p)] == alphabet - 1) {
        idx[static_cast<std::size_t>(p)] = 0;
        --p;
      }
      if (p < 0) break;
      ++idx[static_cast<std::size_t>(p)];
    }
  }
  return out;
}

}  // namespace

RatioProfile ratio_profile(const MatrixSet& set, int k, int n_max, const BracketConfig& cfg) {
  if (k < 1 || k >= set.dim()) {
    throw std::invalid_argument("ratio_profile: k must satisfy 1 <= k < dim");
  }
  if (n_max < 1) throw std::invalid_argument("ratio_profile: n_max must be >= 1");

  const int workers = worker_count(cfg.threads);
  const int split_depth = (workers > 1 && n_max > 2 && set.size() > 1) ? 2 : 0;

  ProfileAccumulator total(n_max);
  if (split_depth == 0) {
    ProfileEnumerator seq(set, k, n_max, cfg.budget);
    seq.run(Word{});
    total.merge(seq.result());
  } else {
    // Lengths below the split are scored inline; each length-2 prefix becomes
    // an independent task with a static budget share, merged in lexicographic
    // order so the result does not depend on scheduling.
    ProfileEnumerator shallow(set, k, n_max, cfg.budget);
    shallow.limit_depth(split_depth - 1);
    shallow.run(Word{});
    total.merge(shallow.result());

    std::vector<Word> prefixes;
    for (int a = 0; a < set.size(); ++a) {
      for (int b = 0; b < set.size(); ++b) prefixes.push_back(Word{{a, b}});
    }
    const std::uint64_t used = total.evaluations;
    const std::uint64_t share =
        std::max<std::uint64_t>(1, (cfg.budget > used ? cfg.budget - used : 0) / prefixes.size());
    std::vector<std::unique_ptr<ProfileEnumerator>> tasks(prefixes.size());
    parallel_for(
        static_cast<int>(prefixes.size()),
        [&](int i) {
          tasks[static_cast<std::size_t>(i)] =
              std::make_unique<ProfileEnumerator>(set, k, n_max, share);
          tasks[static_cast<std::size_t>(i)]->run(prefixes[static_cast<std::size_t>(i)]);
        },
        cfg.threads);
    for (const auto& t : tasks) total.merge(t->result());
  }

  RatioProfile profile;
  profile.k = k;
  profile.n_max = n_max;
  profile.evaluations = total.evaluations;
  profile.complete = total.complete;
  profile.max_ratio.resize(static_cast<std::size_t>(n_max));
  profile.witness = std::move(total.witness);
  for (int n = 0; n < n_max; ++n) {
    profile.max_ratio[static_cast<std::size_t>(n)] =
        std::exp(total.best_log[static_cast<std::size_t>(n)]);
  }
  return profile;
}

double multicone_margin(const MatrixSet& set, const ArcUnion& cone) {
  if (set.dim() != 2) throw std::invalid_argument("multicone_margin: dimension 2 required");
  if (cone.empty() || cone.is_full()) {
    throw std::invalid_argument("multicone_margin: cone must be a proper nonempty union");
  }
  double margin = kInf;
  for (int i = 0; i < set.size(); ++i) {
    margin = std::min(margin, cone.clearance(arc_union_image(set.matrix(i), cone)));
  }
  return margin;
}

Multicone find_multicone_2d(const MatrixSet& set, const MulticoneConfig& cfg) {
  if (set.dim() != 2) throw std::invalid_argument("find_multicone_2d: dimension 2 required");
  Multicone out;

  // Seed with the attracting real eigendirections of all short products; for
  // a 1-dominated set these land inside every invariant multicone.
  std::vector<Arc> seeds;
  for (const Word& w : words_up_to(set.size(), 3)) {
    const auto dirs = real_eigen_directions(product(set, w));
    if (dirs.empty()) continue;
    seeds.push_back({dirs.front().angle - cfg.seed_half_width, 2.0 * cfg.seed_half_width});
  }
  if (seeds.empty()) {
    out.note = "no real eigendirections among words of length <= 3 to seed the cone";
    return out;
  }

  ArcUnion cone{std::move(seeds)};
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    out.rounds = round;
    if (cone.is_full()) {
      out.cone = cone;
      out.note = "candidate grew to cover the whole projective circle";
      return out;
    }
    double margin = kInf;
    ArcUnion next = cone;
    for (int i = 0; i < set.size(); ++i) {
      const ArcUnion image = arc_union_image(set.matrix(i), cone);
      margin = std::min(margin, cone.clearance(image));
      next = next.unite(image);
    }
    if (margin >= cfg.strict_margin) {
      out.found = true;
      out.cone = cone;
      out.margin = margin;
      out.note = "strictly invariant";
      return out;
    }
    if (margin >= -0.1) {
      // The growth iteration converges to the smallest invariant union, whose
      // images touch its boundary; strictness lives in a slightly widened
      // neighborhood. Any padded candidate that checks out is a certificate.
      for (const double pad : {16.0 * cfg.strict_margin, 1e-4, 1e-3, 1e-2}) {
        const ArcUnion padded = cone.widened(pad);
        if (padded.is_full()) break;
        const double padded_margin = multicone_margin(set, padded);
        if (padded_margin >= cfg.strict_margin) {
          out.found = true;
          out.cone = padded;
          out.margin = padded_margin;
          out.note = "strictly invariant";
          return out;
        }
      }
    }
    if (margin >= -kInvariantTol) {
      out.cone = cone;
      out.margin = margin;
      out.note = "invariant but not strictly (margin below threshold)";
      return out;
    }
    cone = next.widened(cfg.widen);
  }
  out.cone = cone;
  out.note = "did not stabilize within the round budget";
  return out;
}

const char* to_string(DominationVerdict v) {
  switch (v) {
    case DominationVerdict::Dominated: return "dominated";
    case DominationVerdict::NotDominated: return "not-dominated";
    case DominationVerdict::Undetermined: return "undetermined";
  }
  return "unknown";
}

DominationReport test_domination(const MatrixSet& set, int k, int n_max, double margin,
                                 const BracketConfig& cfg) {
  if (margin <= 0.0 || margin >= 1.0) {
    throw std::invalid_argument("test_domination: margin must be in (0, 1)");
  }
  DominationReport rep;
  rep.k = k;
  rep.n_max = n_max;
  rep.profile = ratio_profile(set, k, n_max, cfg);

  std::vector<double> log_ratio(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    log_ratio[static_cast<std::size_t>(n - 1)] =
        std::log(rep.profile.max_ratio[static_cast<std::size_t>(n - 1)]);
  }

  const TailFit fit = fit_tail(log_ratio);
  rep.slope = fit.slope;
  rep.tau_fit = std::exp(fit.slope);
  rep.r_squared = fit.r_squared;
  rep.c_fit = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    rep.c_fit = std::max(rep.c_fit, std::exp(log_ratio[static_cast<std::size_t>(n - 1)] -
                                             n * fit.slope));
  }

  double min_ratio = kInf;
  int flat_n = 0;
  for (int n = 1; n <= n_max; ++n) {
    const double r = rep.profile.max_ratio[static_cast<std::size_t>(n - 1)];
    min_ratio = std::min(min_ratio, r);
    if (flat_n == 0 && r >= 1.0 - kWitnessTol) flat_n = n;
  }

  std::ostringstream note;
  if (flat_n > 0) {
    rep.verdict = DominationVerdict::NotDominated;
    rep.witness = rep.profile.witness[static_cast<std::size_t>(flat_n - 1)];
    note << "length-" << flat_n << " word keeps the singular value ratio at "
         << rep.profile.max_ratio[static_cast<std::size_t>(flat_n - 1)];
  } else if (rep.tau_fit <= 1.0 - margin && rep.r_squared >= kFitQuality &&
             rep.profile.complete) {
    rep.verdict = DominationVerdict::Dominated;
    note << "profile decays like " << rep.c_fit << " * " << rep.tau_fit
         << "^n (R^2 = " << rep.r_squared << ")";
  } else if (min_ratio >= kMinRatioFloor) {
    rep.verdict = DominationVerdict::NotDominated;
    note << "worst-case ratio stays at or above " << min_ratio << " through length " << n_max;
  } else {
    rep.verdict = DominationVerdict::Undetermined;
    note << "profile neither decays cleanly (tau_fit = " << rep.tau_fit
         << ", R^2 = " << rep.r_squared << ") nor stays above " << kMinRatioFloor;
    if (!rep.profile.complete) note << "; enumeration truncated by budget";
  }

  if (rep.verdict == DominationVerdict::Dominated && set.dim() == 2 && k == 1) {
    rep.multicone = find_multicone_2d(set);
    if (rep.multicone->found) {
      rep.certified = true;
      note << "; certified by a strictly invariant multicone (margin "
           << rep.multicone->margin << ")";
    } else {
      note << "; multicone search: " << rep.multicone->note;
    }
  }
  rep.note = note.str();
  return rep;
}

DominationIndex least_domination_index(const MatrixSet& set, int n_max, const BracketConfig& cfg) {
  DominationIndex out;
  const int d = set.dim();
  out.ell = d;
  for (int k = 1; k < d; ++k) {
    out.per_k.push_back(test_domination(set, k, n_max, 0.02, cfg));
    if (out.per_k.back().verdict == DominationVerdict::Dominated && out.ell == d) {
      out.ell = k;
    }
  }
  return out;
}

}  // namespace subradius
