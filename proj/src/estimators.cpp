#include "subradius/estimators.hpp"

#include "subradius/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace subradius {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Margin (in log-rate units) by which a pruning floor must exceed the
// incumbent before a subtree is cut. Biases against pruning so that floor
// rounding can never discard a word that would improve the bracket.
constexpr double kPruneGuard = 1e-9;

// Backoff applied to lower bounds derived from interior arithmetic (line
// crossings); endpoint table lookups are exact and are not backed off.
constexpr double kLpGuard = 1e-14;

double root_d(double x, int d) {
  if (d == 1) return x;
  if (d == 2) return std::sqrt(x);
  if (d == 3) return std::cbrt(x);
  return std::pow(x, 1.0 / static_cast<double>(d));
}

struct Candidate {
  double log_rate = kInf;
  Word word;
  CandidateKind kind = CandidateKind::SpectralRadiusBased;

  void offer(double lr, const std::vector<int>& letters, int len, CandidateKind k) {
    if (lr < log_rate) {
      log_rate = lr;
      word.indices.assign(letters.begin(), letters.begin() + len);
      kind = k;
    } else if (lr == log_rate && !word.empty()) {
      Word w{std::vector<int>(letters.begin(), letters.begin() + len)};
      if (w.precedes(word)) {
        word = std::move(w);
        kind = k;
      }
    }
  }

  void merge(const Candidate& other) {
    if (other.log_rate < log_rate || (other.log_rate == log_rate && !other.word.empty() &&
                                      (word.empty() || other.word.precedes(word)))) {
      log_rate = other.log_rate;
      word = other.word;
      kind = other.kind;
    }
  }
};

// Depth-first enumeration of pre-necklaces (prefixes of lexicographically
// minimal rotations). Each node of the tree is one word; a node of length t
// with period p is a class representative exactly when p divides t, which is
// where spectral-radius candidates are taken. Norm candidates are collected
// at every node. Subtrees are cut only when certified floors on every
// descendant's spectral-radius rate sit above the incumbent.
class NecklaceEnumerator {
 public:
  NecklaceEnumerator(const MatrixSet& set, int n_max, std::uint64_t budget)
      : set_(set),
        n_max_(n_max),
        budget_(budget),
        d_(set.dim()),
        log_smin_(std::log(set.min_sigma_min())),
        log_dmin_(std::log(set.min_abs_det())) {
    letters_.assign(static_cast<std::size_t>(n_max + 1), 0);
    stack_.assign(static_cast<std::size_t>(n_max + 1), ScaledMatrix::identity(d_));
    last_log_sigma_.assign(static_cast<std::size_t>(n_max + 1), 0.0);
  }

  // Seeds the incumbent (deterministically) before the walk starts.
  void seed_incumbent(double log_rate) { best_.log_rate = std::min(best_.log_rate, log_rate); }

  void run_from_root() { descend(1, 1); }

  // Continues the walk from a stored frontier node (parallel task entry).
  void run_from(const std::vector<int>& prefix, int period) {
    const int t = static_cast<int>(prefix.size());
    for (int k = 0; k < t; ++k) {
      letters_[static_cast<std::size_t>(k + 1)] = prefix[static_cast<std::size_t>(k)];
      stack_[static_cast<std::size_t>(k + 1)] = stack_[static_cast<std::size_t>(k)];
      stack_[static_cast<std::size_t>(k + 1)].apply(set_, prefix[static_cast<std::size_t>(k)]);
    }
    // The frontier node itself was already visited by the shallow phase, but
    // its floors must be recomputed here for the prune check.
    last_log_sigma_[static_cast<std::size_t>(t)] =
        log_observables(stack_[static_cast<std::size_t>(t)]).log_singular_values.back();
    if (t < n_max_ && !prune(t)) descend(t + 1, period);
  }

  // Shallow phase: walks nodes of depth <= split_depth, collecting the
  // frontier (depth == split_depth nodes with their periods) for parallel
  // continuation.
  struct Frontier {
    std::vector<int> prefix;
    int period = 1;
  };
  void collect_frontier(int split_depth, std::vector<Frontier>& out) {
    frontier_depth_ = split_depth;
    frontier_out_ = &out;
    descend(1, 1);
    frontier_out_ = nullptr;
    frontier_depth_ = 0;
  }

  const Candidate& best() const { return best_; }
  const Candidate& best_norm() const { return best_norm_; }
  std::uint64_t evaluations() const { return evaluations_; }
  bool complete() const { return complete_; }

 private:
  // sigma_min floor of the prefix at depth t (log of smallest singular value
  // of the partial product) and its exact log |det|. Every descendant's norm
  // and spectral-radius rates sit above the floors, so a subtree is cut only
  // when it can improve neither tracked incumbent.
  bool prune(int t) const {
    const double inc = std::max(best_.log_rate, best_norm_.log_rate);
    if (inc == kInf) return false;
    const double lsd = last_log_sigma_[static_cast<std::size_t>(t)];
    const double ldet = stack_[static_cast<std::size_t>(t)].log_abs_det;
    for (int n = t + 1; n <= n_max_; ++n) {
      const double ext = static_cast<double>(n - t);
      const double floor_sigma = lsd + ext * log_smin_;
      const double floor_det = (ldet + ext * log_dmin_) / static_cast<double>(d_);
      const double floor_rate = std::max(floor_sigma, floor_det) / static_cast<double>(n);
      if (floor_rate < inc + kPruneGuard) return false;  // a descendant could still improve
    }
    return true;
  }

  void visit(int t, int period) {
    ++evaluations_;
    if (evaluations_ > budget_) {
      complete_ = false;
      return;
    }
    const LogObservables lo = log_observables(stack_[static_cast<std::size_t>(t)]);
    last_log_sigma_[static_cast<std::size_t>(t)] = lo.log_singular_values.back();
    const double norm_rate = lo.log_norm / static_cast<double>(t);
    best_.offer(norm_rate, letters_for(t), t, CandidateKind::NormBased);
    if (t % period == 0) {
      // Class representative: take the spectral radius here, and track the
      // best norm over representatives (norms of other rotations differ, but
      // their growth rates are interchangeable for every downstream use).
      best_norm_.offer(norm_rate, letters_for(t), t, CandidateKind::NormBased);
      const double rho_rate = lo.log_spectral_radius / static_cast<double>(t);
      best_.offer(rho_rate, letters_for(t), t, CandidateKind::SpectralRadiusBased);
    }
  }

  const std::vector<int>& letters_for(int t) {
    scratch_.assign(letters_.begin() + 1, letters_.begin() + 1 + t);
    return scratch_;
  }

  void descend(int t, int period) {
    if (!complete_ || t > n_max_) return;
    const int K = set_.size();
    const int constraint = letters_[static_cast<std::size_t>(t - period)];
    for (int c = constraint; c < K; ++c) {
      letters_[static_cast<std::size_t>(t)] = c;
      stack_[static_cast<std::size_t>(t)] = stack_[static_cast<std::size_t>(t - 1)];
      stack_[static_cast<std::size_t>(t)].apply(set_, c);
      const int child_period = (c == constraint) ? period : t;
      visit(t, child_period);
      if (!complete_) return;
      if (frontier_out_ != nullptr && t == frontier_depth_) {
        Frontier f;
        f.prefix.assign(letters_.begin() + 1, letters_.begin() + 1 + t);
        f.period = child_period;
        frontier_out_->push_back(std::move(f));
        continue;  // subtree handled by a parallel task
      }
      if (t < n_max_ && !prune(t)) descend(t + 1, child_period);
      if (!complete_) return;
    }
  }

  const MatrixSet& set_;
  int n_max_;
  std::uint64_t budget_;
  int d_;
  double log_smin_, log_dmin_;
  std::vector<int> letters_;       // letters_[1..t] is the current word
  std::vector<ScaledMatrix> stack_;
  std::vector<double> last_log_sigma_;
  std::vector<int> scratch_;
  Candidate best_, best_norm_;
  std::uint64_t evaluations_ = 0;
  bool complete_ = true;
  int frontier_depth_ = 0;
  std::vector<Frontier>* frontier_out_ = nullptr;
};

struct EnumerationResult {
  Candidate best, best_norm;
  std::uint64_t evaluations = 0;
  bool complete = true;
};

EnumerationResult enumerate_candidates(const MatrixSet& set, int n_max, const BracketConfig& cfg) {
  EnumerationResult out;
  const int split_depth = (n_max >= 4 && worker_count(cfg.threads) > 1) ? 2 : 0;
  if (split_depth == 0) {
    NecklaceEnumerator e(set, n_max, cfg.budget);
    e.run_from_root();
    out.best = e.best();
    out.best_norm = e.best_norm();
    out.evaluations = e.evaluations();
    out.complete = e.complete();
    return out;
  }
  // Shallow sequential walk: evaluates nodes of depth <= split_depth and
  // collects the frontier subtrees.
  NecklaceEnumerator shallow(set, n_max, cfg.budget);
  std::vector<NecklaceEnumerator::Frontier> frontier;
  shallow.collect_frontier(split_depth, frontier);
  out.best = shallow.best();
  out.best_norm = shallow.best_norm();
  out.evaluations = shallow.evaluations();
  out.complete = shallow.complete();
  if (frontier.empty() || !out.complete) return out;

  const std::uint64_t remaining = cfg.budget > out.evaluations ? cfg.budget - out.evaluations : 0;
  const std::uint64_t share = std::max<std::uint64_t>(1, remaining / frontier.size());
  std::vector<EnumerationResult> partial(frontier.size());
  const double seed = std::min(out.best.log_rate, out.best_norm.log_rate);
  parallel_for(
      static_cast<int>(frontier.size()),
      [&](int i) {
        NecklaceEnumerator e(set, n_max, share);
        e.seed_incumbent(seed);
        e.run_from(frontier[static_cast<std::size_t>(i)].prefix, frontier[static_cast<std::size_t>(i)].period);
        partial[static_cast<std::size_t>(i)].best = e.best();
        partial[static_cast<std::size_t>(i)].best_norm = e.best_norm();
        partial[static_cast<std::size_t>(i)].evaluations = e.evaluations();
        partial[static_cast<std::size_t>(i)].complete = e.complete();
      },
      cfg.threads);
  for (const auto& p : partial) {
    out.best.merge(p.best);
    out.best_norm.merge(p.best_norm);
    out.evaluations += p.evaluations;
    out.complete = out.complete && p.complete;
  }
  return out;
}

// --- commuting (simultaneously diagonal) fast path ---------------------------

struct DiagonalTables {
  // logd[i][j] = log |(A_i)_{jj}|
  std::vector<std::vector<double>> logd;
  int K = 0, d = 0;
};

DiagonalTables diagonal_tables(const MatrixSet& set) {
  DiagonalTables t;
  t.K = set.size();
  t.d = set.dim();
  t.logd.resize(static_cast<std::size_t>(t.K));
  for (int i = 0; i < t.K; ++i) {
    t.logd[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(t.d));
    for (int j = 0; j < t.d; ++j) {
      t.logd[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::log(std::abs(set.matrix(i)(j, j)));
    }
  }
  return t;
}

// Best per-step rate over all exponent-count vectors with total n, for every
// n <= n_max. Products of diagonal matrices depend only on the letter counts,
// so the enumeration is over compositions rather than words.
struct DiagonalScan {
  Candidate best;
  std::uint64_t evaluations = 0;
  bool complete = true;
};

void diagonal_counts_rec(const DiagonalTables& t, int letter, int remaining, std::vector<double>& logsum,
                         std::vector<int>& counts, int n, DiagonalScan& scan, std::uint64_t budget) {
  if (!scan.complete) return;
  if (letter == t.K - 1) {
    ++scan.evaluations;
    if (scan.evaluations > budget) {
      scan.complete = false;
      return;
    }
    counts[static_cast<std::size_t>(letter)] = remaining;
    double value = -kInf;
    for (int j = 0; j < t.d; ++j) {
      double s = logsum[static_cast<std::size_t>(j)] +
                 static_cast<double>(remaining) * t.logd[static_cast<std::size_t>(letter)][static_cast<std::size_t>(j)];
      value = std::max(value, s);
    }
    const double rate = value / static_cast<double>(n);
    if (rate < scan.best.log_rate) {
      scan.best.log_rate = rate;
      scan.best.kind = CandidateKind::SpectralRadiusBased;
      scan.best.word.indices.clear();
      for (int i = 0; i < t.K; ++i) {
        const int c = (i == letter) ? remaining : counts[static_cast<std::size_t>(i)];
        scan.best.word.indices.insert(scan.best.word.indices.end(), static_cast<std::size_t>(c), i);
      }
    }
    return;
  }
  for (int c = 0; c <= remaining; ++c) {
    counts[static_cast<std::size_t>(letter)] = c;
    std::vector<double> next = logsum;
    for (int j = 0; j < t.d; ++j) {
      next[static_cast<std::size_t>(j)] +=
          static_cast<double>(c) * t.logd[static_cast<std::size_t>(letter)][static_cast<std::size_t>(j)];
    }
    diagonal_counts_rec(t, letter + 1, remaining - c, next, counts, n, scan, budget);
    if (!scan.complete) return;
  }
}

DiagonalScan diagonal_upper_scan(const DiagonalTables& t, int n_max, std::uint64_t budget) {
  DiagonalScan scan;
  for (int n = 1; n <= n_max && scan.complete; ++n) {
    std::vector<double> logsum(static_cast<std::size_t>(t.d), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(t.K), 0);
    diagonal_counts_rec(t, 0, n, logsum, counts, n, scan, budget);
  }
  return scan;
}

// Exact lower bound for a simultaneously diagonal set: every word of length n
// with letter frequencies f satisfies rate = max_j sum_i f_i log|a_{i,jj}|,
// so min over the frequency simplex of that convex piecewise-linear function
// is a certified lower bound. Solved exactly for K <= 2 (the minimum sits at
// an endpoint or at a crossing of two of the d lines); crossing-derived
// values are backed off by a few ulps so rounding can never overstate the
// bound.
std::optional<double> diagonal_lower_log(const DiagonalTables& t) {
  if (t.d == 1) {
    double best = kInf;
    for (int i = 0; i < t.K; ++i) best = std::min(best, t.logd[static_cast<std::size_t>(i)][0]);
    return best;
  }
  if (t.K == 1) {
    double best = -kInf;
    for (int j = 0; j < t.d; ++j) best = std::max(best, t.logd[0][static_cast<std::size_t>(j)]);
    return best;
  }
  if (t.K != 2) return std::nullopt;
  const auto& u = t.logd[0];
  const auto& v = t.logd[1];
  const auto value_at = [&](double f) {
    double m = -kInf;
    for (int j = 0; j < t.d; ++j) {
      m = std::max(m, f * u[static_cast<std::size_t>(j)] + (1.0 - f) * v[static_cast<std::size_t>(j)]);
    }
    return m;
  };
  // Endpoints: pure table lookups, exact.
  double best = std::min(value_at(1.0), value_at(0.0));
  for (int j = 0; j < t.d; ++j) {
    for (int k = j + 1; k < t.d; ++k) {
      const double denom = (u[static_cast<std::size_t>(j)] - v[static_cast<std::size_t>(j)]) -
                           (u[static_cast<std::size_t>(k)] - v[static_cast<std::size_t>(k)]);
      if (denom == 0.0) continue;
      const double f = (v[static_cast<std::size_t>(k)] - v[static_cast<std::size_t>(j)]) / denom;
      if (f <= 0.0 || f >= 1.0) continue;
      const double guarded = value_at(f) - kLpGuard * (1.0 + std::abs(value_at(f)));
      best = std::min(best, guarded);
    }
  }
  return best;
}

struct LowerBounds {
  double lower = 0.0;
  LowerMethod method = LowerMethod::SigmaMinChain;
  double sigma_chain = 0.0;
  double det_wedge = 0.0;
};

LowerBounds assemble_lower(const MatrixSet& set, const BracketConfig& cfg, std::optional<double> fast_path_lower,
                           LowerMethod fast_path_method) {
  LowerBounds lb;
  lb.sigma_chain = set.min_sigma_min();
  lb.det_wedge = root_d(set.min_abs_det(), set.dim());
  lb.lower = lb.sigma_chain;
  lb.method = LowerMethod::SigmaMinChain;
  if (lb.det_wedge > lb.lower) {
    lb.lower = lb.det_wedge;
    lb.method = LowerMethod::DetWedge;
  }
  if (fast_path_lower && *fast_path_lower > lb.lower) {
    lb.lower = *fast_path_lower;
    lb.method = fast_path_method;
  }
  if (cfg.barabanov_lower && *cfg.barabanov_lower > lb.lower) {
    lb.lower = *cfg.barabanov_lower;
    lb.method = LowerMethod::Barabanov;
  }
  return lb;
}

}  // namespace

const char* to_string(LowerMethod m) {
  switch (m) {
    case LowerMethod::SigmaMinChain: return "sigma_min_chain";
    case LowerMethod::DetWedge: return "det_wedge";
    case LowerMethod::CommutingLp: return "commuting_lp";
    case LowerMethod::SingletonSpectral: return "singleton_spectral";
    case LowerMethod::Barabanov: return "barabanov";
  }
  return "unknown";
}

const char* to_string(CandidateKind k) {
  return k == CandidateKind::NormBased ? "norm_based" : "spectral_radius_based";
}

WordEvaluation evaluate_word(const MatrixSet& set, const Word& w) {
  if (w.empty()) throw std::invalid_argument("evaluate_word: word must be nonempty");
  set.validate_word(w);
  const int n = w.length();
  WordEvaluation ev;
  ev.length = n;
  const ScaledMatrix sm = scaled_product(set, w);
  ev.logobs = log_observables(sm);
  ev.norm_rate = std::exp(ev.logobs.log_norm / static_cast<double>(n));
  ev.det_rate = std::exp(ev.logobs.log_abs_det / static_cast<double>(n * set.dim()));
  const Word canon = w.canonical_rotation();
  if (canon == w) {
    ev.rho_rate = std::exp(ev.logobs.log_spectral_radius / static_cast<double>(n));
  } else {
    const LogObservables lc = log_observables(scaled_product(set, canon));
    ev.rho_rate = std::exp(lc.log_spectral_radius / static_cast<double>(n));
  }
  return ev;
}

SubradiusBracket subradius_bracket(const MatrixSet& set, int n_max, const BracketConfig& cfg) {
  if (n_max < 1) throw std::invalid_argument("subradius_bracket: n_max must be >= 1");
  SubradiusBracket out;
  out.n_max = n_max;

  std::optional<double> fast_lower;
  LowerMethod fast_method = LowerMethod::SigmaMinChain;
  Candidate best, best_norm;
  std::uint64_t evals = 0;
  bool complete = true;

  if (cfg.allow_fast_paths && set.size() == 1) {
    // Singleton: the lower spectral radius equals the spectral radius of the
    // single element; powers are the only words.
    const Observables obs = observables(set.matrix(0));
    fast_lower = obs.spectral_radius;
    fast_method = LowerMethod::SingletonSpectral;
    for (int n = 1; n <= n_max; ++n) {
      Word w{std::vector<int>(static_cast<std::size_t>(n), 0)};
      const WordEvaluation ev = evaluate_word(set, w);
      ++evals;
      best.offer(std::log(ev.rho_rate), w.indices, n, CandidateKind::SpectralRadiusBased);
      best_norm.offer(std::log(ev.norm_rate), w.indices, n, CandidateKind::NormBased);
    }
  } else if (cfg.allow_fast_paths && set.all_diagonal()) {
    out.commuting_fast_path = true;
    const DiagonalTables tables = diagonal_tables(set);
    const DiagonalScan scan = diagonal_upper_scan(tables, n_max, cfg.budget);
    best = scan.best;
    best_norm = scan.best;  // norm and spectral radius coincide for diagonal products
    evals = scan.evaluations;
    complete = scan.complete;
    if (auto lp = diagonal_lower_log(tables)) {
      fast_lower = std::exp(*lp);
      fast_method = LowerMethod::CommutingLp;
    }
  } else {
    const EnumerationResult res = enumerate_candidates(set, n_max, cfg);
    best = res.best;
    best_norm = res.best_norm;
    evals = res.evaluations;
    complete = res.complete;
  }

  const LowerBounds lb = assemble_lower(set, cfg, fast_lower, fast_method);
  out.lower = lb.lower;
  out.lower_method = lb.method;
  out.lower_sigma_chain = lb.sigma_chain;
  out.lower_det_wedge = lb.det_wedge;
  out.evaluations = evals;
  out.complete = complete;
  out.upper = std::exp(best.log_rate);
  out.best_word = best.word;
  out.best_value_kind = best.kind;
  out.best_norm_rate = std::exp(best_norm.log_rate);
  out.best_norm_word = best_norm.word;
  if (out.lower > out.upper) out.lower = out.upper;  // collapse rounding-level inversions
  return out;
}

UpperRadiusBracket upper_radius_bracket(const MatrixSet& set, int n_max, const BracketConfig& cfg) {
  if (n_max < 1) throw std::invalid_argument("upper_radius_bracket: n_max must be >= 1");
  UpperRadiusBracket out;
  out.n_max = n_max;
  const int K = set.size();
  const double log_smax = std::log(set.max_op_norm());

  double upper_log = kInf;
  double lower_log = -kInf;
  Word witness;
  std::uint64_t evals = 0;
  bool complete = true;

  std::vector<int> letters(static_cast<std::size_t>(n_max + 1), 0);
  std::vector<ScaledMatrix> stack(static_cast<std::size_t>(n_max + 1), ScaledMatrix::identity(set.dim()));

  for (int n = 1; n <= n_max && complete; ++n) {
    double level_max_norm = -kInf;
    double level_max_rho = -kInf;
    Word level_witness;
    // Depth-first over all words of length n; a prefix is skipped only when
    // even the most expansive extension cannot affect the level maximum or
    // the running spectral-radius maximum.
    const std::function<void(int)> walk = [&](int t) {
      if (!complete) return;
      for (int c = 0; c < K; ++c) {
        letters[static_cast<std::size_t>(t)] = c;
        stack[static_cast<std::size_t>(t)] = stack[static_cast<std::size_t>(t - 1)];
        stack[static_cast<std::size_t>(t)].apply(set, c);
        ++evals;
        if (evals > cfg.budget) {
          complete = false;
          return;
        }
        const LogObservables lo = log_observables(stack[static_cast<std::size_t>(t)]);
        if (t == n) {
          if (lo.log_norm > level_max_norm) level_max_norm = lo.log_norm;
          if (lo.log_spectral_radius > level_max_rho) {
            level_max_rho = lo.log_spectral_radius;
            level_witness.indices.assign(letters.begin() + 1, letters.begin() + 1 + n);
          }
        } else {
          const double envelope = lo.log_norm + static_cast<double>(n - t) * log_smax;
          const bool useless_for_norm = envelope <= level_max_norm;
          const bool useless_for_rho = envelope <= std::max(lower_log * n, level_max_rho);
          if (!(useless_for_norm && useless_for_rho)) walk(t + 1);
          if (!complete) return;
        }
      }
    };
    walk(1);
    if (!complete) break;  // partial level maxima are not valid bounds
    upper_log = std::min(upper_log, level_max_norm / static_cast<double>(n));
    const double rho_rate = level_max_rho / static_cast<double>(n);
    if (rho_rate > lower_log) {
      lower_log = rho_rate;
      witness = level_witness;
    }
  }
  out.evaluations = evals;
  out.complete = complete;
  out.upper = std::exp(upper_log);
  out.lower = std::exp(lower_log);
  out.witness_word = witness;
  if (out.lower > out.upper) out.lower = out.upper;
  return out;
}

double wedge_lower_bound(const MatrixSet& set, int k, const BracketConfig& cfg) {
  if (k < 1 || k > set.dim()) throw std::invalid_argument("wedge_lower_bound: k must be in [1, dim]");
  if (k == set.dim()) return root_d(set.min_abs_det(), set.dim());
  const MatrixSet lifted = lift_set(set, k);
  std::optional<double> fast_lower;
  LowerMethod fast_method = LowerMethod::SigmaMinChain;
  if (cfg.allow_fast_paths && lifted.size() == 1) {
    fast_lower = observables(lifted.matrix(0)).spectral_radius;
    fast_method = LowerMethod::SingletonSpectral;
  } else if (cfg.allow_fast_paths && lifted.all_diagonal()) {
    if (auto lp = diagonal_lower_log(diagonal_tables(lifted))) {
      fast_lower = std::exp(*lp);
      fast_method = LowerMethod::CommutingLp;
    }
  }
  const LowerBounds lb = assemble_lower(lifted, BracketConfig{}, fast_lower, fast_method);
  return root_d(lb.lower, k);
}

FinitenessScan finiteness_witness_scan(const MatrixSet& set, int n_max, double tolerance, const BracketConfig& cfg) {
  FinitenessScan scan;
  scan.tolerance = tolerance;
  scan.bracket = subradius_bracket(set, n_max, cfg);
  scan.witness = scan.bracket.best_word;
  const WordEvaluation ev = evaluate_word(set, scan.witness);
  scan.best_rho_rate = ev.rho_rate;
  scan.gap = std::max(0.0, scan.bracket.upper - scan.best_rho_rate);
  scan.lower_margin = std::max(0.0, scan.best_rho_rate - scan.bracket.lower);
  scan.attained = scan.lower_margin <= tolerance;
  if (scan.attained) {
    scan.note = "bracket pinched: the witness spectral-radius rate meets the certified lower bound within tolerance";
  } else {
    scan.note = "no witness up to n_max within tolerance of the lower bound; margin = " +
                std::to_string(scan.lower_margin);
  }
  return scan;
}

}  // namespace subradius
