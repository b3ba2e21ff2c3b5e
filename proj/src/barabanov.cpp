#include "subradius/barabanov.hpp"

#include "subradius/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace subradius {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSupportTol = 1e-9;  ///< slack when locating image angles in the support

double reduce_mod_pi(double a) {
  double r = std::fmod(a, kPi);
  if (r < 0.0) r += kPi;
  return r;
}

}  // namespace

double varphi(const Matrix& a, double angle) {
  if (a.rows() != 2 || a.cols() != 2) throw std::invalid_argument("varphi: 2x2 matrix required");
  return std::log((a * direction(angle)).norm());
}

ProjectiveGridFunction::ProjectiveGridFunction(ArcUnion support, int grid_size)
    : support_(std::move(support)) {
  if (grid_size < 2) throw std::invalid_argument("ProjectiveGridFunction: grid_size must be >= 2");
  if (support_.empty() || support_.is_full()) {
    throw std::invalid_argument("ProjectiveGridFunction: support must be a proper nonempty union");
  }
  const double total = support_.total_length();
  for (const Arc& arc : support_.arcs()) {
    Segment seg;
    seg.start = arc.start;
    seg.length = arc.length;
    seg.count = std::max(2, static_cast<int>(std::ceil(grid_size * arc.length / total)) + 1);
    seg.step = arc.length / (seg.count - 1);
    seg.first = static_cast<int>(angles_.size());
    for (int j = 0; j < seg.count; ++j) {
      angles_.push_back(reduce_mod_pi(seg.start + j * seg.step));
    }
    grid_step_ = std::max(grid_step_, seg.step);
    segments_.push_back(seg);
  }
  values_.assign(angles_.size(), 0.0);
}

double ProjectiveGridFunction::interpolate(double angle) const {
  const double a = reduce_mod_pi(angle);
  for (const Segment& seg : segments_) {
    double off = a - reduce_mod_pi(seg.start);
    if (off < -kSupportTol) off += kPi;
    if (off < 0.0) off = 0.0;
    if (off > seg.length + kSupportTol) continue;
    const double t = std::min(off, seg.length) / seg.step;
    int j = std::min(static_cast<int>(t), seg.count - 2);
    const double frac = t - j;
    const double v0 = values_[static_cast<std::size_t>(seg.first + j)];
    const double v1 = values_[static_cast<std::size_t>(seg.first + j + 1)];
    return v0 + frac * (v1 - v0);
  }
  throw std::runtime_error("ProjectiveGridFunction::interpolate: angle outside the support");
}

double ProjectiveGridFunction::mean() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s / static_cast<double>(values_.size());
}

std::vector<std::pair<int, int>> ProjectiveGridFunction::segment_ranges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(segments_.size());
  for (const Segment& seg : segments_) out.emplace_back(seg.first, seg.count);
  return out;
}

double ProjectiveGridFunction::discrete_lipschitz() const {
  double lip = 0.0;
  for (const Segment& seg : segments_) {
    for (int j = 0; j + 1 < seg.count; ++j) {
      const double dv = values_[static_cast<std::size_t>(seg.first + j + 1)] -
                        values_[static_cast<std::size_t>(seg.first + j)];
      lip = std::max(lip, std::abs(dv) / seg.step);
    }
  }
  return lip;
}

ProjectiveGridFunction apply_transfer_operator(const MatrixSet& set,
                                               const ProjectiveGridFunction& f, TransferKind kind,
                                               int threads) {
  if (set.dim() != 2) {
    throw std::invalid_argument("apply_transfer_operator: dimension 2 required");
  }
  ProjectiveGridFunction out = f;
  const auto& angles = f.angles();
  std::vector<double>& values = out.values();
  const int n = f.size();
  std::atomic<bool> failed{false};
  parallel_for(
      n,
      [&](int i) {
        if (failed.load(std::memory_order_relaxed)) return;
        const double u = angles[static_cast<std::size_t>(i)];
        double best = (kind == TransferKind::Lower) ? kInf : -kInf;
        for (int b = 0; b < set.size(); ++b) {
          const Matrix& m = set.matrix(b);
          double candidate;
          try {
            candidate = f.interpolate(image_angle(m, u)) + varphi(m, u);
          } catch (const std::runtime_error&) {
            failed.store(true, std::memory_order_relaxed);
            return;
          }
          best = (kind == TransferKind::Lower) ? std::min(best, candidate)
                                               : std::max(best, candidate);
        }
        values[static_cast<std::size_t>(i)] = best;
      },
      threads);
  if (failed.load()) {
    throw std::runtime_error(
        "apply_transfer_operator: image of a node escapes the support "
        "(support not invariant under the set)");
  }
  return out;
}

namespace {

/// Empirical projective contraction: the worst ratio of image distances to
/// node distances over adjacent node pairs within each support arc, across
/// all elements.
double empirical_contraction(const MatrixSet& set, const ProjectiveGridFunction& f) {
  const auto& angles = f.angles();
  double theta = 0.0;
  for (int b = 0; b < set.size(); ++b) {
    const Matrix& m = set.matrix(b);
    for (const auto& [first, count] : f.segment_ranges()) {
      for (int i = first; i + 1 < first + count; ++i) {
        const double du = projective_distance(angles[static_cast<std::size_t>(i)],
                                              angles[static_cast<std::size_t>(i) + 1]);
        if (du <= 0.0) continue;
        const double dv =
            projective_distance(image_angle(m, angles[static_cast<std::size_t>(i)]),
                                image_angle(m, angles[static_cast<std::size_t>(i) + 1]));
        theta = std::max(theta, dv / du);
      }
    }
  }
  return theta;
}

BarabanovResult iterate_barabanov(const MatrixSet& set, const Multicone& multicone,
                                  const BarabanovConfig& cfg, TransferKind kind) {
  if (set.dim() != 2) throw std::invalid_argument("compute_barabanov: dimension 2 required");
  if (multicone.cone.empty() || multicone.cone.is_full()) {
    throw std::invalid_argument("compute_barabanov: multicone must be a proper nonempty union");
  }
  if (multicone_margin(set, multicone.cone) < 0.0) {
    throw std::invalid_argument("compute_barabanov: multicone is not invariant under the set");
  }

  ProjectiveGridFunction f(multicone.cone, cfg.grid_size);
  const double theta = empirical_contraction(set, f);
  double cond = 0.0;
  for (int i = 0; i < set.size(); ++i) {
    cond = std::max(cond, set.op_norm(i) / set.sigma_min(i));
  }
  const double lipschitz_budget =
      (theta < 1.0) ? std::sqrt(2.0) * cond / (1.0 - theta) : kInf;

  double beta_prev = kInf;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    ProjectiveGridFunction lf = apply_transfer_operator(set, f, kind, cfg.threads);
    const double beta = lf.mean();
    double residual = 0.0;
    for (int i = 0; i < f.size(); ++i) {
      residual = std::max(residual, std::abs(lf.values()[static_cast<std::size_t>(i)] -
                                             f.values()[static_cast<std::size_t>(i)] - beta));
    }
    if (residual <= cfg.tol && std::abs(beta - beta_prev) <= cfg.tol) {
      f.lipschitz_bound = lipschitz_budget;  // f is the iterate whose residual was measured
      const double beta_error = (theta < 1.0) ? residual / (1.0 - theta) : kInf;
      return BarabanovResult{beta, std::move(f), residual, theta, it, beta_error};
    }
    beta_prev = beta;
    for (int i = 0; i < f.size(); ++i) {
      f.values()[static_cast<std::size_t>(i)] =
          lf.values()[static_cast<std::size_t>(i)] - beta;
    }
  }
  throw std::runtime_error("compute_barabanov: no convergence within max_iter");
}

}  // namespace

BarabanovResult compute_barabanov(const MatrixSet& set, const Multicone& multicone,
                                  const BarabanovConfig& cfg) {
  return iterate_barabanov(set, multicone, cfg, TransferKind::Lower);
}

BarabanovResult compute_upper_barabanov(const MatrixSet& set, const Multicone& multicone,
                                        const BarabanovConfig& cfg) {
  return iterate_barabanov(set, multicone, cfg, TransferKind::Upper);
}

double barabanov_lower_bound(const BarabanovResult& result) {
  return std::exp(result.beta - result.beta_error);
}

void write_csv(const ProjectiveGridFunction& f, std::ostream& os) {
  os << "angle,value\n";
  char line[80];
  for (int i = 0; i < f.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.17g,%.17g\n", f.angles()[static_cast<std::size_t>(i)],
                  f.values()[static_cast<std::size_t>(i)]);
    os << line;
  }
}

}  // namespace subradius
