#include "subradius/projective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace subradius {

namespace {
constexpr double kFullTol = 1e-9;  // union within this of pi counts as the whole circle

double reduce_mod_pi(double a) {
  double r = std::fmod(a, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r -= kPi;
  return r;
}
}  // namespace

double principal_angle(double x, double y) {
  double a = std::atan2(y, x);
  if (a < 0.0) a += kPi;
  if (a >= kPi) a -= kPi;
  return a;
}

double principal_angle(const Eigen::Vector2d& v) { return principal_angle(v.x(), v.y()); }

Eigen::Vector2d direction(double angle) { return {std::cos(angle), std::sin(angle)}; }

double image_angle(const Matrix& m, double alpha) {
  const Eigen::Vector2d v = m * direction(alpha);
  return principal_angle(v);
}

double projective_angle_diff(const Eigen::Vector2d& from, const Eigen::Vector2d& to) {
  const double cross = from.x() * to.y() - from.y() * to.x();
  const double dot = from.dot(to);
  double th = std::atan2(cross, dot);  // (-pi, pi]
  if (th < 0.0) th += kPi;
  if (th >= kPi) th -= kPi;
  return th;
}

double projective_distance(double alpha, double beta) { return std::abs(std::sin(alpha - beta)); }

double Arc::end() const { return reduce_mod_pi(start + length); }

bool Arc::contains(double angle, double tol) const {
  const double a = reduce_mod_pi(angle);
  double off = a - start;
  // Wrap only genuinely-before points; keep rounding-level undershoot of the
  // start inside the tolerance band instead of sending it across the circle.
  if (off < -tol) off += kPi;
  return off <= length + tol;
}

ArcUnion::ArcUnion(std::vector<Arc> arcs) : arcs_(std::move(arcs)) { canonicalize(); }

ArcUnion ArcUnion::full() {
  ArcUnion u;
  u.full_ = true;
  return u;
}

void ArcUnion::canonicalize() {
  if (full_) {
    arcs_.clear();
    return;
  }
  // Split wrapped arcs at pi, merge on the line, then rejoin across pi.
  std::vector<std::pair<double, double>> segs;  // [lo, hi] with 0 <= lo < hi <= pi
  for (const Arc& a : arcs_) {
    if (a.length <= 0.0) continue;
    if (a.length >= kPi - 1e-15) {
      full_ = true;
      arcs_.clear();
      return;
    }
    const double s = reduce_mod_pi(a.start);
    const double e = s + a.length;
    if (e <= kPi) {
      segs.emplace_back(s, e);
    } else {
      segs.emplace_back(s, kPi);
      segs.emplace_back(0.0, e - kPi);
    }
  }
  if (segs.empty()) {
    arcs_.clear();
    return;
  }
  std::sort(segs.begin(), segs.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& s : segs) {
    if (!merged.empty() && s.first <= merged.back().second + 1e-15) {
      merged.back().second = std::max(merged.back().second, s.second);
    } else {
      merged.push_back(s);
    }
  }
  // Rejoin across the pi boundary.
  bool wrap = merged.size() >= 2 && merged.front().first <= 1e-15 && merged.back().second >= kPi - 1e-15;
  arcs_.clear();
  double total = 0.0;
  if (wrap) {
    const auto first = merged.front();
    const auto last = merged.back();
    for (std::size_t i = 1; i + 1 < merged.size(); ++i) {
      arcs_.push_back({merged[i].first, merged[i].second - merged[i].first});
      total += arcs_.back().length;
    }
    Arc joined{last.first, (kPi - last.first) + first.second};
    if (joined.length >= kPi - kFullTol) {
      full_ = true;
      arcs_.clear();
      return;
    }
    arcs_.push_back(joined);
    total += joined.length;
    std::sort(arcs_.begin(), arcs_.end(), [](const Arc& x, const Arc& y) { return x.start < y.start; });
  } else {
    for (const auto& s : merged) {
      arcs_.push_back({s.first, s.second - s.first});
      total += arcs_.back().length;
    }
  }
  if (total >= kPi - kFullTol) {
    full_ = true;
    arcs_.clear();
  }
}

double ArcUnion::total_length() const {
  if (full_) return kPi;
  double t = 0.0;
  for (const Arc& a : arcs_) t += a.length;
  return t;
}

bool ArcUnion::contains(double angle, double tol) const {
  if (full_) return true;
  for (const Arc& a : arcs_) {
    if (a.contains(angle, tol)) return true;
  }
  return false;
}

std::optional<std::size_t> ArcUnion::find_arc(double angle, double tol) const {
  for (std::size_t i = 0; i < arcs_.size(); ++i) {
    if (arcs_[i].contains(angle, tol)) return i;
  }
  return std::nullopt;
}

ArcUnion ArcUnion::unite(const ArcUnion& other) const {
  if (full_ || other.full_) return full();
  std::vector<Arc> all = arcs_;
  all.insert(all.end(), other.arcs_.begin(), other.arcs_.end());
  return ArcUnion(std::move(all));
}

ArcUnion ArcUnion::widened(double pad) const {
  if (full_) return full();
  std::vector<Arc> out;
  out.reserve(arcs_.size());
  for (const Arc& a : arcs_) {
    Arc w{reduce_mod_pi(a.start - pad), std::min(a.length + 2.0 * pad, kPi)};
    out.push_back(w);
  }
  return ArcUnion(std::move(out));
}

double ArcUnion::clearance(const ArcUnion& inner) const {
  if (full_) return kPi;
  if (inner.is_full()) return -kPi;
  // Rounding guard: an inner endpoint that lands a few ulps before the start
  // of its containing arc must not be wrapped across the circle, and an arc
  // that coincides with a containing arc up to rounding should report a tiny
  // signed clearance instead of falling through to "not contained".
  constexpr double kGuard = 1e-12;
  double best = kPi;
  for (const Arc& t : inner.arcs_) {
    double local = -kPi;
    for (const Arc& c : arcs_) {
      // Offset of t inside c, measured circularly from c.start.
      double off = reduce_mod_pi(t.start) - c.start;
      if (off < -kGuard) off += kPi;
      if (off <= c.length + kGuard && off + t.length <= c.length + kGuard) {
        local = std::max(local, std::min(off, c.length - (off + t.length)));
      }
    }
    best = std::min(best, local);
  }
  return best;
}

Arc arc_image(const Matrix& m, const Arc& a) {
  if (m.rows() != 2 || m.cols() != 2) throw std::invalid_argument("arc_image: 2x2 matrix required");
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  if (det == 0.0) throw std::invalid_argument("arc_image: singular matrix");
  const Eigen::Vector2d va = m * direction(a.start);
  const Eigen::Vector2d vb = m * direction(a.start + a.length);
  if (det > 0.0) {
    return {principal_angle(va), projective_angle_diff(va, vb)};
  }
  return {principal_angle(vb), projective_angle_diff(vb, va)};
}

ArcUnion arc_union_image(const Matrix& m, const ArcUnion& u) {
  if (u.is_full()) return ArcUnion::full();
  std::vector<Arc> images;
  images.reserve(u.arcs().size());
  for (const Arc& a : u.arcs()) images.push_back(arc_image(m, a));
  return ArcUnion(std::move(images));
}

std::vector<EigenDirection> real_eigen_directions(const Matrix& m) {
  if (m.rows() != 2 || m.cols() != 2) throw std::invalid_argument("real_eigen_directions: 2x2 matrix required");
  const double t = m(0, 0) + m(1, 1);
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double disc = t * t - 4.0 * det;
  std::vector<EigenDirection> out;
  if (disc < 0.0) return out;  // non-real spectrum
  const double r = std::sqrt(disc);
  const double mu1 = (t + r) / 2.0;
  const double mu2 = (t - r) / 2.0;
  // Scalar multiples of the identity fix every direction; there is no
  // distinguished eigendirection to report.
  if (m(0, 1) == 0.0 && m(1, 0) == 0.0 && m(0, 0) == m(1, 1)) return out;
  for (double mu : {mu1, mu2}) {
    // Eigenvector of [[a-mu, b], [c, d-mu]]: pick the better-conditioned row.
    const double a = m(0, 0) - mu, b = m(0, 1);
    const double c = m(1, 0), d = m(1, 1) - mu;
    Eigen::Vector2d v;
    if (std::abs(a) + std::abs(b) >= std::abs(c) + std::abs(d)) {
      v = (std::abs(b) > std::abs(a)) ? Eigen::Vector2d(1.0, -a / b) : Eigen::Vector2d(-b / a, 1.0);
    } else {
      v = (std::abs(d) > std::abs(c)) ? Eigen::Vector2d(1.0, -c / d) : Eigen::Vector2d(-d / c, 1.0);
    }
    if (std::abs(a) + std::abs(b) + std::abs(c) + std::abs(d) == 0.0) v = Eigen::Vector2d(1.0, 0.0);
    out.push_back({principal_angle(v), mu});
  }
  if (std::abs(out[1].eigenvalue) > std::abs(out[0].eigenvalue)) std::swap(out[0], out[1]);
  if (disc == 0.0) out.pop_back();  // single eigendirection (defective or scalar)
  return out;
}

}  // namespace subradius
