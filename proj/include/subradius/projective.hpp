#pragma once

#include "subradius/matrix_set.hpp"

#include <optional>
#include <vector>

namespace subradius {

/// The projective line of a 2-dimensional space, modeled as the circle
/// [0, pi) of direction angles. An invertible matrix acts on it as a
/// monotone circle homeomorphism (orientation given by the sign of det).

inline constexpr double kPi = 3.14159265358979323846;

/// Principal angle of a nonzero direction vector, in [0, pi).
double principal_angle(double x, double y);
double principal_angle(const Eigen::Vector2d& v);

/// Unit direction vector for an angle.
Eigen::Vector2d direction(double angle);

/// Angle of M * u(alpha) in [0, pi).
double image_angle(const Matrix& m, double alpha);

/// Projective angle from the direction of `from` to the direction of `to`,
/// measured counterclockwise, in [0, pi).
double projective_angle_diff(const Eigen::Vector2d& from, const Eigen::Vector2d& to);

/// Projective (sine) distance between two directions: |sin(angle difference)|.
/// Equals |u x v| / (|u| |v|), the norm of the wedge of unit representatives.
double projective_distance(double alpha, double beta);

/// Closed arc on the projective circle: start angle in [0, pi) and a length
/// in (0, pi). May wrap past pi.
struct Arc {
  double start = 0.0;
  double length = 0.0;
  double end() const;  ///< start + length reduced mod pi
  bool contains(double angle, double tol = 0.0) const;
};

/// A finite union of disjoint closed arcs, kept in canonical form (sorted by
/// start angle, overlapping arcs merged, wrap handled).
class ArcUnion {
 public:
  ArcUnion() = default;
  explicit ArcUnion(std::vector<Arc> arcs);

  static ArcUnion full();  ///< the whole circle

  const std::vector<Arc>& arcs() const { return arcs_; }
  bool empty() const { return arcs_.empty() && !full_; }
  bool is_full() const { return full_; }
  double total_length() const;
  bool contains(double angle, double tol = 0.0) const;

  /// Index of the arc containing the angle, if any.
  std::optional<std::size_t> find_arc(double angle, double tol = 0.0) const;

  /// Union with another arc set (canonicalizes the result).
  ArcUnion unite(const ArcUnion& other) const;

  /// Enlarges every arc by `pad` on both sides (may merge arcs or fill the
  /// circle).
  ArcUnion widened(double pad) const;

  /// Smallest clearance of `inner` inside this union: the minimum over
  /// the arcs of `inner` of the distance from their endpoints to the
  /// boundary of the containing arc. Negative if some arc of `inner` is not
  /// contained in a single arc of this union.
  double clearance(const ArcUnion& inner) const;

 private:
  void canonicalize();
  std::vector<Arc> arcs_;
  bool full_ = false;
};

/// Image of an arc under the projective action of an invertible matrix.
/// The action is a monotone circle map, so the image is the arc spanned by
/// the endpoint images (orientation reversed when det < 0).
Arc arc_image(const Matrix& m, const Arc& a);

/// Image of a whole union.
ArcUnion arc_union_image(const Matrix& m, const ArcUnion& u);

/// Real eigendirections of a 2x2 matrix with their eigenvalues, sorted so the
/// direction of the larger |eigenvalue| comes first. Empty when the
/// eigenvalues are not real or the matrix is a multiple of a rotation.
struct EigenDirection {
  double angle = 0.0;
  double eigenvalue = 0.0;
};
std::vector<EigenDirection> real_eigen_directions(const Matrix& m);

}  // namespace subradius
