#pragma once

#include "subradius/domination.hpp"
#include "subradius/matrix_set.hpp"
#include "subradius/projective.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace subradius {

/// Lower Barabanov machinery on the projective circle (d = 2): a function
/// psi on an invariant multicone and a constant beta with
///   min_B [ psi(B u) + varphi(B, u) ] = psi(u) + beta,
/// where beta = log of the lower spectral radius. The upper variant replaces
/// min by max and estimates the upper (joint) spectral radius.

/// log(||A u|| / ||u||) for any representative u of the direction.
double varphi(const Matrix& a, double angle);

/// Piecewise-linear function on a union of projective arcs. Nodes are spaced
/// uniformly within each arc (endpoints included), with spacing at most
/// total_length / grid_size.
class ProjectiveGridFunction {
 public:
  ProjectiveGridFunction(ArcUnion support, int grid_size);

  const ArcUnion& support() const { return support_; }
  int size() const { return static_cast<int>(angles_.size()); }
  const std::vector<double>& angles() const { return angles_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  double grid_step() const { return grid_step_; }

  /// Linear interpolation in angle. Throws std::runtime_error when the angle
  /// lies outside the support (within a small tolerance).
  double interpolate(double angle) const;

  /// Arithmetic mean of the node values.
  double mean() const;

  /// Largest |value difference| / |angle difference| over adjacent node pairs.
  double discrete_lipschitz() const;

  /// (first node index, node count) per support arc, in arc order.
  std::vector<std::pair<int, int>> segment_ranges() const;

  /// Recorded Lipschitz budget C4 / (1 - theta) for the interpolant; filled
  /// in by compute_barabanov.
  double lipschitz_bound = 0.0;

 private:
  struct Segment {
    double start = 0.0;
    double length = 0.0;
    double step = 0.0;
    int first = 0;  ///< index of the segment's first node
    int count = 0;
  };
  ArcUnion support_;
  std::vector<Segment> segments_;
  std::vector<double> angles_;
  std::vector<double> values_;
  double grid_step_ = 0.0;
};

enum class TransferKind { Lower, Upper };

/// One step of the transfer operator:
///   (Lf)(u) = min over B of [ f(B u) + varphi(B, u) ]
/// (max for the Upper kind), evaluated at every node with f interpolated at
/// the image directions. Throws std::runtime_error if an image node escapes
/// the support: the support must be invariant under the set.
ProjectiveGridFunction apply_transfer_operator(const MatrixSet& set,
                                               const ProjectiveGridFunction& f,
                                               TransferKind kind = TransferKind::Lower,
                                               int threads = 0);

struct BarabanovConfig {
  int grid_size = 4096;
  double tol = 1e-9;  ///< residual and beta-increment tolerance
  int max_iter = 100000;
  int threads = 0;
};

struct BarabanovResult {
  double beta = 0.0;  ///< log of the estimated (lower or upper) spectral radius
  ProjectiveGridFunction psi;
  double residual = 0.0;  ///< sup-norm of L psi - psi - beta at the nodes
  double contraction_estimate = 0.0;  ///< empirical projective contraction theta
  int iterations = 0;
  double beta_error = 0.0;  ///< residual / (1 - theta); infinite when theta >= 1
};

/// Value iteration f <- Lf with mean normalization; the subtracted mean
/// converges to beta. Stops when both the fixed-point residual and the beta
/// increment drop to cfg.tol. The multicone must be a proper invariant union
/// for the set (re-verified here). Throws std::invalid_argument on dimension
/// != 2 or an invalid cone, std::runtime_error when max_iter is exhausted.
BarabanovResult compute_barabanov(const MatrixSet& set, const Multicone& multicone,
                                  const BarabanovConfig& cfg = {});

/// Same iteration with max in place of min; beta estimates the log of the
/// upper (joint) spectral radius.
BarabanovResult compute_upper_barabanov(const MatrixSet& set, const Multicone& multicone,
                                        const BarabanovConfig& cfg = {});

/// exp(beta - beta_error): the lower end of the Barabanov estimate, suitable
/// as BracketConfig::barabanov_lower.
double barabanov_lower_bound(const BarabanovResult& result);

/// CSV dump (header "angle,value", one node per row, 17 significant digits).
void write_csv(const ProjectiveGridFunction& f, std::ostream& os);

}  // namespace subradius
