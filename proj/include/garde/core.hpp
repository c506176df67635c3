#pragma once

// Domain types shared by every calibration stage: positions, geometries,
// observation matrices, rigid alignment and the calibration-error metric.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace garde {

/// A 2-D position in meters.
using Point2 = Eigen::Vector2d;

using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Error hierarchy. DataError covers malformed or inconsistent inputs,
// NumericalError covers singular or degenerate configurations.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

inline bool is_finite(const Point2& p) { return std::isfinite(p.x()) && std::isfinite(p.y()); }

inline double distance(const Point2& p, const Point2& q) { return (p - q).norm(); }

/// Node positions and source positions of one calibration problem.
struct Geometry {
  std::vector<Point2> nodes;
  std::vector<Point2> sources;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t source_count() const { return sources.size(); }

  /// Nodes followed by sources, in index order.
  std::vector<Point2> all_positions() const {
    std::vector<Point2> out(nodes);
    out.insert(out.end(), sources.begin(), sources.end());
    return out;
  }

  bool operator==(const Geometry&) const = default;
};

/// N x K matrix of node-to-source distance estimates with a validity mask.
/// Invalid (missing / out-of-range) entries hold NaN and must never be read.
class ObservationSet {
 public:
  ObservationSet() = default;

  explicit ObservationSet(Eigen::MatrixXd distances)
      : ObservationSet(distances, MaskMatrix::Constant(distances.rows(), distances.cols(), true)) {}

  ObservationSet(Eigen::MatrixXd distances, MaskMatrix valid)
      : distances_(std::move(distances)), valid_(std::move(valid)) {
    if (distances_.rows() != valid_.rows() || distances_.cols() != valid_.cols()) {
      throw DataError("observation matrix and validity mask differ in shape");
    }
    for (Eigen::Index n = 0; n < distances_.rows(); ++n) {
      for (Eigen::Index k = 0; k < distances_.cols(); ++k) {
        if (!valid_(n, k)) {
          distances_(n, k) = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        const double d = distances_(n, k);
        if (!std::isfinite(d) || d <= 0.0) {
          throw DataError("observation (" + std::to_string(n) + ", " + std::to_string(k) +
                          ") must be finite and positive");
        }
      }
    }
  }

  std::size_t node_count() const { return static_cast<std::size_t>(distances_.rows()); }
  std::size_t source_count() const { return static_cast<std::size_t>(distances_.cols()); }

  bool valid(std::size_t n, std::size_t k) const {
    return valid_(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  }
  double distance(std::size_t n, std::size_t k) const {
    return distances_(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  }

  const Eigen::MatrixXd& distances() const { return distances_; }
  const MaskMatrix& mask() const { return valid_; }

  std::size_t valid_in_row(std::size_t n) const {
    return static_cast<std::size_t>(valid_.row(static_cast<Eigen::Index>(n)).count());
  }
  std::size_t valid_in_column(std::size_t k) const {
    return static_cast<std::size_t>(valid_.col(static_cast<Eigen::Index>(k)).count());
  }
  std::size_t valid_count() const { return static_cast<std::size_t>(valid_.count()); }

  /// Throws DataError naming the first node row or source column with fewer
  /// than three valid entries; 2-D localization needs at least three anchors.
  void check_solvable() const {
    for (std::size_t k = 0; k < source_count(); ++k) {
      if (valid_in_column(k) < 3) {
        throw DataError("source column " + std::to_string(k) + " has " +
                        std::to_string(valid_in_column(k)) + " valid observations (need >= 3)");
      }
    }
    for (std::size_t n = 0; n < node_count(); ++n) {
      if (valid_in_row(n) < 3) {
        throw DataError("node row " + std::to_string(n) + " has " + std::to_string(valid_in_row(n)) +
                        " valid observations (need >= 3)");
      }
    }
  }

  bool operator==(const ObservationSet& other) const {
    if (valid_.rows() != other.valid_.rows() || valid_.cols() != other.valid_.cols()) return false;
    if (valid_ != other.valid_) return false;
    for (Eigen::Index n = 0; n < valid_.rows(); ++n) {
      for (Eigen::Index k = 0; k < valid_.cols(); ++k) {
        if (valid_(n, k) && distances_(n, k) != other.distances_(n, k)) return false;
      }
    }
    return true;
  }

 private:
  Eigen::MatrixXd distances_;
  MaskMatrix valid_;
};

/// Rotation (possibly improper) followed by translation: y = R x + t.
struct RigidTransform {
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  bool reflected = false;

  Point2 apply(const Point2& p) const { return rotation * p + translation; }

  std::vector<Point2> apply(std::span<const Point2> points) const {
    std::vector<Point2> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(apply(p));
    return out;
  }

  static RigidTransform rotation_about_origin(double angle_rad, Eigen::Vector2d translation = Eigen::Vector2d::Zero()) {
    RigidTransform t;
    t.rotation = Eigen::Rotation2Dd(angle_rad).toRotationMatrix();
    t.translation = translation;
    return t;
  }
};

struct Alignment {
  RigidTransform transform;
  std::vector<Point2> aligned;
  double rmse = 0.0;
};

inline void check_dimensions(const Geometry& geometry, const ObservationSet& obs) {
  if (geometry.node_count() != obs.node_count() || geometry.source_count() != obs.source_count()) {
    throw DataError("geometry has " + std::to_string(geometry.node_count()) + " nodes / " +
                    std::to_string(geometry.source_count()) + " sources but observations are " +
                    std::to_string(obs.node_count()) + " x " + std::to_string(obs.source_count()));
  }
}

/// Sum over valid entries of (d_hat^2 - |p_n - o_k|^2)^2, in m^4.
inline double cost_j(const Geometry& geometry, const ObservationSet& obs) {
  check_dimensions(geometry, obs);
  double total = 0.0;
  for (std::size_t n = 0; n < obs.node_count(); ++n) {
    for (std::size_t k = 0; k < obs.source_count(); ++k) {
      if (!obs.valid(n, k)) continue;
      const double d = obs.distance(n, k);
      const double e = d * d - (geometry.nodes[n] - geometry.sources[k]).squaredNorm();
      total += e * e;
    }
  }
  return total;
}

/// Distance residuals d_hat - |p_n - o_k|. Missing entries are NaN with valid = false.
struct Residuals {
  Eigen::MatrixXd values;
  MaskMatrix valid;
};

inline Residuals residuals(const Geometry& geometry, const ObservationSet& obs) {
  check_dimensions(geometry, obs);
  Residuals r{Eigen::MatrixXd(obs.distances().rows(), obs.distances().cols()), obs.mask()};
  for (std::size_t n = 0; n < obs.node_count(); ++n) {
    for (std::size_t k = 0; k < obs.source_count(); ++k) {
      const auto i = static_cast<Eigen::Index>(n);
      const auto j = static_cast<Eigen::Index>(k);
      r.values(i, j) = obs.valid(n, k) ? obs.distance(n, k) - distance(geometry.nodes[n], geometry.sources[k])
                                       : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return r;
}

/// Mean absolute distance residual over valid entries. This is the score used
/// to rank geometries against each other.
inline double mean_abs_residual(const Geometry& geometry, const ObservationSet& obs) {
  check_dimensions(geometry, obs);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < obs.node_count(); ++n) {
    for (std::size_t k = 0; k < obs.source_count(); ++k) {
      if (!obs.valid(n, k)) continue;
      total += std::abs(obs.distance(n, k) - distance(geometry.nodes[n], geometry.sources[k]));
      ++count;
    }
  }
  if (count == 0) throw DataError("no valid observations");
  return total / static_cast<double>(count);
}

namespace detail {

inline Point2 centroid(std::span<const Point2> points) {
  Point2 c = Point2::Zero();
  for (const auto& p : points) c += p;
  return c / static_cast<double>(points.size());
}

inline bool all_coincident(std::span<const Point2> points, const Point2& center) {
  double scale = 1.0;
  double spread = 0.0;
  for (const auto& p : points) {
    scale = std::max(scale, p.cwiseAbs().maxCoeff());
    spread = std::max(spread, (p - center).norm());
  }
  return spread <= 1e-12 * scale;
}

}  // namespace detail

/// Least-squares rigid alignment of `moving` onto `reference` (orthogonal
/// Procrustes on centered sets). With allow_reflection = false the rotation
/// is restricted to det = +1.
inline Alignment align(std::span<const Point2> moving, std::span<const Point2> reference, bool allow_reflection) {
  if (moving.size() != reference.size()) {
    throw DataError("alignment needs equal point counts (" + std::to_string(moving.size()) + " vs " +
                    std::to_string(reference.size()) + ")");
  }
  if (moving.size() < 2) throw DataError("alignment needs at least two points");

  const Point2 cm = detail::centroid(moving);
  const Point2 cr = detail::centroid(reference);
  if (detail::all_coincident(moving, cm) || detail::all_coincident(reference, cr)) {
    throw NumericalError("alignment is undefined for a point set whose points all coincide");
  }

  Eigen::Matrix2d cross = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < moving.size(); ++i) {
    cross += (moving[i] - cm) * (reference[i] - cr).transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix2d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix2d u = svd.matrixU();
  const Eigen::Matrix2d v = svd.matrixV();
  Eigen::Matrix2d rotation = v * u.transpose();
  if (!allow_reflection && rotation.determinant() < 0.0) {
    Eigen::Matrix2d flip = Eigen::Matrix2d::Identity();
    flip(1, 1) = -1.0;
    rotation = v * flip * u.transpose();
  }

  Alignment out;
  out.transform.rotation = rotation;
  out.transform.translation = cr - rotation * cm;
  out.transform.reflected = rotation.determinant() < 0.0;
  out.aligned = out.transform.apply(moving);
  double sq = 0.0;
  for (std::size_t i = 0; i < moving.size(); ++i) sq += (out.aligned[i] - reference[i]).squaredNorm();
  out.rmse = std::sqrt(sq / static_cast<double>(moving.size()));
  return out;
}

/// RMSE between estimate and truth after the best rigid mapping of the estimate.
inline double calibration_error(std::span<const Point2> estimated, std::span<const Point2> truth,
                                bool allow_reflection = true) {
  if (estimated.size() != truth.size()) {
    throw DataError("calibration error needs equal point counts (" + std::to_string(estimated.size()) + " vs " +
                    std::to_string(truth.size()) + ")");
  }
  return align(estimated, truth, allow_reflection).rmse;
}

/// Whole-geometry variant: nodes and sources are aligned jointly.
inline double calibration_error(const Geometry& estimated, const Geometry& truth, bool allow_reflection = true) {
  if (estimated.node_count() != truth.node_count() || estimated.source_count() != truth.source_count()) {
    throw DataError("geometries differ in node or source count");
  }
  const auto est = estimated.all_positions();
  const auto ref = truth.all_positions();
  return calibration_error(est, ref, allow_reflection);
}

}  // namespace garde
