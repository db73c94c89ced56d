#pragma once

#include "linemap/base/camera_view.h"
#include "linemap/base/types.h"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace linemap {

struct Segment2D {
    V2D p1 = V2D::Zero();
    V2D p2 = V2D::Zero();

    Segment2D() = default;
    Segment2D(const V2D& a, const V2D& b) : p1(a), p2(b) {}

    double length() const { return (p2 - p1).norm(); }
    bool is_valid() const { return p1.allFinite() && p2.allFinite() && length() > 0.0; }
    V2D midpoint() const { return 0.5 * (p1 + p2); }
    V2D direction() const { return (p2 - p1).normalized(); }
    // Homogeneous infinite line through both endpoints, normalized so that
    // (a, b) is a unit normal.
    V3D line_coeffs() const;
};

struct Segment3D {
    V3D e1 = V3D::Zero();
    V3D e2 = V3D::Zero();

    Segment3D() = default;
    Segment3D(const V3D& a, const V3D& b) : e1(a), e2(b) {}

    double length() const { return (e2 - e1).norm(); }
    bool is_valid() const { return e1.allFinite() && e2.allFinite() && length() > 0.0; }
    V3D midpoint() const { return 0.5 * (e1 + e2); }
    V3D direction() const { return (e2 - e1).normalized(); }
};

// Homogeneous 2D line l with l^T [x, y, 1] = 0.
struct Line2D {
    V3D l = V3D::Zero();

    V3D normalized() const { return l / l.head<2>().norm(); }
    double distance(const V2D& p) const { return std::abs(normalized().dot(p.homogeneous())); }
    V2D direction() const { return V2D(-l.y(), l.x()).normalized(); }
};

// Infinite 3D line as unit direction d and moment m = p x d.
class PluckerLine {
 public:
    PluckerLine() = default;
    // Normalizes (d, m) jointly so that |d| = 1, removes any component of m
    // along d and applies the direction sign convention.
    PluckerLine(const V3D& d, const V3D& m);

    static PluckerLine from_point_direction(const V3D& point, const V3D& direction);

    const V3D& d() const { return d_; }
    const V3D& m() const { return m_; }

    // Closest point on the line to the origin.
    V3D point() const { return d_.cross(m_); }
    double coordinate(const V3D& p) const { return d_.dot(p); }
    V3D at(double s) const { return point() + s * d_; }
    double distance(const V3D& p) const;

 private:
    V3D d_ = V3D::UnitX();
    V3D m_ = V3D::Zero();
};

// Orthonormal representation (U, W) in SO(3) x SO(2) with 4 degrees of freedom.
struct MinimalLineParam {
    Eigen::Quaterniond uq = Eigen::Quaterniond::Identity();
    V2D w = V2D(1.0, 0.0);

    static MinimalLineParam from_plucker(const PluckerLine& line);
    PluckerLine to_plucker() const;
    M3D U() const { return uq.toRotationMatrix(); }
    // Retraction: U <- U * Exp([delta_0..2]x), W <- W * Rot(delta_3).
    MinimalLineParam plus(const V4D& delta) const;
};

// First nonzero component of d positive.
V3D canonical_direction(const V3D& d);

PluckerLine plucker_from_segment(const Segment3D& seg);

// Image of the infinite line, via [l]x = P L P^T.
Line2D project_line(const PluckerLine& line, const CameraView& view);

V3D project_point_to_line3d(const V3D& p, const PluckerLine& line);

// Point on l1 closest to l2. Empty when the lines are parallel.
std::optional<V3D> closest_point_line_to_line(const PluckerLine& l1, const PluckerLine& l2,
                                              double parallel_tol = 1e-8);

PluckerLine camera_ray(const CameraView& view, const V2D& pixel);

// Line through the mean along the principal eigenvector of the scatter.
// Empty when all points coincide.
std::optional<PluckerLine> fit_line_pca(std::span<const V3D> points);

// Extent of sorted 1-D coordinates: third outermost value on each side with
// at least 6 values, otherwise min/max.
std::pair<double, double> robust_extent(std::vector<double> coords);

struct SegmentObservation {
    const CameraView* view = nullptr;
    Segment2D segment;
};

// Unprojects every support endpoint onto the line and keeps the robust extent.
Segment3D segment_from_supports(const PluckerLine& line, std::span<const SegmentObservation> supports);

// Project endpoints onto the line and keep the robust extent.
Segment3D segment_from_points(const PluckerLine& line, std::span<const V3D> points);

// Projects a 3D segment; empty if an endpoint is not in front of the camera.
std::optional<Segment2D> project_segment(const Segment3D& seg, const CameraView& view);

double point_segment_distance(const V2D& p, const Segment2D& seg);
double point_segment_distance(const V3D& p, const Segment3D& seg);

}  // namespace linemap
