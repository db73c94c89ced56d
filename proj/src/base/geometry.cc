#include "linemap/base/geometry.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace linemap {

V3D Segment2D::line_coeffs() const {
    const V3D l = p1.homogeneous().cross(p2.homogeneous());
    const double n = l.head<2>().norm();
    if (!(n > 0.0))
        throw DegenerateError("zero-length 2D segment has no supporting line");
    return l / n;
}

V3D canonical_direction(const V3D& d) {
    for (int i = 0; i < 3; ++i) {
        if (d[i] > 0.0)
            return d;
        if (d[i] < 0.0)
            return -d;
    }
    return d;
}

PluckerLine::PluckerLine(const V3D& d, const V3D& m) {
    const double n = d.norm();
    if (!(n > 0.0) || !std::isfinite(n) || !m.allFinite())
        throw DegenerateError("invalid Plucker direction");
    d_ = d / n;
    m_ = m / n;
    m_ -= d_ * d_.dot(m_);
    if (canonical_direction(d_) != d_) {
        d_ = -d_;
        m_ = -m_;
    }
}

PluckerLine PluckerLine::from_point_direction(const V3D& point, const V3D& direction) {
    const double n = direction.norm();
    if (!(n > 0.0))
        throw DegenerateError("zero line direction");
    const V3D d = direction / n;
    return PluckerLine(d, point.cross(d));
}

double PluckerLine::distance(const V3D& p) const {
    return (m_ + d_.cross(p)).norm();
}

MinimalLineParam MinimalLineParam::from_plucker(const PluckerLine& line) {
    const V3D& d = line.d();
    const V3D& m = line.m();
    const double mn = m.norm();
    V3D u2;
    if (mn > 0.0) {
        u2 = m / mn;
    } else {
        int k = 0;
        d.cwiseAbs().minCoeff(&k);
        const V3D e = V3D::Unit(k);
        u2 = (e - d * d.dot(e)).normalized();
    }
    M3D U;
    U.col(0) = d;
    U.col(1) = u2;
    U.col(2) = d.cross(u2).normalized();
    MinimalLineParam p;
    p.uq = Eigen::Quaterniond(U).normalized();
    p.w = V2D(1.0, mn) / std::sqrt(1.0 + mn * mn);
    return p;
}

PluckerLine MinimalLineParam::to_plucker() const {
    const M3D U = uq.normalized().toRotationMatrix();
    return PluckerLine(U.col(0), (w(1) / w(0)) * U.col(1));
}

MinimalLineParam MinimalLineParam::plus(const V4D& delta) const {
    const V3D dr = delta.head<3>();
    const double angle = dr.norm();
    Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
    if (angle > 0.0)
        dq = Eigen::Quaterniond(Eigen::AngleAxisd(angle, dr / angle));
    MinimalLineParam out;
    out.uq = (uq * dq).normalized();
    const double c = std::cos(delta(3));
    const double s = std::sin(delta(3));
    out.w = V2D(w(0) * c - w(1) * s, w(1) * c + w(0) * s).normalized();
    return out;
}

PluckerLine plucker_from_segment(const Segment3D& seg) {
    const V3D diff = seg.e2 - seg.e1;
    const double len = diff.norm();
    if (!(len > 0.0) || !std::isfinite(len))
        throw DegenerateError("zero-length 3D segment");
    const V3D d = diff / len;
    return PluckerLine(d, seg.e1.cross(d));
}

Line2D project_line(const PluckerLine& line, const CameraView& view) {
    const V3D dc = view.R() * line.d();
    const V3D mc = view.R() * line.m() + view.t().cross(dc);
    const double scale = line.m().norm() + view.t().norm();
    if (mc.norm() <= 1e-12 * scale || mc.norm() == 0.0)
        throw DegenerateError("line passes through the camera center of image " + std::to_string(view.image_id()));
    Line2D out;
    out.l = view.K_inv().transpose() * mc;
    if (out.l.head<2>().norm() <= 1e-12 * out.l.norm())
        throw DegenerateError("line projects to the line at infinity in image " + std::to_string(view.image_id()));
    return out;
}

V3D project_point_to_line3d(const V3D& p, const PluckerLine& line) {
    const V3D& d = line.d();
    return p + d.cross(line.m() + d.cross(p));
}

std::optional<V3D> closest_point_line_to_line(const PluckerLine& l1, const PluckerLine& l2, double parallel_tol) {
    const V3D n = l1.d().cross(l2.d());
    const double n2 = n.squaredNorm();
    if (std::sqrt(n2) < parallel_tol)
        return std::nullopt;
    return (-l1.m().cross(l2.d().cross(n)) + l2.m().dot(n) * l1.d()) / n2;
}

PluckerLine camera_ray(const CameraView& view, const V2D& pixel) {
    return PluckerLine::from_point_direction(view.center(), view.ray_direction(pixel));
}

std::optional<PluckerLine> fit_line_pca(std::span<const V3D> points) {
    if (points.size() < 2)
        return std::nullopt;
    V3D mean = V3D::Zero();
    for (const V3D& p : points)
        mean += p;
    mean /= static_cast<double>(points.size());
    M3D scatter = M3D::Zero();
    double magnitude = 0.0;
    for (const V3D& p : points) {
        const V3D q = p - mean;
        scatter += q * q.transpose();
        magnitude += p.squaredNorm();
    }
    if (!(scatter.trace() > 1e-24 * magnitude) || scatter.trace() == 0.0)
        return std::nullopt;
    Eigen::SelfAdjointEigenSolver<M3D> eig(scatter);
    return PluckerLine::from_point_direction(mean, eig.eigenvectors().col(2));
}

std::pair<double, double> robust_extent(std::vector<double> coords) {
    if (coords.empty())
        throw DegenerateError("no coordinates for extent");
    std::sort(coords.begin(), coords.end());
    const size_t n = coords.size();
    if (n < 6)
        return {coords.front(), coords.back()};
    return {coords[2], coords[n - 3]};
}

Segment3D segment_from_supports(const PluckerLine& line, std::span<const SegmentObservation> supports) {
    std::vector<double> coords;
    coords.reserve(2 * supports.size());
    for (const SegmentObservation& obs : supports) {
        for (const V2D& px : {obs.segment.p1, obs.segment.p2}) {
            const auto p = closest_point_line_to_line(line, camera_ray(*obs.view, px));
            if (p)
                coords.push_back(line.coordinate(*p));
        }
    }
    if (coords.empty())
        throw DegenerateError("all support rays are parallel to the line");
    const auto [a, b] = robust_extent(std::move(coords));
    return Segment3D(line.at(a), line.at(b));
}

Segment3D segment_from_points(const PluckerLine& line, std::span<const V3D> points) {
    std::vector<double> coords;
    coords.reserve(points.size());
    for (const V3D& p : points)
        coords.push_back(line.coordinate(p));
    const auto [a, b] = robust_extent(std::move(coords));
    return Segment3D(line.at(a), line.at(b));
}

std::optional<Segment2D> project_segment(const Segment3D& seg, const CameraView& view) {
    if (!(view.depth(seg.e1) > 0.0) || !(view.depth(seg.e2) > 0.0))
        return std::nullopt;
    return Segment2D(view.project(seg.e1), view.project(seg.e2));
}

double point_segment_distance(const V2D& p, const Segment2D& seg) {
    const V2D v = seg.p2 - seg.p1;
    const double l2 = v.squaredNorm();
    if (l2 == 0.0)
        return (p - seg.p1).norm();
    const double t = std::clamp((p - seg.p1).dot(v) / l2, 0.0, 1.0);
    return (p - (seg.p1 + t * v)).norm();
}

double point_segment_distance(const V3D& p, const Segment3D& seg) {
    const V3D v = seg.e2 - seg.e1;
    const double l2 = v.squaredNorm();
    if (l2 == 0.0)
        return (p - seg.e1).norm();
    const double t = std::clamp((p - seg.e1).dot(v) / l2, 0.0, 1.0);
    return (p - (seg.e1 + t * v)).norm();
}

}  // namespace linemap
