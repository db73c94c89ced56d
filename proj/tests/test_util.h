#pragma once

#include "linemap/base/camera_view.h"
#include "linemap/base/geometry.h"

#include <random>

namespace linemap::testing {

inline V3D random_vec(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    return V3D(u(rng), u(rng), u(rng));
}

inline V3D random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    V3D v(n(rng), n(rng), n(rng));
    return v.normalized();
}

inline M3D random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized().toRotationMatrix();
}

inline M3D make_K(double f, double cx, double cy) {
    M3D K;
    K << f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0;
    return K;
}

// Camera at `center` whose optical axis points at `target`.
inline CameraView look_at(int id, const V3D& center, const V3D& target, double f = 600.0, int w = 800, int h = 600,
                          const V3D& up_hint = V3D::UnitY()) {
    const V3D z = (target - center).normalized();
    V3D x = up_hint.cross(z);
    if (x.norm() < 1e-6)
        x = V3D::UnitX().cross(z);
    x.normalize();
    const V3D y = z.cross(x);
    M3D R;
    R.row(0) = x;
    R.row(1) = y;
    R.row(2) = z;
    return CameraView(id, make_K(f, 0.5 * w, 0.5 * h), R, -R * center, w, h);
}

inline Segment2D project(const Segment3D& s, const CameraView& v) {
    return Segment2D(v.project(s.e1), v.project(s.e2));
}

}  // namespace linemap::testing
