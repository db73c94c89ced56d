#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace linemap {

using V2D = Eigen::Vector2d;
using V3D = Eigen::Vector3d;
using V4D = Eigen::Vector4d;
using M2D = Eigen::Matrix2d;
using M3D = Eigen::Matrix3d;
using M4D = Eigen::Matrix4d;
using M34D = Eigen::Matrix<double, 3, 4>;

// Malformed or out-of-contract input (bad files, invalid camera matrices...).
class InvalidInputError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

// Geometrically degenerate configuration (zero-length segment, parallel lines,
// singular triangulation system...).
class DegenerateError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kPi = std::numbers::pi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline M3D skew(const V3D& v) {
    M3D m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

}  // namespace linemap
