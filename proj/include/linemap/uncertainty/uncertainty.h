#pragma once

#include "linemap/base/camera_view.h"
#include "linemap/base/geometry.h"

#include <cstdint>
#include <ostream>
#include <vector>

namespace linemap::uncertainty {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat68 = Eigen::Matrix<double, 6, 8>;

struct TriangulationCovariance {
    Segment3D segment;
    Mat68 jacobian = Mat68::Zero();
    Mat6 sigma = Mat6::Zero();
    double uncertainty = 0.0;  // largest eigenvalue of sigma
};

// Stacked pixels (p1 ref, p2 ref, p1 match, p2 match).
Vec8 stack_pixels(const Segment2D& ref, const Segment2D& match);

// Midpoint triangulation of each endpoint pair (ref endpoint i with match endpoint i).
Vec6 triangulate_endpoints(const CameraView& ref, const CameraView& match, const Vec8& pixels);
// Ray-plane intersections via the 3x3 system in (lambda, beta1, beta2).
Vec6 triangulate_line(const CameraView& ref, const CameraView& match, const Vec8& pixels);

// Both throw DegenerateError when the underlying linear system is singular.
TriangulationCovariance covariance_endpoint_triangulation(const SegmentObservation& ref,
                                                          const SegmentObservation& match);
TriangulationCovariance covariance_line_triangulation(const SegmentObservation& ref, const SegmentObservation& match);

struct DegeneracyConfig {
    std::vector<double> angles_deg;  // empty: 1..90 in 1 degree steps
    int samples = 10000;
    uint64_t seed = 0;
    double baseline = 4.0;
    double focal = 700.0;
    double plane_z = 10.0;
    double range = 1.0;
    double min_length = 0.5;
    double max_length = 2.0;
    int threads = 1;
};

struct DegeneracyRow {
    double angle_deg = 0.0;
    double median_endpoint = 0.0;
    double median_line = 0.0;
};

std::vector<DegeneracyRow> run_degeneracy_experiment(const DegeneracyConfig& config);
void write_degeneracy_csv(std::ostream& os, const std::vector<DegeneracyRow>& rows);

}  // namespace linemap::uncertainty
