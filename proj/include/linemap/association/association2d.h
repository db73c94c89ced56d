#pragma once

#include "linemap/base/camera_view.h"
#include "linemap/base/geometry.h"

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace linemap::association {

struct Point2D {
    int point_id = -1;
    V2D xy = V2D::Zero();
};

// Edges (point_id, segment_id), sorted.
struct PointLineGraph2D {
    std::vector<std::pair<int, int>> edges;
};

PointLineGraph2D associate_points(std::span<const Point2D> points, std::span<const Segment2D> segments,
                                  double threshold_px = 2.0);

// Distance from an endpoint to the line joining the segment midpoint and the
// VP (homogeneous pixel coordinates).
double vp_line_residual(const Segment2D& segment, const V3D& vp);

struct VPConfig {
    double inlier_px = 1.0;
    int min_support = 5;
    // All pairs are enumerated when there are at most this many; otherwise
    // this many random pairs are drawn.
    int max_iterations = 5000;
    uint64_t seed = 0;
};

// assignment[segment_id] is the VP index or -1.
struct LineVPGraph2D {
    std::vector<V3D> vps;
    std::vector<int> assignment;
};

LineVPGraph2D estimate_vps(std::span<const Segment2D> segments, const VPConfig& config = {});

// World direction (unit, canonical sign) of a VP seen by a view.
V3D vp_world_direction(const V3D& vp, const CameraView& view);

struct VPTrack {
    V3D direction = V3D::UnitX();
    std::vector<std::pair<int, int>> supports;  // (image_id, vp_id)
};

struct VPTrackConfig {
    int min_shared_tracks = 3;
    double max_angle = deg2rad(10.0);
};

// `line_track_supports[t]` lists the (image_id, segment_id) supports of line track t.
std::vector<VPTrack> build_vp_tracks(const std::map<int, LineVPGraph2D>& per_image, const ImageCollection& views,
                                     std::span<const std::vector<std::pair<int, int>>> line_track_supports,
                                     const VPTrackConfig& config = {});

}  // namespace linemap::association
