#pragma once

#include "linemap/base/camera_view.h"
#include "linemap/base/geometry.h"
#include "linemap/depthfit/depthfit.h"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace linemap::io {

struct MatchList {
    std::pair<int, int> ref;  // (image_id, segment index)
    std::vector<std::pair<int, int>> targets;
};

struct PointTrack {
    V3D xyz = V3D::Zero();
    std::vector<std::pair<int, V2D>> observations;  // (image_id, pixel)
};

// Everything the mapper consumes.
struct InputBundle {
    std::vector<CameraView> cameras;
    std::map<int, std::vector<Segment2D>> segments;
    std::vector<MatchList> matches;
    std::vector<PointTrack> points;
    std::optional<std::map<int, std::vector<int>>> neighbors;
    std::map<int, depthfit::DepthMap> depths;
};

struct GroundTruth {
    std::vector<Segment3D> segments;
    std::vector<V3D> vp_directions;
    std::vector<int> segment_vp;  // VP group per GT segment
    std::vector<V3D> points;      // GT point cloud (optional)
    std::vector<V3D> junctions;   // same order as the emitted point tracks
    std::vector<std::pair<int, int>> junction_lines;  // (junction index, GT segment)
    std::map<int, std::vector<int>> segment_source;   // image_id -> GT segment per 2D segment
};

}  // namespace linemap::io
