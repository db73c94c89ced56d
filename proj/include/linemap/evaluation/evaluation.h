#pragma once

#include "linemap/io/bundle.h"

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace linemap::evaluation {

struct SceneSpec {
    uint64_t seed = 0;
    int num_views = 16;
    int num_segments = 40;
    double box_half = 1.0;
    double camera_distance = 5.0;
    double camera_elevation_deg = 25.0;
    double focal = 600.0;
    int width = 800;
    int height = 600;
    double noise_px = 0.0;
    double point_noise_px = 0.0;
    double occlusion_rate = 0.0;
    double outlier_ratio = 0.0;  // fraction of all emitted matches that are wrong
    int fragments = 1;           // pieces per projected segment
    int matches_per_segment = 8;
    double min_length_px = 10.0;
    bool junctions = true;
    int points_per_segment = 0;
    bool render_depth = false;
    double scale = 1.0;  // applied to all 3D quantities after generation

    void validate() const;
};

struct SyntheticScene {
    SceneSpec spec;
    io::InputBundle bundle;
    io::GroundTruth gt;
};

SyntheticScene generate_scene(const SceneSpec& spec);

// z-depth of the nearest box surface per pixel; NaN where the ray misses.
depthfit::DepthMap render_box_depth(const CameraView& view, double half);

// Query structure for distances to a GT model made of segments and points.
class GTDistance {
 public:
    GTDistance(std::span<const Segment3D> segments, std::span<const V3D> points, double cell);
    double distance(const V3D& p) const;

 private:
    struct Key {
        int64_t x, y, z;
        auto operator<=>(const Key&) const = default;
    };
    Key key_of(const V3D& p) const;
    double brute_force(const V3D& p) const;

    std::vector<Segment3D> segments_;
    std::vector<V3D> points_;
    double cell_;
    std::map<Key, std::vector<int>> grid_;  // element ids; points are offset by segments_.size()
    Key lo_{0, 0, 0}, hi_{0, 0, 0};
};

struct TrackForEval {
    Segment3D segment;
    int num_images = 0;
    int num_supports = 0;
};

enum class InlierRule { Mean, Max };

struct MetricsConfig {
    std::vector<double> taus = {0.001, 0.005, 0.01};
    InlierRule rule = InlierRule::Mean;
    int threads = 1;
};

struct MapMetrics {
    std::vector<double> taus;
    std::vector<double> length_recall;
    std::vector<double> inlier_pct;
    int num_tracks = 0;
    double total_length = 0.0;
    double gt_length = 0.0;
    double avg_image_supports = 0.0;
    double avg_line_supports = 0.0;
};

MapMetrics compute_metrics(std::span<const TrackForEval> tracks, const io::GroundTruth& gt,
                           const MetricsConfig& config = {});
std::string format_metrics_table(const MapMetrics& m);

}  // namespace linemap::evaluation
