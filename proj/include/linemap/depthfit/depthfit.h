#pragma once

#include "linemap/base/camera_view.h"
#include "linemap/base/geometry.h"

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace linemap::depthfit {

// Row-major z-depth grid; NaN (or non-positive) marks invalid pixels.
// Pixel (u, v) holds the depth at integer image coordinates (u, v).
class DepthMap {
 public:
    DepthMap() = default;
    DepthMap(int width, int height);
    DepthMap(int width, int height, std::vector<float> values);

    int width() const { return width_; }
    int height() const { return height_; }
    float at(int u, int v) const { return values_[static_cast<size_t>(v) * width_ + u]; }
    float& at(int u, int v) { return values_[static_cast<size_t>(v) * width_ + u]; }
    const std::vector<float>& values() const { return values_; }

    // Bilinear interpolation of inverse depth; empty if any neighbor is invalid.
    std::optional<double> sample(const V2D& px) const;

 private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> values_;
};

// Little-endian: uint32 width, uint32 height, then float32 row-major values.
DepthMap read_depth_map(std::istream& is, const std::string& name = "depth map");
DepthMap read_depth_map(const std::string& path);
void write_depth_map(std::ostream& os, const DepthMap& depth);
void write_depth_map(const std::string& path, const DepthMap& depth);

struct DepthFitConfig {
    double threshold_scale = 1.0;  // inlier threshold = scale * median depth / focal
    double sample_spacing = 1.0;   // px
    int min_samples = 5;
    int max_iterations = 1000;
    double min_inlier_ratio = 0.5;
    uint64_t seed = 0;
};

struct DepthFitResult {
    Segment3D segment;
    PluckerLine line;
    double threshold = 0.0;
    int num_samples = 0;  // valid samples
    std::vector<int> inliers;  // indices into the valid samples
};

// Back-projected samples along the segment with valid interpolated depth.
std::vector<V3D> backproject_segment(const Segment2D& segment, const DepthMap& depth, const CameraView& view,
                                     double spacing = 1.0);

// Throws DegenerateError on too few valid samples or when no model reaches
// the inlier ratio.
DepthFitResult fit_line_from_depth(const Segment2D& segment, const DepthMap& depth, const CameraView& view,
                                   const DepthFitConfig& config = {});

}  // namespace linemap::depthfit
