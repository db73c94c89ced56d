#pragma once

#include "linemap/base/types.h"

#include <map>
#include <vector>

namespace linemap {

// Calibrated pinhole view. Rotation and translation map world to camera
// coordinates: X_cam = R * X_world + t.
class CameraView {
 public:
    CameraView(int image_id, const M3D& K, const M3D& R, const V3D& t, int width, int height);

    int image_id() const { return image_id_; }
    const M3D& K() const { return K_; }
    const M3D& K_inv() const { return K_inv_; }
    const M3D& R() const { return R_; }
    const V3D& t() const { return t_; }
    int width() const { return width_; }
    int height() const { return height_; }

    double focal() const { return 0.5 * (K_(0, 0) + K_(1, 1)); }
    V3D center() const { return -R_.transpose() * t_; }
    M34D projection_matrix() const;

    V3D to_camera(const V3D& X) const { return R_ * X + t_; }
    double depth(const V3D& X) const { return R_.row(2).dot(X) + t_.z(); }
    V2D project(const V3D& X) const;

    // K^-1 [x, y, 1] in camera coordinates (third component is 1).
    V3D normalized(const V2D& pixel) const;
    // Unit viewing ray through a pixel, in world coordinates.
    V3D ray_direction(const V2D& pixel) const;
    bool in_image(const V2D& pixel) const;

 private:
    int image_id_;
    M3D K_;
    M3D K_inv_;
    M3D R_;
    V3D t_;
    int width_;
    int height_;
};

// Views indexed by their image id.
class ImageCollection {
 public:
    ImageCollection() = default;
    explicit ImageCollection(std::vector<CameraView> views);

    bool contains(int image_id) const { return index_.count(image_id) > 0; }
    const CameraView& view(int image_id) const;
    const std::vector<CameraView>& views() const { return views_; }
    std::vector<int> image_ids() const;
    size_t size() const { return views_.size(); }

 private:
    std::vector<CameraView> views_;
    std::map<int, size_t> index_;
};

}  // namespace linemap
