#include "linemap/base/camera_view.h"

#include <Eigen/LU>

#include <algorithm>
#include <string>

namespace linemap {

CameraView::CameraView(int image_id, const M3D& K, const M3D& R, const V3D& t, int width, int height)
    : image_id_(image_id), K_(K), R_(R), t_(t), width_(width), height_(height) {
    const std::string tag = "camera " + std::to_string(image_id) + ": ";
    if (width <= 0 || height <= 0)
        throw InvalidInputError(tag + "image size must be positive");
    if (!K.allFinite() || !R.allFinite() || !t.allFinite())
        throw InvalidInputError(tag + "non-finite pose or intrinsics");
    if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0)
        throw InvalidInputError(tag + "intrinsics must be upper triangular");
    if (K(0, 0) <= 0.0 || K(1, 1) <= 0.0 || K(2, 2) <= 0.0)
        throw InvalidInputError(tag + "intrinsics must have positive focal entries");
    if ((R.transpose() * R - M3D::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw InvalidInputError(tag + "rotation is not orthonormal");
    if (std::abs(R.determinant() - 1.0) > 1e-9)
        throw InvalidInputError(tag + "rotation must have determinant +1");
    K_inv_ = K_.inverse();
}

M34D CameraView::projection_matrix() const {
    M34D Rt;
    Rt.leftCols<3>() = R_;
    Rt.col(3) = t_;
    return K_ * Rt;
}

V2D CameraView::project(const V3D& X) const {
    const V3D x = K_ * to_camera(X);
    return x.hnormalized();
}

V3D CameraView::normalized(const V2D& pixel) const {
    const V3D x = K_inv_ * pixel.homogeneous();
    return x / x.z();
}

V3D CameraView::ray_direction(const V2D& pixel) const {
    return (R_.transpose() * normalized(pixel)).normalized();
}

bool CameraView::in_image(const V2D& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() <= width_ - 1.0 && pixel.y() <= height_ - 1.0;
}

ImageCollection::ImageCollection(std::vector<CameraView> views) : views_(std::move(views)) {
    for (size_t i = 0; i < views_.size(); ++i) {
        if (!index_.emplace(views_[i].image_id(), i).second)
            throw InvalidInputError("duplicate image id " + std::to_string(views_[i].image_id()));
    }
}

const CameraView& ImageCollection::view(int image_id) const {
    auto it = index_.find(image_id);
    if (it == index_.end())
        throw InvalidInputError("unknown image id " + std::to_string(image_id));
    return views_[it->second];
}

std::vector<int> ImageCollection::image_ids() const {
    std::vector<int> ids;
    ids.reserve(index_.size());
    for (const auto& [id, idx] : index_)
        ids.push_back(id);
    return ids;
}

}  // namespace linemap
