#pragma once

#include "linemap/base/camera_view.h"
#include "linemap/base/geometry.h"
#include "linemap/triangulation/triangulation.h"

#include <optional>
#include <span>

namespace linemap::scoring {

struct ScoringConfig {
    double tau_angle_3d = deg2rad(10.0);
    double tau_angle_2d = deg2rad(8.0);
    double tau_overlap = 0.05;
    double tau_perp_2d = 5.0;
    // Also the scale for the perspective distance.
    double tau_innerseg = 0.015;
    double gate = 0.5;
    double accept_threshold = 1.0;

    void validate() const;
};

double angular_distance(const Segment3D& a, const Segment3D& b);
double angular_distance(const Segment2D& a, const Segment2D& b);

// Max orthogonal distance of a's endpoints to b's infinite line.
double perpendicular_distance(const Segment3D& a, const Segment3D& b);
double perpendicular_distance(const Segment2D& a, const Segment2D& b);
double symmetric_perpendicular_distance(const Segment2D& a, const Segment2D& b);
double symmetric_perpendicular_distance(const Segment3D& a, const Segment3D& b);

// Endpoints of a and b lie on the same reference rays; d_s, d_e are the ray
// depths of a's endpoints.
double perspective_distance(const Segment3D& a, const Segment3D& b, double d_s, double d_e);
double symmetric_perspective_distance(const triangulation::Proposal& a, const triangulation::Proposal& b);

// |projection of a onto b, clipped to b| / |b|.
double overlap_ratio(const Segment3D& a, const Segment3D& b);
double overlap_ratio(const Segment2D& a, const Segment2D& b);
double symmetric_overlap_ratio(const Segment3D& a, const Segment3D& b);
double symmetric_overlap_ratio(const Segment2D& a, const Segment2D& b);
double overlap_score(double ratio, double tau_overlap);

// Max endpoint distance between the two inner segments, unnormalized.
double innerseg_raw_distance(const Segment3D& a, const Segment3D& b);
// min(d1 / f1, d2 / f2) with d_i the midpoint depth of segment i in view i.
double innerseg_sigma(const Segment3D& a, const CameraView& view_a, const Segment3D& b, const CameraView& view_b);
double innerseg_distance(const Segment3D& a, const Segment3D& b, double sigma);

double normalize(double r, double tau, double gate = 0.5);

// Proposal-selection score between proposal a and proposal b (whose match lies
// in view_b). Both proposals belong to the same reference segment.
double selection_score(const triangulation::Proposal& a, const triangulation::Proposal& b, const CameraView& view_b,
                       const ScoringConfig& config);
// Same as above with a's projection into view_b precomputed (empty when behind
// the camera).
double selection_score(const triangulation::Proposal& a, const std::optional<Segment2D>& a_in_b,
                       const triangulation::Proposal& b, const ScoringConfig& config);

struct Selection {
    size_t index = 0;
    double score = 0.0;
};

// Sum over neighbor images of the best pair score, maximized over proposals.
std::optional<Selection> select_best(std::span<const triangulation::Proposal> proposals, const ImageCollection& views,
                                     const ScoringConfig& config);

// A 3D line candidate of a 2D segment, for track building.
struct TrackCandidate {
    Segment3D segment;
    const CameraView* view = nullptr;
    Segment2D observation;
};

double track_score(const TrackCandidate& a, const TrackCandidate& b, const ScoringConfig& config);
// 3D components only (angle, overlap, innerseg). The innerseg distance is
// taken relative to `depth_scale`, the smaller midpoint depth.
double track_score_3d(const Segment3D& a, const Segment3D& b, double depth_scale, const ScoringConfig& config);

}  // namespace linemap::scoring
