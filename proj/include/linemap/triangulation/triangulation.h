#pragma once

#include "linemap/base/geometry.h"

#include <compare>
#include <span>
#include <string>
#include <vector>

namespace linemap::triangulation {

enum class TriStatus { Ok, WeaklyDegenerate, FullyDegenerate, CheiralityFailure, Degenerate, InsufficientData };
enum class Degeneracy { Ok, Degenerate };
enum class ProposalSource { LineLine = 0, MultiPoint = 1, LinePoint = 2, LineVP = 3, Depth = 4 };
inline constexpr int kNumProposalSources = 5;

std::string to_string(TriStatus status);
std::string to_string(ProposalSource source);

struct MatchRef {
    int image_id = -1;
    int segment_id = -1;
    auto operator<=>(const MatchRef&) const = default;
};

// Endpoint depths are z-depths along K^-1 [x, y, 1] in the reference camera.
struct TriResult {
    TriStatus status = TriStatus::InsufficientData;
    Segment3D segment;
    V2D depths = V2D::Zero();
    bool ok() const { return status == TriStatus::Ok; }
};

struct Proposal {
    Segment3D segment;
    V2D depths = V2D::Zero();
    ProposalSource source = ProposalSource::LineLine;
    MatchRef match;
    Segment2D match_segment;
};

struct TriangulationConfig {
    double min_angle = deg2rad(1.0);
    double iou_threshold = 0.1;
    bool use_line_line = true;
    bool use_points = true;
    bool use_vps = true;
};

Degeneracy check_degeneracy(const V3D& ray, const V3D& plane_normal, double min_angle);

TriResult triangulate_algebraic(const SegmentObservation& ref, const SegmentObservation& match,
                                double min_angle = deg2rad(1.0));

double weak_epipolar_iou(const SegmentObservation& ref, const SegmentObservation& match);

// M1. If `match` is given, cheirality is also enforced in its view.
TriResult triangulate_multipoint(const SegmentObservation& ref, std::span<const V3D> points,
                                 const SegmentObservation* match = nullptr);

// Stationary points of l^T A l + b^T l subject to l^T Q l + q^T l = 0.
std::vector<V2D> solve_constrained_quadratic(const M2D& A, const V2D& b, const M2D& Q, const V2D& q);

// M2
TriResult triangulate_line_point(const SegmentObservation& ref, const SegmentObservation& match, const V3D& point);

// M3. `vp_dir` is a world-frame direction.
TriResult triangulate_line_vp(const SegmentObservation& ref, const SegmentObservation& match, const V3D& vp_dir);

struct MatchInput {
    MatchRef ref;
    SegmentObservation obs;
    std::vector<V3D> shared_points;
    std::vector<V3D> vp_directions;
};

std::vector<Proposal> generate_proposals(const SegmentObservation& ref, std::span<const MatchInput> matches,
                                         const TriangulationConfig& config);

}  // namespace linemap::triangulation
