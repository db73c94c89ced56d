#pragma once

#include "linemap/base/camera_view.h"
#include "linemap/base/geometry.h"
#include "linemap/scoring/scoring.h"
#include "linemap/triangulation/triangulation.h"

#include <array>
#include <compare>
#include <span>
#include <utility>
#include <vector>

namespace linemap::tracks {

struct SegmentKey {
    int image_id = -1;
    int segment_id = -1;
    auto operator<=>(const SegmentKey&) const = default;
};

// A 2D segment with its accepted best 3D candidate.
struct NodeCandidate {
    SegmentKey key;
    Segment2D observation;
    triangulation::Proposal best;
};

struct LineTrack {
    PluckerLine line;
    Segment3D segment;
    std::vector<NodeCandidate> nodes;  // sorted by key

    std::vector<SegmentKey> supports() const;
    int num_images() const;
    std::array<int, triangulation::kNumProposalSources> source_counts() const;
};

struct TrackConfig {
    double edge_threshold = 0.5;
    int min_track_nodes = 3;
    int min_support_images = 4;
    bool remerge = true;
    double remerge_threshold = 0.75;
    int threads = 1;
};

std::vector<LineTrack> build_tracks(std::span<const NodeCandidate> nodes,
                                    std::span<const std::pair<SegmentKey, SegmentKey>> matches,
                                    const ImageCollection& views, const scoring::ScoringConfig& scoring,
                                    const TrackConfig& config);

// PCA line over all candidate endpoints; extent from their projections.
std::pair<PluckerLine, Segment3D> refit_track(const LineTrack& track);

std::vector<LineTrack> remerge_tracks(std::vector<LineTrack> tracks, const ImageCollection& views,
                                      const scoring::ScoringConfig& scoring, const TrackConfig& config);

std::vector<LineTrack> filter_tracks(std::vector<LineTrack> tracks, int min_support_images);

}  // namespace linemap::tracks
