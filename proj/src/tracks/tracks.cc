#include "linemap/tracks/tracks.h"

#include "linemap/base/parallel.h"
#include "linemap/base/union_find.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

namespace linemap::tracks {

std::vector<SegmentKey> LineTrack::supports() const {
    std::vector<SegmentKey> out;
    out.reserve(nodes.size());
    for (const NodeCandidate& n : nodes)
        out.push_back(n.key);
    return out;
}

int LineTrack::num_images() const {
    std::set<int> imgs;
    for (const NodeCandidate& n : nodes)
        imgs.insert(n.key.image_id);
    return static_cast<int>(imgs.size());
}

std::array<int, triangulation::kNumProposalSources> LineTrack::source_counts() const {
    std::array<int, triangulation::kNumProposalSources> c{};
    for (const NodeCandidate& n : nodes)
        c[static_cast<int>(n.best.source)]++;
    return c;
}

std::pair<PluckerLine, Segment3D> refit_track(const LineTrack& track) {
    std::vector<V3D> pts;
    pts.reserve(2 * track.nodes.size());
    for (const NodeCandidate& n : track.nodes) {
        pts.push_back(n.best.segment.e1);
        pts.push_back(n.best.segment.e2);
    }
    const auto line = fit_line_pca(pts);
    if (!line)
        throw DegenerateError("track endpoints coincide");
    return {*line, segment_from_points(*line, pts)};
}

namespace {

LineTrack make_track(std::vector<NodeCandidate> nodes) {
    std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    LineTrack t;
    t.nodes = std::move(nodes);
    std::tie(t.line, t.segment) = refit_track(t);
    return t;
}

// Smallest midpoint depth over the supporting views.
double track_depth_scale(const LineTrack& t, const ImageCollection& views) {
    double sigma = std::numeric_limits<double>::infinity();
    const V3D mid = t.segment.midpoint();
    for (const NodeCandidate& n : t.nodes) {
        const CameraView& v = views.view(n.key.image_id);
        const double d = v.depth(mid);
        if (d > 0.0)
            sigma = std::min(sigma, d);
    }
    return sigma;
}

}  // namespace

std::vector<LineTrack> build_tracks(std::span<const NodeCandidate> nodes,
                                    std::span<const std::pair<SegmentKey, SegmentKey>> matches,
                                    const ImageCollection& views, const scoring::ScoringConfig& scoring,
                                    const TrackConfig& config) {
    std::vector<NodeCandidate> sorted(nodes.begin(), nodes.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    std::map<SegmentKey, int> index;
    for (size_t i = 0; i < sorted.size(); ++i) {
        if (!index.emplace(sorted[i].key, static_cast<int>(i)).second)
            throw InvalidInputError("duplicate track node");
    }
    std::set<std::pair<int, int>> edge_set;
    for (const auto& [a, b] : matches) {
        auto ia = index.find(a), ib = index.find(b);
        if (ia == index.end() || ib == index.end() || ia->second == ib->second)
            continue;
        edge_set.emplace(std::min(ia->second, ib->second), std::max(ia->second, ib->second));
    }
    const std::vector<std::pair<int, int>> edges(edge_set.begin(), edge_set.end());
    std::vector<double> scores(edges.size(), 0.0);
    parallel_for(edges.size(), config.threads, [&](size_t e) {
        const NodeCandidate& a = sorted[edges[e].first];
        const NodeCandidate& b = sorted[edges[e].second];
        const scoring::TrackCandidate ca{a.best.segment, &views.view(a.key.image_id), a.observation};
        const scoring::TrackCandidate cb{b.best.segment, &views.view(b.key.image_id), b.observation};
        scores[e] = scoring::track_score(ca, cb, scoring);
    });
    UnionFind uf(static_cast<int>(sorted.size()));
    for (size_t e = 0; e < edges.size(); ++e) {
        if (scores[e] >= config.edge_threshold)
            uf.unite(edges[e].first, edges[e].second);
    }
    std::map<int, std::vector<NodeCandidate>> groups;
    for (size_t i = 0; i < sorted.size(); ++i)
        groups[uf.find(static_cast<int>(i))].push_back(sorted[i]);
    std::vector<LineTrack> out;
    for (auto& [root, members] : groups) {
        if (static_cast<int>(members.size()) < config.min_track_nodes)
            continue;
        out.push_back(make_track(std::move(members)));
    }
    return out;
}

std::vector<LineTrack> remerge_tracks(std::vector<LineTrack> tracks, const ImageCollection& views,
                                      const scoring::ScoringConfig& scoring, const TrackConfig& config) {
    if (!config.remerge || tracks.size() < 2)
        return tracks;
    const size_t n = tracks.size();
    std::vector<double> sigma(n);
    for (size_t i = 0; i < n; ++i)
        sigma[i] = track_depth_scale(tracks[i], views);
    std::vector<std::vector<std::pair<double, int>>> row_scores(n);
    parallel_for(n, config.threads, [&](size_t i) {
        for (size_t j = i + 1; j < n; ++j) {
            const double s = std::min(sigma[i], sigma[j]);
            if (!std::isfinite(s))
                continue;
            const double sc = scoring::track_score_3d(tracks[i].segment, tracks[j].segment, s, scoring);
            if (sc >= config.remerge_threshold)
                row_scores[i].emplace_back(sc, static_cast<int>(j));
        }
    });
    std::vector<std::tuple<double, int, int>> pairs;
    for (size_t i = 0; i < n; ++i)
        for (const auto& [sc, j] : row_scores[i])
            pairs.emplace_back(sc, static_cast<int>(i), j);
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b))
            return std::get<0>(a) > std::get<0>(b);
        return std::make_pair(std::get<1>(a), std::get<2>(a)) < std::make_pair(std::get<1>(b), std::get<2>(b));
    });
    UnionFind uf(static_cast<int>(n));
    for (const auto& [sc, i, j] : pairs)
        uf.unite(i, j);
    std::map<int, std::vector<int>> groups;
    for (size_t i = 0; i < n; ++i)
        groups[uf.find(static_cast<int>(i))].push_back(static_cast<int>(i));
    std::vector<LineTrack> out;
    for (auto& [root, members] : groups) {
        if (members.size() == 1) {
            out.push_back(std::move(tracks[members[0]]));
            continue;
        }
        std::vector<NodeCandidate> nodes;
        for (int m : members)
            nodes.insert(nodes.end(), tracks[m].nodes.begin(), tracks[m].nodes.end());
        out.push_back(make_track(std::move(nodes)));
    }
    return out;
}

std::vector<LineTrack> filter_tracks(std::vector<LineTrack> tracks, int min_support_images) {
    std::vector<LineTrack> out;
    for (LineTrack& t : tracks)
        if (t.num_images() >= min_support_images)
            out.push_back(std::move(t));
    return out;
}

}  // namespace linemap::tracks
