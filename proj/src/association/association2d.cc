#include "linemap/association/association2d.h"

#include "linemap/base/union_find.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>
#include <set>
#include <tuple>

namespace linemap::association {

PointLineGraph2D associate_points(std::span<const Point2D> points, std::span<const Segment2D> segments,
                                  double threshold_px) {
    if (!(threshold_px > 0.0))
        throw InvalidInputError("point-line association threshold must be positive");
    PointLineGraph2D g;
    for (const Point2D& p : points) {
        for (size_t s = 0; s < segments.size(); ++s) {
            if (point_segment_distance(p.xy, segments[s]) <= threshold_px)
                g.edges.emplace_back(p.point_id, static_cast<int>(s));
        }
    }
    std::sort(g.edges.begin(), g.edges.end());
    return g;
}

double vp_line_residual(const Segment2D& segment, const V3D& vp) {
    const V3D m = segment.midpoint().homogeneous();
    const V3D l = m.cross(vp);
    const double n = l.head<2>().norm();
    if (!(n > 0.0))
        return 0.5 * segment.length();
    return std::abs(l.dot(segment.p1.homogeneous())) / n;
}

namespace {

std::vector<int> vp_inliers(std::span<const Segment2D> segments, const std::vector<int>& active, const V3D& vp,
                            double thresh, double* residual_sum) {
    std::vector<int> in;
    double sum = 0.0;
    for (int i : active) {
        const double r = vp_line_residual(segments[i], vp);
        if (r <= thresh) {
            in.push_back(i);
            sum += r;
        }
    }
    if (residual_sum)
        *residual_sum = sum;
    return in;
}

V3D refine_vp(std::span<const Segment2D> segments, const std::vector<int>& inliers) {
    M3D S = M3D::Zero();
    for (int i : inliers) {
        const V3D l = segments[i].line_coeffs();
        S += l * l.transpose();
    }
    Eigen::SelfAdjointEigenSolver<M3D> eig(S);
    return eig.eigenvectors().col(0);
}

}  // namespace

LineVPGraph2D estimate_vps(std::span<const Segment2D> segments, const VPConfig& config) {
    LineVPGraph2D out;
    out.assignment.assign(segments.size(), -1);
    std::vector<V3D> lines(segments.size());
    std::vector<int> active;
    for (size_t i = 0; i < segments.size(); ++i) {
        if (!segments[i].is_valid())
            continue;
        lines[i] = segments[i].line_coeffs();
        active.push_back(static_cast<int>(i));
    }
    std::mt19937_64 rng(config.seed);
    while (static_cast<int>(active.size()) >= config.min_support) {
        const size_t n = active.size();
        const size_t npairs = n * (n - 1) / 2;
        std::vector<int> best_in;
        double best_sum = 0.0;
        auto try_pair = [&](int a, int b) {
            const V3D vp = lines[a].cross(lines[b]);
            const double vn = vp.norm();
            if (!(vn > 1e-12))
                return;
            double sum = 0.0;
            std::vector<int> in = vp_inliers(segments, active, vp / vn, config.inlier_px, &sum);
            if (in.size() > best_in.size() || (in.size() == best_in.size() && !in.empty() && sum < best_sum)) {
                best_in = std::move(in);
                best_sum = sum;
            }
        };
        if (npairs <= static_cast<size_t>(config.max_iterations)) {
            for (size_t a = 0; a < n; ++a)
                for (size_t b = a + 1; b < n; ++b)
                    try_pair(active[a], active[b]);
        } else {
            std::uniform_int_distribution<size_t> pick(0, n - 1);
            for (int it = 0; it < config.max_iterations; ++it) {
                const size_t a = pick(rng);
                size_t b = pick(rng);
                if (a == b)
                    continue;
                try_pair(active[a], active[b]);
            }
        }
        if (static_cast<int>(best_in.size()) < config.min_support)
            break;
        V3D vp = refine_vp(segments, best_in);
        std::vector<int> refined = vp_inliers(segments, active, vp, config.inlier_px, nullptr);
        if (refined.size() < best_in.size())
            refined = best_in;
        else if (refined.size() > best_in.size())
            vp = refine_vp(segments, refined);
        const int id = static_cast<int>(out.vps.size());
        out.vps.push_back(vp);
        for (int i : refined)
            out.assignment[i] = id;
        std::vector<int> rest;
        std::set_difference(active.begin(), active.end(), refined.begin(), refined.end(), std::back_inserter(rest));
        active = std::move(rest);
    }
    return out;
}

V3D vp_world_direction(const V3D& vp, const CameraView& view) {
    return canonical_direction((view.R().transpose() * (view.K_inv() * vp)).normalized());
}

std::vector<VPTrack> build_vp_tracks(const std::map<int, LineVPGraph2D>& per_image, const ImageCollection& views,
                                     std::span<const std::vector<std::pair<int, int>>> line_track_supports,
                                     const VPTrackConfig& config) {
    struct Node {
        int image_id;
        int vp_id;
        V3D dir;
        std::set<int> tracks;
    };
    std::vector<Node> nodes;
    std::map<std::pair<int, int>, int> node_index;
    for (const auto& [img, g] : per_image) {
        for (size_t v = 0; v < g.vps.size(); ++v) {
            node_index[{img, static_cast<int>(v)}] = static_cast<int>(nodes.size());
            nodes.push_back({img, static_cast<int>(v), vp_world_direction(g.vps[v], views.view(img)), {}});
        }
    }
    for (size_t t = 0; t < line_track_supports.size(); ++t) {
        for (const auto& [img, seg] : line_track_supports[t]) {
            auto it = per_image.find(img);
            if (it == per_image.end() || seg < 0 || seg >= static_cast<int>(it->second.assignment.size()))
                continue;
            const int v = it->second.assignment[seg];
            if (v >= 0)
                nodes[node_index.at({img, v})].tracks.insert(static_cast<int>(t));
        }
    }
    // (weight, a, b)
    std::vector<std::tuple<int, int, int>> edges;
    for (size_t a = 0; a < nodes.size(); ++a) {
        for (size_t b = a + 1; b < nodes.size(); ++b) {
            if (nodes[a].image_id == nodes[b].image_id)
                continue;
            int shared = 0;
            for (int t : nodes[a].tracks)
                shared += nodes[b].tracks.count(t);
            if (shared < config.min_shared_tracks)
                continue;
            const double c = std::min(1.0, std::abs(nodes[a].dir.dot(nodes[b].dir)));
            if (std::acos(c) >= config.max_angle)
                continue;
            edges.emplace_back(shared, static_cast<int>(a), static_cast<int>(b));
        }
    }
    std::sort(edges.begin(), edges.end(), [](const auto& x, const auto& y) {
        if (std::get<0>(x) != std::get<0>(y))
            return std::get<0>(x) > std::get<0>(y);
        return std::make_pair(std::get<1>(x), std::get<2>(x)) < std::make_pair(std::get<1>(y), std::get<2>(y));
    });
    UnionFind uf(static_cast<int>(nodes.size()));
    std::vector<std::set<int>> images(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i)
        images[i].insert(nodes[i].image_id);
    for (const auto& [w, a, b] : edges) {
        const int ra = uf.find(a), rb = uf.find(b);
        if (ra == rb)
            continue;
        bool clash = false;
        for (int img : images[rb])
            clash |= images[ra].count(img) > 0;
        if (clash)
            continue;
        uf.unite(ra, rb);
        const int root = std::min(ra, rb), child = std::max(ra, rb);
        images[root].insert(images[child].begin(), images[child].end());
    }
    std::map<int, std::vector<int>> groups;
    for (size_t i = 0; i < nodes.size(); ++i)
        groups[uf.find(static_cast<int>(i))].push_back(static_cast<int>(i));
    std::vector<VPTrack> out;
    for (const auto& [root, members] : groups) {
        VPTrack track;
        M3D S = M3D::Zero();
        for (int i : members) {
            S += nodes[i].dir * nodes[i].dir.transpose();
            track.supports.emplace_back(nodes[i].image_id, nodes[i].vp_id);
        }
        Eigen::SelfAdjointEigenSolver<M3D> eig(S);
        track.direction = canonical_direction(eig.eigenvectors().col(2));
        out.push_back(std::move(track));
    }
    return out;
}

}  // namespace linemap::association
