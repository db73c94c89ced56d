#include "linemap/pipeline/pipeline.h"

#include "linemap/base/parallel.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace linemap::pipeline {

std::map<int, std::vector<int>> compute_neighbors(const io::InputBundle& bundle, int n_neighbors) {
    const ImageCollection views(bundle.cameras);
    const std::vector<int> ids = views.image_ids();
    std::map<int, std::vector<int>> out;
    const size_t n = static_cast<size_t>(std::max(0, n_neighbors));

    if (bundle.neighbors) {
        for (int id : ids) {
            std::vector<int>& list = out[id];
            auto it = bundle.neighbors->find(id);
            if (it == bundle.neighbors->end())
                continue;
            std::set<int> seen = {id};
            for (int o : it->second) {
                if (list.size() >= n)
                    break;
                if (views.contains(o) && seen.insert(o).second)
                    list.push_back(o);
            }
        }
        return out;
    }

    std::map<int, std::set<int>> observed;
    for (size_t p = 0; p < bundle.points.size(); ++p)
        for (const auto& [img, px] : bundle.points[p].observations)
            observed[img].insert(static_cast<int>(p));
    auto shared = [&](int a, int b) {
        auto ia = observed.find(a), ib = observed.find(b);
        if (ia == observed.end() || ib == observed.end())
            return 0;
        int c = 0;
        for (int p : ia->second)
            c += ib->second.count(p);
        return c;
    };
    auto count = [&](int a) {
        auto it = observed.find(a);
        return it == observed.end() ? 0 : static_cast<int>(it->second.size());
    };
    for (int id : ids) {
        struct Cand {
            int id;
            long long num;  // Dice = num / den
            long long den;
            double dist;
        };
        std::vector<Cand> cands;
        const V3D c = views.view(id).center();
        for (int o : ids) {
            if (o == id)
                continue;
            const long long den = count(id) + count(o);
            cands.push_back({o, 2LL * shared(id, o), den > 0 ? den : 1, (views.view(o).center() - c).squaredNorm()});
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            const long long l = a.num * b.den, r = b.num * a.den;
            if (l != r)
                return l > r;
            if (a.dist != b.dist)
                return a.dist < b.dist;
            return a.id < b.id;
        });
        std::vector<int>& list = out[id];
        for (size_t k = 0; k < cands.size() && k < n; ++k)
            list.push_back(cands[k].id);
    }
    return out;
}

namespace {

bool valid_key(const io::InputBundle& b, const SegKey& k) {
    auto it = b.segments.find(k.first);
    return it != b.segments.end() && k.second >= 0 && k.second < static_cast<int>(it->second.size()) &&
           it->second[k.second].is_valid();
}

const Segment2D& segment_of(const io::InputBundle& b, const SegKey& k) { return b.segments.at(k.first)[k.second]; }

}  // namespace

MapContext prepare_context(const io::InputBundle& bundle, const PipelineConfig& config) {
    config.validate();
    MapContext ctx;
    ctx.bundle = &bundle;
    ctx.views = ImageCollection(bundle.cameras);
    ctx.config = config;
    for (const auto& [img, segs] : bundle.segments)
        if (!ctx.views.contains(img))
            throw InvalidInputError("segments reference unknown image " + std::to_string(img));
    ctx.neighbors = compute_neighbors(bundle, config.n_neighbors);

    std::vector<int> images;
    for (const auto& [img, segs] : bundle.segments)
        images.push_back(img);

    if (config.use_points && !bundle.points.empty()) {
        std::map<int, std::vector<association::Point2D>> per_image;
        for (size_t p = 0; p < bundle.points.size(); ++p)
            for (const auto& [img, px] : bundle.points[p].observations)
                per_image[img].push_back({static_cast<int>(p), px});
        std::vector<std::vector<std::pair<int, int>>> edges(images.size());
        parallel_for(images.size(), config.threads, [&](size_t i) {
            auto it = per_image.find(images[i]);
            if (it == per_image.end())
                return;
            const auto& segs = bundle.segments.at(images[i]);
            for (const auto& e : association::associate_points(it->second, segs, config.point_line_threshold_px).edges)
                if (segs[e.second].is_valid())
                    edges[i].push_back(e);
        });
        for (size_t i = 0; i < images.size(); ++i) {
            if (edges[i].empty())
                continue;
            for (const auto& [p, s] : edges[i])
                ctx.segment_points[{images[i], s}].push_back(p);
            ctx.point_line[images[i]] = std::move(edges[i]);
        }
        for (auto& [k, list] : ctx.segment_points) {
            std::sort(list.begin(), list.end());
            list.erase(std::unique(list.begin(), list.end()), list.end());
        }
    }

    if (config.use_vps) {
        std::vector<association::LineVPGraph2D> graphs(images.size());
        parallel_for(images.size(), config.threads, [&](size_t i) {
            association::VPConfig vc = config.vp();
            vc.seed = config.seed + static_cast<uint64_t>(images[i]);
            graphs[i] = association::estimate_vps(bundle.segments.at(images[i]), vc);
        });
        for (size_t i = 0; i < images.size(); ++i)
            ctx.vps[images[i]] = std::move(graphs[i]);
    }

    if (config.exhaustive_matching) {
        for (const auto& [img, segs] : bundle.segments) {
            for (size_t s = 0; s < segs.size(); ++s) {
                if (!segs[s].is_valid())
                    continue;
                std::vector<SegKey>& list = ctx.targets[{img, static_cast<int>(s)}];
                for (int o : ctx.neighbors[img]) {
                    auto it = bundle.segments.find(o);
                    if (it == bundle.segments.end())
                        continue;
                    for (size_t t = 0; t < it->second.size(); ++t)
                        if (it->second[t].is_valid())
                            list.emplace_back(o, static_cast<int>(t));
                }
            }
        }
    } else {
        for (const io::MatchList& m : bundle.matches) {
            if (!valid_key(bundle, m.ref))
                continue;
            const std::vector<int>& nb = ctx.neighbors[m.ref.first];
            std::vector<SegKey>& list = ctx.targets[m.ref];
            for (const auto& t : m.targets) {
                if (static_cast<int>(list.size()) >= config.top_k_matches)
                    break;
                if (t.first == m.ref.first || !valid_key(bundle, t))
                    continue;
                if (std::find(nb.begin(), nb.end(), t.first) == nb.end())
                    continue;
                if (std::find(list.begin(), list.end(), t) == list.end())
                    list.push_back(t);
            }
        }
    }
    return ctx;
}

std::vector<triangulation::Proposal> segment_proposals(const MapContext& ctx, const SegKey& ref) {
    auto it = ctx.targets.find(ref);
    if (it == ctx.targets.end() || !valid_key(*ctx.bundle, ref))
        return {};
    const CameraView& rv = ctx.views.view(ref.first);
    const SegmentObservation ref_obs{&rv, segment_of(*ctx.bundle, ref)};
    const double max_vp_angle = deg2rad(ctx.config.vp_track_max_angle_deg);

    auto points_of = [&](const SegKey& k) -> const std::vector<int>* {
        auto p = ctx.segment_points.find(k);
        return p == ctx.segment_points.end() ? nullptr : &p->second;
    };
    auto vp_dir_of = [&](const SegKey& k) -> std::optional<V3D> {
        auto g = ctx.vps.find(k.first);
        if (g == ctx.vps.end() || k.second >= static_cast<int>(g->second.assignment.size()))
            return std::nullopt;
        const int v = g->second.assignment[k.second];
        if (v < 0)
            return std::nullopt;
        return association::vp_world_direction(g->second.vps[v], ctx.views.view(k.first));
    };
    const std::vector<int>* ref_points = points_of(ref);
    const std::optional<V3D> ref_vp = vp_dir_of(ref);

    std::vector<triangulation::MatchInput> inputs;
    for (const SegKey& t : it->second) {
        triangulation::MatchInput in;
        in.ref = {t.first, t.second};
        in.obs = {&ctx.views.view(t.first), segment_of(*ctx.bundle, t)};
        const std::vector<int>* tp = points_of(t);
        if (ref_points && tp) {
            std::vector<int> common;
            std::set_intersection(ref_points->begin(), ref_points->end(), tp->begin(), tp->end(),
                                  std::back_inserter(common));
            for (int p : common)
                in.shared_points.push_back(ctx.bundle->points[p].xyz);
        }
        if (ref_vp) {
            const std::optional<V3D> tv = vp_dir_of(t);
            if (tv && std::acos(std::min(1.0, std::abs(ref_vp->dot(*tv)))) < max_vp_angle)
                in.vp_directions.push_back(*ref_vp);
        }
        inputs.push_back(std::move(in));
    }
    return triangulation::generate_proposals(ref_obs, inputs, ctx.config.triangulation());
}

std::optional<triangulation::Proposal> depth_proposal(const MapContext& ctx, const SegKey& ref) {
    auto dm = ctx.bundle->depths.find(ref.first);
    if (dm == ctx.bundle->depths.end() || !valid_key(*ctx.bundle, ref))
        return std::nullopt;
    const CameraView& v = ctx.views.view(ref.first);
    const Segment2D& seg = segment_of(*ctx.bundle, ref);
    depthfit::DepthFitResult fit;
    try {
        fit = depthfit::fit_line_from_depth(seg, dm->second, v, ctx.config.depth());
    } catch (const DegenerateError&) {
        return std::nullopt;
    }
    triangulation::Proposal p;
    V3D ends[2];
    for (int k = 0; k < 2; ++k) {
        const auto x = closest_point_line_to_line(camera_ray(v, k == 0 ? seg.p1 : seg.p2), fit.line);
        if (!x || !(v.depth(*x) > 0.0))
            return std::nullopt;
        ends[k] = *x;
    }
    p.segment = Segment3D(ends[0], ends[1]);
    if (!p.segment.is_valid())
        return std::nullopt;
    p.depths = V2D(v.depth(ends[0]), v.depth(ends[1]));
    p.source = triangulation::ProposalSource::Depth;
    return p;
}

namespace {

// Smallest depth / focal over the views observing the track.
double track_sigma(const tracks::LineTrack& t, const ImageCollection& views) {
    double sigma = std::numeric_limits<double>::infinity();
    const V3D mid = t.segment.midpoint();
    for (const tracks::NodeCandidate& n : t.nodes) {
        const CameraView& v = views.view(n.key.image_id);
        const double d = v.depth(mid);
        if (d > 0.0)
            sigma = std::min(sigma, d / v.focal());
    }
    return std::isfinite(sigma) ? sigma : 1.0;
}

// Similarity X' = (X - center) / scale taking the camera centers to unit RMS
// spread around the origin.
struct Normalization {
    V3D center = V3D::Zero();
    double scale = 1.0;

    explicit Normalization(const ImageCollection& views) {
        if (views.size() == 0)
            return;
        for (const CameraView& v : views.views())
            center += v.center();
        center /= static_cast<double>(views.size());
        double ss = 0.0;
        for (const CameraView& v : views.views())
            ss += (v.center() - center).squaredNorm();
        const double rms = std::sqrt(ss / views.size());
        if (rms > 0.0 && std::isfinite(rms))
            scale = rms;
    }
    V3D apply(const V3D& x) const { return (x - center) / scale; }
    PluckerLine apply(const PluckerLine& l) const { return PluckerLine::from_point_direction(apply(l.point()), l.d()); }
    PluckerLine undo(const PluckerLine& l) const {
        return PluckerLine::from_point_direction(scale * l.point() + center, l.d());
    }
    ImageCollection apply(const ImageCollection& views) const {
        std::vector<CameraView> out;
        for (const CameraView& v : views.views())
            out.emplace_back(v.image_id(), v.K(), v.R(), (v.R() * center + v.t()) / scale, v.width(), v.height());
        return ImageCollection(std::move(out));
    }
};

}  // namespace

MapResult run_mapping(const io::InputBundle& bundle, const PipelineConfig& config, NodeSource source) {
    const MapContext ctx = prepare_context(bundle, config);
    const ImageCollection& views = ctx.views;
    const scoring::ScoringConfig scfg = config.scoring();
    MapResult res;

    std::vector<SegKey> keys;
    for (const auto& [img, segs] : bundle.segments)
        for (size_t s = 0; s < segs.size(); ++s)
            if (segs[s].is_valid())
                keys.emplace_back(img, static_cast<int>(s));

    const bool depth_nodes = source == NodeSource::DepthOnly || config.use_depth;
    std::vector<std::optional<tracks::NodeCandidate>> nodes(keys.size());
    std::vector<double> scores(keys.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> diag(keys.size());
    parallel_for(keys.size(), config.threads, [&](size_t i) {
        const SegKey& k = keys[i];
        const tracks::SegmentKey key{k.first, k.second};
        try {
            if (depth_nodes) {
                if (auto p = depth_proposal(ctx, k)) {
                    nodes[i] = tracks::NodeCandidate{key, segment_of(bundle, k), *p};
                    return;
                }
            }
            if (source == NodeSource::DepthOnly)
                return;
            const std::vector<triangulation::Proposal> props = segment_proposals(ctx, k);
            if (props.empty())
                return;
            const auto sel = scoring::select_best(props, views, scfg);
            if (!sel)
                return;
            nodes[i] = tracks::NodeCandidate{key, segment_of(bundle, k), props[sel->index]};
            scores[i] = sel->score;
        } catch (const DegenerateError& e) {
            diag[i] = "segment [" + std::to_string(k.first) + ", " + std::to_string(k.second) + "]: " + e.what();
        }
    });
    for (size_t i = 0; i < keys.size(); ++i) {
        if (!diag[i].empty())
            res.diagnostics.push_back(diag[i]);
        if (nodes[i]) {
            res.nodes.push_back(*nodes[i]);
            res.node_scores.push_back(scores[i]);
        }
    }

    std::vector<std::pair<tracks::SegmentKey, tracks::SegmentKey>> pairs;
    for (const auto& [ref, targets] : ctx.targets)
        for (const SegKey& t : targets)
            pairs.push_back({{ref.first, ref.second}, {t.first, t.second}});
    const tracks::TrackConfig tcfg = config.tracks();
    std::vector<tracks::LineTrack> tr = tracks::build_tracks(res.nodes, pairs, views, scfg, tcfg);
    tr = tracks::remerge_tracks(std::move(tr), views, scfg, tcfg);
    tr = tracks::filter_tracks(std::move(tr), tcfg.min_support_images);

    std::vector<std::vector<std::pair<int, int>>> supports(tr.size());
    for (size_t t = 0; t < tr.size(); ++t)
        for (const tracks::SegmentKey& k : tr[t].supports())
            supports[t].emplace_back(k.image_id, k.segment_id);

    if (!tr.empty()) {
        const Normalization norm(views);
        const ImageCollection nviews = norm.apply(views);
        optimize::ReconstructionProblem problem(&nviews, config.problem());
        for (size_t t = 0; t < tr.size(); ++t) {
            const int l = problem.add_line(norm.apply(tr[t].line));
            for (const tracks::NodeCandidate& n : tr[t].nodes)
                problem.add_line_observation(l, n.key.image_id, n.observation);
        }

        std::vector<association::VPTrack> vp_tracks;
        std::map<int, std::vector<int>> segment_vp;
        if (config.use_vps) {
            vp_tracks = association::build_vp_tracks(ctx.vps, views, supports, config.vp_tracks());
            for (const auto& [img, g] : ctx.vps)
                segment_vp[img].assign(g.assignment.size(), -1);
            for (size_t v = 0; v < vp_tracks.size(); ++v) {
                if (vp_tracks[v].supports.size() < 2)
                    continue;
                for (const auto& [img, vid] : vp_tracks[v].supports) {
                    const auto& assign = ctx.vps.at(img).assignment;
                    for (size_t s = 0; s < assign.size(); ++s)
                        if (assign[s] == vid)
                            segment_vp[img][s] = static_cast<int>(v);
                }
            }
        }
        const std::map<int, std::vector<std::pair<int, int>>> no_points;
        res.soft_associations = optimize::build_soft_associations(
            supports, config.use_points ? ctx.point_line : no_points, segment_vp, config.min_association_weight);

        std::map<int, int> point_index, vp_index;
        std::vector<int> point_ids, vp_ids;
        for (const optimize::SoftAssociation& a : res.soft_associations) {
            if (a.kind == optimize::SoftAssociation::Kind::PointLine) {
                auto it = point_index.find(a.other);
                if (it == point_index.end()) {
                    const io::PointTrack& pt = bundle.points[a.other];
                    const int p = problem.add_point(norm.apply(pt.xyz));
                    for (const auto& [img, px] : pt.observations)
                        if (views.contains(img))
                            problem.add_point_observation(p, img, px);
                    it = point_index.emplace(a.other, p).first;
                    point_ids.push_back(a.other);
                }
                problem.add_point_line(it->second, a.line, a.weight, track_sigma(tr[a.line], views) / norm.scale);
            } else {
                auto it = vp_index.find(a.other);
                if (it == vp_index.end()) {
                    it = vp_index.emplace(a.other, problem.add_vp(vp_tracks[a.other].direction)).first;
                    vp_ids.push_back(a.other);
                }
                problem.add_line_vp(a.line, it->second, a.weight);
            }
        }
        problem.add_vp_orthogonality_terms();
        for (const std::string& d : problem.diagnostics())
            res.diagnostics.push_back(d);

        res.reprojection_before = problem.mean_line_reprojection_error();
        if (config.optimize) {
            res.solver = optimize::solve(problem, config.solver());
            res.reprojection_after = problem.mean_line_reprojection_error();
            for (size_t t = 0; t < tr.size(); ++t) {
                const PluckerLine line = norm.undo(problem.line(static_cast<int>(t)));
                std::vector<SegmentObservation> obs;
                for (const tracks::NodeCandidate& n : tr[t].nodes)
                    obs.push_back({&views.view(n.key.image_id), n.observation});
                const Segment3D seg = segment_from_supports(line, obs);
                if (seg.is_valid()) {
                    tr[t].line = line;
                    tr[t].segment = seg;
                } else {
                    res.diagnostics.push_back("track " + std::to_string(t) + ": refined extent is degenerate");
                }
            }
        } else {
            res.reprojection_after = res.reprojection_before;
        }

        const optimize::AssociationGraphs3D graphs = optimize::extract_association_graphs_3d(problem, config.extraction());
        for (const auto& [l, p] : graphs.line_point)
            res.line_point_edges.emplace_back(l, point_ids[p]);
        for (int v = 0; v < problem.num_vps(); ++v)
            res.vps.push_back(problem.vp(v));
        res.line_vp_edges = graphs.line_vp;
    }

    res.tracks = std::move(tr);
    for (size_t t = 0; t < res.tracks.size(); ++t) {
        io::TrackRecord rec;
        rec.segment = res.tracks[t].segment;
        rec.supports = supports[t];
        const auto counts = res.tracks[t].source_counts();
        for (int s = 0; s < triangulation::kNumProposalSources; ++s)
            rec.source_counts[triangulation::to_string(static_cast<triangulation::ProposalSource>(s))] = counts[s];
        res.records.push_back(std::move(rec));
    }
    return res;
}

std::vector<evaluation::TrackForEval> tracks_for_eval(std::span<const io::TrackRecord> records) {
    std::vector<evaluation::TrackForEval> out;
    for (const io::TrackRecord& r : records) {
        std::set<int> images;
        for (const auto& [img, s] : r.supports)
            images.insert(img);
        out.push_back({r.segment, static_cast<int>(images.size()), static_cast<int>(r.supports.size())});
    }
    return out;
}

}  // namespace linemap::pipeline
