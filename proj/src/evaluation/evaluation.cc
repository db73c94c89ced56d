#include "linemap/evaluation/evaluation.h"

#include "linemap/base/parallel.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace linemap::evaluation {

void SceneSpec::validate() const {
    auto fail = [](const std::string& what) { throw InvalidInputError("scene spec: " + what); };
    if (num_views < 2)
        fail("need at least 2 views");
    if (num_segments < 1)
        fail("need at least 1 segment");
    if (!(box_half > 0.0) || !(camera_distance > box_half * std::sqrt(3.0)))
        fail("cameras must be outside the box");
    if (!(focal > 0.0) || width <= 0 || height <= 0)
        fail("invalid intrinsics");
    if (noise_px < 0.0 || point_noise_px < 0.0)
        fail("noise must be non-negative");
    if (occlusion_rate < 0.0 || occlusion_rate > 1.0)
        fail("occlusion_rate must be in [0, 1]");
    if (outlier_ratio < 0.0 || outlier_ratio >= 1.0)
        fail("outlier_ratio must be in [0, 1)");
    if (fragments < 1)
        fail("fragments must be >= 1");
    if (matches_per_segment < 1)
        fail("matches_per_segment must be >= 1");
    if (points_per_segment < 0 || min_length_px < 0.0)
        fail("negative counts");
    if (!(scale > 0.0) || !std::isfinite(scale))
        fail("scale must be positive");
}

namespace {

CameraView look_at(int id, const V3D& center, const V3D& target, const SceneSpec& spec) {
    const V3D z = (target - center).normalized();
    V3D x = V3D::UnitY().cross(z);
    if (x.norm() < 1e-6)
        x = V3D::UnitX().cross(z);
    x.normalize();
    const V3D y = z.cross(x);
    M3D R;
    R.row(0) = x;
    R.row(1) = y;
    R.row(2) = z;
    M3D K;
    K << spec.focal, 0.0, 0.5 * spec.width, 0.0, spec.focal, 0.5 * spec.height, 0.0, 0.0, 1.0;
    return CameraView(id, K, R, -R * center, spec.width, spec.height);
}

// Entry parameter of the ray c + s * dir into the box, or +inf on a miss.
double box_entry(const V3D& c, const V3D& dir, double half) {
    double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir(a)) < 1e-300) {
            if (std::abs(c(a)) > half)
                return std::numeric_limits<double>::infinity();
            continue;
        }
        double ta = (-half - c(a)) / dir(a), tb = (half - c(a)) / dir(a);
        if (ta > tb)
            std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1 || t1 <= 0.0 || t0 <= 0.0)
        return std::numeric_limits<double>::infinity();
    return t0;
}

bool visible_on_box(const CameraView& v, const V3D& X, double half) {
    const V3D c = v.center();
    const double entry = box_entry(c, X - c, half);  // X is at parameter 1
    return entry >= 1.0 - 1e-9;
}

// Liang-Barsky clip of a 2D segment to [0, w-1] x [0, h-1].
std::optional<Segment2D> clip_to_image(const Segment2D& s, int w, int h) {
    double t0 = 0.0, t1 = 1.0;
    const V2D d = s.p2 - s.p1;
    const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
    const double q[4] = {s.p1.x(), (w - 1) - s.p1.x(), s.p1.y(), (h - 1) - s.p1.y()};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0)
                return std::nullopt;
            continue;
        }
        const double r = q[i] / p[i];
        if (p[i] < 0.0)
            t0 = std::max(t0, r);
        else
            t1 = std::min(t1, r);
    }
    if (t0 >= t1)
        return std::nullopt;
    return Segment2D(s.p1 + t0 * d, s.p1 + t1 * d);
}

struct GTLayout {
    std::vector<Segment3D> segments;
    std::vector<int> vp;
    std::vector<V3D> junctions;
    std::vector<std::pair<int, int>> junction_lines;
};

GTLayout make_layout(const SceneSpec& spec, std::mt19937_64& rng) {
    const double h = spec.box_half;
    GTLayout g;
    std::vector<Segment3D> segs;
    std::vector<int> axes;
    auto axis_point = [](int a, double va, int b, double vb, int c, double vc) {
        V3D p;
        p(a) = va;
        p(b) = vb;
        p(c) = vc;
        return p;
    };
    // box edges
    for (int a = 0; a < 3; ++a) {
        const int b = (a + 1) % 3, c = (a + 2) % 3;
        for (double sb : {-h, h})
            for (double sc : {-h, h}) {
                segs.emplace_back(axis_point(a, -h, b, sb, c, sc), axis_point(a, h, b, sb, c, sc));
                axes.push_back(a);
            }
    }
    // one inset rectangle per face; (face normal axis, offset along each in-plane axis)
    std::uniform_real_distribution<double> inset(0.3, 0.8);
    struct Rect {
        int n;
        double s;
        double u, v;
    };
    std::vector<Rect> rects;
    std::vector<std::pair<V3D, std::pair<int, int>>> corners;  // corner, (segment indices)
    for (int n = 0; n < 3; ++n) {
        for (double s : {-h, h}) {
            const Rect r{n, s, inset(rng) * h, inset(rng) * h};
            rects.push_back(r);
            const int a = (n + 1) % 3, b = (n + 2) % 3;
            const int base = static_cast<int>(segs.size());
            // sides along a at b = -v, +v; sides along b at a = -u, +u
            for (double vb : {-r.v, r.v}) {
                segs.emplace_back(axis_point(n, s, a, -r.u, b, vb), axis_point(n, s, a, r.u, b, vb));
                axes.push_back(a);
            }
            for (double ua : {-r.u, r.u}) {
                segs.emplace_back(axis_point(n, s, a, ua, b, -r.v), axis_point(n, s, a, ua, b, r.v));
                axes.push_back(b);
            }
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    corners.push_back({axis_point(n, s, a, (j ? r.u : -r.u), b, (i ? r.v : -r.v)),
                                       {base + i, base + 2 + j}});
        }
    }
    // leftover axis-aligned segments on random faces, away from other parallel lines
    std::uniform_int_distribution<int> face(0, 5), side(0, 1);
    std::uniform_real_distribution<double> off(-0.9, 0.9), lo(-0.9, -0.1), hi(0.1, 0.9);
    while (static_cast<int>(segs.size()) < spec.num_segments) {
        const int f = face(rng);
        const Rect& r = rects[f];
        const int a = (r.n + 1) % 3, b = (r.n + 2) % 3;
        const bool along_a = side(rng) == 0;
        const double o = off(rng) * h;
        const double l0 = lo(rng) * h, l1 = hi(rng) * h;
        const double taken = along_a ? r.v : r.u;
        bool clash = std::abs(std::abs(o) - taken) < 0.1 * h;
        for (size_t k = 36; k < segs.size() && !clash; ++k) {
            const Segment3D& q = segs[k];
            if (std::abs(q.e1(r.n) - r.s) > 1e-12 || axes[k] != (along_a ? a : b))
                continue;
            clash = std::abs(q.e1(along_a ? b : a) - o) < 0.1 * h;
        }
        if (clash)
            continue;
        if (along_a)
            segs.emplace_back(axis_point(r.n, r.s, a, l0, b, o), axis_point(r.n, r.s, a, l1, b, o));
        else
            segs.emplace_back(axis_point(r.n, r.s, a, o, b, l0), axis_point(r.n, r.s, a, o, b, l1));
        axes.push_back(along_a ? a : b);
    }
    const int n = spec.num_segments;
    g.segments.assign(segs.begin(), segs.begin() + n);
    g.vp.assign(axes.begin(), axes.begin() + n);
    if (spec.junctions) {
        for (const auto& [c, pair] : corners) {
            if (pair.first >= n || pair.second >= n)
                continue;
            const int id = static_cast<int>(g.junctions.size());
            g.junctions.push_back(c);
            g.junction_lines.emplace_back(id, pair.first);
            g.junction_lines.emplace_back(id, pair.second);
        }
    }
    return g;
}

}  // namespace

depthfit::DepthMap render_box_depth(const CameraView& view, double half) {
    depthfit::DepthMap d(view.width(), view.height());
    const V3D c = view.center();
    const M3D Rt = view.R().transpose();
    for (int y = 0; y < view.height(); ++y) {
        for (int x = 0; x < view.width(); ++x) {
            // camera z of the ray direction is 1, so the parameter is the z-depth
            const V3D dir = Rt * view.normalized(V2D(x, y));
            const double t = box_entry(c, dir, half);
            if (std::isfinite(t))
                d.at(x, y) = static_cast<float>(t);
        }
    }
    return d;
}

SyntheticScene generate_scene(const SceneSpec& spec) {
    spec.validate();
    SyntheticScene out;
    out.spec = spec;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    const GTLayout layout = make_layout(spec, rng);

    std::vector<CameraView> cams;
    for (int i = 0; i < spec.num_views; ++i) {
        const double az = 2.0 * kPi * i / spec.num_views + 0.2 * (unit(rng) - 0.5);
        const double el = deg2rad((i % 2 == 0 ? 1.0 : -1.0) * spec.camera_elevation_deg + 10.0 * (unit(rng) - 0.5));
        const V3D center = spec.camera_distance * V3D(std::cos(el) * std::cos(az), std::sin(el), std::cos(el) * std::sin(az));
        const V3D target = 0.2 * spec.box_half * V3D(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5);
        cams.push_back(look_at(i, center, target, spec));
    }

    // per-view 2D segments
    std::map<int, std::vector<Segment2D>> segments;
    std::map<int, std::vector<int>> source;
    for (const CameraView& v : cams) {
        auto& segs = segments[v.image_id()];
        auto& src = source[v.image_id()];
        for (size_t g = 0; g < layout.segments.size(); ++g) {
            const Segment3D& gt = layout.segments[g];
            std::vector<double> cuts = {0.0};
            for (int k = 1; k < spec.fragments; ++k) {
                const double w = 1.0 / spec.fragments;
                cuts.push_back(k * w + w * 0.6 * (unit(rng) - 0.5));
            }
            cuts.push_back(1.0);
            for (size_t k = 0; k + 1 < cuts.size(); ++k) {
                const double occ = unit(rng);
                const V2D n1(noise(rng), noise(rng)), n2(noise(rng), noise(rng));
                const Segment3D piece(gt.e1 + cuts[k] * (gt.e2 - gt.e1), gt.e1 + cuts[k + 1] * (gt.e2 - gt.e1));
                if (occ < spec.occlusion_rate)
                    continue;
                if (!(v.depth(piece.e1) > 1e-3 * spec.box_half) || !(v.depth(piece.e2) > 1e-3 * spec.box_half))
                    continue;
                if (spec.render_depth) {
                    bool vis = true;
                    for (int s = 0; s <= 10 && vis; ++s)
                        vis = visible_on_box(v, piece.e1 + (s / 10.0) * (piece.e2 - piece.e1), spec.box_half);
                    if (!vis)
                        continue;
                }
                auto clipped = clip_to_image(Segment2D(v.project(piece.e1), v.project(piece.e2)), v.width(), v.height());
                if (!clipped)
                    continue;
                Segment2D s = *clipped;
                s.p1 += spec.noise_px * n1;
                s.p2 += spec.noise_px * n2;
                if (s.length() < spec.min_length_px || !s.is_valid())
                    continue;
                segs.push_back(s);
                src.push_back(static_cast<int>(g));
            }
        }
    }

    // GT-consistent matches, nearest cameras first
    std::vector<io::MatchList> matches;
    std::map<std::pair<int, int>, size_t> match_index;
    size_t n_in = 0;
    for (const CameraView& v : cams) {
        const int img = v.image_id();
        std::vector<int> others;
        for (const CameraView& w : cams)
            if (w.image_id() != img)
                others.push_back(w.image_id());
        std::stable_sort(others.begin(), others.end(), [&](int a, int b) {
            return (cams[a].center() - v.center()).norm() < (cams[b].center() - v.center()).norm();
        });
        for (size_t s = 0; s < segments[img].size(); ++s) {
            io::MatchList m;
            m.ref = {img, static_cast<int>(s)};
            for (int o : others) {
                for (size_t t = 0; t < segments[o].size(); ++t) {
                    if (static_cast<int>(m.targets.size()) >= spec.matches_per_segment)
                        break;
                    if (source[o][t] == source[img][s])
                        m.targets.emplace_back(o, static_cast<int>(t));
                }
            }
            n_in += m.targets.size();
            match_index[m.ref] = matches.size();
            matches.push_back(std::move(m));
        }
    }
    if (spec.outlier_ratio > 0.0 && !matches.empty()) {
        const size_t n_out =
            static_cast<size_t>(std::llround(static_cast<double>(n_in) * spec.outlier_ratio / (1.0 - spec.outlier_ratio)));
        std::uniform_int_distribution<size_t> pick_ref(0, matches.size() - 1);
        std::uniform_int_distribution<int> pick_img(0, spec.num_views - 1);
        size_t added = 0;
        for (size_t attempt = 0; added < n_out && attempt < 100 * n_out + 100; ++attempt) {
            io::MatchList& m = matches[pick_ref(rng)];
            const int o = pick_img(rng);
            if (o == m.ref.first || segments[o].empty())
                continue;
            std::uniform_int_distribution<size_t> pick_seg(0, segments[o].size() - 1);
            const int t = static_cast<int>(pick_seg(rng));
            if (source[o][t] == source[m.ref.first][m.ref.second])
                continue;
            if (std::find(m.targets.begin(), m.targets.end(), std::make_pair(o, t)) != m.targets.end())
                continue;
            m.targets.emplace_back(o, t);
            ++added;
        }
    }
    for (io::MatchList& m : matches)
        std::shuffle(m.targets.begin(), m.targets.end(), rng);

    // point tracks: junctions, then random points on segments
    std::vector<io::PointTrack> points;
    auto observe = [&](const V3D& X) {
        io::PointTrack p;
        p.xyz = X;
        for (const CameraView& v : cams) {
            const V2D n(noise(rng), noise(rng));
            if (!(v.depth(X) > 0.0))
                continue;
            const V2D px = v.project(X);
            if (!v.in_image(px))
                continue;
            if (spec.render_depth && !visible_on_box(v, X, spec.box_half))
                continue;
            p.observations.emplace_back(v.image_id(), px + spec.point_noise_px * n);
        }
        return p;
    };
    for (const V3D& J : layout.junctions)
        points.push_back(observe(J));
    for (const Segment3D& g : layout.segments)
        for (int k = 0; k < spec.points_per_segment; ++k)
            points.push_back(observe(g.e1 + unit(rng) * (g.e2 - g.e1)));

    // apply scale to 3D quantities
    const double s = spec.scale;
    io::InputBundle& b = out.bundle;
    for (const CameraView& v : cams)
        b.cameras.emplace_back(v.image_id(), v.K(), v.R(), v.t() * s, v.width(), v.height());
    b.segments = std::move(segments);
    b.matches = std::move(matches);
    for (io::PointTrack& p : points) {
        p.xyz *= s;
        b.points.push_back(std::move(p));
    }
    if (spec.render_depth)
        for (const CameraView& v : b.cameras)
            b.depths.emplace(v.image_id(), render_box_depth(v, spec.box_half * s));

    io::GroundTruth& gt = out.gt;
    for (const Segment3D& g : layout.segments)
        gt.segments.emplace_back(g.e1 * s, g.e2 * s);
    gt.vp_directions = {V3D::UnitX(), V3D::UnitY(), V3D::UnitZ()};
    gt.segment_vp = layout.vp;
    for (const V3D& J : layout.junctions)
        gt.junctions.push_back(J * s);
    gt.junction_lines = layout.junction_lines;
    gt.segment_source = std::move(source);
    return out;
}

GTDistance::GTDistance(std::span<const Segment3D> segments, std::span<const V3D> points, double cell)
    : segments_(segments.begin(), segments.end()), points_(points.begin(), points.end()), cell_(cell) {
    if (!(cell > 0.0))
        throw InvalidInputError("grid cell must be positive");
    if (segments_.empty() && points_.empty())
        throw InvalidInputError("empty GT model");
    bool first = true;
    auto add = [&](const V3D& p, int id) {
        const Key k = key_of(p);
        auto& cell_ids = grid_[k];
        if (cell_ids.empty() || cell_ids.back() != id)
            cell_ids.push_back(id);
        if (first) {
            lo_ = hi_ = k;
            first = false;
        }
        lo_ = {std::min(lo_.x, k.x), std::min(lo_.y, k.y), std::min(lo_.z, k.z)};
        hi_ = {std::max(hi_.x, k.x), std::max(hi_.y, k.y), std::max(hi_.z, k.z)};
    };
    for (size_t i = 0; i < segments_.size(); ++i) {
        const Segment3D& s = segments_[i];
        const int n = static_cast<int>(std::ceil(s.length() / (0.5 * cell_))) + 1;
        for (int k = 0; k <= n; ++k)
            add(s.e1 + (static_cast<double>(k) / n) * (s.e2 - s.e1), static_cast<int>(i));
    }
    for (size_t i = 0; i < points_.size(); ++i)
        add(points_[i], static_cast<int>(segments_.size() + i));
}

GTDistance::Key GTDistance::key_of(const V3D& p) const {
    return {static_cast<int64_t>(std::floor(p.x() / cell_)), static_cast<int64_t>(std::floor(p.y() / cell_)),
            static_cast<int64_t>(std::floor(p.z() / cell_))};
}

double GTDistance::brute_force(const V3D& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Segment3D& s : segments_)
        best = std::min(best, point_segment_distance(p, s));
    for (const V3D& q : points_)
        best = std::min(best, (p - q).norm());
    return best;
}

double GTDistance::distance(const V3D& p) const {
    if (!p.allFinite())
        return std::numeric_limits<double>::infinity();
    const Key q = key_of(p);
    double best = std::numeric_limits<double>::infinity();
    auto element = [&](int id) {
        const size_t n = segments_.size();
        return id < static_cast<int>(n) ? point_segment_distance(p, segments_[id]) : (p - points_[id - n]).norm();
    };
    std::set<int> seen;
    for (int64_t k = 0; k <= 4; ++k) {
        for (int64_t dx = -k; dx <= k; ++dx)
            for (int64_t dy = -k; dy <= k; ++dy)
                for (int64_t dz = -k; dz <= k; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != k)
                        continue;
                    auto it = grid_.find({q.x + dx, q.y + dy, q.z + dz});
                    if (it == grid_.end())
                        continue;
                    for (int id : it->second)
                        if (seen.insert(id).second)
                            best = std::min(best, element(id));
                }
        if (best <= k * cell_ - 0.25 * cell_)
            return best;
    }
    return brute_force(p);
}

MapMetrics compute_metrics(std::span<const TrackForEval> tracks, const io::GroundTruth& gt,
                           const MetricsConfig& config) {
    if (config.taus.empty())
        throw InvalidInputError("no thresholds given");
    for (double t : config.taus)
        if (!(t > 0.0))
            throw InvalidInputError("thresholds must be positive");
    MapMetrics m;
    m.taus = config.taus;
    std::sort(m.taus.begin(), m.taus.end());
    const double tmin = m.taus.front(), tmax = m.taus.back();
    const GTDistance index(gt.segments, gt.points, tmax);
    for (const Segment3D& s : gt.segments)
        m.gt_length += s.length();

    const size_t nt = m.taus.size();
    std::vector<std::vector<double>> recall(tracks.size(), std::vector<double>(nt, 0.0));
    std::vector<std::vector<char>> inlier(tracks.size(), std::vector<char>(nt, 0));
    const double spacing = tmin / 4.0;
    parallel_for(tracks.size(), config.threads, [&](size_t i) {
        const Segment3D& s = tracks[i].segment;
        const double len = s.length();
        const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
        const double piece = len / n;
        double sum = 0.0, worst = 0.0;
        for (int k = 0; k < n; ++k) {
            const double d = index.distance(s.e1 + ((k + 0.5) / n) * (s.e2 - s.e1));
            sum += d;
            worst = std::max(worst, d);
            for (size_t t = 0; t < nt; ++t)
                if (d <= m.taus[t])
                    recall[i][t] += piece;
        }
        const double agg = config.rule == InlierRule::Mean ? sum / n : worst;
        for (size_t t = 0; t < nt; ++t)
            inlier[i][t] = agg <= m.taus[t];
    });
    m.length_recall.assign(nt, 0.0);
    m.inlier_pct.assign(nt, 0.0);
    m.num_tracks = static_cast<int>(tracks.size());
    for (size_t i = 0; i < tracks.size(); ++i) {
        m.total_length += tracks[i].segment.length();
        m.avg_image_supports += tracks[i].num_images;
        m.avg_line_supports += tracks[i].num_supports;
        for (size_t t = 0; t < nt; ++t) {
            m.length_recall[t] += recall[i][t];
            m.inlier_pct[t] += inlier[i][t];
        }
    }
    if (!tracks.empty()) {
        const double n = static_cast<double>(tracks.size());
        m.avg_image_supports /= n;
        m.avg_line_supports /= n;
        for (double& p : m.inlier_pct)
            p = 100.0 * p / n;
    }
    return m;
}

std::string format_metrics_table(const MapMetrics& m) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-12s %-14s %-10s %-10s\n", "tau", "R_tau", "R/GT(%)", "P_tau(%)");
    os << buf;
    for (size_t t = 0; t < m.taus.size(); ++t) {
        const double ratio = m.gt_length > 0 ? 100.0 * m.length_recall[t] / m.gt_length : 0.0;
        std::snprintf(buf, sizeof(buf), "%-12.6g %-14.6g %-10.2f %-10.2f\n", m.taus[t], m.length_recall[t], ratio,
                      m.inlier_pct[t]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "tracks %d, length %.6g (GT %.6g), image supports %.2f, line supports %.2f\n",
                  m.num_tracks, m.total_length, m.gt_length, m.avg_image_supports, m.avg_line_supports);
    os << buf;
    return os.str();
}

}  // namespace linemap::evaluation
