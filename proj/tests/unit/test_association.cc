#include "doctest.h"
#include "test_util.h"

#include "linemap/association/association2d.h"

#include <set>

using namespace linemap;
using namespace linemap::association;

namespace {

// Random segments whose infinite lines avoid the given points by a margin, so
// they never join a pencil by accident.
std::vector<Segment2D> clutter(std::mt19937_64& rng, int n, const std::vector<V2D>& avoid) {
    std::uniform_real_distribution<double> u(0.0, 800.0);
    std::vector<Segment2D> out;
    while (static_cast<int>(out.size()) < n) {
        const Segment2D s(V2D(u(rng), u(rng)), V2D(u(rng), u(rng)));
        if (s.length() < 30.0)
            continue;
        bool ok = true;
        for (const V2D& a : avoid)
            ok &= vp_line_residual(s, a.homogeneous()) > 5.0;
        if (ok)
            out.push_back(s);
    }
    return out;
}

std::vector<Segment2D> pencil(std::mt19937_64& rng, const V2D& vp, int n) {
    std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> r(100.0, 300.0);
    std::uniform_real_distribution<double> len(30.0, 80.0);
    std::vector<Segment2D> out;
    for (int i = 0; i < n; ++i) {
        const double a = ang(rng);
        const V2D d(std::cos(a), std::sin(a));
        const double r0 = r(rng);
        out.emplace_back(vp + r0 * d, vp + (r0 + len(rng)) * d);
    }
    return out;
}

}  // namespace

TEST_CASE("associate_points thresholds") {
    const std::vector<Segment2D> segs = {Segment2D(V2D(0, 0), V2D(10, 0))};
    const std::vector<Point2D> pts = {{0, V2D(5, 1.9)}, {1, V2D(5, 2.1)}, {2, V2D(5, 0)}, {3, V2D(11.5, 0)}};
    const PointLineGraph2D g = associate_points(pts, segs, 2.0);
    const std::vector<std::pair<int, int>> expect = {{0, 0}, {2, 0}, {3, 0}};
    CHECK(g.edges == expect);
}

TEST_CASE("associate_points matches brute force") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::vector<Segment2D> segs;
    for (int i = 0; i < 20; ++i)
        segs.emplace_back(V2D(u(rng), u(rng)), V2D(u(rng), u(rng)));
    std::vector<Point2D> pts;
    for (int i = 0; i < 50; ++i)
        pts.push_back({i, V2D(u(rng), u(rng))});
    const auto g = associate_points(pts, segs, 3.0);
    std::set<std::pair<int, int>> brute;
    for (const auto& p : pts) {
        for (size_t s = 0; s < segs.size(); ++s) {
            // dense sampling of the segment
            double best = 1e300;
            for (int k = 0; k <= 20000; ++k) {
                const V2D q = segs[s].p1 + (k / 20000.0) * (segs[s].p2 - segs[s].p1);
                best = std::min(best, (q - p.xy).norm());
            }
            if (best <= 3.0 - 1e-2)
                brute.emplace(p.point_id, static_cast<int>(s));
            if (best <= 3.0 + 1e-2 && best > 3.0 - 1e-2)
                continue;
            const bool in_graph = std::binary_search(g.edges.begin(), g.edges.end(), std::make_pair(p.point_id, (int)s));
            CHECK(in_graph == (best <= 3.0));
        }
    }
    for (const auto& e : brute)
        CHECK(std::binary_search(g.edges.begin(), g.edges.end(), e));
}

TEST_CASE("vp_line_residual") {
    const Segment2D s(V2D(0, 0), V2D(2, 0));
    CHECK(vp_line_residual(s, V3D(10, 0, 1)) < 1e-15);
    CHECK(vp_line_residual(s, V3D(-1000, 0, 1)) < 1e-15);
    CHECK(vp_line_residual(s, V3D(1, 0, 0)) < 1e-15);
    CHECK(std::abs(vp_line_residual(s, V3D(0, 1, 0)) - 1.0) < 1e-12);
    CHECK(std::abs(vp_line_residual(s, V3D(1, 1e9, 1)) - 1.0) < 1e-6);
}

TEST_CASE("estimate_vps single pencil among clutter") {
    std::mt19937_64 rng(32);
    const V2D vp(400, 300);
    std::vector<Segment2D> segs = pencil(rng, vp, 10);
    const auto cl = clutter(rng, 10, {vp});
    segs.insert(segs.end(), cl.begin(), cl.end());
    const auto res = estimate_vps(segs);
    REQUIRE(res.vps.size() >= 1);
    int count0 = 0;
    for (int i = 0; i < 10; ++i)
        CHECK(res.assignment[i] == 0);
    for (int a : res.assignment)
        count0 += a == 0;
    CHECK(count0 == 10);
    CHECK((res.vps[0].hnormalized() - vp).norm() < 1e-6);
}

TEST_CASE("estimate_vps below min support") {
    std::mt19937_64 rng(33);
    const auto segs = pencil(rng, V2D(200, 200), 4);
    CHECK(estimate_vps(segs).vps.empty());
}

TEST_CASE("estimate_vps two pencils") {
    std::mt19937_64 rng(34);
    std::vector<Segment2D> segs = pencil(rng, V2D(-500, 300), 8);
    const auto b = pencil(rng, V2D(400, 5000), 8);
    segs.insert(segs.end(), b.begin(), b.end());
    const auto res = estimate_vps(segs);
    REQUIRE(res.vps.size() == 2);
    for (int i = 1; i < 8; ++i)
        CHECK(res.assignment[i] == res.assignment[0]);
    for (int i = 9; i < 16; ++i)
        CHECK(res.assignment[i] == res.assignment[8]);
    CHECK(res.assignment[0] != res.assignment[8]);
    CHECK(res.assignment[0] >= 0);
    CHECK(res.assignment[8] >= 0);
}

TEST_CASE("estimate_vps is deterministic under sampling") {
    std::mt19937_64 rng(35);
    std::vector<Segment2D> segs = pencil(rng, V2D(100, 100), 40);
    const auto cl = clutter(rng, 40, {V2D(100, 100)});
    segs.insert(segs.end(), cl.begin(), cl.end());
    VPConfig cfg;
    cfg.max_iterations = 500;
    cfg.seed = 9;
    const auto a = estimate_vps(segs, cfg);
    const auto b = estimate_vps(segs, cfg);
    CHECK(a.assignment == b.assignment);
    REQUIRE(a.vps.size() == b.vps.size());
    for (size_t i = 0; i < a.vps.size(); ++i)
        CHECK(a.vps[i] == b.vps[i]);
}

namespace {

struct VPFixture {
    ImageCollection views;
    std::map<int, LineVPGraph2D> per_image;
    std::vector<std::vector<std::pair<int, int>>> tracks;

    // Two images with one VP each; `angle_deg` between their world directions,
    // `shared` line tracks supported by VP-assigned segments in both images.
    VPFixture(double angle_deg, int shared) {
        views = ImageCollection({CameraView(0, M3D::Identity(), M3D::Identity(), V3D::Zero(), 10, 10),
                                 CameraView(1, M3D::Identity(), M3D::Identity(), V3D(1, 0, 0), 10, 10)});
        const double a = deg2rad(angle_deg);
        LineVPGraph2D g0, g1;
        g0.vps = {V3D(0, 0, 1)};
        g1.vps = {V3D(std::sin(a), 0, std::cos(a))};
        g0.assignment.assign(5, 0);
        g1.assignment.assign(5, 0);
        per_image[0] = g0;
        per_image[1] = g1;
        for (int t = 0; t < shared; ++t)
            tracks.push_back({{0, t}, {1, t}});
    }
};

}  // namespace

TEST_CASE("build_vp_tracks contract") {
    {
        VPFixture f(5.0, 3);
        const auto t = build_vp_tracks(f.per_image, f.views, f.tracks);
        REQUIRE(t.size() == 1);
        CHECK(t[0].supports.size() == 2);
    }
    {
        VPFixture f(12.0, 3);
        CHECK(build_vp_tracks(f.per_image, f.views, f.tracks).size() == 2);
    }
    {
        VPFixture f(5.0, 2);
        CHECK(build_vp_tracks(f.per_image, f.views, f.tracks).size() == 2);
    }
}

TEST_CASE("build_vp_tracks never puts two VPs of one image in a track") {
    ImageCollection views({CameraView(0, M3D::Identity(), M3D::Identity(), V3D::Zero(), 10, 10),
                           CameraView(1, M3D::Identity(), M3D::Identity(), V3D(1, 0, 0), 10, 10)});
    std::map<int, LineVPGraph2D> per_image;
    LineVPGraph2D g0, g1;
    g0.vps = {V3D(0, 0, 1), V3D(0.02, 0, 1)};
    g0.assignment = {0, 0, 0, 1, 1, 1};
    g1.vps = {V3D(0.01, 0, 1)};
    g1.assignment = {0, 0, 0, 0, 0, 0};
    per_image[0] = g0;
    per_image[1] = g1;
    std::vector<std::vector<std::pair<int, int>>> tracks;
    for (int t = 0; t < 6; ++t)
        tracks.push_back({{0, t}, {1, t}});
    const auto out = build_vp_tracks(per_image, views, tracks);
    for (const auto& t : out) {
        std::set<int> imgs;
        for (const auto& [img, v] : t.supports)
            CHECK(imgs.insert(img).second);
    }
    CHECK(out.size() == 2);
}
