#include "doctest.h"
#include "test_util.h"

#include "linemap/tracks/tracks.h"

#include <Eigen/SVD>

#include <algorithm>
#include <set>

using namespace linemap;
using namespace linemap::tracks;
using linemap::triangulation::Proposal;

namespace {

struct Scene {
    std::vector<CameraView> cams;
    ImageCollection views;

    explicit Scene(int n) {
        for (int i = 0; i < n; ++i) {
            const double a = 2.0 * kPi * i / n;
            cams.push_back(linemap::testing::look_at(i, V3D(6 * std::cos(a), 0.7 * std::sin(3 * a), 6 * std::sin(a)),
                                                     V3D::Zero()));
        }
        views = ImageCollection(cams);
    }

    NodeCandidate node(int img, int seg, const Segment3D& s) const {
        NodeCandidate n;
        n.key = {img, seg};
        n.observation = linemap::testing::project(s, views.view(img));
        n.best.segment = s;
        n.best.depths = V2D(views.view(img).depth(s.e1), views.view(img).depth(s.e2));
        return n;
    }
};

std::vector<std::pair<SegmentKey, SegmentKey>> all_pairs(const std::vector<NodeCandidate>& nodes) {
    std::vector<std::pair<SegmentKey, SegmentKey>> out;
    for (size_t i = 0; i < nodes.size(); ++i)
        for (size_t j = i + 1; j < nodes.size(); ++j)
            out.emplace_back(nodes[i].key, nodes[j].key);
    return out;
}

}  // namespace

TEST_CASE("build_tracks: one GT line") {
    Scene sc(6);
    const Segment3D gt(V3D(-1, 0.2, 0.1), V3D(1, -0.1, 0.3));
    std::vector<NodeCandidate> nodes;
    for (int i = 0; i < 5; ++i)
        nodes.push_back(sc.node(i, 0, gt));
    const auto tr = build_tracks(nodes, all_pairs(nodes), sc.views, {}, {});
    REQUIRE(tr.size() == 1);
    CHECK(tr[0].nodes.size() == 5);
    CHECK(tr[0].num_images() == 5);
    CHECK(tr[0].line.distance(gt.e1) < 1e-10);
}

TEST_CASE("build_tracks: small components are dropped") {
    Scene sc(6);
    const Segment3D gt(V3D(-1, 0.2, 0.1), V3D(1, -0.1, 0.3));
    std::vector<NodeCandidate> nodes = {sc.node(0, 0, gt), sc.node(1, 0, gt)};
    CHECK(build_tracks(nodes, all_pairs(nodes), sc.views, {}, {}).empty());
}

TEST_CASE("build_tracks: a wrong match does not join distinct lines") {
    Scene sc(8);
    const Segment3D a(V3D(-1, 0.5, 0.1), V3D(1, 0.5, 0.3));
    const Segment3D b(V3D(-0.2, -1, -0.8), V3D(0.1, 1, -0.8));
    std::vector<NodeCandidate> nodes;
    for (int i = 0; i < 4; ++i)
        nodes.push_back(sc.node(i, 0, a));
    for (int i = 4; i < 8; ++i)
        nodes.push_back(sc.node(i, 1, b));
    std::vector<std::pair<SegmentKey, SegmentKey>> m;
    for (int i = 0; i < 3; ++i) {
        m.emplace_back(nodes[i].key, nodes[i + 1].key);
        m.emplace_back(nodes[4 + i].key, nodes[5 + i].key);
    }
    m.emplace_back(nodes[0].key, nodes[4].key);
    const auto tr = build_tracks(nodes, m, sc.views, {}, {});
    REQUIRE(tr.size() == 2);
    CHECK(tr[0].nodes.size() == 4);
    CHECK(tr[1].nodes.size() == 4);
}

TEST_CASE("build_tracks is deterministic and partitions the segments") {
    Scene sc(10);
    std::mt19937_64 rng(51);
    std::vector<NodeCandidate> nodes;
    std::vector<Segment3D> gts;
    for (int l = 0; l < 5; ++l)
        gts.emplace_back(linemap::testing::random_vec(rng, -1, 1), linemap::testing::random_vec(rng, -1, 1));
    for (int i = 0; i < 10; ++i)
        for (int l = 0; l < 5; ++l)
            nodes.push_back(sc.node(i, l, gts[l]));
    std::vector<std::pair<SegmentKey, SegmentKey>> m;
    std::uniform_int_distribution<size_t> pick(0, nodes.size() - 1);
    for (int k = 0; k < 300; ++k)
        m.emplace_back(nodes[pick(rng)].key, nodes[pick(rng)].key);
    TrackConfig cfg;
    const auto t1 = build_tracks(nodes, m, sc.views, {}, cfg);
    std::shuffle(nodes.begin(), nodes.end(), rng);
    std::shuffle(m.begin(), m.end(), rng);
    cfg.threads = 4;
    const auto t2 = build_tracks(nodes, m, sc.views, {}, cfg);
    REQUIRE(t1.size() == t2.size());
    std::set<SegmentKey> seen;
    for (size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1[i].supports() == t2[i].supports());
        for (const auto& k : t1[i].supports())
            CHECK(seen.insert(k).second);
        for (const auto& n : t1[i].nodes)
            CHECK(n.key.segment_id == t1[i].nodes[0].key.segment_id);
    }
}

TEST_CASE("refit_track") {
    LineTrack t;
    const Segment3D gt(V3D(0, 0, 0), V3D(3, 1, 2));
    for (int k = 0; k < 4; ++k) {
        NodeCandidate n;
        n.key = {k, 0};
        n.best.segment = Segment3D(gt.e1 + 0.1 * k * (gt.e2 - gt.e1), gt.e1 + (0.5 + 0.1 * k) * (gt.e2 - gt.e1));
        t.nodes.push_back(n);
    }
    const auto [line, seg] = refit_track(t);
    CHECK(line.distance(gt.e1) < 1e-10);
    CHECK(line.distance(gt.e2) < 1e-10);

    LineTrack two;
    two.nodes.resize(1);
    two.nodes[0].best.segment = gt;
    const auto [l2, s2] = refit_track(two);
    CHECK(l2.distance(gt.e1) < 1e-12);
    CHECK(l2.distance(gt.e2) < 1e-12);
    CHECK(s2.length() == doctest::Approx(gt.length()));

    LineTrack bad;
    bad.nodes.resize(2);
    bad.nodes[0].best.segment = Segment3D(V3D(1, 1, 1), V3D(1, 1, 1));
    bad.nodes[1].best.segment = Segment3D(V3D(1, 1, 1), V3D(1, 1, 1));
    CHECK_THROWS_AS(refit_track(bad), DegenerateError);
}

TEST_CASE("refit_track matches an SVD oracle under noise") {
    std::mt19937_64 rng(52);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (int trial = 0; trial < 50; ++trial) {
        const V3D d = linemap::testing::random_unit(rng);
        const V3D o = linemap::testing::random_vec(rng);
        LineTrack t;
        Eigen::MatrixXd data(0, 3);
        std::vector<V3D> pts;
        for (int k = 0; k < 8; ++k) {
            NodeCandidate n;
            const V3D a = o + (k * 0.3 - 1.0) * d * 10 + V3D(noise(rng), noise(rng), noise(rng));
            const V3D b = o + (k * 0.3 + 1.0) * d * 10 + V3D(noise(rng), noise(rng), noise(rng));
            n.best.segment = Segment3D(a, b);
            t.nodes.push_back(n);
            pts.push_back(a);
            pts.push_back(b);
        }
        V3D mean = V3D::Zero();
        for (const V3D& p : pts)
            mean += p;
        mean /= pts.size();
        Eigen::MatrixXd X(pts.size(), 3);
        for (size_t i = 0; i < pts.size(); ++i)
            X.row(i) = (pts[i] - mean).transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
        const V3D dir = svd.matrixV().col(0);
        const auto [line, seg] = refit_track(t);
        CHECK(line.d().cross(dir).norm() < 1e-10);
        CHECK(line.distance(mean) < 1e-10);
        // the PCA line minimizes the summed squared distances
        auto cost = [&](const PluckerLine& l) {
            double c = 0.0;
            for (const V3D& p : pts)
                c += l.distance(p) * l.distance(p);
            return c;
        };
        const double base = cost(line);
        for (int k = 0; k < 20; ++k) {
            const PluckerLine pert =
                PluckerLine::from_point_direction(mean + 1e-3 * linemap::testing::random_vec(rng),
                                                  dir + 1e-3 * linemap::testing::random_vec(rng));
            CHECK(cost(pert) >= base);
        }
    }
}

TEST_CASE("remerge_tracks") {
    Scene sc(8);
    const Segment3D gt(V3D(-1, 0.2, 0.1), V3D(1, -0.1, 0.3));
    const Segment3D orth(V3D(0.1, -1, -0.5), V3D(0.1, 1, -0.5));
    std::vector<NodeCandidate> a, b, c;
    for (int i = 0; i < 3; ++i) {
        a.push_back(sc.node(i, 0, gt));
        b.push_back(sc.node(i + 3, 0, gt));
        c.push_back(sc.node(i, 1, orth));
    }
    auto mk = [](std::vector<NodeCandidate> n) {
        LineTrack t;
        t.nodes = std::move(n);
        std::tie(t.line, t.segment) = refit_track(t);
        return t;
    };
    const std::vector<LineTrack> tracks = {mk(a), mk(b), mk(c)};
    const auto merged = remerge_tracks(tracks, sc.views, {}, {});
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].nodes.size() == 6);
    CHECK(merged[1].nodes.size() == 3);

    TrackConfig off;
    off.remerge = false;
    CHECK(remerge_tracks(tracks, sc.views, {}, off).size() == 3);

    const std::vector<LineTrack> orth_only = {mk(a), mk(c)};
    CHECK(remerge_tracks(orth_only, sc.views, {}, {}).size() == 2);
}

TEST_CASE("filter_tracks") {
    Scene sc(6);
    const Segment3D gt(V3D(-1, 0.2, 0.1), V3D(1, -0.1, 0.3));
    LineTrack t;
    for (int i = 0; i < 3; ++i)
        t.nodes.push_back(sc.node(i, 0, gt));
    t.nodes.push_back(sc.node(2, 1, gt));
    CHECK(t.num_images() == 3);
    CHECK(filter_tracks({t}, 4).empty());
    CHECK(filter_tracks({t}, 3).size() == 1);
}
