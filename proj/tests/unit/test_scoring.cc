#include "doctest.h"
#include "synthetic_pairs.h"

#include "linemap/scoring/scoring.h"

#include <algorithm>
#include <cmath>

using namespace linemap;
using namespace linemap::scoring;
using linemap::triangulation::MatchRef;
using linemap::triangulation::Proposal;
using linemap::triangulation::ProposalSource;

TEST_CASE("angular distance") {
    const Segment3D a(V3D(0, 0, 0), V3D(1, 0, 0));
    CHECK(angular_distance(a, Segment3D(V3D(0, 1, 0), V3D(3, 1, 0))) == doctest::Approx(0.0));
    CHECK(angular_distance(a, Segment3D(V3D(0, 0, 0), V3D(0, 0, 2))) == doctest::Approx(kPi / 2));
    CHECK(angular_distance(a, Segment3D(V3D(1, 0, 0), V3D(0, 0, 0))) == doctest::Approx(0.0));
    CHECK(angular_distance(Segment2D(V2D(0, 0), V2D(1, 1)), Segment2D(V2D(0, 0), V2D(-1, 1))) ==
          doctest::Approx(kPi / 2));
}

TEST_CASE("perpendicular distance") {
    const Segment3D b(V3D(0, 0, 0), V3D(1, 0, 0));
    CHECK(perpendicular_distance(Segment3D(V3D(5, 0, 0), V3D(7, 0, 0)), b) == 0.0);
    CHECK(perpendicular_distance(Segment3D(V3D(0, 0.3, 0), V3D(1, 0.3, 0)), b) == doctest::Approx(0.3));

    std::mt19937_64 rng(41);
    for (int i = 0; i < 200; ++i) {
        const Segment3D s1(linemap::testing::random_vec(rng), linemap::testing::random_vec(rng));
        const Segment3D s2(linemap::testing::random_vec(rng), linemap::testing::random_vec(rng));
        double oracle = 0.0;
        const PluckerLine l2 = plucker_from_segment(s2);
        for (int k = 0; k <= 1000; ++k)
            oracle = std::max(oracle, l2.distance(s1.e1 + (k / 1000.0) * (s1.e2 - s1.e1)));
        CHECK(std::abs(perpendicular_distance(s1, s2) - oracle) < 1e-9);
        CHECK(symmetric_perpendicular_distance(s1, s2) == doctest::Approx(symmetric_perpendicular_distance(s2, s1)));
    }
}

TEST_CASE("perspective distance") {
    const Segment3D a(V3D(0, 0, 2), V3D(0, 1, 2));
    CHECK(perspective_distance(a, a, 2, 2) == 0.0);
    const Segment3D b(V3D(0, 0, 2.2), V3D(0, 1.1, 2.2));
    const double d = perspective_distance(a, b, 2, 2);
    const Segment3D a10(10 * a.e1, 10 * a.e2), b10(10 * b.e1, 10 * b.e2);
    CHECK(perspective_distance(a10, b10, 20, 20) == doctest::Approx(d).epsilon(1e-14));
    CHECK_THROWS_AS(perspective_distance(a, b, 0.0, 1.0), DegenerateError);
}

TEST_CASE("perspective distance flags ill-posed triangulations") {
    // Reference camera at the origin; both proposals lie on the same two rays.
    // The ill-posed one is nearly collinear with the rays, so its endpoints are
    // far apart in depth while the good line stays close to it.
    const V3D x1(0.0, 0.0, 1.0), x2(0.01, 0.0, 1.0);
    const Segment3D good(2.0 * x1, 2.0 * x2);
    const Segment3D bad(2.0 * x1, 3.0 * x2);
    const double persp = perspective_distance(bad, good, 2.0, 3.0);
    const double perp = perpendicular_distance(good, bad);
    CHECK(persp > 0.3);
    CHECK(perp < 0.021);
    CHECK(normalize(persp, 0.015) == 0.0);
}

TEST_CASE("overlap ratio") {
    const Segment3D a(V3D(0, 0, 0), V3D(2, 0, 0));
    CHECK(overlap_ratio(a, a) == doctest::Approx(1.0));
    CHECK(overlap_ratio(Segment3D(V3D(3, 1, 0), V3D(4, 1, 0)), a) == 0.0);
    CHECK(overlap_score(0.0, 0.05) == 0.0);
    const double r = overlap_ratio(Segment3D(V3D(1, 0.5, 0), V3D(5, 0.5, 0)), a);
    CHECK(r == doctest::Approx(0.5));
    CHECK(overlap_score(r, 0.05) == 1.0);
    CHECK(overlap_ratio(Segment2D(V2D(0, 0), V2D(1, 0)), Segment2D(V2D(0.5, 1), V2D(2.5, 1))) == doctest::Approx(0.25));
}

TEST_CASE("innerseg distance") {
    const Segment3D a(V3D(0, 0, 5), V3D(1, 0, 5));
    CHECK(innerseg_raw_distance(a, a) == 0.0);
    const Segment3D b(V3D(1.5, 0, 5), V3D(3, 0, 5));
    CHECK(innerseg_raw_distance(a, b) == doctest::Approx(0.5));
    CHECK(innerseg_raw_distance(b, a) == doctest::Approx(0.5));
    const Segment3D c(V3D(0.2, 0.1, 5), V3D(0.8, 0.1, 5));
    CHECK(innerseg_raw_distance(a, c) == doctest::Approx(0.1));

    const CameraView v(0, linemap::testing::make_K(500, 320, 240), M3D::Identity(), V3D::Zero(), 640, 480);
    const double s1 = innerseg_distance(a, b, innerseg_sigma(a, v, b, v));
    const double k = 1e3;
    const CameraView vk(0, v.K(), M3D::Identity(), V3D::Zero(), 640, 480);
    const Segment3D ak(k * a.e1, k * a.e2), bk(k * b.e1, k * b.e2);
    CHECK(innerseg_distance(ak, bk, innerseg_sigma(ak, vk, bk, vk)) == doctest::Approx(s1).epsilon(1e-12));
    CHECK(s1 == doctest::Approx(0.5 / (5.0 / 500.0)));
    CHECK_THROWS_AS(innerseg_sigma(Segment3D(V3D(0, 0, -1), V3D(1, 0, -1)), v, b, v), DegenerateError);
}

TEST_CASE("normalize") {
    CHECK(normalize(0.0, 1.0) == 1.0);
    CHECK(normalize(1.0, 1.0) == 0.0);
    CHECK(normalize(std::sqrt(std::log(2.0)), 1.0) == doctest::Approx(0.5));
    CHECK(normalize(std::sqrt(std::log(2.0)), 1.0) > 0.0);
    double prev = 1.0;
    for (int i = 0; i < 1000; ++i) {
        const double s = normalize(i * 0.001, 0.5);
        CHECK(s <= prev);
        CHECK((s == 0.0 || (s >= 0.5 - 1e-12 && s <= 1.0)));
        prev = s;
    }
}

namespace {

struct SelectionFixture {
    std::vector<CameraView> cams;
    ImageCollection views;
    Segment3D gt;

    SelectionFixture() : gt(V3D(-0.5, 0.1, 0.0), V3D(0.6, -0.2, 0.3)) {
        for (int i = 0; i < 5; ++i) {
            const double a = 0.35 * (i - 2);
            cams.push_back(linemap::testing::look_at(i, V3D(6 * std::sin(a), 0.5 * (i % 2), -6 * std::cos(a)),
                                                     V3D::Zero()));
        }
        views = ImageCollection(cams);
    }

    Proposal proposal(int match_img, const Segment3D& seg) const {
        const CameraView& ref = views.view(0);
        Proposal p;
        p.segment = seg;
        p.depths = V2D(ref.depth(seg.e1), ref.depth(seg.e2));
        p.source = ProposalSource::LineLine;
        p.match = MatchRef{match_img, 0};
        p.match_segment = linemap::testing::project(gt, views.view(match_img));
        return p;
    }

    // Segment on the reference rays of gt, with the first endpoint pushed in depth.
    Segment3D perturbed(double rel) const {
        const CameraView& ref = views.view(0);
        const V3D c = ref.center();
        return Segment3D(c + (1.0 + rel) * (gt.e1 - c), gt.e2);
    }
};

}  // namespace

TEST_CASE("selection_score basics") {
    SelectionFixture f;
    const Proposal a = f.proposal(1, f.gt);
    const Proposal b = f.proposal(2, f.gt);
    CHECK(selection_score(a, b, f.views.view(2), ScoringConfig{}) == doctest::Approx(1.0));
    const Proposal far = f.proposal(2, f.perturbed(0.2));
    CHECK(selection_score(a, far, f.views.view(2), ScoringConfig{}) == 0.0);
}

TEST_CASE("select_best") {
    SelectionFixture f;
    std::vector<Proposal> props;
    for (int img = 1; img <= 3; ++img)
        props.push_back(f.proposal(img, f.gt));
    props.push_back(f.proposal(4, f.perturbed(0.3)));
    const auto sel = select_best(props, f.views, ScoringConfig{});
    REQUIRE(sel);
    CHECK(sel->score == doctest::Approx(2.0));
    CHECK(props[sel->index].match.image_id == 1);

    // invariant to ordering
    std::vector<Proposal> rev(props.rbegin(), props.rend());
    const auto sel2 = select_best(rev, f.views, ScoringConfig{});
    REQUIRE(sel2);
    CHECK(rev[sel2->index].match == props[sel->index].match);
    CHECK(sel2->score == sel->score);

    // a single neighbor can contribute at most 1
    std::vector<Proposal> one = {f.proposal(1, f.gt), f.proposal(1, f.gt)};
    CHECK_FALSE(select_best(one, f.views, ScoringConfig{}));

    std::vector<Proposal> gated = {f.proposal(1, f.gt), f.proposal(2, f.perturbed(0.3)), f.proposal(3, f.perturbed(-0.3))};
    CHECK_FALSE(select_best(gated, f.views, ScoringConfig{}));
}

TEST_CASE("three neighbors with the GT proposal give score 3") {
    SelectionFixture f;
    std::vector<Proposal> props;
    for (int img = 1; img <= 4; ++img)
        props.push_back(f.proposal(img, f.gt));
    const auto sel = select_best(props, f.views, ScoringConfig{});
    REQUIRE(sel);
    CHECK(sel->score == doctest::Approx(3.0));
}

TEST_CASE("scores are scale invariant") {
    SelectionFixture f;
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-0.02, 0.02);
    for (double s : {1e-3, 1e3}) {
        std::vector<CameraView> scaled;
        for (const CameraView& c : f.cams)
            scaled.emplace_back(c.image_id(), c.K(), c.R(), s * c.t(), c.width(), c.height());
        const ImageCollection sv(scaled);
        for (int t = 0; t < 50; ++t) {
            const Proposal a = f.proposal(1, f.perturbed(u(rng)));
            const Proposal b = f.proposal(2, f.perturbed(u(rng)));
            Proposal as = a, bs = b;
            as.segment = Segment3D(s * a.segment.e1, s * a.segment.e2);
            bs.segment = Segment3D(s * b.segment.e1, s * b.segment.e2);
            as.depths *= s;
            bs.depths *= s;
            CHECK(std::abs(selection_score(a, b, f.views.view(2), ScoringConfig{}) -
                           selection_score(as, bs, sv.view(2), ScoringConfig{})) < 1e-12);
            const TrackCandidate ta{a.segment, &f.views.view(1), linemap::testing::project(a.segment, f.views.view(1))};
            const TrackCandidate tb{b.segment, &f.views.view(2), linemap::testing::project(b.segment, f.views.view(2))};
            const TrackCandidate tas{as.segment, &sv.view(1), ta.observation};
            const TrackCandidate tbs{bs.segment, &sv.view(2), tb.observation};
            CHECK(std::abs(track_score(ta, tb, ScoringConfig{}) - track_score(tas, tbs, ScoringConfig{})) < 1e-12);
        }
    }
}

TEST_CASE("track_score") {
    SelectionFixture f;
    const TrackCandidate a{f.gt, &f.views.view(1), linemap::testing::project(f.gt, f.views.view(1))};
    const TrackCandidate b{f.gt, &f.views.view(2), linemap::testing::project(f.gt, f.views.view(2))};
    CHECK(track_score(a, b, ScoringConfig{}) == doctest::Approx(1.0));
    CHECK(track_score(a, b, ScoringConfig{}) == doctest::Approx(track_score(b, a, ScoringConfig{})));
    const Segment3D other(V3D(0.5, 0.5, 0.5), V3D(0.5, -0.5, 0.5));
    const TrackCandidate c{other, &f.views.view(2), linemap::testing::project(other, f.views.view(2))};
    CHECK(track_score(a, c, ScoringConfig{}) == 0.0);
}
