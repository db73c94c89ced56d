#include "doctest.h"
#include "test_util.h"

#include "linemap/depthfit/depthfit.h"

#include <sstream>

using namespace linemap;
using namespace linemap::depthfit;

namespace {

// z-depth of the plane n.X = c seen from the view at every pixel.
DepthMap render_plane(const CameraView& v, const V3D& n, double c) {
    DepthMap d(v.width(), v.height());
    const V3D C = v.center();
    for (int y = 0; y < v.height(); ++y) {
        for (int x = 0; x < v.width(); ++x) {
            const V3D ray = v.R().transpose() * v.normalized(V2D(x, y));  // z = 1 in camera frame
            const double den = n.dot(ray);
            if (std::abs(den) < 1e-12)
                continue;
            const double s = (c - n.dot(C)) / den;
            if (s > 0)
                d.at(x, y) = static_cast<float>(s);
        }
    }
    return d;
}

double seg_error(const Segment3D& a, const Segment3D& b) {
    return std::min(std::max((a.e1 - b.e1).norm(), (a.e2 - b.e2).norm()),
                    std::max((a.e1 - b.e2).norm(), (a.e2 - b.e1).norm()));
}

}  // namespace

TEST_CASE("bilinear inverse-depth sampling") {
    DepthMap d(3, 3, {1, 2, 4, 1, 2, 4, 1, 2, 4});
    CHECK(*d.sample(V2D(0, 0)) == doctest::Approx(1.0));
    CHECK(*d.sample(V2D(0.5, 1)) == doctest::Approx(1.0 / (0.5 * 1.0 + 0.5 * 0.5)));
    CHECK_FALSE(d.sample(V2D(-0.1, 0)).has_value());
    CHECK_FALSE(d.sample(V2D(2.5, 0)).has_value());
    d.at(1, 1) = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(d.sample(V2D(0.5, 0.5)).has_value());
    CHECK(d.sample(V2D(0, 2)).has_value());
}

TEST_CASE("depth map IO round-trip") {
    DepthMap d(4, 2, {1, 2, 3, 4, 5, 6, 7, std::numeric_limits<float>::quiet_NaN()});
    std::stringstream ss;
    write_depth_map(ss, d);
    CHECK(ss.str().size() == 8 + 8 * 4);
    const DepthMap r = read_depth_map(ss);
    CHECK(r.width() == 4);
    CHECK(r.height() == 2);
    for (int i = 0; i < 7; ++i)
        CHECK(r.values()[i] == d.values()[i]);
    CHECK(std::isnan(r.values()[7]));
    std::stringstream bad(ss.str().substr(0, 20));
    CHECK_THROWS_AS(read_depth_map(bad), InvalidInputError);
}

TEST_CASE("exact planar depth gives the GT segment") {
    std::mt19937_64 rng(81);
    const CameraView cam = linemap::testing::look_at(0, V3D(0.5, 0.3, -4), V3D(0, 0, 1), 500, 640, 480);
    const DepthMap d = render_plane(cam, V3D(0, 0, 1), 1.0);
    for (int k = 0; k < 20; ++k) {
        const Segment3D gt(V3D(-1 + 2 * k / 20.0, -0.8, 1.0), V3D(0.9, 0.7 - k * 0.05, 1.0));
        const Segment2D s = linemap::testing::project(gt, cam);
        const DepthFitResult r = fit_line_from_depth(s, d, cam);
        CHECK(seg_error(r.segment, gt) < 1e-6);
        CHECK(static_cast<int>(r.inliers.size()) == r.num_samples);
    }
}

TEST_CASE("foreground occluders are rejected") {
    std::mt19937_64 rng(82);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const CameraView cam = linemap::testing::look_at(0, V3D(0.2, -0.3, -4), V3D(0, 0, 1), 500, 640, 480);
    const DepthMap clean = render_plane(cam, V3D(0, 0, 1), 1.0);
    int ok = 0;
    const int trials = 50;
    for (int k = 0; k < trials; ++k) {
        const Segment3D gt(V3D(-1 + 0.4 * u(rng), -1 + 0.5 * u(rng), 1.0), V3D(0.6 + 0.4 * u(rng), 0.5 + 0.5 * u(rng), 1.0));
        const Segment2D s = linemap::testing::project(gt, cam);
        DepthMap d = clean;
        // a foreground band over 30% of the segment
        const double t0 = 0.7 * u(rng);
        for (int y = 0; y < cam.height(); ++y) {
            for (int x = 0; x < cam.width(); ++x) {
                const V2D p(x, y);
                const V2D dir = s.direction();
                const double t = (p - s.p1).dot(dir) / s.length();
                if (t >= t0 && t <= t0 + 0.3)
                    d.at(x, y) = 0.6f * d.at(x, y);
            }
        }
        const DepthFitResult r = fit_line_from_depth(s, d, cam);
        if (r.line.distance(gt.e1) < r.threshold && r.line.distance(gt.e2) < r.threshold)
            ++ok;
    }
    CHECK(ok == trials);
}

TEST_CASE("invalid depths are reported") {
    const CameraView cam = linemap::testing::look_at(0, V3D(0, 0, -4), V3D(0, 0, 1), 500, 640, 480);
    const DepthMap empty(640, 480);
    const Segment2D s(V2D(100, 100), V2D(300, 200));
    CHECK_THROWS_AS(fit_line_from_depth(s, empty, cam), DegenerateError);

    // random depths do not support a line
    std::mt19937_64 rng(83);
    std::uniform_real_distribution<float> u(1.0f, 10.0f);
    DepthMap noise(640, 480);
    for (int y = 0; y < 480; ++y)
        for (int x = 0; x < 640; ++x)
            noise.at(x, y) = u(rng);
    CHECK_THROWS_AS(fit_line_from_depth(s, noise, cam), DegenerateError);
}

TEST_CASE("depth fitting is scale invariant") {
    const CameraView cam = linemap::testing::look_at(0, V3D(0.5, 0.3, -4), V3D(0, 0, 1), 500, 640, 480);
    const Segment3D gt(V3D(-0.8, -0.5, 1.0), V3D(0.7, 0.6, 1.0));
    const Segment2D s = linemap::testing::project(gt, cam);
    DepthMap d = render_plane(cam, V3D(0, 0, 1), 1.0);
    for (int y = 100; y < 200; ++y)
        for (int x = 0; x < 640; ++x)
            d.at(x, y) *= 0.5f;
    const double scale = 1000.0;
    const CameraView big(0, cam.K(), cam.R(), cam.t() * scale, cam.width(), cam.height());
    DepthMap db = d;
    for (int y = 0; y < 480; ++y)
        for (int x = 0; x < 640; ++x)
            db.at(x, y) = static_cast<float>(d.at(x, y) * scale);
    const DepthFitResult a = fit_line_from_depth(s, d, cam);
    const DepthFitResult b = fit_line_from_depth(s, db, big);
    CHECK(a.inliers == b.inliers);
    CHECK((b.segment.e1 - scale * a.segment.e1).norm() < 1e-6 * scale);
    CHECK((b.segment.e2 - scale * a.segment.e2).norm() < 1e-6 * scale);
    CHECK(b.threshold == doctest::Approx(scale * a.threshold));
}
