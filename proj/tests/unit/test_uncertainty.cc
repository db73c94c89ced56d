#include "doctest.h"
#include "synthetic_pairs.h"

#include "linemap/uncertainty/uncertainty.h"

#include <Eigen/Eigenvalues>

#include <sstream>

using namespace linemap;
using namespace linemap::uncertainty;

namespace {

template <typename F>
Mat68 numeric_jacobian(F f, const Vec8& px) {
    const double h = 1e-5;
    Mat68 J;
    for (int k = 0; k < 8; ++k) {
        Vec8 a = px, b = px;
        a(k) += h;
        b(k) -= h;
        J.col(k) = (f(a) - f(b)) / (2 * h);
    }
    return J;
}

double rel_err(const Mat68& a, const Mat68& n) {
    return (a - n).cwiseAbs().maxCoeff() / std::max(1e-12, n.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("endpoint and line triangulation recover GT") {
    std::mt19937_64 rng(71);
    for (int k = 0; k < 50; ++k) {
        const auto c = linemap::testing::random_two_view(rng);
        const Vec8 px = stack_pixels(c.ref_seg, c.match_seg);
        const Vec6 Xe = triangulate_endpoints(c.ref, c.match, px);
        const Vec6 Xl = triangulate_line(c.ref, c.match, px);
        CHECK((Xe.head<3>() - c.gt.e1).norm() < 1e-8);
        CHECK((Xe.tail<3>() - c.gt.e2).norm() < 1e-8);
        CHECK((Xl.head<3>() - c.gt.e1).norm() < 1e-8);
        CHECK((Xl.tail<3>() - c.gt.e2).norm() < 1e-8);
    }
}

TEST_CASE("covariance Jacobians agree with finite differences") {
    std::mt19937_64 rng(72);
    double worst_e = 0.0, worst_l = 0.0;
    for (int k = 0; k < 200; ++k) {
        const auto c = linemap::testing::random_two_view(rng);
        const Vec8 px = stack_pixels(c.ref_seg, c.match_seg);
        const auto ce = covariance_endpoint_triangulation(c.ref_obs(), c.match_obs());
        const auto cl = covariance_line_triangulation(c.ref_obs(), c.match_obs());
        const Mat68 Je = numeric_jacobian([&](const Vec8& p) { return triangulate_endpoints(c.ref, c.match, p); }, px);
        const Mat68 Jl = numeric_jacobian([&](const Vec8& p) { return triangulate_line(c.ref, c.match, p); }, px);
        worst_e = std::max(worst_e, rel_err(ce.jacobian, Je));
        worst_l = std::max(worst_l, rel_err(cl.jacobian, Jl));
    }
    CHECK(worst_e < 1e-4);
    CHECK(worst_l < 1e-4);
}

TEST_CASE("covariance is symmetric PSD") {
    std::mt19937_64 rng(73);
    for (int k = 0; k < 50; ++k) {
        const auto c = linemap::testing::random_two_view(rng);
        for (const auto& cov : {covariance_endpoint_triangulation(c.ref_obs(), c.match_obs()),
                                covariance_line_triangulation(c.ref_obs(), c.match_obs())}) {
            CHECK((cov.sigma - cov.sigma.transpose()).cwiseAbs().maxCoeff() < 1e-10);
            Eigen::SelfAdjointEigenSolver<Mat6> eig(cov.sigma);
            CHECK(eig.eigenvalues().minCoeff() > -1e-10);
            CHECK(cov.uncertainty == doctest::Approx(eig.eigenvalues().maxCoeff()));
        }
    }
}

TEST_CASE("endpoint covariance is symmetric in the two views") {
    std::mt19937_64 rng(74);
    for (int k = 0; k < 50; ++k) {
        const auto c = linemap::testing::random_two_view(rng);
        const auto a = covariance_endpoint_triangulation(c.ref_obs(), c.match_obs());
        const auto b = covariance_endpoint_triangulation(c.match_obs(), c.ref_obs());
        Eigen::SelfAdjointEigenSolver<Mat6> ea(a.sigma), eb(b.sigma);
        CHECK((ea.eigenvalues() - eb.eigenvalues()).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, a.uncertainty));
    }
}

TEST_CASE("longer focal length lowers uncertainty") {
    const Segment3D gt(V3D(-0.5, 0.3, 10), V3D(0.4, -0.6, 10));
    auto run = [&](double f) {
        const M3D K = linemap::testing::make_K(f, 500, 500);
        const CameraView a(0, K, M3D::Identity(), V3D(2, 0, 0), 1000, 1000);
        const CameraView b(1, K, M3D::Identity(), V3D(-2, 0, 0), 1000, 1000);
        const SegmentObservation ra{&a, linemap::testing::project(gt, a)};
        const SegmentObservation rb{&b, linemap::testing::project(gt, b)};
        return std::make_pair(covariance_endpoint_triangulation(ra, rb).uncertainty,
                              covariance_line_triangulation(ra, rb).uncertainty);
    };
    const auto lo = run(700), hi = run(1400);
    CHECK(hi.first < lo.first);
    CHECK(hi.second < lo.second);
}

TEST_CASE("singular line system is reported") {
    const M3D K = linemap::testing::make_K(700, 500, 500);
    const CameraView a(0, K, M3D::Identity(), V3D(2, 0, 0), 1000, 1000);
    const CameraView b(1, K, M3D::Identity(), V3D(-2, 0, 0), 1000, 1000);
    const Segment3D gt(V3D(-0.5, 0.2, 10), V3D(0.5, 0.2, 10));  // along the baseline
    const SegmentObservation ra{&a, linemap::testing::project(gt, a)};
    const SegmentObservation rb{&b, linemap::testing::project(gt, b)};
    CHECK_THROWS_AS(covariance_line_triangulation(ra, rb), DegenerateError);
    CHECK_NOTHROW(covariance_endpoint_triangulation(ra, rb));
}

TEST_CASE("degeneracy sweep trend") {
    DegeneracyConfig cfg;
    cfg.samples = 1000;
    cfg.seed = 3;
    const auto rows = run_degeneracy_experiment(cfg);
    REQUIRE(rows.size() == 90);
    // line uncertainty does not increase with the angle
    for (size_t i = 1; i < rows.size(); ++i)
        CHECK(rows[i].median_line <= rows[i - 1].median_line * (1.0 + 1e-9));
    double emin = 1e300, emax = 0.0;
    for (const auto& r : rows) {
        emin = std::min(emin, r.median_endpoint);
        emax = std::max(emax, r.median_endpoint);
    }
    CHECK(emax / emin < 2.0);
    CHECK(rows[1].median_line / rows[89].median_line > 100.0);
    CHECK(rows[89].median_line / rows[89].median_endpoint < 10.0);

    std::ostringstream os;
    write_degeneracy_csv(os, {rows[0], rows[89]});
    const std::string s = os.str();
    CHECK(s.rfind("angle_deg,median_endpoint,median_line\n1,", 0) == 0);
    CHECK(s.find("\n90,") != std::string::npos);

    // rotating the rig about the viewing axis leaves uncertainties unchanged
    DegeneracyConfig one = cfg;
    one.angles_deg = {30.0};
    one.samples = 200;
    const auto r1 = run_degeneracy_experiment(one);
    one.threads = 3;
    const auto r2 = run_degeneracy_experiment(one);
    CHECK(r1[0].median_line == r2[0].median_line);
    CHECK(r1[0].median_endpoint == r2[0].median_endpoint);
}

TEST_CASE("uncertainty is invariant to a rigid motion of the rig") {
    std::mt19937_64 rng(75);
    const auto c = linemap::testing::random_two_view(rng);
    const M3D Q = linemap::testing::random_rotation(rng);
    const V3D s = linemap::testing::random_vec(rng);
    // world -> Q world + s; camera poses compensate
    auto move = [&](const CameraView& v) {
        return CameraView(v.image_id(), v.K(), v.R() * Q.transpose(), v.t() - v.R() * Q.transpose() * s, v.width(),
                          v.height());
    };
    const CameraView r2 = move(c.ref), m2 = move(c.match);
    const SegmentObservation a{&r2, c.ref_seg}, b{&m2, c.match_seg};
    CHECK(covariance_line_triangulation(a, b).uncertainty ==
          doctest::Approx(covariance_line_triangulation(c.ref_obs(), c.match_obs()).uncertainty).epsilon(1e-8));
    CHECK(covariance_endpoint_triangulation(a, b).uncertainty ==
          doctest::Approx(covariance_endpoint_triangulation(c.ref_obs(), c.match_obs()).uncertainty).epsilon(1e-8));
}
