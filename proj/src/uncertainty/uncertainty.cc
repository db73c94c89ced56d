#include "linemap/uncertainty/uncertainty.h"

#include "linemap/base/parallel.h"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

namespace linemap::uncertainty {

namespace {

using M32 = Eigen::Matrix<double, 3, 2>;

struct Ray {
    V3D d;      // unit direction in world coordinates
    M32 d_px;   // derivative of d w.r.t. the pixel
};

Ray make_ray(const CameraView& view, const V2D& px) {
    const M3D A = view.R().transpose() * view.K_inv();
    const V3D x = A * px.homogeneous();
    const double n = x.norm();
    Ray r;
    r.d = x / n;
    const M3D Jd = (M3D::Identity() - r.d * r.d.transpose()) / n;
    r.d_px = Jd * A.leftCols<2>();
    return r;
}

// Midpoint of the closest points of two rays, with derivatives w.r.t. both directions.
V3D midpoint(const V3D& cr, const V3D& dr, const V3D& cm, const V3D& dm, M3D* dX_ddr, M3D* dX_ddm) {
    const V3D delta = cm - cr;
    const double c = dr.dot(dm);
    Eigen::Matrix2d A;
    A << 1.0, -c, -c, 1.0;
    if (!(std::abs(1.0 - c * c) > 1e-14))
        throw DegenerateError("parallel rays in endpoint triangulation");
    const Eigen::Matrix2d Ainv = A.inverse();
    const V2D b(dr.dot(delta), -dm.dot(delta));
    const V2D lam = Ainv * b;
    if (dX_ddr && dX_ddm) {
        // d(lambda) = A^-1 (db - dA lambda)
        Eigen::Matrix<double, 2, 3> dl_ddr, dl_ddm;
        for (int k = 0; k < 3; ++k) {
            Eigen::Matrix2d dA;
            dA << 0.0, -dm(k), -dm(k), 0.0;
            dl_ddr.col(k) = Ainv * (V2D(delta(k), 0.0) - dA * lam);
            dA << 0.0, -dr(k), -dr(k), 0.0;
            dl_ddm.col(k) = Ainv * (V2D(0.0, -delta(k)) - dA * lam);
        }
        *dX_ddr = 0.5 * (dr * dl_ddr.row(0) + lam(0) * M3D::Identity() + dm * dl_ddr.row(1));
        *dX_ddm = 0.5 * (dr * dl_ddm.row(0) + dm * dl_ddm.row(1) + lam(1) * M3D::Identity());
    }
    return 0.5 * (cr + lam(0) * dr + cm + lam(1) * dm);
}

// Intersection of the ref ray with the plane spanned by the two match rays.
V3D ray_plane(const V3D& cr, const V3D& dr, const V3D& cm, const V3D& d1, const V3D& d2, M3D* dX_ddr, M3D* dX_dd1,
              M3D* dX_dd2) {
    M3D M;
    M.col(0) = dr;
    M.col(1) = -d1;
    M.col(2) = -d2;
    Eigen::FullPivLU<M3D> lu(M);
    if (!(std::abs(M.determinant()) > 1e-12) || !lu.isInvertible())
        throw DegenerateError("singular system in line triangulation");
    const M3D Minv = lu.inverse();
    const V3D y = Minv * (cm - cr);
    if (dX_ddr) {
        // d(y) = -M^-1 dM y
        const Eigen::RowVector3d l0 = Minv.row(0);
        *dX_ddr = dr * (-y(0) * l0) + y(0) * M3D::Identity();
        *dX_dd1 = dr * (y(1) * l0);
        *dX_dd2 = dr * (y(2) * l0);
    }
    return cr + y(0) * dr;
}

TriangulationCovariance finish(const Vec6& X, const Mat68& J) {
    TriangulationCovariance out;
    out.segment = Segment3D(X.head<3>(), X.tail<3>());
    out.jacobian = J;
    out.sigma = J * J.transpose();
    out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat6> eig(out.sigma, Eigen::EigenvaluesOnly);
    out.uncertainty = eig.eigenvalues()(5);
    return out;
}

Vec6 endpoints_impl(const CameraView& ref, const CameraView& match, const Vec8& px, Mat68* J) {
    Vec6 X;
    if (J)
        J->setZero();
    for (int i = 0; i < 2; ++i) {
        const Ray r = make_ray(ref, px.segment<2>(2 * i));
        const Ray m = make_ray(match, px.segment<2>(4 + 2 * i));
        M3D dr, dm;
        X.segment<3>(3 * i) = midpoint(ref.center(), r.d, match.center(), m.d, &dr, &dm);
        if (J) {
            J->block<3, 2>(3 * i, 2 * i) = dr * r.d_px;
            J->block<3, 2>(3 * i, 4 + 2 * i) = dm * m.d_px;
        }
    }
    return X;
}

Vec6 line_impl(const CameraView& ref, const CameraView& match, const Vec8& px, Mat68* J) {
    Vec6 X;
    if (J)
        J->setZero();
    const Ray m1 = make_ray(match, px.segment<2>(4));
    const Ray m2 = make_ray(match, px.segment<2>(6));
    for (int i = 0; i < 2; ++i) {
        const Ray r = make_ray(ref, px.segment<2>(2 * i));
        M3D dr, d1, d2;
        X.segment<3>(3 * i) = ray_plane(ref.center(), r.d, match.center(), m1.d, m2.d, &dr, &d1, &d2);
        if (J) {
            J->block<3, 2>(3 * i, 2 * i) = dr * r.d_px;
            J->block<3, 2>(3 * i, 4) = d1 * m1.d_px;
            J->block<3, 2>(3 * i, 6) = d2 * m2.d_px;
        }
    }
    return X;
}

}  // namespace

Vec8 stack_pixels(const Segment2D& ref, const Segment2D& match) {
    Vec8 p;
    p << ref.p1, ref.p2, match.p1, match.p2;
    return p;
}

Vec6 triangulate_endpoints(const CameraView& ref, const CameraView& match, const Vec8& pixels) {
    return endpoints_impl(ref, match, pixels, nullptr);
}

Vec6 triangulate_line(const CameraView& ref, const CameraView& match, const Vec8& pixels) {
    return line_impl(ref, match, pixels, nullptr);
}

TriangulationCovariance covariance_endpoint_triangulation(const SegmentObservation& ref,
                                                          const SegmentObservation& match) {
    Mat68 J;
    const Vec6 X = endpoints_impl(*ref.view, *match.view, stack_pixels(ref.segment, match.segment), &J);
    return finish(X, J);
}

TriangulationCovariance covariance_line_triangulation(const SegmentObservation& ref, const SegmentObservation& match) {
    Mat68 J;
    const Vec6 X = line_impl(*ref.view, *match.view, stack_pixels(ref.segment, match.segment), &J);
    if (!X.allFinite() || !J.allFinite())
        throw DegenerateError("non-finite line triangulation");
    return finish(X, J);
}

std::vector<DegeneracyRow> run_degeneracy_experiment(const DegeneracyConfig& config) {
    std::vector<double> angles = config.angles_deg;
    if (angles.empty())
        for (int a = 1; a <= 90; ++a)
            angles.push_back(a);
    if (config.samples <= 0)
        throw InvalidInputError("degeneracy experiment needs a positive sample count");
    M3D K;
    K << config.focal, 0.0, 500.0, 0.0, config.focal, 500.0, 0.0, 0.0, 1.0;
    const double hb = 0.5 * config.baseline;
    const CameraView left(0, K, M3D::Identity(), V3D(hb, 0.0, 0.0), 1000, 1000);
    const CameraView right(1, K, M3D::Identity(), V3D(-hb, 0.0, 0.0), 1000, 1000);

    // Same segment centers and lengths for every angle.
    struct Sample {
        V2D center;
        double length;
    };
    std::vector<Sample> samples(config.samples);
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> pos(-config.range, config.range);
    std::uniform_real_distribution<double> len(config.min_length, config.max_length);
    for (Sample& s : samples) {
        s.center = V2D(pos(rng), pos(rng));
        s.length = len(rng);
    }

    std::vector<DegeneracyRow> rows;
    std::vector<double> ue(samples.size()), ul(samples.size());
    for (double angle : angles) {
        const double a = deg2rad(angle);
        const V3D dir(std::cos(a), std::sin(a), 0.0);
        parallel_for(samples.size(), config.threads, [&](size_t i) {
            const V3D c(samples[i].center.x(), samples[i].center.y(), config.plane_z);
            const Segment3D seg(c - 0.5 * samples[i].length * dir, c + 0.5 * samples[i].length * dir);
            const SegmentObservation r{&left, Segment2D(left.project(seg.e1), left.project(seg.e2))};
            const SegmentObservation m{&right, Segment2D(right.project(seg.e1), right.project(seg.e2))};
            const double inf = std::numeric_limits<double>::infinity();
            try {
                ue[i] = covariance_endpoint_triangulation(r, m).uncertainty;
            } catch (const DegenerateError&) {
                ue[i] = inf;
            }
            try {
                ul[i] = covariance_line_triangulation(r, m).uncertainty;
            } catch (const DegenerateError&) {
                ul[i] = inf;
            }
        });
        auto median = [](std::vector<double> v) {
            const size_t mid = v.size() / 2;
            std::nth_element(v.begin(), v.begin() + mid, v.end());
            if (v.size() % 2 == 1)
                return v[mid];
            const double hi = v[mid];
            const double lo = *std::max_element(v.begin(), v.begin() + mid);
            return 0.5 * (lo + hi);
        };
        rows.push_back({angle, median(ue), median(ul)});
    }
    return rows;
}

void write_degeneracy_csv(std::ostream& os, const std::vector<DegeneracyRow>& rows) {
    os << "angle_deg,median_endpoint,median_line\n";
    char buf[128];
    for (const DegeneracyRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g\n", r.angle_deg, r.median_endpoint, r.median_line);
        os << buf;
    }
}

}  // namespace linemap::uncertainty
