#include "linemap/triangulation/triangulation.h"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace linemap::triangulation {

namespace {

// Reference-camera frame quantities for a two-view line pair.
struct TwoView {
    const CameraView* ref = nullptr;
    M3D R;    // ref camera -> match camera
    V3D t;
    V3D x1, x2;
    V3D l;    // unit normal of the back-projected match plane (match camera frame)
    bool valid = true;
};

TwoView make_two_view(const SegmentObservation& ref, const SegmentObservation& match) {
    TwoView tv;
    tv.ref = ref.view;
    tv.R = match.view->R() * ref.view->R().transpose();
    tv.t = match.view->t() - tv.R * ref.view->t();
    tv.x1 = ref.view->normalized(ref.segment.p1);
    tv.x2 = ref.view->normalized(ref.segment.p2);
    const V3D l = match.view->normalized(match.segment.p1).cross(match.view->normalized(match.segment.p2));
    const double n = l.norm();
    tv.valid = n > 0.0 && std::isfinite(n) && tv.x1.cross(tv.x2).norm() > 0.0;
    tv.l = tv.valid ? V3D(l / n) : V3D::Zero();
    return tv;
}

V3D to_world(const CameraView& view, const V3D& Xc) {
    return view.R().transpose() * (Xc - view.t());
}

TriResult finish(const TwoView& tv, double l1, double l2, const CameraView* match_view = nullptr) {
    TriResult res;
    res.depths = V2D(l1, l2);
    if (!std::isfinite(l1) || !std::isfinite(l2)) {
        res.status = TriStatus::Degenerate;
        return res;
    }
    const V3D X1 = l1 * tv.x1, X2 = l2 * tv.x2;
    res.segment = Segment3D(to_world(*tv.ref, X1), to_world(*tv.ref, X2));
    if (!(l1 > 0.0) || !(l2 > 0.0)) {
        res.status = TriStatus::CheiralityFailure;
        return res;
    }
    if (match_view) {
        if (!((tv.R * X1 + tv.t).z() > 0.0) || !((tv.R * X2 + tv.t).z() > 0.0)) {
            res.status = TriStatus::CheiralityFailure;
            return res;
        }
    }
    if (!(res.segment.length() > 0.0)) {
        res.status = TriStatus::Degenerate;
        return res;
    }
    res.status = TriStatus::Ok;
    return res;
}

TriResult failure(TriStatus s) {
    TriResult r;
    r.status = s;
    return r;
}

// Polynomials in ascending coefficient order.
using Poly = std::vector<double>;

Poly padd(const Poly& a, const Poly& b) {
    Poly r(std::max(a.size(), b.size()), 0.0);
    for (size_t i = 0; i < a.size(); ++i)
        r[i] += a[i];
    for (size_t i = 0; i < b.size(); ++i)
        r[i] += b[i];
    return r;
}

Poly pmul(const Poly& a, const Poly& b) {
    Poly r(a.size() + b.size() - 1, 0.0);
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j)
            r[i + j] += a[i] * b[j];
    return r;
}

Poly pscale(const Poly& a, double s) {
    Poly r = a;
    for (double& c : r)
        c *= s;
    return r;
}

double peval(const Poly& p, double x) {
    double v = 0.0;
    for (size_t i = p.size(); i-- > 0;)
        v = v * x + p[i];
    return v;
}

double pderiv_eval(const Poly& p, double x) {
    double v = 0.0;
    for (size_t i = p.size(); i-- > 1;)
        v = v * x + static_cast<double>(i) * p[i];
    return v;
}

std::vector<double> real_roots(const Poly& p) {
    double cmax = 0.0;
    for (double c : p)
        cmax = std::max(cmax, std::abs(c));
    if (cmax == 0.0)
        return {};
    int deg = static_cast<int>(p.size()) - 1;
    while (deg > 0 && std::abs(p[deg]) <= 1e-13 * cmax)
        --deg;
    if (deg == 0)
        return {};
    std::vector<double> roots;
    if (deg == 1) {
        roots.push_back(-p[0] / p[1]);
    } else {
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(deg, deg);
        for (int i = 1; i < deg; ++i)
            C(i, i - 1) = 1.0;
        for (int i = 0; i < deg; ++i)
            C(i, deg - 1) = -p[i] / p[deg];
        Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
        for (int i = 0; i < deg; ++i) {
            const std::complex<double> z = es.eigenvalues()(i);
            if (std::abs(z.imag()) <= 1e-8 * std::abs(z))
                roots.push_back(z.real());
        }
    }
    for (double& r : roots) {
        for (int it = 0; it < 4; ++it) {
            const double f = peval(p, r);
            const double df = pderiv_eval(p, r);
            if (df == 0.0)
                break;
            const double cand = r - f / df;
            if (!(std::abs(peval(p, cand)) < std::abs(f)))
                break;
            r = cand;
        }
    }
    return roots;
}

double quad_cost(const M2D& A, const V2D& b, const V2D& l) {
    return l.dot(A * l) + b.dot(l);
}

// Residual system of the two endpoint-plane constraints: r_i = a_i * lambda_i + c.
void line_residual_terms(const TwoView& tv, M2D* A, V2D* b) {
    const double a1 = tv.l.dot(tv.R * tv.x1);
    const double a2 = tv.l.dot(tv.R * tv.x2);
    const double c = tv.l.dot(tv.t);
    *A = V2D(a1 * a1, a2 * a2).asDiagonal();
    *b = 2.0 * c * V2D(a1, a2);
}

bool match_cheiral(const TwoView& tv, const V2D& lam) {
    return (tv.R * (lam(0) * tv.x1) + tv.t).z() > 0.0 && (tv.R * (lam(1) * tv.x2) + tv.t).z() > 0.0;
}

}  // namespace

std::string to_string(TriStatus status) {
    switch (status) {
        case TriStatus::Ok: return "ok";
        case TriStatus::WeaklyDegenerate: return "weakly degenerate";
        case TriStatus::FullyDegenerate: return "fully degenerate";
        case TriStatus::CheiralityFailure: return "cheirality failure";
        case TriStatus::Degenerate: return "degenerate";
        case TriStatus::InsufficientData: return "insufficient data";
    }
    return "unknown";
}

std::string to_string(ProposalSource source) {
    switch (source) {
        case ProposalSource::LineLine: return "line_line";
        case ProposalSource::MultiPoint: return "multi_point";
        case ProposalSource::LinePoint: return "line_point";
        case ProposalSource::LineVP: return "line_vp";
        case ProposalSource::Depth: return "depth";
    }
    return "unknown";
}

Degeneracy check_degeneracy(const V3D& ray, const V3D& plane_normal, double min_angle) {
    const double s = std::abs(ray.normalized().dot(plane_normal.normalized()));
    const double angle = std::asin(std::min(1.0, s));
    return angle < min_angle ? Degeneracy::Degenerate : Degeneracy::Ok;
}

TriResult triangulate_algebraic(const SegmentObservation& ref, const SegmentObservation& match, double min_angle) {
    const TwoView tv = make_two_view(ref, match);
    if (!tv.valid)
        return failure(TriStatus::Degenerate);
    const V3D r1 = tv.R * tv.x1, r2 = tv.R * tv.x2;
    const bool d1 = check_degeneracy(r1, tv.l, min_angle) == Degeneracy::Degenerate;
    const bool d2 = check_degeneracy(r2, tv.l, min_angle) == Degeneracy::Degenerate;
    if (d1 && d2)
        return failure(TriStatus::FullyDegenerate);
    if (d1 || d2)
        return failure(TriStatus::WeaklyDegenerate);
    const double c = tv.l.dot(tv.t);
    return finish(tv, -c / tv.l.dot(r1), -c / tv.l.dot(r2), match.view);
}

double weak_epipolar_iou(const SegmentObservation& ref, const SegmentObservation& match) {
    const TwoView tv = make_two_view(ref, match);
    if (!tv.valid)
        return 0.0;
    const CameraView& mv = *match.view;
    const M3D F = mv.K_inv().transpose() * skew(tv.t) * tv.R * ref.view->K_inv();
    const V3D L = match.segment.line_coeffs();
    const V2D q1 = match.segment.p1, q2 = match.segment.p2;
    const V2D dq = q2 - q1;
    double s[2];
    int k = 0;
    for (const V2D& p : {ref.segment.p1, ref.segment.p2}) {
        const V3D e = F * p.homogeneous();
        const double en = e.head<2>().norm();
        if (!(en > 0.0))
            return 0.0;
        const V3D x = (e / en).cross(L);
        if (std::abs(x.z()) < 1e-9)
            return 0.0;
        const V2D xi = x.hnormalized();
        s[k++] = (xi - q1).dot(dq) / dq.squaredNorm();
    }
    const double lo = std::min(s[0], s[1]), hi = std::max(s[0], s[1]);
    const double inter = std::max(0.0, std::min(hi, 1.0) - std::max(lo, 0.0));
    const double uni = std::max(hi, 1.0) - std::min(lo, 0.0);
    return uni > 0.0 ? inter / uni : 0.0;
}

TriResult triangulate_multipoint(const SegmentObservation& ref, std::span<const V3D> points,
                                 const SegmentObservation* match) {
    if (points.size() < 2)
        return failure(TriStatus::InsufficientData);
    const auto line = fit_line_pca(points);
    if (!line)
        return failure(TriStatus::Degenerate);
    TwoView tv;
    if (match) {
        tv = make_two_view(ref, *match);
    } else {
        tv.ref = ref.view;
        tv.R = M3D::Identity();
        tv.t = V3D::Zero();
        tv.x1 = ref.view->normalized(ref.segment.p1);
        tv.x2 = ref.view->normalized(ref.segment.p2);
    }
    double lam[2];
    int k = 0;
    for (const V2D& px : {ref.segment.p1, ref.segment.p2}) {
        const PluckerLine ray = camera_ray(*ref.view, px);
        const auto p = closest_point_line_to_line(ray, *line);
        if (!p)
            return failure(TriStatus::Degenerate);
        lam[k++] = ref.view->depth(*p);
    }
    return finish(tv, lam[0], lam[1], match ? match->view : nullptr);
}

std::vector<V2D> solve_constrained_quadratic(const M2D& A, const V2D& b, const M2D& Q, const V2D& q) {
    // M(mu) = A + mu Q, entries as linear polynomials.
    const Poly m00{A(0, 0), Q(0, 0)}, m01{A(0, 1), Q(0, 1)}, m10{A(1, 0), Q(1, 0)}, m11{A(1, 1), Q(1, 1)};
    const Poly D = padd(pmul(m00, m11), pscale(pmul(m01, m10), -1.0));
    const Poly r0{b(0), q(0)}, r1{b(1), q(1)};
    // n = adj(M) (b + mu q)
    const Poly n0 = padd(pmul(m11, r0), pscale(pmul(m01, r1), -1.0));
    const Poly n1 = padd(pmul(pscale(m10, -1.0), r0), pmul(m00, r1));
    Poly nQn = padd(padd(pscale(pmul(n0, n0), Q(0, 0)), pscale(pmul(n0, n1), Q(0, 1) + Q(1, 0))),
                    pscale(pmul(n1, n1), Q(1, 1)));
    const Poly qn = padd(pscale(n0, q(0)), pscale(n1, q(1)));
    const Poly P = padd(nQn, pscale(pmul(D, qn), -2.0));

    double pmax = 0.0;
    for (double c : P)
        pmax = std::max(pmax, std::abs(c));
    std::vector<double> mus = real_roots(P);
    if (pmax == 0.0)
        mus.push_back(0.0);

    const double mscale = A.cwiseAbs().maxCoeff() + Q.cwiseAbs().maxCoeff();
    std::vector<V2D> out;
    for (double mu : mus) {
        const M2D M = A + mu * Q;
        const double det = M.determinant();
        const double dscale = M.cwiseAbs().maxCoeff();
        if (!(std::abs(det) > 1e-14 * dscale * dscale) || !(mscale > 0.0))
            continue;
        const V2D lam = -0.5 * M.inverse() * (b + mu * q);
        if (lam.allFinite())
            out.push_back(lam);
    }
    return out;
}

TriResult triangulate_line_point(const SegmentObservation& ref, const SegmentObservation& match, const V3D& point) {
    const TwoView tv = make_two_view(ref, match);
    if (!tv.valid)
        return failure(TriStatus::Degenerate);
    M2D A;
    V2D b;
    line_residual_terms(tv, &A, &b);
    const V3D p0 = ref.view->to_camera(point);
    const V3D n = tv.x1.cross(tv.x2).normalized();
    const double k = n.dot(tv.x1.cross(tv.x2));
    M2D Q;
    Q << 0.0, 0.5 * k, 0.5 * k, 0.0;
    const V2D q(-n.dot(tv.x1.cross(p0)), -n.dot(p0.cross(tv.x2)));

    const std::vector<V2D> sols = solve_constrained_quadratic(A, b, Q, q);
    bool found = false;
    V2D best = V2D::Zero();
    double best_cost = std::numeric_limits<double>::infinity();
    for (const V2D& lam : sols) {
        if (!(lam(0) > 0.0) || !(lam(1) > 0.0) || !match_cheiral(tv, lam))
            continue;
        const double cost = quad_cost(A, b, lam);
        const double tol = 1e-10 * std::max(std::abs(cost), std::abs(best_cost));
        if (!found || cost < best_cost - tol) {
            found = true;
            best = lam;
            best_cost = cost;
        } else if (std::abs(cost - best_cost) <= tol && lam.minCoeff() > best.minCoeff()) {
            best = lam;
            best_cost = std::min(cost, best_cost);
        }
    }
    if (!found)
        return failure(sols.empty() ? TriStatus::Degenerate : TriStatus::CheiralityFailure);
    return finish(tv, best(0), best(1), match.view);
}

TriResult triangulate_line_vp(const SegmentObservation& ref, const SegmentObservation& match, const V3D& vp_dir) {
    const TwoView tv = make_two_view(ref, match);
    if (!tv.valid)
        return failure(TriStatus::Degenerate);
    const V3D v = ref.view->R() * vp_dir;
    const V3D plane = tv.x1.cross(tv.x2);
    const V3D c = v.cross(plane);
    if (!(c.norm() > 1e-12 * v.norm() * plane.norm()))
        return failure(TriStatus::Degenerate);
    M2D A;
    V2D b;
    line_residual_terms(tv, &A, &b);
    const V2D h(c.dot(tv.x2), c.dot(tv.x1));
    const double hAh = h.dot(A * h);
    if (!(hAh > 0.0) || !(h.norm() > 0.0))
        return failure(TriStatus::Degenerate);
    const double s = -b.dot(h) / (2.0 * hAh);
    return finish(tv, s * h(0), s * h(1), match.view);
}

std::vector<Proposal> generate_proposals(const SegmentObservation& ref, std::span<const MatchInput> matches,
                                         const TriangulationConfig& config) {
    std::vector<Proposal> out;
    for (const MatchInput& m : matches) {
        auto push = [&](const TriResult& r, ProposalSource src) {
            if (!r.ok())
                return;
            out.push_back(Proposal{r.segment, r.depths, src, m.ref, m.obs.segment});
        };
        if (config.use_line_line) {
            const TriResult r = triangulate_algebraic(ref, m.obs, config.min_angle);
            if (r.ok() && weak_epipolar_iou(ref, m.obs) >= config.iou_threshold)
                push(r, ProposalSource::LineLine);
        }
        if (config.use_points) {
            if (m.shared_points.size() >= 2)
                push(triangulate_multipoint(ref, m.shared_points, &m.obs), ProposalSource::MultiPoint);
            for (const V3D& p : m.shared_points)
                push(triangulate_line_point(ref, m.obs, p), ProposalSource::LinePoint);
        }
        if (config.use_vps) {
            for (const V3D& v : m.vp_directions)
                push(triangulate_line_vp(ref, m.obs, v), ProposalSource::LineVP);
        }
    }
    return out;
}

}  // namespace linemap::triangulation
