#include "linemap/optimize/optimize.h"

#include "linemap/base/parallel.h"

#include <Eigen/Cholesky>
#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace linemap::optimize {

namespace {

template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;

template <int N>
using Jet = Eigen::AutoDiffScalar<Eigen::Matrix<double, N, 1>>;

// Plucker coordinates of the line moved by a local step. The rotation part
// is linearized around 0, which is exact to first order.
template <typename T>
void line_at(const MinimalLineParam& p, const T* delta, Vec3<T>& d, Vec3<T>& m) {
    const M3D U = p.U();
    const Vec3<T> th(delta[0], delta[1], delta[2]);
    const Vec3<T> e0(T(1.0), T(0.0), T(0.0));
    const Vec3<T> e1(T(0.0), T(1.0), T(0.0));
    d = U.cast<T>() * (e0 + th.cross(e0));
    const Vec3<T> u2 = U.cast<T>() * (e1 + th.cross(e1));
    using std::cos;
    using std::sin;
    const T c = cos(delta[3]);
    const T s = sin(delta[3]);
    const T w1 = p.w(0) * c - p.w(1) * s;
    const T w2 = p.w(1) * c + p.w(0) * s;
    m = (w2 / w1) * u2;
}

template <typename T>
Vec3<T> vp_at(const V3D& v, const T* delta) {
    const Eigen::Matrix<double, 3, 2> B = sphere_tangent_basis(v);
    Vec3<T> out = v.cast<T>() + B.col(0).cast<T>() * delta[0] + B.col(1).cast<T>() * delta[1];
    using std::sqrt;
    return out / sqrt(out.squaredNorm());
}

template <typename T>
void line_reprojection(const Vec3<T>& d, const Vec3<T>& m, const CameraView& view, const Segment2D& obs,
                       double alpha, T* r) {
    const Vec3<T> dc = view.R().cast<T>() * d;
    const Vec3<T> mc = view.R().cast<T>() * m + view.t().cast<T>().cross(dc);
    const Vec3<T> l = view.K_inv().transpose().cast<T>() * mc;
    using std::abs;
    using std::exp;
    using std::sqrt;
    const T n = sqrt(l(0) * l(0) + l(1) * l(1));
    const V2D u = obs.direction();
    const T c = (l(0) * u.y() - l(1) * u.x()) / n;
    const T w = exp(alpha * (1.0 - abs(c)));
    r[0] = w * (l(0) * obs.p1.x() + l(1) * obs.p1.y() + l(2)) / n;
    r[1] = w * (l(0) * obs.p2.x() + l(1) * obs.p2.y() + l(2)) / n;
}

template <typename T>
void point_reprojection(const Vec3<T>& p, const CameraView& view, const V2D& obs, T* r) {
    const Vec3<T> x = view.K().cast<T>() * (view.R().cast<T>() * p + view.t().cast<T>());
    r[0] = x(0) / x(2) - obs.x();
    r[1] = x(1) / x(2) - obs.y();
}

template <typename T>
void point_line(const Vec3<T>& p, const Vec3<T>& d, const Vec3<T>& m, double weight, double sigma, T* r) {
    const Vec3<T> foot = d.cross(m) + d.dot(p) * d;
    const Vec3<T> e = (p - foot) * (weight / sigma);
    r[0] = e(0);
    r[1] = e(1);
    r[2] = e(2);
}

template <typename T>
void line_vp(const Vec3<T>& d, const Vec3<T>& v, double weight, T* r) {
    const Vec3<T> e = d.cross(v) * weight;
    r[0] = e(0);
    r[1] = e(1);
    r[2] = e(2);
}

// Residual and Jacobian of f at delta = 0 via forward-mode AD.
template <int N, int R, typename F>
void differentiate(const F& f, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    if (!J) {
        double delta[N] = {};
        double out[R];
        f(delta, out);
        r = Eigen::Map<Eigen::Matrix<double, R, 1>>(out);
        return;
    }
    Jet<N> delta[N];
    for (int i = 0; i < N; ++i)
        delta[i] = Jet<N>(0.0, N, i);
    Jet<N> out[R];
    f(delta, out);
    r.resize(R);
    J->resize(R, N);
    for (int i = 0; i < R; ++i) {
        r(i) = out[i].value();
        if (out[i].derivatives().size() == N)
            J->row(i) = out[i].derivatives().transpose();
        else
            J->row(i).setZero();
    }
}

}  // namespace

V2D residual_line_reprojection(const PluckerLine& line, const CameraView& view, const Segment2D& obs, double alpha) {
    V2D r;
    line_reprojection<double>(line.d(), line.m(), view, obs, alpha, r.data());
    return r;
}

V2D residual_point_reprojection(const V3D& point, const CameraView& view, const V2D& obs) {
    V2D r;
    point_reprojection<double>(point, view, obs, r.data());
    return r;
}

V3D residual_point_line(const V3D& point, const PluckerLine& line, double weight, double sigma) {
    V3D r;
    point_line<double>(point, line.d(), line.m(), weight, sigma, r.data());
    return r;
}

V3D residual_line_vp(const PluckerLine& line, const V3D& vp, double weight) {
    V3D r;
    line_vp<double>(line.d(), vp.normalized(), weight, r.data());
    return r;
}

double residual_vp_orthogonality(const V3D& vp_a, const V3D& vp_b) {
    return vp_a.normalized().dot(vp_b.normalized());
}

Eigen::Matrix<double, 3, 2> sphere_tangent_basis(const V3D& v) {
    int k = 0;
    v.cwiseAbs().minCoeff(&k);
    const V3D b1 = (V3D::Unit(k) - v * v(k)).normalized();
    Eigen::Matrix<double, 3, 2> B;
    B.col(0) = b1;
    B.col(1) = v.cross(b1).normalized();
    return B;
}

V3D sphere_plus(const V3D& v, const V2D& delta) {
    return (v + sphere_tangent_basis(v) * delta).normalized();
}

std::pair<double, double> robust_loss(LossType type, double scale, double s) {
    switch (type) {
        case LossType::Trivial:
            return {s, 1.0};
        case LossType::Cauchy: {
            const double b = scale * scale;
            return {b * std::log1p(s / b), 1.0 / (1.0 + s / b)};
        }
        case LossType::Huber: {
            const double b = scale * scale;
            if (s <= b)
                return {s, 1.0};
            const double r = std::sqrt(s);
            return {2.0 * scale * r - b, scale / r};
        }
    }
    return {s, 1.0};
}

ReconstructionProblem::ReconstructionProblem(const ImageCollection* views, ProblemOptions options)
    : views_(views), options_(options) {
    if (!views_)
        throw InvalidInputError("reconstruction problem needs views");
}

int ReconstructionProblem::add_line(const PluckerLine& line) {
    lines_.push_back(MinimalLineParam::from_plucker(line));
    return num_lines() - 1;
}

int ReconstructionProblem::add_point(const V3D& point) {
    if (!point.allFinite())
        throw InvalidInputError("non-finite 3D point");
    points_.push_back(point);
    return num_points() - 1;
}

int ReconstructionProblem::add_vp(const V3D& direction) {
    const double n = direction.norm();
    if (!(n > 0.0) || !std::isfinite(n))
        throw InvalidInputError("invalid VP direction");
    vps_.push_back(direction / n);
    return num_vps() - 1;
}

bool ReconstructionProblem::add_line_observation(int line, int image_id, const Segment2D& segment) {
    if (line < 0 || line >= num_lines())
        throw InvalidInputError("line index out of range");
    const CameraView& v = views_->view(image_id);
    std::ostringstream why;
    if (!segment.is_valid()) {
        why << "line " << line << ": invalid segment in image " << image_id;
    } else {
        try {
            (void)project_line(lines_[line].to_plucker(), v);
        } catch (const DegenerateError& e) {
            why << "line " << line << ": " << e.what();
        }
    }
    if (!why.str().empty()) {
        diagnostics_.push_back("skipped line observation, " + why.str());
        return false;
    }
    ResidualBlock b;
    b.kind = BlockKind::LineReprojection;
    b.a = line;
    b.image_id = image_id;
    b.segment = segment;
    blocks_.push_back(b);
    return true;
}

bool ReconstructionProblem::add_point_observation(int point, int image_id, const V2D& pixel) {
    if (point < 0 || point >= num_points())
        throw InvalidInputError("point index out of range");
    const CameraView& v = views_->view(image_id);
    if (!(v.depth(points_[point]) > 0.0) || !pixel.allFinite()) {
        diagnostics_.push_back("skipped point observation, point " + std::to_string(point) +
                               " is behind camera " + std::to_string(image_id));
        return false;
    }
    ResidualBlock b;
    b.kind = BlockKind::PointReprojection;
    b.a = point;
    b.image_id = image_id;
    b.observation = pixel;
    blocks_.push_back(b);
    return true;
}

void ReconstructionProblem::add_point_line(int point, int line, double weight, double sigma) {
    if (point < 0 || point >= num_points() || line < 0 || line >= num_lines())
        throw InvalidInputError("point-line association out of range");
    if (!(sigma > 0.0))
        throw InvalidInputError("point-line scale must be positive");
    ResidualBlock b;
    b.kind = BlockKind::PointLine;
    b.a = point;
    b.b = line;
    b.weight = weight;
    b.sigma = sigma;
    blocks_.push_back(b);
    point_line_edges_.push_back({point, line, weight, sigma});
}

void ReconstructionProblem::add_line_vp(int line, int vp, double weight) {
    if (line < 0 || line >= num_lines() || vp < 0 || vp >= num_vps())
        throw InvalidInputError("line-VP association out of range");
    ResidualBlock b;
    b.kind = BlockKind::LineVP;
    b.a = line;
    b.b = vp;
    b.weight = weight;
    blocks_.push_back(b);
    line_vp_edges_.push_back({line, vp, weight});
}

void ReconstructionProblem::add_vp_orthogonality(int vp_a, int vp_b) {
    if (vp_a < 0 || vp_a >= num_vps() || vp_b < 0 || vp_b >= num_vps() || vp_a == vp_b)
        throw InvalidInputError("VP orthogonality pair out of range");
    ResidualBlock b;
    b.kind = BlockKind::VPOrthogonality;
    b.a = vp_a;
    b.b = vp_b;
    blocks_.push_back(b);
}

int ReconstructionProblem::add_vp_orthogonality_terms() {
    int added = 0;
    const double cmax = std::cos(options_.vp_orthogonality_min_angle);
    for (int a = 0; a < num_vps(); ++a) {
        for (int b = a + 1; b < num_vps(); ++b) {
            if (std::abs(vps_[a].dot(vps_[b])) < cmax) {
                add_vp_orthogonality(a, b);
                ++added;
            }
        }
    }
    return added;
}

LossType ReconstructionProblem::loss_of(BlockKind kind) const {
    switch (kind) {
        case BlockKind::LineReprojection:
            return LossType::Cauchy;
        case BlockKind::PointLine:
        case BlockKind::LineVP:
            return LossType::Huber;
        default:
            return LossType::Trivial;
    }
}

double ReconstructionProblem::loss_scale_of(BlockKind kind) const {
    return kind == BlockKind::LineReprojection ? options_.cauchy_scale : options_.huber_scale;
}

double ReconstructionProblem::term_weight_of(BlockKind kind) const {
    switch (kind) {
        case BlockKind::LineReprojection:
            return options_.weight_line;
        case BlockKind::PointReprojection:
            return options_.weight_point;
        case BlockKind::PointLine:
            return options_.weight_point_line;
        case BlockKind::LineVP:
            return options_.weight_line_vp;
        case BlockKind::VPOrthogonality:
            return options_.weight_vp_orthogonality;
    }
    return 1.0;
}

ReconstructionProblem::BlockEvaluation ReconstructionProblem::evaluate_block(size_t i, bool with_jacobian) const {
    const ResidualBlock& b = blocks_.at(i);
    BlockEvaluation ev;
    Eigen::MatrixXd J;
    Eigen::MatrixXd* Jp = with_jacobian ? &J : nullptr;
    switch (b.kind) {
        case BlockKind::LineReprojection: {
            const CameraView& v = views_->view(b.image_id);
            const MinimalLineParam& lp = lines_[b.a];
            differentiate<4, 2>(
                [&]<typename T>(const T* delta, T* r) {
                    Vec3<T> d, m;
                    line_at(lp, delta, d, m);
                    line_reprojection(d, m, v, b.segment, options_.alpha, r);
                },
                ev.raw, Jp);
            ev.offsets = {{line_offset(b.a), 4}};
            break;
        }
        case BlockKind::PointReprojection: {
            const CameraView& v = views_->view(b.image_id);
            const V3D& p0 = points_[b.a];
            differentiate<3, 2>(
                [&]<typename T>(const T* delta, T* r) {
                    const Vec3<T> p = p0.cast<T>() + Vec3<T>(delta[0], delta[1], delta[2]);
                    point_reprojection(p, v, b.observation, r);
                },
                ev.raw, Jp);
            ev.offsets = {{point_offset(b.a), 3}};
            break;
        }
        case BlockKind::PointLine: {
            const V3D& p0 = points_[b.a];
            const MinimalLineParam& lp = lines_[b.b];
            differentiate<7, 3>(
                [&]<typename T>(const T* delta, T* r) {
                    const Vec3<T> p = p0.cast<T>() + Vec3<T>(delta[0], delta[1], delta[2]);
                    Vec3<T> d, m;
                    line_at(lp, delta + 3, d, m);
                    point_line(p, d, m, b.weight, b.sigma, r);
                },
                ev.raw, Jp);
            ev.offsets = {{point_offset(b.a), 3}, {line_offset(b.b), 4}};
            break;
        }
        case BlockKind::LineVP: {
            const MinimalLineParam& lp = lines_[b.a];
            const V3D& v0 = vps_[b.b];
            differentiate<6, 3>(
                [&]<typename T>(const T* delta, T* r) {
                    Vec3<T> d, m;
                    line_at(lp, delta, d, m);
                    line_vp(d, vp_at(v0, delta + 4), b.weight, r);
                },
                ev.raw, Jp);
            ev.offsets = {{line_offset(b.a), 4}, {vp_offset(b.b), 2}};
            break;
        }
        case BlockKind::VPOrthogonality: {
            const V3D& va = vps_[b.a];
            const V3D& vb = vps_[b.b];
            differentiate<4, 1>([&]<typename T>(const T* delta, T* r) { r[0] = vp_at(va, delta).dot(vp_at(vb, delta + 2)); },
                                ev.raw, Jp);
            ev.offsets = {{vp_offset(b.a), 2}, {vp_offset(b.b), 2}};
            break;
        }
    }
    const double tw = term_weight_of(b.kind);
    const auto [rho, drho] = robust_loss(loss_of(b.kind), loss_scale_of(b.kind), ev.raw.squaredNorm());
    ev.cost = 0.5 * tw * rho;
    const double scale = std::sqrt(tw * drho);
    ev.residual = scale * ev.raw;
    if (with_jacobian)
        ev.jacobian = scale * J;
    return ev;
}

Eigen::VectorXd ReconstructionProblem::raw_residual_at(size_t i, const Eigen::VectorXd& delta) const {
    ReconstructionProblem moved = *this;
    moved.plus(delta);
    return moved.evaluate_block(i, false).raw;
}

double ReconstructionProblem::cost() const {
    double c = 0.0;
    for (size_t i = 0; i < blocks_.size(); ++i)
        c += evaluate_block(i, false).cost;
    return c;
}

void ReconstructionProblem::plus(const Eigen::VectorXd& delta) {
    if (delta.size() != num_dof())
        throw InvalidInputError("step size mismatch");
    for (int i = 0; i < num_lines(); ++i)
        lines_[i] = lines_[i].plus(delta.segment<4>(line_offset(i)));
    for (int i = 0; i < num_points(); ++i)
        points_[i] += delta.segment<3>(point_offset(i));
    for (int i = 0; i < num_vps(); ++i)
        vps_[i] = sphere_plus(vps_[i], delta.segment<2>(vp_offset(i)));
}

double ReconstructionProblem::mean_line_reprojection_error() const {
    double sum = 0.0;
    int n = 0;
    for (const ResidualBlock& b : blocks_) {
        if (b.kind != BlockKind::LineReprojection)
            continue;
        try {
            const Line2D l = project_line(lines_[b.a].to_plucker(), views_->view(b.image_id));
            sum += l.distance(b.segment.p1) + l.distance(b.segment.p2);
            n += 2;
        } catch (const DegenerateError&) {
        }
    }
    return n > 0 ? sum / n : 0.0;
}

SolverReport solve(ReconstructionProblem& problem, const SolverOptions& options) {
    SolverReport report;
    const size_t nb = problem.num_residual_blocks();
    const int n = problem.num_dof();
    std::vector<ReconstructionProblem::BlockEvaluation> evals(nb);

    auto evaluate_all = [&](const ReconstructionProblem& p, bool jac) {
        parallel_for(nb, options.threads, [&](size_t i) { evals[i] = p.evaluate_block(i, jac); });
        double c = 0.0;
        for (const auto& ev : evals)
            c += ev.cost;
        return c;
    };

    report.initial_cost = evaluate_all(problem, false);
    for (size_t i = 0; i < nb; ++i) {
        if (!evals[i].raw.allFinite() || !std::isfinite(evals[i].cost))
            throw DegenerateError("non-finite residual in block " + std::to_string(i));
    }
    report.final_cost = report.initial_cost;
    if (n == 0 || nb == 0) {
        report.termination = "empty problem";
        return report;
    }
    double cost = report.initial_cost;
    double lambda = options.initial_lambda;
    bool need_jacobian = true;
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    while (report.iterations < options.max_iterations) {
        if (cost == 0.0) {
            report.termination = "zero cost";
            break;
        }
        if (need_jacobian) {
            evaluate_all(problem, true);
            H.setZero(n, n);
            g.setZero(n);
            for (const auto& ev : evals) {
                int ca = 0;
                for (const auto& [oa, sa] : ev.offsets) {
                    const auto Ja = ev.jacobian.middleCols(ca, sa);
                    g.segment(oa, sa) += Ja.transpose() * ev.residual;
                    int cb = 0;
                    for (const auto& [ob, sb] : ev.offsets) {
                        H.block(oa, ob, sa, sb) += Ja.transpose() * ev.jacobian.middleCols(cb, sb);
                        cb += sb;
                    }
                    ca += sa;
                }
            }
            need_jacobian = false;
            if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
                report.termination = "gradient tolerance";
                break;
            }
        }
        ++report.iterations;
        Eigen::MatrixXd A = H;
        for (int k = 0; k < n; ++k)
            A(k, k) += lambda * std::clamp(H(k, k), 1e-6, 1e32);
        const Eigen::VectorXd step = A.ldlt().solve(-g);
        bool accepted = false;
        if (step.allFinite()) {
            ReconstructionProblem trial = problem;
            trial.plus(step);
            const double new_cost = evaluate_all(trial, false);
            if (std::isfinite(new_cost) && new_cost < cost) {
                const double rel = (cost - new_cost) / cost;
                problem = std::move(trial);
                cost = new_cost;
                lambda = std::max(lambda * 0.5, 1e-16);
                ++report.accepted_steps;
                accepted = true;
                need_jacobian = true;
                if (rel < options.function_tolerance) {
                    report.termination = "function tolerance";
                    break;
                }
            }
        }
        if (!accepted) {
            lambda *= 10.0;
            if (lambda > 1e32) {
                report.termination = "damping overflow";
                break;
            }
        }
    }
    if (report.termination.empty())
        report.termination = "max iterations";
    report.final_cost = cost;
    return report;
}

std::vector<SoftAssociation> build_soft_associations(
    std::span<const std::vector<std::pair<int, int>>> line_track_supports,
    const std::map<int, std::vector<std::pair<int, int>>>& point_line_edges,
    const std::map<int, std::vector<int>>& segment_vp_tracks, int min_weight) {
    // (image, segment) -> point tracks touching it
    std::map<std::pair<int, int>, std::vector<int>> seg_points;
    for (const auto& [img, edges] : point_line_edges)
        for (const auto& [pt, seg] : edges)
            seg_points[{img, seg}].push_back(pt);
    std::vector<SoftAssociation> out;
    for (size_t t = 0; t < line_track_supports.size(); ++t) {
        std::map<int, int> pw, vw;
        for (const auto& [img, seg] : line_track_supports[t]) {
            auto it = seg_points.find({img, seg});
            if (it != seg_points.end())
                for (int pt : it->second)
                    pw[pt]++;
            auto iv = segment_vp_tracks.find(img);
            if (iv != segment_vp_tracks.end() && seg >= 0 && seg < static_cast<int>(iv->second.size()) &&
                iv->second[seg] >= 0)
                vw[iv->second[seg]]++;
        }
        for (const auto& [pt, w] : pw)
            if (w >= min_weight)
                out.push_back({SoftAssociation::Kind::PointLine, static_cast<int>(t), pt, w});
        for (const auto& [vp, w] : vw)
            if (w >= min_weight)
                out.push_back({SoftAssociation::Kind::LineVP, static_cast<int>(t), vp, w});
    }
    return out;
}

AssociationGraphs3D extract_association_graphs_3d(const ReconstructionProblem& problem,
                                                  const ExtractionConfig& config) {
    AssociationGraphs3D out;
    std::set<std::pair<int, int>> lp, lv;
    for (const PointLineEdge& e : problem.point_line_edges()) {
        const double dist = problem.line(e.line).distance(problem.point(e.point));
        if (dist / e.sigma <= config.point_line_threshold)
            lp.emplace(e.line, e.point);
    }
    for (const LineVPEdge& e : problem.line_vp_edges()) {
        const double c = std::min(1.0, std::abs(problem.line(e.line).d().dot(problem.vp(e.vp))));
        if (std::acos(c) <= config.line_vp_max_angle)
            lv.emplace(e.line, e.vp);
    }
    out.line_point.assign(lp.begin(), lp.end());
    out.line_vp.assign(lv.begin(), lv.end());
    return out;
}

}  // namespace linemap::optimize
