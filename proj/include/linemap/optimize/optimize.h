#pragma once

#include "linemap/base/camera_view.h"
#include "linemap/base/geometry.h"

#include <Eigen/Core>

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace linemap::optimize {

// Plain residuals, before robust loss and term weights.
V2D residual_line_reprojection(const PluckerLine& line, const CameraView& view, const Segment2D& obs,
                               double alpha = 10.0);
V2D residual_point_reprojection(const V3D& point, const CameraView& view, const V2D& obs);
// weight * (p - p_perp) / sigma; its norm is the scalar point-line residual.
V3D residual_point_line(const V3D& point, const PluckerLine& line, double weight, double sigma = 1.0);
// weight * (d x v); its norm is weight * sin(angle).
V3D residual_line_vp(const PluckerLine& line, const V3D& vp, double weight);
double residual_vp_orthogonality(const V3D& vp_a, const V3D& vp_b);

// Orthonormal tangent basis of the unit sphere at v.
Eigen::Matrix<double, 3, 2> sphere_tangent_basis(const V3D& v);
V3D sphere_plus(const V3D& v, const V2D& delta);

enum class LossType { Trivial, Cauchy, Huber };

// rho(s) and rho'(s) of a squared residual norm s.
std::pair<double, double> robust_loss(LossType type, double scale, double s);

struct ProblemOptions {
    double alpha = 10.0;
    double cauchy_scale = 0.25;
    double huber_scale = 0.25;
    double weight_line = 1.0;
    double weight_point = 1.0;
    double weight_point_line = 1.0;
    double weight_line_vp = 1.0;
    double weight_vp_orthogonality = 1.0;
    // Pairs of VPs further apart than this get an orthogonality term.
    double vp_orthogonality_min_angle = deg2rad(87.0);
};

enum class BlockKind { LineReprojection, PointReprojection, PointLine, LineVP, VPOrthogonality };

struct ResidualBlock {
    BlockKind kind = BlockKind::LineReprojection;
    int a = -1;  // line / point / vp, by kind
    int b = -1;  // second parameter block (line for PointLine, vp for LineVP and VPOrthogonality)
    int image_id = -1;
    Segment2D segment;
    V2D observation = V2D::Zero();
    double weight = 1.0;
    double sigma = 1.0;
};

struct PointLineEdge {
    int point = -1;
    int line = -1;
    double weight = 0.0;
    double sigma = 1.0;
};

struct LineVPEdge {
    int line = -1;
    int vp = -1;
    double weight = 0.0;
};

// Lines (4 DoF), points (3 DoF) and VPs (2 DoF) with fixed cameras.
class ReconstructionProblem {
 public:
    ReconstructionProblem(const ImageCollection* views, ProblemOptions options = {});

    int add_line(const PluckerLine& line);
    int add_point(const V3D& point);
    int add_vp(const V3D& direction);

    // Return false (and record a diagnostic) when the block is skipped.
    bool add_line_observation(int line, int image_id, const Segment2D& segment);
    bool add_point_observation(int point, int image_id, const V2D& pixel);
    void add_point_line(int point, int line, double weight, double sigma = 1.0);
    void add_line_vp(int line, int vp, double weight);
    // Adds orthogonality terms between all VP pairs further apart than the
    // configured angle. Returns the number added.
    int add_vp_orthogonality_terms();
    void add_vp_orthogonality(int vp_a, int vp_b);

    int num_lines() const { return static_cast<int>(lines_.size()); }
    int num_points() const { return static_cast<int>(points_.size()); }
    int num_vps() const { return static_cast<int>(vps_.size()); }
    int num_dof() const { return 4 * num_lines() + 3 * num_points() + 2 * num_vps(); }
    size_t num_residual_blocks() const { return blocks_.size(); }
    const std::vector<ResidualBlock>& blocks() const { return blocks_; }
    const std::vector<PointLineEdge>& point_line_edges() const { return point_line_edges_; }
    const std::vector<LineVPEdge>& line_vp_edges() const { return line_vp_edges_; }
    const std::vector<std::string>& diagnostics() const { return diagnostics_; }
    const ProblemOptions& options() const { return options_; }
    const ImageCollection& views() const { return *views_; }

    PluckerLine line(int i) const { return lines_[i].to_plucker(); }
    const MinimalLineParam& line_param(int i) const { return lines_[i]; }
    const V3D& point(int i) const { return points_[i]; }
    const V3D& vp(int i) const { return vps_[i]; }
    void set_line_param(int i, const MinimalLineParam& p) { lines_[i] = p; }

    // Local offsets of each parameter block in the tangent vector.
    int line_offset(int i) const { return 4 * i; }
    int point_offset(int i) const { return 4 * num_lines() + 3 * i; }
    int vp_offset(int i) const { return 4 * num_lines() + 3 * num_points() + 2 * i; }

    // Weighted, robustified residual and Jacobian w.r.t. the local parameters
    // of the block (column ranges listed in `offsets` as (global offset, size)).
    struct BlockEvaluation {
        Eigen::VectorXd raw;       // residual before loss and term weight
        Eigen::VectorXd residual;  // after sqrt(term weight * rho') scaling
        Eigen::MatrixXd jacobian;
        std::vector<std::pair<int, int>> offsets;
        double cost = 0.0;  // 0.5 * term weight * rho(|raw|^2)
    };
    BlockEvaluation evaluate_block(size_t i, bool with_jacobian) const;
    // Unrobustified residual of block i at the current parameters moved by `delta` (local).
    Eigen::VectorXd raw_residual_at(size_t i, const Eigen::VectorXd& delta) const;

    double cost() const;
    // Retraction of all blocks by the tangent step.
    void plus(const Eigen::VectorXd& delta);

    // Mean unweighted perpendicular distance (px) of observed endpoints to
    // the projected lines, over all line observations.
    double mean_line_reprojection_error() const;

 private:
    LossType loss_of(BlockKind kind) const;
    double loss_scale_of(BlockKind kind) const;
    double term_weight_of(BlockKind kind) const;

    const ImageCollection* views_;
    ProblemOptions options_;
    std::vector<MinimalLineParam> lines_;
    std::vector<V3D> points_;
    std::vector<V3D> vps_;
    std::vector<ResidualBlock> blocks_;
    std::vector<PointLineEdge> point_line_edges_;
    std::vector<LineVPEdge> line_vp_edges_;
    std::vector<std::string> diagnostics_;
};

struct SolverOptions {
    int max_iterations = 100;
    double initial_lambda = 1e-4;
    double function_tolerance = 1e-8;
    double gradient_tolerance = 1e-10;
    int threads = 1;
};

struct SolverReport {
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    int accepted_steps = 0;
    std::string termination;
};

SolverReport solve(ReconstructionProblem& problem, const SolverOptions& options = {});

struct SoftAssociation {
    enum class Kind { PointLine, LineVP };
    Kind kind = Kind::PointLine;
    int line = -1;
    int other = -1;
    int weight = 0;
};

// line_track_supports[t]: (image_id, segment_id) supports of line track t.
// point_line_edges: image_id -> (point_track_id, segment_id) 2D association edges.
// segment_vp_tracks: image_id -> VP track id per segment (-1 when unassigned).
std::vector<SoftAssociation> build_soft_associations(
    std::span<const std::vector<std::pair<int, int>>> line_track_supports,
    const std::map<int, std::vector<std::pair<int, int>>>& point_line_edges,
    const std::map<int, std::vector<int>>& segment_vp_tracks, int min_weight = 3);

struct ExtractionConfig {
    double point_line_threshold = 2.0;
    double line_vp_max_angle = deg2rad(5.0);
};

struct AssociationGraphs3D {
    std::vector<std::pair<int, int>> line_point;  // (line, point)
    std::vector<std::pair<int, int>> line_vp;     // (line, vp)
};

AssociationGraphs3D extract_association_graphs_3d(const ReconstructionProblem& problem,
                                                  const ExtractionConfig& config = {});

}  // namespace linemap::optimize
