#pragma once

#include "linemap/association/association2d.h"
#include "linemap/base/camera_view.h"
#include "linemap/evaluation/evaluation.h"
#include "linemap/io/io.h"
#include "linemap/optimize/optimize.h"
#include "linemap/scoring/scoring.h"
#include "linemap/tracks/tracks.h"
#include "linemap/triangulation/triangulation.h"
#include "linemap/uncertainty/uncertainty.h"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace linemap::pipeline {

// Flat, user-facing settings. Angles are in degrees and pixel thresholds in
// pixels; module configs are derived from these.
struct PipelineConfig {
    int n_neighbors = 20;
    int top_k_matches = 10;
    bool exhaustive_matching = false;

    double tau_angle_3d_deg = 10.0;
    double tau_angle_2d_deg = 8.0;
    double tau_overlap = 0.05;
    double tau_perp_2d_px = 5.0;
    double tau_innerseg = 0.015;
    double score_gate = 0.5;
    double accept_threshold = 1.0;

    double min_triangulation_angle_deg = 1.0;
    double iou_threshold = 0.1;
    bool use_line_line = true;
    bool use_points = true;
    bool use_vps = true;

    double point_line_threshold_px = 2.0;
    double vp_inlier_px = 1.0;
    int vp_min_support = 5;
    int vp_max_iterations = 5000;
    int vp_track_min_shared = 3;
    double vp_track_max_angle_deg = 10.0;

    double edge_threshold = 0.5;
    int min_track_nodes = 3;
    int min_support_images = 4;
    bool remerge = true;
    double remerge_threshold = 0.75;

    bool optimize = true;
    int max_iterations = 100;
    double line_alpha = 10.0;
    double cauchy_scale = 0.25;
    double huber_scale = 0.25;
    double weight_line = 1.0;
    double weight_point = 1.0;
    double weight_point_line = 1.0;
    double weight_line_vp = 1.0;
    double weight_vp_orthogonality = 1.0;
    double vp_orthogonality_min_angle_deg = 87.0;
    int min_association_weight = 3;
    double extract_point_line_threshold = 2.0;
    double extract_line_vp_angle_deg = 5.0;

    bool use_depth = false;
    double depth_threshold_scale = 1.0;
    double depth_sample_spacing_px = 1.0;
    int depth_min_samples = 5;
    int depth_max_iterations = 1000;
    double depth_min_inlier_ratio = 0.5;

    std::vector<double> taus = {0.001, 0.005, 0.01};
    evaluation::InlierRule inlier_rule = evaluation::InlierRule::Mean;

    uint64_t seed = 0;
    int threads = 1;

    // Throws InvalidInputError on unknown keys or unparsable values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static std::vector<std::string> keys();
    void validate() const;

    // key = value lines, one per key, in keys() order.
    std::string serialize() const;
    static PipelineConfig parse(const std::string& text, const std::string& name = "config");
    // Applies key/value pairs from a file, reporting file and line on errors.
    void apply(const std::vector<io::KeyValue>& kvs, const std::string& name);

    scoring::ScoringConfig scoring() const;
    triangulation::TriangulationConfig triangulation() const;
    association::VPConfig vp() const;
    association::VPTrackConfig vp_tracks() const;
    tracks::TrackConfig tracks() const;
    optimize::ProblemOptions problem() const;
    optimize::SolverOptions solver() const;
    optimize::ExtractionConfig extraction() const;
    depthfit::DepthFitConfig depth() const;
    evaluation::MetricsConfig metrics() const;
};

evaluation::SceneSpec parse_scene_spec(const std::vector<io::KeyValue>& kvs, const std::string& name);
std::string serialize_scene_spec(const evaluation::SceneSpec& spec);

// Ranked neighbor images: given lists, else Dice coefficient on shared point
// tracks, else camera-center distance. Ties fall back to distance, then id.
std::map<int, std::vector<int>> compute_neighbors(const io::InputBundle& bundle, int n_neighbors);

using SegKey = std::pair<int, int>;  // (image_id, segment index)

// Everything the per-segment stages share.
struct MapContext {
    const io::InputBundle* bundle = nullptr;
    ImageCollection views;
    PipelineConfig config;
    std::map<int, std::vector<int>> neighbors;
    std::map<int, std::vector<std::pair<int, int>>> point_line;  // image -> (point track, segment)
    std::map<SegKey, std::vector<int>> segment_points;           // sorted point tracks per segment
    std::map<int, association::LineVPGraph2D> vps;
    std::map<SegKey, std::vector<SegKey>> targets;  // ranked, filtered matches per reference segment
};

MapContext prepare_context(const io::InputBundle& bundle, const PipelineConfig& config);

// Candidates of one reference segment from all its matches.
std::vector<triangulation::Proposal> segment_proposals(const MapContext& ctx, const SegKey& ref);

// Depth-fitted candidate with endpoints on the reference endpoint rays.
std::optional<triangulation::Proposal> depth_proposal(const MapContext& ctx, const SegKey& ref);

enum class NodeSource { Triangulation, DepthOnly };

struct MapResult {
    std::vector<tracks::NodeCandidate> nodes;
    std::vector<double> node_scores;  // selection score per node; NaN for depth nodes
    std::vector<tracks::LineTrack> tracks;
    std::vector<io::TrackRecord> records;
    std::vector<std::pair<int, int>> line_point_edges;  // (track, point track id)
    std::vector<V3D> vps;
    std::vector<std::pair<int, int>> line_vp_edges;  // (track, vp)
    std::vector<optimize::SoftAssociation> soft_associations;
    double reprojection_before = 0.0;
    double reprojection_after = 0.0;
    std::optional<optimize::SolverReport> solver;
    std::vector<std::string> diagnostics;
};

MapResult run_mapping(const io::InputBundle& bundle, const PipelineConfig& config,
                      NodeSource source = NodeSource::Triangulation);

std::vector<evaluation::TrackForEval> tracks_for_eval(std::span<const io::TrackRecord> records);

// Commands behind the CLI. Input problems throw InvalidInputError.
void cmd_map(const std::string& input_dir, const PipelineConfig& config, const std::string& output_dir);
void cmd_fit_depth(const std::string& input_dir, const PipelineConfig& config, const std::string& output_dir);
void cmd_synth(const evaluation::SceneSpec& spec, const std::string& output_dir);
// Returns the plain-text table; writes metrics JSON when a path is given.
std::string cmd_eval(const std::string& tracks_path, const std::string& gt_path,
                     const evaluation::MetricsConfig& metrics, const std::string& json_path = "");
std::string metrics_to_json(const evaluation::MapMetrics& m);
// Writes the CSV to `csv_path`, or returns it when the path is empty.
std::string cmd_degeneracy(const uncertainty::DegeneracyConfig& config, const std::string& csv_path = "");

}  // namespace linemap::pipeline
