#include "linemap/pipeline/pipeline.h"

#include <json.hpp>

#include <filesystem>
#include <sstream>

namespace linemap::pipeline {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw InvalidInputError(dir + ": cannot create output directory");
}

std::string join(const std::string& dir, const char* file) { return (fs::path(dir) / file).string(); }

}  // namespace

void cmd_map(const std::string& input_dir, const PipelineConfig& config, const std::string& output_dir) {
    config.validate();
    const io::InputBundle bundle = io::read_bundle(input_dir);
    const MapResult r = run_mapping(bundle, config);
    ensure_dir(output_dir);
    io::write_tracks(join(output_dir, "tracks.json"), r.records);
    io::write_text_file(join(output_dir, "line_point_graph.json"), io::line_point_graph_to_json(r.line_point_edges));
    io::write_text_file(join(output_dir, "line_vp_graph.json"), io::line_vp_graph_to_json(r.vps, r.line_vp_edges));
    io::write_text_file(join(output_dir, "lines.ply"), io::tracks_to_ply(r.records));
}

void cmd_fit_depth(const std::string& input_dir, const PipelineConfig& config, const std::string& output_dir) {
    config.validate();
    const io::InputBundle bundle = io::read_bundle(input_dir);
    if (bundle.depths.empty())
        throw InvalidInputError((fs::path(input_dir) / "depth").string() + ": no depth maps found");
    PipelineConfig c = config;
    c.use_depth = true;
    const MapResult r = run_mapping(bundle, c, NodeSource::DepthOnly);
    ensure_dir(output_dir);
    io::write_tracks(join(output_dir, "tracks.json"), r.records);
    io::write_text_file(join(output_dir, "lines.ply"), io::tracks_to_ply(r.records));
}

void cmd_synth(const evaluation::SceneSpec& spec, const std::string& output_dir) {
    const evaluation::SyntheticScene scene = evaluation::generate_scene(spec);
    ensure_dir(output_dir);
    io::write_bundle(output_dir, scene.bundle);
    io::write_ground_truth(join(output_dir, "gt.json"), scene.gt);
}

std::string metrics_to_json(const evaluation::MapMetrics& m) {
    nlohmann::json j = {{"taus", m.taus},
                        {"length_recall", m.length_recall},
                        {"inlier_pct", m.inlier_pct},
                        {"num_tracks", m.num_tracks},
                        {"total_length", m.total_length},
                        {"gt_length", m.gt_length},
                        {"avg_image_supports", m.avg_image_supports},
                        {"avg_line_supports", m.avg_line_supports}};
    return j.dump(1) + "\n";
}

std::string cmd_eval(const std::string& tracks_path, const std::string& gt_path,
                     const evaluation::MetricsConfig& metrics, const std::string& json_path) {
    if (metrics.taus.empty())
        throw InvalidInputError("at least one tau is required");
    for (double t : metrics.taus)
        if (!(t > 0.0))
            throw InvalidInputError("taus must be positive");
    const std::vector<io::TrackRecord> records = io::read_tracks(tracks_path);
    const io::GroundTruth gt = io::read_ground_truth(gt_path);
    if (gt.segments.empty() && gt.points.empty())
        throw InvalidInputError(gt_path + ": ground truth is empty");
    const std::vector<evaluation::TrackForEval> tracks = tracks_for_eval(records);
    const evaluation::MapMetrics m = evaluation::compute_metrics(tracks, gt, metrics);
    if (!json_path.empty())
        io::write_text_file(json_path, metrics_to_json(m));
    return evaluation::format_metrics_table(m);
}

std::string cmd_degeneracy(const uncertainty::DegeneracyConfig& config, const std::string& csv_path) {
    std::ostringstream os;
    uncertainty::write_degeneracy_csv(os, uncertainty::run_degeneracy_experiment(config));
    if (csv_path.empty())
        return os.str();
    io::write_text_file(csv_path, os.str());
    return {};
}

}  // namespace linemap::pipeline
