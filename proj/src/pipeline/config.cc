#include "linemap/pipeline/pipeline.h"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <variant>

namespace linemap::pipeline {

namespace {

using FieldPtr = std::variant<double*, int*, bool*, uint64_t*, std::vector<double>*, evaluation::InlierRule*>;

struct Field {
    const char* name;
    FieldPtr ptr;
};

std::vector<Field> fields(PipelineConfig& c) {
    return {
        {"n_neighbors", &c.n_neighbors},
        {"top_k_matches", &c.top_k_matches},
        {"exhaustive_matching", &c.exhaustive_matching},
        {"tau_angle_3d_deg", &c.tau_angle_3d_deg},
        {"tau_angle_2d_deg", &c.tau_angle_2d_deg},
        {"tau_overlap", &c.tau_overlap},
        {"tau_perp_2d_px", &c.tau_perp_2d_px},
        {"tau_innerseg", &c.tau_innerseg},
        {"score_gate", &c.score_gate},
        {"accept_threshold", &c.accept_threshold},
        {"min_triangulation_angle_deg", &c.min_triangulation_angle_deg},
        {"iou_threshold", &c.iou_threshold},
        {"use_line_line", &c.use_line_line},
        {"use_points", &c.use_points},
        {"use_vps", &c.use_vps},
        {"point_line_threshold_px", &c.point_line_threshold_px},
        {"vp_inlier_px", &c.vp_inlier_px},
        {"vp_min_support", &c.vp_min_support},
        {"vp_max_iterations", &c.vp_max_iterations},
        {"vp_track_min_shared", &c.vp_track_min_shared},
        {"vp_track_max_angle_deg", &c.vp_track_max_angle_deg},
        {"edge_threshold", &c.edge_threshold},
        {"min_track_nodes", &c.min_track_nodes},
        {"min_support_images", &c.min_support_images},
        {"remerge", &c.remerge},
        {"remerge_threshold", &c.remerge_threshold},
        {"optimize", &c.optimize},
        {"max_iterations", &c.max_iterations},
        {"line_alpha", &c.line_alpha},
        {"cauchy_scale", &c.cauchy_scale},
        {"huber_scale", &c.huber_scale},
        {"weight_line", &c.weight_line},
        {"weight_point", &c.weight_point},
        {"weight_point_line", &c.weight_point_line},
        {"weight_line_vp", &c.weight_line_vp},
        {"weight_vp_orthogonality", &c.weight_vp_orthogonality},
        {"vp_orthogonality_min_angle_deg", &c.vp_orthogonality_min_angle_deg},
        {"min_association_weight", &c.min_association_weight},
        {"extract_point_line_threshold", &c.extract_point_line_threshold},
        {"extract_line_vp_angle_deg", &c.extract_line_vp_angle_deg},
        {"use_depth", &c.use_depth},
        {"depth_threshold_scale", &c.depth_threshold_scale},
        {"depth_sample_spacing_px", &c.depth_sample_spacing_px},
        {"depth_min_samples", &c.depth_min_samples},
        {"depth_max_iterations", &c.depth_max_iterations},
        {"depth_min_inlier_ratio", &c.depth_min_inlier_ratio},
        {"taus", &c.taus},
        {"inlier_rule", &c.inlier_rule},
        {"seed", &c.seed},
        {"threads", &c.threads},
    };
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& s) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != s.size() || !std::isfinite(v))
        throw InvalidInputError(key + ": expected a number, got '" + s + "'");
    return v;
}

long long parse_integer(const std::string& key, const std::string& s) {
    size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != s.size())
        throw InvalidInputError(key + ": expected an integer, got '" + s + "'");
    return v;
}

int parse_int(const std::string& key, const std::string& s) {
    const long long v = parse_integer(key, s);
    if (v < INT32_MIN || v > INT32_MAX)
        throw InvalidInputError(key + ": value out of range");
    return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on")
        return true;
    if (s == "false" || s == "0" || s == "no" || s == "off")
        return false;
    throw InvalidInputError(key + ": expected true or false, got '" + s + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos)
            throw InvalidInputError(key + ": empty list element");
        out.push_back(parse_double(key, item.substr(b, e - b + 1)));
    }
    if (out.empty())
        throw InvalidInputError(key + ": empty list");
    return out;
}

}  // namespace

std::vector<std::string> PipelineConfig::keys() {
    PipelineConfig c;
    std::vector<std::string> out;
    for (const Field& f : fields(c))
        out.push_back(f.name);
    return out;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    for (const Field& f : fields(*this)) {
        if (key != f.name)
            continue;
        std::visit(
            [&](auto* p) {
                using T = std::remove_pointer_t<decltype(p)>;
                if constexpr (std::is_same_v<T, double>)
                    *p = parse_double(key, value);
                else if constexpr (std::is_same_v<T, int>)
                    *p = parse_int(key, value);
                else if constexpr (std::is_same_v<T, bool>)
                    *p = parse_bool(key, value);
                else if constexpr (std::is_same_v<T, uint64_t>) {
                    const long long v = parse_integer(key, value);
                    if (v < 0)
                        throw InvalidInputError(key + ": must be non-negative");
                    *p = static_cast<uint64_t>(v);
                } else if constexpr (std::is_same_v<T, std::vector<double>>)
                    *p = parse_list(key, value);
                else {
                    if (value == "mean")
                        *p = evaluation::InlierRule::Mean;
                    else if (value == "max")
                        *p = evaluation::InlierRule::Max;
                    else
                        throw InvalidInputError(key + ": expected mean or max, got '" + value + "'");
                }
            },
            f.ptr);
        return;
    }
    throw InvalidInputError("unknown config key '" + key + "'");
}

std::string PipelineConfig::get(const std::string& key) const {
    PipelineConfig copy = *this;
    for (const Field& f : fields(copy)) {
        if (key != f.name)
            continue;
        return std::visit(
            [&](auto* p) -> std::string {
                using T = std::remove_pointer_t<decltype(p)>;
                if constexpr (std::is_same_v<T, double>)
                    return fmt_double(*p);
                else if constexpr (std::is_same_v<T, int>)
                    return std::to_string(*p);
                else if constexpr (std::is_same_v<T, bool>)
                    return *p ? "true" : "false";
                else if constexpr (std::is_same_v<T, uint64_t>)
                    return std::to_string(*p);
                else if constexpr (std::is_same_v<T, std::vector<double>>) {
                    std::string s;
                    for (size_t i = 0; i < p->size(); ++i)
                        s += (i ? "," : "") + fmt_double((*p)[i]);
                    return s;
                } else
                    return *p == evaluation::InlierRule::Mean ? "mean" : "max";
            },
            f.ptr);
    }
    throw InvalidInputError("unknown config key '" + key + "'");
}

void PipelineConfig::validate() const {
    auto positive = [](const char* name, double v) {
        if (!(v > 0.0))
            throw InvalidInputError(std::string("config: ") + name + " must be positive");
    };
    positive("n_neighbors", n_neighbors);
    positive("top_k_matches", top_k_matches);
    positive("tau_angle_3d_deg", tau_angle_3d_deg);
    positive("tau_angle_2d_deg", tau_angle_2d_deg);
    positive("tau_overlap", tau_overlap);
    positive("tau_perp_2d_px", tau_perp_2d_px);
    positive("tau_innerseg", tau_innerseg);
    positive("accept_threshold", accept_threshold);
    positive("min_triangulation_angle_deg", min_triangulation_angle_deg);
    positive("iou_threshold", iou_threshold);
    positive("point_line_threshold_px", point_line_threshold_px);
    positive("vp_inlier_px", vp_inlier_px);
    positive("vp_min_support", vp_min_support);
    positive("vp_max_iterations", vp_max_iterations);
    positive("vp_track_min_shared", vp_track_min_shared);
    positive("vp_track_max_angle_deg", vp_track_max_angle_deg);
    positive("edge_threshold", edge_threshold);
    positive("min_track_nodes", min_track_nodes);
    positive("min_support_images", min_support_images);
    positive("remerge_threshold", remerge_threshold);
    positive("max_iterations", max_iterations);
    positive("line_alpha", line_alpha);
    positive("cauchy_scale", cauchy_scale);
    positive("huber_scale", huber_scale);
    positive("vp_orthogonality_min_angle_deg", vp_orthogonality_min_angle_deg);
    positive("min_association_weight", min_association_weight);
    positive("extract_point_line_threshold", extract_point_line_threshold);
    positive("extract_line_vp_angle_deg", extract_line_vp_angle_deg);
    positive("depth_threshold_scale", depth_threshold_scale);
    positive("depth_sample_spacing_px", depth_sample_spacing_px);
    positive("depth_min_samples", depth_min_samples);
    positive("depth_max_iterations", depth_max_iterations);
    positive("depth_min_inlier_ratio", depth_min_inlier_ratio);
    positive("threads", threads);
    for (double w : {weight_line, weight_point, weight_point_line, weight_line_vp, weight_vp_orthogonality})
        if (!(w >= 0.0))
            throw InvalidInputError("config: term weights must be non-negative");
    if (!(score_gate > 0.0 && score_gate < 1.0))
        throw InvalidInputError("config: score_gate must lie in (0, 1)");
    if (taus.empty())
        throw InvalidInputError("config: taus must not be empty");
    for (double t : taus)
        positive("taus", t);
}

std::string PipelineConfig::serialize() const {
    std::string out;
    for (const std::string& k : keys())
        out += k + " = " + get(k) + "\n";
    return out;
}

void PipelineConfig::apply(const std::vector<io::KeyValue>& kvs, const std::string& name) {
    for (const io::KeyValue& kv : kvs) {
        try {
            set(kv.key, kv.value);
        } catch (const InvalidInputError& e) {
            throw InvalidInputError(name + ":" + std::to_string(kv.line) + ": " + e.what());
        }
    }
}

PipelineConfig PipelineConfig::parse(const std::string& text, const std::string& name) {
    PipelineConfig c;
    c.apply(io::parse_key_values(text, name), name);
    return c;
}

scoring::ScoringConfig PipelineConfig::scoring() const {
    scoring::ScoringConfig s;
    s.tau_angle_3d = deg2rad(tau_angle_3d_deg);
    s.tau_angle_2d = deg2rad(tau_angle_2d_deg);
    s.tau_overlap = tau_overlap;
    s.tau_perp_2d = tau_perp_2d_px;
    s.tau_innerseg = tau_innerseg;
    s.gate = score_gate;
    s.accept_threshold = accept_threshold;
    return s;
}

triangulation::TriangulationConfig PipelineConfig::triangulation() const {
    triangulation::TriangulationConfig t;
    t.min_angle = deg2rad(min_triangulation_angle_deg);
    t.iou_threshold = iou_threshold;
    t.use_line_line = use_line_line;
    t.use_points = use_points;
    t.use_vps = use_vps;
    return t;
}

association::VPConfig PipelineConfig::vp() const {
    association::VPConfig v;
    v.inlier_px = vp_inlier_px;
    v.min_support = vp_min_support;
    v.max_iterations = vp_max_iterations;
    v.seed = seed;
    return v;
}

association::VPTrackConfig PipelineConfig::vp_tracks() const {
    return {vp_track_min_shared, deg2rad(vp_track_max_angle_deg)};
}

tracks::TrackConfig PipelineConfig::tracks() const {
    tracks::TrackConfig t;
    t.edge_threshold = edge_threshold;
    t.min_track_nodes = min_track_nodes;
    t.min_support_images = min_support_images;
    t.remerge = remerge;
    t.remerge_threshold = remerge_threshold;
    t.threads = threads;
    return t;
}

optimize::ProblemOptions PipelineConfig::problem() const {
    optimize::ProblemOptions p;
    p.alpha = line_alpha;
    p.cauchy_scale = cauchy_scale;
    p.huber_scale = huber_scale;
    p.weight_line = weight_line;
    p.weight_point = weight_point;
    p.weight_point_line = weight_point_line;
    p.weight_line_vp = weight_line_vp;
    p.weight_vp_orthogonality = weight_vp_orthogonality;
    p.vp_orthogonality_min_angle = deg2rad(vp_orthogonality_min_angle_deg);
    return p;
}

optimize::SolverOptions PipelineConfig::solver() const {
    optimize::SolverOptions s;
    s.max_iterations = max_iterations;
    s.threads = threads;
    return s;
}

optimize::ExtractionConfig PipelineConfig::extraction() const {
    return {extract_point_line_threshold, deg2rad(extract_line_vp_angle_deg)};
}

depthfit::DepthFitConfig PipelineConfig::depth() const {
    depthfit::DepthFitConfig d;
    d.threshold_scale = depth_threshold_scale;
    d.sample_spacing = depth_sample_spacing_px;
    d.min_samples = depth_min_samples;
    d.max_iterations = depth_max_iterations;
    d.min_inlier_ratio = depth_min_inlier_ratio;
    d.seed = seed;
    return d;
}

evaluation::MetricsConfig PipelineConfig::metrics() const {
    evaluation::MetricsConfig m;
    m.taus = taus;
    m.rule = inlier_rule;
    m.threads = threads;
    return m;
}

evaluation::SceneSpec parse_scene_spec(const std::vector<io::KeyValue>& kvs, const std::string& name) {
    evaluation::SceneSpec s;
    for (const io::KeyValue& kv : kvs) {
        const std::string& k = kv.key;
        const std::string& v = kv.value;
        try {
            if (k == "seed") {
                const long long x = parse_integer(k, v);
                if (x < 0)
                    throw InvalidInputError(k + ": must be non-negative");
                s.seed = static_cast<uint64_t>(x);
            } else if (k == "num_views")
                s.num_views = parse_int(k, v);
            else if (k == "num_segments")
                s.num_segments = parse_int(k, v);
            else if (k == "box_half")
                s.box_half = parse_double(k, v);
            else if (k == "camera_distance")
                s.camera_distance = parse_double(k, v);
            else if (k == "camera_elevation_deg")
                s.camera_elevation_deg = parse_double(k, v);
            else if (k == "focal")
                s.focal = parse_double(k, v);
            else if (k == "width")
                s.width = parse_int(k, v);
            else if (k == "height")
                s.height = parse_int(k, v);
            else if (k == "noise_px")
                s.noise_px = parse_double(k, v);
            else if (k == "point_noise_px")
                s.point_noise_px = parse_double(k, v);
            else if (k == "occlusion_rate")
                s.occlusion_rate = parse_double(k, v);
            else if (k == "outlier_ratio")
                s.outlier_ratio = parse_double(k, v);
            else if (k == "fragments")
                s.fragments = parse_int(k, v);
            else if (k == "matches_per_segment")
                s.matches_per_segment = parse_int(k, v);
            else if (k == "min_length_px")
                s.min_length_px = parse_double(k, v);
            else if (k == "junctions")
                s.junctions = parse_bool(k, v);
            else if (k == "points_per_segment")
                s.points_per_segment = parse_int(k, v);
            else if (k == "render_depth")
                s.render_depth = parse_bool(k, v);
            else if (k == "scale")
                s.scale = parse_double(k, v);
            else
                throw InvalidInputError("unknown scene key '" + k + "'");
        } catch (const InvalidInputError& e) {
            throw InvalidInputError(name + ":" + std::to_string(kv.line) + ": " + e.what());
        }
    }
    try {
        s.validate();
    } catch (const InvalidInputError& e) {
        throw InvalidInputError(name + ": " + e.what());
    }
    return s;
}

std::string serialize_scene_spec(const evaluation::SceneSpec& s) {
    std::ostringstream o;
    auto b = [](bool v) { return v ? "true" : "false"; };
    o << "seed = " << s.seed << "\n"
      << "num_views = " << s.num_views << "\n"
      << "num_segments = " << s.num_segments << "\n"
      << "box_half = " << fmt_double(s.box_half) << "\n"
      << "camera_distance = " << fmt_double(s.camera_distance) << "\n"
      << "camera_elevation_deg = " << fmt_double(s.camera_elevation_deg) << "\n"
      << "focal = " << fmt_double(s.focal) << "\n"
      << "width = " << s.width << "\n"
      << "height = " << s.height << "\n"
      << "noise_px = " << fmt_double(s.noise_px) << "\n"
      << "point_noise_px = " << fmt_double(s.point_noise_px) << "\n"
      << "occlusion_rate = " << fmt_double(s.occlusion_rate) << "\n"
      << "outlier_ratio = " << fmt_double(s.outlier_ratio) << "\n"
      << "fragments = " << s.fragments << "\n"
      << "matches_per_segment = " << s.matches_per_segment << "\n"
      << "min_length_px = " << fmt_double(s.min_length_px) << "\n"
      << "junctions = " << b(s.junctions) << "\n"
      << "points_per_segment = " << s.points_per_segment << "\n"
      << "render_depth = " << b(s.render_depth) << "\n"
      << "scale = " << fmt_double(s.scale) << "\n";
    return o.str();
}

}  // namespace linemap::pipeline
