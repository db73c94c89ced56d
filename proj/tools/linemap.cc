#include "linemap/pipeline/pipeline.h"

#include <CLI11.hpp>

#include <iostream>

using namespace linemap;

namespace {

constexpr int kPipelineFailure = 1;
constexpr int kInputError = 2;

struct Overrides {
    std::string config_path;
    std::vector<std::string> sets;
    int threads = 0;
    int64_t seed = -1;
};

void add_overrides(CLI::App* app, Overrides& o) {
    app->add_option("--config", o.config_path, "key = value configuration file");
    app->add_option("--set", o.sets, "override a configuration key (key=value), repeatable");
    app->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    app->add_option("--seed", o.seed, "random seed")->check(CLI::NonNegativeNumber);
}

std::vector<io::KeyValue> flag_values(const std::vector<std::string>& sets) {
    std::vector<io::KeyValue> out;
    for (const std::string& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw InvalidInputError("--set expects key=value, got '" + s + "'");
        out.push_back({s.substr(0, eq), s.substr(eq + 1), 0});
    }
    return out;
}

pipeline::PipelineConfig load_config(const Overrides& o) {
    pipeline::PipelineConfig c;
    if (!o.config_path.empty())
        c.apply(io::read_key_values(o.config_path), o.config_path);
    for (const io::KeyValue& kv : flag_values(o.sets)) {
        try {
            c.set(kv.key, kv.value);
        } catch (const InvalidInputError& e) {
            throw InvalidInputError(std::string("--set: ") + e.what());
        }
    }
    if (o.threads > 0)
        c.threads = o.threads;
    if (o.seed >= 0)
        c.seed = static_cast<uint64_t>(o.seed);
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view 3D line mapping"};
    app.require_subcommand(1);

    std::string input, output;
    Overrides map_o;
    auto* map_cmd = app.add_subcommand("map", "reconstruct line tracks from an input bundle");
    map_cmd->add_option("--input,-i", input, "input bundle directory")->required();
    map_cmd->add_option("--output,-o", output, "output directory")->required();
    add_overrides(map_cmd, map_o);

    Overrides depth_o;
    auto* depth_cmd = app.add_subcommand("fit-depth", "fit lines from depth maps and build tracks");
    depth_cmd->add_option("--input,-i", input, "input bundle directory with depth/")->required();
    depth_cmd->add_option("--output,-o", output, "output directory")->required();
    add_overrides(depth_cmd, depth_o);

    std::string spec_path;
    std::vector<std::string> spec_sets;
    int64_t synth_seed = -1;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic input bundle and gt.json");
    synth_cmd->add_option("--spec", spec_path, "key = value scene description");
    synth_cmd->add_option("--set", spec_sets, "override a scene key (key=value), repeatable");
    synth_cmd->add_option("--seed", synth_seed, "random seed")->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--output,-o", output, "output directory")->required();

    std::string tracks_path, gt_path, metrics_path, taus_arg, rule = "mean";
    int eval_threads = 1;
    auto* eval_cmd = app.add_subcommand("eval", "length recall and inlier percentage against ground truth");
    eval_cmd->add_option("--tracks", tracks_path, "tracks.json")->required();
    eval_cmd->add_option("--gt", gt_path, "gt.json")->required();
    eval_cmd->add_option("--taus", taus_arg, "comma-separated distance thresholds")->required();
    eval_cmd->add_option("--rule", rule, "per-track inlier rule")->check(CLI::IsMember({"mean", "max"}));
    eval_cmd->add_option("--output,-o", metrics_path, "metrics JSON path");
    eval_cmd->add_option("--threads", eval_threads, "worker threads")->check(CLI::PositiveNumber);

    uncertainty::DegeneracyConfig deg;
    std::string csv_path;
    auto* deg_cmd = app.add_subcommand("degeneracy", "triangulation uncertainty versus line-plane angle (CSV)");
    deg_cmd->add_option("--output,-o", csv_path, "CSV path (stdout when omitted)");
    deg_cmd->add_option("--samples", deg.samples, "lines per angle")->check(CLI::PositiveNumber);
    deg_cmd->add_option("--seed", deg.seed, "random seed");
    deg_cmd->add_option("--angles", deg.angles_deg, "angles in degrees (default 1..90)")->delimiter(',');
    deg_cmd->add_option("--baseline", deg.baseline, "camera baseline")->check(CLI::PositiveNumber);
    deg_cmd->add_option("--focal", deg.focal, "focal length in pixels")->check(CLI::PositiveNumber);
    deg_cmd->add_option("--plane-z", deg.plane_z, "depth of the line plane")->check(CLI::PositiveNumber);
    deg_cmd->add_option("--threads", deg.threads, "worker threads")->check(CLI::PositiveNumber);

    auto* cfg_cmd = app.add_subcommand("print-config", "print every configuration key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kInputError;
    }

    try {
        if (*map_cmd) {
            pipeline::cmd_map(input, load_config(map_o), output);
        } else if (*depth_cmd) {
            pipeline::cmd_fit_depth(input, load_config(depth_o), output);
        } else if (*synth_cmd) {
            std::vector<io::KeyValue> kvs;
            if (!spec_path.empty())
                kvs = io::read_key_values(spec_path);
            for (const io::KeyValue& kv : flag_values(spec_sets))
                kvs.push_back(kv);
            if (synth_seed >= 0)
                kvs.push_back({"seed", std::to_string(synth_seed), 0});
            pipeline::cmd_synth(pipeline::parse_scene_spec(kvs, spec_path.empty() ? "scene" : spec_path), output);
        } else if (*eval_cmd) {
            pipeline::PipelineConfig c;
            c.set("taus", taus_arg);
            c.set("inlier_rule", rule);
            c.threads = eval_threads;
            std::cout << pipeline::cmd_eval(tracks_path, gt_path, c.metrics(), metrics_path);
        } else if (*deg_cmd) {
            std::cout << pipeline::cmd_degeneracy(deg, csv_path);
        } else if (*cfg_cmd) {
            std::cout << pipeline::PipelineConfig{}.serialize();
        }
    } catch (const InvalidInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "pipeline failure: " << e.what() << "\n";
        return kPipelineFailure;
    }
    return 0;
}
