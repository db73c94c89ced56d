#include "doctest.h"

#include "linemap/evaluation/evaluation.h"
#include "linemap/io/io.h"
#include "linemap/pipeline/pipeline.h"

#include <filesystem>
#include <functional>
#include <random>

using namespace linemap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("linemap_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
    std::string file(const std::string& f) const { return (path / f).string(); }
};

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const InvalidInputError& e) {
        return e.what();
    }
    return "";
}

void write_minimal(const TempDir& d) {
    io::write_text_file(d.file("cameras.json"),
                        R"([{"image_id": 0, "K": [500,0,320,0,500,240,0,0,1], "R": [1,0,0,0,1,0,0,0,1],
                             "t": [0,0,0], "width": 640, "height": 480}])");
    io::write_text_file(d.file("segments.json"), R"({"0": [[1,2,30,40]]})");
    io::write_text_file(d.file("matches.json"), "[]");
}

}  // namespace

TEST_CASE("bundle round trip is lossless") {
    evaluation::SceneSpec spec;
    spec.seed = 4;
    spec.num_views = 5;
    spec.noise_px = 0.7;
    spec.render_depth = true;
    spec.width = 120;
    spec.height = 90;
    spec.focal = 100;
    spec.min_length_px = 3;
    const auto sc = evaluation::generate_scene(spec);
    TempDir d("bundle");
    io::write_bundle(d.str(), sc.bundle);
    const io::InputBundle b = io::read_bundle(d.str());
    REQUIRE(b.cameras.size() == sc.bundle.cameras.size());
    for (size_t i = 0; i < b.cameras.size(); ++i) {
        CHECK(b.cameras[i].K() == sc.bundle.cameras[i].K());
        CHECK(b.cameras[i].R() == sc.bundle.cameras[i].R());
        CHECK(b.cameras[i].t() == sc.bundle.cameras[i].t());
    }
    REQUIRE(b.segments.size() == sc.bundle.segments.size());
    for (const auto& [img, segs] : sc.bundle.segments)
        for (size_t i = 0; i < segs.size(); ++i) {
            CHECK(b.segments.at(img)[i].p1 == segs[i].p1);
            CHECK(b.segments.at(img)[i].p2 == segs[i].p2);
        }
    REQUIRE(b.matches.size() == sc.bundle.matches.size());
    for (size_t i = 0; i < b.matches.size(); ++i) {
        CHECK(b.matches[i].ref == sc.bundle.matches[i].ref);
        CHECK(b.matches[i].targets == sc.bundle.matches[i].targets);
    }
    REQUIRE(b.points.size() == sc.bundle.points.size());
    for (size_t i = 0; i < b.points.size(); ++i) {
        CHECK(b.points[i].xyz == sc.bundle.points[i].xyz);
        REQUIRE(b.points[i].observations.size() == sc.bundle.points[i].observations.size());
        for (size_t k = 0; k < b.points[i].observations.size(); ++k)
            CHECK(b.points[i].observations[k] == sc.bundle.points[i].observations[k]);
    }
    REQUIRE(b.depths.size() == 5);
    for (const auto& [id, dm] : sc.bundle.depths) {
        const auto& a = dm.values();
        const auto& c = b.depths.at(id).values();
        REQUIRE(a.size() == c.size());
        for (size_t i = 0; i < a.size(); ++i)
            CHECK(((std::isnan(a[i]) && std::isnan(c[i])) || a[i] == c[i]));
    }
    CHECK_FALSE(b.neighbors.has_value());

    io::write_ground_truth(d.file("gt.json"), sc.gt);
    const io::GroundTruth g = io::read_ground_truth(d.file("gt.json"));
    REQUIRE(g.segments.size() == sc.gt.segments.size());
    for (size_t i = 0; i < g.segments.size(); ++i)
        CHECK(g.segments[i].e1 == sc.gt.segments[i].e1);
    CHECK(g.segment_vp == sc.gt.segment_vp);
    CHECK(g.junction_lines == sc.gt.junction_lines);
    CHECK(g.segment_source == sc.gt.segment_source);
}

TEST_CASE("malformed inputs name the file") {
    TempDir d("malformed");
    CHECK(error_of([&] { io::read_bundle(d.str()); }).find("cameras.json") != std::string::npos);

    write_minimal(d);
    CHECK_NOTHROW(io::read_bundle(d.str()));

    io::write_text_file(d.file("cameras.json"), "[\n{\"image_id\": 0,\n \"K\": [1,2,]\n}]");
    const std::string e1 = error_of([&] { io::read_bundle(d.str()); });
    CHECK(e1.find("cameras.json:3") != std::string::npos);

    write_minimal(d);
    io::write_text_file(d.file("segments.json"), R"({"0": [[1,2,30]]})");
    CHECK(error_of([&] { io::read_bundle(d.str()); }).find("segments.json") != std::string::npos);
    io::write_text_file(d.file("segments.json"), R"({"7": [[1,2,30,40]]})");
    CHECK(error_of([&] { io::read_bundle(d.str()); }).find("no camera") != std::string::npos);

    write_minimal(d);
    io::write_text_file(d.file("matches.json"), R"([{"ref": [0, 3], "targets": []}])");
    CHECK(error_of([&] { io::read_bundle(d.str()); }).find("matches.json") != std::string::npos);

    write_minimal(d);
    io::write_text_file(d.file("cameras.json"),
                        R"([{"image_id": 0, "K": [500,0,320,0,500,240,0,0,1], "R": [1,0,0,0,2,0,0,0,1],
                             "t": [0,0,0], "width": 640, "height": 480}])");
    CHECK(error_of([&] { io::read_bundle(d.str()); }).find("rotation") != std::string::npos);

    write_minimal(d);
    io::write_text_file(d.file("segments.json"), "  \n");
    const io::InputBundle empty = io::read_bundle(d.str());
    CHECK(empty.segments.empty());

    write_minimal(d);
    fs::create_directories(d.path / "depth");
    io::write_text_file(d.file("depth/0.bin"), "abc");
    CHECK(error_of([&] { io::read_bundle(d.str()); }).find("0.bin") != std::string::npos);
}

TEST_CASE("tracks file is canonical") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    std::vector<io::TrackRecord> tracks;
    for (int i = 0; i < 20; ++i) {
        io::TrackRecord t;
        t.segment = Segment3D(V3D(u(rng), u(rng), u(rng)) * 1e-3, V3D(u(rng), u(rng), u(rng)));
        t.supports = {{i, 0}, {i + 1, 3}};
        t.source_counts = {{"line_line", i}, {"line_vp", 1}};
        tracks.push_back(t);
    }
    const std::string a = io::tracks_to_json(tracks);
    const auto back = io::tracks_from_json(a, "tracks.json");
    REQUIRE(back.size() == tracks.size());
    for (size_t i = 0; i < tracks.size(); ++i) {
        CHECK((back[i].segment.e1 - tracks[i].segment.e1).norm() <= 1e-8 * tracks[i].segment.e1.norm());
        CHECK(back[i].supports == tracks[i].supports);
        CHECK(back[i].source_counts == tracks[i].source_counts);
    }
    CHECK(io::tracks_to_json(back) == a);
    CHECK(io::tracks_to_json(std::vector<io::TrackRecord>{}) == "[]\n");
    CHECK(io::tracks_from_json("[]", "x").empty());
    CHECK(io::round_significant(1.23456789012, 9) == 1.23456789);

    const std::string ply = io::tracks_to_ply(tracks);
    CHECK(ply.find("element vertex 40\n") != std::string::npos);
    CHECK(ply.find("element edge 20\n") != std::string::npos);
    CHECK(ply.substr(ply.size() - 6) == "38 39\n");

    CHECK_THROWS_AS(io::tracks_from_json(R"([{"endpoints": [1,2,3], "supports": [], "source_counts": {}}])", "t"),
                    InvalidInputError);
}

TEST_CASE("key value config") {
    const auto kv = io::parse_key_values("# comment\n a = 1 \n\nb=x y # trailing\n", "cfg");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0].key == "a");
    CHECK(kv[0].value == "1");
    CHECK(kv[1].value == "x y");
    CHECK(kv[1].line == 4);
    CHECK_THROWS_WITH_AS(io::parse_key_values("a = 1\nnonsense\n", "cfg"), "cfg:2: expected key = value",
                         InvalidInputError);

    pipeline::PipelineConfig c;
    c.tau_innerseg = 0.1 + 0.2;
    c.taus = {1.0 / 3.0, 0.25};
    c.seed = 12345678901234ULL;
    c.use_vps = false;
    c.inlier_rule = evaluation::InlierRule::Max;
    const std::string text = c.serialize();
    const pipeline::PipelineConfig d = pipeline::PipelineConfig::parse(text);
    CHECK(d.serialize() == text);
    CHECK(d.tau_innerseg == c.tau_innerseg);
    CHECK(d.taus == c.taus);
    CHECK(d.seed == c.seed);
    CHECK_FALSE(d.use_vps);
    CHECK(d.inlier_rule == evaluation::InlierRule::Max);
    CHECK(pipeline::PipelineConfig::keys().size() == static_cast<size_t>(std::count(text.begin(), text.end(), '\n')));

    CHECK_THROWS_WITH_AS(pipeline::PipelineConfig::parse("n_neighbors = 3\nbogus = 1\n", "my.cfg"),
                         "my.cfg:2: unknown config key 'bogus'", InvalidInputError);
    CHECK_THROWS_AS(pipeline::PipelineConfig::parse("top_k_matches = ten\n"), InvalidInputError);
    pipeline::PipelineConfig bad;
    bad.tau_overlap = -1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);

    const auto spec = pipeline::parse_scene_spec(io::parse_key_values("seed = 5\nnoise_px = 0.5\n", "s"), "s");
    CHECK(spec.seed == 5);
    CHECK(spec.noise_px == 0.5);
    const auto again = pipeline::parse_scene_spec(io::parse_key_values(pipeline::serialize_scene_spec(spec), "s"), "s");
    CHECK(pipeline::serialize_scene_spec(again) == pipeline::serialize_scene_spec(spec));
    CHECK_THROWS_AS(pipeline::parse_scene_spec(io::parse_key_values("num_views = 1\n", "s"), "s"), InvalidInputError);
}
