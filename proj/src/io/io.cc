#include "linemap/io/io.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace linemap::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw InvalidInputError(path + ": cannot open file");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw InvalidInputError(path + ": cannot write file");
    f << text;
    if (!f)
        throw InvalidInputError(path + ": write failed");
}

namespace {

bool blank(const std::string& text) {
    return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
}

json parse_json(const std::string& text, const std::string& name) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const size_t upto = std::min<size_t>(e.byte, text.size());
        const long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
        throw InvalidInputError(name + ":" + std::to_string(line) + ": " + e.what());
    }
}

// Element access that reports where things went wrong.
struct Reader {
    std::string name;

    [[noreturn]] void fail(const std::string& where, const std::string& what) const {
        throw InvalidInputError(name + ": " + where + ": " + what);
    }
    const json& field(const json& obj, const char* key, const std::string& where) const {
        if (!obj.is_object())
            fail(where, "expected an object");
        auto it = obj.find(key);
        if (it == obj.end())
            fail(where, std::string("missing key '") + key + "'");
        return *it;
    }
    double number(const json& v, const std::string& where) const {
        if (!v.is_number())
            fail(where, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d))
            fail(where, "non-finite number");
        return d;
    }
    int integer(const json& v, const std::string& where) const {
        if (!v.is_number_integer())
            fail(where, "expected an integer");
        const auto i = v.get<int64_t>();
        if (i < INT32_MIN || i > INT32_MAX)
            fail(where, "integer out of range");
        return static_cast<int>(i);
    }
    std::vector<double> numbers(const json& v, size_t n, const std::string& where) const {
        if (!v.is_array() || v.size() != n)
            fail(where, "expected an array of " + std::to_string(n) + " numbers");
        std::vector<double> out;
        for (size_t i = 0; i < n; ++i)
            out.push_back(number(v[i], where));
        return out;
    }
    std::pair<int, int> id_pair(const json& v, const std::string& where) const {
        if (!v.is_array() || v.size() != 2)
            fail(where, "expected [image_id, index]");
        return {integer(v[0], where), integer(v[1], where)};
    }
    const json& array(const json& v, const std::string& where) const {
        if (!v.is_array())
            fail(where, "expected an array");
        return v;
    }
    int key_id(const std::string& key, const std::string& where) const {
        size_t pos = 0;
        int id = 0;
        try {
            id = std::stoi(key, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != key.size())
            fail(where, "key '" + key + "' is not an integer image id");
        return id;
    }
};

M3D mat3(const std::vector<double>& v) {
    M3D m;
    m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
    return m;
}

json vec_json(const V3D& v) { return json::array({v.x(), v.y(), v.z()}); }

json segment_json(const Segment3D& s) {
    return json::array({s.e1.x(), s.e1.y(), s.e1.z(), s.e2.x(), s.e2.y(), s.e2.z()});
}

std::string dump(const json& j) { return j.dump(1) + "\n"; }

std::vector<CameraView> parse_cameras(const std::string& text, const std::string& name) {
    const Reader r{name};
    const json j = parse_json(text, name);
    r.array(j, "top level");
    std::vector<CameraView> cams;
    std::map<int, bool> seen;
    for (size_t i = 0; i < j.size(); ++i) {
        const std::string where = "camera entry " + std::to_string(i);
        const json& c = j[i];
        const int id = r.integer(r.field(c, "image_id", where), where);
        if (seen[id])
            r.fail(where, "duplicate image_id " + std::to_string(id));
        seen[id] = true;
        const M3D K = mat3(r.numbers(r.field(c, "K", where), 9, where + " K"));
        const M3D R = mat3(r.numbers(r.field(c, "R", where), 9, where + " R"));
        const auto t = r.numbers(r.field(c, "t", where), 3, where + " t");
        const int w = r.integer(r.field(c, "width", where), where);
        const int h = r.integer(r.field(c, "height", where), where);
        try {
            cams.emplace_back(id, K, R, V3D(t[0], t[1], t[2]), w, h);
        } catch (const InvalidInputError& e) {
            r.fail(where, e.what());
        }
    }
    return cams;
}

}  // namespace

InputBundle read_bundle(const std::string& dir) {
    InputBundle b;
    const fs::path root(dir);
    auto path_of = [&](const char* file) { return (root / file).string(); };

    const std::string cam_path = path_of("cameras.json");
    if (!fs::exists(cam_path))
        throw InvalidInputError(cam_path + ": missing required file");
    b.cameras = parse_cameras(read_text_file(cam_path), cam_path);
    std::map<int, const CameraView*> cams;
    for (const CameraView& c : b.cameras)
        cams[c.image_id()] = &c;

    const std::string seg_path = path_of("segments.json");
    if (!fs::exists(seg_path))
        throw InvalidInputError(seg_path + ": missing required file");
    {
        const std::string text = read_text_file(seg_path);
        const Reader r{seg_path};
        if (!blank(text)) {
            const json j = parse_json(text, seg_path);
            if (!j.is_object())
                r.fail("top level", "expected an object keyed by image id");
            for (auto it = j.begin(); it != j.end(); ++it) {
                const int id = r.key_id(it.key(), "top level");
                const std::string where = "image " + it.key();
                if (!cams.count(id))
                    r.fail(where, "no camera with this image id");
                auto& segs = b.segments[id];
                const json& arr = r.array(it.value(), where);
                for (size_t i = 0; i < arr.size(); ++i) {
                    const auto v = r.numbers(arr[i], 4, where + " segment " + std::to_string(i));
                    segs.emplace_back(V2D(v[0], v[1]), V2D(v[2], v[3]));
                }
            }
        }
    }
    auto check_ref = [&](const Reader& r, const std::pair<int, int>& ref, const std::string& where) {
        auto it = b.segments.find(ref.first);
        if (it == b.segments.end() || ref.second < 0 || ref.second >= static_cast<int>(it->second.size()))
            r.fail(where, "unknown segment [" + std::to_string(ref.first) + ", " + std::to_string(ref.second) + "]");
    };

    const std::string match_path = path_of("matches.json");
    if (!fs::exists(match_path))
        throw InvalidInputError(match_path + ": missing required file");
    {
        const std::string text = read_text_file(match_path);
        const Reader r{match_path};
        if (!blank(text)) {
            const json j = parse_json(text, match_path);
            r.array(j, "top level");
            for (size_t i = 0; i < j.size(); ++i) {
                const std::string where = "match entry " + std::to_string(i);
                MatchList m;
                m.ref = r.id_pair(r.field(j[i], "ref", where), where + " ref");
                check_ref(r, m.ref, where + " ref");
                const json& targets = r.array(r.field(j[i], "targets", where), where + " targets");
                for (size_t k = 0; k < targets.size(); ++k) {
                    const std::string tw = where + " target " + std::to_string(k);
                    m.targets.push_back(r.id_pair(targets[k], tw));
                    check_ref(r, m.targets.back(), tw);
                }
                b.matches.push_back(std::move(m));
            }
        }
    }

    const std::string point_path = path_of("points.json");
    if (fs::exists(point_path)) {
        const std::string text = read_text_file(point_path);
        const Reader r{point_path};
        if (!blank(text)) {
            const json j = parse_json(text, point_path);
            r.array(j, "top level");
            for (size_t i = 0; i < j.size(); ++i) {
                const std::string where = "point entry " + std::to_string(i);
                PointTrack p;
                const auto xyz = r.numbers(r.field(j[i], "xyz", where), 3, where + " xyz");
                p.xyz = V3D(xyz[0], xyz[1], xyz[2]);
                const json& obs = r.array(r.field(j[i], "observations", where), where + " observations");
                for (size_t k = 0; k < obs.size(); ++k) {
                    const std::string ow = where + " observation " + std::to_string(k);
                    if (!obs[k].is_array() || obs[k].size() != 3)
                        r.fail(ow, "expected [image_id, x, y]");
                    const int id = r.integer(obs[k][0], ow);
                    if (!cams.count(id))
                        r.fail(ow, "no camera with image id " + std::to_string(id));
                    p.observations.emplace_back(id, V2D(r.number(obs[k][1], ow), r.number(obs[k][2], ow)));
                }
                b.points.push_back(std::move(p));
            }
        }
    }

    const std::string nb_path = path_of("neighbors.json");
    if (fs::exists(nb_path)) {
        const Reader r{nb_path};
        const json j = parse_json(read_text_file(nb_path), nb_path);
        if (!j.is_object())
            r.fail("top level", "expected an object keyed by image id");
        std::map<int, std::vector<int>> nb;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const int id = r.key_id(it.key(), "top level");
            const std::string where = "image " + it.key();
            if (!cams.count(id))
                r.fail(where, "no camera with this image id");
            const json& arr = r.array(it.value(), where);
            for (const json& v : arr) {
                const int o = r.integer(v, where);
                if (!cams.count(o))
                    r.fail(where, "unknown neighbor image id " + std::to_string(o));
                nb[id].push_back(o);
            }
        }
        b.neighbors = std::move(nb);
    }

    const fs::path depth_dir = root / "depth";
    if (fs::is_directory(depth_dir)) {
        for (const CameraView& c : b.cameras) {
            const fs::path p = depth_dir / (std::to_string(c.image_id()) + ".bin");
            if (fs::exists(p))
                b.depths.emplace(c.image_id(), depthfit::read_depth_map(p.string()));
        }
    }
    return b;
}

void write_bundle(const std::string& dir, const InputBundle& b) {
    const fs::path root(dir);
    fs::create_directories(root);
    json cams = json::array();
    for (const CameraView& c : b.cameras) {
        json K = json::array(), R = json::array();
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k) {
                K.push_back(c.K()(r, k));
                R.push_back(c.R()(r, k));
            }
        cams.push_back({{"image_id", c.image_id()}, {"K", K}, {"R", R}, {"t", vec_json(c.t())},
                        {"width", c.width()}, {"height", c.height()}});
    }
    write_text_file((root / "cameras.json").string(), dump(cams));

    json segs = json::object();
    for (const auto& [id, list] : b.segments) {
        json arr = json::array();
        for (const Segment2D& s : list)
            arr.push_back({s.p1.x(), s.p1.y(), s.p2.x(), s.p2.y()});
        segs[std::to_string(id)] = arr;
    }
    write_text_file((root / "segments.json").string(), dump(segs));

    json matches = json::array();
    for (const MatchList& m : b.matches) {
        json targets = json::array();
        for (const auto& t : m.targets)
            targets.push_back({t.first, t.second});
        matches.push_back({{"ref", {m.ref.first, m.ref.second}}, {"targets", targets}});
    }
    write_text_file((root / "matches.json").string(), dump(matches));

    json points = json::array();
    for (const PointTrack& p : b.points) {
        json obs = json::array();
        for (const auto& [id, px] : p.observations)
            obs.push_back({id, px.x(), px.y()});
        points.push_back({{"xyz", vec_json(p.xyz)}, {"observations", obs}});
    }
    write_text_file((root / "points.json").string(), dump(points));

    if (b.neighbors) {
        json nb = json::object();
        for (const auto& [id, list] : *b.neighbors)
            nb[std::to_string(id)] = list;
        write_text_file((root / "neighbors.json").string(), dump(nb));
    }
    if (!b.depths.empty()) {
        fs::create_directories(root / "depth");
        for (const auto& [id, d] : b.depths)
            depthfit::write_depth_map((root / "depth" / (std::to_string(id) + ".bin")).string(), d);
    }
}

GroundTruth read_ground_truth(const std::string& path) {
    const Reader r{path};
    const json j = parse_json(read_text_file(path), path);
    if (!j.is_object())
        r.fail("top level", "expected an object");
    GroundTruth gt;
    auto vec3 = [&](const json& v, const std::string& where) {
        const auto n = r.numbers(v, 3, where);
        return V3D(n[0], n[1], n[2]);
    };
    const json& segs = r.array(r.field(j, "segments", "top level"), "segments");
    for (size_t i = 0; i < segs.size(); ++i) {
        const auto v = r.numbers(segs[i], 6, "segment " + std::to_string(i));
        gt.segments.emplace_back(V3D(v[0], v[1], v[2]), V3D(v[3], v[4], v[5]));
    }
    if (j.contains("vp_directions"))
        for (const json& v : r.array(j["vp_directions"], "vp_directions"))
            gt.vp_directions.push_back(vec3(v, "vp_directions"));
    if (j.contains("segment_vp"))
        for (const json& v : r.array(j["segment_vp"], "segment_vp"))
            gt.segment_vp.push_back(r.integer(v, "segment_vp"));
    if (j.contains("points"))
        for (const json& v : r.array(j["points"], "points"))
            gt.points.push_back(vec3(v, "points"));
    if (j.contains("junctions"))
        for (const json& v : r.array(j["junctions"], "junctions"))
            gt.junctions.push_back(vec3(v, "junctions"));
    if (j.contains("junction_lines"))
        for (const json& v : r.array(j["junction_lines"], "junction_lines"))
            gt.junction_lines.push_back(r.id_pair(v, "junction_lines"));
    if (j.contains("segment_source")) {
        const json& src = j["segment_source"];
        if (!src.is_object())
            r.fail("segment_source", "expected an object keyed by image id");
        for (auto it = src.begin(); it != src.end(); ++it) {
            auto& list = gt.segment_source[r.key_id(it.key(), "segment_source")];
            for (const json& v : r.array(it.value(), "segment_source"))
                list.push_back(r.integer(v, "segment_source"));
        }
    }
    return gt;
}

void write_ground_truth(const std::string& path, const GroundTruth& gt) {
    json j = json::object();
    j["segments"] = json::array();
    for (const Segment3D& s : gt.segments)
        j["segments"].push_back(segment_json(s));
    j["vp_directions"] = json::array();
    for (const V3D& v : gt.vp_directions)
        j["vp_directions"].push_back(vec_json(v));
    j["segment_vp"] = gt.segment_vp;
    j["points"] = json::array();
    for (const V3D& v : gt.points)
        j["points"].push_back(vec_json(v));
    j["junctions"] = json::array();
    for (const V3D& v : gt.junctions)
        j["junctions"].push_back(vec_json(v));
    j["junction_lines"] = json::array();
    for (const auto& [a, l] : gt.junction_lines)
        j["junction_lines"].push_back({a, l});
    j["segment_source"] = json::object();
    for (const auto& [id, list] : gt.segment_source)
        j["segment_source"][std::to_string(id)] = list;
    write_text_file(path, dump(j));
}

double round_significant(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return std::strtod(buf, nullptr);
}

namespace {

std::string fmt9(double v) {
    if (!std::isfinite(v))
        throw DegenerateError("non-finite value in track output");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string tracks_to_json(std::span<const TrackRecord> tracks) {
    if (tracks.empty())
        return "[]\n";
    std::string out = "[\n";
    for (size_t i = 0; i < tracks.size(); ++i) {
        const TrackRecord& t = tracks[i];
        out += " {\"endpoints\": [";
        const double e[6] = {t.segment.e1.x(), t.segment.e1.y(), t.segment.e1.z(),
                             t.segment.e2.x(), t.segment.e2.y(), t.segment.e2.z()};
        for (int k = 0; k < 6; ++k)
            out += (k ? ", " : "") + fmt9(e[k]);
        out += "], \"source_counts\": {";
        bool first = true;
        for (const auto& [name, n] : t.source_counts) {
            out += (first ? "\"" : ", \"") + name + "\": " + std::to_string(n);
            first = false;
        }
        out += "}, \"supports\": [";
        for (size_t k = 0; k < t.supports.size(); ++k)
            out += (k ? ", [" : "[") + std::to_string(t.supports[k].first) + ", " +
                   std::to_string(t.supports[k].second) + "]";
        out += i + 1 < tracks.size() ? "]},\n" : "]}\n";
    }
    return out + "]\n";
}

std::vector<TrackRecord> tracks_from_json(const std::string& text, const std::string& name) {
    const Reader r{name};
    const json j = parse_json(text, name);
    r.array(j, "top level");
    std::vector<TrackRecord> out;
    for (size_t i = 0; i < j.size(); ++i) {
        const std::string where = "track " + std::to_string(i);
        TrackRecord t;
        const auto e = r.numbers(r.field(j[i], "endpoints", where), 6, where + " endpoints");
        t.segment = Segment3D(V3D(e[0], e[1], e[2]), V3D(e[3], e[4], e[5]));
        for (const json& s : r.array(r.field(j[i], "supports", where), where + " supports"))
            t.supports.push_back(r.id_pair(s, where + " supports"));
        const json& sc = r.field(j[i], "source_counts", where);
        if (!sc.is_object())
            r.fail(where, "source_counts must be an object");
        for (auto it = sc.begin(); it != sc.end(); ++it)
            t.source_counts[it.key()] = r.integer(it.value(), where + " source_counts");
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<TrackRecord> read_tracks(const std::string& path) { return tracks_from_json(read_text_file(path), path); }

void write_tracks(const std::string& path, std::span<const TrackRecord> tracks) {
    write_text_file(path, tracks_to_json(tracks));
}

std::string line_point_graph_to_json(std::span<const std::pair<int, int>> edges) {
    json e = json::array();
    for (const auto& [l, p] : edges)
        e.push_back({l, p});
    return dump(json{{"edges", e}});
}

std::string line_vp_graph_to_json(std::span<const V3D> vps, std::span<const std::pair<int, int>> edges) {
    json e = json::array(), v = json::array();
    for (const auto& [l, p] : edges)
        e.push_back({l, p});
    for (const V3D& d : vps)
        v.push_back({round_significant(d.x()), round_significant(d.y()), round_significant(d.z())});
    return dump(json{{"edges", e}, {"vps", v}});
}

std::string tracks_to_ply(std::span<const TrackRecord> tracks) {
    std::string out = "ply\nformat ascii 1.0\n";
    out += "element vertex " + std::to_string(2 * tracks.size()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    out += "element edge " + std::to_string(tracks.size()) + "\n";
    out += "property int vertex1\nproperty int vertex2\nend_header\n";
    for (const TrackRecord& t : tracks)
        for (const V3D& p : {t.segment.e1, t.segment.e2})
            out += fmt9(p.x()) + " " + fmt9(p.y()) + " " + fmt9(p.z()) + "\n";
    for (size_t i = 0; i < tracks.size(); ++i)
        out += std::to_string(2 * i) + " " + std::to_string(2 * i + 1) + "\n";
    return out;
}

std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& name) {
    std::vector<KeyValue> out;
    std::istringstream is(text);
    std::string line;
    int n = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos)
            return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    while (std::getline(is, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.resize(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidInputError(name + ":" + std::to_string(n) + ": expected key = value");
        KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), n};
        if (kv.key.empty())
            throw InvalidInputError(name + ":" + std::to_string(n) + ": empty key");
        out.push_back(std::move(kv));
    }
    return out;
}

std::vector<KeyValue> read_key_values(const std::string& path) { return parse_key_values(read_text_file(path), path); }

}  // namespace linemap::io
