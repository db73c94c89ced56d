#pragma once

#include "linemap/io/bundle.h"

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace linemap::io {

// Parse failures throw InvalidInputError with the file name (and line when known).
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

InputBundle read_bundle(const std::string& dir);
void write_bundle(const std::string& dir, const InputBundle& bundle);

GroundTruth read_ground_truth(const std::string& path);
void write_ground_truth(const std::string& path, const GroundTruth& gt);

struct TrackRecord {
    Segment3D segment;
    std::vector<std::pair<int, int>> supports;  // (image_id, segment index)
    std::map<std::string, int> source_counts;
};

double round_significant(double v, int digits = 9);

// Canonical text: fixed key order and 9 significant digits, so a parse and
// re-serialize reproduces the same bytes.
std::string tracks_to_json(std::span<const TrackRecord> tracks);
std::vector<TrackRecord> tracks_from_json(const std::string& text, const std::string& name);
std::vector<TrackRecord> read_tracks(const std::string& path);
void write_tracks(const std::string& path, std::span<const TrackRecord> tracks);

std::string line_point_graph_to_json(std::span<const std::pair<int, int>> edges);
std::string line_vp_graph_to_json(std::span<const V3D> vps, std::span<const std::pair<int, int>> edges);

// ASCII PLY with two vertices and one edge per track.
std::string tracks_to_ply(std::span<const TrackRecord> tracks);

struct KeyValue {
    std::string key;
    std::string value;
    int line = 0;
};

// Flat "key = value" text; '#' starts a comment.
std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& name);
std::vector<KeyValue> read_key_values(const std::string& path);

}  // namespace linemap::io
