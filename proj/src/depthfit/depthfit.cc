#include "linemap/depthfit/depthfit.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace linemap::depthfit {

DepthMap::DepthMap(int width, int height)
    : DepthMap(width, height,
               std::vector<float>(static_cast<size_t>(std::max(0, width)) * std::max(0, height),
                                  std::numeric_limits<float>::quiet_NaN())) {}

DepthMap::DepthMap(int width, int height, std::vector<float> values)
    : width_(width), height_(height), values_(std::move(values)) {
    if (width <= 0 || height <= 0)
        throw InvalidInputError("depth map size must be positive");
    if (values_.size() != static_cast<size_t>(width) * height)
        throw InvalidInputError("depth map value count does not match its size");
}

std::optional<double> DepthMap::sample(const V2D& px) const {
    if (!px.allFinite())
        return std::nullopt;
    const double fu = std::floor(px.x()), fv = std::floor(px.y());
    if (px.x() < 0.0 || px.y() < 0.0 || px.x() > width_ - 1 || px.y() > height_ - 1)
        return std::nullopt;
    const int u0 = static_cast<int>(fu), v0 = static_cast<int>(fv);
    const int u1 = std::min(u0 + 1, width_ - 1), v1 = std::min(v0 + 1, height_ - 1);
    const double a = px.x() - fu, b = px.y() - fv;
    const int us[2] = {u0, u1}, vs[2] = {v0, v1};
    const double wu[2] = {1.0 - a, a}, wv[2] = {1.0 - b, b};
    double inv = 0.0;
    for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 2; ++i) {
            const double d = at(us[i], vs[j]);
            if (!(d > 0.0) || !std::isfinite(d))
                return std::nullopt;
            inv += wu[i] * wv[j] / d;
        }
    }
    return 1.0 / inv;
}

namespace {

static_assert(std::endian::native == std::endian::little, "depth IO assumes a little-endian host");

}  // namespace

DepthMap read_depth_map(std::istream& is, const std::string& name) {
    uint32_t dims[2];
    if (!is.read(reinterpret_cast<char*>(dims), sizeof(dims)))
        throw InvalidInputError(name + ": truncated header");
    if (dims[0] == 0 || dims[1] == 0 || dims[0] > (1u << 16) || dims[1] > (1u << 16))
        throw InvalidInputError(name + ": invalid size");
    std::vector<float> values(static_cast<size_t>(dims[0]) * dims[1]);
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float))))
        throw InvalidInputError(name + ": truncated data");
    return DepthMap(static_cast<int>(dims[0]), static_cast<int>(dims[1]), std::move(values));
}

DepthMap read_depth_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw InvalidInputError(path + ": cannot open");
    return read_depth_map(f, path);
}

void write_depth_map(std::ostream& os, const DepthMap& depth) {
    const uint32_t dims[2] = {static_cast<uint32_t>(depth.width()), static_cast<uint32_t>(depth.height())};
    os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    os.write(reinterpret_cast<const char*>(depth.values().data()),
             static_cast<std::streamsize>(depth.values().size() * sizeof(float)));
}

void write_depth_map(const std::string& path, const DepthMap& depth) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw InvalidInputError(path + ": cannot write");
    write_depth_map(f, depth);
}

std::vector<V3D> backproject_segment(const Segment2D& segment, const DepthMap& depth, const CameraView& view,
                                     double spacing) {
    std::vector<V3D> out;
    if (!segment.is_valid() || !(spacing > 0.0))
        return out;
    const int n = static_cast<int>(std::ceil(segment.length() / spacing)) + 1;
    const M3D Rt = view.R().transpose();
    for (int i = 0; i < n; ++i) {
        const V2D px = segment.p1 + (segment.p2 - segment.p1) * (static_cast<double>(i) / (n - 1));
        const auto z = depth.sample(px);
        if (!z)
            continue;
        out.push_back(Rt * (view.normalized(px) * *z - view.t()));
    }
    return out;
}

namespace {

std::vector<int> inliers_of(const std::vector<V3D>& pts, const PluckerLine& line, double thr, double* sum) {
    std::vector<int> in;
    double s = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
        const double d = line.distance(pts[i]);
        if (d <= thr) {
            in.push_back(static_cast<int>(i));
            s += d;
        }
    }
    if (sum)
        *sum = s;
    return in;
}

}  // namespace

DepthFitResult fit_line_from_depth(const Segment2D& segment, const DepthMap& depth, const CameraView& view,
                                   const DepthFitConfig& config) {
    const std::vector<V3D> pts = backproject_segment(segment, depth, view, config.sample_spacing);
    if (static_cast<int>(pts.size()) < std::max(2, config.min_samples))
        throw DegenerateError("too few valid depth samples (" + std::to_string(pts.size()) + ")");
    std::vector<double> depths;
    depths.reserve(pts.size());
    for (const V3D& p : pts)
        depths.push_back(view.depth(p));
    std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
    const double thr = config.threshold_scale * depths[depths.size() / 2] / view.focal();

    const size_t n = pts.size();
    std::vector<int> best;
    double best_sum = 0.0;
    auto consider = [&](std::vector<int> in, double sum) {
        if (in.size() > best.size() || (in.size() == best.size() && !in.empty() && sum < best_sum)) {
            best = std::move(in);
            best_sum = sum;
            return true;
        }
        return false;
    };
    // Local optimization: least-squares refit on the inliers until the set stops growing.
    auto local_refit = [&]() {
        for (int k = 0; k < 10; ++k) {
            std::vector<V3D> sub;
            for (int i : best)
                sub.push_back(pts[i]);
            const auto line = fit_line_pca(sub);
            if (!line)
                return;
            double sum = 0.0;
            std::vector<int> in = inliers_of(pts, *line, thr, &sum);
            if (!consider(std::move(in), sum))
                return;
        }
    };
    auto try_pair = [&](size_t a, size_t b) {
        if ((pts[a] - pts[b]).norm() <= 0.0)
            return;
        double sum = 0.0;
        std::vector<int> in = inliers_of(pts, plucker_from_segment(Segment3D(pts[a], pts[b])), thr, &sum);
        if (consider(std::move(in), sum))
            local_refit();
    };
    const size_t npairs = n * (n - 1) / 2;
    if (npairs <= static_cast<size_t>(config.max_iterations)) {
        for (size_t a = 0; a < n; ++a)
            for (size_t b = a + 1; b < n; ++b)
                try_pair(a, b);
    } else {
        std::mt19937_64 rng(config.seed);
        std::uniform_int_distribution<size_t> pick(0, n - 1);
        for (int it = 0; it < config.max_iterations; ++it) {
            const size_t a = pick(rng), b = pick(rng);
            if (a != b)
                try_pair(a, b);
        }
    }
    if (best.size() < 2 || static_cast<double>(best.size()) < config.min_inlier_ratio * n)
        throw DegenerateError("no line model with enough depth inliers");

    std::vector<V3D> sub;
    for (int i : best)
        sub.push_back(pts[i]);
    const auto line = fit_line_pca(sub);
    if (!line)
        throw DegenerateError("depth inliers coincide");
    DepthFitResult out;
    out.line = *line;
    out.threshold = thr;
    out.num_samples = static_cast<int>(n);
    out.inliers = inliers_of(pts, *line, thr, nullptr);
    if (out.inliers.size() < best.size())
        out.inliers = best;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i : out.inliers) {
        const double s = line->coordinate(pts[i]);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    out.segment = Segment3D(line->at(lo), line->at(hi));
    return out;
}

}  // namespace linemap::depthfit
