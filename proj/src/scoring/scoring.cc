#include "linemap/scoring/scoring.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace linemap::scoring {

using triangulation::Proposal;

void ScoringConfig::validate() const {
    if (!(tau_angle_3d > 0.0) || !(tau_angle_2d > 0.0) || !(tau_overlap > 0.0) || !(tau_perp_2d > 0.0) ||
        !(tau_innerseg > 0.0))
        throw InvalidInputError("scoring scales must be positive");
    if (!(gate > 0.0) || !(gate < 1.0))
        throw InvalidInputError("score gate must lie in (0, 1)");
    if (!(accept_threshold > 0.0))
        throw InvalidInputError("acceptance threshold must be positive");
}

namespace {

template <typename V>
double acute_angle(const V& a, const V& b) {
    const double na = a.norm(), nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0))
        throw DegenerateError("angle of a zero-length segment");
    const double c = std::min(1.0, std::abs(a.dot(b)) / (na * nb));
    return std::acos(c);
}

// Distance from p to the infinite line through a, b.
double line_distance(const V3D& p, const V3D& a, const V3D& b) {
    const V3D d = (b - a).normalized();
    return (p - a).cross(d).norm();
}

double line_distance(const V2D& p, const V2D& a, const V2D& b) {
    const V2D d = (b - a).normalized();
    const V2D q = p - a;
    return std::abs(q.x() * d.y() - q.y() * d.x());
}

template <typename V>
double overlap_ratio_impl(const V& a1, const V& a2, const V& b1, const V& b2) {
    const V d = b2 - b1;
    const double l2 = d.squaredNorm();
    if (!(l2 > 0.0))
        throw DegenerateError("overlap with a zero-length segment");
    double s1 = (a1 - b1).dot(d) / l2;
    double s2 = (a2 - b1).dot(d) / l2;
    if (s1 > s2)
        std::swap(s1, s2);
    return std::max(0.0, std::min(s2, 1.0) - std::max(s1, 0.0));
}

// Parameters of a's endpoints projected onto b, clipped to b.
std::pair<V3D, V3D> inner_segment(const Segment3D& a, const Segment3D& b) {
    const V3D d = b.e2 - b.e1;
    const double l2 = d.squaredNorm();
    if (!(l2 > 0.0))
        throw DegenerateError("inner segment of a zero-length segment");
    const double s1 = std::clamp((a.e1 - b.e1).dot(d) / l2, 0.0, 1.0);
    const double s2 = std::clamp((a.e2 - b.e1).dot(d) / l2, 0.0, 1.0);
    return {b.e1 + s1 * d, b.e1 + s2 * d};
}

class MinScore {
 public:
    explicit MinScore(double gate) : gate_(gate) {}
    // False once the running minimum is gated out.
    bool take(double r, double tau) {
        value_ = std::min(value_, normalize(r, tau, gate_));
        return value_ > 0.0;
    }
    bool take_score(double s) {
        value_ = std::min(value_, s);
        return value_ > 0.0;
    }
    double value() const { return value_; }

 private:
    double gate_;
    double value_ = 1.0;
};

}  // namespace

double angular_distance(const Segment3D& a, const Segment3D& b) {
    return acute_angle<V3D>(a.e2 - a.e1, b.e2 - b.e1);
}

double angular_distance(const Segment2D& a, const Segment2D& b) {
    return acute_angle<V2D>(a.p2 - a.p1, b.p2 - b.p1);
}

double perpendicular_distance(const Segment3D& a, const Segment3D& b) {
    if (!(b.length() > 0.0))
        throw DegenerateError("perpendicular distance to a zero-length segment");
    return std::max(line_distance(a.e1, b.e1, b.e2), line_distance(a.e2, b.e1, b.e2));
}

double perpendicular_distance(const Segment2D& a, const Segment2D& b) {
    if (!(b.length() > 0.0))
        throw DegenerateError("perpendicular distance to a zero-length segment");
    return std::max(line_distance(a.p1, b.p1, b.p2), line_distance(a.p2, b.p1, b.p2));
}

double symmetric_perpendicular_distance(const Segment2D& a, const Segment2D& b) {
    return 0.5 * (perpendicular_distance(a, b) + perpendicular_distance(b, a));
}

double symmetric_perpendicular_distance(const Segment3D& a, const Segment3D& b) {
    return 0.5 * (perpendicular_distance(a, b) + perpendicular_distance(b, a));
}

double perspective_distance(const Segment3D& a, const Segment3D& b, double d_s, double d_e) {
    if (!(d_s > 0.0) || !(d_e > 0.0))
        throw DegenerateError("perspective distance needs positive ray depths");
    return std::max((a.e1 - b.e1).norm() / d_s, (a.e2 - b.e2).norm() / d_e);
}

double symmetric_perspective_distance(const Proposal& a, const Proposal& b) {
    return 0.5 * (perspective_distance(a.segment, b.segment, a.depths(0), a.depths(1)) +
                  perspective_distance(b.segment, a.segment, b.depths(0), b.depths(1)));
}

double overlap_ratio(const Segment3D& a, const Segment3D& b) {
    return overlap_ratio_impl<V3D>(a.e1, a.e2, b.e1, b.e2);
}

double overlap_ratio(const Segment2D& a, const Segment2D& b) {
    return overlap_ratio_impl<V2D>(a.p1, a.p2, b.p1, b.p2);
}

double symmetric_overlap_ratio(const Segment3D& a, const Segment3D& b) {
    return 0.5 * (overlap_ratio(a, b) + overlap_ratio(b, a));
}

double symmetric_overlap_ratio(const Segment2D& a, const Segment2D& b) {
    return 0.5 * (overlap_ratio(a, b) + overlap_ratio(b, a));
}

double overlap_score(double ratio, double tau_overlap) {
    return ratio >= tau_overlap ? 1.0 : 0.0;
}

double innerseg_raw_distance(const Segment3D& a, const Segment3D& b) {
    const auto [p1, p2] = inner_segment(b, a);  // on a
    const auto [q1, q2] = inner_segment(a, b);  // on b
    const double same = std::max((p1 - q1).norm(), (p2 - q2).norm());
    const double cross = std::max((p1 - q2).norm(), (p2 - q1).norm());
    return std::min(same, cross);
}

double innerseg_sigma(const Segment3D& a, const CameraView& view_a, const Segment3D& b, const CameraView& view_b) {
    const double da = view_a.depth(a.midpoint());
    const double db = view_b.depth(b.midpoint());
    if (!(da > 0.0) || !(db > 0.0))
        throw DegenerateError("innerseg distance needs segments in front of their cameras");
    return std::min(da / view_a.focal(), db / view_b.focal());
}

double innerseg_distance(const Segment3D& a, const Segment3D& b, double sigma) {
    if (!(sigma > 0.0))
        throw DegenerateError("innerseg scale must be positive");
    return innerseg_raw_distance(a, b) / sigma;
}

double normalize(double r, double tau, double gate) {
    const double x = r / tau;
    const double s = std::exp(-x * x);
    return s >= gate - 1e-12 ? s : 0.0;
}

double selection_score(const Proposal& a, const std::optional<Segment2D>& a_in_b, const Proposal& b,
                       const ScoringConfig& config) {
    MinScore s(config.gate);
    if (!s.take(angular_distance(a.segment, b.segment), config.tau_angle_3d))
        return 0.0;
    if (!s.take(symmetric_perspective_distance(a, b), config.tau_innerseg))
        return 0.0;
    if (!a_in_b || !(a_in_b->length() > 0.0))
        return 0.0;
    if (!s.take(angular_distance(*a_in_b, b.match_segment), config.tau_angle_2d))
        return 0.0;
    s.take(symmetric_perpendicular_distance(*a_in_b, b.match_segment), config.tau_perp_2d);
    return s.value();
}

double selection_score(const Proposal& a, const Proposal& b, const CameraView& view_b, const ScoringConfig& config) {
    return selection_score(a, project_segment(a.segment, view_b), b, config);
}

std::optional<Selection> select_best(std::span<const Proposal> proposals, const ImageCollection& views,
                                     const ScoringConfig& config) {
    const size_t n = proposals.size();
    if (n == 0)
        return std::nullopt;
    std::map<int, int> image_slot;
    for (const Proposal& p : proposals)
        image_slot.emplace(p.match.image_id, 0);
    int k = 0;
    std::vector<const CameraView*> slot_views;
    for (auto& [img, slot] : image_slot) {
        slot = k++;
        slot_views.push_back(&views.view(img));
    }
    std::vector<int> slot_of(n);
    for (size_t i = 0; i < n; ++i)
        slot_of[i] = image_slot.at(proposals[i].match.image_id);

    auto better = [&](size_t i, double si, size_t j, double sj) {
        if (si != sj)
            return si > sj;
        const double li = proposals[i].segment.length(), lj = proposals[j].segment.length();
        if (li != lj)
            return li > lj;
        if (proposals[i].match != proposals[j].match)
            return proposals[i].match < proposals[j].match;
        if (proposals[i].source != proposals[j].source)
            return proposals[i].source < proposals[j].source;
        const auto key = [](const Proposal& p) {
            return std::make_tuple(p.segment.e1.x(), p.segment.e1.y(), p.segment.e1.z(), p.segment.e2.x(),
                                   p.segment.e2.y(), p.segment.e2.z());
        };
        return key(proposals[i]) < key(proposals[j]);
    };

    std::optional<Selection> best;
    std::vector<double> per_image(slot_views.size());
    std::vector<std::optional<std::optional<Segment2D>>> cache(slot_views.size());
    for (size_t i = 0; i < n; ++i) {
        std::fill(per_image.begin(), per_image.end(), 0.0);
        std::fill(cache.begin(), cache.end(), std::nullopt);
        for (size_t j = 0; j < n; ++j) {
            const int sj = slot_of[j];
            if (sj == slot_of[i])
                continue;
            if (!cache[sj])
                cache[sj] = project_segment(proposals[i].segment, *slot_views[sj]);
            const double s = selection_score(proposals[i], *cache[sj], proposals[j], config);
            per_image[sj] = std::max(per_image[sj], s);
        }
        double total = 0.0;
        for (double v : per_image)
            total += v;
        if (!best || better(i, total, best->index, best->score))
            best = Selection{i, total};
    }
    if (!best || best->score < config.accept_threshold)
        return std::nullopt;
    return best;
}

double track_score_3d(const Segment3D& a, const Segment3D& b, double depth_scale, const ScoringConfig& config) {
    MinScore s(config.gate);
    if (!s.take(angular_distance(a, b), config.tau_angle_3d))
        return 0.0;
    if (!s.take_score(overlap_score(symmetric_overlap_ratio(a, b), config.tau_overlap)))
        return 0.0;
    s.take(innerseg_distance(a, b, depth_scale), config.tau_innerseg);
    return s.value();
}

double track_score(const TrackCandidate& a, const TrackCandidate& b, const ScoringConfig& config) {
    if (!(a.view->depth(a.segment.midpoint()) > 0.0) || !(b.view->depth(b.segment.midpoint()) > 0.0))
        return 0.0;
    const double depth_scale = std::min(a.view->depth(a.segment.midpoint()), b.view->depth(b.segment.midpoint()));
    MinScore s(config.gate);
    if (!s.take_score(track_score_3d(a.segment, b.segment, depth_scale, config)))
        return 0.0;
    const auto a_in_b = project_segment(a.segment, *b.view);
    const auto b_in_a = project_segment(b.segment, *a.view);
    if (!a_in_b || !b_in_a || !(a_in_b->length() > 0.0) || !(b_in_a->length() > 0.0))
        return 0.0;
    const double ang = std::max(angular_distance(*a_in_b, b.observation), angular_distance(*b_in_a, a.observation));
    if (!s.take(ang, config.tau_angle_2d))
        return 0.0;
    const double perp = std::max(symmetric_perpendicular_distance(*a_in_b, b.observation),
                                 symmetric_perpendicular_distance(*b_in_a, a.observation));
    if (!s.take(perp, config.tau_perp_2d))
        return 0.0;
    const double ov = std::min(symmetric_overlap_ratio(*a_in_b, b.observation),
                               symmetric_overlap_ratio(*b_in_a, a.observation));
    s.take_score(overlap_score(ov, config.tau_overlap));
    return s.value();
}

}  // namespace linemap::scoring
