#pragma once

// Adaptive non-maximal suppression.
//
// Each keypoint gets a suppression radius: the distance to the nearest
// keypoint that is stronger than it. Keeping the N keypoints with the largest
// radii yields a set that favours strong responses while spreading the
// selection evenly across the image.
//
// "Stronger" is the total order (score desc, y asc, x asc, index asc), so
// equal scores never leave two points mutually unsuppressed. Exactly one
// keypoint (the strongest) has an infinite radius.

#include "core.hpp"
#include "kdtree.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace anms_vo {

inline constexpr std::size_t kDefaultAnmsCount = 1000;
/// Candidate pool requested from a detector before suppression, as a multiple of N.
inline constexpr std::size_t kDefaultPoolFactor = 4;

struct SuppressionResult {
    std::vector<double> radii;          ///< per input keypoint; +inf for the strongest
    std::vector<std::size_t> selected;  ///< input indices, best first
    std::size_t n_requested = 0;
};

/// True when keypoint `a` (index ia) ranks as stronger than `b` (index ib).
inline bool stronger(const Keypoint& a, std::size_t ia, const Keypoint& b, std::size_t ib) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return ia < ib;
}

/// Input indices sorted strongest first.
inline std::vector<std::size_t> strength_order(std::span<const Keypoint> kps) {
    std::vector<std::size_t> order(kps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return stronger(kps[a], a, kps[b], b); });
    return order;
}

inline std::vector<double> suppression_radii(std::span<const Keypoint> kps) {
    const std::size_t n = kps.size();
    std::vector<double> radii(n, std::numeric_limits<double>::infinity());
    if (n == 0) return radii;

    const std::vector<std::size_t> order = strength_order(kps);
    std::vector<RankedKdTree2::Point> ranked(n);
    for (std::size_t r = 0; r < n; ++r) ranked[r] = {kps[order[r]].x, kps[order[r]].y};
    const RankedKdTree2 tree(ranked);

    // rank r may only be suppressed by ranks [0, r)
    parallel_for(n, [&](std::size_t r) {
        if (r == 0) return;
        const auto hit = tree.nearest_below(ranked[r], r);
        radii[order[r]] = std::sqrt(hit->squared_distance);
    });
    return radii;
}

inline std::vector<double> suppression_radii(const FeatureSet& features) {
    return suppression_radii(std::span<const Keypoint>(features.keypoints));
}

/// Orders all keypoints by (radius desc, score desc, y asc, x asc, index asc)
/// and keeps the first `n`. Deterministic for identical input.
inline SuppressionResult select_top_n(std::span<const Keypoint> kps, std::size_t n) {
    SuppressionResult result;
    result.n_requested = n;
    result.radii = suppression_radii(kps);

    std::vector<std::size_t> order(kps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& radii = result.radii;
    const auto before = [&](std::size_t a, std::size_t b) {
        if (radii[a] != radii[b]) return radii[a] > radii[b];
        return stronger(kps[a], a, kps[b], b);
    };
    const std::size_t keep = std::min(n, kps.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), before);
    order.resize(keep);
    result.selected = std::move(order);
    return result;
}

inline SuppressionResult select_top_n(const FeatureSet& features, std::size_t n) {
    return select_top_n(std::span<const Keypoint>(features.keypoints), n);
}

/// The selected keypoints with their descriptors, in selection order.
inline FeatureSet apply_anms(const FeatureSet& features, std::size_t n) {
    return features.subset(select_top_n(features, n).selected);
}

}  // namespace anms_vo
