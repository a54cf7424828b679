#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace anms_vo {

/// Balanced 2-d tree over points that carry a rank (their position in the
/// input span). Queries return the nearest point whose rank lies below a
/// limit, which answers "nearest among the first k inserted points" without
/// rebuilding the tree. Every node records the minimum rank in its subtree
/// and its bounding box, so subtrees holding only high-rank points or lying
/// beyond the current best distance are skipped.
class RankedKdTree2 {
public:
    struct Point {
        double x;
        double y;
    };

    struct Hit {
        std::size_t rank;
        double squared_distance;
    };

    explicit RankedKdTree2(std::span<const Point> points) : points_(points.begin(), points.end()) {
        const std::size_t n = points_.size();
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        axis_.resize(n);
        min_rank_.resize(n);
        box_.resize(n);
        if (n > 0) build(0, n);
    }

    std::size_t size() const noexcept { return points_.size(); }

    /// Nearest point with rank < `rank_limit`; empty when no such point exists.
    /// Distances are exact: (qx - px)^2 + (qy - py)^2 in double.
    std::optional<Hit> nearest_below(Point q, std::size_t rank_limit) const {
        Hit best{0, std::numeric_limits<double>::infinity()};
        bool found = false;
        if (!points_.empty()) search(0, points_.size(), q, rank_limit, best, found);
        if (!found) return std::nullopt;
        return best;
    }

private:
    struct Box {
        double min_x, min_y, max_x, max_y;
    };

    void build(std::size_t lo, std::size_t hi) {
        Box b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
              -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        std::size_t min_rank = std::numeric_limits<std::size_t>::max();
        for (std::size_t i = lo; i < hi; ++i) {
            const Point& p = points_[order_[i]];
            b.min_x = std::min(b.min_x, p.x);
            b.min_y = std::min(b.min_y, p.y);
            b.max_x = std::max(b.max_x, p.x);
            b.max_y = std::max(b.max_y, p.y);
            min_rank = std::min(min_rank, order_[i]);
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        const int axis = (b.max_x - b.min_x) >= (b.max_y - b.min_y) ? 0 : 1;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t c) {
                             const double va = coord(points_[a], axis);
                             const double vc = coord(points_[c], axis);
                             return va < vc || (va == vc && a < c);
                         });
        axis_[mid] = axis;
        min_rank_[mid] = min_rank;
        box_[mid] = b;
        if (lo < mid) build(lo, mid);
        if (mid + 1 < hi) build(mid + 1, hi);
    }

    static double coord(const Point& p, int axis) { return axis == 0 ? p.x : p.y; }

    static double box_squared_distance(const Box& b, Point q) {
        const double dx = q.x < b.min_x ? b.min_x - q.x : (q.x > b.max_x ? q.x - b.max_x : 0.0);
        const double dy = q.y < b.min_y ? b.min_y - q.y : (q.y > b.max_y ? q.y - b.max_y : 0.0);
        return dx * dx + dy * dy;
    }

    void search(std::size_t lo, std::size_t hi, Point q, std::size_t limit, Hit& best, bool& found) const {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (min_rank_[mid] >= limit) return;
        if (box_squared_distance(box_[mid], q) > best.squared_distance) return;

        const std::size_t rank = order_[mid];
        if (rank < limit) {
            const Point& p = points_[rank];
            const double dx = q.x - p.x;
            const double dy = q.y - p.y;
            const double d2 = dx * dx + dy * dy;
            if (!found || d2 < best.squared_distance || (d2 == best.squared_distance && rank < best.rank)) {
                best = {rank, d2};
                found = true;
            }
        }

        const double split = coord(points_[rank], axis_[mid]);
        const bool left_first = coord(q, axis_[mid]) <= split;
        if (left_first) {
            if (lo < mid) search(lo, mid, q, limit, best, found);
            if (mid + 1 < hi) search(mid + 1, hi, q, limit, best, found);
        } else {
            if (mid + 1 < hi) search(mid + 1, hi, q, limit, best, found);
            if (lo < mid) search(lo, mid, q, limit, best, found);
        }
    }

    std::vector<Point> points_;
    std::vector<std::size_t> order_;
    std::vector<int> axis_;
    std::vector<std::size_t> min_rank_;
    std::vector<Box> box_;
};

}  // namespace anms_vo
