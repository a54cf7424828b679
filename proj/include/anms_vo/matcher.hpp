#pragma once

// Brute-force L2 descriptor matching with the nearest/second-nearest ratio
// test and an optional mutual-best cross-check.
//
// Filters run in this order: nearest neighbours (distance ties go to the
// lowest index), ratio test, then the mutual check. The mutual check keeps a
// pair only when it also survives the ratio test in the reverse direction, so
// match(A, B) and match(B, A) agree on unordered pairs.

#include "core.hpp"
#include "parallel.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace anms_vo {

inline constexpr double kDefaultRatio = 0.7;

struct Match {
    std::size_t query_index = 0;
    std::size_t train_index = 0;
    double distance = 0.0;

    friend bool operator==(const Match&, const Match&) = default;
};

struct MatchSet {
    std::vector<Match> pairs;  ///< ascending query_index
    double ratio_threshold = kDefaultRatio;
    bool mutual_checked = true;

    std::size_t size() const noexcept { return pairs.size(); }
};

namespace detail {

struct NearestTwo {
    std::size_t best = 0;
    double d1 = std::numeric_limits<double>::infinity();  // squared
    double d2 = std::numeric_limits<double>::infinity();  // squared
};

inline bool passes_ratio(const NearestTwo& nn, std::size_t candidates, double ratio) {
    if (candidates == 1) return true;
    return std::sqrt(nn.d1) < ratio * std::sqrt(nn.d2);
}

}  // namespace detail

/// Squared L2 distance between two descriptor rows, computed in double.
inline double squared_l2(const DescriptorMatrix& a, Eigen::Index ra, const DescriptorMatrix& b, Eigen::Index rb) {
    return (a.row(ra).cast<double>() - b.row(rb).cast<double>()).squaredNorm();
}

inline MatchSet match_descriptors(const DescriptorMatrix& query, const DescriptorMatrix& train,
                                  double ratio = kDefaultRatio, bool mutual = true) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("ratio threshold must lie in (0, 1]");
    if (query.cols() != train.cols())
        throw ValidationError("descriptor dimension mismatch: " + std::to_string(query.cols()) + " vs " +
                              std::to_string(train.cols()));
    MatchSet out;
    out.ratio_threshold = ratio;
    out.mutual_checked = mutual;
    const auto nq = static_cast<std::size_t>(query.rows());
    const auto nt = static_cast<std::size_t>(train.rows());
    if (nq == 0 || nt == 0) return out;

    using RowsD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowsD qd = query.cast<double>();
    const RowsD td = train.cast<double>();
    std::vector<double> dist(nq * nt);
    std::vector<detail::NearestTwo> forward(nq);
    parallel_for(
        nq,
        [&](std::size_t i) {
            detail::NearestTwo nn;
            for (std::size_t j = 0; j < nt; ++j) {
                const double d = (qd.row(static_cast<Eigen::Index>(i)) - td.row(static_cast<Eigen::Index>(j))).squaredNorm();
                dist[i * nt + j] = d;
                if (d < nn.d1) {
                    nn.d2 = nn.d1;
                    nn.d1 = d;
                    nn.best = j;
                } else if (d < nn.d2) {
                    nn.d2 = d;
                }
            }
            forward[i] = nn;
        },
        16);

    std::vector<detail::NearestTwo> reverse;
    if (mutual) {
        reverse.resize(nt);
        parallel_for(
            nt,
            [&](std::size_t j) {
                detail::NearestTwo nn;
                for (std::size_t i = 0; i < nq; ++i) {
                    const double d = dist[i * nt + j];
                    if (d < nn.d1) {
                        nn.d2 = nn.d1;
                        nn.d1 = d;
                        nn.best = i;
                    } else if (d < nn.d2) {
                        nn.d2 = d;
                    }
                }
                reverse[j] = nn;
            },
            64);
    }

    for (std::size_t i = 0; i < nq; ++i) {
        const auto& nn = forward[i];
        if (!detail::passes_ratio(nn, nt, ratio)) continue;
        if (mutual) {
            const auto& back = reverse[nn.best];
            if (back.best != i || !detail::passes_ratio(back, nq, ratio)) continue;
        }
        out.pairs.push_back({i, nn.best, std::sqrt(nn.d1)});
    }
    return out;
}

inline MatchSet match(const FeatureSet& query, const FeatureSet& train, double ratio = kDefaultRatio,
                      bool mutual = true) {
    return match_descriptors(query.descriptors, train.descriptors, ratio, mutual);
}

}  // namespace anms_vo
