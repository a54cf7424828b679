#pragma once

// Stereo triangulation, depth filtering, the P3P minimal solver, RANSAC PnP
// and Gauss-Newton pose refinement.
//
// Poses passed in and out are camera-to-world (T_wc). Internally the
// optimiser works on the inverse T_cw, perturbed on the left by exp(xi) with
// xi = (rho, omega).

#include "core.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace anms_vo {

inline constexpr double kDefaultMaxDepth = 20.0;
inline constexpr double kDefaultEpipolarTolerance = 2.0;

/// A triangulated point in the camera frame of the keyframe that created it.
struct Landmark {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    std::size_t source_keypoint = 0;
    double depth = 0.0;
};

/// Rectified stereo triangulation; empty when disparity is not positive or the
/// rows differ by more than `epipolar_tolerance` pixels.
inline std::optional<Landmark> triangulate_stereo(const CameraRig& rig, const Keypoint& left, const Keypoint& right,
                                                  std::size_t source_keypoint = 0,
                                                  double epipolar_tolerance = kDefaultEpipolarTolerance) {
    const double disparity = left.x - right.x;
    if (!(disparity > 0.0)) return std::nullopt;
    if (std::abs(left.y - right.y) > epipolar_tolerance) return std::nullopt;
    const double z = rig.fx * rig.baseline / disparity;
    Landmark lm;
    lm.position = {(left.x - rig.cx) * z / rig.fx, (left.y - rig.cy) * z / rig.fy, z};
    lm.depth = z;
    lm.source_keypoint = source_keypoint;
    return lm;
}

/// Landmarks with depth <= max_depth, order preserved.
inline std::vector<Landmark> depth_filter(std::span<const Landmark> landmarks, double max_depth = kDefaultMaxDepth) {
    if (!(max_depth > 0.0)) throw ValidationError("max_depth must be positive");
    std::vector<Landmark> out;
    out.reserve(landmarks.size());
    for (const auto& lm : landmarks)
        if (lm.depth <= max_depth) out.push_back(lm);
    return out;
}

// ---------------------------------------------------------------------------
// Reprojection

/// 3-D point (world frame) observed at a left-image pixel.
struct Correspondence {
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

inline Eigen::Vector3d bearing(const CameraRig& rig, const Eigen::Vector2d& px) {
    return Eigen::Vector3d((px.x() - rig.cx) / rig.fx, (px.y() - rig.cy) / rig.fy, 1.0).normalized();
}

/// Reprojection residual (projected - observed) for a camera-from-world pose.
/// Infinite when the point is not in front of the camera.
inline Eigen::Vector2d reprojection_residual(const PoseSE3& camera_from_world, const Correspondence& c,
                                             const CameraRig& rig) {
    const Eigen::Vector3d pc = camera_from_world.transform(c.point);
    if (!(pc.z() > 0.0)) return Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
    return rig.project(pc) - c.pixel;
}

/// d(residual)/d(xi) for the left perturbation exp(xi) * T_cw.
inline Eigen::Matrix<double, 2, 6> reprojection_jacobian(const PoseSE3& camera_from_world,
                                                         const Eigen::Vector3d& point_world, const CameraRig& rig) {
    const Eigen::Vector3d pc = camera_from_world.transform(point_world);
    const double iz = 1.0 / pc.z();
    const double iz2 = iz * iz;
    Eigen::Matrix<double, 2, 3> dproj;
    dproj << rig.fx * iz, 0.0, -rig.fx * pc.x() * iz2, 0.0, rig.fy * iz, -rig.fy * pc.y() * iz2;
    Eigen::Matrix<double, 3, 6> dpoint;
    dpoint.leftCols<3>().setIdentity();
    dpoint.rightCols<3>() = -skew(pc);
    return dproj * dpoint;
}

/// Sum of squared reprojection errors over the masked correspondences.
inline double reprojection_cost(const PoseSE3& camera_from_world, std::span<const Correspondence> corr,
                                const CameraRig& rig, const std::vector<bool>& mask) {
    double cost = 0.0;
    for (std::size_t i = 0; i < corr.size(); ++i)
        if (mask.empty() || mask[i]) cost += reprojection_residual(camera_from_world, corr[i], rig).squaredNorm();
    return cost;
}

// ---------------------------------------------------------------------------
// P3P

namespace detail {

// Polynomials stored lowest degree first.
using Poly = std::vector<double>;

inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

inline Poly poly_add(const Poly& a, const Poly& b, double sb = 1.0) {
    Poly r(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) r[i] += sb * b[i];
    return r;
}

inline double poly_eval(const Poly& p, double x) {
    double v = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) v = v * x + p[i];
    return v;
}

inline double poly_deriv_eval(const Poly& p, double x) {
    double v = 0.0;
    for (std::size_t i = p.size(); i-- > 1;) v = v * x + static_cast<double>(i) * p[i];
    return v;
}

/// Real roots via companion-matrix eigenvalues, each polished by Newton steps.
inline std::vector<double> real_roots(Poly p) {
    const double scale = std::abs(*std::max_element(p.begin(), p.end(), [](double a, double b) {
        return std::abs(a) < std::abs(b);
    }));
    if (scale == 0.0) return {};
    while (p.size() > 1 && std::abs(p.back()) <= 1e-14 * scale) p.pop_back();
    const int deg = static_cast<int>(p.size()) - 1;
    if (deg < 1) return {};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
    for (int i = 0; i < deg; ++i) companion(0, i) = -p[static_cast<std::size_t>(deg - 1 - i)] / p.back();
    for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
    const Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    std::vector<double> roots;
    for (int i = 0; i < deg; ++i) {
        const std::complex<double> z = es.eigenvalues()[i];
        if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real()))) continue;
        double x = z.real();
        for (int it = 0; it < 8; ++it) {
            const double d = poly_deriv_eval(p, x);
            if (d == 0.0) break;
            const double step = poly_eval(p, x) / d;
            const double nx = x - step;
            if (!(std::abs(poly_eval(p, nx)) <= std::abs(poly_eval(p, x)))) break;
            x = nx;
            if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x))) break;
        }
        roots.push_back(x);
    }
    return roots;
}

/// Least-squares rigid transform mapping `src` onto `dst` (dst = R src + t).
template <std::size_t N>
PoseSE3 kabsch(const std::array<Eigen::Vector3d, N>& src, const std::array<Eigen::Vector3d, N>& dst) {
    Eigen::Vector3d ms = Eigen::Vector3d::Zero(), md = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < N; ++i) {
        ms += src[i];
        md += dst[i];
    }
    ms /= static_cast<double>(N);
    md /= static_cast<double>(N);
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < N; ++i) h += (src[i] - ms) * (dst[i] - md).transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
    return PoseSE3::orthonormalized(r, md - r * ms);
}

}  // namespace detail

/// Minimal absolute pose from three 3-D points and their left-image pixels.
///
/// The depths s1..s3 along the three bearings satisfy the law of cosines for
/// each pair of points. Writing s2 = u s1 and s3 = v s1, eliminating u leaves
/// a quartic in v; every positive real root yields candidate depths, which are
/// Newton-polished and aligned to the world points by orthogonal Procrustes.
/// Returns up to four camera-to-world poses; empty for degenerate input.
inline std::vector<PoseSE3> solve_p3p(const std::array<Eigen::Vector3d, 3>& world,
                                      const std::array<Eigen::Vector2d, 3>& pixels, const CameraRig& rig) {
    const Eigen::Vector3d e12 = world[1] - world[0];
    const Eigen::Vector3d e13 = world[2] - world[0];
    if (e12.cross(e13).norm() <= 1e-9 * e12.norm() * e13.norm() || e12.norm() == 0.0 || e13.norm() == 0.0)
        return {};
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            if ((pixels[i] - pixels[j]).norm() < 1e-9) return {};

    std::array<Eigen::Vector3d, 3> f;
    for (int i = 0; i < 3; ++i) f[i] = bearing(rig, pixels[i]);
    const double cos_a = f[1].dot(f[2]);
    const double cos_b = f[0].dot(f[2]);
    const double cos_g = f[0].dot(f[1]);
    // distances normalised by b = |P1 - P3|
    const double b_len = (world[0] - world[2]).norm();
    const double a2 = (world[1] - world[2]).squaredNorm() / (b_len * b_len);
    const double c2 = (world[0] - world[1]).squaredNorm() / (b_len * b_len);

    using detail::Poly;
    const Poly q{1.0, -2.0 * cos_b, 1.0};                                   // 1 + v^2 - 2 v cos_b
    const Poly num = detail::poly_add(Poly{1.0, 0.0, -1.0}, q, a2 - c2);     // u = num / den
    const Poly den{2.0 * cos_g, -2.0 * cos_a};
    Poly quartic = detail::poly_mul(num, num);
    quartic = detail::poly_add(quartic, detail::poly_mul(num, den), -2.0 * cos_g);
    quartic = detail::poly_add(quartic, detail::poly_mul(detail::poly_add(Poly{1.0}, q, -c2), detail::poly_mul(den, den)));

    std::vector<PoseSE3> out;
    for (const double v : detail::real_roots(quartic)) {
        if (!(v > 0.0)) continue;
        const double qv = detail::poly_eval(q, v);
        const double dv = detail::poly_eval(den, v);
        if (!(qv > 0.0) || std::abs(dv) < 1e-12) continue;
        const double u = detail::poly_eval(num, v) / dv;
        if (!(u > 0.0)) continue;

        double s1 = b_len / std::sqrt(qv);
        Eigen::Vector3d s(s1, u * s1, v * s1);
        const double a_sq = (world[1] - world[2]).squaredNorm();
        const double b_sq = b_len * b_len;
        const double c_sq = (world[0] - world[1]).squaredNorm();
        for (int it = 0; it < 5; ++it) {
            Eigen::Vector3d r(s[0] * s[0] + s[1] * s[1] - 2.0 * s[0] * s[1] * cos_g - c_sq,
                              s[0] * s[0] + s[2] * s[2] - 2.0 * s[0] * s[2] * cos_b - b_sq,
                              s[1] * s[1] + s[2] * s[2] - 2.0 * s[1] * s[2] * cos_a - a_sq);
            Eigen::Matrix3d j;
            j << 2.0 * s[0] - 2.0 * s[1] * cos_g, 2.0 * s[1] - 2.0 * s[0] * cos_g, 0.0,
                2.0 * s[0] - 2.0 * s[2] * cos_b, 0.0, 2.0 * s[2] - 2.0 * s[0] * cos_b,
                0.0, 2.0 * s[1] - 2.0 * s[2] * cos_a, 2.0 * s[2] - 2.0 * s[1] * cos_a;
            const Eigen::Vector3d step = j.fullPivLu().solve(r);
            if (!step.allFinite()) break;
            s -= step;
            if (step.norm() <= 1e-15 * s.norm()) break;
        }
        if (!(s.minCoeff() > 0.0) || !s.allFinite()) continue;

        const std::array<Eigen::Vector3d, 3> cam{s[0] * f[0], s[1] * f[1], s[2] * f[2]};
        const PoseSE3 camera_from_world = detail::kabsch<3>(world, cam);

        bool consistent = true;
        for (int i = 0; i < 3 && consistent; ++i)
            consistent = reprojection_residual(camera_from_world, {world[i], pixels[i]}, rig).norm() <= 1e-6;
        if (!consistent) continue;

        const PoseSE3 pose = camera_from_world.inverse();
        const bool duplicate = std::any_of(out.begin(), out.end(), [&](const PoseSE3& o) {
            return (o.matrix() - pose.matrix()).cwiseAbs().maxCoeff() < 1e-9;
        });
        if (!duplicate) out.push_back(pose);
    }
    return out;
}

inline std::vector<PoseSE3> solve_p3p(std::span<const Landmark, 3> points3d, std::span<const Keypoint, 3> points2d,
                                      const CameraRig& rig) {
    std::array<Eigen::Vector3d, 3> w;
    std::array<Eigen::Vector2d, 3> px;
    for (int i = 0; i < 3; ++i) {
        w[i] = points3d[i].position;
        px[i] = {points2d[i].x, points2d[i].y};
    }
    return solve_p3p(w, px, rig);
}

// ---------------------------------------------------------------------------
// Refinement

struct RefineResult {
    PoseSE3 pose;  ///< camera-to-world
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    bool degenerate = false;
};

/// Gauss-Newton on the squared reprojection error of the masked
/// correspondences. Stops when the step norm drops below 1e-8, the relative
/// cost decrease below 1e-10, or after 20 iterations. A step that would raise
/// the cost is discarded, so the result never costs more than `initial`.
inline RefineResult refine_pose(const PoseSE3& initial, std::span<const Correspondence> corr, const CameraRig& rig,
                                const std::vector<bool>& inliers) {
    std::size_t used = 0;
    for (std::size_t i = 0; i < corr.size(); ++i)
        if (inliers.empty() || inliers[i]) ++used;
    if (used < 4) throw InsufficientData("pose refinement needs at least 4 inlier correspondences");

    RefineResult result;
    result.pose = initial;
    PoseSE3 tcw = initial.inverse();
    double cost = reprojection_cost(tcw, corr, rig, inliers);
    result.initial_cost = cost;
    result.final_cost = cost;

    constexpr int kMaxIterations = 20;
    for (int it = 0; it < kMaxIterations; ++it) {
        Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
        Vector6d g = Vector6d::Zero();
        for (std::size_t i = 0; i < corr.size(); ++i) {
            if (!inliers.empty() && !inliers[i]) continue;
            const Eigen::Vector2d r = reprojection_residual(tcw, corr[i], rig);
            if (!r.allFinite()) continue;
            const Eigen::Matrix<double, 2, 6> j = reprojection_jacobian(tcw, corr[i].point, rig);
            h.noalias() += j.transpose() * j;
            g.noalias() += j.transpose() * r;
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(h, Eigen::EigenvaluesOnly);
        const double max_ev = eig.eigenvalues().maxCoeff();
        if (!(max_ev > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * max_ev) {
            if (it == 0) {
                result.degenerate = true;
                result.pose = initial;
                result.final_cost = result.initial_cost;
                return result;
            }
            break;
        }
        const Vector6d step = h.ldlt().solve(-g);
        const PoseSE3 candidate = PoseSE3::exp(step) * tcw;
        const double new_cost = reprojection_cost(candidate, corr, rig, inliers);
        if (!(new_cost <= cost)) break;
        const double rel_decrease = cost > 0.0 ? (cost - new_cost) / cost : 0.0;
        tcw = candidate;
        cost = new_cost;
        result.iterations = it + 1;
        if (step.norm() < 1e-8 || rel_decrease < 1e-10) break;
    }
    result.pose = tcw.inverse();
    result.final_cost = cost;
    return result;
}

// ---------------------------------------------------------------------------
// RANSAC

struct RansacConfig {
    double reproj_threshold = 2.0;  ///< pixels
    double confidence = 0.99;
    int max_iterations = 500;
    int min_inliers = 15;

    void validate() const {
        if (!(reproj_threshold > 0.0)) throw ValidationError("reproj_threshold must be positive");
        if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence must lie in (0, 1)");
        if (max_iterations <= 0) throw ValidationError("max_iterations must be positive");
        if (min_inliers <= 0) throw ValidationError("min_inliers must be positive");
    }
};

struct RansacResult {
    PoseSE3 pose;  ///< camera-to-world
    std::vector<bool> inliers;
    std::size_t inlier_count = 0;
    int iterations = 0;
    bool refinement_degenerate = false;
};

namespace detail {

inline std::size_t count_inliers(const PoseSE3& camera_from_world, std::span<const Correspondence> corr,
                                 const CameraRig& rig, double threshold, std::vector<bool>* mask) {
    const double t2 = threshold * threshold;
    std::size_t n = 0;
    if (mask) mask->assign(corr.size(), false);
    for (std::size_t i = 0; i < corr.size(); ++i) {
        if (reprojection_residual(camera_from_world, corr[i], rig).squaredNorm() <= t2) {
            ++n;
            if (mask) (*mask)[i] = true;
        }
    }
    return n;
}

}  // namespace detail

/// Robust camera pose from 3-D/2-D correspondences.
///
/// Each hypothesis draws four distinct correspondences: three feed P3P and
/// the fourth picks among its candidates. Hypotheses are scored by inlier
/// count (reprojection error <= threshold); only a strictly larger count
/// replaces the incumbent, so the earliest best hypothesis wins. The
/// iteration budget shrinks as log(1 - confidence) / log(1 - w^4) with the
/// best inlier ratio w. The winner is refined on its inliers, the inlier set
/// is recomputed and refined once more.
///
/// Bit-deterministic for a given `seed`.
inline RansacResult ransac_pnp(std::span<const Correspondence> corr, const CameraRig& rig, const RansacConfig& cfg,
                               std::uint64_t seed = 0) {
    cfg.validate();
    const std::size_t n = corr.size();
    if (n < 4) throw InsufficientData("PnP needs at least 4 correspondences, got " + std::to_string(n));

    std::mt19937_64 rng(seed);
    const auto draw = [&](std::size_t bound) { return static_cast<std::size_t>(rng() % bound); };

    std::size_t best_count = 0;
    std::optional<PoseSE3> best;
    int budget = cfg.max_iterations;
    int it = 0;
    for (; it < budget; ++it) {
        std::array<std::size_t, 4> idx{};
        for (std::size_t k = 0; k < 4; ++k) {
            std::size_t candidate;
            do {
                candidate = draw(n);
            } while (std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), candidate) !=
                     idx.begin() + static_cast<std::ptrdiff_t>(k));
            idx[k] = candidate;
        }
        const std::array<Eigen::Vector3d, 3> w{corr[idx[0]].point, corr[idx[1]].point, corr[idx[2]].point};
        const std::array<Eigen::Vector2d, 3> px{corr[idx[0]].pixel, corr[idx[1]].pixel, corr[idx[2]].pixel};
        const auto candidates = solve_p3p(w, px, rig);
        if (candidates.empty()) continue;

        std::optional<PoseSE3> pick;
        double pick_err = std::numeric_limits<double>::infinity();
        for (const auto& c : candidates) {
            const double e = reprojection_residual(c.inverse(), corr[idx[3]], rig).squaredNorm();
            if (e < pick_err) {
                pick_err = e;
                pick = c;
            }
        }
        if (!pick) continue;

        const std::size_t count = detail::count_inliers(pick->inverse(), corr, rig, cfg.reproj_threshold, nullptr);
        if (count > best_count) {
            best_count = count;
            best = pick;
            const double w_ratio = static_cast<double>(count) / static_cast<double>(n);
            const double p_good = std::pow(w_ratio, 4);
            if (p_good >= 1.0) {
                budget = std::min(budget, it + 1);
            } else if (p_good > 0.0) {
                const double needed = std::ceil(std::log(1.0 - cfg.confidence) / std::log(1.0 - p_good));
                if (needed < static_cast<double>(budget)) budget = std::max(it + 1, static_cast<int>(needed));
            }
        }
    }

    const auto min_required = std::max<std::size_t>(4, static_cast<std::size_t>(cfg.min_inliers));
    if (!best || best_count < min_required)
        throw TrackingFailure("RANSAC found " + std::to_string(best_count) + " inliers, need " +
                              std::to_string(min_required));

    RansacResult result;
    result.iterations = it;
    std::vector<bool> mask;
    detail::count_inliers(best->inverse(), corr, rig, cfg.reproj_threshold, &mask);
    PoseSE3 pose = *best;
    for (int round = 0; round < 2; ++round) {
        const RefineResult refined = refine_pose(pose, corr, rig, mask);
        result.refinement_degenerate = result.refinement_degenerate || refined.degenerate;
        std::vector<bool> new_mask;
        const std::size_t c = detail::count_inliers(refined.pose.inverse(), corr, rig, cfg.reproj_threshold, &new_mask);
        if (c < min_required) break;
        pose = refined.pose;
        mask = std::move(new_mask);
    }
    result.pose = pose;
    result.inliers = std::move(mask);
    result.inlier_count = static_cast<std::size_t>(std::count(result.inliers.begin(), result.inliers.end(), true));
    if (result.inlier_count < min_required)
        throw TrackingFailure("refined pose keeps " + std::to_string(result.inlier_count) + " inliers, need " +
                              std::to_string(min_required));
    return result;
}

}  // namespace anms_vo
