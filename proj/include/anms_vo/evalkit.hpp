#pragma once

// Trajectory evaluation: absolute trajectory error, relative pose error,
// KITTI-style segment errors and XZ-plane projections.

#include "core.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace anms_vo {

enum class Alignment { none, rigid };
enum class Association { frame_index, timestamp };

inline constexpr double kDefaultTimestampTolerance = 0.010;  // seconds

/// Index pairs (est, gt) of associated poses, in estimate order.
inline std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& gt,
                                                                  Association mode = Association::frame_index,
                                                                  double tolerance = kDefaultTimestampTolerance) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (mode == Association::frame_index) {
        std::size_t j = 0;
        for (std::size_t i = 0; i < est.size(); ++i) {
            while (j < gt.size() && gt[j].frame_index < est[i].frame_index) ++j;
            if (j < gt.size() && gt[j].frame_index == est[i].frame_index) out.emplace_back(i, j);
        }
        return out;
    }
    if (!est.has_timestamps() || !gt.has_timestamps())
        throw ValidationError("timestamp association requires timestamps on both trajectories");
    std::size_t j = 0;
    std::size_t last_gt = gt.size();
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double t = *est[i].timestamp;
        while (j + 1 < gt.size() && *gt[j + 1].timestamp <= t) ++j;
        std::size_t best = j;
        if (j + 1 < gt.size() && std::abs(*gt[j + 1].timestamp - t) < std::abs(*gt[j].timestamp - t)) best = j + 1;
        if (std::abs(*gt[best].timestamp - t) > tolerance || best == last_gt) continue;
        out.emplace_back(i, best);
        last_gt = best;
    }
    return out;
}

// ---------------------------------------------------------------------------
// ATE

struct AteReport {
    double rmse = 0.0;
    std::vector<double> residuals;  ///< per associated pose, metres
    PoseSE3 alignment;              ///< applied to the estimate: gt ~ alignment * est
};

/// Least-squares rigid (no scale) transform taking `src` onto `dst`.
inline PoseSE3 align_rigid(const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst) {
    const auto n = static_cast<double>(src.size());
    Eigen::Vector3d ms = Eigen::Vector3d::Zero(), md = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        ms += src[i];
        md += dst[i];
    }
    ms /= n;
    md /= n;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) cov += (dst[i] - md) * (src[i] - ms).transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2, 2) = -1.0;
    const Eigen::Matrix3d r = svd.matrixU() * s * svd.matrixV().transpose();
    return PoseSE3::orthonormalized(r, md - r * ms);
}

inline AteReport ate_rmse(const Trajectory& est, const Trajectory& gt, Alignment align = Alignment::rigid,
                          Association mode = Association::frame_index) {
    const auto pairs = associate(est, gt, mode);
    if (pairs.empty()) throw ValidationError("ATE: no associated poses between estimate and ground truth");
    std::vector<Eigen::Vector3d> pe, pg;
    for (const auto& [i, j] : pairs) {
        pe.push_back(est[i].pose.translation());
        pg.push_back(gt[j].pose.translation());
    }
    AteReport rep;
    if (align == Alignment::rigid) {
        if (pairs.size() < 3) throw InsufficientData("rigid ATE alignment needs at least 3 associated poses");
        rep.alignment = align_rigid(pe, pg);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < pe.size(); ++k) {
        const double r = (pg[k] - rep.alignment.transform(pe[k])).norm();
        rep.residuals.push_back(r);
        sum += r * r;
    }
    rep.rmse = std::sqrt(sum / static_cast<double>(pe.size()));
    return rep;
}

// ---------------------------------------------------------------------------
// RPE

struct RpeReport {
    std::vector<double> translational;   ///< metres, per pair (i, i + delta)
    std::vector<double> rotational_deg;  ///< degrees, per pair
    double rmse = 0.0;                   ///< of translational
    double rotational_rmse_deg = 0.0;
};

/// Relative error of the motion between pose i and pose i + delta:
/// E = (gt_i^-1 gt_{i+delta})^-1 (est_i^-1 est_{i+delta}).
inline PoseSE3 relative_error(const PoseSE3& est_a, const PoseSE3& est_b, const PoseSE3& gt_a, const PoseSE3& gt_b) {
    return (gt_a.inverse() * gt_b).inverse() * (est_a.inverse() * est_b);
}

/// Translation norm and rotation angle of relative_error(), computed so that
/// identical motions give exactly zero.
struct MotionError {
    double translation = 0.0;
    double angle = 0.0;  ///< radians
};

inline MotionError motion_error(const PoseSE3& est_a, const PoseSE3& est_b, const PoseSE3& gt_a, const PoseSE3& gt_b) {
    const PoseSE3 est_rel = est_a.inverse() * est_b;
    const PoseSE3 gt_rel = gt_a.inverse() * gt_b;
    // |R_gt^T (t_est - t_gt)| = |t_est - t_gt|
    return {(est_rel.translation() - gt_rel.translation()).norm(), rotation_distance(gt_rel.rotation(), est_rel.rotation())};
}

inline RpeReport rpe(const Trajectory& est, const Trajectory& gt, std::size_t delta = 1,
                     Association mode = Association::frame_index) {
    if (delta == 0) throw ValidationError("RPE delta must be at least one frame");
    const auto pairs = associate(est, gt, mode);
    if (pairs.empty()) throw ValidationError("RPE: no associated poses between estimate and ground truth");
    if (pairs.size() < delta + 1)
        throw InsufficientData("RPE needs at least delta + 1 = " + std::to_string(delta + 1) + " associated poses");
    RpeReport rep;
    double st = 0.0, sr = 0.0;
    for (std::size_t k = 0; k + delta < pairs.size(); ++k) {
        const auto [ia, ja] = pairs[k];
        const auto [ib, jb] = pairs[k + delta];
        const MotionError e = motion_error(est[ia].pose, est[ib].pose, gt[ja].pose, gt[jb].pose);
        const double t = e.translation;
        const double r = e.angle * 180.0 / std::numbers::pi;
        rep.translational.push_back(t);
        rep.rotational_deg.push_back(r);
        st += t * t;
        sr += r * r;
    }
    const auto n = static_cast<double>(rep.translational.size());
    rep.rmse = std::sqrt(st / n);
    rep.rotational_rmse_deg = std::sqrt(sr / n);
    return rep;
}

// ---------------------------------------------------------------------------
// KITTI segment errors

inline const std::vector<double>& kitti_segment_lengths() {
    static const std::vector<double> lengths{100, 200, 300, 400, 500, 600, 700, 800};
    return lengths;
}
inline constexpr std::size_t kKittiStartStride = 10;

struct SegmentError {
    std::size_t first = 0;  ///< index into the associated sequence
    std::size_t last = 0;
    std::int64_t first_frame = 0;
    double length = 0.0;                ///< nominal segment length, metres
    double translational_percent = 0.0;
    double rotational_deg_per_m = 0.0;
};

struct SegmentErrorReport {
    std::vector<SegmentError> segments;
    std::vector<double> lengths;
    std::vector<double> per_length_translational_percent;  ///< mean per nominal length; NaN when none
    std::vector<double> per_length_rotational_deg_per_m;
    double translational_percent = 0.0;  ///< mean over all segments
    double rotational_deg_per_m = 0.0;
    bool ok = true;
    std::string status;  ///< warning text when no segment fits
};

/// Cumulative ground-truth path length at each pose.
inline std::vector<double> trajectory_distances(const std::vector<PoseSE3>& poses) {
    std::vector<double> dist(poses.size(), 0.0);
    for (std::size_t i = 1; i < poses.size(); ++i)
        dist[i] = dist[i - 1] + (poses[i].translation() - poses[i - 1].translation()).norm();
    return dist;
}

/// Segments start every `stride` associated poses; for each nominal length
/// the segment ends at the first pose whose ground-truth distance from the
/// start reaches that length. Errors are normalised by the nominal length:
/// translation as a percentage, rotation in degrees per metre.
inline SegmentErrorReport kitti_segment_errors(const Trajectory& est, const Trajectory& gt,
                                               const std::vector<double>& lengths = kitti_segment_lengths(),
                                               std::size_t stride = kKittiStartStride,
                                               Association mode = Association::frame_index) {
    const auto pairs = associate(est, gt, mode);
    if (pairs.empty()) throw ValidationError("segment errors: no associated poses between estimate and ground truth");
    std::vector<PoseSE3> pe, pg;
    std::vector<std::int64_t> frames;
    for (const auto& [i, j] : pairs) {
        pe.push_back(est[i].pose);
        pg.push_back(gt[j].pose);
        frames.push_back(gt[j].frame_index);
    }
    const std::vector<double> dist = trajectory_distances(pg);

    SegmentErrorReport rep;
    rep.lengths = lengths;
    std::vector<double> sum_t(lengths.size(), 0.0), sum_r(lengths.size(), 0.0);
    std::vector<std::size_t> count(lengths.size(), 0);
    for (std::size_t first = 0; first < pg.size(); first += stride) {
        for (std::size_t li = 0; li < lengths.size(); ++li) {
            const double len = lengths[li];
            const auto it = std::lower_bound(dist.begin() + static_cast<std::ptrdiff_t>(first), dist.end(), dist[first] + len);
            if (it == dist.end()) continue;
            const auto last = static_cast<std::size_t>(it - dist.begin());
            const MotionError e = motion_error(pe[first], pe[last], pg[first], pg[last]);
            SegmentError s;
            s.first = first;
            s.last = last;
            s.first_frame = frames[first];
            s.length = len;
            s.translational_percent = e.translation / len * 100.0;
            s.rotational_deg_per_m = e.angle * 180.0 / std::numbers::pi / len;
            sum_t[li] += s.translational_percent;
            sum_r[li] += s.rotational_deg_per_m;
            ++count[li];
            rep.segments.push_back(s);
        }
    }
    for (std::size_t li = 0; li < lengths.size(); ++li) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        rep.per_length_translational_percent.push_back(count[li] ? sum_t[li] / static_cast<double>(count[li]) : nan);
        rep.per_length_rotational_deg_per_m.push_back(count[li] ? sum_r[li] / static_cast<double>(count[li]) : nan);
    }
    if (rep.segments.empty()) {
        rep.ok = false;
        rep.status = "ground-truth path (" + std::to_string(dist.back()) + " m) is shorter than the smallest segment length";
        return rep;
    }
    double at = 0.0, ar = 0.0;
    for (const auto& s : rep.segments) {
        at += s.translational_percent;
        ar += s.rotational_deg_per_m;
    }
    rep.translational_percent = at / static_cast<double>(rep.segments.size());
    rep.rotational_deg_per_m = ar / static_cast<double>(rep.segments.size());
    return rep;
}

// ---------------------------------------------------------------------------
// XZ plane

struct PlanarPose {
    std::int64_t frame_index = 0;
    double x = 0.0;
    double z = 0.0;
    double yaw = 0.0;  ///< heading of the camera z-axis in the XZ plane, radians
};

inline std::vector<PlanarPose> project_xz(const Trajectory& traj) {
    std::vector<PlanarPose> out;
    out.reserve(traj.size());
    for (const auto& e : traj) {
        const auto& r = e.pose.rotation();
        const auto& t = e.pose.translation();
        out.push_back({e.frame_index, t.x(), t.z(), std::atan2(r(0, 2), r(2, 2))});
    }
    return out;
}

/// Planar poses back to SE(3): y = 0, rotation about the y-axis by yaw.
inline Trajectory lift_xz(const std::vector<PlanarPose>& planar) {
    Trajectory out;
    for (const auto& p : planar) {
        const Eigen::Matrix3d r = Eigen::AngleAxisd(p.yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
        out.push_back(p.frame_index, PoseSE3::orthonormalized(r, {p.x, 0.0, p.z}));
    }
    return out;
}

/// Segment errors on yaw-only XZ-projected poses (the "2D" variant).
inline SegmentErrorReport planar_segment_errors(const Trajectory& est, const Trajectory& gt,
                                                const std::vector<double>& lengths = kitti_segment_lengths(),
                                                std::size_t stride = kKittiStartStride) {
    return kitti_segment_errors(lift_xz(project_xz(est)), lift_xz(project_xz(gt)), lengths, stride);
}

// ---------------------------------------------------------------------------
// Reports

inline void print_segment_table(std::ostream& out, const SegmentErrorReport& rep) {
    out << std::fixed;
    out << "length_m  segments  trans_err_%  rot_err_deg_per_m\n";
    for (std::size_t li = 0; li < rep.lengths.size(); ++li) {
        std::size_t n = 0;
        for (const auto& s : rep.segments) n += s.length == rep.lengths[li] ? 1 : 0;
        out << std::setw(8) << std::setprecision(0) << rep.lengths[li] << "  " << std::setw(8) << n << "  ";
        if (n == 0) {
            out << std::setw(11) << "-" << "  " << std::setw(17) << "-" << '\n';
            continue;
        }
        out << std::setw(11) << std::setprecision(4) << rep.per_length_translational_percent[li] << "  " << std::setw(17)
            << std::setprecision(6) << rep.per_length_rotational_deg_per_m[li] << '\n';
    }
    out << "average   " << std::setw(8) << rep.segments.size() << "  " << std::setw(11) << std::setprecision(4)
        << rep.translational_percent << "  " << std::setw(17) << std::setprecision(6) << rep.rotational_deg_per_m << '\n';
    if (!rep.ok) out << "warning: " << rep.status << '\n';
    out.unsetf(std::ios::floatfield);
}

inline void write_segment_csv(std::ostream& out, const SegmentErrorReport& rep) {
    out << "first_frame,length_m,translational_error_percent,rotational_error_deg_per_m\n";
    out << std::setprecision(12);
    for (const auto& s : rep.segments)
        out << s.first_frame << ',' << s.length << ',' << s.translational_percent << ',' << s.rotational_deg_per_m << '\n';
}

}  // namespace anms_vo
