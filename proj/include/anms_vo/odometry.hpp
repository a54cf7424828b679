#pragma once

// Stereo frame-to-keyframe tracking.
//
// Per frame: ANMS on the left keypoints, L2 matching against the active
// landmarks, RANSAC PnP for the pose. When tracking weakens or too many
// frames have passed, the frame becomes a keyframe: its ANMS-selected left and
// right keypoints are stereo-matched, triangulated and depth-filtered, and the
// result replaces the active landmarks. There is no loop closing and no
// bundle adjustment; only the latest keyframe's landmarks are ever active.

#include "anms.hpp"
#include "core.hpp"
#include "detector.hpp"
#include "geometry.hpp"
#include "matcher.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace anms_vo {

struct PipelineConfig {
    std::size_t anms_n = kDefaultAnmsCount;
    double ratio = kDefaultRatio;
    bool mutual = true;
    double max_depth = kDefaultMaxDepth;
    double epipolar_tolerance = kDefaultEpipolarTolerance;
    RansacConfig ransac;
    int keyframe_min_tracked = 50;
    int keyframe_max_gap = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (anms_n == 0) throw ValidationError("anms_n must be positive");
        if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("ratio must lie in (0, 1]");
        if (!(max_depth > 0.0)) throw ValidationError("max_depth must be positive");
        if (!(epipolar_tolerance > 0.0)) throw ValidationError("epipolar_tolerance must be positive");
        if (keyframe_min_tracked <= 0) throw ValidationError("keyframe_min_tracked must be positive");
        if (keyframe_max_gap <= 0) throw ValidationError("keyframe_max_gap must be positive");
        ransac.validate();
    }
};

enum class TrackingStatus { ok, lost };

/// Landmarks of the active keyframe. `landmarks[i].position` is in the
/// keyframe camera frame, `world[i]` the same point in the world frame.
struct LandmarkMap {
    std::vector<Landmark> landmarks;
    std::vector<Eigen::Vector3d> world;
    DescriptorMatrix descriptors;

    std::size_t size() const noexcept { return landmarks.size(); }
};

struct TrackingState {
    PoseSE3 pose;  ///< camera-to-world of the latest processed frame
    LandmarkMap map;
    std::int64_t frame_index = 0;
    std::int64_t last_keyframe = 0;
    TrackingStatus status = TrackingStatus::ok;
    std::size_t last_inliers = 0;
    bool keyframe = false;  ///< latest frame created landmarks
};

/// Stereo-matches the ANMS-selected keypoints of both images and triangulates
/// the matches that pass the epipolar check and the depth filter. Landmark
/// `source_keypoint` indexes the full left feature set.
inline LandmarkMap build_landmarks(const FeatureSet& left, const FeatureSet& right, const CameraRig& rig,
                                   const PipelineConfig& cfg, const PoseSE3& pose) {
    if (left.dim() != right.dim())
        throw ValidationError("left/right descriptor dimensions differ: " + std::to_string(left.dim()) + " vs " +
                              std::to_string(right.dim()));
    const auto sel_left = select_top_n(left, cfg.anms_n).selected;
    const auto sel_right = select_top_n(right, cfg.anms_n).selected;
    const FeatureSet l = left.subset(sel_left);
    const FeatureSet r = right.subset(sel_right);
    const MatchSet stereo = match(l, r, cfg.ratio, cfg.mutual);

    std::vector<Landmark> raw;
    for (const auto& m : stereo.pairs)
        if (auto lm = triangulate_stereo(rig, l.keypoints[m.query_index], r.keypoints[m.train_index],
                                         sel_left[m.query_index], cfg.epipolar_tolerance))
            raw.push_back(*lm);

    LandmarkMap map;
    map.landmarks = depth_filter(raw, cfg.max_depth);
    map.descriptors.resize(static_cast<Eigen::Index>(map.landmarks.size()), left.descriptors.cols());
    for (std::size_t i = 0; i < map.landmarks.size(); ++i) {
        const Landmark& lm = map.landmarks[i];
        map.descriptors.row(static_cast<Eigen::Index>(i)) = left.descriptors.row(static_cast<Eigen::Index>(lm.source_keypoint));
        map.world.push_back(pose.transform(lm.position));
    }
    return map;
}

/// First stereo pair: pose = `pose` (identity by default), landmarks from the pair.
inline TrackingState initialize(const FeatureSet& left, const FeatureSet& right, const CameraRig& rig,
                                const PipelineConfig& cfg, std::int64_t frame_index = 0,
                                const PoseSE3& pose = PoseSE3::identity()) {
    cfg.validate();
    TrackingState s;
    s.pose = pose;
    s.map = build_landmarks(left, right, rig, cfg, pose);
    if (s.map.size() < static_cast<std::size_t>(cfg.ransac.min_inliers))
        throw InitializationError("frame " + std::to_string(frame_index) + " yields " + std::to_string(s.map.size()) +
                                  " landmarks, need " + std::to_string(cfg.ransac.min_inliers));
    s.frame_index = frame_index;
    s.last_keyframe = frame_index;
    s.status = TrackingStatus::ok;
    s.keyframe = true;
    return s;
}

namespace detail {

inline std::uint64_t frame_seed(std::uint64_t seed, std::int64_t frame) {
    std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(frame) + 1));
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

struct TrackResult {
    PoseSE3 pose;
    std::size_t matches = 0;
    std::size_t inliers = 0;
};

/// Pose of a frame against the active landmarks; empty on tracking failure.
inline std::optional<TrackResult> track(const TrackingState& state, const FeatureSet& left, const CameraRig& rig,
                                        const PipelineConfig& cfg, std::int64_t frame_index) {
    if (state.map.size() == 0) return std::nullopt;
    const FeatureSet l = apply_anms(left, cfg.anms_n);
    const MatchSet m = match_descriptors(l.descriptors, state.map.descriptors, cfg.ratio, cfg.mutual);
    std::vector<Correspondence> corr;
    corr.reserve(m.size());
    for (const auto& p : m.pairs)
        corr.push_back({state.map.world[p.train_index], {l.keypoints[p.query_index].x, l.keypoints[p.query_index].y}});
    try {
        const RansacResult r = ransac_pnp(corr, rig, cfg.ransac, detail::frame_seed(cfg.seed, frame_index));
        return TrackResult{r.pose, m.size(), r.inlier_count};
    } catch (const TrackingFailure&) {
        return std::nullopt;
    } catch (const InsufficientData&) {
        return std::nullopt;
    }
}

/// Advances the tracker by one stereo frame. On tracking failure the state
/// turns LOST and keeps its pose; a LOST tracker that fails again
/// re-initialises landmarks from the pair at the held pose.
inline TrackingState process_frame(const TrackingState& state, const FeatureSet& left, const FeatureSet& right,
                                   const CameraRig& rig, const PipelineConfig& cfg, std::int64_t frame_index) {
    if (left.dim() != state.map.descriptors.cols())
        throw ValidationError("frame " + std::to_string(frame_index) + " has descriptor dimension " +
                              std::to_string(left.dim()) + ", landmarks have " +
                              std::to_string(state.map.descriptors.cols()));
    if (right.dim() != left.dim())
        throw ValidationError("frame " + std::to_string(frame_index) + " left/right descriptor dimensions differ");

    TrackingState next = state;
    next.frame_index = frame_index;
    next.keyframe = false;
    const std::size_t min_landmarks = static_cast<std::size_t>(cfg.ransac.min_inliers);

    const auto tracked = track(state, left, rig, cfg, frame_index);
    if (!tracked) {
        next.last_inliers = 0;
        if (state.status == TrackingStatus::ok) {
            next.status = TrackingStatus::lost;
            return next;
        }
        LandmarkMap map = build_landmarks(left, right, rig, cfg, state.pose);
        if (map.size() >= min_landmarks) {
            next.map = std::move(map);
            next.status = TrackingStatus::ok;
            next.last_keyframe = frame_index;
            next.keyframe = true;
        }
        return next;
    }

    next.pose = tracked->pose;
    next.status = TrackingStatus::ok;
    next.last_inliers = tracked->inliers;
    const bool weak = tracked->inliers < static_cast<std::size_t>(cfg.keyframe_min_tracked);
    const bool stale = frame_index - state.last_keyframe > cfg.keyframe_max_gap;
    if (weak || stale) {
        LandmarkMap map = build_landmarks(left, right, rig, cfg, next.pose);
        if (map.size() >= min_landmarks) {
            next.map = std::move(map);
            next.last_keyframe = frame_index;
            next.keyframe = true;
        }
    }
    return next;
}

// ---------------------------------------------------------------------------
// Sequences

struct FrameRecord {
    std::int64_t frame_index = 0;
    TrackingStatus status = TrackingStatus::ok;
    std::size_t inliers = 0;
    std::size_t landmarks = 0;
    bool keyframe = false;
    double track_seconds = 0.0;
};

struct SequenceResult {
    Trajectory trajectory;
    std::vector<FrameRecord> frames;

    std::size_t count(TrackingStatus s) const {
        std::size_t n = 0;
        for (const auto& f : frames) n += f.status == s ? 1 : 0;
        return n;
    }
};

/// Runs the tracker over every frame of `source`. Frame i gets index i and,
/// when given, timestamps[i]. LOST frames carry the held pose.
inline SequenceResult run_sequence(const FeatureSource& source, const CameraRig& rig, const PipelineConfig& cfg,
                                   std::span<const double> timestamps = {}) {
    cfg.validate();
    if (source.frame_count() == 0) throw ValidationError("run_sequence needs at least one frame");
    if (!timestamps.empty() && timestamps.size() != source.frame_count())
        throw ValidationError("timestamp count does not match frame count");

    SequenceResult result;
    std::optional<TrackingState> state;
    for (std::size_t i = 0; i < source.frame_count(); ++i) {
        const StereoFeatures fr = source.frame(i);
        const auto t0 = std::chrono::steady_clock::now();
        const auto idx = static_cast<std::int64_t>(i);
        state = state ? process_frame(*state, fr.left, fr.right, rig, cfg, idx) : initialize(fr.left, fr.right, rig, cfg, idx);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.trajectory.push_back(idx, state->pose,
                                    timestamps.empty() ? std::nullopt : std::optional<double>(timestamps[i]));
        result.frames.push_back({idx, state->status, state->last_inliers, state->map.size(), state->keyframe, secs});
    }
    return result;
}

inline SequenceResult run_sequence(std::span<const StereoFeatures> frames, const CameraRig& rig,
                                   const PipelineConfig& cfg, std::span<const double> timestamps = {}) {
    class SpanSource : public FeatureSource {
    public:
        explicit SpanSource(std::span<const StereoFeatures> f) : f_(f) {}
        std::size_t frame_count() const override { return f_.size(); }
        StereoFeatures frame(std::size_t i) const override { return f_[i]; }

    private:
        std::span<const StereoFeatures> f_;
    };
    return run_sequence(SpanSource(frames), rig, cfg, timestamps);
}

}  // namespace anms_vo
