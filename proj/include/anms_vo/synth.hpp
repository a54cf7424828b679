#pragma once

// Synthetic stereo scenes with exact ground truth. Scenes hold 3-D landmarks
// with fixed random unit descriptors and a camera trajectory; rendering a
// frame projects the landmarks into both rectified cameras and emits feature
// sets directly (no images).
//
// Rendering draws all per-frame randomness from a counter-based hash of
// (seed, frame, landmark, channel), so frames can be rendered in any order.

#include "core.hpp"
#include "detector.hpp"
#include "io.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace anms_vo {

enum class TrajectoryShape { line, circle, figure8 };

struct SceneSpec {
    std::size_t n_landmarks = 400;
    TrajectoryShape shape = TrajectoryShape::circle;
    double noise_px = 0.0;      ///< std-dev of Gaussian pixel noise per axis
    double outlier_rate = 0.0;  ///< fraction of visible landmarks with swapped descriptors, per image
    std::uint64_t seed = 1;
    std::size_t frames = 200;
    double size = 10.0;  ///< line length, circle radius or figure-8 half-width, metres
    int descriptor_dim = kDefaultDescriptorDim;
    double min_visible_fraction = 0.8;
    double min_depth = 2.0;
    double max_depth = 50.0;
    /// Depth range used when proposing landmarks along a random camera ray.
    double propose_min_depth = 4.0;
    double propose_max_depth = 18.0;
    CameraRig rig{718.856, 718.856, 607.1928, 185.2157, 0.5371657, 1241, 376};
};

struct SyntheticScene {
    SceneSpec spec;
    std::vector<Eigen::Vector3d> landmarks;  ///< world frame
    DescriptorMatrix descriptors;            ///< one unit row per landmark
    CameraRig rig;
    Trajectory trajectory;  ///< ground truth, camera-to-world
};

struct RenderedFrame {
    FeatureSet left;
    FeatureSet right;
    std::vector<bool> visible;                 ///< per landmark, noiseless frustum test
    std::vector<std::size_t> left_landmark;    ///< landmark id of each left keypoint
    std::vector<std::size_t> right_landmark;   ///< landmark id of each right keypoint
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform in (0, 1) from the hash of the key tuple.
inline double hash_uniform(std::uint64_t seed, std::uint64_t frame, std::uint64_t item, std::uint64_t channel) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ frame);
    h = splitmix64(h ^ item);
    h = splitmix64(h ^ channel);
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

inline double hash_normal(std::uint64_t seed, std::uint64_t frame, std::uint64_t item, std::uint64_t channel) {
    const double u1 = hash_uniform(seed, frame, item, 2 * channel);
    const double u2 = hash_uniform(seed, frame, item, 2 * channel + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Camera-to-world rotation looking along `forward` with +y (world) as down.
inline Eigen::Matrix3d look_rotation(const Eigen::Vector3d& forward) {
    const Eigen::Vector3d z = forward.normalized();
    const Eigen::Vector3d y0 = Eigen::Vector3d::UnitY();
    const Eigen::Vector3d x = y0.cross(z).normalized();
    const Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix3d r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return r;
}

}  // namespace detail

/// Ground-truth trajectory for a shape, expressed relative to the first pose
/// so that frame 0 is the identity (KITTI convention).
///  line:    (0, 0, s), s from 0 to size, facing +z.
///  circle:  radius `size` in the XZ plane around (0, 0, size), facing the centre.
///  figure8: x = size sin(t), z = size sin(t) cos(t), facing the point (0, 0, 2.5 size + 5).
inline Trajectory make_trajectory(TrajectoryShape shape, std::size_t frames, double size) {
    std::vector<PoseSE3> poses;
    for (std::size_t i = 0; i < frames; ++i) {
        Eigen::Vector3d pos;
        Eigen::Matrix3d rot;
        if (shape == TrajectoryShape::line) {
            const double s = frames > 1 ? size * static_cast<double>(i) / static_cast<double>(frames - 1) : 0.0;
            pos = {0.0, 0.0, s};
            rot.setIdentity();
        } else {
            const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(frames);
            if (shape == TrajectoryShape::circle) {
                pos = {size * std::sin(t), 0.0, -size * std::cos(t)};
                rot = detail::look_rotation(-pos);
            } else {
                pos = {size * std::sin(t), 0.0, size * std::sin(t) * std::cos(t)};
                rot = detail::look_rotation(Eigen::Vector3d(0.0, 0.0, 2.5 * size + 5.0) - pos);
            }
        }
        poses.push_back(PoseSE3::orthonormalized(rot, pos));
    }
    Trajectory traj;
    const PoseSE3 origin = poses.empty() ? PoseSE3() : poses.front().inverse();
    for (std::size_t i = 0; i < poses.size(); ++i)
        traj.push_back(static_cast<std::int64_t>(i), origin * poses[i], 0.1 * static_cast<double>(i));
    return traj;
}

/// Noiseless frustum test: in front of both cameras, depth within
/// [min_depth, max_depth], projecting inside both images.
inline bool landmark_visible(const CameraRig& rig, const PoseSE3& camera_from_world, const Eigen::Vector3d& p,
                             double min_depth, double max_depth) {
    const Eigen::Vector3d pc = camera_from_world.transform(p);
    if (!(pc.z() >= min_depth && pc.z() <= max_depth)) return false;
    return rig.in_image(rig.project(pc)) && rig.in_image(rig.project_right(pc));
}

/// Landmarks are proposed along random rays of random poses and kept when
/// visible from at least `min_visible_fraction` of all poses. Throws
/// ValidationError for n < 50 and Error when the constraint cannot be met.
inline SyntheticScene generate_scene(const SceneSpec& spec) {
    if (spec.n_landmarks < 50) throw ValidationError("a synthetic scene needs at least 50 landmarks");
    if (spec.frames == 0) throw ValidationError("a synthetic scene needs at least one frame");
    spec.rig.validate();

    SyntheticScene scene;
    scene.spec = spec;
    scene.rig = spec.rig;
    scene.trajectory = make_trajectory(spec.shape, spec.frames, spec.size);

    std::vector<PoseSE3> cam_from_world;
    for (const auto& e : scene.trajectory) cam_from_world.push_back(e.pose.inverse());

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const CameraRig& rig = spec.rig;
    const std::size_t max_attempts = 500 * spec.n_landmarks;
    std::size_t attempts = 0;
    while (scene.landmarks.size() < spec.n_landmarks) {
        if (++attempts > max_attempts)
            throw Error("cannot place " + std::to_string(spec.n_landmarks) + " landmarks visible from " +
                        std::to_string(spec.min_visible_fraction * 100.0) + "% of poses");
        const auto k = static_cast<std::size_t>(unit(rng) * static_cast<double>(spec.frames)) % spec.frames;
        const double u = unit(rng) * rig.width;
        const double v = unit(rng) * rig.height;
        const double z = spec.propose_min_depth + unit(rng) * (spec.propose_max_depth - spec.propose_min_depth);
        const Eigen::Vector3d pc((u - rig.cx) * z / rig.fx, (v - rig.cy) * z / rig.fy, z);
        const Eigen::Vector3d pw = scene.trajectory[k].pose.transform(pc);
        std::size_t seen = 0;
        for (const auto& t : cam_from_world) seen += landmark_visible(rig, t, pw, spec.min_depth, spec.max_depth) ? 1 : 0;
        if (static_cast<double>(seen) >= spec.min_visible_fraction * static_cast<double>(spec.frames))
            scene.landmarks.push_back(pw);
    }

    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto n = static_cast<Eigen::Index>(spec.n_landmarks);
    scene.descriptors.resize(n, spec.descriptor_dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (;;) {
            Eigen::VectorXd d(spec.descriptor_dim);
            for (int c = 0; c < spec.descriptor_dim; ++c) d[c] = gauss(rng);
            d.normalize();
            scene.descriptors.row(i) = d.cast<float>().transpose();
            bool distinct = true;
            for (Eigen::Index j = 0; j < i && distinct; ++j)
                distinct = (scene.descriptors.row(i) - scene.descriptors.row(j)).cast<double>().norm() > 0.5;
            if (distinct) break;
        }
    }
    return scene;
}

inline RenderedFrame render_frame(const SyntheticScene& scene, std::size_t frame_index) {
    const auto& spec = scene.spec;
    const CameraRig& rig = scene.rig;
    const PoseSE3 cam_from_world = scene.trajectory[frame_index].pose.inverse();
    const std::uint64_t seed = spec.seed;
    const auto f = static_cast<std::uint64_t>(frame_index);

    RenderedFrame out;
    out.visible.assign(scene.landmarks.size(), false);
    std::vector<Keypoint> lk, rk;
    const auto clamp_px = [&](double v, int limit) {
        return std::clamp(v, 0.0, std::nextafter(static_cast<double>(limit), 0.0));
    };
    for (std::size_t l = 0; l < scene.landmarks.size(); ++l) {
        if (!landmark_visible(rig, cam_from_world, scene.landmarks[l], 0.0, std::numeric_limits<double>::infinity()))
            continue;
        out.visible[l] = true;
        const Eigen::Vector3d pc = cam_from_world.transform(scene.landmarks[l]);
        Eigen::Vector2d pl = rig.project(pc);
        Eigen::Vector2d pr = rig.project_right(pc);
        if (spec.noise_px > 0.0) {
            pl += spec.noise_px * Eigen::Vector2d(detail::hash_normal(seed, f, l, 0), detail::hash_normal(seed, f, l, 1));
            pr += spec.noise_px * Eigen::Vector2d(detail::hash_normal(seed, f, l, 2), detail::hash_normal(seed, f, l, 3));
        }
        const double score = detail::hash_uniform(seed, f, l, 100);
        lk.push_back({clamp_px(pl.x(), rig.width), clamp_px(pl.y(), rig.height), score});
        rk.push_back({clamp_px(pr.x(), rig.width), clamp_px(pr.y(), rig.height), score});
        out.left_landmark.push_back(l);
        out.right_landmark.push_back(l);
    }

    // Descriptor swaps: the chosen keypoints pass their descriptors around a cycle.
    const auto build = [&](std::vector<Keypoint> kps, const std::vector<std::size_t>& ids, std::uint64_t channel,
                           const char* side) {
        FeatureSet fs;
        fs.image_id = std::to_string(frame_index) + "_" + side;
        fs.width = rig.width;
        fs.height = rig.height;
        fs.normalized = true;
        fs.keypoints = std::move(kps);
        fs.descriptors.resize(static_cast<Eigen::Index>(ids.size()), scene.descriptors.cols());
        std::vector<std::size_t> swapped;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            fs.descriptors.row(static_cast<Eigen::Index>(k)) = scene.descriptors.row(static_cast<Eigen::Index>(ids[k]));
            if (spec.outlier_rate > 0.0 && detail::hash_uniform(seed, f, ids[k], channel) < spec.outlier_rate)
                swapped.push_back(k);
        }
        if (swapped.size() >= 2) {
            const DescriptorMatrix first = fs.descriptors.row(static_cast<Eigen::Index>(swapped.front()));
            for (std::size_t s = 0; s + 1 < swapped.size(); ++s)
                fs.descriptors.row(static_cast<Eigen::Index>(swapped[s])) =
                    fs.descriptors.row(static_cast<Eigen::Index>(swapped[s + 1]));
            fs.descriptors.row(static_cast<Eigen::Index>(swapped.back())) = first;
        }
        return fs;
    };
    out.left = build(std::move(lk), out.left_landmark, 200, "left");
    out.right = build(std::move(rk), out.right_landmark, 201, "right");
    return out;
}

// ---------------------------------------------------------------------------
// Dumps

/// Writes <frame:06>_{left|right}.spft per frame, gt_poses.txt (KITTI pose
/// format), times.txt and calib.txt (KITTI calib with an S0 size row).
inline void dump_scene(const SyntheticScene& scene, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
        const RenderedFrame fr = render_frame(scene, i);
        char name[32];
        std::snprintf(name, sizeof name, "%06zu", i);
        save_features(fr.left, dir / (std::string(name) + "_left.spft"));
        save_features(fr.right, dir / (std::string(name) + "_right.spft"));
    }
    write_trajectory(scene.trajectory, dir / "gt_poses.txt", TrajectoryFormat::kitti);
    std::ofstream times(dir / "times.txt");
    for (const auto& e : scene.trajectory) times << detail::format_real(e.timestamp.value_or(0.0)) << '\n';
    write_kitti_calib(scene.rig, dir / "calib.txt");
}

struct SceneDump {
    CameraRig rig;
    Trajectory ground_truth;
    std::vector<StereoFeatures> frames;
};

inline SceneDump load_scene_dump(const std::filesystem::path& dir) {
    SceneDump d;
    d.rig = read_kitti_calib(dir / "calib.txt");
    d.ground_truth = read_kitti_poses(dir / "gt_poses.txt");
    d.frames = read_feature_dir(dir);
    return d;
}

}  // namespace anms_vo
