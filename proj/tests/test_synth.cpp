#include "anms_vo/geometry.hpp"
#include "anms_vo/synth.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace anms_vo;

namespace {

SceneSpec small_spec(TrajectoryShape shape = TrajectoryShape::circle) {
    SceneSpec s;
    s.shape = shape;
    s.frames = 40;
    s.n_landmarks = 150;
    s.seed = 5;
    return s;
}

}  // namespace

TEST(Synth, LinePathLength) {
    const Trajectory t = make_trajectory(TrajectoryShape::line, 101, 37.5);
    EXPECT_NEAR(t.path_length(), 37.5, 1e-9);
    EXPECT_EQ(t[0].pose.matrix(), Eigen::Matrix4d::Identity());
}

TEST(Synth, CircleRadius) {
    const double r = 10.0;
    const Trajectory t = make_trajectory(TrajectoryShape::circle, 200, r);
    EXPECT_LT((t[0].pose.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::Vector3d centre(0.0, 0.0, r);
    for (const auto& e : t) EXPECT_NEAR((e.pose.translation() - centre).norm(), r, 1e-9);
}

TEST(Synth, SceneIsDeterministic) {
    const SyntheticScene a = generate_scene(small_spec()), b = generate_scene(small_spec());
    ASSERT_EQ(a.landmarks.size(), b.landmarks.size());
    for (std::size_t i = 0; i < a.landmarks.size(); ++i) EXPECT_EQ(a.landmarks[i], b.landmarks[i]);
    EXPECT_EQ(a.descriptors, b.descriptors);
    SceneSpec other = small_spec();
    other.seed = 6;
    EXPECT_NE(generate_scene(other).landmarks[0], a.landmarks[0]);
}

TEST(Synth, LandmarksMeetVisibilityFraction) {
    for (const auto shape : {TrajectoryShape::line, TrajectoryShape::circle, TrajectoryShape::figure8}) {
        const SyntheticScene s = generate_scene(small_spec(shape));
        for (const auto& p : s.landmarks) {
            std::size_t seen = 0;
            for (const auto& e : s.trajectory)
                seen += landmark_visible(s.rig, e.pose.inverse(), p, s.spec.min_depth, s.spec.max_depth);
            EXPECT_GE(static_cast<double>(seen), 0.8 * static_cast<double>(s.trajectory.size()));
        }
    }
}

TEST(Synth, InfeasibleVisibilityFails) {
    SceneSpec s = small_spec();
    s.min_depth = 100.0;
    s.max_depth = 200.0;
    EXPECT_THROW(generate_scene(s), Error);
}

TEST(Synth, PinholeProjectionByHand) {
    SceneSpec spec = small_spec(TrajectoryShape::line);
    const SyntheticScene s = generate_scene(spec);
    const RenderedFrame f = render_frame(s, 0);
    // frame 0 is the identity, so camera and world coincide
    for (std::size_t k = 0; k < f.left.size(); ++k) {
        const Eigen::Vector3d& p = s.landmarks[f.left_landmark[k]];
        const double u = 718.856 * p.x() / p.z() + 607.1928;
        const double v = 718.856 * p.y() / p.z() + 185.2157;
        EXPECT_NEAR(f.left.keypoints[k].x, u, 1e-9);
        EXPECT_NEAR(f.left.keypoints[k].y, v, 1e-9);
        const double disparity = 718.856 * 0.5371657 / p.z();
        EXPECT_NEAR(f.right.keypoints[k].x, u - disparity, 1e-9);
        EXPECT_EQ(f.right.keypoints[k].y, f.left.keypoints[k].y);
    }
}

TEST(Synth, VisibilityMatchesFrustum) {
    const SyntheticScene s = generate_scene(small_spec());
    for (std::size_t i = 0; i < s.trajectory.size(); i += 7) {
        const RenderedFrame f = render_frame(s, i);
        const PoseSE3 tcw = s.trajectory[i].pose.inverse();
        for (std::size_t l = 0; l < s.landmarks.size(); ++l) {
            const Eigen::Vector3d pc = tcw.transform(s.landmarks[l]);
            bool in = pc.z() > 0.0;
            if (in) {
                const double ul = s.rig.fx * pc.x() / pc.z() + s.rig.cx;
                const double ur = s.rig.fx * (pc.x() - s.rig.baseline) / pc.z() + s.rig.cx;
                const double v = s.rig.fy * pc.y() / pc.z() + s.rig.cy;
                in = ul >= 0 && ul < s.rig.width && ur >= 0 && ur < s.rig.width && v >= 0 && v < s.rig.height;
            }
            EXPECT_EQ(f.visible[l], in) << "frame " << i << " landmark " << l;
        }
        EXPECT_EQ(f.left.size(), static_cast<std::size_t>(std::count(f.visible.begin(), f.visible.end(), true)));
    }
}

TEST(Synth, RenderingIsOrderIndependent) {
    SceneSpec spec = small_spec();
    spec.noise_px = 0.5;
    spec.outlier_rate = 0.1;
    const SyntheticScene s = generate_scene(spec);
    const RenderedFrame late = render_frame(s, 30);
    render_frame(s, 3);
    const RenderedFrame again = render_frame(s, 30);
    EXPECT_EQ(encode_spft(late.left), encode_spft(again.left));
    EXPECT_EQ(encode_spft(late.right), encode_spft(again.right));
}

TEST(Synth, OutliersSwapDescriptors) {
    SceneSpec spec = small_spec();
    spec.outlier_rate = 0.2;
    const SyntheticScene s = generate_scene(spec);
    const RenderedFrame f = render_frame(s, 0);
    std::size_t wrong = 0;
    for (std::size_t k = 0; k < f.left.size(); ++k)
        wrong += f.left.descriptors.row(static_cast<Eigen::Index>(k)) !=
                 s.descriptors.row(static_cast<Eigen::Index>(f.left_landmark[k]));
    const double rate = static_cast<double>(wrong) / static_cast<double>(f.left.size());
    EXPECT_GT(rate, 0.1);
    EXPECT_LT(rate, 0.3);
}

TEST(Synth, ZeroNoiseCorrespondencesRecoverPoses) {
    const SyntheticScene s = generate_scene(small_spec(TrajectoryShape::figure8));
    for (std::size_t i = 0; i < s.trajectory.size(); i += 3) {
        const RenderedFrame f = render_frame(s, i);
        std::vector<Correspondence> c;
        for (std::size_t k = 0; k < f.left.size(); ++k)
            c.push_back({s.landmarks[f.left_landmark[k]], {f.left.keypoints[k].x, f.left.keypoints[k].y}});
        const RansacResult r = ransac_pnp(c, s.rig, {}, i);
        EXPECT_LT((r.pose.translation() - s.trajectory[i].pose.translation()).norm(), 1e-6);
        EXPECT_LT(rotation_angle(r.pose.rotation().transpose() * s.trajectory[i].pose.rotation()), 1e-6);
    }
}

TEST(Synth, DumpRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "anms_vo_synth_dump";
    std::filesystem::remove_all(dir);
    SceneSpec spec = small_spec();
    spec.frames = 5;
    const SyntheticScene s = generate_scene(spec);
    dump_scene(s, dir);
    const SceneDump d = load_scene_dump(dir);
    ASSERT_EQ(d.frames.size(), 5u);
    ASSERT_EQ(d.ground_truth.size(), 5u);
    EXPECT_EQ(d.rig.width, s.rig.width);
    EXPECT_NEAR(d.rig.baseline, s.rig.baseline, 1e-12);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(d.frames[i].left.size(), render_frame(s, i).left.size());
        EXPECT_LT((d.ground_truth[i].pose.matrix() - s.trajectory[i].pose.matrix()).cwiseAbs().maxCoeff(), 1e-8);
    }
}
