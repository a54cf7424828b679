#include "anms_vo/io.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace anms_vo;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("anms_vo_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

template <class Fn>
std::string format_error_location(Fn&& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.location();
    }
    return "<no error>";
}

FeatureSet tiny_set(int dim = 4) {
    FeatureSet f;
    f.width = 32;
    f.height = 32;
    f.keypoints = {{1, 2, 3}};
    f.descriptors = DescriptorMatrix::Zero(1, dim);
    return f;
}

}  // namespace

TEST(Calib, AuthoredFixture) {
    const fs::path d = temp_dir("calib");
    // -P1[0,3] / fx = 0.5372  =>  P1[0,3] = -718.856 * 0.5372
    write_text(d / "calib.txt",
               "P0: 7.188560000000e+02 0 6.071928000000e+02 0 0 7.188560000000e+02 1.852157000000e+02 0 0 0 1 0\n"
               "P1: 7.188560000000e+02 0 6.071928000000e+02 -386.1694432 0 7.188560000000e+02 1.852157000000e+02 0 0 0 1 0\n"
               "P2: 1 0 0 0 0 1 0 0 0 0 1 0\n");
    const CameraRig rig = read_kitti_calib(d / "calib.txt", ImageSize{1241, 376});
    EXPECT_DOUBLE_EQ(rig.fx, 718.856);
    EXPECT_DOUBLE_EQ(rig.cx, 607.1928);
    EXPECT_DOUBLE_EQ(rig.cy, 185.2157);
    EXPECT_NEAR(rig.baseline, 0.5372, 1e-12);
    EXPECT_EQ(rig.width, 1241);
    // no size row and none given
    EXPECT_THROW(read_kitti_calib(d / "calib.txt"), FormatError);
}

TEST(Calib, ZeroBaselineIsRejected) {
    const fs::path d = temp_dir("calib0");
    write_text(d / "calib.txt", "P0: 500 0 300 0 0 500 200 0 0 0 1 0\nP1: 500 0 300 0 0 500 200 0 0 0 1 0\n");
    EXPECT_THROW(read_kitti_calib(d / "calib.txt", ImageSize{640, 480}), ValidationError);
}

TEST(Calib, RoundTrip) {
    const fs::path d = temp_dir("calibrt");
    const CameraRig rig{718.856, 718.856, 607.1928, 185.2157, 0.5371657, 1241, 376};
    write_kitti_calib(rig, d / "calib.txt");
    const CameraRig back = read_kitti_calib(d / "calib.txt");
    EXPECT_EQ(back.fx, rig.fx);
    EXPECT_EQ(back.fy, rig.fy);
    EXPECT_EQ(back.cx, rig.cx);
    EXPECT_EQ(back.cy, rig.cy);
    EXPECT_NEAR(back.baseline, rig.baseline, 1e-12);
    EXPECT_EQ(back.width, rig.width);
    EXPECT_EQ(back.height, rig.height);
}

TEST(Calib, MalformedRowsAreLocated) {
    const fs::path d = temp_dir("calibbad");
    write_text(d / "a.txt", "P0: 500 0 300 0 0 500 200 0 0 0 1 0\nP1: 500 0 300 x 0 500 200 0 0 0 1 0\n");
    EXPECT_EQ(format_error_location([&] { read_kitti_calib(d / "a.txt", ImageSize{640, 480}); }), (d / "a.txt").string() + ":2");
    write_text(d / "b.txt", "P0: 500 0 300 0 0 500 200 0 0 0 1\nP1: 500 0 300 -1 0 500 200 0 0 0 1 0\n");
    EXPECT_EQ(format_error_location([&] { read_kitti_calib(d / "b.txt", ImageSize{640, 480}); }), (d / "b.txt").string() + ":1");
    write_text(d / "c.txt", "P0: 500 0 300 0 0 500 200 0 0 0 1 0\n");
    EXPECT_NE(format_error_location([&] { read_kitti_calib(d / "c.txt", ImageSize{640, 480}); }), "<no error>");
}

TEST(Poses, IdentityLine) {
    const fs::path d = temp_dir("poses");
    write_text(d / "p.txt", "1 0 0 0 0 1 0 0 0 0 1 0\n");
    const Trajectory t = read_kitti_poses(d / "p.txt");
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0].frame_index, 0);
    EXPECT_EQ(t[0].pose.matrix(), Eigen::Matrix4d::Identity());
}

TEST(Poses, KittiRoundTrip) {
    std::mt19937_64 rng(1);
    Trajectory t;
    for (int i = 0; i < 500; ++i) t.push_back(i, oracle::random_pose(rng, 300.0));
    const fs::path d = temp_dir("posesrt");
    write_trajectory(t, d / "p.txt", TrajectoryFormat::kitti);
    const Trajectory back = read_kitti_poses(d / "p.txt");
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_EQ(back[i].frame_index, t[i].frame_index);
        const Eigen::Matrix4d diff = back[i].pose.matrix() - t[i].pose.matrix();
        EXPECT_LT((diff.topLeftCorner<3, 3>().cwiseAbs().maxCoeff()), 1e-9);
        for (int k = 0; k < 3; ++k)
            EXPECT_LE(std::abs(diff(k, 3)), 1e-9 * std::max(1.0, std::abs(t[i].pose.translation()[k])));
    }
}

TEST(Poses, WrongTokenCountNamesLine) {
    const fs::path d = temp_dir("posesbad");
    write_text(d / "p.txt", "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n");
    EXPECT_EQ(format_error_location([&] { read_kitti_poses(d / "p.txt"); }), (d / "p.txt").string() + ":2");
    write_text(d / "q.txt", "1 0 0 0 0 1 0 0 0 0 1 nan?\n");
    EXPECT_EQ(format_error_location([&] { read_kitti_poses(d / "q.txt"); }), (d / "q.txt").string() + ":1");
}

TEST(Poses, DriftedRotationIsReorthonormalized) {
    const fs::path d = temp_dir("posesortho");
    write_text(d / "p.txt", "1.00001 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1 0\n");
    PoseReadReport rep;
    const Trajectory t = read_kitti_poses(d / "p.txt", &rep);
    EXPECT_EQ(rep.reorthonormalized, 1u);
    EXPECT_TRUE(is_rotation(t[0].pose.rotation()));
}

TEST(Tum, IdentityQuaternion) {
    Trajectory t;
    t.push_back(0, PoseSE3(), 1.5);
    std::ostringstream o;
    write_trajectory(t, o, TrajectoryFormat::tum);
    std::istringstream in(o.str());
    std::vector<double> v(8);
    for (auto& x : v) in >> x;
    EXPECT_EQ(v[0], 1.5);
    EXPECT_EQ(v[4], 0.0);
    EXPECT_EQ(v[5], 0.0);
    EXPECT_EQ(v[6], 0.0);
    EXPECT_EQ(v[7], 1.0);
}

TEST(Tum, RequiresTimestamps) {
    Trajectory t;
    t.push_back(0, PoseSE3());
    std::ostringstream o;
    EXPECT_THROW(write_trajectory(t, o, TrajectoryFormat::tum), ValidationError);
}

TEST(Tum, RoundTrip) {
    std::mt19937_64 rng(2);
    Trajectory t;
    for (int i = 0; i < 200; ++i) t.push_back(i, oracle::random_pose(rng, 10.0), 1e9 + 0.05 * i);
    const fs::path d = temp_dir("tum");
    write_trajectory(t, d / "t.txt", TrajectoryFormat::tum);
    const Trajectory back = read_trajectory(d / "t.txt");
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_NEAR(*back[i].timestamp, *t[i].timestamp, 1e-6);
        EXPECT_LT((back[i].pose.matrix() - t[i].pose.matrix()).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Quaternion, RotationRoundTrip) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10000; ++i) {
        const Eigen::Matrix3d r = oracle::random_rotation(rng);
        const Eigen::Vector4d q = rotation_to_quaternion(r);
        EXPECT_NEAR(q.norm(), 1.0, 1e-15);
        EXPECT_GE(q[3], 0.0);
        EXPECT_LT((quaternion_to_rotation(q) - r).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(FeatureDir, EmptyDirectory) { EXPECT_TRUE(read_feature_dir(temp_dir("fd_empty")).empty()); }

TEST(FeatureDir, PairsInFrameOrder) {
    const fs::path d = temp_dir("fd3");
    for (const char* id : {"000002", "000000", "000001"}) {
        FeatureSet f = tiny_set();
        f.keypoints[0].x = std::stod(id);
        save_features(f, d / (std::string(id) + "_left.spft"));
        save_features(f, d / (std::string(id) + "_right.spft"));
    }
    write_text(d / "notes.txt", "ignored");
    const auto frames = read_feature_dir(d);
    ASSERT_EQ(frames.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(frames[i].left.keypoints[0].x, static_cast<double>(i));
        EXPECT_EQ(frames[i].left.image_id, "00000" + std::to_string(i) + "_left");
    }
}

TEST(FeatureDir, MissingCounterpartNamesFrame) {
    const fs::path d = temp_dir("fdmissing");
    save_features(tiny_set(), d / "000000_left.spft");
    save_features(tiny_set(), d / "000000_right.spft");
    save_features(tiny_set(), d / "000001_left.spft");
    try {
        read_feature_dir(d);
        FAIL() << "accepted a left-only frame";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("000001"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("right"), std::string::npos);
    }
}

TEST(Timestamps, ReadAndReject) {
    const fs::path d = temp_dir("times");
    write_text(d / "t.txt", "0.0\n0.1\n\n0.2\n");
    EXPECT_EQ(read_timestamps(d / "t.txt"), (std::vector<double>{0.0, 0.1, 0.2}));
    write_text(d / "u.txt", "0.0\n0.1 0.2\n");
    EXPECT_EQ(format_error_location([&] { read_timestamps(d / "u.txt"); }), (d / "u.txt").string() + ":2");
}

TEST(Pgm, RoundTripAndTruncation) {
    const fs::path d = temp_dir("pgm");
    GrayImage img(20, 10);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i % 256) / 255.0f;
    write_pgm(img, d / "a.pgm");
    const GrayImage back = read_pgm(d / "a.pgm");
    ASSERT_EQ(back.width, 20);
    ASSERT_EQ(back.height, 10);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_FLOAT_EQ(back.pixels[i], img.pixels[i]);
    write_text(d / "b.pgm", "P5\n4 4\n255\nabc");
    EXPECT_NE(format_error_location([&] { read_pgm(d / "b.pgm"); }).find("@ byte"), std::string::npos);
    write_text(d / "c.pgm", "P2\n4 4\n255\n");
    EXPECT_EQ(format_error_location([&] { read_pgm(d / "c.pgm"); }), (d / "c.pgm").string() + " @ byte 0");
}
