#include "anms_vo/core.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace anms_vo;

namespace {

double max_abs(const Eigen::Matrix4d& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Pose, IdentityComposesToIdentity) {
    const PoseSE3 p = compose(PoseSE3::identity(), PoseSE3::identity());
    EXPECT_EQ(p.matrix(), Eigen::Matrix4d::Identity());
    EXPECT_EQ(inverse(PoseSE3::identity()).matrix(), Eigen::Matrix4d::Identity());
}

TEST(Pose, ComposeWithInverseIsIdentity) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const PoseSE3 t = oracle::random_pose(rng);
        EXPECT_LT(max_abs(compose(t, inverse(t)).matrix() - Eigen::Matrix4d::Identity()), 1e-12);
        EXPECT_LT(max_abs(inverse(inverse(t)).matrix() - t.matrix()), 1e-12);
    }
}

TEST(Pose, MatchesHomogeneousMatrixProduct) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 200; ++i) {
        const PoseSE3 a = oracle::random_pose(rng), b = oracle::random_pose(rng);
        const Eigen::Matrix4d want = oracle::homogeneous(a) * oracle::homogeneous(b);
        EXPECT_LT(max_abs(compose(a, b).matrix() - want), 1e-12);
        EXPECT_LT(max_abs(inverse(a).matrix() - oracle::homogeneous(a).inverse()), 1e-12);
    }
}

TEST(Pose, CompositionIsAssociative) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 200; ++i) {
        const PoseSE3 a = oracle::random_pose(rng), b = oracle::random_pose(rng), c = oracle::random_pose(rng);
        EXPECT_LT(max_abs((a * (b * c)).matrix() - ((a * b) * c).matrix()), 1e-10);
    }
}

TEST(Pose, RotationsStayOrthonormal) {
    std::mt19937_64 rng(14);
    PoseSE3 acc;
    for (int i = 0; i < 1000; ++i) {
        acc = acc * oracle::random_pose(rng, 0.1);
        ASSERT_TRUE(is_rotation(acc.rotation()));
    }
}

TEST(Pose, RejectsNonRotation) {
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    r(0, 0) = -1.0;
    EXPECT_THROW(PoseSE3(r, Eigen::Vector3d::Zero()), ValidationError);
    r = Eigen::Matrix3d::Identity() * 1.01;
    EXPECT_THROW(PoseSE3(r, Eigen::Vector3d::Zero()), ValidationError);
    bool corrected = false;
    const PoseSE3 p = PoseSE3::orthonormalized(r, Eigen::Vector3d::Zero(), &corrected);
    EXPECT_TRUE(corrected);
    EXPECT_LT((p.rotation() - Eigen::Matrix3d::Identity()).norm(), 1e-12);
}

TEST(Pose, AxisAngleRoundTrip) {
    std::mt19937_64 rng(15);
    for (int i = 0; i < 200; ++i) {
        const Eigen::Matrix3d r = oracle::random_rotation(rng);
        EXPECT_LT((from_axis_angle(to_axis_angle(r)) - r).norm(), 1e-12);
        EXPECT_NEAR(rotation_angle(r), oracle::rotation_angle(r), 1e-7);
    }
    EXPECT_NEAR(to_axis_angle(so3_exp({0.0, 0.3, 0.0})).y(), 0.3, 1e-15);
}

TEST(Pose, RotationDistance) {
    std::mt19937_64 rng(16);
    for (int i = 0; i < 200; ++i) {
        const Eigen::Matrix3d a = oracle::random_rotation(rng), b = oracle::random_rotation(rng);
        EXPECT_NEAR(rotation_distance(a, b), oracle::rotation_angle(a.transpose() * b), 1e-7);
        EXPECT_EQ(rotation_distance(a, a), 0.0);
    }
    const Eigen::Matrix3d y = so3_exp({0.0, 1e-9, 0.0});
    EXPECT_NEAR(rotation_distance(Eigen::Matrix3d::Identity(), y), 1e-9, 1e-20);
}

TEST(Pose, ExpOfPureTranslation) {
    Vector6d xi = Vector6d::Zero();
    xi.head<3>() << 1.0, -2.0, 3.0;
    const PoseSE3 p = PoseSE3::exp(xi);
    EXPECT_EQ(p.rotation(), Eigen::Matrix3d::Identity());
    EXPECT_EQ(p.translation(), Eigen::Vector3d(1.0, -2.0, 3.0));
}

TEST(Trajectory, RequiresIncreasingFrames) {
    Trajectory t;
    t.push_back(0, PoseSE3());
    t.push_back(3, PoseSE3());
    EXPECT_THROW(t.push_back(3, PoseSE3()), ValidationError);
    EXPECT_FALSE(t.has_timestamps());
}

TEST(Trajectory, PathLength) {
    Trajectory t;
    for (int i = 0; i < 5; ++i) t.push_back(i, PoseSE3(Eigen::Matrix3d::Identity(), {0.0, 0.0, 2.0 * i}));
    EXPECT_DOUBLE_EQ(t.path_length(), 8.0);
}

TEST(FeatureSet, ValidateCatchesBadInput) {
    FeatureSet fs;
    fs.width = 10;
    fs.height = 10;
    fs.keypoints = {{1.0, 1.0, 1.0}};
    fs.descriptors = DescriptorMatrix::Zero(1, 4);
    EXPECT_NO_THROW(fs.validate());
    fs.normalized = true;
    EXPECT_THROW(fs.validate(), ValidationError);
    fs.normalized = false;
    fs.keypoints[0].x = 10.0;
    EXPECT_THROW(fs.validate(), ValidationError);
    fs.keypoints[0].x = std::nan("");
    EXPECT_THROW(fs.validate(), ValidationError);
    fs.keypoints[0].x = 1.0;
    fs.descriptors = DescriptorMatrix::Zero(2, 4);
    EXPECT_THROW(fs.validate(), ValidationError);
}

TEST(CameraRig, ValidateAndProject) {
    CameraRig rig{100.0, 100.0, 50.0, 40.0, 0.5, 100, 80};
    EXPECT_NO_THROW(rig.validate());
    const Eigen::Vector2d l = rig.project({1.0, 0.0, 5.0});
    const Eigen::Vector2d r = rig.project_right({1.0, 0.0, 5.0});
    EXPECT_DOUBLE_EQ(l.x(), 70.0);
    EXPECT_DOUBLE_EQ(l.x() - r.x(), 10.0);
    rig.baseline = 0.0;
    EXPECT_THROW(rig.validate(), ValidationError);
}
