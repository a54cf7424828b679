#pragma once

// Shared domain types: keypoints, feature sets, the stereo rig, SE(3) poses
// and trajectories, plus the error hierarchy used across the library.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace anms_vo {

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input. `location()` names where (line number, byte offset, ...).
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::string location)
        : Error(location.empty() ? what : location + ": " + what), location_(std::move(location)) {}
    const std::string& location() const noexcept { return location_; }

private:
    std::string location_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

class TrackingFailure : public Error {
public:
    using Error::Error;
};

class InitializationError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Features

inline constexpr int kDefaultDescriptorDim = 256;

struct Keypoint {
    double x = 0.0;      ///< image column, pixels
    double y = 0.0;      ///< image row, pixels
    double score = 0.0;  ///< detector response
};

using DescriptorMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Keypoints and descriptors for one image. Row i of `descriptors` belongs to
/// `keypoints[i]`; the descriptor dimension is `descriptors.cols()`.
struct FeatureSet {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<Keypoint> keypoints;
    DescriptorMatrix descriptors{0, kDefaultDescriptorDim};
    bool normalized = false;

    std::size_t size() const noexcept { return keypoints.size(); }
    bool empty() const noexcept { return keypoints.empty(); }
    int dim() const noexcept { return static_cast<int>(descriptors.cols()); }

    /// Throws ValidationError naming the first violated invariant.
    void validate() const {
        if (width < 0 || height < 0) throw ValidationError("feature set has negative image size");
        if (descriptors.rows() != static_cast<Eigen::Index>(keypoints.size()))
            throw ValidationError("feature set: " + std::to_string(keypoints.size()) + " keypoints but " +
                                  std::to_string(descriptors.rows()) + " descriptor rows");
        for (std::size_t i = 0; i < keypoints.size(); ++i) {
            const Keypoint& k = keypoints[i];
            if (!std::isfinite(k.x) || !std::isfinite(k.y) || !std::isfinite(k.score))
                throw ValidationError("keypoint " + std::to_string(i) + " is not finite");
            if (k.x < 0.0 || k.y < 0.0 || k.x >= width || k.y >= height)
                throw ValidationError("keypoint " + std::to_string(i) + " lies outside the " + std::to_string(width) +
                                      "x" + std::to_string(height) + " image");
        }
        for (Eigen::Index r = 0; r < descriptors.rows(); ++r) {
            if (!descriptors.row(r).allFinite())
                throw ValidationError("descriptor " + std::to_string(r) + " has non-finite entries");
            if (normalized) {
                const double n = descriptors.row(r).cast<double>().norm();
                if (std::abs(n - 1.0) > 1e-3)
                    throw ValidationError("descriptor " + std::to_string(r) + " flagged normalized has norm " +
                                          std::to_string(n));
            }
        }
    }

    /// Keypoints and descriptor rows at `indices`, in that order.
    FeatureSet subset(std::span<const std::size_t> indices) const {
        FeatureSet out;
        out.image_id = image_id;
        out.width = width;
        out.height = height;
        out.normalized = normalized;
        out.keypoints.reserve(indices.size());
        out.descriptors.resize(static_cast<Eigen::Index>(indices.size()), descriptors.cols());
        for (std::size_t r = 0; r < indices.size(); ++r) {
            out.keypoints.push_back(keypoints.at(indices[r]));
            out.descriptors.row(static_cast<Eigen::Index>(r)) = descriptors.row(static_cast<Eigen::Index>(indices[r]));
        }
        return out;
    }
};

struct StereoFeatures {
    FeatureSet left;
    FeatureSet right;
};

// ---------------------------------------------------------------------------
// Camera

/// Rectified stereo pair: identical pinhole intrinsics, right camera displaced
/// by `baseline` metres along the left camera's +x axis.
struct CameraRig {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double baseline = 0.0;
    int width = 0;
    int height = 0;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera rig focal lengths must be positive");
        if (!(baseline > 0.0)) throw ValidationError("camera rig baseline must be positive");
        if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
            throw ValidationError("camera rig principal point lies outside the image");
    }

    Eigen::Vector2d project(const Eigen::Vector3d& p_cam) const {
        return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
    }

    Eigen::Vector2d project_right(const Eigen::Vector3d& p_cam) const {
        return {fx * (p_cam.x() - baseline) / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
    }

    bool in_image(const Eigen::Vector2d& px) const {
        return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
    }
};

// ---------------------------------------------------------------------------
// Rotations

using Vector6d = Eigen::Matrix<double, 6, 1>;

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

inline bool is_rotation(const Eigen::Matrix3d& r, double tol = 1e-9) {
    if (!r.allFinite()) return false;
    const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

/// Closest rotation in the Frobenius sense.
inline Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Rodrigues' formula; `w` is an axis-angle vector (radians).
inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
    const double theta2 = w.squaredNorm();
    const Eigen::Matrix3d k = skew(w);
    double a, b;
    if (theta2 < 1e-12) {
        a = 1.0 - theta2 / 6.0;
        b = 0.5 - theta2 / 24.0;
    } else {
        const double theta = std::sqrt(theta2);
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

/// Rotation angle in [0, pi], accurate for both small and near-pi angles.
inline double rotation_angle(const Eigen::Matrix3d& r) {
    const Eigen::Vector3d v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    return std::atan2(0.5 * v.norm(), 0.5 * (r.trace() - 1.0));
}

/// Angle of a^T b from the chordal distance |a - b|_F = 2 sqrt(2) sin(theta / 2).
/// Exactly zero when a == b.
inline double rotation_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    const double c = (a - b).norm();
    return 2.0 * std::atan2(c, std::sqrt(std::max(0.0, 8.0 - c * c)));
}

inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
    const Eigen::AngleAxisd aa(r);
    return aa.angle() * aa.axis();
}

inline Eigen::Vector3d to_axis_angle(const Eigen::Matrix3d& r) { return so3_log(r); }
inline Eigen::Matrix3d from_axis_angle(const Eigen::Vector3d& w) { return so3_exp(w); }

// ---------------------------------------------------------------------------
// SE(3)

/// Rigid transform. Poses are camera-to-world (T_wc): `transform(p_cam)`
/// yields the point in world coordinates.
class PoseSE3 {
public:
    PoseSE3() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}

    PoseSE3(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
        : rotation_(rotation), translation_(translation) {
        if (!is_rotation(rotation_)) throw ValidationError("pose rotation is not orthonormal with det +1");
        if (!translation_.allFinite()) throw ValidationError("pose translation is not finite");
    }

    static PoseSE3 identity() { return {}; }

    /// Projects `rotation` onto SO(3) when it drifts beyond tolerance.
    /// `corrected` reports whether projection happened.
    static PoseSE3 orthonormalized(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation,
                                   bool* corrected = nullptr) {
        const bool ok = is_rotation(rotation);
        if (corrected) *corrected = !ok;
        if (!rotation.allFinite()) throw ValidationError("pose rotation is not finite");
        return PoseSE3(ok ? rotation : nearest_rotation(rotation), translation);
    }

    /// Twist ordering is (rho, omega): translation part first.
    static PoseSE3 exp(const Vector6d& twist) {
        const Eigen::Vector3d rho = twist.head<3>();
        const Eigen::Vector3d w = twist.tail<3>();
        const double theta2 = w.squaredNorm();
        const Eigen::Matrix3d k = skew(w);
        double b, c;
        if (theta2 < 1e-12) {
            b = 0.5 - theta2 / 24.0;
            c = 1.0 / 6.0 - theta2 / 120.0;
        } else {
            const double theta = std::sqrt(theta2);
            b = (1.0 - std::cos(theta)) / theta2;
            c = (theta - std::sin(theta)) / (theta2 * theta);
        }
        const Eigen::Matrix3d v = Eigen::Matrix3d::Identity() + b * k + c * k * k;
        return orthonormalized(so3_exp(w), v * rho);
    }

    static PoseSE3 from_matrix(const Eigen::Matrix4d& m) {
        return PoseSE3(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
    }

    const Eigen::Matrix3d& rotation() const noexcept { return rotation_; }
    const Eigen::Vector3d& translation() const noexcept { return translation_; }

    Eigen::Matrix4d matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation_;
        m.topRightCorner<3, 1>() = translation_;
        return m;
    }

    Eigen::Vector3d transform(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

    PoseSE3 inverse() const {
        const Eigen::Matrix3d rt = rotation_.transpose();
        return orthonormalized(rt, -(rt * translation_));
    }

    PoseSE3 operator*(const PoseSE3& other) const {
        return orthonormalized(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
    }

private:
    Eigen::Matrix3d rotation_;
    Eigen::Vector3d translation_;
};

inline PoseSE3 compose(const PoseSE3& a, const PoseSE3& b) { return a * b; }
inline PoseSE3 inverse(const PoseSE3& t) { return t.inverse(); }

// ---------------------------------------------------------------------------
// Trajectory

struct TrajectoryEntry {
    std::int64_t frame_index = 0;
    std::optional<double> timestamp;
    PoseSE3 pose;
};

/// Poses ordered by strictly increasing frame index.
class Trajectory {
public:
    Trajectory() = default;

    void push_back(std::int64_t frame_index, const PoseSE3& pose, std::optional<double> timestamp = std::nullopt) {
        if (!entries_.empty() && frame_index <= entries_.back().frame_index)
            throw ValidationError("trajectory frame indices must be strictly increasing (got " +
                                  std::to_string(frame_index) + " after " +
                                  std::to_string(entries_.back().frame_index) + ")");
        entries_.push_back({frame_index, timestamp, pose});
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const TrajectoryEntry& operator[](std::size_t i) const { return entries_[i]; }
    const TrajectoryEntry& back() const { return entries_.back(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    bool has_timestamps() const {
        for (const auto& e : entries_)
            if (!e.timestamp) return false;
        return !entries_.empty();
    }

    /// Every pose left-multiplied by `t` (change of world frame).
    Trajectory transformed(const PoseSE3& t) const {
        Trajectory out;
        for (const auto& e : entries_) out.push_back(e.frame_index, t * e.pose, e.timestamp);
        return out;
    }

    /// Ground-truth style path length: sum of consecutive translation steps.
    double path_length() const {
        double len = 0.0;
        for (std::size_t i = 1; i < entries_.size(); ++i)
            len += (entries_[i].pose.translation() - entries_[i - 1].pose.translation()).norm();
        return len;
    }

private:
    std::vector<TrajectoryEntry> entries_;
};

}  // namespace anms_vo
