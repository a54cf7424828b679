#pragma once

// Dataset and trajectory files: KITTI calib.txt and pose files, TUM
// trajectories, SPFT feature directories and binary PGM images.
//
// All readers reject malformed input with a FormatError that carries the
// file name and line number (or byte offset for binary formats).

#include "core.hpp"
#include "detector.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace anms_vo {

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> out;
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline double parse_double(const std::string& tok, const std::string& location) {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw FormatError("expected a finite number, got \"" + tok + "\"", location);
    return v;
}

inline std::string line_location(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

inline std::ifstream open_text(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path.string());
    return f;
}

/// 10 significant digits, scientific.
inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9e", v);
    return buf;
}

/// 17 significant digits; reads back to the same double.
inline std::string format_exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// KITTI calibration

struct ImageSize {
    int width = 0;
    int height = 0;
};

/// Reads P0/P1 projection rows. fx = P0[0,0], fy = P0[1,1], cx = P0[0,2],
/// cy = P0[1,2], baseline = -P1[0,3] / P1[0,0].
///
/// KITTI odometry calib files carry no image size, so it comes from `size`,
/// or from an optional "S0: width height" line; one of them is required.
inline CameraRig read_kitti_calib(const std::filesystem::path& path, std::optional<ImageSize> size = std::nullopt) {
    auto f = detail::open_text(path);
    std::map<std::string, std::pair<std::vector<double>, std::size_t>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        const std::string& key = toks[0];
        if (key.size() < 2 || key.back() != ':')
            throw FormatError("expected \"KEY: values\"", detail::line_location(path, lineno));
        std::vector<double> vals;
        for (std::size_t i = 1; i < toks.size(); ++i)
            vals.push_back(detail::parse_double(toks[i], detail::line_location(path, lineno)));
        rows[key.substr(0, key.size() - 1)] = {std::move(vals), lineno};
    }
    const auto projection = [&](const char* key) -> const std::vector<double>& {
        const auto it = rows.find(key);
        if (it == rows.end()) throw FormatError(std::string("missing ") + key + " row", path.string());
        if (it->second.first.size() != 12)
            throw FormatError(std::string(key) + " must have 12 values, has " + std::to_string(it->second.first.size()),
                              detail::line_location(path, it->second.second));
        return it->second.first;
    };
    const auto& p0 = projection("P0");
    const auto& p1 = projection("P1");

    CameraRig rig;
    rig.fx = p0[0];
    rig.fy = p0[5];
    rig.cx = p0[2];
    rig.cy = p0[6];
    if (p1[0] == 0.0) throw FormatError("P1[0,0] is zero", detail::line_location(path, rows["P1"].second));
    rig.baseline = -p1[3] / p1[0];
    if (size) {
        rig.width = size->width;
        rig.height = size->height;
    } else if (const auto it = rows.find("S0"); it != rows.end()) {
        if (it->second.first.size() != 2)
            throw FormatError("S0 must be \"width height\"", detail::line_location(path, it->second.second));
        rig.width = static_cast<int>(it->second.first[0]);
        rig.height = static_cast<int>(it->second.first[1]);
    } else {
        throw FormatError("image size unknown: no S0 row and none supplied", path.string());
    }
    rig.validate();
    return rig;
}

inline void write_kitti_calib(const CameraRig& rig, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    const auto row = [&](const char* key, const std::array<double, 12>& v) {
        f << key << ':';
        for (const double x : v) f << ' ' << detail::format_exact(x);
        f << '\n';
    };
    row("P0", {rig.fx, 0, rig.cx, 0, 0, rig.fy, rig.cy, 0, 0, 0, 1, 0});
    row("P1", {rig.fx, 0, rig.cx, -rig.fx * rig.baseline, 0, rig.fy, rig.cy, 0, 0, 0, 1, 0});
    f << "S0: " << rig.width << ' ' << rig.height << '\n';
}

// ---------------------------------------------------------------------------
// Trajectories

struct PoseReadReport {
    std::size_t reorthonormalized = 0;  ///< poses whose rotation had to be projected onto SO(3)
};

/// One pose per non-empty line: 12 reals, row-major 3x4 camera-to-world.
/// frame_index is the 0-based pose line number.
inline Trajectory read_kitti_poses(const std::filesystem::path& path, PoseReadReport* report = nullptr) {
    auto f = detail::open_text(path);
    Trajectory traj;
    std::string line;
    std::size_t lineno = 0;
    std::int64_t frame = 0;
    PoseReadReport rep;
    while (std::getline(f, line)) {
        ++lineno;
        const auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        const std::string loc = detail::line_location(path, lineno);
        if (toks.size() != 12)
            throw FormatError("expected 12 values, found " + std::to_string(toks.size()), loc);
        Eigen::Matrix3d r;
        Eigen::Vector3d t;
        for (int row = 0; row < 3; ++row) {
            for (int col = 0; col < 3; ++col) r(row, col) = detail::parse_double(toks[static_cast<std::size_t>(row * 4 + col)], loc);
            t[row] = detail::parse_double(toks[static_cast<std::size_t>(row * 4 + 3)], loc);
        }
        bool corrected = false;
        try {
            if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-3 || r.determinant() < 0.0)
                throw ValidationError("rotation block is not a rotation");
            traj.push_back(frame++, PoseSE3::orthonormalized(r, t, &corrected));
        } catch (const ValidationError& e) {
            throw FormatError(e.what(), loc);
        }
        if (corrected) ++rep.reorthonormalized;
    }
    if (report) *report = rep;
    return traj;
}

/// One pose per line: "timestamp tx ty tz qx qy qz qw".
inline Trajectory read_tum_trajectory(const std::filesystem::path& path) {
    auto f = detail::open_text(path);
    Trajectory traj;
    std::string line;
    std::size_t lineno = 0;
    std::int64_t frame = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto toks = detail::split_ws(line);
        if (toks.empty() || toks[0].starts_with('#')) continue;
        const std::string loc = detail::line_location(path, lineno);
        if (toks.size() != 8) throw FormatError("expected 8 values, found " + std::to_string(toks.size()), loc);
        std::array<double, 8> v{};
        for (std::size_t i = 0; i < 8; ++i) v[i] = detail::parse_double(toks[i], loc);
        Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
        if (std::abs(q.norm() - 1.0) > 1e-3) throw FormatError("quaternion is not unit length", loc);
        q.normalize();
        try {
            traj.push_back(frame++, PoseSE3::orthonormalized(q.toRotationMatrix(), {v[1], v[2], v[3]}), v[0]);
        } catch (const ValidationError& e) {
            throw FormatError(e.what(), loc);
        }
    }
    return traj;
}

/// KITTI files hold 12 values per line, TUM files 8.
inline Trajectory read_trajectory(const std::filesystem::path& path) {
    auto f = detail::open_text(path);
    std::string line;
    while (std::getline(f, line)) {
        const auto toks = detail::split_ws(line);
        if (toks.empty() || toks[0].starts_with('#')) continue;
        return toks.size() == 8 ? read_tum_trajectory(path) : read_kitti_poses(path);
    }
    return {};
}

enum class TrajectoryFormat { kitti, tum };

/// Unit quaternion (x, y, z, w) with w >= 0.
inline Eigen::Vector4d rotation_to_quaternion(const Eigen::Matrix3d& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return {q.x(), q.y(), q.z(), q.w()};
}

inline Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& xyzw) {
    return Eigen::Quaterniond(xyzw[3], xyzw[0], xyzw[1], xyzw[2]).normalized().toRotationMatrix();
}

inline void write_trajectory(const Trajectory& traj, std::ostream& out, TrajectoryFormat format) {
    if (format == TrajectoryFormat::tum && !traj.empty() && !traj.has_timestamps())
        throw ValidationError("TUM output requires a timestamp on every pose");
    for (const auto& e : traj) {
        const auto& r = e.pose.rotation();
        const auto& t = e.pose.translation();
        if (format == TrajectoryFormat::kitti) {
            for (int row = 0; row < 3; ++row) {
                for (int col = 0; col < 3; ++col) out << detail::format_real(r(row, col)) << ' ';
                out << detail::format_real(t[row]) << (row == 2 ? '\n' : ' ');
            }
        } else {
            const Eigen::Vector4d q = rotation_to_quaternion(r);
            char ts[32];
            std::snprintf(ts, sizeof ts, "%.6f", *e.timestamp);
            out << ts;
            for (int i = 0; i < 3; ++i) out << ' ' << detail::format_real(t[i]);
            for (int i = 0; i < 4; ++i) out << ' ' << detail::format_real(q[i]);
            out << '\n';
        }
    }
}

inline void write_trajectory(const Trajectory& traj, const std::filesystem::path& path, TrajectoryFormat format) {
    std::ostringstream ss;
    write_trajectory(traj, ss, format);
    std::ofstream f(path);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f << ss.str();
}

/// One timestamp (seconds) per line, as in KITTI times.txt.
inline std::vector<double> read_timestamps(const std::filesystem::path& path) {
    auto f = detail::open_text(path);
    std::vector<double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() != 1) throw FormatError("expected one timestamp per line", detail::line_location(path, lineno));
        out.push_back(detail::parse_double(toks[0], detail::line_location(path, lineno)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stereo frame directories

struct StereoFramePaths {
    std::string frame_id;
    std::filesystem::path left;
    std::filesystem::path right;
};

/// Pairs files named <frame:06>_left.<ext> / <frame:06>_right.<ext>, sorted
/// by frame id. A frame missing either side is an error naming it.
inline std::vector<StereoFramePaths> list_stereo_dir(const std::filesystem::path& dir, const std::string& ext) {
    if (!std::filesystem::is_directory(dir)) throw Error(dir.string() + " is not a directory");
    const std::regex pattern("([0-9]{6})_(left|right)\\." + ext);
    std::map<std::string, StereoFramePaths> frames;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (!std::regex_match(name, m, pattern)) continue;
        auto& slot = frames[m[1].str()];
        slot.frame_id = m[1].str();
        (m[2].str() == "left" ? slot.left : slot.right) = entry.path();
    }
    std::vector<StereoFramePaths> out;
    for (auto& [id, p] : frames) {
        if (p.left.empty() || p.right.empty())
            throw FormatError(std::string("frame ") + id + " has no " + (p.left.empty() ? "left" : "right") + " file",
                              (dir / id).string());
        out.push_back(std::move(p));
    }
    return out;
}

/// Streams SPFT stereo pairs from a directory, loading each frame on demand.
class SpftDirectorySource : public FeatureSource {
public:
    explicit SpftDirectorySource(const std::filesystem::path& dir) : frames_(list_stereo_dir(dir, "spft")) {}

    std::size_t frame_count() const override { return frames_.size(); }
    const std::vector<StereoFramePaths>& frames() const noexcept { return frames_; }

    StereoFeatures frame(std::size_t index) const override {
        const auto& p = frames_.at(index);
        return {load_features(p.left), load_features(p.right)};
    }

private:
    std::vector<StereoFramePaths> frames_;
};

inline std::vector<StereoFeatures> read_feature_dir(const std::filesystem::path& dir) {
    const SpftDirectorySource src(dir);
    std::vector<StereoFeatures> out;
    out.reserve(src.frame_count());
    for (std::size_t i = 0; i < src.frame_count(); ++i) out.push_back(src.frame(i));
    return out;
}

// ---------------------------------------------------------------------------
// PGM

/// Binary greyscale PGM (P5), 8- or 16-bit; intensities scaled to [0, 1].
inline GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string());
    const auto token = [&]() {
        std::string tok;
        while (f >> std::ws && f.peek() == '#') {
            std::string skip;
            std::getline(f, skip);
        }
        f >> tok;
        return tok;
    };
    if (token() != "P5") throw FormatError("not a binary PGM (P5)", path.string() + " @ byte 0");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw FormatError("malformed PGM header", path.string());
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw FormatError("invalid PGM header values", path.string());
    f.get();
    const std::streamoff data_start = f.tellg();
    GrayImage img(w, h);
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * bytes);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size()))
        throw FormatError("truncated pixel data", path.string() + " @ byte " + std::to_string(data_start + f.gcount()));
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const unsigned v = bytes == 1 ? raw[i] : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
        img.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
    return img;
}

inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    for (const float v : img.pixels) {
        const float c = std::clamp(v, 0.0f, 1.0f);
        f.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
    }
}

/// Classical-detector source over <frame:06>_{left|right}.pgm files.
inline ClassicalImageSource make_pgm_source(const std::filesystem::path& dir, std::size_t pool_size,
                                            HarrisParams params = {}) {
    auto frames = std::make_shared<std::vector<StereoFramePaths>>(list_stereo_dir(dir, "pgm"));
    const std::size_t n = frames->size();
    return ClassicalImageSource(
        n, [frames](std::size_t i, bool right) { return read_pgm(right ? frames->at(i).right : frames->at(i).left); },
        pool_size, params);
}

}  // namespace anms_vo
