#pragma once

// Flat "key = value" run configuration. Blank lines and text after '#' are
// ignored; unknown keys and repeated keys are errors.
//
//   anms_n                keypoints kept by ANMS per image     (1000)
//   pool_size             classical-detector candidates; 0 = 4 x anms_n
//   ratio                 nearest/second-nearest ratio          (0.7)
//   mutual                mutual-best cross-check, true/false   (true)
//   max_depth             landmark depth cutoff, metres         (20)
//   epipolar_tolerance    stereo row difference, pixels         (2)
//   reproj_threshold      RANSAC inlier threshold, pixels       (2)
//   confidence            RANSAC confidence                     (0.99)
//   max_iterations        RANSAC iteration cap                  (500)
//   min_inliers           RANSAC minimum inliers                (15)
//   keyframe_min_tracked  new keyframe below this inlier count  (50)
//   keyframe_max_gap      new keyframe after this many frames   (10)
//   seed                  RNG seed                              (0)

#include "anms.hpp"
#include "core.hpp"
#include "odometry.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string>

namespace anms_vo {

struct RunConfig {
    PipelineConfig pipeline;
    std::size_t pool_size = 0;

    std::size_t effective_pool_size() const {
        return pool_size ? pool_size : kDefaultPoolFactor * pipeline.anms_n;
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& text, const std::string& loc) {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw FormatError("cannot parse \"" + text + "\" as a number", loc);
    return v;
}

inline bool parse_bool(const std::string& text, const std::string& loc) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw FormatError("expected true or false, got \"" + text + "\"", loc);
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>") {
    RunConfig cfg;
    auto& p = cfg.pipeline;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string loc = source + ":" + std::to_string(lineno);
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("expected key = value", loc);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw FormatError("duplicate key \"" + key + "\"", loc);

        using detail::parse_number;
        if (key == "anms_n") p.anms_n = parse_number<std::size_t>(val, loc);
        else if (key == "pool_size") cfg.pool_size = parse_number<std::size_t>(val, loc);
        else if (key == "ratio") p.ratio = parse_number<double>(val, loc);
        else if (key == "mutual") p.mutual = detail::parse_bool(val, loc);
        else if (key == "max_depth") p.max_depth = parse_number<double>(val, loc);
        else if (key == "epipolar_tolerance") p.epipolar_tolerance = parse_number<double>(val, loc);
        else if (key == "reproj_threshold") p.ransac.reproj_threshold = parse_number<double>(val, loc);
        else if (key == "confidence") p.ransac.confidence = parse_number<double>(val, loc);
        else if (key == "max_iterations") p.ransac.max_iterations = parse_number<int>(val, loc);
        else if (key == "min_inliers") p.ransac.min_inliers = parse_number<int>(val, loc);
        else if (key == "keyframe_min_tracked") p.keyframe_min_tracked = parse_number<int>(val, loc);
        else if (key == "keyframe_max_gap") p.keyframe_max_gap = parse_number<int>(val, loc);
        else if (key == "seed") p.seed = parse_number<std::uint64_t>(val, loc);
        else throw FormatError("unknown key \"" + key + "\"", loc);
    }
    try {
        p.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path.string());
    return parse_config(f, path.string());
}

inline std::string to_config_text(const RunConfig& cfg) {
    const auto& p = cfg.pipeline;
    std::ostringstream o;
    o << "anms_n = " << p.anms_n << '\n'
      << "pool_size = " << cfg.pool_size << '\n'
      << "ratio = " << p.ratio << '\n'
      << "mutual = " << (p.mutual ? "true" : "false") << '\n'
      << "max_depth = " << p.max_depth << '\n'
      << "epipolar_tolerance = " << p.epipolar_tolerance << '\n'
      << "reproj_threshold = " << p.ransac.reproj_threshold << '\n'
      << "confidence = " << p.ransac.confidence << '\n'
      << "max_iterations = " << p.ransac.max_iterations << '\n'
      << "min_inliers = " << p.ransac.min_inliers << '\n'
      << "keyframe_min_tracked = " << p.keyframe_min_tracked << '\n'
      << "keyframe_max_gap = " << p.keyframe_max_gap << '\n'
      << "seed = " << p.seed << '\n';
    return o.str();
}

}  // namespace anms_vo
