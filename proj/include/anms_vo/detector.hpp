#pragma once

// Classical Harris-corner detector with patch descriptors, the SPFT binary
// feature-file format, and the FeatureSource interface through which the
// odometry pipeline receives features.
//
// SPFT layout (little-endian):
//   offset  0  "SPFT"
//   offset  4  u32 version (= 1)
//   offset  8  u32 width
//   offset 12  u32 height
//   offset 16  u32 count
//   offset 20  u32 dim
//   offset 24  u8  normalized, 3 pad bytes (zero)
//   offset 28  count x (f32 x, f32 y, f32 score)
//   then       count x dim f32 descriptors, row-major

#include "core.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace anms_vo {

// ---------------------------------------------------------------------------
// Images

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;  // row-major

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    bool empty() const noexcept { return pixels.empty(); }
    float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// ---------------------------------------------------------------------------
// Classical detector

inline constexpr int kPatchSize = 16;

struct HarrisParams {
    double k = 0.04;
    int window_radius = 2;         ///< Gaussian-weighted structure tensor window
    double relative_threshold = 1e-3;  ///< fraction of the peak response
};

/// Harris response det(M) - k trace(M)^2 with central-difference gradients and
/// a Gaussian (sigma = window_radius / 2) weighted window. Border pixels get 0.
inline std::vector<double> harris_response(const GrayImage& img, const HarrisParams& params = {}) {
    const int w = img.width, h = img.height;
    std::vector<double> ixx(static_cast<std::size_t>(w) * h, 0.0), iyy(ixx.size(), 0.0), ixy(ixx.size(), 0.0);
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const double gx = 0.5 * (static_cast<double>(img.at(x + 1, y)) - img.at(x - 1, y));
            const double gy = 0.5 * (static_cast<double>(img.at(x, y + 1)) - img.at(x, y - 1));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }

    const int r = params.window_radius;
    const double sigma = std::max(0.5, r / 2.0);
    std::vector<double> kernel(static_cast<std::size_t>(2 * r + 1));
    for (int d = -r; d <= r; ++d) kernel[static_cast<std::size_t>(d + r)] = std::exp(-0.5 * d * d / (sigma * sigma));

    std::vector<double> resp(ixx.size(), 0.0);
    for (int y = r + 1; y + r + 1 < h; ++y)
        for (int x = r + 1; x + r + 1 < w; ++x) {
            double a = 0.0, b = 0.0, c = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double wt = kernel[static_cast<std::size_t>(dx + r)] * kernel[static_cast<std::size_t>(dy + r)];
                    const std::size_t i = static_cast<std::size_t>(y + dy) * w + (x + dx);
                    a += wt * ixx[i];
                    b += wt * iyy[i];
                    c += wt * ixy[i];
                }
            resp[static_cast<std::size_t>(y) * w + x] = a * b - c * c - params.k * (a + b) * (a + b);
        }
    return resp;
}

/// Local maxima of a response map: strictly positive, above the relative
/// threshold, >= all 8 neighbours and > neighbours earlier in raster order
/// (one pixel per plateau). Returned as (x, y, response), raster order.
inline std::vector<Keypoint> response_peaks(const std::vector<double>& resp, int width, int height,
                                            double relative_threshold) {
    const double peak = resp.empty() ? 0.0 : *std::max_element(resp.begin(), resp.end());
    std::vector<Keypoint> out;
    if (!(peak > 0.0)) return out;
    const double floor = relative_threshold * peak;
    for (int y = 1; y + 1 < height; ++y)
        for (int x = 1; x + 1 < width; ++x) {
            const double v = resp[static_cast<std::size_t>(y) * width + x];
            if (!(v > 0.0) || v < floor) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1 && is_max; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const double n = resp[static_cast<std::size_t>(y + dy) * width + (x + dx)];
                    const bool earlier = dy < 0 || (dy == 0 && dx < 0);
                    is_max = earlier ? v > n : v >= n;
                }
            if (is_max) out.push_back({static_cast<double>(x), static_cast<double>(y), v});
        }
    return out;
}

/// Harris corners with 256-d descriptors: the 16x16 patch whose top-left is
/// (x - 8, y - 8), mean-subtracted and L2-normalised. Keypoints whose patch
/// leaves the image or is flat are dropped. Keeps the `pool_size` strongest.
inline FeatureSet detect_classical(const GrayImage& img, std::size_t pool_size, const HarrisParams& params = {},
                                   std::string image_id = {}) {
    if (img.width < kPatchSize || img.height < kPatchSize)
        throw ValidationError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                              " is smaller than the 16x16 descriptor patch");
    if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
        throw ValidationError("image buffer does not match its dimensions");

    const auto resp = harris_response(img, params);
    std::vector<Keypoint> peaks = response_peaks(resp, img.width, img.height, params.relative_threshold);
    const int half = kPatchSize / 2;
    std::erase_if(peaks, [&](const Keypoint& k) {
        const int x = static_cast<int>(k.x), y = static_cast<int>(k.y);
        return x - half < 0 || y - half < 0 || x + half > img.width || y + half > img.height;
    });
    std::stable_sort(peaks.begin(), peaks.end(), [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });

    FeatureSet fs;
    fs.image_id = std::move(image_id);
    fs.width = img.width;
    fs.height = img.height;
    fs.normalized = true;
    std::vector<float> rows;
    constexpr int dim = kPatchSize * kPatchSize;
    for (const auto& k : peaks) {
        if (fs.keypoints.size() >= pool_size) break;
        const int x0 = static_cast<int>(k.x) - half, y0 = static_cast<int>(k.y) - half;
        std::array<double, dim> patch{};
        double mean = 0.0;
        for (int dy = 0; dy < kPatchSize; ++dy)
            for (int dx = 0; dx < kPatchSize; ++dx) {
                patch[static_cast<std::size_t>(dy * kPatchSize + dx)] = img.at(x0 + dx, y0 + dy);
                mean += img.at(x0 + dx, y0 + dy);
            }
        mean /= dim;
        double norm = 0.0;
        for (auto& v : patch) {
            v -= mean;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (!(norm > 1e-12)) continue;
        for (const double v : patch) rows.push_back(static_cast<float>(v / norm));
        fs.keypoints.push_back(k);
    }
    fs.descriptors = Eigen::Map<const DescriptorMatrix>(rows.data(), static_cast<Eigen::Index>(fs.keypoints.size()), dim);
    return fs;
}

// ---------------------------------------------------------------------------
// SPFT files

inline constexpr std::uint32_t kSpftVersion = 1;
inline constexpr std::size_t kSpftHeaderSize = 28;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
    return v;
}

inline float get_f32(const std::vector<std::uint8_t>& in, std::size_t off) { return std::bit_cast<float>(get_u32(in, off)); }

inline std::string byte_location(const std::string& source, std::size_t offset) {
    return source + " @ byte " + std::to_string(offset);
}

}  // namespace detail

/// Serialises a feature set. Coordinates and scores are narrowed to f32.
inline std::vector<std::uint8_t> encode_spft(const FeatureSet& fs) {
    std::vector<std::uint8_t> out;
    out.reserve(kSpftHeaderSize + fs.size() * (12 + 4 * static_cast<std::size_t>(fs.dim())));
    out.insert(out.end(), {'S', 'P', 'F', 'T'});
    detail::put_u32(out, kSpftVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(fs.width));
    detail::put_u32(out, static_cast<std::uint32_t>(fs.height));
    detail::put_u32(out, static_cast<std::uint32_t>(fs.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(fs.dim()));
    out.push_back(fs.normalized ? 1 : 0);
    out.insert(out.end(), {0, 0, 0});
    for (const auto& k : fs.keypoints) {
        detail::put_f32(out, static_cast<float>(k.x));
        detail::put_f32(out, static_cast<float>(k.y));
        detail::put_f32(out, static_cast<float>(k.score));
    }
    for (Eigen::Index r = 0; r < fs.descriptors.rows(); ++r)
        for (Eigen::Index c = 0; c < fs.descriptors.cols(); ++c) detail::put_f32(out, fs.descriptors(r, c));
    return out;
}

/// Parses SPFT bytes. Structural problems raise FormatError located by byte
/// offset; content problems (NaN, out-of-bounds keypoints) raise ValidationError.
inline FeatureSet decode_spft(const std::vector<std::uint8_t>& in, const std::string& source = "<memory>") {
    using detail::byte_location;
    if (in.size() < kSpftHeaderSize)
        throw FormatError("truncated header (" + std::to_string(in.size()) + " bytes)", byte_location(source, in.size()));
    if (std::memcmp(in.data(), "SPFT", 4) != 0) throw FormatError("bad magic, expected \"SPFT\"", byte_location(source, 0));
    const std::uint32_t version = detail::get_u32(in, 4);
    if (version != kSpftVersion)
        throw FormatError("unsupported version " + std::to_string(version), byte_location(source, 4));
    FeatureSet fs;
    fs.width = static_cast<int>(detail::get_u32(in, 8));
    fs.height = static_cast<int>(detail::get_u32(in, 12));
    const std::uint64_t count = detail::get_u32(in, 16);
    const std::uint64_t dim = detail::get_u32(in, 20);
    const std::uint8_t flag = in[24];
    if (flag > 1) throw FormatError("normalized flag must be 0 or 1", byte_location(source, 24));
    fs.normalized = flag == 1;
    if (in[25] != 0 || in[26] != 0 || in[27] != 0) throw FormatError("nonzero pad bytes", byte_location(source, 25));
    if (dim == 0) throw FormatError("descriptor dimension is zero", byte_location(source, 20));

    const std::uint64_t expected = kSpftHeaderSize + count * 12 + count * dim * 4;
    if (in.size() < expected)
        throw FormatError("truncated body: expected " + std::to_string(expected) + " bytes, file has " +
                              std::to_string(in.size()),
                          byte_location(source, in.size()));
    if (in.size() > expected)
        throw FormatError("trailing bytes after " + std::to_string(count) + " records", byte_location(source, expected));

    fs.image_id = source;
    fs.keypoints.resize(count);
    std::size_t off = kSpftHeaderSize;
    for (auto& k : fs.keypoints) {
        k.x = detail::get_f32(in, off);
        k.y = detail::get_f32(in, off + 4);
        k.score = detail::get_f32(in, off + 8);
        off += 12;
    }
    fs.descriptors.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    for (std::uint64_t r = 0; r < count; ++r)
        for (std::uint64_t c = 0; c < dim; ++c) {
            fs.descriptors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = detail::get_f32(in, off);
            off += 4;
        }
    try {
        fs.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return fs;
}

inline void save_features(const FeatureSet& fs, const std::filesystem::path& path) {
    const auto bytes = encode_spft(fs);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("failed writing " + path.string());
}

inline FeatureSet load_features(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    FeatureSet fs = decode_spft(bytes, path.string());
    fs.image_id = path.stem().string();
    return fs;
}

// ---------------------------------------------------------------------------
// Feature sources

/// Supplies stereo feature pairs frame by frame.
class FeatureSource {
public:
    virtual ~FeatureSource() = default;
    virtual std::size_t frame_count() const = 0;
    virtual StereoFeatures frame(std::size_t index) const = 0;
};

/// Runs the classical detector over a pair of images per frame.
class ClassicalImageSource : public FeatureSource {
public:
    using ImageLoader = std::function<GrayImage(std::size_t frame, bool right)>;

    ClassicalImageSource(std::size_t frames, ImageLoader loader, std::size_t pool_size, HarrisParams params = {})
        : frames_(frames), loader_(std::move(loader)), pool_size_(pool_size), params_(params) {}

    std::size_t frame_count() const override { return frames_; }

    StereoFeatures frame(std::size_t index) const override {
        StereoFeatures out;
        out.left = detect_classical(loader_(index, false), pool_size_, params_, std::to_string(index) + "_left");
        out.right = detect_classical(loader_(index, true), pool_size_, params_, std::to_string(index) + "_right");
        return out;
    }

private:
    std::size_t frames_;
    ImageLoader loader_;
    std::size_t pool_size_;
    HarrisParams params_;
};

/// In-memory frames; mostly for tests and synthetic runs.
class VectorSource : public FeatureSource {
public:
    explicit VectorSource(std::vector<StereoFeatures> frames) : frames_(std::move(frames)) {}
    std::size_t frame_count() const override { return frames_.size(); }
    StereoFeatures frame(std::size_t index) const override { return frames_.at(index); }

private:
    std::vector<StereoFeatures> frames_;
};

}  // namespace anms_vo
