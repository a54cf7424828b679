#pragma once

// Static SVG plot of trajectories projected onto the XZ plane.

#include "core.hpp"
#include "evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace anms_vo {

struct PlotSeries {
    std::string label;
    std::string color;
    const Trajectory* trajectory = nullptr;
};

/// One polyline per series, x to the right and z upwards, equal axis scale.
inline void write_xz_svg(std::ostream& out, const std::vector<PlotSeries>& series, int size_px = 800) {
    double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x, min_z = min_x, max_z = -min_x;
    for (const auto& s : series)
        for (const auto& p : project_xz(*s.trajectory)) {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_z = std::min(min_z, p.z);
            max_z = std::max(max_z, p.z);
        }
    if (!(max_x >= min_x)) min_x = max_x = min_z = max_z = 0.0;
    const double margin = 40.0;
    const double span = std::max({max_x - min_x, max_z - min_z, 1e-9});
    const double scale = (size_px - 2.0 * margin) / span;
    const auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", v);
        return std::string(buf);
    };

    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size_px << "\" height=\"" << size_px
        << "\" viewBox=\"0 0 " << size_px << ' ' << size_px << "\">\n"
        << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    int row = 0;
    for (const auto& s : series) {
        out << "  <polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (const auto& p : project_xz(*s.trajectory)) {
            out << (first ? "" : " ") << fmt(margin + (p.x - min_x) * scale) << ','
                << fmt(size_px - margin - (p.z - min_z) * scale);
            first = false;
        }
        out << "\"/>\n";
        out << "  <text x=\"" << margin << "\" y=\"" << 20 + 16 * row++ << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
            << s.color << "\">" << s.label << "</text>\n";
    }
    out << "  <text x=\"" << size_px - margin << "\" y=\"" << size_px - 10
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">x [m] / z [m], span " << fmt(span)
        << " m</text>\n</svg>\n";
}

}  // namespace anms_vo
