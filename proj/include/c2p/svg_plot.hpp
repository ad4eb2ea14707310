#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "c2p/errors.hpp"

namespace c2p {

struct PlotSeries {
    std::string name;
    std::vector<double> y;
};

// Minimal standalone SVG line chart: x axis is the sample index (epoch).
inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& y_label, const std::vector<PlotSeries>& series) {
    if (series.empty() || series[0].y.empty()) throw InvalidInputError("write_line_chart: empty series");
    const int width = 720, height = 440;
    const int ml = 64, mr = 150, mt = 44, mb = 44;
    const double pw = width - ml - mr, ph = height - mt - mb;

    std::size_t nx = 0;
    double ylo = 1e300, yhi = -1e300;
    for (const PlotSeries& s : series) {
        nx = std::max(nx, s.y.size());
        for (double v : s.y) {
            ylo = std::min(ylo, v);
            yhi = std::max(yhi, v);
        }
    }
    if (yhi - ylo < 1e-9) {
        ylo -= 1.0;
        yhi += 1.0;
    }
    const double pad = 0.05 * (yhi - ylo);
    ylo -= pad;
    yhi += pad;

    auto xpos = [&](std::size_t i) {
        return ml + (nx == 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(nx - 1));
    };
    auto ypos = [&](double v) { return mt + ph * (1.0 - (v - ylo) / (yhi - ylo)); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

    std::ofstream out(path);
    if (!out) throw IoError("cannot write plot: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" << title
        << "</text>\n";
    out << "<text x=\"16\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << mt + ph / 2 << ")\">" << y_label << "</text>\n";
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">epoch</text>\n";

    // axes + y ticks
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = ylo + (yhi - ylo) * i / 4.0;
        const double y = ypos(v);
        out << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml + pw << "\" y2=\"" << y
            << "\" stroke=\"#dddddd\"/>\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", v);
        out << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << buf
            << "</text>\n";
    }
    for (std::size_t i = 0; i < nx; i += std::max<std::size_t>(1, (nx - 1) / 6)) {
        out << "<text x=\"" << xpos(i) << "\" y=\"" << mt + ph + 16 << "\" text-anchor=\"middle\">" << i
            << "</text>\n";
    }

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 5];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].y.size(); ++i)
            out << xpos(i) << "," << ypos(series[s].y[i]) << " ";
        out << "\"/>\n";
        out << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << mt + 14 * s + 6 << "\" x2=\"" << ml + pw + 30
            << "\" y2=\"" << mt + 14 * s + 6 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << ml + pw + 34 << "\" y=\"" << mt + 14 * s + 10 << "\">" << series[s].name
            << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace c2p
