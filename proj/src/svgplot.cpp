/// svgplot.cpp - SVG chart rendering and metric-CSV parsing.
#include "svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "common.hpp"

namespace sargen {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 70.0, kRight = 620.0, kTop = 40.0, kBottom = 370.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Range {
    double lo = 0.0, hi = 1.0;

    double clamp_span() const { return hi - lo; }
};

Range padded(double lo, double hi, double frac) {
    if (!(hi > lo)) {
        const double pad = std::max(std::abs(lo) * 0.1, 0.5);
        return {lo - pad, lo + pad};
    }
    const double pad = (hi - lo) * frac;
    return {lo - pad, hi + pad};
}

/// Tick spacing of the form {1,2,5} * 10^k giving roughly `target` ticks.
double nice_step(const Range& r, int target) {
    const double raw = r.clamp_span() / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) return m * mag;
    return 10.0 * mag;
}

void axes(std::ostringstream& svg, const Range& rx, const Range& ry,
          const std::string& title, const std::string& x_label,
          const std::string& y_label) {
    auto sx = [&](double x) { return kLeft + (x - rx.lo) / rx.clamp_span() * (kRight - kLeft); };
    auto sy = [&](double y) { return kBottom - (y - ry.lo) / ry.clamp_span() * (kBottom - kTop); };

    const double dx = nice_step(rx, 5), dy = nice_step(ry, 5);
    for (double x = std::ceil(rx.lo / dx) * dx; x <= rx.hi + 1e-9 * dx; x += dx) {
        svg << "<line x1='" << sx(x) << "' y1='" << kTop << "' x2='" << sx(x)
            << "' y2='" << kBottom << "' stroke='#e0e0e0'/>\n";
        svg << "<text x='" << sx(x) << "' y='" << kBottom + 18
            << "' font-size='11' text-anchor='middle'>" << num(x) << "</text>\n";
    }
    for (double y = std::ceil(ry.lo / dy) * dy; y <= ry.hi + 1e-9 * dy; y += dy) {
        svg << "<line x1='" << kLeft << "' y1='" << sy(y) << "' x2='" << kRight
            << "' y2='" << sy(y) << "' stroke='#e0e0e0'/>\n";
        svg << "<text x='" << kLeft - 8 << "' y='" << sy(y) + 4
            << "' font-size='11' text-anchor='end'>" << num(y) << "</text>\n";
    }
    svg << "<rect x='" << kLeft << "' y='" << kTop << "' width='" << kRight - kLeft
        << "' height='" << kBottom - kTop << "' fill='none' stroke='#333'/>\n";
    svg << "<text x='" << (kLeft + kRight) / 2 << "' y='22' font-size='15' "
        << "text-anchor='middle'>" << escape(title) << "</text>\n";
    svg << "<text x='" << (kLeft + kRight) / 2 << "' y='" << kHeight - 10
        << "' font-size='12' text-anchor='middle'>" << escape(x_label) << "</text>\n";
    svg << "<text x='16' y='" << (kTop + kBottom) / 2 << "' font-size='12' "
        << "text-anchor='middle' transform='rotate(-90 16 " << (kTop + kBottom) / 2
        << ")'>" << escape(y_label) << "</text>\n";
}

std::string header() {
    return "<svg xmlns='http://www.w3.org/2000/svg' width='" + num(kWidth) +
           "' height='" + num(kHeight) + "' viewBox='0 0 " + num(kWidth) + " " +
           num(kHeight) + "'>\n<rect width='100%' height='100%' fill='white'/>\n";
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series) {
    if (series.empty()) throw ConfigError("plot: no series to draw");
    double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
    for (const Series& s : series) {
        if (s.x.size() != s.y.size())
            throw ConfigError("plot: series \"" + s.label + "\" x/y length mismatch");
        if (s.x.empty()) throw ConfigError("plot: series \"" + s.label + "\" is empty");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.y[i]);
            yhi = std::max(yhi, s.y[i]);
        }
    }
    const Range rx = padded(xlo, xhi, 0.04), ry = padded(ylo, yhi, 0.08);
    auto sx = [&](double x) { return kLeft + (x - rx.lo) / rx.clamp_span() * (kRight - kLeft); };
    auto sy = [&](double y) { return kBottom - (y - ry.lo) / ry.clamp_span() * (kBottom - kTop); };

    std::ostringstream svg;
    svg << header();
    axes(svg, rx, ry, title, x_label, y_label);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % kPaletteSize];
        svg << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
        for (std::size_t p = 0; p < series[i].x.size(); ++p)
            svg << sx(series[i].x[p]) << "," << sy(series[i].y[p]) << " ";
        svg << "'/>\n";
        for (std::size_t p = 0; p < series[i].x.size(); ++p)
            svg << "<circle cx='" << sx(series[i].x[p]) << "' cy='"
                << sy(series[i].y[p]) << "' r='3' fill='" << color << "'/>\n";
        const double ly = kTop + 16 + 16 * static_cast<double>(i);
        svg << "<line x1='" << kRight - 130 << "' y1='" << ly << "' x2='"
            << kRight - 110 << "' y2='" << ly << "' stroke='" << color
            << "' stroke-width='2'/>\n";
        svg << "<text x='" << kRight - 104 << "' y='" << ly + 4
            << "' font-size='11'>" << escape(series[i].label) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<Bar>& bars) {
    if (bars.empty()) throw ConfigError("plot: no bars to draw");
    double ylo = 0.0, yhi = 0.0;
    for (const Bar& b : bars) {
        ylo = std::min(ylo, b.value);
        yhi = std::max(yhi, b.value);
    }
    const Range ry = padded(ylo, yhi, 0.08);
    auto sy = [&](double y) { return kBottom - (y - ry.lo) / ry.clamp_span() * (kBottom - kTop); };

    std::ostringstream svg;
    svg << header();
    const double dy = nice_step(ry, 5);
    for (double y = std::ceil(ry.lo / dy) * dy; y <= ry.hi + 1e-9 * dy; y += dy) {
        svg << "<line x1='" << kLeft << "' y1='" << sy(y) << "' x2='" << kRight
            << "' y2='" << sy(y) << "' stroke='#e0e0e0'/>\n";
        svg << "<text x='" << kLeft - 8 << "' y='" << sy(y) + 4
            << "' font-size='11' text-anchor='end'>" << num(y) << "</text>\n";
    }
    svg << "<rect x='" << kLeft << "' y='" << kTop << "' width='" << kRight - kLeft
        << "' height='" << kBottom - kTop << "' fill='none' stroke='#333'/>\n";
    svg << "<text x='" << (kLeft + kRight) / 2 << "' y='22' font-size='15' "
        << "text-anchor='middle'>" << escape(title) << "</text>\n";
    svg << "<text x='16' y='" << (kTop + kBottom) / 2 << "' font-size='12' "
        << "text-anchor='middle' transform='rotate(-90 16 " << (kTop + kBottom) / 2
        << ")'>" << escape(y_label) << "</text>\n";

    const double slot = (kRight - kLeft) / static_cast<double>(bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
        const double w = slot * 0.6;
        const double y0 = sy(std::max(0.0, bars[i].value));
        const double h = std::abs(sy(bars[i].value) - sy(0.0));
        svg << "<rect x='" << cx - w / 2 << "' y='" << y0 << "' width='" << w
            << "' height='" << h << "' fill='" << kPalette[i % kPaletteSize]
            << "'/>\n";
        svg << "<text x='" << cx << "' y='" << y0 - 5
            << "' font-size='11' text-anchor='middle'>" << num(bars[i].value)
            << "</text>\n";
        svg << "<text x='" << cx << "' y='" << kBottom + 18
            << "' font-size='11' text-anchor='middle'>" << escape(bars[i].label)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split_fields(line));
    }
    if (rows.size() < 2) throw ConfigError("plot: CSV needs a header and data rows");
    return rows;
}

double parse_number(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
}

}  // namespace

namespace {

/// A column is numeric when its first non-empty data cell parses as a number.
/// Label columns (schedule names and the like) are left out of the plot.
bool numeric_column(const std::vector<std::vector<std::string>>& rows,
                    std::size_t c) {
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (c >= rows[r].size() || rows[r][c].empty()) continue;
        try {
            parse_number(rows[r][c]);
            return true;
        } catch (const std::exception&) {
            return false;
        }
    }
    return false;
}

}  // namespace

std::vector<Series> csv_to_series(const std::string& csv_text) {
    const auto rows = parse_csv(csv_text);
    const std::size_t cols = rows[0].size();
    if (cols < 2) throw ConfigError("plot: CSV needs at least two columns");
    if (!numeric_column(rows, 0))
        throw ConfigError("plot: the first CSV column must be numeric");
    std::vector<std::size_t> y_cols;
    for (std::size_t c = 1; c < cols; ++c)
        if (numeric_column(rows, c)) y_cols.push_back(c);
    if (y_cols.empty())
        throw ConfigError("plot: CSV has no numeric value columns");
    std::vector<Series> series(y_cols.size());
    for (std::size_t s = 0; s < y_cols.size(); ++s)
        series[s].label = rows[0][y_cols[s]];
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != cols)
            throw ConfigError("plot: CSV row " + std::to_string(r) + " has " +
                              std::to_string(rows[r].size()) + " fields, expected " +
                              std::to_string(cols));
        double x = 0.0;
        try {
            x = parse_number(rows[r][0]);
        } catch (const std::exception&) {
            throw ConfigError("plot: non-numeric x value \"" + rows[r][0] + "\"");
        }
        for (std::size_t s = 0; s < y_cols.size(); ++s) {
            const std::string& cell = rows[r][y_cols[s]];
            if (cell.empty()) continue;
            double y = 0.0;
            try {
                y = parse_number(cell);
            } catch (const std::exception&) {
                throw ConfigError("plot: non-numeric value \"" + cell + "\"");
            }
            series[s].x.push_back(x);
            series[s].y.push_back(y);
        }
    }
    return series;
}

std::vector<Bar> csv_to_bars(const std::string& csv_text) {
    const auto rows = parse_csv(csv_text);
    if (rows[0].size() < 2) throw ConfigError("plot: CSV needs at least two columns");
    std::vector<Bar> bars;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() < 2)
            throw ConfigError("plot: CSV row " + std::to_string(r) + " is too short");
        try {
            bars.push_back({rows[r][0], parse_number(rows[r][1])});
        } catch (const std::exception&) {
            throw ConfigError("plot: non-numeric value \"" + rows[r][1] + "\"");
        }
    }
    return bars;
}

}  // namespace sargen
