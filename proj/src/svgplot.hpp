/// svgplot.hpp - dependency-free SVG line and bar charts.
///
/// Just enough plotting to render metric CSVs: one fixed-size canvas, linear
/// axes with rounded tick labels, a small color cycle, and a legend. Output
/// is deterministic for identical input.
#pragma once

#include <string>
#include <vector>

namespace sargen {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct Bar {
    std::string label;
    double value = 0.0;
};

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series);

std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<Bar>& bars);

/// Parses a metric CSV (header row; first column x, remaining numeric columns
/// one series each) into line-chart series. Columns whose first non-empty
/// cell is not a number are label columns and are skipped; empty cells make a
/// series shorter, not an error. The x column must be numeric.
std::vector<Series> csv_to_series(const std::string& csv_text);

/// First column labels, second column values; extra columns ignored.
std::vector<Bar> csv_to_bars(const std::string& csv_text);

}  // namespace sargen
