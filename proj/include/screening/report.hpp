#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace screening::report {

/// Ten significant digits, locale-independent. NaN prints as "nan", infinities as "inf"/"-inf".
std::string num(double v);
/// exp(ln_value) in scientific notation with ten significant digits, computed from the
/// logarithm so magnitudes beyond double range still print (e.g. "3.720075976e+1200").
std::string exp_of_log(double ln_value);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string str() const;
    void write(const std::filesystem::path& path) const;
};

/// Minimal static SVG line/step/scatter chart used for the figure analogs.
struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
    enum class Style { line, step, points } style = Style::line;
};

struct SvgChart {
    std::string title, x_label, y_label;
    std::vector<SvgSeries> series;
    bool log_x = false;

    std::string render(int width = 640, int height = 420) const;
    void write(const std::filesystem::path& path) const;
};

}  // namespace screening::report
