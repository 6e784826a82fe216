#include "screening/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/core.h>

#include "screening/errors.hpp"

namespace screening::report {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    return fmt::format("{:.10g}", v);
}

std::string exp_of_log(double ln_value) {
    if (std::isnan(ln_value)) return "nan";
    if (std::isinf(ln_value)) return ln_value > 0 ? "inf" : "0";
    const double l10 = ln_value / std::log(10.0);
    double exponent = std::floor(l10);
    double mantissa = std::pow(10.0, l10 - exponent);
    // Round the mantissa first so 9.9999999999 does not print as 10.000000000.
    mantissa = std::round(mantissa * 1e9) / 1e9;
    if (mantissa >= 10.0) {
        mantissa /= 10.0;
        exponent += 1.0;
    }
    return fmt::format("{:.9f}e{}{:02d}", mantissa, exponent < 0 ? '-' : '+',
                       static_cast<long long>(std::abs(exponent)));
}

std::string CsvTable::str() const {
    auto join = [](const std::vector<std::string>& cells) {
        std::string s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) s += ',';
            s += cells[i];
        }
        return s + '\n';
    };
    std::string out = join(header);
    for (const auto& r : rows) out += join(r);
    return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << str();
}

std::string SvgChart::render(int width, int height) const {
    const double left = 70, right = 20, top = 40, bottom = 55;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (log_x && !(s.x[i] > 0)) continue;
            if (!std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, tx(s.x[i]));
            xmax = std::max(xmax, tx(s.x[i]));
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmin < xmax)) {
        xmin = (std::isfinite(xmin) ? xmin : 0.0) - 1.0;
        xmax = xmin + 2.0;
    }
    if (!(ymin < ymax)) {
        ymin = (std::isfinite(ymin) ? ymin : 0.0) - 1.0;
        ymax = ymin + 2.0;
    }
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (tx(x) - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        width, height);
    svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", width / 2, title);
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left,
                       top, pw, ph);
    for (int k = 0; k <= 4; ++k) {
        const double fx = xmin + (xmax - xmin) * k / 4.0, fy = ymin + (ymax - ymin) * k / 4.0;
        const double xv = log_x ? std::pow(10.0, fx) : fx;
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
                           left + pw * k / 4.0, top + ph + 18, num(xv));
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", left - 6,
                           top + ph * (1.0 - k / 4.0) + 4, num(fy));
    }
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2, height - 12, x_label);
    svg += fmt::format("<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
                       top + ph / 2, top + ph / 2, y_label);
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* c = colors[si % 6];
        if (s.style == SvgSeries::Style::points) {
            for (std::size_t i = 0; i < s.x.size(); ++i)
                if (std::isfinite(s.y[i]) && (!log_x || s.x[i] > 0))
                    svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2\" fill=\"{}\"/>\n", px(s.x[i]),
                                       py(s.y[i]), c);
        } else {
            std::string pts;
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!std::isfinite(s.y[i]) || (log_x && !(s.x[i] > 0))) continue;
                if (s.style == SvgSeries::Style::step && i > 0)
                    pts += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i - 1]));
                pts += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
            }
            svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", c, pts);
        }
        svg += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", left + 10, top + 16 + 14 * si, c, s.label);
    }
    svg += "</svg>\n";
    return svg;
}

void SvgChart::write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << render();
}

}  // namespace screening::report
