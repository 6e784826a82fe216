#include "screening/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace screening {

namespace {

constexpr int kOrder = 15;

struct Rule {
    std::array<double, kOrder> x{};
    std::array<double, kOrder> w{};

    Rule() {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        for (int i = 0; i < kOrder; ++i) {
            double z = std::cos(std::numbers::pi * (i + 0.75) / (kOrder + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = z;
                for (int k = 2; k <= kOrder; ++k) {
                    const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = pk;
                }
                dp = kOrder * (z * p1 - p0) / (z * z - 1.0);
                const double dz = p1 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
    }
};

const Rule& rule() {
    static const Rule r;
    return r;
}

double panel(const std::function<double(double)>& f, double a, double b) {
    const Rule& r = rule();
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double s = 0.0;
    for (int i = 0; i < kOrder; ++i) s += r.w[i] * f(mid + half * r.x[i]);
    return s * half;
}

struct Panel {
    double a, b, whole;
    int depth;
};

}  // namespace

std::span<const double> gauss_legendre_nodes() { return rule().x; }
std::span<const double> gauss_legendre_weights() { return rule().w; }

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double abs_tol, std::span<const double> breakpoints, int max_depth) {
    QuadratureResult out;
    if (a == b) return out;
    const double sign = a < b ? 1.0 : -1.0;
    if (a > b) std::swap(a, b);

    std::vector<double> cuts{a};
    for (double c : breakpoints)
        if (c > a && c < b) cuts.push_back(c);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());

    const double width = b - a;
    std::vector<Panel> stack;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        stack.push_back({cuts[i], cuts[i + 1], panel(f, cuts[i], cuts[i + 1]), 0});

    while (!stack.empty()) {
        const Panel p = stack.back();
        stack.pop_back();
        const double m = 0.5 * (p.a + p.b);
        const double left = panel(f, p.a, m);
        const double right = panel(f, m, p.b);
        const double diff = std::abs(left + right - p.whole);
        const double share = abs_tol * (p.b - p.a) / width;
        if (diff <= share || p.depth >= max_depth) {
            out.value += left + right;
            out.error += diff;
            ++out.panels;
        } else {
            stack.push_back({p.a, m, left, p.depth + 1});
            stack.push_back({m, p.b, right, p.depth + 1});
        }
    }
    out.value *= sign;
    return out;
}

}  // namespace screening
