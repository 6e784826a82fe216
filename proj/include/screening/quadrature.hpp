#pragma once

#include <functional>
#include <span>

namespace screening {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;  ///< estimated absolute error (sum of panel refinement deltas)
    int panels = 0;
};

/// Adaptive Gauss-Legendre quadrature of f over [a, b].
///
/// Each panel is integrated with a 15-point rule and compared against the sum of
/// the same rule on its two halves; panels are bisected until the difference falls
/// below the panel's share of `abs_tol`, or `max_depth` is reached.
/// `breakpoints` (optional, must lie inside (a, b)) seed the initial partition.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double abs_tol = 1e-10, std::span<const double> breakpoints = {},
                           int max_depth = 40);

/// Gauss-Legendre nodes/weights on [-1, 1] for the fixed rule used above.
std::span<const double> gauss_legendre_nodes();
std::span<const double> gauss_legendre_weights();

}  // namespace screening
