#pragma once

#include <algorithm>
#include <cmath>

namespace screening::stats {

template <class Cdf>
double ks_one_sample_statistic(std::vector<double> xs, Cdf&& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

template <class Stat>
std::vector<double> bootstrap(std::size_t n, std::size_t resamples, const RngStream& base, Stat&& stat) {
    std::vector<double> out(resamples);
    std::vector<std::size_t> idx(n);
    for (std::size_t r = 0; r < resamples; ++r) {
        RngStream rng = base.substream(r);
        for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
        out[r] = stat(std::span<const std::size_t>(idx));
    }
    return out;
}

}  // namespace screening::stats
