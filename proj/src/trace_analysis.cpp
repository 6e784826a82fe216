#include "screening/trace_analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "screening/errors.hpp"
#include "screening/noise_math.hpp"

namespace screening::analysis {

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

stats::Interval percentile_interval(std::vector<double> v) {
    if (v.empty()) return {std::nan(""), std::nan("")};
    std::sort(v.begin(), v.end());
    return {stats::quantile_sorted(v, 0.025), stats::quantile_sorted(v, 0.975)};
}

}  // namespace

std::optional<StepNoise> extract_step_noise(const trace::TraceStep& standalone, const trace::TraceStep& composite,
                                            std::size_t min_overlap) {
    std::unordered_map<std::int64_t, double> comp;
    for (const auto& [id, logit] : composite.topk) comp.emplace(id, logit);

    std::vector<std::int64_t> ids;
    std::vector<double> ls, lc;
    for (const auto& [id, logit] : standalone.topk) {
        const auto it = comp.find(id);
        if (it == comp.end()) continue;
        ids.push_back(id);
        ls.push_back(logit);
        lc.push_back(it->second);
    }
    const auto correct = std::find(ids.begin(), ids.end(), standalone.correct_token_id);
    if (ids.size() < std::max<std::size_t>(min_overlap, 2) || correct == ids.end()) return std::nullopt;
    const std::size_t c = static_cast<std::size_t>(correct - ids.begin());

    const double ms = median(ls), mc = median(lc);
    const double top = *std::max_element(ls.begin(), ls.end());
    StepNoise out;
    out.pair_id = standalone.pair_id;
    out.step_index = standalone.step_index;
    out.skip_prefix = standalone.skip_prefix_flag;
    std::vector<double> noise(ids.size()), w(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        noise[i] = (lc[i] - mc) - (ls[i] - ms);
        w[i] = std::exp(ls[i] - top);
        out.token_noise.emplace_back(ids[i], noise[i]);
    }
    double mass = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i == c) continue;
        mass += w[i];
        acc += w[i] * (noise[i] - noise[c]);
    }
    if (!(mass > 0.0)) return std::nullopt;
    out.x = acc / mass;
    return out;
}

std::vector<double> NoiseExtraction::xs() const {
    std::vector<double> v;
    v.reserve(steps.size());
    for (const auto& s : steps) v.push_back(s.x);
    return v;
}

NoiseExtraction extract_noise(const std::vector<trace::TraceStep>& steps, std::size_t min_overlap) {
    using Key = std::pair<std::string, std::uint64_t>;
    std::map<Key, std::pair<const trace::TraceStep*, const trace::TraceStep*>> paired;
    for (const auto& s : steps) {
        auto& slot = paired[{s.pair_id, s.step_index}];
        (s.variant == trace::Variant::standalone ? slot.first : slot.second) = &s;
    }
    NoiseExtraction out;
    for (const auto& [key, pr] : paired) {
        if (!pr.first || !pr.second) {
            ++out.unmatched;
            continue;
        }
        if (auto sn = extract_step_noise(*pr.first, *pr.second, min_overlap))
            out.steps.push_back(std::move(*sn));
        else
            ++out.skipped_overlap;
    }
    return out;
}

// ---------------------------------------------------------------------------

nlohmann::json AssumptionReport::to_json() const {
    return {{"n", n},
            {"m_hat_max", m_hat_max},
            {"m_hat_p99", m_hat_p99},
            {"mean", mean},
            {"mean_abs", mean_abs},
            {"skewness", skewness},
            {"symmetry_statistic", symmetry_statistic},
            {"symmetry_p_value", symmetry_p_value},
            {"fraction_outside", fraction_outside},
            {"outside_bound", outside_bound},
            {"degenerate", degenerate}};
}

AssumptionReport assumption_diagnostics(std::span<const double> xs, double outside_bound) {
    if (xs.size() < 30) throw DomainError("assumption diagnostics need at least 30 samples");
    AssumptionReport r;
    r.n = xs.size();
    r.outside_bound = outside_bound;
    std::vector<double> abs_x;
    abs_x.reserve(xs.size());
    std::size_t outside = 0;
    for (double x : xs) {
        abs_x.push_back(std::abs(x));
        outside += std::abs(x) > outside_bound;
    }
    r.m_hat_max = *std::max_element(abs_x.begin(), abs_x.end());
    r.m_hat_p99 = stats::quantile(abs_x, 0.99);
    r.mean = stats::mean(xs);
    r.mean_abs = stats::mean(abs_x);
    r.fraction_outside = static_cast<double>(outside) / static_cast<double>(xs.size());
    r.degenerate = r.mean_abs == 0.0;
    if (r.degenerate) return r;
    r.skewness = stats::skewness(xs);

    const std::size_t half = xs.size() / 2;
    std::vector<double> a(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<double> b;
    for (std::size_t i = half; i < xs.size(); ++i) b.push_back(-xs[i]);
    const auto ks = stats::ks_two_sample(std::move(a), std::move(b));
    r.symmetry_statistic = ks.statistic;
    r.symmetry_p_value = ks.p_value;
    return r;
}

// ---------------------------------------------------------------------------

std::vector<double> default_epsilon_grid() { return {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5}; }

std::vector<DeltaSigmaPoint> empirical_delta_sigma(std::span<const double> xs, std::span<const double> eps_grid,
                                                   std::size_t resamples, std::uint64_t seed, bool symmetrize) {
    if (xs.empty()) throw DomainError("empirical_delta_sigma needs samples");
    // Per-sample values; in symmetrized form each unit is the pair (x, -x), whose two
    // terms are stored as their sum and sum of squares.
    const std::size_t n = xs.size(), g = eps_grid.size();
    std::vector<double> f1(n * g), f2(n * g);
    for (std::size_t k = 0; k < g; ++k) {
        const double eps = eps_grid[k];
        for (std::size_t i = 0; i < n; ++i) {
            if (symmetrize) {
                const double a = renorm_term(eps, xs[i]), b = renorm_term(eps, -xs[i]);
                f1[k * n + i] = renorm_pair(eps, xs[i]);
                f2[k * n + i] = a * a + b * b;
            } else {
                const double a = renorm_term(eps, xs[i]);
                f1[k * n + i] = a;
                f2[k * n + i] = a * a;
            }
        }
    }
    const double per_unit = symmetrize ? 2.0 : 1.0;
    auto moments = [&](std::size_t k, auto&& index_at, std::size_t m) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t i = index_at(j);
            s1 += f1[k * n + i];
            s2 += f2[k * n + i];
        }
        const double cnt = per_unit * static_cast<double>(m);
        const double mean = s1 / cnt;
        return std::pair{mean, std::sqrt(std::max(0.0, s2 / cnt - mean * mean))};
    };

    std::vector<DeltaSigmaPoint> out(g);
    for (std::size_t k = 0; k < g; ++k) {
        const auto [d, s] = moments(k, [](std::size_t j) { return j; }, n);
        out[k].epsilon = eps_grid[k];
        out[k].delta = d;
        out[k].sigma = s;
    }
    if (resamples == 0) {
        for (auto& p : out) {
            p.delta_ci = {p.delta, p.delta};
            p.sigma_ci = {p.sigma, p.sigma};
        }
        return out;
    }
    std::vector<std::vector<double>> bd(g), bs(g);
    std::vector<std::size_t> idx(n);
    const RngStream base(seed, tag("delta-sigma-bootstrap"));
    for (std::size_t r = 0; r < resamples; ++r) {
        RngStream rng = base.substream(r);
        for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
        for (std::size_t k = 0; k < g; ++k) {
            const auto [d, s] = moments(k, [&](std::size_t j) { return idx[j]; }, n);
            bd[k].push_back(d);
            bs[k].push_back(s);
        }
    }
    for (std::size_t k = 0; k < g; ++k) {
        out[k].delta_ci = percentile_interval(std::move(bd[k]));
        out[k].sigma_ci = percentile_interval(std::move(bs[k]));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<SequenceRecord> sequence_log_ratios(const std::vector<trace::TraceStep>& steps, bool apply_skip) {
    std::map<std::string, std::map<std::uint64_t, std::pair<const trace::TraceStep*, const trace::TraceStep*>>>
        by_pair;
    for (const auto& s : steps) {
        auto& slot = by_pair[s.pair_id][s.step_index];
        (s.variant == trace::Variant::standalone ? slot.first : slot.second) = &s;
    }
    std::vector<SequenceRecord> out;
    for (const auto& [pair, steps_by_index] : by_pair) {
        SequenceRecord rec{pair, 0.0, 0.0};
        for (const auto& [idx, pr] : steps_by_index) {
            const auto* st = pr.first;
            const auto* co = pr.second;
            if (!st || !co || !st->complete() || !co->complete()) continue;
            if (apply_skip && (st->skip_prefix_flag || co->skip_prefix_flag)) continue;
            rec.length += 1.0;
            rec.log_ratio += st->correct_log_prob() - co->correct_log_prob();
        }
        if (rec.length > 0.0) out.push_back(std::move(rec));
    }
    return out;
}

RegressionResult length_regression(std::span<const SequenceRecord> records, std::size_t resamples,
                                   std::uint64_t seed) {
    if (records.size() < 3) throw DomainError("length regression needs at least 3 sequences");
    std::vector<double> x, y;
    for (const auto& r : records) {
        x.push_back(r.length);
        y.push_back(r.log_ratio);
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); }))
        throw DomainError("length regression is degenerate: every sequence has the same length");
    RegressionResult res;
    res.fit = stats::ols(x, y);
    res.resamples = resamples;
    if (resamples == 0) {
        res.slope_ci = {res.fit.slope, res.fit.slope};
        return res;
    }
    std::vector<double> bx(x.size()), by(y.size());
    auto slopes = stats::bootstrap(records.size(), resamples, RngStream(seed, tag("regression-bootstrap")),
                                   [&](std::span<const std::size_t> idx) {
                                       for (std::size_t j = 0; j < idx.size(); ++j) {
                                           bx[j] = x[idx[j]];
                                           by[j] = y[idx[j]];
                                       }
                                       if (std::all_of(bx.begin(), bx.end(), [&](double v) { return v == bx[0]; }))
                                           return std::nan("");
                                       return stats::ols(bx, by).slope;
                                   });
    std::erase_if(slopes, [](double v) { return std::isnan(v); });
    res.slope_ci = percentile_interval(std::move(slopes));
    return res;
}

// ---------------------------------------------------------------------------

std::vector<double> default_cdf_grid() { return {0.5, 1, 1.5, 2, 3, 4, 5, 7.5, 10, 15, 20, 50, 100}; }

double complexity_ratio(std::uint64_t n1, std::uint64_t c1, std::uint64_t n2, std::uint64_t c2, std::uint64_t nc,
                        std::uint64_t cc) {
    const double composite = cc == 0 ? static_cast<double>(nc) / 3.0
                                     : static_cast<double>(nc) / static_cast<double>(cc);
    return composite * (static_cast<double>(c1) / static_cast<double>(n1)) *
           (static_cast<double>(c2) / static_cast<double>(n2));
}

std::vector<CdfPoint> empirical_cdf(std::span<const double> values, std::span<const double> grid) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<CdfPoint> out;
    for (double a : grid) {
        const auto k = std::upper_bound(sorted.begin(), sorted.end(), a) - sorted.begin();
        out.push_back({a, sorted.empty() ? 0.0 : static_cast<double>(k) / static_cast<double>(sorted.size())});
    }
    return out;
}

HardnessCdf hardness_cdf(const std::vector<trace::PassRateRecord>& records, std::span<const double> grid) {
    std::map<std::string, std::array<const trace::PassRateRecord*, 3>> groups;
    for (const auto& r : records) {
        auto& slot = groups[r.problem_id][static_cast<std::size_t>(r.kind)];
        if (slot) throw DomainError("duplicate " + trace::to_string(r.kind) + " record for problem " + r.problem_id);
        slot = &r;
    }
    HardnessCdf out;
    std::vector<double> values;
    for (const auto& [id, g] : groups) {
        for (std::size_t k = 0; k < 3; ++k)
            if (!g[k])
                throw DomainError("problem " + id + " has no " + trace::to_string(static_cast<trace::PassKind>(k)) +
                                  " record");
        if (g[0]->n_correct == 0 || g[1]->n_correct == 0) {
            out.skipped.push_back(id);
            continue;
        }
        HardnessRatio hr{id,
                         complexity_ratio(g[0]->n_samples, g[0]->n_correct, g[1]->n_samples, g[1]->n_correct,
                                          g[2]->n_samples, g[2]->n_correct),
                         g[2]->n_correct == 0};
        values.push_back(hr.ratio);
        out.ratios.push_back(std::move(hr));
    }
    out.table = empirical_cdf(values, grid);
    return out;
}

HardnessCdf hardness_cdf(const std::vector<trace::PassRateRecord>& records) {
    const auto grid = default_cdf_grid();
    return hardness_cdf(records, grid);
}

std::vector<std::string> filter_problems(const std::vector<trace::PassRateRecord>& records, double threshold) {
    std::vector<std::string> order;
    std::map<std::string, std::array<std::optional<bool>, 2>> ok;
    for (const auto& r : records) {
        if (!ok.count(r.problem_id)) order.push_back(r.problem_id);
        auto& slot = ok[r.problem_id];
        if (r.kind == trace::PassKind::composite) continue;
        slot[static_cast<std::size_t>(r.kind)] = r.pass_rate() >= threshold - 1e-12;
    }
    std::vector<std::string> out;
    for (const auto& id : order) {
        const auto& s = ok[id];
        if (s[0].value_or(false) && s[1].value_or(false)) out.push_back(id);
    }
    return out;
}

std::vector<HistogramBin> histogram(std::span<const double> xs, double low, double high, std::size_t bins) {
    if (!(high > low) || bins == 0) throw DomainError("histogram needs high > low and at least one bin");
    std::vector<HistogramBin> out(bins);
    const double w = (high - low) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) out[b] = {low + w * static_cast<double>(b), low + w * static_cast<double>(b + 1), 0};
    for (double x : xs) {
        if (x < low || x > high) continue;
        auto b = static_cast<std::size_t>((x - low) / w);
        out[std::min(b, bins - 1)].count++;
    }
    return out;
}

}  // namespace screening::analysis
