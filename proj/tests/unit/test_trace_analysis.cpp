#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include <fmt/core.h>

#include "screening/errors.hpp"
#include "screening/experiment.hpp"
#include "screening/noise_math.hpp"
#include "screening/trace_analysis.hpp"

using namespace screening;
using namespace screening::analysis;
using Catch::Matchers::WithinAbs;
using trace::PassKind;
using trace::TraceStep;
using trace::Variant;

namespace {

TraceStep make_step(Variant v, std::uint64_t idx, std::vector<double> logits, std::int64_t correct = 0,
                    std::string pair = "p") {
    TraceStep s;
    s.pair_id = std::move(pair);
    s.variant = v;
    s.step_index = idx;
    s.correct_token_id = correct;
    s.chosen_token_id = correct;
    for (std::size_t i = 0; i < logits.size(); ++i) s.topk.emplace_back(static_cast<std::int64_t>(i), logits[i]);
    std::sort(s.topk.begin(), s.topk.end(), [](auto& a, auto& b) { return a.second > b.second; });
    return s;
}

std::vector<double> add(std::vector<double> a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

const std::vector<double> kLogits{std::log(0.7), std::log(0.2), std::log(0.1)};

std::vector<trace::PassRateRecord> group(const std::string& id, std::uint64_t n, std::uint64_t c1, std::uint64_t c2,
                                         std::uint64_t cc) {
    return {{id, PassKind::standalone_1, n, c1}, {id, PassKind::standalone_2, n, c2}, {id, PassKind::composite, n, cc}};
}

}  // namespace

TEST_CASE("extract_step_noise examples") {
    const auto s = make_step(Variant::standalone, 0, kLogits);

    const auto same = extract_step_noise(s, make_step(Variant::composite, 0, kLogits), 3);
    REQUIRE(same);
    CHECK(same->x == 0.0);
    for (const auto& [id, n] : same->token_noise) CHECK(n == 0.0);

    const auto shifted = extract_step_noise(s, make_step(Variant::composite, 0, add(kLogits, {2.5, 2.5, 2.5})), 3);
    CHECK_THAT(shifted->x, WithinAbs(0.0, 1e-14));

    const std::vector<double> noise{1.0, 0.5, -0.5};
    const auto c = make_step(Variant::composite, 0, add(kLogits, noise));
    CHECK_THAT(extract_step_noise(s, c, 3)->x, WithinAbs(-0.8333333333333334, 1e-12));

    // Any common constant on either side leaves X unchanged.
    const auto s2 = make_step(Variant::standalone, 0, add(kLogits, {-4.0, -4.0, -4.0}));
    const auto c2 = make_step(Variant::composite, 0, add(add(kLogits, noise), {7.0, 7.0, 7.0}));
    CHECK_THAT(extract_step_noise(s2, c2, 3)->x, WithinAbs(-0.8333333333333334, 1e-12));

    CHECK_FALSE(extract_step_noise(s, c).has_value());  // default overlap needs 5 shared tokens
    CHECK_FALSE(extract_step_noise(make_step(Variant::standalone, 0, {0.0, -1.0}, 5),
                                    make_step(Variant::composite, 0, {0.0, -1.0}, 5), 2)
                     .has_value());
}

TEST_CASE("extract_noise pairs steps and counts the leftovers") {
    std::vector<TraceStep> steps;
    const std::vector<double> six{0.0, -0.5, -1.0, -1.5, -2.0, -2.5};
    for (std::uint64_t i = 0; i < 3; ++i) {
        steps.push_back(make_step(Variant::standalone, i, six));
        steps.push_back(make_step(Variant::composite, i, add(six, {0.3, 0, 0, 0, 0, 0})));
    }
    steps.push_back(make_step(Variant::standalone, 3, six));
    steps.push_back(make_step(Variant::standalone, 4, {0.0, -1.0}));
    steps.push_back(make_step(Variant::composite, 4, {0.0, -1.0}));
    const auto e = extract_noise(steps);
    CHECK(e.steps.size() == 3);
    CHECK(e.unmatched == 1);
    CHECK(e.skipped_overlap == 1);
    for (double x : e.xs()) CHECK_THAT(x, WithinAbs(-0.3, 1e-12));
}

TEST_CASE("assumption diagnostics examples") {
    CHECK_THROWS_AS(assumption_diagnostics(std::vector<double>(10, 0.0)), DomainError);

    const auto z = assumption_diagnostics(std::vector<double>(50, 0.0));
    CHECK(z.degenerate);
    CHECK(z.mean_abs == 0.0);

    const auto u = NoiseModel::uniform(4.0);
    int calibrated = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        RngStream rng(31, stream_id({tag("diag"), t}));
        const auto xs = u.sample_vector(2000, rng);
        const auto r = assumption_diagnostics(xs);
        REQUIRE(r.m_hat_max <= 4.0);
        calibrated += r.symmetry_p_value > 0.01;
    }
    CHECK(calibrated >= 98);

    RngStream rng(5, tag("diag-gauss"));
    const auto g = NoiseModel::truncated_gaussian(1.5, 4.0).sample_vector(10000, rng);
    const auto r = assumption_diagnostics(g);
    CHECK(r.m_hat_max >= 3.0);
    CHECK(r.m_hat_max <= 4.0);
    CHECK(r.fraction_outside == 0.0);

    // A clearly shifted sample fails the symmetry screen.
    std::vector<double> shifted = g;
    for (auto& x : shifted) x += 0.5;
    CHECK(assumption_diagnostics(shifted).symmetry_p_value < 1e-6);
}

TEST_CASE("empirical delta and sigma examples") {
    const std::vector<double> grid{0.1, 0.3, 0.5};
    for (const auto& p : empirical_delta_sigma(std::vector<double>(40, 0.0), grid, 50)) {
        CHECK(p.delta == 0.0);
        CHECK(p.sigma == 0.0);
    }

    std::vector<double> tp;
    for (int i = 0; i < 1000; ++i) tp.push_back(i % 2 ? std::log(3.0) : -std::log(3.0));
    const std::vector<double> half{0.5};
    CHECK_THAT(empirical_delta_sigma(tp, half, 10)[0].delta, WithinAbs(0.1438410362258905, 1e-12));

    RngStream rng(8, tag("delta-gauss"));
    const auto model = NoiseModel::truncated_gaussian(2.0, 6.0);
    const auto xs = model.sample_vector(100000, rng);
    const std::vector<double> tenth{0.1};
    const auto p = empirical_delta_sigma(xs, tenth, 1000, 3)[0];
    const double exact = delta_estimate(0.1, model).value;
    CHECK(p.delta_ci.contains(exact));
    CHECK(p.sigma_ci.low < p.sigma);
    CHECK(p.sigma < p.sigma_ci.high);
    CHECK_THAT(p.delta, WithinAbs(0.2, 0.01));
}

TEST_CASE("symmetrized delta curve is symmetric in epsilon") {
    RngStream rng(12, 12);
    std::vector<double> xs = NoiseModel::uniform(3.0).sample_vector(500, rng);
    for (auto& x : xs) x += 0.2;
    const std::vector<double> grid{0.2, 0.8, 0.35, 0.65};
    const auto pts = empirical_delta_sigma(xs, grid, 20, 1, true);
    CHECK_THAT(pts[0].delta, WithinAbs(pts[1].delta, 1e-12));
    CHECK_THAT(pts[2].delta, WithinAbs(pts[3].delta, 1e-12));
}

TEST_CASE("length regression examples") {
    std::vector<SequenceRecord> line;
    for (int l : {20, 35, 50, 80, 130}) line.push_back({"p" + std::to_string(l), double(l), 0.05 * l});
    const auto r = length_regression(line, 200);
    CHECK_THAT(r.fit.slope, WithinAbs(0.05, 1e-14));
    CHECK_THAT(r.fit.intercept, WithinAbs(0.0, 1e-12));
    CHECK(r.fit.residual_ss < 1e-20);
    CHECK_THAT(r.slope_ci.low, WithinAbs(0.05, 1e-12));

    std::vector<SequenceRecord> flat(4, SequenceRecord{"x", 10.0, 1.0});
    CHECK_THROWS_AS(length_regression(flat), DomainError);
    CHECK_THROWS_AS(length_regression(std::span(line).first(2)), DomainError);

    // A slope of 0.05 per token means one e-fold every 20 tokens.
    CHECK_THAT(std::exp(-r.fit.slope * 20.0), WithinAbs(std::exp(-1.0), 1e-12));
}

TEST_CASE("sequence log ratios skip the flagged prefix") {
    std::vector<TraceStep> steps;
    for (std::uint64_t i = 0; i < 4; ++i) {
        auto s = make_step(Variant::standalone, i, {0.0, -1.0});
        auto c = make_step(Variant::composite, i, {0.0, 0.0});
        s.skip_prefix_flag = c.skip_prefix_flag = i == 0;
        steps.push_back(s);
        steps.push_back(c);
    }
    const double per = std::log(2.0) - std::log1p(std::exp(-1.0));
    const auto with = sequence_log_ratios(steps, true);
    REQUIRE(with.size() == 1);
    CHECK(with[0].length == 3.0);
    CHECK_THAT(with[0].log_ratio, WithinAbs(3.0 * per, 1e-12));
    CHECK(sequence_log_ratios(steps, false)[0].length == 4.0);
}

TEST_CASE("simulated pairs recover Delta through the regression slope") {
    TraceDatasetConfig cfg;
    cfg.n_pairs = 150;
    cfg.min_part_len = 40;
    cfg.max_part_len = 160;
    cfg.chain.vocab_size = 8;
    cfg.chain.prob = 0.1;
    cfg.noise = NoiseModel::truncated_gaussian(1.5, 4.0);
    cfg.master_seed = 4;
    const auto recs = sequence_log_ratios(synthesize_trace_dataset(cfg));
    REQUIRE(recs.size() == 150);
    const auto r = length_regression(recs, 300, 1);
    const double exact = delta_estimate(0.1, cfg.noise).value;
    CHECK(std::abs(r.fit.slope - exact) < 3.0 * r.fit.slope_se);
}

TEST_CASE("synthesized traces reproduce the noise model's Delta curve") {
    TraceDatasetConfig cfg;
    cfg.n_pairs = 1000;
    cfg.min_part_len = 45;
    cfg.max_part_len = 55;
    cfg.skip_prefix = 0;
    cfg.chain.vocab_size = 8;
    cfg.chain.schedule = ProbSchedule::uniform;
    cfg.noise = NoiseModel::truncated_gaussian(1.5, 4.0);
    cfg.master_seed = 21;
    const auto e = extract_noise(synthesize_trace_dataset(cfg));
    const auto xs = e.xs();
    REQUIRE(xs.size() >= 90000);
    const std::vector<double> grid{0.1, 0.3, 0.5};
    const auto pts = empirical_delta_sigma(xs, grid, 200, 2);
    for (const auto& p : pts) {
        INFO("epsilon " << p.epsilon);
        CHECK(p.delta_ci.contains(delta_estimate(p.epsilon, cfg.noise).value));
    }
}

TEST_CASE("hardness CDF examples") {
    const std::vector<double> vals{1, 2, 4, 8};
    const std::vector<double> at5{5.0};
    CHECK(empirical_cdf(vals, at5)[0].cdf == 0.75);

    std::vector<trace::PassRateRecord> recs;
    for (auto g : {group("a", 100, 50, 40, 20), group("b", 100, 20, 50, 10), group("c", 100, 100, 100, 100)})
        recs.insert(recs.end(), g.begin(), g.end());
    const auto h = hardness_cdf(recs);
    for (const auto& r : h.ratios) CHECK_THAT(r.ratio, WithinAbs(1.0, 1e-12));
    for (const auto& p : h.table) CHECK(p.cdf == (p.threshold >= 1.0 ? 1.0 : 0.0));

    CHECK_THAT(complexity_ratio(200, 50, 200, 100, 200, 0), WithinAbs(200.0 / 3.0 / 8.0, 1e-12));
    auto missing = group("m", 10, 5, 5, 1);
    missing.pop_back();
    CHECK_THROWS_AS(hardness_cdf(missing), DomainError);
}

TEST_CASE("hardness CDF is monotone and flags censoring") {
    std::vector<trace::PassRateRecord> recs;
    for (int i = 0; i < 20; ++i) {
        const auto g = group(fmt::format("q{:02}", i), 200, 40 + i, 60 + 2 * i, static_cast<std::uint64_t>(i % 7));
        recs.insert(recs.end(), g.begin(), g.end());
    }
    const auto h = hardness_cdf(recs);
    double prev = 0.0;
    for (const auto& p : h.table) {
        CHECK(p.cdf >= prev);
        prev = p.cdf;
    }
    std::size_t censored = 0;
    for (const auto& r : h.ratios) censored += r.censored;
    CHECK(censored == 3);
}

TEST_CASE("hardness CDF matches simulator pass rates exactly") {
    TraceDatasetConfig cfg;
    cfg.n_pairs = 6;
    cfg.min_part_len = 4;
    cfg.max_part_len = 6;
    cfg.chain.vocab_size = 3;
    cfg.chain.prob = 0.8;
    cfg.noise = NoiseModel::uniform(1.0);
    const auto recs = synthesize_pass_rate_dataset(cfg, 300, {1.0, 1.0});
    const auto h = hardness_cdf(recs);
    REQUIRE(h.ratios.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        const auto& a = recs[3 * i];
        const auto& b = recs[3 * i + 1];
        const auto& c = recs[3 * i + 2];
        CHECK(h.ratios[i].problem_id == a.problem_id);
        CHECK(h.ratios[i].ratio ==
              complexity_ratio(a.n_samples, a.n_correct, b.n_samples, b.n_correct, c.n_samples, c.n_correct));
    }
}

TEST_CASE("filter_problems examples") {
    auto recs = group("low", 200, 100, 10, 5);
    const auto inc = group("edge", 200, 20, 20, 1);
    recs.insert(recs.end(), inc.begin(), inc.end());
    const auto below = group("below", 10000, 999, 5000, 1);
    recs.insert(recs.end(), below.begin(), below.end());
    CHECK(filter_problems(recs) == std::vector<std::string>{"edge"});
    CHECK(filter_problems({}).empty());
}

TEST_CASE("pass-rate csv and trace jsonl round trip") {
    const auto recs = group("a", 200, 50, 40, 3);
    std::stringstream ss;
    trace::write_pass_rates(ss, recs);
    CHECK(ss.str().rfind("problem_id,kind,n_samples,n_correct\n", 0) == 0);
    const auto back = trace::read_pass_rates(ss, "mem");
    CHECK(back.size() == 3);
    CHECK(back[2].n_correct == 3);

    std::stringstream bad("problem_id,kind,n_samples,n_correct\na,standalone_1,10,11\n");
    CHECK_THROWS_AS(trace::read_pass_rates(bad, "mem"), SchemaError);

    std::stringstream js;
    trace::write_jsonl(js, {make_step(Variant::composite, 2, kLogits)});
    js << "\n{\"pair_id\": 3}\n";
    try {
        trace::read_jsonl(js, "mem.jsonl");
        FAIL("expected a schema error");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("mem.jsonl:3") != std::string::npos);
    }
}
