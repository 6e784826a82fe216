#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <thread>

#include "screening/errors.hpp"
#include "screening/noise_models.hpp"
#include "screening/stats.hpp"

using namespace screening;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<NoiseModel> continuous_models() {
    return {NoiseModel::truncated_gaussian(2.0, 6.0), NoiseModel::truncated_gaussian(1.0, 1.5),
            NoiseModel::uniform(4.0)};
}

std::vector<NoiseModel> all_models() {
    auto v = continuous_models();
    v.push_back(NoiseModel::two_point(std::log(3.0)));
    v.push_back(NoiseModel::scaled_empirical({-3.0, 0.5, 1.25, 7.0, -2.0}, 4.0));
    v.push_back(NoiseModel::degenerate_zero());
    return v;
}

}  // namespace

TEST_CASE("degenerate model always samples zero") {
    RngStream rng(1, 2);
    const auto z = NoiseModel::degenerate_zero();
    for (int i = 0; i < 100; ++i) CHECK(z.sample(rng) == 0.0);
    for (auto x : sample_noise_vector(z, 17, rng)) CHECK(x == 0.0);
}

TEST_CASE("uniform sample mean is near zero") {
    RngStream rng(42, tag("uniform-mean"));
    const auto u = NoiseModel::uniform(4.0);
    double sum = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) sum += u.sample(rng);
    CHECK(std::abs(sum / n) <= 0.01);
}

TEST_CASE("two-point samples only its two atoms with equal frequency") {
    RngStream rng(5, tag("two-point"));
    const double m = std::log(3.0);
    const auto tp = NoiseModel::two_point(m);
    int plus = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = tp.sample(rng);
        REQUIRE((x == m || x == -m));
        plus += x > 0;
    }
    CHECK(std::abs(plus / double(n) - 0.5) < 4.0 * 0.5 / std::sqrt(double(n)));
}

TEST_CASE("noise vectors are reproducible and bounded") {
    const auto u = NoiseModel::uniform(4.0);
    RngStream a(9, 3), b(9, 3);
    CHECK(sample_noise_vector(u, 3, a) == sample_noise_vector(u, 3, b));

    std::vector<double> from_thread;
    std::thread t([&] {
        RngStream c(9, 3);
        from_thread = sample_noise_vector(u, 3, c);
    });
    t.join();
    RngStream d(9, 3);
    CHECK(from_thread == sample_noise_vector(u, 3, d));

    RngStream e(11, 4);
    const auto big = sample_noise_vector(u, 10000, e);
    CHECK(big.size() == 10000);
    CHECK(std::all_of(big.begin(), big.end(), [](double x) { return std::abs(x) <= 4.0; }));
    CHECK_THROWS_AS(sample_noise_vector(u, 1, e), DomainError);
}

TEST_CASE("truncated Gaussian samples stay inside the bound") {
    RngStream rng(3, 3);
    const auto g = NoiseModel::truncated_gaussian(1.0, 0.5);
    for (int i = 0; i < 50000; ++i) CHECK(std::abs(g.sample(rng)) <= 0.5);
}

TEST_CASE("conformance flags") {
    const auto g = conformance_check(NoiseModel::truncated_gaussian(2.0, 6.0));
    CHECK(g.symmetric);
    CHECK(g.bounded);
    CHECK(g.continuous);
    CHECK(g.conforming());

    const auto tp = conformance_check(NoiseModel::two_point(std::log(3.0)));
    CHECK(tp.symmetric);
    CHECK(tp.bounded);
    CHECK_FALSE(tp.continuous);

    const auto e = conformance_check(NoiseModel::scaled_empirical({0.5, 1.0, 1.5, 2.0, 0.7, 0.2, 3.0, 1.1, 0.9, 2.2}, 4.0));
    CHECK(e.symmetric);
    const bool noted = std::any_of(e.notes.begin(), e.notes.end(),
                                   [](const std::string& s) { return s.find("asymmetric") != std::string::npos; });
    CHECK(noted);
}

TEST_CASE("scaled empirical shrinks into the bound and symmetrizes") {
    const auto e = NoiseModel::scaled_empirical({-3.0, 0.5, 8.0}, 4.0);
    const auto& k = std::get<NoiseModel::ScaledEmpirical>(e.kind());
    CHECK(k.scale == 0.5);
    CHECK(k.magnitudes == std::vector<double>{0.25, 1.5, 4.0});
    CHECK_THAT(e.cdf(-4.0), WithinAbs(1.0 / 6.0, 1e-15));
    CHECK_THAT(e.cdf(0.0), WithinAbs(0.5, 1e-15));
    CHECK(e.cdf(4.0) == 1.0);
}

TEST_CASE("odd moments vanish by quadrature") {
    for (const auto& m : all_models()) {
        INFO(m.describe());
        CHECK(std::abs(m.expect([](double x) { return x; }).value) < 1e-10);
        CHECK(std::abs(m.expect([](double x) { return x * x * x; }).value) < 1e-9);
        CHECK_THAT(m.expect([](double) { return 1.0; }).value, WithinAbs(1.0, 1e-10));
    }
}

TEST_CASE("truncated Gaussian renormalizes instead of clipping") {
    const auto g = NoiseModel::truncated_gaussian(2.0, 1.0);
    CHECK(g.cdf(-1.0) == 0.0);
    CHECK(g.cdf(1.0) == 1.0);
    CHECK(g.cdf(-1.0 + 1e-9) < 1e-8);
    CHECK(g.density(0.0) > g.density(0.9));
    CHECK(g.variance() < 1.0 / 3.0 + 1e-12);  // flatter than uniform but not a point mass
}

TEST_CASE("empirical CDF of samples lies in the KS band") {
    const std::size_t n = 1000000;
    const double band = 2.0 / std::sqrt(double(n)) * 1.63;
    int idx = 0;
    for (const auto& m : continuous_models()) {
        INFO(m.describe());
        RngStream rng(77, stream_id({tag("ks"), std::uint64_t(idx++)}));
        const auto xs = m.sample_vector(n, rng);
        const double d = stats::ks_one_sample_statistic(xs, [&](double x) { return m.cdf(x); });
        CHECK(d < band);
    }
}

TEST_CASE("sample odd moments are zero within four standard errors") {
    int idx = 0;
    for (const auto& m : all_models()) {
        if (m.is_degenerate()) continue;
        INFO(m.describe());
        RngStream rng(101, stream_id({tag("odd"), std::uint64_t(idx++)}));
        const auto xs = m.sample_vector(400000, rng);
        for (int k : {1, 3}) {
            std::vector<double> p(xs.size());
            std::transform(xs.begin(), xs.end(), p.begin(), [k](double x) { return std::pow(x, k); });
            const double se = std::sqrt(stats::variance(p) / double(p.size()));
            CHECK(std::abs(stats::mean(p)) < 4.0 * se);
        }
    }
}

TEST_CASE("json round trip and validation") {
    for (const auto& m : all_models()) {
        const auto back = NoiseModel::from_json(m.to_json());
        CHECK(back.to_json() == m.to_json());
    }
    CHECK(NoiseModel::from_json({{"kind", "truncated_gaussian"}, {"std", 1.5}, {"bound", 4}}).bound() == 4.0);
    CHECK_THROWS_AS(NoiseModel::from_json({{"kind", "uniform"}, {"bound", -1}}), DomainError);
    CHECK_THROWS_AS(NoiseModel::from_json({{"kind", "cauchy"}}), DomainError);
    CHECK_THROWS_AS(NoiseModel::truncated_gaussian(0.0, 1.0), DomainError);
}
