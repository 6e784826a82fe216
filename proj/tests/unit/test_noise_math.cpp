#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "screening/errors.hpp"
#include "screening/noise_math.hpp"

using namespace screening;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

// Reference values come from tests/oracles/compute_oracles.py (mpmath, 40 digits).

TEST_CASE("renorm_term examples") {
    CHECK(renorm_term(0.1, 0.0) == 0.0);
    CHECK_THAT(renorm_term(0.5, std::log(3.0)), WithinAbs(std::log(2.0), 1e-15));
    CHECK_THAT(renorm_term(0.1, -10.0), WithinAbs(-2.302176577080173, 1e-12));
    CHECK_THROWS_AS(renorm_term(0.0, 1.0), DomainError);
    CHECK_THROWS_AS(renorm_term(1.0, 1.0), DomainError);
    CHECK_THROWS_AS(renorm_term(0.3, INFINITY), DomainError);
}

TEST_CASE("renorm_term is increasing in x") {
    for (double eps : {0.05, 0.3, 0.7}) {
        double prev = renorm_term(eps, -8.0);
        for (double x = -7.9; x <= 8.0; x += 0.1) {
            const double v = renorm_term(eps, x);
            CHECK(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("bennett_h examples") {
    CHECK(bennett_h(0.0) == 0.0);
    CHECK_THAT(bennett_h(1.0), WithinAbs(2.0 * std::log(2.0) - 1.0, 1e-15));
    CHECK_THAT(bennett_h(0.266667), WithinAbs(0.03275919767766171, 1e-12));
    CHECK_THROWS_AS(bennett_h(-0.1), DomainError);
}

TEST_CASE("bennett_h is increasing and convex") {
    double prev = 0.0, prev_slope = 0.0;
    for (double x = 0.05; x < 10.0; x += 0.05) {
        const double v = bennett_h(x);
        CHECK(v > prev);
        const double slope = (v - prev) / 0.05;
        CHECK(slope > prev_slope);
        prev = v;
        prev_slope = slope;
    }
}

TEST_CASE("delta_estimate examples") {
    const auto zero = NoiseModel::degenerate_zero();
    for (double eps : {0.1, 0.3, 0.5}) {
        const auto d = delta_estimate(eps, zero);
        CHECK(d.value == 0.0);
        CHECK(d.error == 0.0);
    }
    const auto tp = NoiseModel::two_point(std::log(3.0));
    CHECK_THAT(delta_estimate(0.5, tp).value, WithinAbs(0.1438410362258905, 1e-14));
    const auto g = NoiseModel::truncated_gaussian(2.0, 6.0);
    const auto d = delta_estimate(0.1, g);
    CHECK_THAT(d.value, WithinAbs(0.2036804867615431, 1e-9));
    CHECK(d.error < 1e-8);
    CHECK_THAT(d.value, WithinAbs(0.2, 0.01));
}

TEST_CASE("sigma_estimate examples") {
    CHECK(sigma_estimate(0.2, NoiseModel::degenerate_zero()).value == 0.0);
    const auto tp = NoiseModel::two_point(std::log(3.0));
    const double fp = std::log(0.5 + 0.5 * 3.0), fm = std::log(0.5 + 0.5 / 3.0);
    const double closed = std::sqrt(0.5 * (fp * fp + fm * fm) - std::pow(0.5 * (fp + fm), 2));
    CHECK_THAT(sigma_estimate(0.5, tp).value, WithinAbs(closed, 1e-12));
    CHECK_THAT(closed, WithinAbs(0.5493061443340548, 1e-12));
    const auto s = sigma_estimate(0.1, NoiseModel::truncated_gaussian(1.5, 4.0)).value;
    CHECK_THAT(s, WithinAbs(1.229999428431038, 1e-9));
    CHECK(s >= 1.0);
    CHECK(s <= 2.0);
    CHECK_THAT(sigma_estimate(0.1, NoiseModel::truncated_gaussian(2.0, 6.0)).value, WithinAbs(1.608716672693892, 1e-9));
}

TEST_CASE("Monte Carlo estimates agree with quadrature") {
    const auto g = NoiseModel::truncated_gaussian(1.5, 4.0);
    const auto q = delta_estimate(0.1, g);
    const auto mc = delta_estimate(0.1, g, MonteCarloMethod{200000, 3});
    CHECK(std::abs(mc.value - q.value) < 4.0 * mc.error);
    const auto qs = sigma_estimate(0.1, g);
    const auto ms = sigma_estimate(0.1, g, MonteCarloMethod{200000, 3});
    CHECK(std::abs(ms.value - qs.value) < 4.0 * ms.error);
    CHECK_THROWS_AS(delta_estimate(0.1, g, MonteCarloMethod{0, 1}), DomainError);
}

namespace {
RenormStats desk_stats() { return RenormStats::make(0.1, 0.2, 1.5, 4.0); }
}  // namespace

TEST_CASE("lemma threshold examples") {
    const auto s = desk_stats();
    CHECK_THAT(lemma1_length_threshold(s, std::exp(-1.0)), WithinAbs(217.07272215913208, 1e-8));
    CHECK_THAT(lemma1_length_threshold(s, std::exp(-2.0)), WithinAbs(434.14544431826416, 1e-8));
    CHECK(lemma1_length_threshold(s, 1.0 - 1e-12) < 1e-6);
    CHECK(lemma1_length_threshold(s, 1.0 - 1e-12) > 0.0);
    CHECK_THROWS_AS(lemma1_length_threshold(s, 1.0), DomainError);
}

TEST_CASE("degenerate statistics make the bounds vacuous") {
    const auto zero_delta = RenormStats::make(0.1, 0.0, 1.5, 4.0);
    const auto zero_sigma = RenormStats::make(0.1, 0.2, 0.0, 4.0);
    CHECK_THROWS_AS(lemma1_length_threshold(zero_delta, 0.1), BoundVacuous);
    CHECK_THROWS_AS(lemma1_length_threshold(zero_sigma, 0.1), BoundVacuous);
    CHECK_THROWS_AS(theorem1_length_threshold(zero_delta, BoundParams::make(0.1, 5, 10)), BoundVacuous);
    CHECK_THROWS_AS(max_solution_count(zero_sigma, 100, 0.1), BoundVacuous);
    CHECK_THROWS_AS(RenormStats::from_model(0.1, NoiseModel::degenerate_zero()), BoundVacuous);
    CHECK_THROWS_AS(RenormStats::make(0.5, 0.2, 1.5, 4.0), DomainError);
    CHECK_THROWS_AS(RenormStats::make(0.1, 0.2, 5.0, 4.0), DomainError);
}

TEST_CASE("theorem threshold examples") {
    const auto s = desk_stats();
    const double d = std::exp(-1.0);
    CHECK(theorem1_length_threshold(s, BoundParams::make(d, 1, 1)) == lemma1_length_threshold(s, d));
    CHECK_THAT(theorem1_length_threshold(s, BoundParams::make(d, 100, 1)), WithinAbs(1216.7295504376436, 1e-7));
    // Inversion of the solution-count condition: N at the boundary for length L gives threshold L.
    const double L = 900.0;
    const double n_boundary = max_solution_count(s, L, 0.05);
    CHECK_THAT(theorem1_length_threshold(s, BoundParams::make(0.05, n_boundary, 1)), WithinRel(L, 1e-12));
}

TEST_CASE("hardness bound factor examples") {
    const auto s = desk_stats();
    CHECK(hardness_bound_factor(s, 0.0) == 1.0);
    CHECK_THAT(hardness_bound_factor(s, 20.0), WithinRel(std::exp(1.0), 1e-15));
    CHECK_THAT(hardness_bound_factor(s, 400.0), WithinRel(std::exp(20.0), 1e-14));
    CHECK_THROWS_AS(hardness_bound_factor(s, -1.0), DomainError);
}

TEST_CASE("max solution count examples") {
    const auto s = desk_stats();
    CHECK_THAT(solution_count_exponent(s), WithinAbs(0.004606751092691039, 1e-14));
    CHECK_THAT(log_max_solution_count(s, 1600.0, 0.05) - std::log(0.05), WithinAbs(7.370801748305662, 1e-10));
    CHECK_THAT(max_solution_count(s, 0.0, 0.05), WithinRel(0.05, 1e-15));
}

TEST_CASE("apply_step_noise examples") {
    CHECK_THAT(apply_step_noise(0.3, 0.0), WithinAbs(0.3, 1e-15));
    CHECK_THAT(apply_step_noise(0.5, std::log(3.0)), WithinAbs(0.25, 1e-15));
    CHECK_THAT(apply_step_noise(0.5, -std::log(3.0)), WithinAbs(0.75, 1e-15));
    CHECK_THROWS_AS(apply_step_noise(0.0, 0.1), DomainError);
    CHECK_THROWS_AS(apply_step_noise(1.0, 0.1), DomainError);
    CHECK(apply_step_noise(0.4, 0.5) > apply_step_noise(0.3, 0.5));
    CHECK(apply_step_noise(0.4, 0.5) < apply_step_noise(0.4, 0.4));
}

TEST_CASE("pair identity and its non-negativity") {
    for (double p : {0.01, 0.2, 0.5, 0.93})
        for (double x : {-5.0, -1.0, -0.01, 0.0, 0.3, 4.0}) {
            const double lhs = renorm_term(p, x) + renorm_term(p, -x);
            CHECK_THAT(lhs, WithinAbs(renorm_pair(p, x), 1e-12));
            if (x == 0.0)
                CHECK(renorm_pair(p, x) == 0.0);
            else
                CHECK(renorm_pair(p, x) > 0.0);
        }
}

TEST_CASE("Delta is symmetric in p and 1 - p and minimal at the endpoints") {
    const auto g = NoiseModel::truncated_gaussian(1.5, 4.0);
    for (double p : {0.1, 0.25, 0.4}) CHECK_THAT(delta_estimate(p, g).value, WithinAbs(delta_estimate(1 - p, g).value, 1e-9));
    CHECK(delta_estimate(0.1, g).value < delta_estimate(0.2, g).value);
    CHECK(delta_estimate(0.2, g).value < delta_estimate(0.5, g).value);
}

TEST_CASE("thresholds are monotone in their parameters") {
    const double d = 0.05;
    CHECK(lemma1_length_threshold(RenormStats::make(0.1, 0.3, 1.5, 4), d) <
          lemma1_length_threshold(RenormStats::make(0.1, 0.2, 1.5, 4), d));
    CHECK(lemma1_length_threshold(desk_stats(), 0.2) < lemma1_length_threshold(desk_stats(), 0.1));
    CHECK(theorem1_length_threshold(desk_stats(), BoundParams::make(d, 10, 1)) <
          theorem1_length_threshold(desk_stats(), BoundParams::make(d, 11, 1)));
}

TEST_CASE("renorm term stays within the noise bound") {
    for (double m : {1.0, 4.0, 8.0})
        for (double p = 0.01; p < 1.0; p += 0.07)
            for (double x = -m; x <= m; x += m / 50.0) CHECK(std::abs(renorm_term(p, x)) <= m + 1e-12);
    const auto g = NoiseModel::truncated_gaussian(2.0, 6.0);
    CHECK(sigma_estimate(0.1, g).value <= 6.0);
}
