#include <cmath>

#include <initializer_list>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fedrl/schedule.hpp"

using namespace fedrl;

namespace {

// Direct product form, evaluated factor by factor.
double weight_product(std::int64_t i, std::int64_t t, int H) {
    if (i == 0) return t == 0 ? 1.0 : 0.0;
    double w = double(H + 1) / double(H + i);
    for (std::int64_t j = i + 1; j <= t; ++j) w *= 1.0 - double(H + 1) / double(H + j);
    return w;
}

}  // namespace

TEST_CASE("learning rate") {
    CHECK(eta(1, 5) == 1.0);
    CHECK(eta(2, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(eta(10, 3) == doctest::Approx(4.0 / 13.0).epsilon(1e-15));
    CHECK_THROWS_AS(eta(0, 3), std::invalid_argument);
}

TEST_CASE("weights for a short window") {
    CHECK(eta_weight(0, 0, 3) == 1.0);
    CHECK(eta_weight(0, 4, 3) == 0.0);
    CHECK(eta_weight(1, 2, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(eta_weight(2, 2, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    for (int H : {1, 2, 5, 7})
        for (std::int64_t t = 1; t <= 40; ++t) {
            double total = 0.0;
            for (std::int64_t i = 1; i <= t; ++i) {
                CHECK(std::abs(eta_weight(i, t, H) - weight_product(i, t, H)) <= 1e-12);
                total += eta_weight(i, t, H);
            }
            CHECK(std::abs(total - 1.0) <= 1e-12);
        }
}

TEST_CASE("complement and window rate") {
    CHECK(eta_complement(2, 3, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK(alpha_rate({1, 1, 2, 1.0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(alpha_rate({1, 4, 6, 1.0}) == doctest::Approx(11.0 / 21.0).epsilon(1e-15));
    CHECK(alpha_rate({5, 0, 3, 1.0}) == 1.0);
    CHECK_THROWS_AS(eta_complement(0, 3, 2), std::invalid_argument);
}

TEST_CASE("window weights sum with the complement to one") {
    for (int H : {1, 2, 5, 7})
        for (std::int64_t lo = 1; lo < 30; lo += 3)
            for (std::int64_t hi = lo + 1; hi < 60; hi += 7) {
                double part = 0.0;
                for (std::int64_t t = lo + 1; t <= hi; ++t) part += weight_product(t, hi, H);
                CHECK(std::abs(part - alpha_rate({H, lo, hi, 1.0})) <= 1e-12);
            }
}

TEST_CASE("Hoeffding bonus") {
    BonusConstants c;
    SUBCASE("single term, first visit") {
        const RateWindow w{5, 0, 1, 2.0};
        CHECK(hoeffding_bonus(w, c) == doctest::Approx(c.c_b * std::sqrt(125.0 * 2.0)).epsilon(1e-15));
    }
    SUBCASE("single term deep in the schedule") {
        const RateWindow w{5, 124, 125, 1.0};
        const double expected = 0.06527139518645055;
        CHECK(std::abs(hoeffding_bonus(w, c) - expected) <= 1e-15);
    }
    SUBCASE("two-visit window") {
        const RateWindow w{1, 4, 6, 1.0};
        CHECK(std::abs(hoeffding_bonus(w, c) - 0.31554187025267305) <= 1e-15);
    }
    SUBCASE("empty window is rejected") {
        CHECK_THROWS_AS(hoeffding_bonus({3, 4, 4, 1.0}, c), std::invalid_argument);
    }
}

TEST_CASE("variance-aware coefficient") {
    // sigma - mu^2 below zero is clamped.
    CHECK(beta_R(0.5, 0.2, 0.0, 0.0, 4, 3, 1.0, 2.0) == 0.0);
    const double b = beta_R(1.0, 1.25, 0.5, 0.5, 4, 4, 1.0, 2.0);
    CHECK(b == doctest::Approx(2.0 * 0.5 * (0.5 + 2.0 * 0.5)).epsilon(1e-15));
}

TEST_CASE("reference bonus") {
    BonusConstants c;
    SUBCASE("first visit carries the new coefficient") {
        const RateWindow w{1, 0, 1, 1.0};
        CHECK(reference_bonus(w, 0.0, 0.0, c) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("hand example") {
        // H=1, N: 2 -> 3, eta_3 = 1/2. Only the final index contributes:
        // eta_3 * ((1 - 1/eta_3) b_prev + b_new / eta_3 + 1/3).
        const RateWindow w{1, 2, 3, 1.0};
        CHECK(reference_bonus(w, 0.0, 0.0, c) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
        CHECK(reference_bonus(w, 0.2, 0.3, c) == doctest::Approx(0.5 * (-0.2 + 0.6 + 1.0 / 3.0)).epsilon(1e-14));
    }
    SUBCASE("telescoping: constant coefficient reduces to weight sums") {
        for (int H : {1, 2, 5, 7})
            for (std::int64_t lo = 0; lo < 20; lo += 4)
                for (std::int64_t hi = lo + 1; hi < 30; hi += 5) {
                    const RateWindow w{H, lo, hi, 1.0};
                    const double b = 0.37;
                    double expected = 0.0;
                    for (std::int64_t t = lo + 1; t <= hi; ++t) expected += weight_product(t, hi, H) * b;
                    const double got = reference_bonus(w, b, b, {1.0, 1.0, 1e-300, 0.05});
                    CHECK(std::abs(got - expected) <= 1e-12);
                }
    }
}

TEST_CASE("theory iota") {
    CHECK(std::abs(iota_theory(3, 2, 100000, 0.01) - 21.242059630361577) <= 1e-12);
    CHECK_THROWS_AS(iota_theory(3, 2, 100, 1.5), std::invalid_argument);
}

TEST_CASE("constant validation") {
    BonusConstants c;
    CHECK_NOTHROW(c.validate(5));
    c.beta = 6.0;
    CHECK_THROWS_AS(c.validate(5), std::invalid_argument);
    c.beta = 0.05;
    c.c_b = 0.0;
    CHECK_THROWS_AS(c.validate(5), std::invalid_argument);
}
