#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdint>
#include <qmiss/rng.hpp>
#include <qmiss/special.hpp>
#include <set>

using namespace qmiss;

TEST_CASE("mix64 is deterministic and has no cheap collisions") {
    CHECK(rng::mix64(0) == rng::mix64(0));
    std::set<uint64_t> seen;
    for (uint64_t i = 0; i < 4096; ++i) seen.insert(rng::mix64(i));
    CHECK(seen.size() == 4096);
    // single-bit input flips should change roughly half the output bits
    for (int b = 0; b < 64; b += 7) {
        uint64_t d = rng::mix64(12345) ^ rng::mix64(12345 ^ (uint64_t(1) << b));
        int pop = 0;
        for (; d; d &= d - 1) ++pop;
        CHECK(pop >= 12);
        CHECK(pop <= 52);
    }
}

TEST_CASE("stream_seed separates master, experiment and replication") {
    uint64_t base = rng::stream_seed(42, 7, 0);
    CHECK(base == rng::stream_seed(42, 7, 0));
    CHECK(base != rng::stream_seed(43, 7, 0));
    CHECK(base != rng::stream_seed(42, 8, 0));
    CHECK(base != rng::stream_seed(42, 7, 1));
    std::set<uint64_t> seen;
    for (uint64_t rep = 0; rep < 1000; ++rep) seen.insert(rng::stream_seed(42, 7, rep));
    CHECK(seen.size() == 1000);
}

TEST_CASE("Xoshiro256pp u01 lands in (0,1) and replays exactly") {
    rng::Xoshiro256pp a(991), b(991);
    for (int i = 0; i < 10000; ++i) {
        double u = a.u01();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(u == b.u01());
    }
    rng::Xoshiro256pp c(992);
    CHECK(rng::Xoshiro256pp(991).next() != c.next());
}

TEST_CASE("Xoshiro256pp u01 has uniform mean and variance") {
    rng::Xoshiro256pp r(2024);
    const int n = 1000000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double u = r.u01();
        s += u;
        s2 += u * u;
    }
    double mean = s / n;
    double var = s2 / n - mean * mean;
    // exact moments 1/2 and 1/12; allow 4 sigma
    CHECK(std::fabs(mean - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::fabs(var - 1.0 / 12.0) < 4.0 * std::sqrt(1.0 / 180.0 / n));
}

TEST_CASE("neg_log agrees with std::log across the full range") {
    auto check = [](double u) {
        double got = rng::neg_log(u);
        double want = -std::log(u);
        CAPTURE(u);
        REQUIRE(std::fabs(got - want) <= 2e-12 * std::max(1.0, std::fabs(want)));
    };
    for (int e = -300; e <= -1; e += 3) check(std::pow(10.0, e));
    rng::Xoshiro256pp r(5);
    for (int i = 0; i < 20000; ++i) check(r.u01());
    // near 1, where naive series would cancel
    for (double d : {1e-16, 1e-12, 1e-8, 1e-4, 0.01}) check(1.0 - d);
    check(std::nextafter(1.0, 0.0));
    check(0.5);
    check(M_SQRT1_2);  // the range-reduction pivot
}

TEST_CASE("normal_from_u tracks the reference quantile") {
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = 1; i < 20000; ++i) {
        double u = double(i) / 20000.0;
        double x = rng::normal_from_u(u);
        double ref = special::norm_quantile(u);
        CAPTURE(u);
        REQUIRE(std::fabs(x - ref) <= 2e-9 * (1.0 + std::fabs(ref)));
        REQUIRE(x >= prev);  // monotone on the grid
        prev = x;
    }
    for (double u : {1e-300, 1e-30, 1e-10, 0.0242, 0.02425, 0.0243}) {
        double x = rng::normal_from_u(u);
        double ref = special::norm_quantile(u);
        CAPTURE(u);
        REQUIRE(std::fabs(x - ref) <= 2e-9 * (1.0 + std::fabs(ref)));
        // symmetric tails up to the approximation error, while 1 - u is
        // representable away from 1
        if (1.0 - u != 1.0)
            REQUIRE(std::fabs(rng::normal_from_u(1.0 - u) + x) <= 4e-9 * (1.0 + std::fabs(x)));
    }
}

TEST_CASE("exponential_from_u is the scaled negative log") {
    rng::Xoshiro256pp r(7);
    for (int i = 0; i < 1000; ++i) {
        double u = r.u01();
        CHECK(rng::exponential_from_u(u, 3.5) == 3.5 * rng::neg_log(u));
        CHECK(rng::exponential_from_u(u, 1.0) == rng::neg_log(u));
    }
}
