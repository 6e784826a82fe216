#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <thread>
#include <vector>

#include "screening/rng.hpp"

using namespace screening;

TEST_CASE("philox4x32-10 matches the published known-answer vectors") {
    using A4 = std::array<std::uint32_t, 4>;
    using A2 = std::array<std::uint32_t, 2>;
    CHECK(philox4x32(A4{0, 0, 0, 0}, A2{0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, A2{0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, A2{0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("a stream is a pure function of seed, stream id and draw index") {
    RngStream a(42, 7), b(42, 7);
    std::vector<std::uint64_t> xs;
    for (int i = 0; i < 100; ++i) xs.push_back(a.next_u64());
    for (int i = 0; i < 100; ++i) CHECK(b.next_u64() == xs[i]);

    RngStream c(42, 7);
    c.seek(57);
    CHECK(c.next_u64() == xs[57]);
    CHECK(RngStream(43, 7).next_u64() != xs[0]);
    CHECK(RngStream(42, 8).next_u64() != xs[0]);
}

TEST_CASE("draws are independent of the thread that takes them") {
    std::vector<double> serial(64), threaded(64);
    for (std::size_t i = 0; i < serial.size(); ++i) serial[i] = RngStream(5, stream_id({tag("t"), i})).uniform();
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < 4; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < threaded.size(); i += 4)
                threaded[i] = RngStream(5, stream_id({tag("t"), i})).uniform();
        });
    pool.clear();
    CHECK(serial == threaded);
}

TEST_CASE("uniform draws lie in range and below() is unbiased enough") {
    RngStream r(1, 2);
    std::vector<int> counts(6, 0);
    for (int i = 0; i < 60000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double v = r.uniform_open();
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
        ++counts[r.below(6)];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("stream ids and tags are stable and distinct") {
    static_assert(tag("a") != tag("b"));
    CHECK(stream_id({1, 2}) != stream_id({2, 1}));
    std::set<std::uint64_t> ids;
    for (std::uint64_t i = 0; i < 1000; ++i) ids.insert(stream_id({tag("x"), i}));
    CHECK(ids.size() == 1000);
    const RngStream base(3, 4);
    CHECK(base.substream(1).stream() != base.substream(2).stream());
    CHECK(base.substream(1).master_seed() == 3);
}
