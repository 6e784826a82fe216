#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace screening {

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// SplitMix64 finalizer; used to fold identifiers into stream ids.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Folds a list of identifiers (purpose tag, seed index, sample index, ...) into one stream id.
constexpr std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts) noexcept {
    std::uint64_t h = 0x6A09E667F3BCC908ULL;
    for (auto p : parts) h = mix64(h ^ mix64(p));
    return h;
}

/// FNV-1a over a string; stable tag hashing for stream ids.
constexpr std::uint64_t tag(const char* s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 0x100000001b3ULL;
    return h;
}

/// Counter-based random stream. Draw i of stream s under master seed m is
/// philox(counter = (s, i), key = m), so the value depends only on (m, s, i)
/// and never on which thread or in which order draws are taken.
///
/// Satisfies UniformRandomBitGenerator so it can drive <random> distributions,
/// though the toolkit itself only uses uniform() and friends.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t master_seed, std::uint64_t stream) noexcept
        : seed_(master_seed), stream_(stream) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return next_u64(); }

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform on the open interval (0, 1).
    double uniform_open() noexcept;
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;

    /// Jump to draw index `i`.
    void seek(std::uint64_t i) noexcept { index_ = i; }
    std::uint64_t position() const noexcept { return index_; }
    std::uint64_t master_seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    /// Child stream keyed by this stream's id and `child`.
    RngStream substream(std::uint64_t child) const noexcept {
        return RngStream(seed_, stream_id({stream_, child}));
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t index_ = 0;
};

}  // namespace screening
