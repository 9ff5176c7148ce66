// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace dmix {

/// Philox4x32-10 block function. Pure: the same (counter, key) always maps to
/// the same output block.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Counter-based random stream addressed by (seed, stream id).
///
/// The seed is the Philox key; the stream id occupies the upper half of the
/// counter, so streams with distinct ids never overlap. The value sequence
/// depends only on (seed, stream id) and on the order of calls, never on
/// threads or platform word size.
///
/// Each block yields two 64-bit words. normal() draws one block per pair of
/// variates (Box-Muller) and caches the second one.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Number of 64-bit words consumed so far.
    std::uint64_t words_consumed() const noexcept { return words_; }

    std::uint64_t next_u64() noexcept;

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;

    /// Standard normal variate.
    double normal() noexcept;

    /// Restart the stream at word offset 0.
    void reset() noexcept;

    // UniformRandomBitGenerator
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    result_type operator()() noexcept { return next_u64(); }

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t block_ = 0;
    std::uint64_t words_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int buffered_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dmix
