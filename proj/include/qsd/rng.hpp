#pragma once

// Philox4x32-10 counter-based generator: every draw is a pure function of
// (key, counter), so each simulated path owns an independent stream that does
// not depend on scheduling.

#include <array>
#include <cstdint>

namespace qsd {

class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Block generate(Block ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Uniform on the open interval (0, 1).
constexpr double to_unit(std::uint32_t u) noexcept { return (static_cast<double>(u) + 0.5) * 0x1p-32; }

/// Random blocks of one path: key = seed, counter = (index, slot, path).
class PathStream {
public:
    PathStream(std::uint64_t seed, std::uint64_t path) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          path_lo_(static_cast<std::uint32_t>(path)),
          path_hi_(static_cast<std::uint32_t>(path >> 32)) {}

    Philox4x32::Block block(std::uint32_t index, std::uint32_t slot) const noexcept {
        return Philox4x32::generate({index, slot, path_lo_, path_hi_}, key_);
    }

private:
    Philox4x32::Key key_;
    std::uint32_t path_lo_, path_hi_;
};

/// Sequential 32-bit engine over the blocks (0, slot, path), (1, slot, path), ...
class PhiloxEngine {
public:
    using result_type = std::uint32_t;

    PhiloxEngine(std::uint64_t seed, std::uint64_t path, std::uint32_t slot) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          ctr_{0, slot, static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return 0xFFFFFFFFu; }

    result_type operator()() noexcept {
        if (pos_ == 4) {
            buf_ = Philox4x32::generate(ctr_, key_);
            ++ctr_[0];
            pos_ = 0;
        }
        return buf_[pos_++];
    }

private:
    Philox4x32::Key key_;
    Philox4x32::Block ctr_;
    Philox4x32::Block buf_{};
    int pos_ = 4;
};

}  // namespace qsd
