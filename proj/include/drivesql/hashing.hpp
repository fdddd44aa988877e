#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace drivesql {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// First 8 bytes of SHA-256(data), big-endian.
std::uint64_t sha256_u64(std::string_view data);

/// Seeded generator whose draws are identical on every platform (the standard
/// distributions are implementation-defined, so bounded draws are done here).
class DeterministicRng {
public:
    explicit DeterministicRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Uniform in [0, 1) with 53 random bits.
    double uniform_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[uniform_index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace drivesql
