#include "drivesql/hashing.hpp"

#include <openssl/sha.h>

#include <array>
#include <limits>

namespace drivesql {

namespace {

std::array<unsigned char, SHA256_DIGEST_LENGTH> digest(std::string_view data) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> out{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out.data());
    return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char b : digest(data)) {
        hex.push_back(kHex[b >> 4]);
        hex.push_back(kHex[b & 0xf]);
    }
    return hex;
}

std::uint64_t sha256_u64(std::string_view data) {
    const auto d = digest(data);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
    return v;
}

std::uint64_t DeterministicRng::uniform_index(std::uint64_t n) {
    // Rejection sampling over the largest multiple of n.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

}  // namespace drivesql
