#include "dlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace dlab::rng {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(std::array<std::uint32_t, 4>& c, const std::array<std::uint32_t, 2>& k) {
    const std::uint64_t p0 = std::uint64_t(kMul0) * c[0];
    const std::uint64_t p1 = std::uint64_t(kMul1) * c[2];
    const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        round_once(counter, key);
    }
    return counter;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    return fnv1a64(std::string_view(static_cast<const char*>(data), n));
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

Stream::Stream(std::uint64_t key, Purpose purpose)
    : key_{std::uint32_t(key), std::uint32_t(key >> 32)},
      purpose_(static_cast<std::uint32_t>(purpose)) {}

std::array<std::uint32_t, 4> Stream::next_block() {
    const std::array<std::uint32_t, 4> ctr = {std::uint32_t(counter_), std::uint32_t(counter_ >> 32),
                                              purpose_, 0u};
    ++counter_;
    return philox4x32(ctr, key_);
}

double Stream::u01() {
    const auto b = next_block();
    const std::uint64_t w = (std::uint64_t(b[0]) << 32) | b[1];
    return double(w >> 11) * 0x1.0p-53;
}

double Stream::uniform(double a, double b) { return a + u01() * (b - a); }

double Stream::normal() {
    const auto b = next_block();
    const std::uint64_t w1 = (std::uint64_t(b[0]) << 32) | b[1];
    const std::uint64_t w2 = (std::uint64_t(b[2]) << 32) | b[3];
    // u1 in (0,1] so the log is finite.
    const double u1 = double((w1 >> 11) + 1) * 0x1.0p-53;
    const double u2 = double(w2 >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> Stream::normal_vec(int dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal();
    return v;
}

std::uint32_t Stream::index(std::uint32_t n) {
    const auto k = std::uint32_t(u01() * n);
    return k >= n ? n - 1 : k;
}

std::uint64_t run_key(std::uint64_t config_hash, std::uint64_t run_ordinal) {
    return config_hash ^ splitmix64(run_ordinal);
}

}  // namespace dlab::rng
