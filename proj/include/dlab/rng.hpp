#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dlab::rng {

// Philox 4x32, 10 rounds. A counter-based generator: the i-th block of a stream is
// a pure function of (key, counter), so independent draws never share mutable
// state and a run's randomness is fully determined by its key.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t splitmix64(std::uint64_t x);

// Purpose tags keep logically distinct draw sequences of one run in disjoint
// counter spaces, so e.g. adding optimizer iterations never shifts the run's
// initial noise draw.
enum class Purpose : std::uint32_t {
    generic = 0,
    eps_star = 1,
    iteration = 2,
    library = 3,
};

class Stream {
public:
    Stream(std::uint64_t key, Purpose purpose);

    double u01();                       // uniform in [0, 1), 53-bit resolution
    double uniform(double a, double b); // uniform in [a, b)
    double normal();                    // standard normal (Box–Muller)
    std::vector<double> normal_vec(int dim);
    std::uint32_t index(std::uint32_t n);  // uniform in {0, ..., n-1}

private:
    std::array<std::uint32_t, 4> next_block();

    std::array<std::uint32_t, 2> key_;
    std::uint32_t purpose_;
    std::uint64_t counter_ = 0;
};

// Key for one run of a sweep: mixes the experiment identity (config hash) with the
// run ordinal so runs are independent and adding runs never perturbs existing ones.
std::uint64_t run_key(std::uint64_t config_hash, std::uint64_t run_ordinal);

}  // namespace dlab::rng
