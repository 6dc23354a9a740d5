#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "dlab/distill.hpp"
#include "dlab/metrics.hpp"
#include "dlab/ode.hpp"
#include "dlab/rng.hpp"

using namespace dlab;

namespace {

const ScheduleConfig kSc;

Registry two_mode_registry() {
    Registry reg;
    Mixture m;
    m.comps = {{0.5, {2.0}, 0.1}, {0.5, {-2.0}, 0.1}};
    reg.add(Condition::label(0), std::move(m));
    return reg;
}

std::vector<vec> random_set(int n, int dim, std::uint64_t key) {
    rng::Stream s(key, rng::Purpose::generic);
    std::vector<vec> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(s.normal_vec(dim));
    return out;
}

}  // namespace

TEST_CASE("pairwise diversity matches hand-computed means") {
    CHECK(pairwise_diversity({{0.0}, {3.0}}) == 3.0);
    // pairs (0,1), (0,3), (1,3) have distances 1, 3, 2 -> mean 2
    CHECK(pairwise_diversity({{0.0}, {1.0}, {3.0}}) == 2.0);
    CHECK(pairwise_diversity({{0.0, 0.0}, {3.0, 4.0}}) == 5.0);
}

TEST_CASE("parallel pairwise diversity is bit-identical to the serial reference") {
    for (int n : {2, 3, 17, 64, 257}) {
        const auto samples = random_set(n, 8, 0x7a1e + n);
        CHECK(pairwise_diversity(samples) == pairwise_diversity_serial(samples));
    }
}

TEST_CASE("pairwise diversity rejects degenerate inputs") {
    CHECK_THROWS_AS(pairwise_diversity({}), std::invalid_argument);
    CHECK_THROWS_AS(pairwise_diversity({{1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(pairwise_diversity({{1.0}, {1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("mode coverage counts reached modes, inclusive at the radius") {
    const std::vector<vec> modes = {{2.0}, {-2.0}, {0.0}};
    CHECK(mode_coverage({{1.9}, {2.05}}, modes, 0.2) == 1);
    CHECK(mode_coverage({{1.9}, {-2.3}, {0.05}}, modes, 0.35) == 3);
    CHECK(mode_coverage({{5.0}}, modes, 0.5) == 0);
    CHECK(mode_coverage({{1.75}}, {{2.0}}, 0.25) == 1);  // boundary counts
    CHECK_THROWS_AS(mode_coverage({{1.0}}, modes, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(mode_coverage({{1.0}}, modes, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(mode_coverage({}, modes, 1.0), std::invalid_argument);
}

TEST_CASE("fidelity matches the closed-form clean-data log-density") {
    Registry reg;
    const double mu = 1.5, s = 0.3;
    Mixture m;
    m.comps = {{1.0, {mu}, s}};
    reg.add(Condition::label(0), Mixture(m));

    // the clean-data marginal keeps the schedule's terminal clamp: at t = 0 the
    // density is N(sqrt(a)*mu, a*s^2 + 1 - a) with a = alpha_bar(0)
    const double a = alpha_bar(0.0, kSc);
    const double C = a * s * s + (1.0 - a);
    auto nll_at = [&](double x) {
        const double r = x - std::sqrt(a) * mu;
        return 0.5 * std::log(2.0 * std::numbers::pi * C) + 0.5 * r * r / C;
    };
    const double got = fidelity_nll({{mu}}, reg, Condition::label(0), kSc);
    CHECK(got == doctest::Approx(nll_at(mu)).epsilon(1e-12));

    const double got2 = fidelity_nll({{mu}, {0.7}}, reg, Condition::label(0), kSc);
    CHECK(got2 == doctest::Approx(0.5 * (nll_at(mu) + nll_at(0.7))).epsilon(1e-12));

    // far off-distribution samples score poorly but never overflow to inf/nan
    const double far = fidelity_nll({{50.0}}, reg, Condition::label(0), kSc);
    CHECK(std::isfinite(far));
    CHECK(far > 1000.0);
}

TEST_CASE("unconditional fidelity halves each condition's weight") {
    Registry reg;
    Mixture a, b;
    a.comps = {{1.0, {50.0}, 0.3}};
    b.comps = {{1.0, {-50.0}, 0.3}};
    reg.add(Condition::label(0), std::move(a));
    reg.add(Condition::label(1), std::move(b));
    // near one mode the other contributes ~exp(-5000); the union just costs log 2
    const double cond = fidelity_nll({{50.0}}, reg, Condition::label(0), kSc);
    const double uncond = fidelity_nll({{50.0}}, reg, Condition::uncond(), kSc);
    CHECK(uncond == doctest::Approx(cond + std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("transport distance: hand values and metric axioms") {
    CHECK(wasserstein2({{0.0}}, {{3.0}}) == 3.0);
    // optimal assignment crosses the naive index pairing
    CHECK(wasserstein2({{0.0, 0.0}, {10.0, 0.0}}, {{10.0, 0.0}, {0.0, 0.0}}) == 0.0);

    const auto a = random_set(32, 3, 101);
    const auto b = random_set(32, 3, 102);
    const auto c = random_set(32, 3, 103);
    CHECK(wasserstein2(a, a) == 0.0);
    CHECK(wasserstein2(a, b) == doctest::Approx(wasserstein2(b, a)).epsilon(1e-12));
    CHECK(wasserstein2(a, c) <= wasserstein2(a, b) + wasserstein2(b, c) + 1e-9);

    // invariant under reordering of either set and under common translation
    auto b_shuffled = b;
    std::rotate(b_shuffled.begin(), b_shuffled.begin() + 13, b_shuffled.end());
    std::swap(b_shuffled[0], b_shuffled[7]);
    CHECK(wasserstein2(a, b_shuffled) == doctest::Approx(wasserstein2(a, b)).epsilon(1e-12));
    auto shift = [](std::vector<vec> v) {
        for (auto& x : v)
            for (auto& xi : x) xi += 0.75;
        return v;
    };
    CHECK(wasserstein2(shift(a), shift(b)) == doctest::Approx(wasserstein2(a, b)).epsilon(1e-9));
}

TEST_CASE("transport distance rejects mismatched or oversized inputs") {
    CHECK_THROWS_AS(wasserstein2({{1.0}}, {{1.0}, {2.0}}), std::invalid_argument);
    CHECK_THROWS_AS(wasserstein2({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(wasserstein2({{1.0}}, {{1.0, 2.0}}), std::invalid_argument);
    const auto big = random_set(257, 1, 9);
    CHECK_THROWS_AS(wasserstein2(big, big), std::invalid_argument);
}

TEST_CASE("path-anchored finals transport-match the sampler; single-draw finals do not") {
    const Registry reg = two_mode_registry();
    const Condition y = Condition::label(0);
    DistillConfig dc;
    dc.N = 400;
    dc.lr = 0.05;
    PathCache cache;
    std::vector<vec> f_sds, f_dsd, f_ddim;
    const TimeGrid grid = ddim_grid(dc.n_ddim, kSc);
    for (int s = 0; s < 100; ++s) {
        const std::uint64_t key = rng::run_key(0x3a11, s);
        dc.variant = Variant::sds;
        f_sds.push_back(optimize_image(reg, y, 1, dc, kSc, key, &cache).final_x);
        dc.variant = Variant::dsd;
        f_dsd.push_back(optimize_image(reg, y, 1, dc, kSc, key, &cache).final_x);
        // reference sampler endpoint for the same per-run noise draw
        rng::Stream es(key, rng::Purpose::eps_star);
        const vec seed = es.normal_vec(1);
        f_ddim.push_back(
            ddim_forward(reg, seed, y, grid, {dc.cfg_path}, kSc).xs.back());
    }
    const double w_dsd = wasserstein2(f_dsd, f_ddim);
    const double w_sds = wasserstein2(f_sds, f_ddim);
    // measured 0.048 vs 0.369 on these keys: with near-equal mode balance the gap
    // is per-path anchoring, not mode proportions
    CHECK(w_dsd < 0.15);
    CHECK(w_sds > 0.25);
    CHECK(2.0 * w_dsd < w_sds);
}
