#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "dlab/oracle.hpp"

namespace dlab {

struct OdeState {
    double t;
    vec x;
};

// One deterministic sampling (or inversion) trajectory. `times` lists the visited
// times in traversal order; `eps[i]` is the prediction evaluated at (xs[i], times[i])
// — every node carries its own evaluation, including a terminal t = 0 entry.
struct OdePath {
    vec seed;
    Condition y;
    TimeGrid grid;
    GuidanceConfig guidance;
    std::vector<double> times;
    std::vector<vec> xs;
    std::vector<vec> eps;

    int index_of(double t) const;  // throws if t was not visited
    const vec& x_at(double t) const { return xs[index_of(t)]; }
    const vec& eps_at(double t) const { return eps[index_of(t)]; }
    const vec& final_x() const;  // requires a terminal t = 0 entry
};

// One deterministic-sampler step in rescaled space: xbar' = xbar + (sigma' - sigma) * eps,
// with xbar = x / sqrt(alpha_bar) and clean-terminal coefficients at t = 0.
// t_next == t is an exact no-op. Works in both time directions.
vec ddim_step(const vec& x, double t, double t_next, const vec& eps, const ScheduleConfig& sc);

// Integrate from x(T) = seed down the grid to t_stop (grid point, or 0 for a full
// solve). Deterministic in (seed, y, grid, guidance).
OdePath ddim_forward(const Registry& reg, const vec& seed, const Condition& y,
                     const TimeGrid& grid, const GuidanceConfig& guidance,
                     const ScheduleConfig& sc, double t_stop = 0.0);

// First-order inversion: ascend from t = 0 to t_stop, reusing the prediction at the
// current (lower-noise) state for each upward step.
OdePath ddim_invert(const Registry& reg, const vec& x0, const Condition& y, const TimeGrid& grid,
                    const ScheduleConfig& sc, double t_stop, const GuidanceConfig& guidance = {});

// Clean-sample update across one step: x0_prev - sigma(t_next) * (eps_next - eps_prev),
// with the clean-terminal sigma(0) = 0.
vec x0_update(const vec& x0_prev, const vec& eps_next, const vec& eps_prev, double t_next,
              const ScheduleConfig& sc);

// Fine-grid first-order solve used as the numeric reference; with `steps` equal to a
// sampling grid size it reproduces ddim_forward exactly (same discretization).
vec reference_integrate(const Registry& reg, const vec& seed, const Condition& y, int steps,
                        const GuidanceConfig& guidance, const ScheduleConfig& sc);

// Bounded, synchronized, LRU cache of trajectories keyed by (seed, condition, grid,
// guidance). Entries are computed lazily down to the queried time and extended in
// place by later, deeper queries; completed prefixes are never recomputed.
class PathCache {
public:
    explicit PathCache(std::size_t capacity = 64);

    // State and prediction at grid time t (or the terminal 0).
    std::pair<OdeState, vec> get(const Registry& reg, const vec& seed, const Condition& y,
                                 const TimeGrid& grid, const GuidanceConfig& guidance,
                                 const ScheduleConfig& sc, double t);

    // Fully computed path (down to t = 0); the returned object is immutable.
    std::shared_ptr<const OdePath> get_full(const Registry& reg, const vec& seed,
                                            const Condition& y, const TimeGrid& grid,
                                            const GuidanceConfig& guidance,
                                            const ScheduleConfig& sc);

    struct Stats {
        std::size_t hits = 0;        // queries answered from already-computed nodes
        std::size_t misses = 0;      // queries that created a new entry
        std::size_t node_evals = 0;  // oracle evaluations performed
        std::size_t evictions = 0;
    };
    Stats stats() const;
    std::size_t size() const;

private:
    struct Key {
        std::uint64_t seed_hash;
        Condition y;
        std::uint64_t grid_hash;
        double guidance_scale;
        auto operator<=>(const Key&) const = default;
    };
    struct Entry {
        std::shared_ptr<OdePath> path;
        std::list<Key>::iterator lru_it;
    };

    Entry& touch(const Registry& reg, const vec& seed, const Condition& y, const TimeGrid& grid,
                 const GuidanceConfig& guidance);
    void extend_to(Entry& e, const Registry& reg, const ScheduleConfig& sc, double t);

    std::size_t capacity_;
    mutable std::mutex mu_;
    std::map<Key, Entry> entries_;
    std::list<Key> lru_;  // front = most recent
    Stats stats_;
};

}  // namespace dlab
