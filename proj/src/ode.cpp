#include "dlab/ode.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dlab/rng.hpp"

namespace dlab {

int OdePath::index_of(double t) const {
    for (std::size_t i = 0; i < times.size(); ++i)
        if (std::abs(times[i] - t) <= 1e-9) return static_cast<int>(i);
    throw std::out_of_range("OdePath::index_of: time " + std::to_string(t) + " not on path");
}

const vec& OdePath::final_x() const {
    if (times.empty() || times.back() != 0.0)
        throw std::logic_error("OdePath::final_x: path does not reach t = 0");
    return xs.back();
}

vec ddim_step(const vec& x, double t, double t_next, const vec& eps, const ScheduleConfig& sc) {
    check_same_dim(x, eps, "ddim_step");
    if (t_next == t) return x;
    const double s0 = std::sqrt(eff_alpha_bar(t, sc));
    const double s1 = std::sqrt(eff_alpha_bar(t_next, sc));
    const double dsig = eff_sigma(t_next, sc) - eff_sigma(t, sc);
    vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = s1 * (x[i] / s0 + dsig * eps[i]);
    return out;
}

namespace {

// Shared walk: visit `times` in order starting from `x0` at times[0], evaluating the
// predictor at each node and stepping between consecutive nodes.
void walk(OdePath& path, const Registry& reg, const ScheduleConfig& sc, vec x,
          const std::vector<double>& times) {
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        vec e = reg.eps(x, t, path.y, path.guidance, sc);
        path.times.push_back(t);
        path.xs.push_back(x);
        path.eps.push_back(e);
        if (k + 1 < times.size()) x = ddim_step(x, t, times[k + 1], e, sc);
    }
}

std::vector<double> forward_times(const TimeGrid& grid, double t_stop) {
    std::vector<double> times;
    for (double t : grid.points)
        if (t >= t_stop - 1e-12) times.push_back(t);
    if (t_stop == 0.0) times.push_back(0.0);
    if (times.empty()) throw std::invalid_argument("ddim_forward: t_stop above every grid point");
    return times;
}

}  // namespace

OdePath ddim_forward(const Registry& reg, const vec& seed, const Condition& y,
                     const TimeGrid& grid, const GuidanceConfig& guidance,
                     const ScheduleConfig& sc, double t_stop) {
    if (grid.points.empty()) throw std::invalid_argument("ddim_forward: empty grid");
    OdePath path;
    path.seed = seed;
    path.y = y;
    path.grid = grid;
    path.guidance = guidance;
    walk(path, reg, sc, seed, forward_times(grid, t_stop));
    return path;
}

OdePath ddim_invert(const Registry& reg, const vec& x0, const Condition& y, const TimeGrid& grid,
                    const ScheduleConfig& sc, double t_stop, const GuidanceConfig& guidance) {
    if (!(t_stop >= 0.0 && t_stop <= sc.T))
        throw std::domain_error("ddim_invert: t_stop outside [0, T]");
    std::vector<double> times{0.0};
    for (auto it = grid.points.rbegin(); it != grid.points.rend(); ++it)
        if (*it <= t_stop + 1e-12) times.push_back(*it);
    OdePath path;
    path.seed = x0;
    path.y = y;
    path.grid = grid;
    path.guidance = guidance;
    walk(path, reg, sc, x0, times);
    return path;
}

vec x0_update(const vec& x0_prev, const vec& eps_next, const vec& eps_prev, double t_next,
              const ScheduleConfig& sc) {
    check_same_dim(x0_prev, eps_next, "x0_update");
    check_same_dim(x0_prev, eps_prev, "x0_update");
    const double s = eff_sigma(t_next, sc);
    vec out(x0_prev.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x0_prev[i] - s * (eps_next[i] - eps_prev[i]);
    return out;
}

vec reference_integrate(const Registry& reg, const vec& seed, const Condition& y, int steps,
                        const GuidanceConfig& guidance, const ScheduleConfig& sc) {
    const TimeGrid grid = ddim_grid(steps, sc);
    return ddim_forward(reg, seed, y, grid, guidance, sc, 0.0).final_x();
}

// ---------------------------------------------------------------------------
// PathCache

namespace {

std::uint64_t hash_doubles(const std::vector<double>& v) {
    std::uint64_t h = rng::fnv1a64(v.data(), v.size() * sizeof(double));
    return h ^ rng::splitmix64(v.size());
}

}  // namespace

PathCache::PathCache(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("PathCache: capacity must be positive");
}

PathCache::Entry& PathCache::touch(const Registry& reg, const vec& seed, const Condition& y,
                                   const TimeGrid& grid, const GuidanceConfig& guidance) {
    Key key{hash_doubles(seed), y, hash_doubles(grid.points), guidance.scale};
    auto it = entries_.find(key);
    if (it != entries_.end()) {
        ++stats_.hits;
        lru_.splice(lru_.begin(), lru_, it->second.lru_it);
        return it->second;
    }
    ++stats_.misses;
    if (entries_.size() >= capacity_) {
        entries_.erase(lru_.back());
        lru_.pop_back();
        ++stats_.evictions;
    }
    auto path = std::make_shared<OdePath>();
    path->seed = seed;
    path->y = y;
    path->grid = grid;
    path->guidance = guidance;
    lru_.push_front(key);
    auto [pos, inserted] = entries_.emplace(key, Entry{std::move(path), lru_.begin()});
    (void)inserted;
    (void)reg;
    return pos->second;
}

void PathCache::extend_to(Entry& e, const Registry& reg, const ScheduleConfig& sc, double t) {
    OdePath& path = *e.path;
    const auto& gp = path.grid.points;
    if (path.times.empty()) {
        // First node: the seed at the top of the grid.
        path.times.push_back(gp.front());
        path.xs.push_back(path.seed);
        path.eps.push_back(reg.eps(path.seed, gp.front(), path.y, path.guidance, sc));
        ++stats_.node_evals;
    }
    while (path.times.back() > t + 1e-12) {
        const double cur = path.times.back();
        // Next time: the grid point after `cur`, or the appended clean terminal.
        double next = 0.0;
        for (std::size_t i = 0; i + 1 < gp.size(); ++i)
            if (std::abs(gp[i] - cur) <= 1e-9) {
                next = gp[i + 1];
                break;
            }
        vec x = ddim_step(path.xs.back(), cur, next, path.eps.back(), sc);
        vec eps = reg.eps(x, next, path.y, path.guidance, sc);
        ++stats_.node_evals;
        path.times.push_back(next);
        path.xs.push_back(std::move(x));
        path.eps.push_back(std::move(eps));
    }
}

std::pair<OdeState, vec> PathCache::get(const Registry& reg, const vec& seed, const Condition& y,
                                        const TimeGrid& grid, const GuidanceConfig& guidance,
                                        const ScheduleConfig& sc, double t) {
    if (grid.points.empty()) throw std::invalid_argument("PathCache::get: empty grid");
    std::lock_guard<std::mutex> lock(mu_);
    Entry& e = touch(reg, seed, y, grid, guidance);
    extend_to(e, reg, sc, t);
    const int i = e.path->index_of(t);
    return {OdeState{e.path->times[i], e.path->xs[i]}, e.path->eps[i]};
}

std::shared_ptr<const OdePath> PathCache::get_full(const Registry& reg, const vec& seed,
                                                   const Condition& y, const TimeGrid& grid,
                                                   const GuidanceConfig& guidance,
                                                   const ScheduleConfig& sc) {
    if (grid.points.empty()) throw std::invalid_argument("PathCache::get_full: empty grid");
    std::lock_guard<std::mutex> lock(mu_);
    Entry& e = touch(reg, seed, y, grid, guidance);
    extend_to(e, reg, sc, 0.0);
    return e.path;
}

PathCache::Stats PathCache::stats() const {
    std::lock_guard<std::mutex> lock(mu_);
    return stats_;
}

std::size_t PathCache::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
}

}  // namespace dlab
