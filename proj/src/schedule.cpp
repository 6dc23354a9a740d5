#include "dlab/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dlab {

namespace {

void check_time(double t, const ScheduleConfig& sc, const char* where) {
    if (!(t >= 0.0 && t <= sc.T))
        throw std::domain_error(std::string(where) + ": time " + std::to_string(t) +
                                " outside [0, " + std::to_string(sc.T) + "]");
}

}  // namespace

double alpha_bar(double t, const ScheduleConfig& sc) {
    check_time(t, sc, "alpha_bar");
    const double c = std::cos((t / sc.T) * (std::numbers::pi / 2.0));
    return sc.clamp_eps + (1.0 - 2.0 * sc.clamp_eps) * c * c;
}

double sigma(double t, const ScheduleConfig& sc) {
    const double a = alpha_bar(t, sc);
    return std::sqrt(1.0 - a) / std::sqrt(a);
}

double scale(double t, const ScheduleConfig& sc) { return std::sqrt(alpha_bar(t, sc)); }

double eff_alpha_bar(double t, const ScheduleConfig& sc) {
    return t == 0.0 ? 1.0 : alpha_bar(t, sc);
}

double eff_sigma(double t, const ScheduleConfig& sc) { return t == 0.0 ? 0.0 : sigma(t, sc); }

TimeGrid ddim_grid(int n, const ScheduleConfig& sc) {
    if (n < 1) throw std::invalid_argument("ddim_grid: need at least one step");
    TimeGrid g;
    g.points.reserve(n);
    for (int j = 0; j < n; ++j) g.points.push_back(sc.T * (1.0 - double(j) / n));
    return g;
}

double snap_to_ddim_grid(double t, const TimeGrid& grid) {
    if (grid.points.empty()) throw std::invalid_argument("snap_to_ddim_grid: empty grid");
    // points are descending; walk from the smallest up.
    for (auto it = grid.points.rbegin(); it != grid.points.rend(); ++it)
        if (*it >= t - 1e-12) return *it;
    return grid.points.front();
}

double anneal_time(int i, int N, const ScheduleConfig& sc, double t_min) {
    if (N < 1) throw std::invalid_argument("anneal_time: N must be >= 1");
    return std::max(sc.T * (1.0 - double(i) / N), t_min);
}

}  // namespace dlab
