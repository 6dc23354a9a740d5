#pragma once

#include <vector>

namespace dlab {

// Variance-preserving cosine noise schedule on continuous time t in [0, T].
// The signal fraction is clamped away from {0, 1} by an affine rescale so the
// endpoints are exact and the map stays strictly monotone.
struct ScheduleConfig {
    double T = 1000.0;
    double clamp_eps = 1e-4;
    double t_min = 20.0;  // optimizer-time floor; also anchors the low/high eval gap
};

// Signal fraction; alpha_bar(0) = 1 - clamp_eps, alpha_bar(T) = clamp_eps, strictly decreasing.
double alpha_bar(double t, const ScheduleConfig& sc);
// Noise-to-signal ratio sqrt(1 - alpha_bar) / sqrt(alpha_bar).
double sigma(double t, const ScheduleConfig& sc);
// Signal scale sqrt(alpha_bar).
double scale(double t, const ScheduleConfig& sc);

// Clean-terminal coefficients used by trajectory code: at exactly t = 0 the state is
// treated as fully denoised (scale 1, noise 0), so a step to 0 lands on the current
// clean-sample prediction instead of a residually-noised point.
double eff_alpha_bar(double t, const ScheduleConfig& sc);
double eff_sigma(double t, const ScheduleConfig& sc);

// Strictly descending times in (0, T].
struct TimeGrid {
    std::vector<double> points;
    int size() const { return static_cast<int>(points.size()); }
};

// {T*(1 - j/n) : j = 0..n-1}, i.e. T down to T/n.
TimeGrid ddim_grid(int n, const ScheduleConfig& sc);

// Smallest grid point >= t (t <= T expected; t above T returns T).
double snap_to_ddim_grid(double t, const TimeGrid& grid);

// Linear anneal from T toward 0 over N steps, floored at t_min.
double anneal_time(int i, int N, const ScheduleConfig& sc, double t_min);

}  // namespace dlab
