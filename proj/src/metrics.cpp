#include "dlab/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dlab {

namespace {

void check_samples(const std::vector<vec>& samples, std::size_t min_count, const char* where) {
    if (samples.size() < min_count)
        throw std::invalid_argument(std::string(where) + ": need at least " +
                                    std::to_string(min_count) + " samples");
    for (const auto& s : samples)
        if (s.size() != samples.front().size())
            throw std::invalid_argument(std::string(where) + ": sample dimensions differ");
}

}  // namespace

double pairwise_diversity(const std::vector<vec>& samples) {
    check_samples(samples, 2, "pairwise_diversity");
    const int n = static_cast<int>(samples.size());
    std::vector<double> partial(n, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = i + 1; j < n; ++j) acc += dist2(samples[i], samples[j]);
        partial[i] = acc;
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += partial[i];
    return total / (0.5 * n * (n - 1));
}

double pairwise_diversity_serial(const std::vector<vec>& samples) {
    check_samples(samples, 2, "pairwise_diversity");
    const int n = static_cast<int>(samples.size());
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = i + 1; j < n; ++j) acc += dist2(samples[i], samples[j]);
        total += acc;
    }
    return total / (0.5 * n * (n - 1));
}

int mode_coverage(const std::vector<vec>& samples, const std::vector<vec>& modes, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("mode_coverage: tau must be positive");
    check_samples(samples, 1, "mode_coverage");
    int covered = 0;
    for (const auto& m : modes)
        for (const auto& s : samples)
            if (dist2(s, m) <= tau) {
                ++covered;
                break;
            }
    return covered;
}

double fidelity_nll(const std::vector<vec>& samples, const Registry& reg, const Condition& y,
                    const ScheduleConfig& sc) {
    check_samples(samples, 1, "fidelity_nll");
    const Mixture& m =
        y.tag == Condition::Tag::uncond ? reg.unconditional() : reg.mixture(y);
    double total = 0.0;
    for (const auto& s : samples) total -= log_marginal(m, s, 0.0, sc);
    return total / double(samples.size());
}

namespace {

// Exact minimum-cost perfect assignment (shortest augmenting path with dual
// potentials, O(n^3)). Returns the summed cost of the optimal assignment.
double min_cost_assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j)
                if (!used[j]) {
                    const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += cost[match[j] - 1][j - 1];
    return total;
}

}  // namespace

double wasserstein2(const std::vector<vec>& a, const std::vector<vec>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("wasserstein2: sample sets must have equal size");
    if (a.empty()) throw std::invalid_argument("wasserstein2: empty sample sets");
    if (a.size() > 256)
        throw std::invalid_argument("wasserstein2: exact assignment limited to 256 samples");
    check_samples(a, 1, "wasserstein2");
    check_samples(b, 1, "wasserstein2");
    if (a.front().size() != b.front().size())
        throw std::invalid_argument("wasserstein2: sample dimensions differ between sets");
    const int n = static_cast<int>(a.size());
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double d = dist2(a[i], b[j]);
            cost[i][j] = d * d;
        }
    return std::sqrt(min_cost_assignment(cost) / n);
}

}  // namespace dlab
