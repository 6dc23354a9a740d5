#pragma once

#include <vector>

#include "dlab/oracle.hpp"

namespace dlab {

// Mean pairwise Euclidean distance over all unordered pairs. Parallel over the
// first index with per-index partial sums combined in index order, so the result
// is bit-identical to the serial reference at any thread count.
double pairwise_diversity(const std::vector<vec>& samples);
double pairwise_diversity_serial(const std::vector<vec>& samples);

// Number of modes with at least one sample within radius tau.
int mode_coverage(const std::vector<vec>& samples, const std::vector<vec>& modes, double tau);

// Mean negative log-density of the samples under the condition's clean-data mixture.
double fidelity_nll(const std::vector<vec>& samples, const Registry& reg, const Condition& y,
                    const ScheduleConfig& sc);

// Exact 2-Wasserstein distance between equal-size sample sets (<= 256 each):
// sqrt of the minimum-assignment mean squared distance.
double wasserstein2(const std::vector<vec>& a, const std::vector<vec>& b);

}  // namespace dlab
