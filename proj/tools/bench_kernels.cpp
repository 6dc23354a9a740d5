// Timing comparison of the OpenMP kernels against their serial references, plus
// a sweep-level wall-clock check. Results must match bitwise at any thread count;
// this tool reports the speedups actually obtained on the current machine.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dlab/harness.hpp"
#include "dlab/metrics.hpp"
#include "dlab/rng.hpp"

using namespace dlab;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_ms();
        f();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

std::vector<vec> random_set(int n, int dim) {
    rng::Stream s(rng::run_key(0xbe7c, n), rng::Purpose::generic);
    std::vector<vec> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(s.normal_vec(dim));
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kSweepCfg = R"([schedule]
T = 1000
t_min = 20

[mixture pair]
component = 0.5, 2.0, 0.1
component = 0.5, -2.0, 0.1

[distill]
variants = sds, asd, sdi, consistent3d, sampling_dsd, dsd
N = 200
n_ddim = 10
lr = 0.05

[sweep]
seeds = 0..31
)";

}  // namespace

int main() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d (hardware %d)\n\n", omp_get_max_threads(), hw);
#else
    std::printf("built without OpenMP; parallel paths run serially (hardware %d)\n\n", hw);
#endif

    std::printf("mean pairwise distance, dim 8 (best of 5)\n");
    std::printf("%8s %12s %12s %9s %8s\n", "n", "serial ms", "parallel ms", "speedup",
                "match");
    for (int n : {256, 1024, 4096}) {
        const auto samples = random_set(n, 8);
        double serial_val = 0.0, parallel_val = 0.0;
        const double ts =
            time_best_of(5, [&] { serial_val = pairwise_diversity_serial(samples); });
        const double tp = time_best_of(5, [&] { parallel_val = pairwise_diversity(samples); });
        std::printf("%8d %12.3f %12.3f %8.2fx %8s\n", n, ts, tp, ts / tp,
                    serial_val == parallel_val ? "exact" : "DIFFERS");
    }

    std::printf("\nfull sweep, 6 variants x 32 seeds (N=200 steps each)\n");
    const ExperimentConfig cfg = parse_config(kSweepCfg);
    namespace fs = std::filesystem;
    const fs::path base = "/tmp/dlab_bench_sweep";
    fs::remove_all(base);
    const double t1 = now_ms();
    const SweepResult r1 = run_sweep(cfg, SweepMode::image, (base / "p1").string(), 1);
    const double ms1 = now_ms() - t1;
    const double tn = now_ms();
    const SweepResult rn = run_sweep(cfg, SweepMode::image, (base / "pN").string(), hw);
    const double msn = now_ms() - tn;
    const bool same =
        slurp(base / "p1" / "finals.csv") == slurp(base / "pN" / "finals.csv");
    std::printf("%8s %12s %12s %9s %8s\n", "threads", "", "wall ms", "speedup", "match");
    std::printf("%8d %12s %12.1f %9s %8s\n", 1, "", ms1, "", "");
    std::printf("%8d %12s %12.1f %8.2fx %8s\n", hw, "", msn, ms1 / msn,
                same ? "exact" : "DIFFERS");
    std::printf("runs: %zu ok=%s\n", r1.records.size(),
                (r1.all_ok && rn.all_ok) ? "yes" : "NO");
    fs::remove_all(base);
    return same && r1.all_ok && rn.all_ok ? 0 : 1;
}
