#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlab/ode.hpp"
#include "dlab/oracle.hpp"
#include "dlab/scene.hpp"

namespace dlab {

// The six gradient rules. Each binds exactly one grad_* function below.
enum class Variant { sds, asd, sdi, consistent3d, sampling_dsd, dsd };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
const std::vector<Variant>& all_variants();

// Gradient weight: sigma at the lower-noise evaluation time (clean-terminal), or 1.
enum class WRule { sigma_low, one };

// Noise coefficient for the lower-time reconstruction in grad_dsd: matched to the
// low time (keeps the exact-sampler equivalence), or shared from the high time.
enum class InterpForm { time_matched, shared_high };

struct DistillConfig {
    Variant variant = Variant::dsd;
    int N = 100;                 // optimizer iterations
    int n_ddim = 10;             // sampling grid size
    double lr = -1.0;            // step size; <= 0 selects n_ddim / N
    double t_min = 20.0;         // anneal floor, also anchors the low/high gap rule
    double delta_coeff = 0.1;    // gap = delta_coeff * (t - t_min), clamped at 0
    double cfg_low = 7.5;        // guidance at the lower-noise evaluation
    double cfg_high = 1.0;       // guidance at the higher-noise evaluation
    double cfg_path = 7.5;       // guidance while solving the sampling ODE
    WRule w_rule = WRule::sigma_low;
    InterpForm interp_form = InterpForm::time_matched;
    double diverge_norm = 1e6;   // optimizer abort threshold

    double resolved_lr() const { return lr > 0.0 ? lr : double(n_ddim) / double(N); }
    void validate() const;  // throws on N < 1, n_ddim < 1, bad t_min, non-positive lr
};

double delta_of(double t, const DistillConfig& dcfg);
double weight_of(double t_low, const DistillConfig& dcfg, const ScheduleConfig& sc);

// One gradient evaluation. `grad` is the full update direction (weight included);
// eps_low/eps_high are the two noise vectors whose residual drives it.
struct GradReport {
    vec grad;
    vec eps_low;
    vec eps_high;
    double t_low = 0.0;
    double t_high = 0.0;
};

// Single-draw denoising residual: noise x_pi with a fresh draw, compare the guided
// prediction against that draw. Unweighted.
GradReport grad_sds(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                    const vec& noise, const DistillConfig& dcfg, const ScheduleConfig& sc);

// Two adjacent noisings of x_pi from the same draw, compared across the time gap.
GradReport grad_asd(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                    const vec& noise, const DistillConfig& dcfg, const ScheduleConfig& sc);

// Invert x_pi up to the (snapped) time, then compare a lower-time reconstruction
// against the inversion endpoint's prediction.
GradReport grad_sdi(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                    const TimeGrid& grid, const DistillConfig& dcfg, const ScheduleConfig& sc);

// Like grad_sds but anchored to the run's fixed draw eps_star. Weighted.
GradReport grad_consistent3d(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                             const vec& eps_star, const DistillConfig& dcfg,
                             const ScheduleConfig& sc);

// Pure path-following residual at (t, t + gap) built entirely from the cached
// sampling trajectory; independent of the current image.
GradReport grad_sampling_dsd(const Registry& reg, double t, const Condition& y,
                             const OdePath& path, const DistillConfig& dcfg,
                             const ScheduleConfig& sc);

// Path-following residual with both states reconstructed as interpolations of the
// current image and the path's noise prediction — the correcting variant.
GradReport grad_dsd(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                    const OdePath& path, const DistillConfig& dcfg, const ScheduleConfig& sc);

struct TraceRow {
    int step = 0;     // 1-based iteration
    double t = 0.0;   // time drawn/annealed this iteration
    double grad_norm = 0.0;
    vec x;            // parameter after the update
};

struct RunResult {
    vec final_x;
    vec eps_star;
    std::vector<TraceRow> trace;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int step_, double norm_)
        : std::runtime_error("optimizer diverged at step " + std::to_string(step_) +
                             " (parameter norm " + std::to_string(norm_) + ")"),
          step(step_),
          norm(norm_) {}
    int step;
    double norm;
};

// Gradient-descent loop over one image. Deterministic in run_key. eps_star is always
// drawn (stream purpose eps_star); per-iteration draws use the iteration stream.
// x_init defaults to the path's clean-sample prediction at the top time for the
// path-following variants, zeros otherwise. `cache` (optional) shares trajectories.
RunResult optimize_image(const Registry& reg, const Condition& y, int dim,
                         const DistillConfig& dcfg, const ScheduleConfig& sc,
                         std::uint64_t run_key, PathCache* cache = nullptr,
                         const vec* x_init = nullptr, bool keep_trace = false);

// Same loop over shared scene parameters: each iteration picks a view uniformly,
// renders, evaluates the variant's gradient in view space under the view's
// condition, and backprojects. One eps_star is shared by all views of the run.
RunResult optimize_scene(const ObjectLibrary& lib, const Registry& reg,
                         const DistillConfig& dcfg, const ScheduleConfig& sc,
                         std::uint64_t run_key, PathCache* cache = nullptr,
                         bool keep_trace = false);

}  // namespace dlab
