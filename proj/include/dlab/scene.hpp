#pragma once

#include <cstdint>
#include <vector>

#include "dlab/ode.hpp"
#include "dlab/oracle.hpp"

namespace dlab {

// One linear camera: a d x D projection with orthonormal rows, plus the condition
// under which the oracle models what this camera sees.
struct View {
    int id = 0;
    int d = 0;
    int D = 0;
    std::vector<double> P;  // row-major d x D, P * P^T = I_d
    Condition condition;
};

// P * psi
vec render(const vec& psi, const View& view);
// P^T * g — the exact adjoint of render.
vec backproject(const vec& grad_x, const View& view);

struct SceneSpec {
    int D = 8;               // shared parameter dimension
    int d = 2;               // rendered dimension
    int K = 3;               // ground-truth object count
    int V = 6;               // view count
    double s = 0.25;         // per-mode scale of the view mixtures
    double alpha = 0.8;      // content weight in each view (background gets sqrt(1-alpha^2))
    double gamma_max = 0.15; // per-view in-plane rotation bound (radians)
    double c_scale = 3.5;    // object coordinate scale inside the content subspace
    std::uint64_t seed = 1;  // library draw key
    int max_tries = 500;     // object-separation resampling bound
};

// Ground-truth objects plus the cameras that look at them. All objects live in one
// random d-dimensional content subspace; each view sees a slightly rotated copy of
// that subspace mixed with its own directions from the orthogonal complement, so
// every view separates the objects identically while no two views agree on the
// background. Per-view mixtures (one mode per object, scale s) are registered on
// the given registry as view conditions.
struct ObjectLibrary {
    SceneSpec spec;
    std::vector<View> views;
    std::vector<vec> objects;  // K vectors in R^D
};

// Deterministic in spec.seed. Throws if the object separation (>= 10 s under every
// view) cannot be met within spec.max_tries draws.
ObjectLibrary build_library(const SceneSpec& spec, Registry& reg);

struct DispersionReport {
    bool applicable = false;  // false when K < 2 (no across-object pairs)
    double ratio = 0.0;       // mean within-object / mean across-object seed distance
    double mean_within = 0.0;
    double mean_across = 0.0;
};

// Invert every (object, view) mode center to its seed and compare seed distances
// within one object against distances across objects.
DispersionReport seed_dispersion_study(const ObjectLibrary& lib, const Registry& reg,
                                       const TimeGrid& grid, const ScheduleConfig& sc,
                                       const GuidanceConfig& guidance);

}  // namespace dlab
