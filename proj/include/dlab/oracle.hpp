#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dlab/schedule.hpp"
#include "dlab/vecmath.hpp"

namespace dlab {

// Conditioning tag for the analytic noise-prediction oracle: either the
// unconditional distribution, a labelled prompt, or a (context, view) pair.
struct Condition {
    enum class Tag { uncond, label, view };
    Tag tag = Tag::uncond;
    int a = -1;  // label id, or view context
    int b = -1;  // view id

    static Condition uncond() { return {}; }
    static Condition label(int id) { return {Tag::label, id, -1}; }
    static Condition view(int context, int id) { return {Tag::view, context, id}; }

    bool operator==(const Condition&) const = default;
    auto operator<=>(const Condition&) const = default;
    std::string str() const;
};

Condition parse_condition(const std::string& s);

struct MixtureComponent {
    double w;
    vec mu;
    double s;  // isotropic component scale
};

// Isotropic Gaussian mixture over clean data; all oracle quantities are exact
// closed forms of the noised marginal at time t.
struct Mixture {
    std::vector<MixtureComponent> comps;
    int dim() const;
    void validate() const;  // throws on empty, bad weights, or inconsistent dims
};

// Exact minimum-MSE noise prediction for x at time t.
vec eps_predict(const Mixture& m, const vec& x, double t, const ScheduleConfig& sc);
// Log-density of the noised marginal at (x, t).
double log_marginal(const Mixture& m, const vec& x, double t, const ScheduleConfig& sc);
// Clean-sample (posterior-mean) prediction: x / scale - sigma * eps_predict,
// using clean-terminal coefficients so t = 0 returns x itself.
vec posterior_x0(const Mixture& m, const vec& x, double t, const ScheduleConfig& sc);

struct GuidanceConfig {
    double scale = 1.0;
};

// Guided prediction: eps_u + scale * (eps_c - eps_u).
vec cfg_combine(const vec& eps_u, const vec& eps_c, double scale);

// Holds the per-condition mixtures. The unconditional distribution is the
// equal-weight union of everything registered, so a registry with a single
// condition makes guidance an exact no-op.
class Registry {
public:
    void add(const Condition& y, Mixture m);
    bool has(const Condition& y) const;
    const Mixture& mixture(const Condition& y) const;
    const Mixture& unconditional() const;
    std::vector<Condition> conditions() const;
    int dim() const;

    // Guided noise prediction for condition y at guidance.scale.
    vec eps(const vec& x, double t, const Condition& y, const GuidanceConfig& g,
            const ScheduleConfig& sc) const;

private:
    std::map<Condition, Mixture> conds_;
    mutable std::optional<Mixture> uncond_cache_;
};

}  // namespace dlab
