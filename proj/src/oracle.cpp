#include "dlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dlab {

std::string Condition::str() const {
    switch (tag) {
        case Tag::uncond: return "uncond";
        case Tag::label: return "label:" + std::to_string(a);
        case Tag::view: return "view:" + std::to_string(a) + ":" + std::to_string(b);
    }
    return "?";
}

Condition parse_condition(const std::string& s) {
    if (s == "uncond") return Condition::uncond();
    if (s.rfind("label:", 0) == 0) return Condition::label(std::stoi(s.substr(6)));
    if (s.rfind("view:", 0) == 0) {
        const auto rest = s.substr(5);
        const auto colon = rest.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("bad condition: " + s);
        return Condition::view(std::stoi(rest.substr(0, colon)), std::stoi(rest.substr(colon + 1)));
    }
    throw std::invalid_argument("bad condition: " + s);
}

int Mixture::dim() const {
    return comps.empty() ? 0 : static_cast<int>(comps.front().mu.size());
}

void Mixture::validate() const {
    if (comps.empty()) throw std::invalid_argument("mixture: no components");
    double wsum = 0.0;
    const auto d = comps.front().mu.size();
    for (const auto& c : comps) {
        if (c.mu.size() != d) throw std::invalid_argument("mixture: component dims differ");
        if (!(c.w > 0.0)) throw std::invalid_argument("mixture: weights must be positive");
        if (!(c.s >= 0.0)) throw std::invalid_argument("mixture: scales must be non-negative");
        wsum += c.w;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("mixture: weights sum to " + std::to_string(wsum) + ", expected 1");
}

namespace {

// Per-component log joint densities log(w_k N(x; sqrt(a) mu_k, C_k I)) with
// C_k = a s_k^2 + (1 - a); everything downstream is built from these.
void component_logs(const Mixture& m, const vec& x, double t, const ScheduleConfig& sc,
                    std::vector<double>& logs, std::vector<double>& Cs) {
    const double a = alpha_bar(t, sc);
    const double ra = std::sqrt(a);
    const int K = static_cast<int>(m.comps.size());
    const int d = m.dim();
    if (static_cast<int>(x.size()) != d)
        throw std::invalid_argument("oracle: point dimension " + std::to_string(x.size()) +
                                    " does not match mixture dimension " + std::to_string(d));
    logs.resize(K);
    Cs.resize(K);
    for (int k = 0; k < K; ++k) {
        const auto& c = m.comps[k];
        const double C = a * c.s * c.s + (1.0 - a);
        double q = 0.0;
        for (int i = 0; i < d; ++i) {
            const double diff = x[i] - ra * c.mu[i];
            q += diff * diff;
        }
        Cs[k] = C;
        logs[k] = std::log(c.w) - 0.5 * d * std::log(2.0 * std::numbers::pi * C) - q / (2.0 * C);
    }
}

}  // namespace

vec eps_predict(const Mixture& m, const vec& x, double t, const ScheduleConfig& sc) {
    std::vector<double> logs, Cs;
    component_logs(m, x, t, sc, logs, Cs);
    const double mx = *std::max_element(logs.begin(), logs.end());
    const int K = static_cast<int>(logs.size());
    const int d = m.dim();
    double rsum = 0.0;
    std::vector<double> r(K);
    for (int k = 0; k < K; ++k) {
        r[k] = std::exp(logs[k] - mx);
        rsum += r[k];
    }
    const double a = alpha_bar(t, sc);
    const double ra = std::sqrt(a), rn = std::sqrt(1.0 - a);
    vec e(d, 0.0);
    for (int k = 0; k < K; ++k) {
        const double coeff = rn * (r[k] / rsum) / Cs[k];
        const auto& mu = m.comps[k].mu;
        for (int i = 0; i < d; ++i) e[i] += coeff * (x[i] - ra * mu[i]);
    }
    return e;
}

double log_marginal(const Mixture& m, const vec& x, double t, const ScheduleConfig& sc) {
    std::vector<double> logs, Cs;
    component_logs(m, x, t, sc, logs, Cs);
    const double mx = *std::max_element(logs.begin(), logs.end());
    double s = 0.0;
    for (double l : logs) s += std::exp(l - mx);
    return mx + std::log(s);
}

vec posterior_x0(const Mixture& m, const vec& x, double t, const ScheduleConfig& sc) {
    const double ra = std::sqrt(eff_alpha_bar(t, sc));
    const double sg = eff_sigma(t, sc);
    if (t == 0.0) return x;
    const vec e = eps_predict(m, x, t, sc);
    vec r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] / ra - sg * e[i];
    return r;
}

vec cfg_combine(const vec& eps_u, const vec& eps_c, double scale) {
    check_same_dim(eps_u, eps_c, "cfg_combine");
    vec r(eps_u.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = eps_u[i] + scale * (eps_c[i] - eps_u[i]);
    return r;
}

void Registry::add(const Condition& y, Mixture m) {
    m.validate();
    if (conds_.count(y)) throw std::invalid_argument("registry: duplicate condition " + y.str());
    if (!conds_.empty() && m.dim() != conds_.begin()->second.dim())
        throw std::invalid_argument("registry: mixture dimension differs from existing conditions");
    conds_.emplace(y, std::move(m));
    uncond_cache_.reset();
}

bool Registry::has(const Condition& y) const { return conds_.count(y) > 0; }

const Mixture& Registry::mixture(const Condition& y) const {
    const auto it = conds_.find(y);
    if (it == conds_.end()) throw std::invalid_argument("registry: unknown condition " + y.str());
    return it->second;
}

const Mixture& Registry::unconditional() const {
    if (conds_.empty()) throw std::logic_error("registry: no conditions registered");
    if (!uncond_cache_) {
        Mixture u;
        const double cw = 1.0 / double(conds_.size());
        for (const auto& [y, m] : conds_)
            for (const auto& c : m.comps) u.comps.push_back({c.w * cw, c.mu, c.s});
        uncond_cache_ = std::move(u);
    }
    return *uncond_cache_;
}

std::vector<Condition> Registry::conditions() const {
    std::vector<Condition> r;
    r.reserve(conds_.size());
    for (const auto& [y, m] : conds_) r.push_back(y);
    return r;
}

int Registry::dim() const {
    if (conds_.empty()) throw std::logic_error("registry: no conditions registered");
    return conds_.begin()->second.dim();
}

vec Registry::eps(const vec& x, double t, const Condition& y, const GuidanceConfig& g,
                  const ScheduleConfig& sc) const {
    if (y.tag == Condition::Tag::uncond) return eps_predict(unconditional(), x, t, sc);
    const vec ec = eps_predict(mixture(y), x, t, sc);
    if (g.scale == 1.0) return ec;
    const vec eu = eps_predict(unconditional(), x, t, sc);
    return cfg_combine(eu, ec, g.scale);
}

}  // namespace dlab
