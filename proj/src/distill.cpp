#include "dlab/distill.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "dlab/rng.hpp"

namespace dlab {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::sds: return "sds";
        case Variant::asd: return "asd";
        case Variant::sdi: return "sdi";
        case Variant::consistent3d: return "consistent3d";
        case Variant::sampling_dsd: return "sampling_dsd";
        case Variant::dsd: return "dsd";
    }
    return "?";
}

Variant parse_variant(const std::string& s) {
    for (Variant v : all_variants())
        if (to_string(v) == s) return v;
    throw std::invalid_argument("unknown variant: " + s);
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> all = {Variant::sds,          Variant::asd,
                                             Variant::sdi,          Variant::consistent3d,
                                             Variant::sampling_dsd, Variant::dsd};
    return all;
}

void DistillConfig::validate() const {
    if (N < 1) throw std::invalid_argument("distill: N must be >= 1");
    if (n_ddim < 1) throw std::invalid_argument("distill: n_ddim must be >= 1");
    if (!(t_min >= 0.0)) throw std::invalid_argument("distill: t_min must be >= 0");
    if (!(resolved_lr() > 0.0)) throw std::invalid_argument("distill: lr must be positive");
    if (!(delta_coeff >= 0.0)) throw std::invalid_argument("distill: delta_coeff must be >= 0");
    if (!(diverge_norm > 0.0)) throw std::invalid_argument("distill: diverge_norm must be positive");
}

double delta_of(double t, const DistillConfig& dcfg) {
    return std::max(dcfg.delta_coeff * (t - dcfg.t_min), 0.0);
}

double weight_of(double t_low, const DistillConfig& dcfg, const ScheduleConfig& sc) {
    return dcfg.w_rule == WRule::sigma_low ? eff_sigma(t_low, sc) : 1.0;
}

namespace {

// sqrt(a) * x + coeff * e
vec mix_state(double a, const vec& x, double coeff, const vec& e) {
    vec r(x.size());
    const double ra = std::sqrt(a);
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = ra * x[i] + coeff * e[i];
    return r;
}

}  // namespace

GradReport grad_sds(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                    const vec& noise, const DistillConfig& dcfg, const ScheduleConfig& sc) {
    check_same_dim(x_pi, noise, "grad_sds");
    const double a = alpha_bar(t, sc);
    const vec xt = mix_state(a, x_pi, std::sqrt(1.0 - a), noise);
    GradReport rep;
    rep.eps_low = reg.eps(xt, t, y, {dcfg.cfg_low}, sc);
    rep.eps_high = noise;
    rep.t_low = rep.t_high = t;
    rep.grad = sub(rep.eps_low, noise);
    return rep;
}

GradReport grad_asd(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                    const vec& noise, const DistillConfig& dcfg, const ScheduleConfig& sc) {
    check_same_dim(x_pi, noise, "grad_asd");
    const double th = std::min(t + delta_of(t, dcfg), sc.T);
    const double a1 = alpha_bar(t, sc), a2 = alpha_bar(th, sc);
    const vec x1 = mix_state(a1, x_pi, std::sqrt(1.0 - a1), noise);
    const vec x2 = mix_state(a2, x_pi, std::sqrt(1.0 - a2), noise);
    GradReport rep;
    rep.eps_low = reg.eps(x1, t, y, {dcfg.cfg_low}, sc);
    rep.eps_high = reg.eps(x2, th, y, {dcfg.cfg_high}, sc);
    rep.t_low = t;
    rep.t_high = th;
    rep.grad = scaled(sub(rep.eps_low, rep.eps_high), weight_of(t, dcfg, sc));
    return rep;
}

GradReport grad_sdi(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                    const TimeGrid& grid, const DistillConfig& dcfg, const ScheduleConfig& sc) {
    const double tg = snap_to_ddim_grid(t, grid);
    const OdePath inv = ddim_invert(reg, x_pi, y, grid, sc, tg, {dcfg.cfg_path});
    const vec& et = inv.eps.back();
    if (!all_finite(inv.xs.back()) || !all_finite(et))
        throw std::runtime_error("grad_sdi: inversion produced non-finite state");
    const double tl = std::max(tg - delta_of(tg, dcfg), 0.0);
    const double al = eff_alpha_bar(tl, sc);
    const vec xl = mix_state(al, x_pi, std::sqrt(1.0 - al), et);
    GradReport rep;
    rep.eps_low = reg.eps(xl, tl, y, {dcfg.cfg_low}, sc);
    rep.eps_high = et;
    rep.t_low = tl;
    rep.t_high = tg;
    rep.grad = scaled(sub(rep.eps_low, et), weight_of(tl, dcfg, sc));
    return rep;
}

GradReport grad_consistent3d(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                             const vec& eps_star, const DistillConfig& dcfg,
                             const ScheduleConfig& sc) {
    check_same_dim(x_pi, eps_star, "grad_consistent3d");
    const double a = alpha_bar(t, sc);
    const vec xt = mix_state(a, x_pi, std::sqrt(1.0 - a), eps_star);
    GradReport rep;
    rep.eps_low = reg.eps(xt, t, y, {dcfg.cfg_low}, sc);
    rep.eps_high = eps_star;
    rep.t_low = rep.t_high = t;
    rep.grad = scaled(sub(rep.eps_low, eps_star), weight_of(t, dcfg, sc));
    return rep;
}

GradReport grad_sampling_dsd(const Registry& reg, double t, const Condition& y,
                             const OdePath& path, const DistillConfig& dcfg,
                             const ScheduleConfig& sc) {
    const double th = snap_to_ddim_grid(std::min(t + delta_of(t, dcfg), sc.T), path.grid);
    const int i = path.index_of(th);
    const vec& xh = path.xs[i];
    const vec& eh = path.eps[i];
    // the path's clean-sample prediction at the higher time
    const double rah = std::sqrt(eff_alpha_bar(th, sc)), sgh = eff_sigma(th, sc);
    vec x0h(xh.size());
    for (std::size_t k = 0; k < xh.size(); ++k) x0h[k] = xh[k] / rah - sgh * eh[k];
    const double tl = t;
    const double al = eff_alpha_bar(tl, sc);
    const vec xl = mix_state(al, x0h, std::sqrt(1.0 - al), eh);
    GradReport rep;
    rep.eps_low = reg.eps(xl, tl, y, {dcfg.cfg_low}, sc);
    rep.eps_high = eh;
    rep.t_low = tl;
    rep.t_high = th;
    rep.grad = scaled(sub(rep.eps_low, eh), weight_of(tl, dcfg, sc));
    return rep;
}

GradReport grad_dsd(const Registry& reg, const vec& x_pi, double t, const Condition& y,
                    const OdePath& path, const DistillConfig& dcfg, const ScheduleConfig& sc) {
    const double th = snap_to_ddim_grid(std::min(t + delta_of(t, dcfg), sc.T), path.grid);
    const int i = path.index_of(th);
    const vec& eh = path.eps[i];
    check_same_dim(x_pi, eh, "grad_dsd");
    const double tl = t;
    const double al = eff_alpha_bar(tl, sc), ah = eff_alpha_bar(th, sc);
    const double lo_coeff = dcfg.interp_form == InterpForm::time_matched
                                ? std::sqrt(1.0 - al)
                                : std::sqrt(1.0 - ah);
    const vec xhat_h = mix_state(ah, x_pi, std::sqrt(1.0 - ah), eh);
    const vec xhat_l = mix_state(al, x_pi, lo_coeff, eh);
    GradReport rep;
    rep.eps_low = reg.eps(xhat_l, tl, y, {dcfg.cfg_low}, sc);
    rep.eps_high = reg.eps(xhat_h, th, y, {dcfg.cfg_high}, sc);
    rep.t_low = tl;
    rep.t_high = th;
    rep.grad = scaled(sub(rep.eps_low, rep.eps_high), weight_of(tl, dcfg, sc));
    return rep;
}

namespace {

bool path_following(Variant v) { return v == Variant::sampling_dsd || v == Variant::dsd; }

std::shared_ptr<const OdePath> obtain_path(const Registry& reg, const vec& seed,
                                           const Condition& y, const TimeGrid& grid,
                                           const GuidanceConfig& g, const ScheduleConfig& sc,
                                           PathCache* cache) {
    if (cache) return cache->get_full(reg, seed, y, grid, g, sc);
    return std::make_shared<OdePath>(ddim_forward(reg, seed, y, grid, g, sc, 0.0));
}

// clean-sample prediction from the path's top node (the default starting image)
vec path_top_x0(const OdePath& path, const ScheduleConfig& sc) {
    const double t = path.times.front();
    const double ra = std::sqrt(alpha_bar(t, sc)), sg = sigma(t, sc);
    vec r(path.xs.front().size());
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = path.xs.front()[i] / ra - sg * path.eps.front()[i];
    return r;
}

void check_divergence(const vec& x, int step, double bound) {
    const double n = norm2(x);
    if (!all_finite(x) || n > bound) throw DivergenceError(step, n);
}

}  // namespace

RunResult optimize_image(const Registry& reg, const Condition& y, int dim,
                         const DistillConfig& dcfg, const ScheduleConfig& sc,
                         std::uint64_t run_key, PathCache* cache, const vec* x_init,
                         bool keep_trace) {
    dcfg.validate();
    rng::Stream star_stream(run_key, rng::Purpose::eps_star);
    const vec eps_star = star_stream.normal_vec(dim);

    const TimeGrid grid = ddim_grid(dcfg.n_ddim, sc);
    std::shared_ptr<const OdePath> path;
    if (path_following(dcfg.variant))
        path = obtain_path(reg, eps_star, y, grid, {dcfg.cfg_path}, sc, cache);

    vec x = x_init ? *x_init
                   : (path_following(dcfg.variant) ? path_top_x0(*path, sc) : vec(dim, 0.0));
    if (static_cast<int>(x.size()) != dim)
        throw std::invalid_argument("optimize_image: x_init dimension mismatch");

    RunResult res;
    res.eps_star = eps_star;
    const double lr = dcfg.resolved_lr();
    rng::Stream it_stream(run_key, rng::Purpose::iteration);
    for (int i = 1; i <= dcfg.N; ++i) {
        const bool uniform_t = dcfg.variant == Variant::sds || dcfg.variant == Variant::asd;
        const double t = uniform_t ? it_stream.uniform(1.0, sc.T)
                                   : anneal_time(i, dcfg.N, sc, dcfg.t_min);
        GradReport rep;
        switch (dcfg.variant) {
            case Variant::sds:
                rep = grad_sds(reg, x, t, y, it_stream.normal_vec(dim), dcfg, sc);
                break;
            case Variant::asd:
                rep = grad_asd(reg, x, t, y, it_stream.normal_vec(dim), dcfg, sc);
                break;
            case Variant::sdi:
                rep = grad_sdi(reg, x, t, y, grid, dcfg, sc);
                break;
            case Variant::consistent3d:
                rep = grad_consistent3d(reg, x, t, y, eps_star, dcfg, sc);
                break;
            case Variant::sampling_dsd:
                rep = grad_sampling_dsd(reg, t, y, *path, dcfg, sc);
                break;
            case Variant::dsd:
                rep = grad_dsd(reg, x, t, y, *path, dcfg, sc);
                break;
        }
        x = add_scaled(x, -lr, rep.grad);
        check_divergence(x, i, dcfg.diverge_norm);
        if (keep_trace) res.trace.push_back({i, t, norm2(rep.grad), x});
    }
    res.final_x = std::move(x);
    return res;
}

RunResult optimize_scene(const ObjectLibrary& lib, const Registry& reg,
                         const DistillConfig& dcfg, const ScheduleConfig& sc,
                         std::uint64_t run_key, PathCache* cache, bool keep_trace) {
    dcfg.validate();
    const int V = static_cast<int>(lib.views.size());
    const int d = lib.spec.d, D = lib.spec.D;
    rng::Stream star_stream(run_key, rng::Purpose::eps_star);
    const vec eps_star = star_stream.normal_vec(d);

    const TimeGrid grid = ddim_grid(dcfg.n_ddim, sc);
    std::vector<std::shared_ptr<const OdePath>> paths;
    if (path_following(dcfg.variant))
        for (int v = 0; v < V; ++v)
            paths.push_back(obtain_path(reg, eps_star, lib.views[v].condition, grid,
                                        {dcfg.cfg_path}, sc, cache));

    RunResult res;
    res.eps_star = eps_star;
    vec psi(D, 0.0);
    const double lr = dcfg.resolved_lr();
    rng::Stream it_stream(run_key, rng::Purpose::iteration);
    for (int i = 1; i <= dcfg.N; ++i) {
        const int v = static_cast<int>(it_stream.index(static_cast<std::uint32_t>(V)));
        const View& view = lib.views[v];
        const bool uniform_t = dcfg.variant == Variant::sds || dcfg.variant == Variant::asd;
        const double t = uniform_t ? it_stream.uniform(1.0, sc.T)
                                   : anneal_time(i, dcfg.N, sc, dcfg.t_min);
        const vec x_pi = render(psi, view);
        GradReport rep;
        switch (dcfg.variant) {
            case Variant::sds:
                rep = grad_sds(reg, x_pi, t, view.condition, it_stream.normal_vec(d), dcfg, sc);
                break;
            case Variant::asd:
                rep = grad_asd(reg, x_pi, t, view.condition, it_stream.normal_vec(d), dcfg, sc);
                break;
            case Variant::sdi:
                rep = grad_sdi(reg, x_pi, t, view.condition, grid, dcfg, sc);
                break;
            case Variant::consistent3d:
                rep = grad_consistent3d(reg, x_pi, t, view.condition, eps_star, dcfg, sc);
                break;
            case Variant::sampling_dsd:
                rep = grad_sampling_dsd(reg, t, view.condition, *paths[v], dcfg, sc);
                break;
            case Variant::dsd:
                rep = grad_dsd(reg, x_pi, t, view.condition, *paths[v], dcfg, sc);
                break;
        }
        psi = add_scaled(psi, -lr, backproject(rep.grad, view));
        check_divergence(psi, i, dcfg.diverge_norm);
        if (keep_trace) res.trace.push_back({i, t, norm2(rep.grad), psi});
    }
    res.final_x = std::move(psi);
    return res;
}

}  // namespace dlab
