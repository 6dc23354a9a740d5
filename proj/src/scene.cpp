#include "dlab/scene.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dlab/rng.hpp"

namespace dlab {

vec render(const vec& psi, const View& view) {
    if (static_cast<int>(psi.size()) != view.D)
        throw std::invalid_argument("render: psi dimension " + std::to_string(psi.size()) +
                                    " does not match view D=" + std::to_string(view.D));
    vec out(view.d, 0.0);
    for (int r = 0; r < view.d; ++r) {
        double s = 0.0;
        for (int c = 0; c < view.D; ++c) s += view.P[r * view.D + c] * psi[c];
        out[r] = s;
    }
    return out;
}

vec backproject(const vec& grad_x, const View& view) {
    if (static_cast<int>(grad_x.size()) != view.d)
        throw std::invalid_argument("backproject: gradient dimension " +
                                    std::to_string(grad_x.size()) + " does not match view d=" +
                                    std::to_string(view.d));
    vec out(view.D, 0.0);
    for (int r = 0; r < view.d; ++r)
        for (int c = 0; c < view.D; ++c) out[c] += view.P[r * view.D + c] * grad_x[r];
    return out;
}

namespace {

// Haar-like random orthonormal columns: QR of a Gaussian matrix with the column
// signs fixed by R's diagonal so the result is unique.
Eigen::MatrixXd orthonormal_cols(rng::Stream& st, int n, int k) {
    Eigen::MatrixXd A(n, k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) A(i, j) = st.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
    const Eigen::MatrixXd& QR = qr.matrixQR();
    for (int j = 0; j < k; ++j)
        if (QR(j, j) < 0.0) Q.col(j) = -Q.col(j);
    return Q;
}

void check_spec(const SceneSpec& sp) {
    if (sp.d < 1 || sp.D < sp.d) throw std::invalid_argument("scene: need D >= d >= 1");
    if (sp.K < 1 || sp.V < 1) throw std::invalid_argument("scene: need K >= 1 and V >= 1");
    if (!(sp.s > 0.0)) throw std::invalid_argument("scene: mode scale s must be positive");
    if (!(sp.alpha > 0.0 && sp.alpha <= 1.0))
        throw std::invalid_argument("scene: content weight alpha must be in (0, 1]");
    if (sp.alpha < 1.0 && sp.D == sp.d)
        throw std::invalid_argument("scene: background mixing (alpha < 1) needs D > d");
    if (!(sp.c_scale > 0.0)) throw std::invalid_argument("scene: c_scale must be positive");
    if (sp.max_tries < 1) throw std::invalid_argument("scene: max_tries must be >= 1");
}

}  // namespace

ObjectLibrary build_library(const SceneSpec& spec, Registry& reg) {
    check_spec(spec);
    const int D = spec.D, d = spec.d, K = spec.K, V = spec.V;
    rng::Stream st(spec.seed, rng::Purpose::library);

    const Eigen::MatrixXd U = orthonormal_cols(st, D, D);
    const Eigen::MatrixXd E = U.leftCols(d);       // content subspace
    const Eigen::MatrixXd B = U.rightCols(D - d);  // complement
    const double beta = std::sqrt(std::max(0.0, 1.0 - spec.alpha * spec.alpha));

    // Background directions come from whole random frames of the complement, consumed
    // d columns at a time, so the stacked views cover the complement evenly.
    std::vector<Eigen::MatrixXd> frames;
    const int comp = D - d;
    if (beta > 0.0) {
        const int nfr = (V * d + comp - 1) / comp;
        frames.reserve(nfr);
        for (int f = 0; f < nfr; ++f) frames.push_back(orthonormal_cols(st, comp, comp));
    }

    ObjectLibrary lib;
    lib.spec = spec;
    const int ctx = static_cast<int>(spec.seed % 1000000007ULL);
    for (int v = 0; v < V; ++v) {
        const double gamma = st.uniform(-spec.gamma_max, spec.gamma_max);
        Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(d, d);
        if (d >= 2) {
            rot(0, 0) = std::cos(gamma);
            rot(0, 1) = -std::sin(gamma);
            rot(1, 0) = std::sin(gamma);
            rot(1, 1) = std::cos(gamma);
        }
        Eigen::MatrixXd P = spec.alpha * rot * E.transpose();
        if (beta > 0.0) {
            const int idx = v * d;
            const Eigen::MatrixXd& fr = frames[idx / comp];
            Eigen::MatrixXd W(comp, d);
            for (int j = 0; j < d; ++j) W.col(j) = fr.col((idx + j) % comp);
            P += beta * W.transpose() * B.transpose();
        }
        const double orth_err = (P * P.transpose() - Eigen::MatrixXd::Identity(d, d))
                                    .cwiseAbs()
                                    .maxCoeff();
        if (orth_err > 1e-10)
            throw std::logic_error("scene: view projection rows not orthonormal (err " +
                                   std::to_string(orth_err) + ")");
        View view;
        view.id = v;
        view.d = d;
        view.D = D;
        view.P.resize(d * D);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < D; ++c) view.P[r * D + c] = P(r, c);
        view.condition = Condition::view(ctx, v);
        lib.views.push_back(std::move(view));
    }

    // Objects inside the content subspace, resampled until every pair is separated by
    // >= 10 s under every view. View distances equal alpha * content distance exactly
    // (rotations preserve norms; the background term annihilates content vectors), so
    // one content-space check covers all views.
    Eigen::MatrixXd c(K, d);
    bool ok = false;
    for (int attempt = 0; attempt < spec.max_tries && !ok; ++attempt) {
        for (int k = 0; k < K; ++k)
            for (int j = 0; j < d; ++j) c(k, j) = spec.c_scale * st.normal();
        ok = true;
        for (int i = 0; i < K && ok; ++i)
            for (int j = i + 1; j < K && ok; ++j)
                if (spec.alpha * (c.row(i) - c.row(j)).norm() < 10.0 * spec.s) ok = false;
    }
    if (!ok)
        throw std::runtime_error("scene: object separation >= 10 s unachievable within " +
                                 std::to_string(spec.max_tries) + " draws");
    for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd psi = E * c.row(k).transpose();
        lib.objects.emplace_back(psi.data(), psi.data() + D);
    }

    for (int v = 0; v < V; ++v) {
        Mixture m;
        for (int k = 0; k < K; ++k) {
            MixtureComponent mc;
            mc.w = 1.0 / K;
            mc.mu = render(lib.objects[k], lib.views[v]);
            mc.s = spec.s;
            m.comps.push_back(std::move(mc));
        }
        reg.add(lib.views[v].condition, std::move(m));
    }

    // Enforce the separation invariant literally, per view.
    for (int v = 0; v < V; ++v) {
        std::vector<vec> modes;
        for (int k = 0; k < K; ++k) modes.push_back(render(lib.objects[k], lib.views[v]));
        for (int i = 0; i < K; ++i)
            for (int j = i + 1; j < K; ++j)
                if (dist2(modes[i], modes[j]) < 10.0 * spec.s - 1e-9)
                    throw std::logic_error("scene: view-space separation invariant violated");
    }
    return lib;
}

DispersionReport seed_dispersion_study(const ObjectLibrary& lib, const Registry& reg,
                                       const TimeGrid& grid, const ScheduleConfig& sc,
                                       const GuidanceConfig& guidance) {
    const int K = static_cast<int>(lib.objects.size());
    const int V = static_cast<int>(lib.views.size());
    DispersionReport rep;
    if (K < 2) return rep;  // no across-object pairs to compare against

    std::vector<vec> seeds;            // indexed k * V + v
    for (int k = 0; k < K; ++k)
        for (int v = 0; v < V; ++v) {
            const vec x0 = render(lib.objects[k], lib.views[v]);
            const OdePath inv =
                ddim_invert(reg, x0, lib.views[v].condition, grid, sc, sc.T, guidance);
            if (!all_finite(inv.xs.back()))
                throw std::runtime_error("seed_dispersion_study: inversion diverged");
            seeds.push_back(inv.xs.back());
        }

    double within = 0.0, across = 0.0;
    int nw = 0, na = 0;
    const int n = K * V;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double dd = dist2(seeds[i], seeds[j]);
            if (i / V == j / V) {
                within += dd;
                ++nw;
            } else {
                across += dd;
                ++na;
            }
        }
    rep.applicable = true;
    rep.mean_within = nw ? within / nw : 0.0;
    rep.mean_across = across / na;
    rep.ratio = rep.mean_within / rep.mean_across;
    return rep;
}

}  // namespace dlab
