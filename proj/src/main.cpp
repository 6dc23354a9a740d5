// distill-lab: command-line driver for the score-distillation laboratory.
//
// Exit codes: 0 success, 1 run or metric failure, 2 configuration/usage error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dlab/harness.hpp"
#include "dlab/metrics.hpp"
#include "dlab/ode.hpp"
#include "dlab/rng.hpp"

namespace fs = std::filesystem;
using namespace dlab;

namespace {

struct CommonOpts {
    std::string config;
    std::string out;
    std::string seed_range;
    int parallel = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_config = true) {
    auto* c = cmd->add_option("--config", o.config, "experiment config file");
    if (need_config) c->required();
    cmd->add_option("--out", o.out, "output directory (overrides [output] dir)");
    cmd->add_option("--seed-range", o.seed_range, "a..b inclusive (overrides [sweep] seeds)");
    cmd->add_option("--parallel", o.parallel, "worker threads (overrides [sweep] parallel)");
}

ExperimentConfig load_with_overrides(const CommonOpts& o) {
    ExperimentConfig cfg = load_config(o.config);
    if (!o.out.empty()) cfg.output.dir = o.out;
    if (!o.seed_range.empty()) {
        const auto dots = o.seed_range.find("..");
        if (dots == std::string::npos)
            throw ConfigError("--seed-range must be 'a..b' (b inclusive)");
        try {
            cfg.sweep.seed_lo = std::stoll(o.seed_range.substr(0, dots));
            cfg.sweep.seed_hi = std::stoll(o.seed_range.substr(dots + 2));
        } catch (...) {
            throw ConfigError("--seed-range must be 'a..b' with integer endpoints");
        }
    }
    if (o.parallel > 0) cfg.sweep.parallel = o.parallel;
    return cfg;
}

int run_distill(const CommonOpts& o, SweepMode mode) {
    const ExperimentConfig cfg = load_with_overrides(o);
    const SweepResult res = run_sweep(cfg, mode, cfg.output.dir, cfg.sweep.parallel);
    std::size_t ok = 0;
    for (const auto& r : res.records) ok += r.status == "ok";
    std::cout << res.records.size() << " runs, " << ok << " ok -> " << cfg.output.dir << "\n";
    return res.all_ok ? 0 : 1;
}

int run_sample(const CommonOpts& o) {
    const ExperimentConfig cfg = load_with_overrides(o);
    const SweepResult res = run_sample_sweep(cfg, cfg.output.dir, cfg.sweep.parallel);
    std::cout << res.records.size() << " sample runs -> " << cfg.output.dir << "\n";
    return res.all_ok ? 0 : 1;
}

// Pull every mode center of the active condition back to its noise seed, then push it
// forward again and report the reconstruction error.
int run_invert(const CommonOpts& o) {
    const ExperimentConfig cfg = load_with_overrides(o);
    const Registry reg = build_image_registry(cfg);
    const Condition y = image_condition(cfg);
    const Mixture& mix = cfg.mixtures[cfg.condition_index()].mixture;
    const TimeGrid grid = ddim_grid(cfg.distill.n_ddim, cfg.schedule);
    const GuidanceConfig g{cfg.distill.cfg_path};

    std::ostringstream os;
    os << "point_id";
    for (int i = 0; i < mix.dim(); ++i) os << ",x" << i;
    for (int i = 0; i < mix.dim(); ++i) os << ",seed" << i;
    os << ",roundtrip_err\n";
    for (std::size_t k = 0; k < mix.comps.size(); ++k) {
        const vec& x0 = mix.comps[k].mu;
        const OdePath up = ddim_invert(reg, x0, y, grid, cfg.schedule, cfg.schedule.T, g);
        const vec& seed = up.xs.back();
        const vec back = ddim_forward(reg, seed, y, grid, g, cfg.schedule).final_x();
        os << "mode" << k;
        for (double v : x0) os << ',' << format_g17(v);
        for (double v : seed) os << ',' << format_g17(v);
        os << ',' << format_g17(std::sqrt(dist2(back, x0))) << "\n";
    }
    fs::create_directories(cfg.output.dir);
    std::ofstream f(cfg.output.dir + "/inversions.csv", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write inversions.csv");
    f << os.str();
    std::cout << mix.comps.size() << " modes inverted -> " << cfg.output.dir
              << "/inversions.csv\n";
    return 0;
}

std::vector<RunRecord> records_from_finals(const std::vector<std::vector<std::string>>& rows) {
    std::vector<RunRecord> recs;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() < 4) continue;
        RunRecord rec;
        rec.run_id = row[0];
        rec.variant = row[1];
        rec.seed_index = std::stoll(row[2]);
        for (std::size_t c = 3; c < row.size(); ++c) rec.final_x.push_back(std::stod(row[c]));
        recs.push_back(std::move(rec));
    }
    return recs;
}

int run_compare(const CommonOpts& o, const std::vector<std::string>& inputs) {
    const ExperimentConfig cfg = load_with_overrides(o);

    std::vector<RunRecord> recs;
    for (const auto& path : inputs)
        for (auto& rec : records_from_finals(read_csv(path))) recs.push_back(std::move(rec));
    if (recs.empty()) throw std::runtime_error("no rows in the given finals files");
    const std::size_t dim = recs.front().final_x.size();
    for (const auto& r : recs)
        if (r.final_x.size() != dim)
            throw std::runtime_error("finals files mix sample dimensions");

    // group samples by variant, preserving first-appearance order
    std::vector<std::string> order;
    std::map<std::string, std::vector<vec>> groups;
    for (const auto& r : recs) {
        if (!groups.count(r.variant)) order.push_back(r.variant);
        groups[r.variant].push_back(r.final_x);
    }

    // reference modes and coverage radius
    std::vector<vec> modes;
    double tau = 0.0;
    bool image_space = false;
    if (cfg.scene && dim == static_cast<std::size_t>(cfg.scene->D)) {
        Registry scene_reg;
        const ObjectLibrary lib = build_library(*cfg.scene, scene_reg);
        modes = lib.objects;
        tau = 10.0 * cfg.scene->s;
    } else {
        const Mixture& mix = cfg.mixtures[cfg.condition_index()].mixture;
        if (static_cast<std::size_t>(mix.dim()) != dim)
            throw std::runtime_error("finals dimension matches neither the condition mixture "
                                     "nor the scene parameters");
        double smax = 0.0;
        for (const auto& c : mix.comps) {
            modes.push_back(c.mu);
            smax = std::max(smax, c.s);
        }
        tau = 10.0 * smax;
        image_space = true;
    }

    Registry reg;
    Condition y;
    if (image_space) {
        reg = build_image_registry(cfg);
        y = image_condition(cfg);
    }

    std::ostringstream os;
    os << "variant,n,diversity,coverage,nll,w2\n";
    for (const auto& name : order) {
        const auto& samples = groups[name];
        os << name << ',' << samples.size() << ','
           << format_g17(pairwise_diversity(samples)) << ','
           << mode_coverage(samples, modes, tau);
        if (image_space) {
            os << ',' << format_g17(fidelity_nll(samples, reg, y, cfg.schedule));
            if (samples.size() <= 256) {
                const auto base = sample_baseline(cfg, static_cast<int>(samples.size()));
                os << ',' << format_g17(wasserstein2(samples, base));
            } else {
                os << ',';
            }
        } else {
            os << ",,";
        }
        os << "\n";
    }
    fs::create_directories(cfg.output.dir);
    std::ofstream f(cfg.output.dir + "/metrics.csv", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write metrics.csv");
    f << os.str();

    if (dim <= 2) {
        std::ofstream svg(cfg.output.dir + "/compare_scatter.svg", std::ios::binary);
        svg << emit_plot(recs, PlotKind::scatter);
    }
    std::cout << order.size() << " variant groups -> " << cfg.output.dir << "/metrics.csv\n";
    return 0;
}

std::vector<RunRecord> records_from_traces(const std::vector<std::vector<std::string>>& rows) {
    std::map<std::string, std::size_t> index_of;
    std::vector<RunRecord> recs;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() < 7) continue;
        auto it = index_of.find(row[0]);
        if (it == index_of.end()) {
            RunRecord rec;
            rec.run_id = row[0];
            rec.variant = row[1];
            rec.seed_index = std::stoll(row[2]);
            recs.push_back(std::move(rec));
            it = index_of.emplace(row[0], recs.size() - 1).first;
        }
        TraceRow tr;
        tr.step = std::stoi(row[3]);
        tr.t = std::stod(row[4]);
        tr.grad_norm = std::stod(row[5]);
        for (std::size_t c = 6; c < row.size(); ++c) tr.x.push_back(std::stod(row[c]));
        recs[it->second].trace.push_back(std::move(tr));
    }
    for (auto& rec : recs)
        if (!rec.trace.empty()) rec.final_x = rec.trace.back().x;
    return recs;
}

int run_plot(const std::string& kind, const std::string& input, const std::string& output) {
    const auto rows = read_csv(input);
    std::vector<RunRecord> recs;
    PlotKind pk;
    if (kind == "scatter") {
        pk = PlotKind::scatter;
        recs = records_from_finals(rows);
    } else if (kind == "trajectory") {
        pk = PlotKind::trajectory;
        recs = records_from_traces(rows);
    } else {
        throw ConfigError("--kind must be 'scatter' or 'trajectory'");
    }
    const std::string svg = emit_plot(recs, pk);
    std::ofstream f(output, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + output);
    f << svg;
    std::cout << recs.size() << " records -> " << output << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distill-lab: score-distillation experiments on analytic mixtures"};
    app.require_subcommand(1);

    CommonOpts so;
    auto* cmd_sample = app.add_subcommand("sample", "direct sampler runs over a seed range");
    add_common(cmd_sample, so);

    CommonOpts io;
    auto* cmd_invert =
        app.add_subcommand("invert", "pull mode centers back to noise and round-trip them");
    add_common(cmd_invert, io);

    CommonOpts d2o;
    auto* cmd_d2 = app.add_subcommand("distill2d", "distillation sweep on the mixture condition");
    add_common(cmd_d2, d2o);

    CommonOpts d3o;
    auto* cmd_d3 = app.add_subcommand("distill3d", "multi-view distillation sweep on the scene");
    add_common(cmd_d3, d3o);

    CommonOpts co;
    std::vector<std::string> compare_inputs;
    auto* cmd_cmp = app.add_subcommand("compare", "summary metrics over finals.csv files");
    add_common(cmd_cmp, co);
    cmd_cmp->add_option("inputs", compare_inputs, "finals.csv files")->required();

    std::string plot_kind = "scatter", plot_in, plot_out;
    auto* cmd_plot = app.add_subcommand("plot", "render a CSV as a deterministic SVG");
    cmd_plot->add_option("--kind", plot_kind, "scatter | trajectory");
    cmd_plot->add_option("--input", plot_in, "finals or trace CSV")->required();
    cmd_plot->add_option("--output", plot_out, "SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_sample->parsed()) return run_sample(so);
        if (cmd_invert->parsed()) return run_invert(io);
        if (cmd_d2->parsed()) return run_distill(d2o, SweepMode::image);
        if (cmd_d3->parsed()) return run_distill(d3o, SweepMode::scene);
        if (cmd_cmp->parsed()) return run_compare(co, compare_inputs);
        if (cmd_plot->parsed()) return run_plot(plot_kind, plot_in, plot_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
