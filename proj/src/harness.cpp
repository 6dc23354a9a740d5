#include "dlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dlab/rng.hpp"

namespace dlab {

namespace fs = std::filesystem;

std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) fail(line, "trailing characters after number '" + v + "'");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "expected a number, got '" + v + "'");
    }
}

long long parse_ll(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size()) fail(line, "trailing characters after integer '" + v + "'");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "expected an integer, got '" + v + "'");
    }
}

int parse_int(const std::string& v, int line) {
    const long long d = parse_ll(v, line);
    if (d < -2147483647LL || d > 2147483647LL) fail(line, "integer out of range: " + v);
    return static_cast<int>(d);
}

std::uint64_t parse_u64(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const std::uint64_t d = std::stoull(v, &pos);
        if (pos != v.size()) fail(line, "trailing characters after integer '" + v + "'");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "expected a non-negative integer, got '" + v + "'");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(v);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    if (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

std::string sanitize_field(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << content;
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::string hex16(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

int ExperimentConfig::condition_index() const {
    if (mixtures.empty()) throw ConfigError("config: no mixtures defined");
    if (condition.empty()) return 0;
    for (std::size_t i = 0; i < mixtures.size(); ++i)
        if (mixtures[i].name == condition) return static_cast<int>(i);
    throw ConfigError("config: condition '" + condition + "' does not name a mixture");
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    cfg.variants.clear();

    enum class Sec { none, schedule, mixture, scene, distill, sweep, output };
    Sec sec = Sec::none;
    int mix_index = -1;
    std::vector<int> mix_header_lines;
    std::set<std::string> sections_seen;
    std::set<std::string> keys_seen;
    bool scene_present = false;
    SceneSpec scene;
    int condition_line = 0;

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;

        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            const std::string inner = trim(line.substr(1, line.size() - 2));
            std::string name = inner, arg;
            const auto sp = inner.find(' ');
            if (sp != std::string::npos) {
                name = trim(inner.substr(0, sp));
                arg = trim(inner.substr(sp + 1));
            }
            std::string seen_key = name + (arg.empty() ? "" : " " + arg);
            if (!sections_seen.insert(seen_key).second)
                fail(line_no, "duplicate section [" + seen_key + "]");
            keys_seen.clear();
            if (name == "schedule" && arg.empty()) {
                sec = Sec::schedule;
            } else if (name == "mixture" && !arg.empty()) {
                sec = Sec::mixture;
                cfg.mixtures.push_back({arg, {}});
                mix_index = static_cast<int>(cfg.mixtures.size()) - 1;
                mix_header_lines.push_back(line_no);
            } else if (name == "scene" && arg.empty()) {
                sec = Sec::scene;
                scene_present = true;
            } else if (name == "distill" && arg.empty()) {
                sec = Sec::distill;
            } else if (name == "sweep" && arg.empty()) {
                sec = Sec::sweep;
            } else if (name == "output" && arg.empty()) {
                sec = Sec::output;
            } else {
                fail(line_no, "unknown section [" + inner + "]");
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value' or a [section] header");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        if (sec == Sec::none) fail(line_no, "key '" + key + "' before any [section] header");
        const bool repeatable = (sec == Sec::mixture && key == "component");
        if (!repeatable && !keys_seen.insert(key).second)
            fail(line_no, "duplicate key '" + key + "'");

        switch (sec) {
            case Sec::schedule:
                if (key == "T") {
                    cfg.schedule.T = parse_double(val, line_no);
                    if (!(cfg.schedule.T > 0)) fail(line_no, "T must be positive");
                } else if (key == "clamp_eps") {
                    cfg.schedule.clamp_eps = parse_double(val, line_no);
                    if (!(cfg.schedule.clamp_eps > 0 && cfg.schedule.clamp_eps < 0.5))
                        fail(line_no, "clamp_eps must be in (0, 0.5)");
                } else if (key == "t_min") {
                    cfg.schedule.t_min = parse_double(val, line_no);
                    if (!(cfg.schedule.t_min >= 0)) fail(line_no, "t_min must be >= 0");
                } else {
                    fail(line_no, "unknown key '" + key + "' in [schedule]");
                }
                break;
            case Sec::mixture: {
                if (key != "component")
                    fail(line_no, "unknown key '" + key + "' in [mixture] (only 'component')");
                const auto parts = split_list(val);
                if (parts.size() < 3)
                    fail(line_no, "component needs 'weight, mean..., scale' (>= 3 numbers)");
                MixtureComponent mc;
                mc.w = parse_double(parts.front(), line_no);
                for (std::size_t i = 1; i + 1 < parts.size(); ++i)
                    mc.mu.push_back(parse_double(parts[i], line_no));
                mc.s = parse_double(parts.back(), line_no);
                cfg.mixtures[mix_index].mixture.comps.push_back(std::move(mc));
                break;
            }
            case Sec::scene:
                if (key == "D") scene.D = parse_int(val, line_no);
                else if (key == "d") scene.d = parse_int(val, line_no);
                else if (key == "K") scene.K = parse_int(val, line_no);
                else if (key == "V") scene.V = parse_int(val, line_no);
                else if (key == "s") scene.s = parse_double(val, line_no);
                else if (key == "alpha") scene.alpha = parse_double(val, line_no);
                else if (key == "gamma_max") scene.gamma_max = parse_double(val, line_no);
                else if (key == "c_scale") scene.c_scale = parse_double(val, line_no);
                else if (key == "seed") scene.seed = parse_u64(val, line_no);
                else if (key == "max_tries") scene.max_tries = parse_int(val, line_no);
                else fail(line_no, "unknown key '" + key + "' in [scene]");
                break;
            case Sec::distill:
                if (key == "variants") {
                    for (const auto& tok : split_list(val)) {
                        try {
                            cfg.variants.push_back(parse_variant(tok));
                        } catch (const std::exception& e) {
                            fail(line_no, e.what());
                        }
                    }
                    if (cfg.variants.empty()) fail(line_no, "variants list is empty");
                } else if (key == "condition") {
                    cfg.condition = val;
                    condition_line = line_no;
                } else if (key == "N") {
                    cfg.distill.N = parse_int(val, line_no);
                } else if (key == "n_ddim") {
                    cfg.distill.n_ddim = parse_int(val, line_no);
                } else if (key == "lr") {
                    cfg.distill.lr = parse_double(val, line_no);
                    if (!(cfg.distill.lr > 0)) fail(line_no, "lr must be positive");
                } else if (key == "cfg_low") {
                    cfg.distill.cfg_low = parse_double(val, line_no);
                } else if (key == "cfg_high") {
                    cfg.distill.cfg_high = parse_double(val, line_no);
                } else if (key == "cfg_path") {
                    cfg.distill.cfg_path = parse_double(val, line_no);
                } else if (key == "w_rule") {
                    if (val == "sigma_low") cfg.distill.w_rule = WRule::sigma_low;
                    else if (val == "one") cfg.distill.w_rule = WRule::one;
                    else fail(line_no, "w_rule must be 'sigma_low' or 'one'");
                } else if (key == "delta_coeff") {
                    cfg.distill.delta_coeff = parse_double(val, line_no);
                } else if (key == "interp_form") {
                    if (val == "time_matched") cfg.distill.interp_form = InterpForm::time_matched;
                    else if (val == "shared_high") cfg.distill.interp_form = InterpForm::shared_high;
                    else fail(line_no, "interp_form must be 'time_matched' or 'shared_high'");
                } else if (key == "diverge_norm") {
                    cfg.distill.diverge_norm = parse_double(val, line_no);
                } else {
                    fail(line_no, "unknown key '" + key + "' in [distill]");
                }
                break;
            case Sec::sweep:
                if (key == "seeds") {
                    const auto dots = val.find("..");
                    if (dots == std::string::npos)
                        fail(line_no, "seeds must be a range 'a..b' (b inclusive)");
                    cfg.sweep.seed_lo = parse_ll(trim(val.substr(0, dots)), line_no);
                    cfg.sweep.seed_hi = parse_ll(trim(val.substr(dots + 2)), line_no);
                } else if (key == "parallel") {
                    cfg.sweep.parallel = parse_int(val, line_no);
                    if (cfg.sweep.parallel < 1) fail(line_no, "parallel must be >= 1");
                } else {
                    fail(line_no, "unknown key '" + key + "' in [sweep]");
                }
                break;
            case Sec::output:
                if (key == "dir") {
                    cfg.output.dir = val;
                } else if (key == "formats") {
                    cfg.output.csv = cfg.output.svg = false;
                    for (const auto& tok : split_list(val)) {
                        if (tok == "csv") cfg.output.csv = true;
                        else if (tok == "svg") cfg.output.svg = true;
                        else fail(line_no, "unknown format '" + tok + "' (csv, svg)");
                    }
                } else {
                    fail(line_no, "unknown key '" + key + "' in [output]");
                }
                break;
            case Sec::none:
                break;
        }
    }

    // cross-field validation
    if (!(cfg.schedule.t_min < cfg.schedule.T))
        throw ConfigError("config: schedule t_min must be below T");
    for (std::size_t i = 0; i < cfg.mixtures.size(); ++i) {
        try {
            cfg.mixtures[i].mixture.validate();
        } catch (const std::exception& e) {
            fail(mix_header_lines[i], "mixture '" + cfg.mixtures[i].name + "': " + e.what());
        }
        if (cfg.mixtures[i].mixture.dim() != cfg.mixtures.front().mixture.dim())
            throw ConfigError("config: mixture '" + cfg.mixtures[i].name +
                              "' dimension differs from '" + cfg.mixtures.front().name + "'");
    }
    if (cfg.mixtures.empty() && !scene_present)
        throw ConfigError("config: need at least one [mixture] or a [scene] block");
    if (!cfg.condition.empty()) {
        bool found = false;
        for (const auto& m : cfg.mixtures) found = found || m.name == cfg.condition;
        if (!found)
            fail(condition_line, "condition '" + cfg.condition + "' does not name a mixture");
    }
    if (scene_present) cfg.scene = scene;
    if (cfg.variants.empty()) cfg.variants.push_back(Variant::dsd);
    cfg.distill.t_min = cfg.schedule.t_min;
    try {
        cfg.distill.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

namespace {

std::string serialize_impl(const ExperimentConfig& cfg, bool include_sweep_output) {
    std::ostringstream os;
    os << "[schedule]\n";
    os << "T = " << format_g17(cfg.schedule.T) << "\n";
    os << "clamp_eps = " << format_g17(cfg.schedule.clamp_eps) << "\n";
    os << "t_min = " << format_g17(cfg.schedule.t_min) << "\n";
    for (const auto& ms : cfg.mixtures) {
        os << "\n[mixture " << ms.name << "]\n";
        for (const auto& c : ms.mixture.comps) {
            os << "component = " << format_g17(c.w);
            for (double m : c.mu) os << ", " << format_g17(m);
            os << ", " << format_g17(c.s) << "\n";
        }
    }
    if (cfg.scene) {
        const SceneSpec& s = *cfg.scene;
        os << "\n[scene]\n";
        os << "D = " << s.D << "\n";
        os << "d = " << s.d << "\n";
        os << "K = " << s.K << "\n";
        os << "V = " << s.V << "\n";
        os << "s = " << format_g17(s.s) << "\n";
        os << "alpha = " << format_g17(s.alpha) << "\n";
        os << "gamma_max = " << format_g17(s.gamma_max) << "\n";
        os << "c_scale = " << format_g17(s.c_scale) << "\n";
        os << "seed = " << s.seed << "\n";
        os << "max_tries = " << s.max_tries << "\n";
    }
    os << "\n[distill]\n";
    os << "variants = ";
    for (std::size_t i = 0; i < cfg.variants.size(); ++i)
        os << (i ? ", " : "") << to_string(cfg.variants[i]);
    os << "\n";
    if (!cfg.mixtures.empty())
        os << "condition = " << cfg.mixtures[cfg.condition_index()].name << "\n";
    os << "N = " << cfg.distill.N << "\n";
    os << "n_ddim = " << cfg.distill.n_ddim << "\n";
    if (cfg.distill.lr > 0) os << "lr = " << format_g17(cfg.distill.lr) << "\n";
    os << "cfg_low = " << format_g17(cfg.distill.cfg_low) << "\n";
    os << "cfg_high = " << format_g17(cfg.distill.cfg_high) << "\n";
    os << "cfg_path = " << format_g17(cfg.distill.cfg_path) << "\n";
    os << "w_rule = " << (cfg.distill.w_rule == WRule::sigma_low ? "sigma_low" : "one") << "\n";
    os << "delta_coeff = " << format_g17(cfg.distill.delta_coeff) << "\n";
    os << "interp_form = "
       << (cfg.distill.interp_form == InterpForm::time_matched ? "time_matched" : "shared_high")
       << "\n";
    os << "diverge_norm = " << format_g17(cfg.distill.diverge_norm) << "\n";
    if (include_sweep_output) {
        os << "\n[sweep]\n";
        os << "seeds = " << cfg.sweep.seed_lo << ".." << cfg.sweep.seed_hi << "\n";
        os << "parallel = " << cfg.sweep.parallel << "\n";
        os << "\n[output]\n";
        os << "dir = " << cfg.output.dir << "\n";
        os << "formats = ";
        if (cfg.output.csv) os << "csv";
        if (cfg.output.csv && cfg.output.svg) os << ", ";
        if (cfg.output.svg) os << "svg";
        os << "\n";
    }
    return os.str();
}

}  // namespace

std::string serialize(const ExperimentConfig& cfg) { return serialize_impl(cfg, true); }

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return rng::fnv1a64(serialize_impl(cfg, false));
}

Registry build_image_registry(const ExperimentConfig& cfg) {
    if (cfg.mixtures.empty()) throw ConfigError("config: no mixtures defined");
    Registry reg;
    for (std::size_t i = 0; i < cfg.mixtures.size(); ++i)
        reg.add(Condition::label(static_cast<int>(i)), cfg.mixtures[i].mixture);
    return reg;
}

Condition image_condition(const ExperimentConfig& cfg) {
    return Condition::label(cfg.condition_index());
}

// ---------------------------------------------------------------------------
// sweeps

namespace {

int effective_parallel(int requested) {
    int p = requested < 1 ? 1 : requested;
    if (const char* env = std::getenv("DISTILL_LAB_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end && *end == '\0' && cap >= 1 && cap < p) p = static_cast<int>(cap);
    }
    return p;
}

struct PlannedRun {
    Variant variant;
    long long seed;
};

void write_objects_csv(const std::string& path, const ObjectLibrary& lib) {
    std::ostringstream os;
    os << "object_id";
    for (int i = 0; i < lib.spec.D; ++i) os << ",psi" << i;
    os << "\n";
    for (std::size_t k = 0; k < lib.objects.size(); ++k) {
        os << k;
        for (double v : lib.objects[k]) os << "," << format_g17(v);
        os << "\n";
    }
    write_file(path, os.str());
}

void write_sweep_outputs(const ExperimentConfig& cfg, const std::string& out_dir,
                         std::vector<RunRecord>& records, const ObjectLibrary* lib) {
    fs::create_directories(out_dir);
    if (cfg.output.csv) {
        fs::create_directories(out_dir + "/traces");
        for (auto& rec : records) {
            if (rec.status != "ok" || rec.trace.empty()) continue;
            rec.trace_path = "traces/run_" + rec.run_id + ".csv";
            write_trace_csv(out_dir + "/" + rec.trace_path, rec);
        }
        write_manifest_csv(out_dir + "/manifest.csv", records);
        write_finals_csv(out_dir + "/finals.csv", records);
        if (lib) write_objects_csv(out_dir + "/objects.csv", *lib);
    }
    if (cfg.output.svg) {
        bool plottable = true;
        for (const auto& rec : records)
            if (rec.status == "ok" && rec.final_x.size() > 2) plottable = false;
        if (plottable) {
            fs::create_directories(out_dir + "/plots");
            write_file(out_dir + "/plots/finals_scatter.svg",
                       emit_plot(records, PlotKind::scatter));
        }
    }
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg, SweepMode mode, const std::string& out_dir,
                      int parallel) {
    const std::uint64_t h = config_hash(cfg);
    Registry reg;
    ObjectLibrary lib;
    Condition ycond;
    int dim = 0;
    if (mode == SweepMode::image) {
        reg = build_image_registry(cfg);
        ycond = image_condition(cfg);
        dim = reg.dim();
    } else {
        if (!cfg.scene) throw ConfigError("config: scene runs need a [scene] block");
        lib = build_library(*cfg.scene, reg);
    }

    std::vector<PlannedRun> plan;
    for (Variant v : cfg.variants)
        for (long long s = cfg.sweep.seed_lo; s <= cfg.sweep.seed_hi; ++s) plan.push_back({v, s});

    SweepResult out;
    out.records.resize(plan.size());
    PathCache cache;
    const int p = effective_parallel(parallel);

#pragma omp parallel for schedule(dynamic) num_threads(p)
    for (long long i = 0; i < static_cast<long long>(plan.size()); ++i) {
        RunRecord& rec = out.records[i];
        rec.variant = to_string(plan[i].variant);
        rec.seed_index = plan[i].seed;
        rec.run_id = rec.variant + "-s" + std::to_string(rec.seed_index);
        rec.cfg_hash = h;
        DistillConfig dc = cfg.distill;
        dc.variant = plan[i].variant;
        const std::uint64_t key = rng::run_key(h, rng::fnv1a64(rec.run_id));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            RunResult r = mode == SweepMode::image
                              ? optimize_image(reg, ycond, dim, dc, cfg.schedule, key, &cache,
                                               nullptr, true)
                              : optimize_scene(lib, reg, dc, cfg.schedule, key, &cache, true);
            rec.final_x = std::move(r.final_x);
            rec.trace = std::move(r.trace);
            rec.status = "ok";
        } catch (const std::exception& e) {
            rec.status = sanitize_field(std::string("failed: ") + e.what());
        }
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                t0)
                          .count();
    }
    for (const auto& rec : out.records) out.all_ok = out.all_ok && rec.status == "ok";
    write_sweep_outputs(cfg, out_dir, out.records,
                        mode == SweepMode::scene ? &lib : nullptr);
    return out;
}

namespace {

RunRecord sample_run(const ExperimentConfig& cfg, const Registry& reg, const Condition& y,
                     std::uint64_t h, long long seed) {
    RunRecord rec;
    rec.variant = "sample";
    rec.seed_index = seed;
    rec.run_id = "sample-s" + std::to_string(seed);
    rec.cfg_hash = h;
    const std::uint64_t key = rng::run_key(h, rng::fnv1a64(rec.run_id));
    const auto t0 = std::chrono::steady_clock::now();
    try {
        rng::Stream star(key, rng::Purpose::eps_star);
        const vec eps_star = star.normal_vec(reg.dim());
        const TimeGrid grid = ddim_grid(cfg.distill.n_ddim, cfg.schedule);
        const OdePath path = ddim_forward(reg, eps_star, y, grid, {cfg.distill.cfg_path},
                                          cfg.schedule, 0.0);
        rec.final_x = path.final_x();
        for (std::size_t k = 0; k < path.times.size(); ++k)
            rec.trace.push_back({static_cast<int>(k), path.times[k], norm2(path.eps[k]),
                                 path.xs[k]});
    } catch (const std::exception& e) {
        rec.status = sanitize_field(std::string("failed: ") + e.what());
    }
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

}  // namespace

SweepResult run_sample_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
                             int parallel) {
    const std::uint64_t h = config_hash(cfg);
    const Registry reg = build_image_registry(cfg);
    const Condition y = image_condition(cfg);

    std::vector<long long> seeds;
    for (long long s = cfg.sweep.seed_lo; s <= cfg.sweep.seed_hi; ++s) seeds.push_back(s);
    SweepResult out;
    out.records.resize(seeds.size());
    const int p = effective_parallel(parallel);
#pragma omp parallel for schedule(dynamic) num_threads(p)
    for (long long i = 0; i < static_cast<long long>(seeds.size()); ++i)
        out.records[i] = sample_run(cfg, reg, y, h, seeds[i]);
    for (const auto& rec : out.records) out.all_ok = out.all_ok && rec.status == "ok";
    write_sweep_outputs(cfg, out_dir, out.records, nullptr);
    return out;
}

std::vector<vec> sample_baseline(const ExperimentConfig& cfg, int count) {
    const std::uint64_t h = config_hash(cfg);
    const Registry reg = build_image_registry(cfg);
    const Condition y = image_condition(cfg);
    std::vector<vec> out;
    out.reserve(count);
    for (int s = 0; s < count; ++s) {
        RunRecord rec = sample_run(cfg, reg, y, h, s);
        if (rec.status != "ok") throw std::runtime_error("baseline sampling failed: " + rec.status);
        out.push_back(std::move(rec.final_x));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

void write_manifest_csv(const std::string& path, const std::vector<RunRecord>& records) {
    std::ostringstream os;
    os << "run_id,variant,seed_index,config_hash,status,wall_ms,trace_path\n";
    for (const auto& r : records) {
        char wall[32];
        std::snprintf(wall, sizeof(wall), "%.3f", r.wall_ms);
        os << r.run_id << ',' << r.variant << ',' << r.seed_index << ',' << hex16(r.cfg_hash)
           << ',' << sanitize_field(r.status) << ',' << wall << ',' << r.trace_path << "\n";
    }
    write_file(path, os.str());
}

void write_finals_csv(const std::string& path, const std::vector<RunRecord>& records) {
    std::ostringstream os;
    std::size_t dim = 0;
    for (const auto& r : records)
        if (r.status == "ok") {
            dim = r.final_x.size();
            break;
        }
    os << "run_id,variant,seed_index";
    for (std::size_t i = 0; i < dim; ++i) os << ",x" << i;
    os << "\n";
    for (const auto& r : records) {
        if (r.status != "ok") continue;
        os << r.run_id << ',' << r.variant << ',' << r.seed_index;
        for (double v : r.final_x) os << ',' << format_g17(v);
        os << "\n";
    }
    write_file(path, os.str());
}

void write_trace_csv(const std::string& path, const RunRecord& record) {
    std::ostringstream os;
    const std::size_t dim = record.trace.empty() ? 0 : record.trace.front().x.size();
    os << "run_id,variant,seed_index,step,t,grad_norm";
    for (std::size_t i = 0; i < dim; ++i) os << ",x" << i;
    os << "\n";
    for (const auto& row : record.trace) {
        os << record.run_id << ',' << record.variant << ',' << record.seed_index << ','
           << row.step << ',' << format_g17(row.t) << ',' << format_g17(row.grad_norm);
        for (double v : row.x) os << ',' << format_g17(v);
        os << "\n";
    }
    write_file(path, os.str());
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open CSV: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        std::stringstream ss(line);
        while (std::getline(ss, cur, ',')) fields.push_back(cur);
        if (!line.empty() && line.back() == ',') fields.push_back("");
        rows.push_back(std::move(fields));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

struct Series {
    std::string label;
    int color = 0;
    bool polyline = false;
    std::vector<std::pair<double, double>> pts;
};

std::string fmt_px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

std::string emit_plot(const std::vector<RunRecord>& records, PlotKind kind) {
    std::vector<Series> series;
    std::map<std::string, int> color_of;
    auto color_for = [&](const std::string& label) {
        auto it = color_of.find(label);
        if (it != color_of.end()) return it->second;
        const int c = static_cast<int>(color_of.size()) % kPaletteSize;
        color_of.emplace(label, c);
        return c;
    };

    if (kind == PlotKind::scatter) {
        std::map<std::string, std::size_t> index_of;
        for (const auto& rec : records) {
            if (rec.status != "ok" || rec.final_x.empty()) continue;
            if (rec.final_x.size() > 2)
                throw std::invalid_argument("emit_plot: scatter supports 1D or 2D samples");
            auto it = index_of.find(rec.variant);
            if (it == index_of.end()) {
                series.push_back({rec.variant, color_for(rec.variant), false, {}});
                it = index_of.emplace(rec.variant, series.size() - 1).first;
            }
            auto& s = series[it->second];
            if (rec.final_x.size() == 1)
                s.pts.emplace_back(static_cast<double>(rec.seed_index), rec.final_x[0]);
            else
                s.pts.emplace_back(rec.final_x[0], rec.final_x[1]);
        }
    } else {
        for (const auto& rec : records) {
            if (rec.status != "ok" || rec.trace.empty()) continue;
            const std::size_t d = rec.trace.front().x.size();
            if (d > 2) throw std::invalid_argument("emit_plot: trajectory supports 1D or 2D");
            Series s{rec.variant, color_for(rec.variant), true, {}};
            for (const auto& row : rec.trace) {
                if (d == 1)
                    s.pts.emplace_back(static_cast<double>(row.step), row.x[0]);
                else
                    s.pts.emplace_back(row.x[0], row.x[1]);
            }
            series.push_back(std::move(s));
        }
    }

    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    bool any = false;
    for (const auto& s : series)
        for (const auto& [x, y] : s.pts) {
            if (!any) {
                xmin = xmax = x;
                ymin = ymax = y;
                any = true;
            } else {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double padx = 0.05 * (xmax - xmin), pady = 0.05 * (ymax - ymin);
    xmin -= padx;
    xmax += padx;
    ymin -= pady;
    ymax += pady;

    const double px0 = 60, px1 = 620, py0 = 440, py1 = 20;  // plot area, py0 = bottom
    const double sx = (px1 - px0) / (xmax - xmin);
    const double sy = (py0 - py1) / (ymax - ymin);
    auto to_px = [&](double x) { return px0 + (x - xmin) * sx; };
    auto to_py = [&](double y) { return py0 - (y - ymin) * sy; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
          "viewBox=\"0 0 640 480\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
    os << "<line x1=\"60\" y1=\"440\" x2=\"620\" y2=\"440\" stroke=\"black\"/>\n";
    os << "<line x1=\"60\" y1=\"20\" x2=\"60\" y2=\"440\" stroke=\"black\"/>\n";
    os << "<text x=\"60\" y=\"456\" font-size=\"11\">" << fmt_tick(xmin) << "</text>\n";
    os << "<text x=\"592\" y=\"456\" font-size=\"11\">" << fmt_tick(xmax) << "</text>\n";
    os << "<text x=\"8\" y=\"440\" font-size=\"11\">" << fmt_tick(ymin) << "</text>\n";
    os << "<text x=\"8\" y=\"28\" font-size=\"11\">" << fmt_tick(ymax) << "</text>\n";

    if (kind == PlotKind::scatter) {
        for (const auto& s : series)
            for (const auto& [x, y] : s.pts)
                os << "<circle cx=\"" << fmt_px(to_px(x)) << "\" cy=\"" << fmt_px(to_py(y))
                   << "\" r=\"3\" fill=\"" << kPalette[s.color] << "\" fill-opacity=\"0.7\"/>\n";
    } else {
        // data-coordinate group: point text in the SVG equals the CSV float text
        const double tx = px0 - xmin * sx, ty = py0 + ymin * sy;
        os << "<g transform=\"translate(" << format_g17(tx) << " " << format_g17(ty)
           << ") scale(" << format_g17(sx) << " " << format_g17(-sy) << ")\">\n";
        for (const auto& s : series) {
            os << "<polyline fill=\"none\" stroke=\"" << kPalette[s.color]
               << "\" stroke-width=\"1.5\" vector-effect=\"non-scaling-stroke\" points=\"";
            for (std::size_t i = 0; i < s.pts.size(); ++i)
                os << (i ? " " : "") << format_g17(s.pts[i].first) << ","
                   << format_g17(s.pts[i].second);
            os << "\"/>\n";
        }
        os << "</g>\n";
    }

    int li = 0;
    for (const auto& [label, color] : color_of) {
        const double y = 34 + 16 * li++;
        os << "<rect x=\"530\" y=\"" << fmt_px(y - 9) << "\" width=\"10\" height=\"10\" fill=\""
           << kPalette[color] << "\"/>\n";
        os << "<text x=\"544\" y=\"" << fmt_px(y) << "\" font-size=\"11\">" << label
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace dlab
