#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlab/distill.hpp"
#include "dlab/oracle.hpp"
#include "dlab/scene.hpp"
#include "dlab/schedule.hpp"

namespace dlab {

// Fatal configuration problem; the message names the offending line.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MixtureSpec {
    std::string name;
    Mixture mixture;
};

struct SweepBlock {
    long long seed_lo = 0;
    long long seed_hi = -1;  // inclusive; hi < lo means an empty sweep
    int parallel = 1;
};

struct OutputBlock {
    std::string dir = "out";
    bool csv = true;
    bool svg = true;
};

// A fully resolved experiment plan. Mixtures become label conditions in file order;
// the distill block's `condition` picks which one drives image runs.
struct ExperimentConfig {
    ScheduleConfig schedule;
    std::vector<MixtureSpec> mixtures;
    std::optional<SceneSpec> scene;
    std::vector<Variant> variants{Variant::dsd};
    DistillConfig distill;  // t_min mirrored from the schedule block
    std::string condition;  // mixture name; empty selects the first mixture
    SweepBlock sweep;
    OutputBlock output;

    int condition_index() const;  // throws ConfigError if unresolved
};

// Line-oriented `[section]` / `key = value` format; throws ConfigError with the
// line number on unknown sections or keys, duplicate keys, type mismatches, and
// unresolved conditions.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical text form: serialize ∘ parse is idempotent.
std::string serialize(const ExperimentConfig& cfg);
// Hash of the canonical form minus the sweep/output blocks, so changing the seed
// range or destination never changes run keys.
std::uint64_t config_hash(const ExperimentConfig& cfg);

// All mixtures registered as label conditions (file order).
Registry build_image_registry(const ExperimentConfig& cfg);
Condition image_condition(const ExperimentConfig& cfg);

struct RunRecord {
    std::string run_id;
    std::string variant;  // gradient rule, or "sample" for direct sampler runs
    long long seed_index = 0;
    std::uint64_t cfg_hash = 0;
    std::string status = "ok";  // "ok" or a failure description
    double wall_ms = 0.0;       // measured; excluded from determinism contracts
    std::string trace_path;     // relative to the output dir; empty if none
    vec final_x;                // empty on failure
    std::vector<TraceRow> trace;
};

enum class SweepMode { image, scene };

struct SweepResult {
    std::vector<RunRecord> records;
    bool all_ok = true;
};

// Executes variants x seed range, in parallel up to `parallel` (capped by the
// DISTILL_LAB_THREADS environment variable). Failures are recorded and the sweep
// continues. Writes manifest.csv, finals.csv, traces/, and plots/ under out_dir;
// finals.csv bytes are identical at any parallelism. Scene mode also writes the
// ground-truth objects.
SweepResult run_sweep(const ExperimentConfig& cfg, SweepMode mode, const std::string& out_dir,
                      int parallel);

// Direct sampler runs (one DDIM solve per seed under cfg_path guidance), through
// the same record/CSV machinery with variant "sample".
SweepResult run_sample_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
                             int parallel);

// Seeds for comparing sweep outputs against the model's own samples; entry k is the
// full DDIM output for sample run k (no files written).
std::vector<vec> sample_baseline(const ExperimentConfig& cfg, int count);

// Shortest-readable exact float form used by every CSV and plot (%.17g).
std::string format_g17(double x);

void write_manifest_csv(const std::string& path, const std::vector<RunRecord>& records);
void write_finals_csv(const std::string& path, const std::vector<RunRecord>& records);
void write_trace_csv(const std::string& path, const RunRecord& record);

enum class PlotKind { scatter, trajectory };

// Self-contained deterministic SVG. Scatter: 1D samples plotted against seed index,
// 2D against each other; series colored per variant. Trajectory: one polyline per
// record in data coordinates (point text matches CSV float text exactly).
std::string emit_plot(const std::vector<RunRecord>& records, PlotKind kind);

// Minimal reader for the CSVs written above: returns header + rows of fields.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace dlab
