#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gdlab/engine.hpp"
#include "gdlab/problems.hpp"

namespace gdlab {

enum class Family { Scalar, Rank1, General, Sensing, Completion };
enum class ScenarioKind { Sweep, OrbitScan, ModifiedEq };

/// Base the learning-rate sweep multiplies its fractions into.
enum class LrBase {
    ScalarBound,      // min{4/(u0^2 + 4 mu), 1/(3 mu)}
    Rank1Bound,       // min{4/(u0^2 + 4 sqrt(7) mu), 1/(2 sqrt(7) mu)}
    AppAScalar,       // 4/(u0^2 + 8 mu), the appendix-sweep base
    Sharpness,        // 4 / lambda_max(Hessian at the initialization)
    ProbeAtLimit,     // largest stable rate found by short probe runs
    ProbeAboveLimit,  // 7/6 of the probed limit (top sweep column diverges)
    Explicit,         // h_list taken verbatim
};

struct ExperimentConfig {
    std::string scenario = "custom";
    ScenarioKind kind = ScenarioKind::Sweep;

    Family family = Family::Scalar;
    std::size_t n = 1;
    std::size_t d = 1;
    double mu = 1.0;
    std::uint64_t data_seed = 1;
    std::size_t num_sensors = 10;      // sensing
    std::size_t target_rank = 2;       // completion
    double observe_fraction = 0.6;     // completion
    double target_fro_norm = 0.0;      // > 0 rescales the generated target (general/completion)

    bool exact_init = false;           // d = 1 vector families only
    double x0_value = 0.0;
    double y0_value = 0.0;
    double norm_x0 = 1.0;
    double norm_y0 = 1.0;
    std::uint64_t init_seed = 1;

    LrBase lr_base = LrBase::Explicit;
    std::vector<double> h_list;        // used when lr_base == Explicit
    std::vector<double> h_fractions;   // in (0, 1], applied to the base

    GDConfig gd;                       // h is filled per run
    std::size_t scans = 500;           // orbit scan only

    std::string out_dir = ".";

    void validate() const;
};

struct SweepRow {
    double h = 0.0;
    Outcome outcome = MaxItersReached{};
    double final_loss_shifted = 0.0;
    double final_gap_fro = 0.0;
    double final_balance_sq = 0.0;
    double final_u_sq = 0.0;
    std::optional<std::size_t> phase2_start;
    std::optional<bool> norm_bound_ok;  // u^2 <= 2/h (scalar and rank-1 runs)
    std::optional<bool> gap_bound_ok;   // balance_sq <= 2/h - 2 mu_sum
    std::optional<bool> stability_ok;   // 1 - h lambda_max >= -1 - 1e-6
    std::optional<bool> trace_ok;       // closed vs assembled Hessian traces
    bool small_h = false;               // h < 2 / L0
    double gap_change_rel = 0.0;        // |gap_final - gap_init| / gap_init
    Diagnostics initial;
    Diagnostics final;
};

struct SweepSummary {
    std::vector<SweepRow> rows;  // ordered by h descending
    double h_base = 0.0;         // resolved sweep base
    double sharpness_init = 0.0; // L0 at the shared initialization
};

struct Orbit {
    std::size_t period = 0;
    std::vector<std::pair<double, double>> cycle;  // canonical point first
    double residual = 0.0;
};

struct ExperimentResult {
    SweepSummary summary;                    // sweep kind
    std::vector<Orbit> orbits;               // orbit-scan kind
    Trajectory gd_trajectory;                // modified-equation kind
    Trajectory modified_trajectory;          // modified-equation kind
    std::vector<std::string> files_written;
};

/// Known scenario ids, in presentation order.
std::vector<std::string> builtin_scenario_ids();

std::string scenario_description(const std::string& id);

/// Fully populated config (seeds fixed by id); throws on unknown ids.
ExperimentConfig builtin_scenario(const std::string& id);

/// Key = value text config; unknown keys are errors.
ExperimentConfig parse_config_file(const std::string& path);

Problem build_problem(const ExperimentConfig& cfg);
FactorState build_init(const ExperimentConfig& cfg);

Problem build_sensing(std::size_t n, std::size_t d, std::size_t m, std::uint64_t seed);
Problem build_completion(std::size_t n, std::size_t d, std::size_t rank, double observe_fraction,
                         std::uint64_t seed);

/// Resolved descending learning-rate list for a sweep.
std::vector<double> resolve_learning_rates(const ExperimentConfig& cfg, const Problem& p,
                                           const FactorState& init, double* base_out = nullptr,
                                           double* sharpness_out = nullptr);

/// Run the configured experiment, writing one trajectory CSV per
/// learning rate plus summary.csv and manifest.txt under
/// out_dir/<scenario>/. Deterministic given the config's seeds.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Orbit scan behind the appB scenario and the orbits CLI command:
/// random starts, settle, cycle detection, Newton polish, dedup.
std::vector<Orbit> scan_orbits(double mu, double h, std::size_t scans, std::uint64_t seed);

}  // namespace gdlab
