#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hwopt/allocator.hpp"
#include "hwopt/arch.hpp"
#include "hwopt/latency.hpp"
#include "hwopt/mcts.hpp"
#include "hwopt/perturbation.hpp"
#include "hwopt/quant_solver.hpp"
#include "hwopt/svr.hpp"

namespace hwopt {

enum class RankMode {
    Combined,                  // score = predicted_acc - lambda * perturbation
    AccuracyThenPerturbation,  // rank by accuracy, break ties by perturbation
};

struct PipelineConfig {
    HardwareBudget budget;
    Architecture seed_arch;
    SensitivityProfile base_profile;
    SvrModel predictor;
    std::optional<Calibration> calibration;

    std::vector<std::int64_t> lat0_list;
    double alpha = 0.5;
    double lambda = 1.0;
    RankMode rank_mode = RankMode::Combined;
    int top_k = 5;

    int rollouts = 500;
    int max_depth = 30;
    double exploration = 1.4142135623730951;
    std::uint64_t seed = 0;
    int trees = 1;
    std::uint32_t action_mask = kAllArchActions;
    SearchSpace space = SearchSpace::defaults();
    QuantSearchOptions quant;
    int threads = 1;
};

// key = value file; relative paths resolve against the file's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Calibration JSON {"slope":..,"intercept":..}; slope must be positive to be
// applied, so loading rejects non-positive slopes.
Calibration load_calibration(const std::filesystem::path& path);
void save_calibration(const CalibrationFit& fit, const std::filesystem::path& path);

// Maps a fixed-length profile onto a mutated architecture: trace/range come
// from the base entry at min(i, last), n_params from the layer's actual
// weight count. Analytic entries only.
SensitivityProfile profile_for_architecture(const SensitivityProfile& base,
                                            const Architecture& arch);

struct Candidate {
    Architecture arch;
    QuantScheme quant;
    AllocationSolution alloc;
    double perturbation = 0.0;
    double predicted_accuracy = 0.0;
    double score = 0.0;
    std::int64_t lat0 = 0;
    std::optional<double> calibrated_ms;

    std::int64_t latency_cycles() const { return alloc.latency.total_cycles; }
    // Plot/frontier abscissa: calibrated ms when available, cycles otherwise.
    double latency_value() const {
        return calibrated_ms ? *calibrated_ms : static_cast<double>(latency_cycles());
    }
};

struct BudgetResult {
    std::vector<Candidate> candidates;
    std::vector<std::string> warnings;
};

// Search at one latency budget, quantize and score the pool, rank, keep top_k.
BudgetResult run_budget(std::int64_t lat0, const PipelineConfig& config);

struct ParetoPoint {
    double latency = 0.0; // minimized
    double score = 0.0;   // maximized
};

// Indices of the maximal non-dominated subset, sorted by latency ascending;
// exact duplicate points are kept once (first occurrence).
std::vector<std::size_t> pareto_front(const std::vector<ParetoPoint>& points);

struct SweepResult {
    std::vector<Candidate> candidates;   // all budgets, in budget order
    std::vector<std::size_t> frontier;   // indices into candidates
    std::vector<std::string> warnings;
};

SweepResult sweep(const PipelineConfig& config);

// candidates.csv, frontier.csv, frontier.svg, and one arch_NNNN.json per
// distinct architecture, all inside out_dir.
void write_sweep_outputs(const SweepResult& result, const PipelineConfig& config,
                         const std::filesystem::path& out_dir);

// "pi/po/map/pf" entries joined by ';', one per template slot.
std::string allocation_string(const std::vector<KernelAllocation>& allocs);
std::vector<KernelAllocation> parse_allocation_string(const std::string& text);

// Re-checks a candidate end to end: structure, grouping, budget fit, stored
// latency, latency <= lat0, perturbation recomputation to 1e-9, score
// arithmetic. Returns the failures (empty = clean).
std::vector<std::string> revalidate_candidate(const Candidate& cand,
                                              const PipelineConfig& config);

} // namespace hwopt
