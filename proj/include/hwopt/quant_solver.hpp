#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hwopt/allocator.hpp"
#include "hwopt/arch.hpp"
#include "hwopt/perturbation.hpp"

namespace hwopt {

struct QuantSearchOptions {
    std::vector<int> bit_choices = {2, 3, 4, 5, 6, 7, 8};
    int fixed_qa = 8;        // activations stay here unless search_qa is set
    bool search_qa = false;  // search q_a jointly with q_w (same choice set)
    int q_p = 16;
    int q_s = 16;
    // Also require latency >= alpha * lat0 for the chosen scheme; by default
    // the lower band only filters architectures (feasibility_band), not the
    // final bitwidth choice.
    bool enforce_lower_band = false;
    std::vector<int> parallelism_set = {1, 2, 4, 8, 16, 32, 64};
    bool include_quant_unit = true;
};

struct QuantSolution {
    QuantScheme scheme;
    AllocationSolution alloc;
    PerturbationReport perturbation;
};

// Enumerates per-slot weight bitwidths (activations fixed or searched),
// solving the allocation for each scheme, and keeps the feasible scheme with
// minimum total perturbation. Ties break toward lower latency, then higher
// total bits, then the lexicographically larger bits vector. nullopt = no
// scheme fits under lat0 (and above alpha*lat0 when enforced).
std::optional<QuantSolution> solve_quant(const Architecture& arch,
                                         const SensitivityProfile& profile,
                                         const HardwareBudget& budget, std::int64_t lat0,
                                         double alpha,
                                         const QuantSearchOptions& options = {});

struct BandProbe {
    bool allocated = false;            // both probe allocations fit the budgets
    bool feasible = false;
    std::int64_t low_bits_cycles = 0;  // best latency at the smallest bitwidth
    std::int64_t high_bits_cycles = 0; // best latency at the largest bitwidth
};

// Bitwidth bracketing: an architecture is worth searching iff its fastest
// (2-bit) form meets lat0 and its slowest (8-bit) form stays above
// alpha * lat0. Infeasible allocation at either probe rejects it.
BandProbe probe_band(const Architecture& arch, const HardwareBudget& budget, std::int64_t lat0,
                     double alpha, const QuantSearchOptions& options = {});

bool feasibility_band(const Architecture& arch, const HardwareBudget& budget, std::int64_t lat0,
                      double alpha, const QuantSearchOptions& options = {});

} // namespace hwopt
