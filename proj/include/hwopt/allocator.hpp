#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hwopt/arch.hpp"
#include "hwopt/latency.hpp"
#include "hwopt/resource.hpp"

namespace hwopt {

enum class BudgetConstraint { Dsp, Luts, Bram };

const char* to_string(BudgetConstraint c);

struct InfeasibleError : std::runtime_error {
    BudgetConstraint which;
    InfeasibleError(BudgetConstraint c, const std::string& msg)
        : std::runtime_error(msg), which(c) {}
};

struct AllocationProblem {
    Architecture arch;
    QuantScheme quant;
    HardwareBudget budget;
    std::vector<int> parallelism_set = {1, 2, 4, 8, 16, 32, 64};
    bool include_quant_unit = true;
    bool allow_dsp = true;
    bool allow_lut = true;
    // Safety valve for adversarial template sizes; never hit in practice.
    std::int64_t node_budget = 200'000'000;
};

struct AllocationSolution {
    std::vector<KernelAllocation> per_kernel;
    ResourceReport resources;
    LatencyReport latency;
    bool optimal = true;
};

// Minimizes total network cycles subject to the DSP/LUT/BRAM budgets.
// Ties break toward fewer DSPs, then LUTs, then BRAMs, then the
// lexicographically smallest (pi, po) list, then dsp- before lut-mapping.
// Equals exhaustive enumeration, including tie-breaks.
AllocationSolution solve(const AllocationProblem& problem);

// As solve(), but infeasibility comes back as nullopt (constraint in
// *blocking when given) instead of an exception.
std::optional<AllocationSolution> solve_or_null(const AllocationProblem& problem,
                                                BudgetConstraint* blocking = nullptr);

} // namespace hwopt
