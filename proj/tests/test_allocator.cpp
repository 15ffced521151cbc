#include <doctest.h>

#include <optional>
#include <stdexcept>
#include <vector>

#include "hwopt/allocator.hpp"

#include "oracles.hpp"
#include "support.hpp"

using namespace hwopt;
using namespace testsup;

namespace {

// Single pointwise layer at 4x4; the smallest workable search problem.
AllocationProblem small_problem() {
    AllocationProblem p;
    p.arch.resolution = 4;
    p.arch.tmpl.kernels = {KernelSpec{KernelKind::FullConv, 1}};
    p.arch.layers = {make_layer(KernelKind::FullConv, 1, 1, 16, 16)};
    p.arch.derive_dims();
    p.quant = QuantScheme::uniform(1, 8, 8);
    p.budget = HardwareBudget::zu3eg();
    p.budget.t_dsp = 16;
    p.parallelism_set = {1, 2, 4};
    p.include_quant_unit = false;
    return p;
}

} // namespace

TEST_CASE("allocator picks the fastest in-budget configuration") {
    auto p = small_problem();

    SUBCASE("DSP fabric only") {
        p.allow_lut = false;
        auto sol = solve(p);
        REQUIRE(sol.per_kernel.size() == 1);
        CHECK(sol.per_kernel[0] == KernelAllocation{4, 4, MapTarget::Dsp, 4});
        CHECK(sol.resources.dsp == 8);
        CHECK(sol.resources.luts == 0);
        CHECK(sol.resources.bram == 4);
        REQUIRE(sol.latency.per_subgraph.size() == 1);
        CHECK(sol.latency.per_subgraph[0].compute[0] == 256);
        CHECK(sol.latency.total_cycles == 288);
        CHECK(sol.optimal);
    }

    SUBCASE("a latency tie breaks toward fewer DSPs, so the LUT mapping wins") {
        auto sol = solve(p);
        REQUIRE(sol.per_kernel.size() == 1);
        CHECK(sol.per_kernel[0] == KernelAllocation{4, 4, MapTarget::Lut, 4});
        CHECK(sol.resources.dsp == 0);
        CHECK(sol.resources.luts == 16 * (64 + 23)); // macs * (mac cost + adder)
        CHECK(sol.resources.bram == 4);
        CHECK(sol.latency.total_cycles == 288);
        CHECK(sol.optimal);
    }
}

TEST_CASE("allocator reports the blocking budget when infeasible") {
    SUBCASE("no DSPs and no LUT fallback") {
        auto p = small_problem();
        p.budget.t_dsp = 0;
        p.allow_lut = false;
        BudgetConstraint blocking = BudgetConstraint::Bram;
        CHECK(!solve_or_null(p, &blocking).has_value());
        CHECK(blocking == BudgetConstraint::Dsp);
        try {
            solve(p);
            FAIL("expected InfeasibleError");
        } catch (const InfeasibleError& e) {
            CHECK(e.which == BudgetConstraint::Dsp);
        }
    }
    SUBCASE("weights cannot fit in zero BRAM") {
        auto p = small_problem();
        p.budget.t_bram = 0;
        BudgetConstraint blocking = BudgetConstraint::Dsp;
        CHECK(!solve_or_null(p, &blocking).has_value());
        CHECK(blocking == BudgetConstraint::Bram);
    }
    SUBCASE("LUT-only mapping against a tiny LUT cap") {
        auto p = small_problem();
        p.allow_dsp = false;
        p.budget.t_luts = 1000;
        p.budget.beta = 0.05; // cap 50 < cheapest MAC cost 87
        BudgetConstraint blocking = BudgetConstraint::Dsp;
        CHECK(!solve_or_null(p, &blocking).has_value());
        CHECK(blocking == BudgetConstraint::Luts);
    }
}

TEST_CASE("raising the usable-LUT fraction never slows the solution") {
    auto p = small_problem();
    p.allow_dsp = false;
    p.budget.t_dsp = 0;
    p.budget.t_luts = 1000;

    p.budget.beta = 0.1; // cap 100: only the 1x1 MAC array fits (87 LUTs)
    auto slow = solve(p);
    CHECK(slow.per_kernel[0] == KernelAllocation{1, 1, MapTarget::Lut, 1});

    std::int64_t prev = slow.latency.total_cycles;
    for (double beta : {0.2, 0.4, 0.6, 0.8, 1.0}) {
        p.budget.beta = beta;
        auto sol = solve(p);
        CHECK(sol.latency.total_cycles <= prev);
        CHECK(sol.resources.luts <= p.budget.lut_cap());
        prev = sol.latency.total_cycles;
    }
    p.budget.beta = 1.0;
    CHECK(solve(p).latency.total_cycles < slow.latency.total_cycles);
}

TEST_CASE("full tie falls through to the lexicographic config order") {
    // 16x1152 pointwise: the weight buffer rounds to 8 BRAMs for any pf in
    // {2,4}, the compute divides exactly, and the DSP cap kills (4,4); the
    // (2,4) and (4,2) candidates tie on every cost and (2,4) must win.
    AllocationProblem p;
    p.arch.resolution = 4;
    p.arch.tmpl.kernels = {KernelSpec{KernelKind::FullConv, 1}};
    p.arch.layers = {make_layer(KernelKind::FullConv, 1, 1, 16, 1152)};
    p.arch.derive_dims();
    p.quant = QuantScheme::uniform(1, 8, 8);
    p.budget = HardwareBudget::zu3eg();
    p.budget.t_dsp = 4;
    p.parallelism_set = {2, 4};
    p.include_quant_unit = false;
    p.allow_lut = false;

    auto sol = solve(p);
    CHECK(sol.per_kernel[0] == KernelAllocation{2, 4, MapTarget::Dsp, 2});
    CHECK(sol.resources.dsp == 4);

    auto oracle_best = oracle::brute_force_allocate(p);
    REQUIRE(oracle_best.found);
    CHECK(oracle_best.per_kernel[0] == sol.per_kernel[0]);
}

TEST_CASE("depthwise slots never get input-channel parallelism") {
    AllocationProblem p;
    p.arch = mbv2_fixture();
    p.quant = QuantScheme::uniform(3, 8, 8);
    p.budget = HardwareBudget::zu3eg();
    p.parallelism_set = {1, 2, 4};
    auto sol = solve(p);
    REQUIRE(sol.per_kernel.size() == 3);
    CHECK(sol.per_kernel[1].pi == 1);
    CHECK(sol.per_kernel[1].pf == sol.per_kernel[1].po);
    CHECK(sol.per_kernel[0].pf == sol.per_kernel[0].pi);
}

TEST_CASE("allocator equals exhaustive enumeration on random problems") {
    Rng rng(31337);
    int solved = 0, infeasible = 0;
    for (int trial = 0; trial < 18; ++trial) {
        AllocationProblem p;
        p.arch = random_architecture(rng, 3);
        p.quant = random_quant(rng, p.arch.tmpl.kernels.size());
        p.budget = HardwareBudget::zu3eg();
        p.budget.t_dsp = rng.uniform(0, 80);
        p.budget.t_luts = rng.uniform(0, 60000);
        p.budget.beta = rng.real(0.3, 1.0);
        // Weight buffers need at least one BRAM per slot, so a starved BRAM
        // budget on every third trial guarantees infeasible instances too.
        p.budget.t_bram = trial % 3 == 2 ? rng.uniform(0, 1) : rng.uniform(0, 60);
        p.parallelism_set = rng.chance(0.5) ? std::vector<int>{1, 2, 4}
                                            : std::vector<int>{1, 2, 4, 8};
        p.include_quant_unit = rng.chance(0.5);
        p.allow_dsp = rng.chance(0.8);
        p.allow_lut = !p.allow_dsp || rng.chance(0.5);
        auto want = oracle::brute_force_allocate(p);
        auto got = solve_or_null(p);
        CAPTURE(trial);
        REQUIRE(got.has_value() == want.found);
        if (!want.found) {
            ++infeasible;
            continue;
        }
        ++solved;
        CHECK(got->latency.total_cycles == want.latency);
        CHECK(got->resources == want.resources);
        REQUIRE(got->per_kernel.size() == want.per_kernel.size());
        for (std::size_t s = 0; s < want.per_kernel.size(); ++s)
            CHECK(got->per_kernel[s] == want.per_kernel[s]);
        CHECK(got->optimal);
    }
    // The budget ranges above should exercise both outcomes.
    CHECK(solved >= 3);
    CHECK(infeasible >= 3);
}

TEST_CASE("allocator rejects malformed problems") {
    auto p = small_problem();
    p.allow_dsp = p.allow_lut = false;
    CHECK_THROWS_AS(solve(p), std::invalid_argument);

    p = small_problem();
    p.parallelism_set.clear();
    CHECK_THROWS_AS(solve(p), std::invalid_argument);

    p = small_problem();
    p.parallelism_set = {0, 2};
    CHECK_THROWS_AS(solve(p), std::invalid_argument);

    p = small_problem();
    p.quant.per_kernel.push_back({8, 8});
    CHECK_THROWS_AS(solve(p), std::invalid_argument);

    p = small_problem();
    p.arch.layers[0].stride = 3; // not a valid stride
    CHECK_THROWS_AS(solve(p), std::invalid_argument);
}

TEST_CASE("node budget degrades gracefully") {
    auto p = small_problem();
    p.node_budget = 1; // aborts before any complete assignment
    CHECK(!solve_or_null(p).has_value());

    p.node_budget = 3; // root plus two leaves: a solution exists but is unproven
    auto sol = solve_or_null(p);
    REQUIRE(sol.has_value());
    CHECK(!sol->optimal);
    CHECK(sol->resources.dsp <= p.budget.t_dsp);
    auto full = solve(small_problem());
    CHECK(sol->latency.total_cycles >= full.latency.total_cycles);
}
