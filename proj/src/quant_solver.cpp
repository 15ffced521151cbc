#include "hwopt/quant_solver.hpp"

#include <algorithm>

namespace hwopt {

namespace {

QuantScheme scheme_from_bits(const std::vector<int>& bits, const QuantSearchOptions& opt,
                             std::optional<int> qa_override = std::nullopt) {
    QuantScheme q;
    q.q_p = opt.q_p;
    q.q_s = opt.q_s;
    for (int b : bits)
        q.per_kernel.push_back({qa_override.value_or(opt.fixed_qa), b});
    return q;
}

AllocationProblem make_problem(const Architecture& arch, const QuantScheme& scheme,
                               const HardwareBudget& budget, const QuantSearchOptions& opt) {
    AllocationProblem p;
    p.arch = arch;
    p.quant = scheme;
    p.budget = budget;
    p.parallelism_set = opt.parallelism_set;
    p.include_quant_unit = opt.include_quant_unit;
    return p;
}

} // namespace

std::optional<QuantSolution> solve_quant(const Architecture& arch,
                                         const SensitivityProfile& profile,
                                         const HardwareBudget& budget, std::int64_t lat0,
                                         double alpha,
                                         const QuantSearchOptions& options) {
    if (options.bit_choices.empty())
        throw std::invalid_argument("no bit choices");
    if (lat0 < 1)
        throw std::invalid_argument("lat0 must be positive");
    std::vector<int> choices = options.bit_choices;
    std::sort(choices.begin(), choices.end());
    choices.erase(std::unique(choices.begin(), choices.end()), choices.end());

    std::size_t slots = arch.tmpl.kernels.size();
    std::vector<int> qa_choices = options.search_qa ? choices : std::vector<int>{options.fixed_qa};

    std::optional<QuantSolution> best;
    std::int64_t best_total_bits = 0;

    std::vector<int> bits(slots, choices.front());
    auto consider = [&](const QuantScheme& scheme) {
        auto sol = solve_or_null(make_problem(arch, scheme, budget, options));
        if (!sol) return;
        std::int64_t latency = sol->latency.total_cycles;
        if (latency > lat0) return;
        if (options.enforce_lower_band &&
            static_cast<double>(latency) < alpha * static_cast<double>(lat0))
            return;
        PerturbationReport pert = total_perturbation(arch, scheme, profile);

        std::int64_t total_bits = 0;
        for (const auto& sb : scheme.per_kernel) total_bits += sb.q_w;

        bool take = false;
        if (!best) {
            take = true;
        } else if (pert.total != best->perturbation.total) {
            take = pert.total < best->perturbation.total;
        } else if (latency != best->alloc.latency.total_cycles) {
            take = latency < best->alloc.latency.total_cycles;
        } else if (total_bits != best_total_bits) {
            take = total_bits > best_total_bits;
        } else {
            for (std::size_t s = 0; s < slots; ++s) {
                int a = scheme.per_kernel[s].q_w, b = best->scheme.per_kernel[s].q_w;
                if (a != b) { take = a > b; break; }
            }
        }
        if (take) {
            best = QuantSolution{scheme, std::move(*sol), std::move(pert)};
            best_total_bits = total_bits;
        }
    };

    // Odometer over q_w choices per slot, times the q_a choices.
    for (int qa : qa_choices) {
        std::fill(bits.begin(), bits.end(), choices.front());
        while (true) {
            consider(scheme_from_bits(bits, options, qa));
            std::size_t s = 0;
            while (s < slots) {
                auto it = std::find(choices.begin(), choices.end(), bits[s]);
                if (++it != choices.end()) {
                    bits[s] = *it;
                    break;
                }
                bits[s] = choices.front();
                ++s;
            }
            if (s == slots) break;
        }
    }
    return best;
}

BandProbe probe_band(const Architecture& arch, const HardwareBudget& budget, std::int64_t lat0,
                     double alpha, const QuantSearchOptions& options) {
    if (options.bit_choices.empty())
        throw std::invalid_argument("no bit choices");
    int lo = *std::min_element(options.bit_choices.begin(), options.bit_choices.end());
    int hi = *std::max_element(options.bit_choices.begin(), options.bit_choices.end());

    BandProbe probe;
    auto eval = [&](int bits) -> std::optional<std::int64_t> {
        std::vector<int> v(arch.tmpl.kernels.size(), bits);
        QuantScheme scheme = scheme_from_bits(
            v, options, options.search_qa ? std::optional<int>(bits) : std::nullopt);
        auto sol = solve_or_null(make_problem(arch, scheme, budget, options));
        if (!sol) return std::nullopt;
        return sol->latency.total_cycles;
    };

    auto low = eval(lo);
    auto high = eval(hi);
    if (!low || !high) return probe; // allocation itself infeasible
    probe.allocated = true;
    probe.low_bits_cycles = *low;
    probe.high_bits_cycles = *high;
    probe.feasible = static_cast<double>(*high) >= alpha * static_cast<double>(lat0) &&
                     *low <= lat0;
    return probe;
}

bool feasibility_band(const Architecture& arch, const HardwareBudget& budget, std::int64_t lat0,
                      double alpha, const QuantSearchOptions& options) {
    return probe_band(arch, budget, lat0, alpha, options).feasible;
}

} // namespace hwopt
