#include "hwopt/allocator.hpp"

#include <algorithm>
#include <limits>

namespace hwopt {

const char* to_string(BudgetConstraint c) {
    switch (c) {
        case BudgetConstraint::Dsp: return "dsp";
        case BudgetConstraint::Luts: return "luts";
        default: return "bram";
    }
}

namespace {

struct SlotConfig {
    KernelAllocation alloc;
    ResourceReport res;
    std::vector<std::int64_t> comp; // per instance; 0 where the slot is skipped
};

// (pi, po, map) with dsp before lut; the tail of the solution tie-break.
bool config_order_less(const KernelAllocation& a, const KernelAllocation& b) {
    if (a.pi != b.pi) return a.pi < b.pi;
    if (a.po != b.po) return a.po < b.po;
    return a.map_to < b.map_to;
}

struct Best {
    bool found = false;
    std::int64_t latency = 0;
    ResourceReport res;
    std::vector<const SlotConfig*> picks;
};

bool better_than_best(std::int64_t latency, const ResourceReport& res,
                      const std::vector<const SlotConfig*>& picks, const Best& best) {
    if (!best.found) return true;
    if (latency != best.latency) return latency < best.latency;
    if (res.dsp != best.res.dsp) return res.dsp < best.res.dsp;
    if (res.luts != best.res.luts) return res.luts < best.res.luts;
    if (res.bram != best.res.bram) return res.bram < best.res.bram;
    for (std::size_t s = 0; s < picks.size(); ++s) {
        const auto& a = picks[s]->alloc;
        const auto& b = best.picks[s]->alloc;
        if (!(a == b)) return config_order_less(a, b);
    }
    return false;
}

struct Search {
    const AllocationProblem& problem;
    std::vector<std::vector<SlotConfig>> slot_configs;
    std::vector<std::int64_t> base;        // per instance: max(lat_on, lat_off)
    std::int64_t weight_total = 0;         // allocation-independent
    std::size_t num_instances = 0;
    std::int64_t lut_cap = 0;

    // suffix_min_comp[s][i]: smallest possible contribution of slots >= s to
    // instance i's compute max. suffix_min_res[s]: component-wise minimum
    // resources of slots >= s.
    std::vector<std::vector<std::int64_t>> suffix_min_comp;
    std::vector<ResourceReport> suffix_min_res;

    Best best;
    std::vector<const SlotConfig*> picks;
    std::int64_t nodes = 0;
    bool aborted = false;

    explicit Search(const AllocationProblem& p) : problem(p) {}

    void dfs(std::size_t s, const std::vector<std::int64_t>& inst_max, ResourceReport used);
    std::int64_t latency_of(const std::vector<std::int64_t>& inst_max) const;
};

std::int64_t Search::latency_of(const std::vector<std::int64_t>& inst_max) const {
    std::int64_t total = weight_total;
    for (std::size_t i = 0; i < num_instances; ++i)
        total += std::max(base[i], inst_max[i]);
    return total;
}

void Search::dfs(std::size_t s, const std::vector<std::int64_t>& inst_max, ResourceReport used) {
    if (aborted) return;
    if (++nodes > problem.node_budget) {
        aborted = true;
        return;
    }
    if (s == slot_configs.size()) {
        std::int64_t latency = latency_of(inst_max);
        if (better_than_best(latency, used, picks, best)) {
            best.found = true;
            best.latency = latency;
            best.res = used;
            best.picks = picks;
        }
        return;
    }
    for (const SlotConfig& cfg : slot_configs[s]) {
        ResourceReport r = used;
        r += cfg.res;
        if (r.dsp + suffix_min_res[s + 1].dsp > problem.budget.t_dsp) continue;
        if (r.luts + suffix_min_res[s + 1].luts > lut_cap) continue;
        if (r.bram + suffix_min_res[s + 1].bram > problem.budget.t_bram) continue;

        std::vector<std::int64_t> next_max(num_instances);
        std::int64_t bound = weight_total;
        for (std::size_t i = 0; i < num_instances; ++i) {
            next_max[i] = std::max(inst_max[i], cfg.comp[i]);
            bound += std::max({base[i], next_max[i], suffix_min_comp[s + 1][i]});
        }
        if (best.found && bound > best.latency) continue;

        picks[s] = &cfg;
        dfs(s + 1, next_max, r);
    }
}

} // namespace

std::optional<AllocationSolution> solve_or_null(const AllocationProblem& problem,
                                                BudgetConstraint* blocking) {
    auto violations = validate_structure(problem.arch);
    if (!violations.empty())
        throw std::invalid_argument("allocation on invalid architecture: " +
                                    violations.front().message);
    if (!problem.allow_dsp && !problem.allow_lut)
        throw std::invalid_argument("at least one MAC mapping must be allowed");
    if (problem.parallelism_set.empty())
        throw std::invalid_argument("parallelism set is empty");
    int m = problem.arch.tmpl.size();
    if (static_cast<int>(problem.quant.per_kernel.size()) != m)
        throw std::invalid_argument("quant scheme slot count does not match template");

    std::vector<int> pset = problem.parallelism_set;
    std::sort(pset.begin(), pset.end());
    pset.erase(std::unique(pset.begin(), pset.end()), pset.end());
    if (pset.front() < 1)
        throw std::invalid_argument("parallelism factors must be >= 1");

    auto instances = group_layers(problem.arch);

    Search search(problem);
    search.num_instances = instances.size();
    search.lut_cap = problem.budget.lut_cap();

    // Allocation-independent latency pieces.
    search.base.assign(instances.size(), 0);
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        auto first = inst.first_layer();
        if (!first) continue;
        auto slot_of = [&](std::size_t layer_idx) {
            for (std::size_t s = 0; s < inst.slot_to_layer.size(); ++s)
                if (inst.slot_to_layer[s] == layer_idx) return s;
            return std::size_t(0);
        };
        const Layer& lf = problem.arch.layers[*first];
        const Layer& ll = problem.arch.layers[*inst.last_layer()];
        std::int64_t on = activation_transfer_cycles(
            lf.in_h, lf.in_w, lf.in_ch, problem.quant.per_kernel[slot_of(*first)].q_a,
            problem.budget.bw);
        std::int64_t off = activation_transfer_cycles(
            ll.out_h(), ll.out_w(), ll.out_ch, problem.quant.per_kernel[slot_of(*inst.last_layer())].q_a,
            problem.budget.bw);
        search.base[i] = std::max(on, off);
        for (std::size_t s = 0; s < inst.slot_to_layer.size(); ++s) {
            if (inst.slot_skipped(s)) continue;
            search.weight_total += weight_load_cycles(problem.arch.layers[inst.slot_to_layer[s]],
                                                      problem.quant.per_kernel[s].q_w,
                                                      problem.budget.bw);
        }
    }

    // Slot-level facts.
    std::int64_t wc_max = 0;
    for (const auto& layer : problem.arch.layers)
        if (!layer.skipped)
            wc_max = std::max(wc_max, std::int64_t(layer.in_w) * layer.in_ch);

    search.slot_configs.resize(static_cast<std::size_t>(m));
    for (int s = 0; s < m; ++s) {
        const KernelSpec& spec = problem.arch.tmpl.kernels[static_cast<std::size_t>(s)];
        std::int64_t n_w = 0, oc_max = 0;
        std::vector<std::pair<std::size_t, std::size_t>> mapped; // (instance, layer)
        for (std::size_t i = 0; i < instances.size(); ++i) {
            std::size_t li = instances[i].slot_to_layer[static_cast<std::size_t>(s)];
            if (li == SubgraphInstance::npos) continue;
            mapped.emplace_back(i, li);
            n_w = std::max(n_w, problem.arch.layers[li].weight_count());
            oc_max = std::max(oc_max, std::int64_t(problem.arch.layers[li].out_ch));
        }

        SlotQuant quant{problem.quant.per_kernel[static_cast<std::size_t>(s)].q_a,
                        problem.quant.per_kernel[static_cast<std::size_t>(s)].q_w,
                        problem.quant.q_p, problem.quant.q_s};

        std::vector<SlotConfig> configs;
        bool depthwise = spec.kind == KernelKind::DepthwiseConv;
        // Depthwise slots have no input-channel parallelism: pi is pinned to 1
        // regardless of the parallelism set.
        std::vector<int> pi_choices = depthwise ? std::vector<int>{1} : pset;
        for (int pi : pi_choices) {
            for (int po : pset) {
                for (MapTarget map : {MapTarget::Dsp, MapTarget::Lut}) {
                    if (map == MapTarget::Dsp && !problem.allow_dsp) continue;
                    if (map == MapTarget::Lut && !problem.allow_lut) continue;
                    SlotConfig cfg;
                    cfg.alloc = {pi, po, map, depthwise ? po : pi};
                    cfg.res = kernel_resources(spec, cfg.alloc, quant, n_w, wc_max, oc_max,
                                               problem.budget.lut_table,
                                               problem.include_quant_unit);
                    cfg.comp.assign(instances.size(), 0);
                    for (const auto& [inst_idx, layer_idx] : mapped)
                        cfg.comp[inst_idx] =
                            layer_compute_cycles(problem.arch.layers[layer_idx], cfg.alloc);
                    configs.push_back(std::move(cfg));
                }
            }
        }

        std::sort(configs.begin(), configs.end(), [](const SlotConfig& a, const SlotConfig& b) {
            return config_order_less(a.alloc, b.alloc);
        });

        // Drop configs that some earlier-or-cheaper config beats on every
        // compute entry and every resource component; the survivor wins any
        // tie-break the dropped one could have won, so the optimum (including
        // tie-breaks) is unchanged.
        std::vector<SlotConfig> kept;
        for (std::size_t a = 0; a < configs.size(); ++a) {
            bool dominated = false;
            for (std::size_t b = 0; b < configs.size() && !dominated; ++b) {
                if (a == b) continue;
                const auto& ca = configs[a];
                const auto& cb = configs[b];
                if (cb.res.dsp > ca.res.dsp || cb.res.luts > ca.res.luts ||
                    cb.res.bram > ca.res.bram)
                    continue;
                bool comp_le = true;
                for (std::size_t i = 0; i < ca.comp.size(); ++i)
                    if (cb.comp[i] > ca.comp[i]) { comp_le = false; break; }
                if (!comp_le) continue;
                bool res_strict = cb.res.dsp < ca.res.dsp || cb.res.luts < ca.res.luts ||
                                  cb.res.bram < ca.res.bram;
                if (res_strict || config_order_less(cb.alloc, ca.alloc)) dominated = true;
            }
            if (!dominated) kept.push_back(configs[a]);
        }
        search.slot_configs[static_cast<std::size_t>(s)] = std::move(kept);
    }

    // Suffix minima for bounding.
    search.suffix_min_comp.assign(static_cast<std::size_t>(m) + 1,
                                  std::vector<std::int64_t>(instances.size(), 0));
    search.suffix_min_res.assign(static_cast<std::size_t>(m) + 1, ResourceReport{});
    for (int s = m - 1; s >= 0; --s) {
        const auto& configs = search.slot_configs[static_cast<std::size_t>(s)];
        ResourceReport rmin{std::numeric_limits<std::int64_t>::max(),
                            std::numeric_limits<std::int64_t>::max(),
                            std::numeric_limits<std::int64_t>::max()};
        std::vector<std::int64_t> cmin(instances.size(),
                                       std::numeric_limits<std::int64_t>::max());
        for (const auto& cfg : configs) {
            rmin.dsp = std::min(rmin.dsp, cfg.res.dsp);
            rmin.luts = std::min(rmin.luts, cfg.res.luts);
            rmin.bram = std::min(rmin.bram, cfg.res.bram);
            for (std::size_t i = 0; i < instances.size(); ++i)
                cmin[i] = std::min(cmin[i], cfg.comp[i]);
        }
        auto& out_res = search.suffix_min_res[static_cast<std::size_t>(s)];
        const auto& nxt = search.suffix_min_res[static_cast<std::size_t>(s) + 1];
        out_res.dsp = rmin.dsp + nxt.dsp;
        out_res.luts = rmin.luts + nxt.luts;
        out_res.bram = rmin.bram + nxt.bram;
        for (std::size_t i = 0; i < instances.size(); ++i)
            search.suffix_min_comp[static_cast<std::size_t>(s)][i] =
                std::max(cmin[i], search.suffix_min_comp[static_cast<std::size_t>(s) + 1][i]);
    }

    search.picks.assign(static_cast<std::size_t>(m), nullptr);
    search.dfs(0, std::vector<std::int64_t>(instances.size(), 0), ResourceReport{});

    if (!search.best.found) {
        if (blocking) {
            // Name the first budget that even the per-component minimum blows.
            const auto& rmin = search.suffix_min_res[0];
            if (rmin.dsp > problem.budget.t_dsp) *blocking = BudgetConstraint::Dsp;
            else if (rmin.luts > search.lut_cap) *blocking = BudgetConstraint::Luts;
            else *blocking = BudgetConstraint::Bram;
        }
        return std::nullopt;
    }

    AllocationSolution sol;
    for (const auto* cfg : search.best.picks) sol.per_kernel.push_back(cfg->alloc);
    sol.resources = search.best.res;
    sol.latency = network_latency(problem.arch, problem.quant, sol.per_kernel,
                                  problem.budget.bw);
    sol.optimal = !search.aborted;
    return sol;
}

AllocationSolution solve(const AllocationProblem& problem) {
    BudgetConstraint blocking = BudgetConstraint::Dsp;
    auto sol = solve_or_null(problem, &blocking);
    if (!sol)
        throw InfeasibleError(blocking, std::string("no allocation fits the ") +
                                            to_string(blocking) + " budget");
    return *sol;
}

} // namespace hwopt
