#include "hwopt/latency.hpp"

#include <algorithm>
#include <cmath>

namespace hwopt {

std::int64_t layer_compute_cycles(const Layer& layer, const KernelAllocation& alloc) {
    if (alloc.pi < 1 || alloc.po < 1)
        throw InvalidAllocation("parallelism factors must be >= 1");
    std::int64_t hw = std::int64_t(layer.out_h()) * layer.out_w();
    if (layer.kernel.kind == KernelKind::DepthwiseConv)
        return hw * ceil_div(layer.in_ch, alloc.po);
    return hw * ceil_div(layer.in_ch, alloc.pi) * ceil_div(layer.out_ch, alloc.po);
}

std::int64_t activation_transfer_cycles(std::int64_t h, std::int64_t w, std::int64_t ch,
                                        int q_a, std::int64_t bw) {
    if (h < 0 || w < 0 || ch < 0 || q_a < 1 || bw < 1)
        throw InvalidAllocation("transfer needs non-negative dims, q_a >= 1, bw >= 1");
    return ceil_div(h * w * ch * q_a, bw);
}

std::int64_t weight_load_cycles(const Layer& layer, int q_w, std::int64_t bw) {
    if (q_w < 1 || bw < 1)
        throw InvalidAllocation("weight load needs q_w >= 1, bw >= 1");
    if (layer.skipped) return 0;
    return ceil_div(layer.weight_count() * q_w, bw);
}

SubgraphLatency subgraph_latency(const SubgraphInstance& inst, const Architecture& arch,
                                 const QuantScheme& quant,
                                 std::span<const KernelAllocation> allocs, std::int64_t bw) {
    if (allocs.size() != inst.slot_to_layer.size() ||
        quant.per_kernel.size() != inst.slot_to_layer.size())
        throw InvalidAllocation("allocation/quant slot count does not match template");

    SubgraphLatency lat;
    for (std::size_t s = 0; s < inst.slot_to_layer.size(); ++s) {
        if (inst.slot_skipped(s)) continue;
        const Layer& layer = arch.layers[inst.slot_to_layer[s]];
        lat.compute.push_back(layer_compute_cycles(layer, allocs[s]));
        lat.weight_load += weight_load_cycles(layer, quant.per_kernel[s].q_w, bw);
    }

    auto first = inst.first_layer();
    auto last = inst.last_layer();
    if (!first) {
        lat.total = 0;
        return lat;
    }
    auto slot_of = [&](std::size_t layer_idx) {
        for (std::size_t s = 0; s < inst.slot_to_layer.size(); ++s)
            if (inst.slot_to_layer[s] == layer_idx) return s;
        return std::size_t(0);
    };
    const Layer& lf = arch.layers[*first];
    const Layer& ll = arch.layers[*last];
    lat.lat_on = activation_transfer_cycles(lf.in_h, lf.in_w, lf.in_ch,
                                            quant.per_kernel[slot_of(*first)].q_a, bw);
    lat.lat_off = activation_transfer_cycles(ll.out_h(), ll.out_w(), ll.out_ch,
                                             quant.per_kernel[slot_of(*last)].q_a, bw);

    std::int64_t steady = std::max(lat.lat_on, lat.lat_off);
    for (auto c : lat.compute) steady = std::max(steady, c);
    lat.total = steady + lat.weight_load;
    return lat;
}

std::int64_t subgraph_cycles(const SubgraphInstance& inst, const Architecture& arch,
                             const QuantScheme& quant,
                             std::span<const KernelAllocation> allocs, std::int64_t bw) {
    return subgraph_latency(inst, arch, quant, allocs, bw).total;
}

LatencyReport network_latency(const Architecture& arch, const QuantScheme& quant,
                              std::span<const KernelAllocation> allocs, std::int64_t bw,
                              const std::optional<Calibration>& calibration) {
    LatencyReport report;
    for (const auto& inst : group_layers(arch)) {
        report.per_subgraph.push_back(subgraph_latency(inst, arch, quant, allocs, bw));
        report.total_cycles += report.per_subgraph.back().total;
    }
    if (calibration)
        report.calibrated_ms = calibration->apply(static_cast<double>(report.total_cycles));
    return report;
}

CalibrationFit fit_calibration(std::span<const std::pair<double, double>> pairs) {
    if (pairs.size() < 2)
        throw DegenerateFit("calibration needs at least two pairs");
    double n = static_cast<double>(pairs.size());
    double sx = 0, sy = 0;
    for (const auto& [x, y] : pairs) {
        sx += x;
        sy += y;
    }
    double mx = sx / n, my = sy / n;
    double sxx = 0, syy = 0, sxy = 0;
    for (const auto& [x, y] : pairs) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if (sxx == 0.0)
        throw DegenerateFit("calibration abscissae are all equal");

    CalibrationFit fit;
    fit.calibration.slope = sxy / sxx;
    fit.calibration.intercept = my - fit.calibration.slope * mx;
    fit.pearson_r = syy == 0.0 ? 0.0 : sxy / std::sqrt(sxx * syy);
    return fit;
}

} // namespace hwopt
