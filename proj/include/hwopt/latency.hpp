#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hwopt/arch.hpp"
#include "hwopt/resource.hpp"

namespace hwopt {

// Latency breakdown of one subgraph instance. Activation transfers overlap
// with compute (double buffering), so the steady-state cost is the max of
// those terms; weight loads serialize and add on top.
struct SubgraphLatency {
    std::int64_t lat_on = 0;
    std::int64_t lat_off = 0;
    std::vector<std::int64_t> compute; // per non-skipped slot, in slot order
    std::int64_t weight_load = 0;
    std::int64_t total = 0;
};

struct LatencyReport {
    std::vector<SubgraphLatency> per_subgraph;
    std::int64_t total_cycles = 0;
    std::optional<double> calibrated_ms;
};

// Affine map from model latency to measured milliseconds.
struct Calibration {
    double slope = 1.0;
    double intercept = 0.0;

    double apply(double model_latency) const { return slope * model_latency + intercept; }
};

struct CalibrationFit {
    Calibration calibration;
    double pearson_r = 0.0;
};

struct DegenerateFit : std::runtime_error {
    explicit DegenerateFit(const std::string& msg) : std::runtime_error(msg) {}
};

// Cycles to compute one layer on its slot; h/w are output spatial dims.
std::int64_t layer_compute_cycles(const Layer& layer, const KernelAllocation& alloc);

// Cycles to stream a h*w*ch activation tensor at q_a bits over a bw-bit bus.
std::int64_t activation_transfer_cycles(std::int64_t h, std::int64_t w, std::int64_t ch,
                                        int q_a, std::int64_t bw);

// Cycles to preload one layer's weights; zero for skipped layers.
std::int64_t weight_load_cycles(const Layer& layer, int q_w, std::int64_t bw);

SubgraphLatency subgraph_latency(const SubgraphInstance& inst, const Architecture& arch,
                                 const QuantScheme& quant,
                                 std::span<const KernelAllocation> allocs, std::int64_t bw);

std::int64_t subgraph_cycles(const SubgraphInstance& inst, const Architecture& arch,
                             const QuantScheme& quant,
                             std::span<const KernelAllocation> allocs, std::int64_t bw);

// Sums grouped subgraph instances over the whole network.
LatencyReport network_latency(const Architecture& arch, const QuantScheme& quant,
                              std::span<const KernelAllocation> allocs, std::int64_t bw,
                              const std::optional<Calibration>& calibration = std::nullopt);

// Least-squares line through (model latency, measured ms) pairs plus the
// Pearson correlation of the pairs. Throws DegenerateFit when fewer than two
// distinct abscissae exist.
CalibrationFit fit_calibration(std::span<const std::pair<double, double>> pairs);

} // namespace hwopt
