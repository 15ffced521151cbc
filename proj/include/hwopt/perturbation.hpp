#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwopt/arch.hpp"

namespace hwopt {

struct BadProfile : std::runtime_error {
    explicit BadProfile(const std::string& msg) : std::runtime_error(msg) {}
};

// Per-layer second-order sensitivity. Empirical entries carry the actual
// weight tensor (per output channel); analytic entries carry the weight
// range and parameter count for the uniform-noise model.
struct LayerSensitivity {
    double trace = 0.0;                 // mean Hessian trace
    std::int64_t n_params = 0;
    std::optional<double> range;        // analytic mode: weights span [-range, range]
    std::optional<std::vector<std::vector<double>>> channels; // empirical mode

    bool analytic() const { return range.has_value(); }
    bool empirical() const { return channels.has_value(); }
};

struct SensitivityProfile {
    std::vector<LayerSensitivity> per_layer;

    // CSV with header `layer,trace,n_params,range` (analytic) or
    // `layer,trace,tensor_path` (empirical; paths relative to the CSV).
    static SensitivityProfile from_csv(const std::filesystem::path& path);
};

// Binary tensor container: uint32 rank, uint32 dims[rank], float32 data,
// all little-endian; dims[0] is the channel axis.
std::vector<std::vector<double>> load_tensor_channels(const std::filesystem::path& path);
void save_tensor_channels(const std::vector<std::vector<double>>& channels,
                          const std::filesystem::path& path);

struct QuantizedChannel {
    std::vector<double> dequant;
    double scale = 0.0;
};

// Symmetric linear quantizer: scale = max|w| / (2^(bits-1)-1), values rounded
// half away from zero and clamped to +-(2^(bits-1)-1) steps. An all-zero
// channel quantizes to zeros with scale 0.
QuantizedChannel quantize_channel(std::span<const double> weights, int bits);

// trace * ||W - dequant(W)||^2 (empirical) or trace * n * s^2/12 with
// s = 2*range / (2^bits - 1) (analytic).
double layer_perturbation(std::size_t layer_index, int bits, const SensitivityProfile& profile);

struct PerturbationReport {
    std::vector<double> per_layer; // 0 for skipped layers
    double total = 0.0;
};

// Per-layer bits come from the layer's template slot in the scheme; skipped
// layers contribute nothing. Profile length must match the layer count.
PerturbationReport total_perturbation(const Architecture& arch, const QuantScheme& quant,
                                      const SensitivityProfile& profile);

inline double estimate_accuracy_drop(double pretrained_acc, double lambda, double perturbation) {
    return pretrained_acc - lambda * perturbation;
}

} // namespace hwopt
