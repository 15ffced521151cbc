#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>

#include "hwopt/arch.hpp"

namespace hwopt {

// One 18-Kb BRAM holds 18432 bits.
inline constexpr std::int64_t kBramBits = 18432;

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// LUT cost of one q_w x q_a multiplier, for bitwidths 2..8 on both axes.
class LutTable {
public:
    static constexpr int kMinBits = 2;
    static constexpr int kMaxBits = 8;

    int at(int q_w, int q_a) const;
    void set(int q_w, int q_a, int luts);

    // Placeholder costs (q_w * q_a) used until a device-characterized table
    // is supplied; monotone and positive like a real one.
    static LutTable product_default();
    // CSV with header qw,qa,luts and all 49 rows.
    static LutTable from_csv(const std::filesystem::path& path);

    // Entries must be positive and non-decreasing in each argument.
    void check() const;

private:
    std::array<int, 49> entries_{};
    static int index(int q_w, int q_a);
};

enum class MapTarget { Dsp, Lut };

const char* to_string(MapTarget target);
MapTarget map_target_from_string(const std::string& s);

// Per-template-slot hardware assignment. pf is the weight-buffer partition
// factor: pi for full conv, po for depthwise.
struct KernelAllocation {
    int pi = 1;
    int po = 1;
    MapTarget map_to = MapTarget::Dsp;
    int pf = 1;
    bool operator==(const KernelAllocation&) const = default;
};

struct ResourceReport {
    std::int64_t dsp = 0;
    std::int64_t luts = 0;
    std::int64_t bram = 0;

    ResourceReport& operator+=(const ResourceReport& o) {
        dsp += o.dsp;
        luts += o.luts;
        bram += o.bram;
        return *this;
    }
    bool operator==(const ResourceReport&) const = default;
};

struct HardwareBudget {
    std::int64_t t_dsp = 0;
    std::int64_t t_luts = 0;
    std::int64_t t_bram = 0;
    double beta = 0.5;     // usable LUT fraction (routing headroom)
    std::int64_t bw = 64;  // off-chip bits transferred per cycle
    LutTable lut_table = LutTable::product_default();

    std::int64_t lut_cap() const; // floor(t_luts * beta)

    static HardwareBudget zu3eg();
    // key = value file: t_dsp, t_luts, t_bram, beta, bw_bits_per_cycle,
    // optional lut_table (CSV path, relative to the device file).
    static HardwareBudget from_file(const std::filesystem::path& path);
};

struct InvalidAllocation : std::runtime_error {
    explicit InvalidAllocation(const std::string& msg) : std::runtime_error(msg) {}
};

// LUTs of one accumulator adder at partial-sum width q_p.
inline std::int64_t adder_luts(int q_p) { return q_p + 7; }

// BRAMs for n_w weights of q_w bits partitioned pf ways.
std::int64_t weight_buffer_brams(std::int64_t n_w, int q_w, int pf);

// BRAMs for the k-row line buffer; zero for 1x1 kernels. wc_max is the
// network-wide maximum of input width * input channels.
std::int64_t line_buffer_brams(std::int64_t wc_max, int q_a, int k);

struct SlotQuant {
    int q_a = 8;
    int q_w = 8;
    int q_p = 16;
    int q_s = 16;
};

// Full cost of one template slot: MAC array (DSP- or LUT-mapped), weight and
// line buffers, and optionally the per-slot quantization unit (po DSPs plus
// a scale buffer of oc_max entries of q_s bits partitioned po ways).
ResourceReport kernel_resources(const KernelSpec& spec, const KernelAllocation& alloc,
                                const SlotQuant& quant, std::int64_t n_w, std::int64_t wc_max,
                                std::int64_t oc_max, const LutTable& table,
                                bool include_quant_unit = true);

// Sum of kernel_resources over all template slots, sizing each slot's weight
// and scale buffers by the worst layer it hosts across the grouped network.
ResourceReport network_resources(const Architecture& arch, const QuantScheme& quant,
                                 std::span<const KernelAllocation> allocs, const LutTable& table,
                                 bool include_quant_unit = true);

} // namespace hwopt
