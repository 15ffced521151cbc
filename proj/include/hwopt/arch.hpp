#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hwopt {

enum class KernelKind { FullConv, DepthwiseConv };

const char* to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& s);

// One compute kernel shape: k x k full or depthwise convolution.
struct KernelSpec {
    KernelKind kind = KernelKind::FullConv;
    int k = 1;
    bool operator==(const KernelSpec&) const = default;
};

// Ordered list of kernels replicated on chip; every subgraph instance runs
// through these slots in order, skipping unused ones.
struct SubgraphTemplate {
    std::vector<KernelSpec> kernels;
    int size() const { return static_cast<int>(kernels.size()); }
};

struct Layer {
    KernelSpec kernel;
    int stride = 1;
    int in_ch = 1;
    int out_ch = 1;
    bool skipped = false;
    // Input spatial dims, derived from resolution and the stride chain.
    int in_h = 0;
    int in_w = 0;

    int out_h() const { return (in_h + stride - 1) / stride; }
    int out_w() const { return (in_w + stride - 1) / stride; }
    // Weight tensor element count: k^2*IC*OC full, k^2*IC depthwise.
    std::int64_t weight_count() const;
};

struct Architecture {
    int resolution = 224;
    SubgraphTemplate tmpl;
    std::vector<Layer> layers;

    // Recomputes every layer's in_h/in_w from the resolution and strides.
    void derive_dims();
};

// Per-template-slot bitwidths plus shared accumulator/scale widths.
struct QuantScheme {
    struct SlotBits {
        int q_a = 8;
        int q_w = 8;
        bool operator==(const SlotBits&) const = default;
    };
    std::vector<SlotBits> per_kernel;
    int q_p = 16;
    int q_s = 16;

    static QuantScheme uniform(int slots, int q_a, int q_w, int q_p = 16, int q_s = 16);
    bool operator==(const QuantScheme&) const = default;
};

// One accelerator invocation: which layer runs in each template slot.
struct SubgraphInstance {
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::size_t> slot_to_layer; // npos = slot skipped

    bool slot_skipped(std::size_t slot) const { return slot_to_layer[slot] == npos; }
    std::optional<std::size_t> first_layer() const;
    std::optional<std::size_t> last_layer() const;
};

struct GroupingError : std::runtime_error {
    explicit GroupingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Greedy left-to-right slot matching. Covers all non-skipped layers in order;
// a slot is skipped when the next pending layer does not match its kernel.
// Throws GroupingError when some layer can never be placed.
std::vector<SubgraphInstance> group_layers(const Architecture& arch);

// The discrete sets a search may draw from, plus a layer-count budget.
struct SearchSpace {
    std::vector<int> channel_set;
    std::vector<int> resolution_set;
    int max_layers = 64;

    static SearchSpace defaults();
};

struct Violation {
    int layer = -1; // -1 = architecture-level
    std::string message;
};

// Returns every invariant violation (empty = valid). Layer 0's in_ch is
// exempt from the channel-set check: the input channel count comes from the
// data, not the search space.
std::vector<Violation> validate(const Architecture& arch,
                                const SearchSpace& space = SearchSpace::defaults());

// Structural invariants only (chaining, identity form, depthwise channels,
// strides, kernel shapes, groupability); ignores channel/resolution sets and
// the layer-count budget. What downstream consumers of a fixed architecture
// require.
std::vector<Violation> validate_structure(const Architecture& arch);

// log10 of the search-space size: num_layers * log10(choices_per_layer).
double search_space_log10(std::int64_t num_layers, double choices_per_layer);
// choices_per_layer = distinct template kernels * channel_set_size.
double search_space_size(int num_layers, const SubgraphTemplate& tmpl, int channel_set_size);

// JSON I/O. Spatial dims are derived on load, never stored.
Architecture parse_architecture(const std::string& json_text);
std::string architecture_to_json(const Architecture& arch, int indent = 2);
Architecture load_architecture(const std::filesystem::path& path);
void save_architecture(const Architecture& arch, const std::filesystem::path& path);

// Compact canonical serialization; equal strings iff equal architectures.
std::string canonical_key(const Architecture& arch);

// Quant flag grammar "qa,qw;qa,qw;..." (one pair per template slot).
QuantScheme parse_quant_flag(const std::string& text, int q_p = 16, int q_s = 16);
std::string quant_flag_string(const QuantScheme& q);

} // namespace hwopt
