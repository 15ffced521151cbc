#pragma once

// Shared fixture builders and seeded generators for the test suite.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "hwopt/arch.hpp"
#include "hwopt/resource.hpp"

namespace testsup {

using namespace hwopt;

inline Layer make_layer(KernelKind kind, int k, int stride, int in_ch, int out_ch,
                        bool skipped = false) {
    Layer l;
    l.kernel = KernelSpec{kind, k};
    l.stride = stride;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.skipped = skipped;
    return l;
}

// Two inverted-bottleneck instances of an [expand 1x1, depthwise 3x3,
// project 1x1] template at 112x112 input. All frozen expectations below were
// recomputed by hand from the documented formulas.
inline Architecture mbv2_fixture() {
    Architecture a;
    a.resolution = 112;
    a.tmpl.kernels = {KernelSpec{KernelKind::FullConv, 1},
                      KernelSpec{KernelKind::DepthwiseConv, 3},
                      KernelSpec{KernelKind::FullConv, 1}};
    a.layers = {
        make_layer(KernelKind::FullConv, 1, 1, 16, 64),
        make_layer(KernelKind::DepthwiseConv, 3, 2, 64, 64),
        make_layer(KernelKind::FullConv, 1, 1, 64, 32),
        make_layer(KernelKind::FullConv, 1, 1, 32, 128),
        make_layer(KernelKind::DepthwiseConv, 3, 1, 128, 128),
        make_layer(KernelKind::FullConv, 1, 1, 128, 64),
    };
    a.derive_dims();
    return a;
}

inline std::vector<KernelAllocation> mbv2_alloc() {
    return {KernelAllocation{2, 4, MapTarget::Dsp, 2},
            KernelAllocation{1, 4, MapTarget::Dsp, 4},
            KernelAllocation{4, 4, MapTarget::Dsp, 4}};
}

// Frozen expectations for mbv2_fixture + mbv2_alloc, W8 A8, q_p=q_s=16, bw=64.
inline constexpr std::int64_t kMbv2Inst0Cycles = 1'606'088;
inline constexpr std::int64_t kMbv2Inst1Cycles = 1'607'312;
inline constexpr std::int64_t kMbv2TotalCycles = 3'213'400;
inline constexpr std::int64_t kMbv2Dsp = 60;
inline constexpr std::int64_t kMbv2Luts = 0;
inline constexpr std::int64_t kMbv2Bram = 34;

// Single-slot, two-layer pointwise chain at 10x10; per-slot bitwidths picked
// so every latency component lands on a distinct round number:
// lat_on=100, computes {500,300}, lat_off=80, weight loads {50,70} -> 620.
inline Architecture chain620_arch() {
    Architecture a;
    a.resolution = 10;
    a.tmpl.kernels = {KernelSpec{KernelKind::FullConv, 1}, KernelSpec{KernelKind::FullConv, 1}};
    a.layers = {make_layer(KernelKind::FullConv, 1, 1, 8, 131),
                make_layer(KernelKind::FullConv, 1, 1, 131, 17)};
    a.derive_dims();
    return a;
}

inline QuantScheme chain620_quant() {
    QuantScheme q;
    q.per_kernel = {{8, 3}, {3, 2}};
    return q;
}

inline std::vector<KernelAllocation> chain620_alloc() {
    return {KernelAllocation{8, 32, MapTarget::Dsp, 8},
            KernelAllocation{44, 17, MapTarget::Dsp, 44}};
}

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
    double real(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen);
    }
    bool chance(double p) { return real(0.0, 1.0) < p; }
    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
    }
};

// Groupable by construction: every instance emits one layer per template
// slot, in slot order, so the greedy grouper maps them back 1:1.
inline Architecture random_architecture(Rng& rng, int max_instances = 3,
                                        std::vector<int> channels = {4, 8, 16, 32},
                                        std::vector<int> resolutions = {8, 16, 32}) {
    Architecture a;
    a.resolution = rng.pick(resolutions);
    int slots = rng.uniform(1, 2);
    for (int s = 0; s < slots; ++s) {
        if (rng.chance(0.35))
            a.tmpl.kernels.push_back(KernelSpec{KernelKind::DepthwiseConv, 3});
        else
            a.tmpl.kernels.push_back(KernelSpec{KernelKind::FullConv, rng.chance(0.5) ? 1 : 3});
    }
    int instances = rng.uniform(1, max_instances);
    int ch = rng.pick(channels);
    for (int i = 0; i < instances; ++i) {
        for (const auto& spec : a.tmpl.kernels) {
            Layer l;
            l.kernel = spec;
            l.stride = rng.chance(0.25) ? 2 : 1;
            l.in_ch = ch;
            l.out_ch = spec.kind == KernelKind::DepthwiseConv ? ch : rng.pick(channels);
            ch = l.out_ch;
            a.layers.push_back(l);
        }
    }
    a.derive_dims();
    return a;
}

inline QuantScheme random_quant(Rng& rng, std::size_t slots) {
    QuantScheme q;
    for (std::size_t s = 0; s < slots; ++s)
        q.per_kernel.push_back({rng.uniform(2, 8), rng.uniform(2, 8)});
    q.q_p = rng.uniform(8, 32);
    q.q_s = rng.uniform(16, 24);
    return q;
}

// Scratch directory cleaned up at scope exit.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("hwopt_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

} // namespace testsup
