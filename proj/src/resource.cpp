#include "hwopt/resource.hpp"

#include <algorithm>
#include <cmath>

#include "hwopt/fileio.hpp"

namespace hwopt {

int LutTable::index(int q_w, int q_a) {
    if (q_w < kMinBits || q_w > kMaxBits || q_a < kMinBits || q_a > kMaxBits)
        throw std::out_of_range("multiplier bitwidths must be in [2,8], got qw=" +
                                std::to_string(q_w) + " qa=" + std::to_string(q_a));
    return (q_w - kMinBits) * 7 + (q_a - kMinBits);
}

int LutTable::at(int q_w, int q_a) const { return entries_[index(q_w, q_a)]; }

void LutTable::set(int q_w, int q_a, int luts) { entries_[index(q_w, q_a)] = luts; }

LutTable LutTable::product_default() {
    LutTable t;
    for (int w = kMinBits; w <= kMaxBits; ++w)
        for (int a = kMinBits; a <= kMaxBits; ++a)
            t.set(w, a, w * a);
    return t;
}

LutTable LutTable::from_csv(const std::filesystem::path& path) {
    auto rows = read_csv(path);
    if (rows.empty())
        throw ParseError("lut table " + path.string() + " is empty");
    std::size_t first = 0;
    if (rows[0].size() == 3 && rows[0][0] == "qw") first = 1;

    LutTable t;
    std::array<bool, 49> seen{};
    for (std::size_t i = first; i < rows.size(); ++i) {
        if (rows[i].size() != 3)
            throw ParseError("lut table row " + std::to_string(i + 1) + ": expected qw,qa,luts");
        int qw = static_cast<int>(to_int(rows[i][0], "qw"));
        int qa = static_cast<int>(to_int(rows[i][1], "qa"));
        int luts = static_cast<int>(to_int(rows[i][2], "luts"));
        int idx;
        try {
            idx = index(qw, qa);
        } catch (const std::out_of_range& e) {
            throw ParseError("lut table row " + std::to_string(i + 1) + ": " + e.what());
        }
        if (seen[idx])
            throw ParseError("lut table: duplicate entry for qw=" + std::to_string(qw) +
                             " qa=" + std::to_string(qa));
        seen[idx] = true;
        t.entries_[idx] = luts;
    }
    for (int idx = 0; idx < 49; ++idx)
        if (!seen[idx])
            throw ParseError("lut table: missing entry for qw=" +
                             std::to_string(idx / 7 + kMinBits) + " qa=" +
                             std::to_string(idx % 7 + kMinBits));
    t.check();
    return t;
}

void LutTable::check() const {
    for (int w = kMinBits; w <= kMaxBits; ++w) {
        for (int a = kMinBits; a <= kMaxBits; ++a) {
            int v = at(w, a);
            if (v <= 0)
                throw ParseError("lut table entry qw=" + std::to_string(w) + " qa=" +
                                 std::to_string(a) + " must be positive");
            if (w > kMinBits && at(w - 1, a) > v)
                throw ParseError("lut table not monotone in qw at qw=" + std::to_string(w) +
                                 " qa=" + std::to_string(a));
            if (a > kMinBits && at(w, a - 1) > v)
                throw ParseError("lut table not monotone in qa at qw=" + std::to_string(w) +
                                 " qa=" + std::to_string(a));
        }
    }
}

const char* to_string(MapTarget target) { return target == MapTarget::Dsp ? "dsp" : "lut"; }

MapTarget map_target_from_string(const std::string& s) {
    if (s == "dsp") return MapTarget::Dsp;
    if (s == "lut") return MapTarget::Lut;
    throw ParseError("unknown map target '" + s + "' (expected 'dsp' or 'lut')");
}

std::int64_t HardwareBudget::lut_cap() const {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(t_luts) * beta + 1e-9));
}

HardwareBudget HardwareBudget::zu3eg() {
    HardwareBudget b;
    b.t_dsp = 360;
    b.t_luts = 70560;
    b.t_bram = 432;
    b.beta = 0.5;
    b.bw = 64;
    return b;
}

HardwareBudget HardwareBudget::from_file(const std::filesystem::path& path) {
    auto kv = read_kv_config(path);
    HardwareBudget b = zu3eg();
    auto take = [&](const char* key, auto setter) {
        auto it = kv.find(key);
        if (it != kv.end()) setter(it->second);
        if (it != kv.end()) kv.erase(it);
    };
    take("t_dsp", [&](const std::string& v) { b.t_dsp = to_int(v, "t_dsp"); });
    take("t_luts", [&](const std::string& v) { b.t_luts = to_int(v, "t_luts"); });
    take("t_bram", [&](const std::string& v) { b.t_bram = to_int(v, "t_bram"); });
    take("beta", [&](const std::string& v) { b.beta = to_double(v, "beta"); });
    take("bw_bits_per_cycle", [&](const std::string& v) { b.bw = to_int(v, "bw_bits_per_cycle"); });
    take("lut_table", [&](const std::string& v) {
        std::filesystem::path p(v);
        if (p.is_relative()) p = path.parent_path() / p;
        b.lut_table = LutTable::from_csv(p);
    });
    take("name", [](const std::string&) {});
    if (!kv.empty())
        throw ParseError("device file " + path.string() + ": unknown key '" +
                         kv.begin()->first + "'");
    if (b.t_dsp < 0 || b.t_luts < 0 || b.t_bram < 0 || b.bw < 1 || b.beta <= 0 || b.beta > 1)
        throw ParseError("device file " + path.string() + ": budgets must be non-negative, "
                         "bw >= 1, beta in (0,1]");
    return b;
}

std::int64_t weight_buffer_brams(std::int64_t n_w, int q_w, int pf) {
    if (n_w < 0 || q_w < 1 || pf < 1)
        throw InvalidAllocation("weight buffer needs n_w >= 0, q_w >= 1, pf >= 1");
    if (n_w == 0) return 0;
    return ceil_div(n_w * q_w, std::int64_t(pf) * kBramBits) * pf;
}

std::int64_t line_buffer_brams(std::int64_t wc_max, int q_a, int k) {
    if (wc_max < 0 || q_a < 1 || k < 1)
        throw InvalidAllocation("line buffer needs wc_max >= 0, q_a >= 1, k >= 1");
    if (k == 1 || wc_max == 0) return 0;
    return ceil_div(wc_max * q_a, kBramBits) * k;
}

ResourceReport kernel_resources(const KernelSpec& spec, const KernelAllocation& alloc,
                                const SlotQuant& quant, std::int64_t n_w, std::int64_t wc_max,
                                std::int64_t oc_max, const LutTable& table,
                                bool include_quant_unit) {
    if (alloc.pi < 1 || alloc.po < 1 || alloc.pf < 1)
        throw InvalidAllocation("parallelism factors must be >= 1");
    if (spec.kind == KernelKind::DepthwiseConv && alloc.pi != 1)
        throw InvalidAllocation("depthwise kernels have no input-channel parallelism (pi must be 1)");

    ResourceReport r;
    std::int64_t kk = std::int64_t(spec.k) * spec.k;
    std::int64_t macs = spec.kind == KernelKind::DepthwiseConv ? kk * alloc.po
                                                               : kk * alloc.pi * alloc.po;
    if (alloc.map_to == MapTarget::Dsp) {
        // Two MACs pack into one DSP48 for <= 8-bit weights; depthwise MACs
        // stay unpacked.
        r.dsp = spec.kind == KernelKind::DepthwiseConv ? macs : ceil_div(macs, 2);
    } else {
        r.luts = macs * (table.at(quant.q_w, quant.q_a) + adder_luts(quant.q_p));
    }

    r.bram = weight_buffer_brams(n_w, quant.q_w, alloc.pf) +
             line_buffer_brams(wc_max, quant.q_a, spec.k);

    if (include_quant_unit) {
        r.dsp += alloc.po;
        r.bram += weight_buffer_brams(oc_max, quant.q_s, alloc.po);
    }
    return r;
}

ResourceReport network_resources(const Architecture& arch, const QuantScheme& quant,
                                 std::span<const KernelAllocation> allocs, const LutTable& table,
                                 bool include_quant_unit) {
    if (allocs.size() != arch.tmpl.kernels.size())
        throw InvalidAllocation("allocation count " + std::to_string(allocs.size()) +
                                " does not match " + std::to_string(arch.tmpl.kernels.size()) +
                                " template slots");
    if (quant.per_kernel.size() != arch.tmpl.kernels.size())
        throw InvalidAllocation("quant scheme slot count does not match template");

    auto instances = group_layers(arch);
    std::int64_t wc_max = 0;
    for (const auto& layer : arch.layers)
        if (!layer.skipped)
            wc_max = std::max(wc_max, std::int64_t(layer.in_w) * layer.in_ch);

    ResourceReport total;
    for (std::size_t s = 0; s < arch.tmpl.kernels.size(); ++s) {
        std::int64_t n_w = 0, oc_max = 0;
        for (const auto& inst : instances) {
            std::size_t li = inst.slot_to_layer[s];
            if (li == SubgraphInstance::npos) continue;
            n_w = std::max(n_w, arch.layers[li].weight_count());
            oc_max = std::max(oc_max, std::int64_t(arch.layers[li].out_ch));
        }
        SlotQuant sq{quant.per_kernel[s].q_a, quant.per_kernel[s].q_w, quant.q_p, quant.q_s};
        total += kernel_resources(arch.tmpl.kernels[s], allocs[s], sq, n_w, wc_max, oc_max,
                                  table, include_quant_unit);
    }
    return total;
}

} // namespace hwopt
