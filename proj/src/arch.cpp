#include "hwopt/arch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hwopt/fileio.hpp"

namespace hwopt {

using nlohmann::json;

const char* to_string(KernelKind kind) {
    return kind == KernelKind::FullConv ? "full" : "depthwise";
}

KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "full") return KernelKind::FullConv;
    if (s == "depthwise") return KernelKind::DepthwiseConv;
    throw ParseError("unknown kernel kind '" + s + "' (expected 'full' or 'depthwise')");
}

std::int64_t Layer::weight_count() const {
    std::int64_t kk = std::int64_t(kernel.k) * kernel.k;
    if (kernel.kind == KernelKind::DepthwiseConv) return kk * in_ch;
    return kk * in_ch * out_ch;
}

void Architecture::derive_dims() {
    int h = resolution, w = resolution;
    for (auto& layer : layers) {
        layer.in_h = h;
        layer.in_w = w;
        h = layer.out_h();
        w = layer.out_w();
    }
}

QuantScheme QuantScheme::uniform(int slots, int q_a, int q_w, int q_p, int q_s) {
    QuantScheme q;
    q.per_kernel.assign(static_cast<std::size_t>(slots), SlotBits{q_a, q_w});
    q.q_p = q_p;
    q.q_s = q_s;
    return q;
}

std::optional<std::size_t> SubgraphInstance::first_layer() const {
    for (auto idx : slot_to_layer)
        if (idx != npos) return idx;
    return std::nullopt;
}

std::optional<std::size_t> SubgraphInstance::last_layer() const {
    for (auto it = slot_to_layer.rbegin(); it != slot_to_layer.rend(); ++it)
        if (*it != npos) return *it;
    return std::nullopt;
}

std::vector<SubgraphInstance> group_layers(const Architecture& arch) {
    const auto& slots = arch.tmpl.kernels;
    if (slots.empty())
        throw GroupingError("template has no kernels");

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < arch.layers.size(); ++i)
        if (!arch.layers[i].skipped) pending.push_back(i);

    std::vector<SubgraphInstance> out;
    std::size_t next = 0;
    while (next < pending.size()) {
        SubgraphInstance inst;
        inst.slot_to_layer.assign(slots.size(), SubgraphInstance::npos);
        std::size_t consumed = 0;
        for (std::size_t s = 0; s < slots.size() && next < pending.size(); ++s) {
            if (arch.layers[pending[next]].kernel == slots[s]) {
                inst.slot_to_layer[s] = pending[next];
                ++next;
                ++consumed;
            }
        }
        if (consumed == 0)
            throw GroupingError("layer " + std::to_string(pending[next]) +
                                " matches no template slot");
        out.push_back(std::move(inst));
    }
    return out;
}

SearchSpace SearchSpace::defaults() {
    SearchSpace s;
    s.channel_set = {16, 32, 64, 128, 256, 512, 1024};
    s.resolution_set = {96, 128, 160, 192, 224, 256};
    return s;
}

namespace {

std::string int_set_string(const std::vector<int>& set) {
    std::string s = "{";
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(set[i]);
    }
    return s + "}";
}

bool in_set(const std::vector<int>& set, int v) {
    return std::find(set.begin(), set.end(), v) != set.end();
}

} // namespace

namespace {

std::vector<Violation> validate_impl(const Architecture& arch, const SearchSpace* space) {
    std::vector<Violation> out;
    auto arch_issue = [&](std::string msg) { out.push_back({-1, std::move(msg)}); };
    auto layer_issue = [&](std::size_t i, std::string msg) {
        out.push_back({static_cast<int>(i), std::move(msg)});
    };

    if (arch.resolution < 1)
        arch_issue("resolution must be positive");
    else if (space && !in_set(space->resolution_set, arch.resolution))
        arch_issue("resolution " + std::to_string(arch.resolution) + " not in resolution set " +
                   int_set_string(space->resolution_set));

    int m = arch.tmpl.size();
    if (m < 1 || m > 8)
        arch_issue("template must have 1..8 kernels, has " + std::to_string(m));
    for (const auto& spec : arch.tmpl.kernels)
        if (spec.k < 1 || spec.k % 2 == 0)
            arch_issue("template kernel size " + std::to_string(spec.k) + " must be odd and >= 1");

    if (space && static_cast<int>(arch.layers.size()) > space->max_layers)
        arch_issue("layer count " + std::to_string(arch.layers.size()) + " exceeds limit " +
                   std::to_string(space->max_layers));

    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const Layer& l = arch.layers[i];
        if (l.kernel.k < 1 || l.kernel.k % 2 == 0)
            layer_issue(i, "kernel size " + std::to_string(l.kernel.k) + " must be odd and >= 1");
        if (l.in_ch < 1) layer_issue(i, "in_ch must be positive");
        if (l.out_ch < 1) layer_issue(i, "out_ch must be positive");
        if (l.stride != 1 && l.stride != 2)
            layer_issue(i, "stride " + std::to_string(l.stride) + " not in {1,2}");
        if (l.kernel.kind == KernelKind::DepthwiseConv && l.out_ch != l.in_ch)
            layer_issue(i, "depthwise layer must keep out_ch == in_ch");
        if (l.skipped) {
            if (l.out_ch != l.in_ch)
                layer_issue(i, "skipped layer must be identity (out_ch == in_ch)");
            if (l.stride != 1)
                layer_issue(i, "skipped layer must be identity (stride == 1)");
        } else if (space && l.out_ch >= 1 && !in_set(space->channel_set, l.out_ch)) {
            layer_issue(i, "channel " + std::to_string(l.out_ch) + " not in channel set " +
                               int_set_string(space->channel_set));
        }
        if (i > 0 && l.in_ch != arch.layers[i - 1].out_ch)
            layer_issue(i, "in_ch " + std::to_string(l.in_ch) + " does not chain from previous out_ch " +
                               std::to_string(arch.layers[i - 1].out_ch));
    }

    if (out.empty() && m >= 1) {
        try {
            group_layers(arch);
        } catch (const GroupingError& e) {
            arch_issue(std::string("grouping failed: ") + e.what());
        }
    }
    return out;
}

} // namespace

std::vector<Violation> validate(const Architecture& arch, const SearchSpace& space) {
    return validate_impl(arch, &space);
}

std::vector<Violation> validate_structure(const Architecture& arch) {
    return validate_impl(arch, nullptr);
}

double search_space_log10(std::int64_t num_layers, double choices_per_layer) {
    if (num_layers < 1 || choices_per_layer < 1)
        throw std::invalid_argument("search space needs >= 1 layer and >= 1 choice per layer");
    return static_cast<double>(num_layers) * std::log10(choices_per_layer);
}

double search_space_size(int num_layers, const SubgraphTemplate& tmpl, int channel_set_size) {
    std::vector<KernelSpec> uniq;
    for (const auto& spec : tmpl.kernels)
        if (std::find(uniq.begin(), uniq.end(), spec) == uniq.end()) uniq.push_back(spec);
    if (uniq.empty())
        throw std::invalid_argument("template has no kernels");
    return search_space_log10(num_layers,
                              static_cast<double>(uniq.size()) * channel_set_size);
}

namespace {

json kernel_to_json(const KernelSpec& spec) {
    return json{{"kind", to_string(spec.kind)}, {"k", spec.k}};
}

KernelSpec kernel_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j.contains("k"))
        throw ParseError("kernel entry needs 'kind' and 'k'");
    KernelSpec spec;
    spec.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
    spec.k = j.at("k").get<int>();
    return spec;
}

json arch_to_json_obj(const Architecture& arch) {
    json tmpl = json::array();
    for (const auto& spec : arch.tmpl.kernels) tmpl.push_back(kernel_to_json(spec));
    json layers = json::array();
    for (const auto& l : arch.layers) {
        layers.push_back(json{{"kind", to_string(l.kernel.kind)},
                              {"k", l.kernel.k},
                              {"stride", l.stride},
                              {"in_ch", l.in_ch},
                              {"out_ch", l.out_ch},
                              {"skipped", l.skipped}});
    }
    return json{{"resolution", arch.resolution}, {"template", tmpl}, {"layers", layers}};
}

} // namespace

Architecture parse_architecture(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("architecture JSON: ") + e.what());
    }
    try {
        Architecture arch;
        arch.resolution = j.at("resolution").get<int>();
        for (const auto& k : j.at("template"))
            arch.tmpl.kernels.push_back(kernel_from_json(k));
        if (j.contains("layers")) {
            for (const auto& jl : j.at("layers")) {
                Layer l;
                l.kernel.kind = kernel_kind_from_string(jl.at("kind").get<std::string>());
                l.kernel.k = jl.at("k").get<int>();
                l.stride = jl.at("stride").get<int>();
                l.in_ch = jl.at("in_ch").get<int>();
                l.out_ch = jl.at("out_ch").get<int>();
                l.skipped = jl.value("skipped", false);
                arch.layers.push_back(l);
            }
        }
        arch.derive_dims();
        return arch;
    } catch (const json::exception& e) {
        throw ParseError(std::string("architecture JSON: ") + e.what());
    }
}

std::string architecture_to_json(const Architecture& arch, int indent) {
    return arch_to_json_obj(arch).dump(indent);
}

Architecture load_architecture(const std::filesystem::path& path) {
    return parse_architecture(read_text_file(path));
}

void save_architecture(const Architecture& arch, const std::filesystem::path& path) {
    write_text_file(path, architecture_to_json(arch) + "\n");
}

std::string canonical_key(const Architecture& arch) {
    return arch_to_json_obj(arch).dump(); // keys are sorted, output is compact
}

QuantScheme parse_quant_flag(const std::string& text, int q_p, int q_s) {
    QuantScheme q;
    if (q_p < 8 || q_p > 32) throw ParseError("q_p must be in [8,32]");
    if (q_s < 16 || q_s > 24) throw ParseError("q_s must be in [16,24]");
    q.q_p = q_p;
    q.q_s = q_s;
    for (const auto& part : split(text, ';')) {
        auto pair = split(trim(part), ',');
        if (pair.size() != 2)
            throw ParseError("quant flag: expected 'qa,qw' pairs separated by ';', got '" +
                             part + "'");
        QuantScheme::SlotBits bits;
        bits.q_a = static_cast<int>(to_int(trim(pair[0]), "q_a"));
        bits.q_w = static_cast<int>(to_int(trim(pair[1]), "q_w"));
        if (bits.q_a < 2 || bits.q_a > 8 || bits.q_w < 2 || bits.q_w > 8)
            throw ParseError("quant flag: bitwidths must be in [2,8], got '" + part + "'");
        q.per_kernel.push_back(bits);
    }
    if (q.per_kernel.empty())
        throw ParseError("quant flag: no pairs given");
    return q;
}

std::string quant_flag_string(const QuantScheme& q) {
    std::string s;
    for (std::size_t i = 0; i < q.per_kernel.size(); ++i) {
        if (i) s += ";";
        s += std::to_string(q.per_kernel[i].q_a) + "," + std::to_string(q.per_kernel[i].q_w);
    }
    return s;
}

} // namespace hwopt
