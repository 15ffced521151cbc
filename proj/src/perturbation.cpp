#include "hwopt/perturbation.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "hwopt/fileio.hpp"

namespace hwopt {

namespace {

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4))
        throw ParseError("tensor file truncated reading " + what);
    return std::uint32_t(buf[0]) | std::uint32_t(buf[1]) << 8 | std::uint32_t(buf[2]) << 16 |
           std::uint32_t(buf[3]) << 24;
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                            static_cast<unsigned char>(v >> 8 & 0xff),
                            static_cast<unsigned char>(v >> 16 & 0xff),
                            static_cast<unsigned char>(v >> 24 & 0xff)};
    out.write(reinterpret_cast<char*>(buf), 4);
}

float read_f32(std::istream& in) {
    std::uint32_t bits = read_u32(in, "float data");
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void write_f32(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(out, bits);
}

} // namespace

std::vector<std::vector<double>> load_tensor_channels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open tensor file " + path.string());
    std::uint32_t rank = read_u32(in, "rank");
    if (rank < 1 || rank > 8)
        throw ParseError("tensor file " + path.string() + ": rank " + std::to_string(rank) +
                         " out of range [1,8]");
    std::uint64_t channels = 0, per_channel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
        std::uint32_t dim = read_u32(in, "dim " + std::to_string(d));
        if (dim == 0)
            throw ParseError("tensor file " + path.string() + ": zero-sized dim");
        if (d == 0)
            channels = dim;
        else
            per_channel *= dim;
    }
    if (channels * per_channel > (1u << 28))
        throw ParseError("tensor file " + path.string() + " is implausibly large");

    std::vector<std::vector<double>> out(channels);
    for (auto& ch : out) {
        ch.resize(per_channel);
        for (auto& v : ch) v = read_f32(in);
    }
    return out;
}

void save_tensor_channels(const std::vector<std::vector<double>>& channels,
                          const std::filesystem::path& path) {
    if (channels.empty() || channels[0].empty())
        throw ParseError("refusing to write empty tensor " + path.string());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ParseError("cannot write tensor file " + path.string());
    write_u32(out, 2);
    write_u32(out, static_cast<std::uint32_t>(channels.size()));
    write_u32(out, static_cast<std::uint32_t>(channels[0].size()));
    for (const auto& ch : channels) {
        if (ch.size() != channels[0].size())
            throw ParseError("ragged tensor channels for " + path.string());
        for (double v : ch) write_f32(out, static_cast<float>(v));
    }
}

SensitivityProfile SensitivityProfile::from_csv(const std::filesystem::path& path) {
    auto rows = read_csv(path);
    if (rows.empty())
        throw BadProfile("sensitivity profile " + path.string() + " is empty");

    bool analytic;
    if (rows[0].size() == 4 && rows[0][0] == "layer" && rows[0][3] == "range")
        analytic = true;
    else if (rows[0].size() == 3 && rows[0][0] == "layer" && rows[0][2] == "tensor_path")
        analytic = false;
    else
        throw BadProfile("sensitivity profile " + path.string() +
                         ": header must be layer,trace,n_params,range or layer,trace,tensor_path");

    SensitivityProfile profile;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != rows[0].size())
            throw BadProfile("sensitivity profile row " + std::to_string(i + 1) +
                             ": wrong column count");
        std::size_t layer = static_cast<std::size_t>(to_int(row[0], "layer"));
        if (layer != profile.per_layer.size())
            throw BadProfile("sensitivity profile rows must be consecutive layers from 0, got " +
                             row[0] + " at row " + std::to_string(i + 1));
        LayerSensitivity s;
        s.trace = to_double(row[1], "trace");
        if (s.trace < 0)
            throw BadProfile("sensitivity profile layer " + row[0] + ": trace must be >= 0");
        if (analytic) {
            s.n_params = to_int(row[2], "n_params");
            s.range = to_double(row[3], "range");
            if (s.n_params < 1 || *s.range < 0)
                throw BadProfile("sensitivity profile layer " + row[0] +
                                 ": need n_params >= 1 and range >= 0");
        } else {
            std::filesystem::path tp(row[2]);
            if (tp.is_relative()) tp = path.parent_path() / tp;
            s.channels = load_tensor_channels(tp);
            s.n_params = 0;
            for (const auto& ch : *s.channels)
                s.n_params += static_cast<std::int64_t>(ch.size());
        }
        profile.per_layer.push_back(std::move(s));
    }
    if (profile.per_layer.empty())
        throw BadProfile("sensitivity profile " + path.string() + " has no data rows");
    return profile;
}

QuantizedChannel quantize_channel(std::span<const double> weights, int bits) {
    if (bits < 2 || bits > 32)
        throw std::invalid_argument("quantizer bits must be in [2,32]");
    QuantizedChannel out;
    out.dequant.resize(weights.size());
    double max_abs = 0.0;
    for (double w : weights) max_abs = std::max(max_abs, std::fabs(w));
    if (max_abs == 0.0)
        return out; // zeros with scale 0

    double qmax = static_cast<double>((std::int64_t(1) << (bits - 1)) - 1);
    out.scale = max_abs / qmax;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        double q = std::round(weights[i] / out.scale); // half away from zero
        q = std::clamp(q, -qmax, qmax);
        out.dequant[i] = q * out.scale;
    }
    return out;
}

double layer_perturbation(std::size_t layer_index, int bits, const SensitivityProfile& profile) {
    if (layer_index >= profile.per_layer.size())
        throw BadProfile("no sensitivity entry for layer " + std::to_string(layer_index));
    const LayerSensitivity& s = profile.per_layer[layer_index];
    if (s.empirical()) {
        double sq = 0.0;
        for (const auto& ch : *s.channels) {
            auto q = quantize_channel(ch, bits);
            for (std::size_t i = 0; i < ch.size(); ++i) {
                double d = ch[i] - q.dequant[i];
                sq += d * d;
            }
        }
        return s.trace * sq;
    }
    if (s.analytic()) {
        double levels = static_cast<double>((std::int64_t(1) << bits) - 1);
        double step = 2.0 * *s.range / levels;
        return s.trace * static_cast<double>(s.n_params) * step * step / 12.0;
    }
    throw BadProfile("sensitivity entry for layer " + std::to_string(layer_index) +
                     " has neither range nor tensor data");
}

PerturbationReport total_perturbation(const Architecture& arch, const QuantScheme& quant,
                                      const SensitivityProfile& profile) {
    if (profile.per_layer.size() != arch.layers.size())
        throw BadProfile("sensitivity profile covers " + std::to_string(profile.per_layer.size()) +
                         " layers, architecture has " + std::to_string(arch.layers.size()));
    if (quant.per_kernel.size() != arch.tmpl.kernels.size())
        throw BadProfile("quant scheme slot count does not match template");

    PerturbationReport report;
    report.per_layer.assign(arch.layers.size(), 0.0);
    for (const auto& inst : group_layers(arch)) {
        for (std::size_t s = 0; s < inst.slot_to_layer.size(); ++s) {
            if (inst.slot_skipped(s)) continue;
            std::size_t li = inst.slot_to_layer[s];
            report.per_layer[li] = layer_perturbation(li, quant.per_kernel[s].q_w, profile);
            report.total += report.per_layer[li];
        }
    }
    return report;
}

} // namespace hwopt
