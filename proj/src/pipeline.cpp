#include "hwopt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include <json.hpp>

#include "hwopt/fileio.hpp"

namespace hwopt {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    for (const auto& part : split(text, ','))
        if (!trim(part).empty()) out.push_back(static_cast<int>(to_int(trim(part), what)));
    if (out.empty()) throw ParseError(what + ": empty list");
    return out;
}

} // namespace

Calibration load_calibration(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
        Calibration c;
        c.slope = j.at("slope").get<double>();
        c.intercept = j.at("intercept").get<double>();
        if (c.slope <= 0)
            throw ParseError("calibration " + path.string() +
                             ": slope must be positive to be applied");
        return c;
    } catch (const json::exception& e) {
        throw ParseError("calibration " + path.string() + ": " + e.what());
    }
}

void save_calibration(const CalibrationFit& fit, const std::filesystem::path& path) {
    json j{{"slope", fit.calibration.slope},
           {"intercept", fit.calibration.intercept},
           {"pearson_r", fit.pearson_r}};
    write_text_file(path, j.dump(2) + "\n");
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    auto kv = read_kv_config(path);
    auto dir = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_relative() ? dir / fp : fp;
    };
    auto need = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end())
            throw ParseError("pipeline config " + path.string() + ": missing key '" + key + "'");
        return it->second;
    };
    auto opt = [&](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };

    PipelineConfig cfg;
    std::string device = need("device");
    cfg.budget = device == "zu3eg" ? HardwareBudget::zu3eg()
                                   : HardwareBudget::from_file(resolve(device));
    cfg.seed_arch = load_architecture(resolve(need("seed_arch")));
    cfg.base_profile = SensitivityProfile::from_csv(resolve(need("profile")));
    cfg.predictor = SvrModel::load(resolve(need("predictor_model")));
    if (cfg.predictor.feature_mean.size() < 6 ||
        (cfg.predictor.feature_mean.size() - 1) % 5 != 0)
        throw ParseError("predictor model feature length " +
                         std::to_string(cfg.predictor.feature_mean.size()) +
                         " is not 1 + 5*max_layers");
    if (auto v = opt("calibration")) cfg.calibration = load_calibration(resolve(*v));

    for (const auto& part : split(need("lat0_list"), ','))
        if (!trim(part).empty()) cfg.lat0_list.push_back(to_int(trim(part), "lat0_list"));
    if (cfg.lat0_list.empty())
        throw ParseError("pipeline config: lat0_list is empty");

    if (auto v = opt("alpha")) cfg.alpha = to_double(*v, "alpha");
    if (auto v = opt("lambda")) cfg.lambda = to_double(*v, "lambda");
    if (auto v = opt("top_k")) cfg.top_k = static_cast<int>(to_int(*v, "top_k"));
    if (auto v = opt("rollouts")) cfg.rollouts = static_cast<int>(to_int(*v, "rollouts"));
    if (auto v = opt("max_depth")) cfg.max_depth = static_cast<int>(to_int(*v, "max_depth"));
    if (auto v = opt("exploration")) cfg.exploration = to_double(*v, "exploration");
    if (auto v = opt("seed")) cfg.seed = static_cast<std::uint64_t>(to_int(*v, "seed"));
    if (auto v = opt("trees")) cfg.trees = static_cast<int>(to_int(*v, "trees"));
    if (auto v = opt("rank_mode")) {
        if (*v == "combined") cfg.rank_mode = RankMode::Combined;
        else if (*v == "accuracy_then_perturbation")
            cfg.rank_mode = RankMode::AccuracyThenPerturbation;
        else
            throw ParseError("pipeline config: rank_mode must be 'combined' or "
                             "'accuracy_then_perturbation'");
    }
    if (auto v = opt("qa")) cfg.quant.fixed_qa = static_cast<int>(to_int(*v, "qa"));
    if (auto v = opt("qp")) cfg.quant.q_p = static_cast<int>(to_int(*v, "qp"));
    if (auto v = opt("qs")) cfg.quant.q_s = static_cast<int>(to_int(*v, "qs"));
    if (auto v = opt("search_qa")) cfg.quant.search_qa = *v == "true";
    if (auto v = opt("bit_choices")) cfg.quant.bit_choices = parse_int_list(*v, "bit_choices");
    if (auto v = opt("parallelism_set"))
        cfg.quant.parallelism_set = parse_int_list(*v, "parallelism_set");
    if (auto v = opt("channel_set")) cfg.space.channel_set = parse_int_list(*v, "channel_set");
    if (auto v = opt("resolution_set"))
        cfg.space.resolution_set = parse_int_list(*v, "resolution_set");
    if (auto v = opt("max_layers")) cfg.space.max_layers = static_cast<int>(to_int(*v, "max_layers"));

    if (cfg.top_k < 1 || cfg.rollouts < 1 || cfg.trees < 1)
        throw ParseError("pipeline config: top_k, rollouts, trees must be >= 1");
    return cfg;
}

SensitivityProfile profile_for_architecture(const SensitivityProfile& base,
                                            const Architecture& arch) {
    if (base.per_layer.empty())
        throw BadProfile("cannot adapt an empty sensitivity profile");
    SensitivityProfile out;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const auto& src = base.per_layer[std::min(i, base.per_layer.size() - 1)];
        if (!src.analytic())
            throw BadProfile("profile adaptation needs analytic entries (trace + range); "
                             "entry " + std::to_string(std::min(i, base.per_layer.size() - 1)) +
                             " has tensor data only");
        LayerSensitivity s;
        s.trace = src.trace;
        s.range = src.range;
        s.n_params = arch.layers[i].weight_count();
        out.per_layer.push_back(std::move(s));
    }
    return out;
}

BudgetResult run_budget(std::int64_t lat0, const PipelineConfig& config) {
    BudgetResult result;

    SearchConfig sc;
    sc.lat0 = lat0;
    sc.alpha = config.alpha;
    sc.exploration = config.exploration;
    sc.max_rollouts = config.rollouts;
    sc.max_depth = config.max_depth;
    sc.seed = config.seed;
    sc.trees = config.trees;
    sc.space = config.space;
    sc.quant = config.quant;
    sc.action_mask = config.action_mask;

    if (config.predictor.feature_mean.size() < 6 ||
        (config.predictor.feature_mean.size() - 1) % 5 != 0)
        throw DimensionMismatch("predictor feature length " +
                                std::to_string(config.predictor.feature_mean.size()) +
                                " is not 1 + 5*max_layers");
    std::size_t encoder_layers = (config.predictor.feature_mean.size() - 1) / 5;
    sc.space.max_layers = std::min(sc.space.max_layers, static_cast<int>(encoder_layers));

    auto pool = search(config.seed_arch, config.budget, sc, config.threads);
    if (pool.candidates.empty()) {
        result.warnings.push_back("empty candidate pool for lat0 " + std::to_string(lat0));
        return result;
    }

    for (const auto& found : pool.candidates) {
        auto profile = profile_for_architecture(config.base_profile, found.arch);
        auto quant = solve_quant(found.arch, profile, config.budget, lat0, config.alpha,
                                 config.quant);
        if (!quant) continue; // cannot happen when the band held, but stay safe

        Candidate cand;
        cand.arch = found.arch;
        cand.quant = quant->scheme;
        cand.alloc = std::move(quant->alloc);
        cand.perturbation = quant->perturbation.total;
        cand.predicted_accuracy =
            config.predictor.predict(encode_features(found.arch, encoder_layers));
        cand.score = cand.predicted_accuracy - config.lambda * cand.perturbation;
        cand.lat0 = lat0;
        if (config.calibration)
            cand.calibrated_ms =
                config.calibration->apply(static_cast<double>(cand.latency_cycles()));
        result.candidates.push_back(std::move(cand));
    }

    auto key_of = [](const Candidate& c) { return canonical_key(c.arch); };
    std::stable_sort(result.candidates.begin(), result.candidates.end(),
                     [&](const Candidate& a, const Candidate& b) {
                         if (config.rank_mode == RankMode::AccuracyThenPerturbation) {
                             if (a.predicted_accuracy != b.predicted_accuracy)
                                 return a.predicted_accuracy > b.predicted_accuracy;
                             if (a.perturbation != b.perturbation)
                                 return a.perturbation < b.perturbation;
                             if (a.latency_cycles() != b.latency_cycles())
                                 return a.latency_cycles() < b.latency_cycles();
                         } else {
                             if (a.score != b.score) return a.score > b.score;
                             if (a.latency_cycles() != b.latency_cycles())
                                 return a.latency_cycles() < b.latency_cycles();
                             if (a.perturbation != b.perturbation)
                                 return a.perturbation < b.perturbation;
                         }
                         return key_of(a) < key_of(b);
                     });
    if (static_cast<int>(result.candidates.size()) > config.top_k)
        result.candidates.resize(static_cast<std::size_t>(config.top_k));
    return result;
}

std::vector<std::size_t> pareto_front(const std::vector<ParetoPoint>& points) {
    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].latency != points[b].latency) return points[a].latency < points[b].latency;
        if (points[a].score != points[b].score) return points[a].score > points[b].score;
        return a < b;
    });
    std::vector<std::size_t> front;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t idx : order) {
        if (points[idx].score > best) {
            front.push_back(idx);
            best = points[idx].score;
        }
    }
    return front;
}

SweepResult sweep(const PipelineConfig& config) {
    SweepResult result;
    for (std::int64_t lat0 : config.lat0_list) {
        auto budget_result = run_budget(lat0, config);
        for (auto& w : budget_result.warnings) result.warnings.push_back(std::move(w));
        for (auto& c : budget_result.candidates) result.candidates.push_back(std::move(c));
    }
    std::vector<ParetoPoint> points;
    points.reserve(result.candidates.size());
    for (const auto& c : result.candidates) points.push_back({c.latency_value(), c.score});
    result.frontier = pareto_front(points);
    return result;
}

std::string allocation_string(const std::vector<KernelAllocation>& allocs) {
    std::string s;
    for (std::size_t i = 0; i < allocs.size(); ++i) {
        if (i) s += ";";
        s += std::to_string(allocs[i].pi) + "/" + std::to_string(allocs[i].po) + "/" +
             to_string(allocs[i].map_to) + "/" + std::to_string(allocs[i].pf);
    }
    return s;
}

std::vector<KernelAllocation> parse_allocation_string(const std::string& text) {
    std::vector<KernelAllocation> out;
    for (const auto& entry : split(text, ';')) {
        auto fields = split(entry, '/');
        if (fields.size() != 4)
            throw ParseError("allocation entry '" + entry + "': want pi/po/map/pf");
        KernelAllocation a;
        a.pi = static_cast<int>(to_int(trim(fields[0]), "allocation pi"));
        a.po = static_cast<int>(to_int(trim(fields[1]), "allocation po"));
        a.map_to = map_target_from_string(trim(fields[2]));
        a.pf = static_cast<int>(to_int(trim(fields[3]), "allocation pf"));
        out.push_back(a);
    }
    return out;
}

namespace {

std::string csv_cell(const std::string& s) {
    if (s.find(',') == std::string::npos) return s;
    return "\"" + s + "\"";
}

std::string candidate_row(const Candidate& c, const std::string& arch_path) {
    std::string row = std::to_string(c.lat0);
    row += "," + std::to_string(c.latency_cycles());
    row += ",";
    if (c.calibrated_ms) row += fmt(*c.calibrated_ms);
    row += "," + fmt(c.perturbation);
    row += "," + fmt(c.predicted_accuracy);
    row += "," + fmt(c.score);
    row += "," + arch_path;
    row += "," + csv_cell(quant_flag_string(c.quant));
    row += "," + csv_cell(allocation_string(c.alloc.per_kernel));
    return row + "\n";
}

constexpr const char* kCsvHeader =
    "lat0,latency_cycles,calibrated_ms,perturbation,predicted_acc,score,arch_path,quant,"
    "allocation\n";

std::string sweep_svg(const SweepResult& result, bool calibrated);

} // namespace

void write_sweep_outputs(const SweepResult& result, const PipelineConfig& config,
                         const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);

    // One JSON per distinct architecture, numbered in first-use order.
    std::map<std::string, std::string> arch_files;
    std::vector<std::string> row_arch(result.candidates.size());
    for (std::size_t i = 0; i < result.candidates.size(); ++i) {
        std::string key = canonical_key(result.candidates[i].arch);
        auto it = arch_files.find(key);
        if (it == arch_files.end()) {
            char name[32];
            std::snprintf(name, sizeof name, "arch_%04zu.json", arch_files.size());
            save_architecture(result.candidates[i].arch, out_dir / name);
            it = arch_files.emplace(key, name).first;
        }
        row_arch[i] = it->second;
    }

    std::string all_rows = kCsvHeader;
    for (std::size_t i = 0; i < result.candidates.size(); ++i)
        all_rows += candidate_row(result.candidates[i], row_arch[i]);
    write_text_file(out_dir / "candidates.csv", all_rows);

    std::string front_rows = kCsvHeader;
    for (std::size_t idx : result.frontier)
        front_rows += candidate_row(result.candidates[idx], row_arch[idx]);
    write_text_file(out_dir / "frontier.csv", front_rows);

    write_text_file(out_dir / "frontier.svg",
                    sweep_svg(result, config.calibration.has_value()));
}

namespace {

std::string sweep_svg(const SweepResult& result, bool calibrated) {
    const double width = 800, height = 560;
    const double ml = 70, mr = 24, mt = 28, mb = 56;

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& c : result.candidates) {
        double x = c.latency_value(), y = c.score;
        if (first) {
            xmin = xmax = x;
            ymin = ymax = y;
            first = false;
        }
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    double xpad = (xmax - xmin) * 0.06, ypad = (ymax - ymin) * 0.06;
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) {
        return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
    };
    auto py = [&](double y) {
        return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" +
           fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " + fmt(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(height - mb) + "\" x2=\"" +
           fmt(width - mr) + "\" y2=\"" + fmt(height - mb) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) + "\" y2=\"" +
           fmt(height - mb) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";

    for (int t = 0; t <= 4; ++t) {
        double fx = xmin + (xmax - xmin) * t / 4.0;
        double fy = ymin + (ymax - ymin) * t / 4.0;
        svg += "<text x=\"" + fmt(px(fx)) + "\" y=\"" + fmt(height - mb + 18) +
               "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333\">" + fmt(fx) +
               "</text>\n";
        svg += "<text x=\"" + fmt(ml - 8) + "\" y=\"" + fmt(py(fy) + 4) +
               "\" font-size=\"11\" text-anchor=\"end\" fill=\"#333\">" + fmt(fy) + "</text>\n";
    }
    svg += "<text x=\"" + fmt((ml + width - mr) / 2) + "\" y=\"" + fmt(height - 14) +
           "\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\">latency (" +
           std::string(calibrated ? "ms, calibrated" : "cycles") + ")</text>\n";
    svg += "<text x=\"16\" y=\"" + fmt((mt + height - mb) / 2) +
           "\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111\" transform=\"rotate(-90 16 " +
           fmt((mt + height - mb) / 2) + ")\">score</text>\n";

    for (const auto& c : result.candidates)
        svg += "<circle cx=\"" + fmt(px(c.latency_value())) + "\" cy=\"" + fmt(py(c.score)) +
               "\" r=\"4\" fill=\"#9ec5e8\" stroke=\"#4c7fb0\"/>\n";

    if (!result.frontier.empty()) {
        std::string path = "M";
        double prev_y = 0;
        for (std::size_t i = 0; i < result.frontier.size(); ++i) {
            const auto& c = result.candidates[result.frontier[i]];
            double x = px(c.latency_value()), y = py(c.score);
            if (i == 0)
                path += fmt(x) + " " + fmt(y);
            else
                path += " L" + fmt(x) + " " + fmt(prev_y) + " L" + fmt(x) + " " + fmt(y);
            prev_y = y;
        }
        svg += "<path d=\"" + path + "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n";
        for (std::size_t idx : result.frontier) {
            const auto& c = result.candidates[idx];
            svg += "<circle cx=\"" + fmt(px(c.latency_value())) + "\" cy=\"" +
                   fmt(py(c.score)) + "\" r=\"5\" fill=\"#c0392b\"/>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace

std::vector<std::string> revalidate_candidate(const Candidate& cand,
                                              const PipelineConfig& config) {
    std::vector<std::string> failures;
    auto fail = [&](std::string msg) { failures.push_back(std::move(msg)); };

    for (const auto& v : validate_structure(cand.arch))
        fail("structure: " + v.message);
    if (!failures.empty()) return failures;

    if (cand.alloc.per_kernel.size() != cand.arch.tmpl.kernels.size()) {
        fail("allocation slot count does not match template");
        return failures;
    }

    // Budget fit, from scratch.
    ResourceReport total;
    try {
        total = network_resources(cand.arch, cand.quant, cand.alloc.per_kernel,
                                  config.budget.lut_table, config.quant.include_quant_unit);
    } catch (const std::exception& e) {
        fail(std::string("resource recomputation: ") + e.what());
        return failures;
    }
    if (!(total == cand.alloc.resources))
        fail("stored resource report does not match recomputation");
    if (total.dsp > config.budget.t_dsp) fail("dsp over budget");
    if (total.luts > config.budget.lut_cap()) fail("luts over budget");
    if (total.bram > config.budget.t_bram) fail("bram over budget");

    auto lat = network_latency(cand.arch, cand.quant, cand.alloc.per_kernel, config.budget.bw);
    if (lat.total_cycles != cand.latency_cycles())
        fail("stored latency does not match recomputation");
    if (lat.total_cycles > cand.lat0)
        fail("latency exceeds the budget it was selected under");

    auto profile = profile_for_architecture(config.base_profile, cand.arch);
    auto pert = total_perturbation(cand.arch, cand.quant, profile);
    if (std::fabs(pert.total - cand.perturbation) > 1e-9)
        fail("stored perturbation drifts from recomputation by more than 1e-9");

    double score = cand.predicted_accuracy - config.lambda * cand.perturbation;
    if (std::fabs(score - cand.score) > 1e-12)
        fail("stored score does not equal predicted_acc - lambda * perturbation");

    return failures;
}

} // namespace hwopt
