#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hwopt/allocator.hpp"
#include "hwopt/arch.hpp"
#include "hwopt/fileio.hpp"
#include "hwopt/latency.hpp"
#include "hwopt/mcts.hpp"
#include "hwopt/perturbation.hpp"
#include "hwopt/pipeline.hpp"
#include "hwopt/quant_solver.hpp"
#include "hwopt/resource.hpp"
#include "hwopt/svr.hpp"

namespace {

using nlohmann::json;
using namespace hwopt;

// Command-level failure with its exit code: 1 validation, 2 infeasible, 3 I/O.
struct Fail {
    std::string kind;
    std::string message;
    int code;
};

int emit_error(const std::string& kind, const std::string& message, int code) {
    json err;
    err["error"] = {{"kind", kind}, {"message", message}};
    std::cerr << err.dump() << "\n";
    return code;
}

std::vector<int> parse_ints(const std::string& text, const std::string& what) {
    std::vector<int> out;
    for (const auto& part : split(text, ','))
        if (!trim(part).empty()) out.push_back(static_cast<int>(to_int(trim(part), what)));
    if (out.empty()) throw Fail{"usage", what + ": empty list", 1};
    return out;
}

HardwareBudget load_device(const std::string& device) {
    if (device == "zu3eg") return HardwareBudget::zu3eg();
    return HardwareBudget::from_file(device);
}

Architecture load_valid_architecture(const std::string& path) {
    auto arch = load_architecture(path);
    auto violations = validate_structure(arch);
    if (!violations.empty())
        throw Fail{"validation", path + ": " + violations.front().message, 1};
    return arch;
}

json resources_json(const ResourceReport& r) {
    return {{"dsp", r.dsp}, {"luts", r.luts}, {"bram", r.bram}};
}

json latency_json(const LatencyReport& rep) {
    json subs = json::array();
    for (const auto& s : rep.per_subgraph)
        subs.push_back({{"lat_on", s.lat_on},
                        {"lat_off", s.lat_off},
                        {"compute", s.compute},
                        {"weight_load", s.weight_load},
                        {"total", s.total}});
    json j;
    j["total_cycles"] = rep.total_cycles;
    j["per_subgraph"] = subs;
    if (rep.calibrated_ms) j["calibrated_ms"] = *rep.calibrated_ms;
    return j;
}

json allocs_json(const std::vector<KernelAllocation>& allocs) {
    json arr = json::array();
    for (const auto& a : allocs)
        arr.push_back({{"pi", a.pi}, {"po", a.po}, {"map_to", to_string(a.map_to)}, {"pf", a.pf}});
    return arr;
}

json solution_json(const AllocationSolution& sol) {
    json j;
    j["per_kernel"] = allocs_json(sol.per_kernel);
    j["resources"] = resources_json(sol.resources);
    j["latency"] = latency_json(sol.latency);
    j["optimal"] = sol.optimal;
    return j;
}

json quant_json(const QuantScheme& q) {
    json slots = json::array();
    for (const auto& s : q.per_kernel) slots.push_back({{"q_a", s.q_a}, {"q_w", s.q_w}});
    json j;
    j["flag"] = quant_flag_string(q);
    j["per_kernel"] = slots;
    j["q_p"] = q.q_p;
    j["q_s"] = q.q_s;
    return j;
}

// Accepts a bare array of {pi,po,map_to[,pf]} or an allocate-output object
// with a per_kernel field, so allocate | estimate round-trips.
std::vector<KernelAllocation> allocs_from_file(const std::string& path,
                                               const Architecture& arch) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ParseError("allocation file " + path + ": " + e.what());
    }
    const json* arr = &j;
    if (j.is_object()) {
        if (!j.contains("per_kernel"))
            throw ParseError("allocation file " + path + ": missing per_kernel");
        arr = &j["per_kernel"];
    }
    if (!arr->is_array())
        throw ParseError("allocation file " + path + ": want an array of slot allocations");
    std::vector<KernelAllocation> out;
    try {
        for (std::size_t s = 0; s < arr->size(); ++s) {
            const json& e = (*arr)[s];
            KernelAllocation a;
            a.pi = e.at("pi").get<int>();
            a.po = e.at("po").get<int>();
            a.map_to = map_target_from_string(e.at("map_to").get<std::string>());
            if (e.contains("pf"))
                a.pf = e.at("pf").get<int>();
            else if (s < arch.tmpl.kernels.size() &&
                     arch.tmpl.kernels[s].kind == KernelKind::DepthwiseConv)
                a.pf = a.po;
            else
                a.pf = a.pi;
            out.push_back(a);
        }
    } catch (const json::exception& e) {
        throw ParseError("allocation file " + path + ": " + e.what());
    }
    if (out.size() != arch.tmpl.kernels.size())
        throw Fail{"validation",
                   "allocation file has " + std::to_string(out.size()) + " slots, template has " +
                       std::to_string(arch.tmpl.kernels.size()),
                   1};
    return out;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

struct CommonQuantFlags {
    std::string bits;
    int qa = 8;
    int qp = 16;
    int qs = 16;
    bool search_qa = false;
    std::string parallelism;

    QuantSearchOptions options() const {
        QuantSearchOptions o;
        if (!bits.empty()) o.bit_choices = parse_ints(bits, "--bits");
        o.fixed_qa = qa;
        o.q_p = qp;
        o.q_s = qs;
        o.search_qa = search_qa;
        if (!parallelism.empty()) o.parallelism_set = parse_ints(parallelism, "--parallelism");
        return o;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"analytical FPGA cost models with architecture, bitwidth, and "
                 "allocation co-search"};
    app.require_subcommand(1);

    unsigned hw_threads = std::thread::hardware_concurrency();
    int threads = hw_threads ? static_cast<int>(hw_threads) : 1;
    app.add_option("--threads", threads, "bound internal parallelism (default: cores)");

    int rc = 0;

    // estimate
    auto* est = app.add_subcommand("estimate", "latency and resources of a fixed design");
    est->fallthrough();
    struct {
        std::string arch, quant, device = "zu3eg", alloc, calibration;
        int qp = 16, qs = 16;
    } est_opt;
    est->add_option("--arch", est_opt.arch, "architecture JSON")->required();
    est->add_option("--quant", est_opt.quant, "per-slot bitwidths \"qa,qw;qa,qw;...\"")
        ->required();
    est->add_option("--device", est_opt.device, "device file or built-in name");
    est->add_option("--alloc", est_opt.alloc,
                    "allocation JSON (default: pi=po=1, DSP-mapped)");
    est->add_option("--calibration", est_opt.calibration, "calibration JSON for wall-clock ms");
    est->add_option("--qp", est_opt.qp, "accumulator bitwidth");
    est->add_option("--qs", est_opt.qs, "scale bitwidth");
    est->callback([&] {
        auto arch = load_valid_architecture(est_opt.arch);
        auto budget = load_device(est_opt.device);
        auto quant = parse_quant_flag(est_opt.quant, est_opt.qp, est_opt.qs);
        if (quant.per_kernel.size() != arch.tmpl.kernels.size())
            throw Fail{"validation",
                       "quant flag has " + std::to_string(quant.per_kernel.size()) +
                           " slots, template has " + std::to_string(arch.tmpl.kernels.size()),
                       1};
        std::vector<KernelAllocation> allocs;
        if (!est_opt.alloc.empty()) {
            allocs = allocs_from_file(est_opt.alloc, arch);
        } else {
            for (std::size_t s = 0; s < arch.tmpl.kernels.size(); ++s)
                allocs.push_back({1, 1, MapTarget::Dsp, 1});
        }
        std::optional<Calibration> calib;
        if (!est_opt.calibration.empty()) calib = load_calibration(est_opt.calibration);

        auto resources = network_resources(arch, quant, allocs, budget.lut_table);
        auto latency = network_latency(arch, quant, allocs, budget.bw, calib);
        json out;
        out["latency"] = latency_json(latency);
        out["resources"] = resources_json(resources);
        out["allocation"] = allocs_json(allocs);
        print(out);
    });

    // allocate
    auto* alc = app.add_subcommand("allocate", "latency-optimal parallelism and MAC mapping");
    alc->fallthrough();
    struct {
        std::string arch, quant, device = "zu3eg", parallelism;
        int qp = 16, qs = 16;
        bool no_quant_unit = false;
    } alc_opt;
    alc->add_option("--arch", alc_opt.arch)->required();
    alc->add_option("--quant", alc_opt.quant, "per-slot bitwidths \"qa,qw;...\"")->required();
    alc->add_option("--device", alc_opt.device);
    alc->add_option("--parallelism", alc_opt.parallelism, "candidate factors, e.g. 1,2,4,8");
    alc->add_option("--qp", alc_opt.qp);
    alc->add_option("--qs", alc_opt.qs);
    alc->add_flag("--no-quant-unit", alc_opt.no_quant_unit, "model MACs and buffers only");
    alc->callback([&] {
        AllocationProblem problem;
        problem.arch = load_valid_architecture(alc_opt.arch);
        problem.budget = load_device(alc_opt.device);
        problem.quant = parse_quant_flag(alc_opt.quant, alc_opt.qp, alc_opt.qs);
        if (problem.quant.per_kernel.size() != problem.arch.tmpl.kernels.size())
            throw Fail{"validation", "quant flag slot count does not match template", 1};
        if (!alc_opt.parallelism.empty())
            problem.parallelism_set = parse_ints(alc_opt.parallelism, "--parallelism");
        problem.include_quant_unit = !alc_opt.no_quant_unit;
        print(solution_json(solve(problem)));
    });

    // quantize
    auto* qnt = app.add_subcommand("quantize", "minimum-perturbation bitwidths under a "
                                               "latency budget");
    qnt->fallthrough();
    struct {
        std::string arch, profile, device = "zu3eg";
        std::int64_t lat0 = 0;
        double alpha = 0.5;
        bool lower_band = false;
        CommonQuantFlags q;
    } qnt_opt;
    qnt->add_option("--arch", qnt_opt.arch)->required();
    qnt->add_option("--profile", qnt_opt.profile, "layer sensitivity CSV")->required();
    qnt->add_option("--device", qnt_opt.device);
    qnt->add_option("--lat0", qnt_opt.lat0, "latency budget in cycles")->required();
    qnt->add_option("--alpha", qnt_opt.alpha, "lower band fraction");
    qnt->add_flag("--enforce-lower-band", qnt_opt.lower_band,
                  "also require latency >= alpha*lat0");
    qnt->add_option("--bits", qnt_opt.q.bits, "weight bit choices (default 2..8)");
    qnt->add_option("--qa", qnt_opt.q.qa, "activation bitwidth");
    qnt->add_flag("--search-qa", qnt_opt.q.search_qa, "search activation bits too");
    qnt->add_option("--qp", qnt_opt.q.qp);
    qnt->add_option("--qs", qnt_opt.q.qs);
    qnt->add_option("--parallelism", qnt_opt.q.parallelism);
    qnt->callback([&] {
        auto arch = load_valid_architecture(qnt_opt.arch);
        auto profile = SensitivityProfile::from_csv(qnt_opt.profile);
        auto budget = load_device(qnt_opt.device);
        auto options = qnt_opt.q.options();
        options.enforce_lower_band = qnt_opt.lower_band;
        if (qnt_opt.lat0 < 1) throw Fail{"usage", "--lat0 must be >= 1", 1};
        auto sol = solve_quant(arch, profile, budget, qnt_opt.lat0, qnt_opt.alpha, options);
        if (!sol)
            throw Fail{"infeasible",
                       "no bitwidth assignment meets " + std::to_string(qnt_opt.lat0) +
                           " cycles within the resource budgets",
                       2};
        json out;
        out["quant"] = quant_json(sol->scheme);
        out["perturbation"] = {{"total", sol->perturbation.total},
                               {"per_layer", sol->perturbation.per_layer}};
        out["allocation"] = solution_json(sol->alloc);
        print(out);
    });

    // search
    auto* sch = app.add_subcommand("search", "tree search over architectures inside a "
                                             "latency band");
    sch->fallthrough();
    struct {
        std::string seed_arch, device = "zu3eg", channels, resolutions;
        std::int64_t lat0 = 0;
        double alpha = 0.5, exploration = std::sqrt(2.0);
        int rollouts = 1000, max_depth = 30, trees = 1, max_layers = 0;
        std::uint64_t rng = 0;
        CommonQuantFlags q;
    } sch_opt;
    sch->add_option("--seed-arch", sch_opt.seed_arch)->required();
    sch->add_option("--device", sch_opt.device);
    sch->add_option("--lat0", sch_opt.lat0, "latency budget in cycles")->required();
    sch->add_option("--alpha", sch_opt.alpha, "band lower fraction");
    sch->add_option("--rollouts", sch_opt.rollouts);
    sch->add_option("--max-depth", sch_opt.max_depth);
    sch->add_option("--trees", sch_opt.trees, "independent trees (root parallelism)");
    sch->add_option("--rng", sch_opt.rng, "random seed");
    sch->add_option("--exploration", sch_opt.exploration);
    sch->add_option("--channels", sch_opt.channels, "channel menu, e.g. 16,32,64");
    sch->add_option("--resolutions", sch_opt.resolutions, "resolution menu");
    sch->add_option("--max-layers", sch_opt.max_layers);
    sch->add_option("--bits", sch_opt.q.bits, "probe bit range (min/max used)");
    sch->add_option("--qa", sch_opt.q.qa);
    sch->add_flag("--search-qa", sch_opt.q.search_qa);
    sch->add_option("--parallelism", sch_opt.q.parallelism);
    sch->callback([&] {
        SearchConfig config;
        config.lat0 = sch_opt.lat0;
        config.alpha = sch_opt.alpha;
        config.exploration = sch_opt.exploration;
        config.max_rollouts = sch_opt.rollouts;
        config.max_depth = sch_opt.max_depth;
        config.seed = sch_opt.rng;
        config.trees = sch_opt.trees;
        config.quant = sch_opt.q.options();
        if (!sch_opt.channels.empty())
            config.space.channel_set = parse_ints(sch_opt.channels, "--channels");
        if (!sch_opt.resolutions.empty())
            config.space.resolution_set = parse_ints(sch_opt.resolutions, "--resolutions");
        if (sch_opt.max_layers > 0) config.space.max_layers = sch_opt.max_layers;

        auto seed_arch = load_valid_architecture(sch_opt.seed_arch);
        auto budget = load_device(sch_opt.device);
        auto result = search(seed_arch, budget, config, threads);

        json cands = json::array();
        for (const auto& c : result.candidates)
            cands.push_back({{"arch", json::parse(architecture_to_json(c.arch))},
                             {"low_bits_cycles", c.low_bits_cycles},
                             {"high_bits_cycles", c.high_bits_cycles}});
        json out;
        out["rollouts_run"] = result.rollouts_run;
        out["states_probed"] = result.states_probed;
        out["candidates"] = cands;
        print(out);
    });

    // train-predictor
    auto* trn = app.add_subcommand("train-predictor", "fit the accuracy regressor");
    trn->fallthrough();
    struct {
        std::string data, out;
        int cv = 0;
        std::uint64_t rng = 0;
        double cost = 10.0, epsilon = 0.01, gamma = 0.0;
    } trn_opt;
    trn->add_option("--data", trn_opt.data, "feature/accuracy CSV")->required();
    trn->add_option("--out", trn_opt.out, "model JSON path")->required();
    trn->add_option("--cv", trn_opt.cv, "cross-validation folds (0 = fixed hyperparams)");
    trn->add_option("--rng", trn_opt.rng, "shuffle seed for cross-validation");
    trn->add_option("--cost", trn_opt.cost);
    trn->add_option("--epsilon", trn_opt.epsilon);
    trn->add_option("--gamma", trn_opt.gamma, "RBF width (0 = 1/features)");
    trn->callback([&] {
        if (trn_opt.cv == 1) throw Fail{"usage", "--cv needs at least 2 folds", 1};
        auto data = Dataset::from_csv(trn_opt.data);
        SvrHyperparams hyper{trn_opt.cost, trn_opt.epsilon, trn_opt.gamma};
        json out;
        if (trn_opt.cv > 1) {
            std::vector<SvrHyperparams> grid;
            for (double c : {1.0, 10.0, 100.0})
                for (double e : {0.001, 0.01, 0.05})
                    for (double g : {0.0, 0.05, 0.2}) grid.push_back({c, e, g});
            auto cv = cross_validate(data, grid, trn_opt.cv, trn_opt.rng);
            hyper = cv.best;
            out["cv"] = {{"folds", trn_opt.cv},
                         {"best", {{"cost", cv.best.cost},
                                   {"epsilon", cv.best.epsilon},
                                   {"gamma", cv.best.gamma}}},
                         {"rmse", cv.best_rmse},
                         {"fold_rmse", cv.fold_rmse}};
        }
        auto model = train_svr(data, hyper);
        model.save(trn_opt.out);

        std::vector<double> fitted;
        fitted.reserve(data.size());
        for (const auto& row : data.x) fitted.push_back(model.predict(row));
        out["train_rmse"] = rmse(fitted, data.y);
        out["support_vectors"] = model.support_vectors.size();
        out["samples"] = data.size();
        out["model"] = trn_opt.out;
        if (!model.warnings.empty()) out["warnings"] = model.warnings;
        print(out);
    });

    // predict
    auto* prd = app.add_subcommand("predict", "predicted accuracy of an architecture");
    prd->fallthrough();
    struct {
        std::string model, arch;
    } prd_opt;
    prd->add_option("--model", prd_opt.model, "model JSON")->required();
    prd->add_option("--arch", prd_opt.arch)->required();
    prd->callback([&] {
        auto model = SvrModel::load(prd_opt.model);
        auto arch = load_valid_architecture(prd_opt.arch);
        if (model.feature_mean.size() < 6 || (model.feature_mean.size() - 1) % 5 != 0)
            throw Fail{"validation", "model feature length is not 1 + 5*max_layers", 1};
        std::size_t max_layers = (model.feature_mean.size() - 1) / 5;
        json out;
        out["predicted_accuracy"] = model.predict(encode_features(arch, max_layers));
        print(out);
    });

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "fit model cycles to measured milliseconds");
    cal->fallthrough();
    struct {
        std::string pairs, out;
    } cal_opt;
    cal->add_option("--pairs", cal_opt.pairs, "CSV predicted,measured_ms")->required();
    cal->add_option("--out", cal_opt.out, "calibration JSON path")->required();
    cal->callback([&] {
        auto rows = read_csv(cal_opt.pairs);
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != 2)
                throw ParseError(cal_opt.pairs + " row " + std::to_string(i + 1) +
                                 ": want predicted,measured_ms");
            if (i == 0 && rows[i][0] == "predicted") continue;
            pairs.emplace_back(to_double(rows[i][0], "predicted"),
                               to_double(rows[i][1], "measured_ms"));
        }
        auto fit = fit_calibration(pairs);
        save_calibration(fit, cal_opt.out);
        json out;
        out["slope"] = fit.calibration.slope;
        out["intercept"] = fit.calibration.intercept;
        out["pearson_r"] = fit.pearson_r;
        out["pairs"] = pairs.size();
        print(out);
    });

    // pareto
    auto* par = app.add_subcommand("pareto", "sweep latency budgets and export the frontier");
    par->fallthrough();
    struct {
        std::string config, out_dir;
    } par_opt;
    par->add_option("--config", par_opt.config, "pipeline config file")->required();
    par->add_option("--out-dir", par_opt.out_dir, "output directory")->required();
    par->callback([&] {
        auto config = load_pipeline_config(par_opt.config);
        config.threads = threads;
        auto result = sweep(config);
        write_sweep_outputs(result, config, par_opt.out_dir);
        json out;
        out["candidates"] = result.candidates.size();
        out["frontier"] = result.frontier.size();
        out["out_dir"] = par_opt.out_dir;
        out["files"] = {"candidates.csv", "frontier.csv", "frontier.svg"};
        if (!result.warnings.empty()) out["warnings"] = result.warnings;
        print(out);
    });

    // validate
    auto* val = app.add_subcommand("validate", "check architecture invariants");
    val->fallthrough();
    struct {
        std::string arch, channels, resolutions;
        int max_layers = 0;
        bool structural = false;
    } val_opt;
    val->add_option("--arch", val_opt.arch)->required();
    val->add_option("--channels", val_opt.channels, "allowed channel counts");
    val->add_option("--resolutions", val_opt.resolutions, "allowed resolutions");
    val->add_option("--max-layers", val_opt.max_layers);
    val->add_flag("--structural", val_opt.structural,
                  "skip channel/resolution menu checks");
    val->callback([&] {
        std::vector<Violation> violations;
        if (!std::filesystem::exists(val_opt.arch))
            throw ParseError("cannot read " + val_opt.arch + ": no such file");
        try {
            auto arch = load_architecture(val_opt.arch);
            if (val_opt.structural) {
                violations = validate_structure(arch);
            } else {
                SearchSpace space = SearchSpace::defaults();
                if (!val_opt.channels.empty())
                    space.channel_set = parse_ints(val_opt.channels, "--channels");
                if (!val_opt.resolutions.empty())
                    space.resolution_set = parse_ints(val_opt.resolutions, "--resolutions");
                if (val_opt.max_layers > 0) space.max_layers = val_opt.max_layers;
                violations = validate(arch, space);
            }
        } catch (const ParseError& e) {
            // A file that does not even parse as an architecture is maximally
            // invalid; report it as a violation, not an I/O failure.
            violations.push_back({-1, e.what()});
        }
        json list = json::array();
        for (const auto& v : violations)
            list.push_back({{"layer", v.layer}, {"message", v.message}});
        json out;
        out["violations"] = list;
        print(out);
        rc = violations.empty() ? 0 : 1;
    });

    try {
        app.parse(argc, argv);
        return rc;
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return emit_error("usage", e.what(), 1);
    } catch (const Fail& f) {
        return emit_error(f.kind, f.message, f.code);
    } catch (const InfeasibleError& e) {
        return emit_error("infeasible", e.what(), 2);
    } catch (const GroupingError& e) {
        return emit_error("validation", e.what(), 1);
    } catch (const InvalidAllocation& e) {
        return emit_error("validation", e.what(), 1);
    } catch (const TooManyLayers& e) {
        return emit_error("validation", e.what(), 1);
    } catch (const DimensionMismatch& e) {
        return emit_error("validation", e.what(), 1);
    } catch (const DegenerateFit& e) {
        return emit_error("validation", e.what(), 1);
    } catch (const BadProfile& e) {
        return emit_error("parse", e.what(), 3);
    } catch (const ParseError& e) {
        return emit_error("parse", e.what(), 3);
    } catch (const json::exception& e) {
        return emit_error("parse", e.what(), 3);
    } catch (const std::filesystem::filesystem_error& e) {
        return emit_error("io", e.what(), 3);
    } catch (const std::invalid_argument& e) {
        return emit_error("validation", e.what(), 1);
    } catch (const std::exception& e) {
        return emit_error("internal", e.what(), 3);
    }
}
