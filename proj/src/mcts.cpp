#include "hwopt/mcts.hpp"

#include <algorithm>
#include <future>

namespace hwopt {

namespace {

// Next/previous member of a sorted value set.
std::optional<int> step_in_set(const std::vector<int>& sorted_set, int value, int direction) {
    auto it = std::find(sorted_set.begin(), sorted_set.end(), value);
    if (it == sorted_set.end()) return std::nullopt;
    if (direction > 0) {
        if (std::next(it) == sorted_set.end()) return std::nullopt;
        return *std::next(it);
    }
    if (it == sorted_set.begin()) return std::nullopt;
    return *std::prev(it);
}

// Channel edits ripple forward: depthwise and skipped layers mirror their
// input width until the next full conv absorbs the change.
void repair_chain(Architecture& arch, std::size_t from) {
    for (std::size_t j = from + 1; j < arch.layers.size(); ++j) {
        arch.layers[j].in_ch = arch.layers[j - 1].out_ch;
        if (arch.layers[j].skipped || arch.layers[j].kernel.kind == KernelKind::DepthwiseConv)
            arch.layers[j].out_ch = arch.layers[j].in_ch;
        else
            break;
    }
}

std::vector<int> sorted_copy(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

} // namespace

std::optional<Architecture> try_apply_action(const Architecture& arch, const ArchMove& move,
                                             const SearchSpace& space) {
    auto channels = sorted_copy(space.channel_set);
    auto resolutions = sorted_copy(space.resolution_set);
    Architecture next = arch;

    switch (move.kind) {
        case ArchAction::IncreaseChannel:
        case ArchAction::DecreaseChannel: {
            if (move.layer < 0 || move.layer >= static_cast<int>(next.layers.size()))
                return std::nullopt;
            Layer& l = next.layers[static_cast<std::size_t>(move.layer)];
            if (l.skipped || l.kernel.kind == KernelKind::DepthwiseConv) return std::nullopt;
            auto stepped = step_in_set(channels, l.out_ch,
                                       move.kind == ArchAction::IncreaseChannel ? 1 : -1);
            if (!stepped) return std::nullopt;
            l.out_ch = *stepped;
            repair_chain(next, static_cast<std::size_t>(move.layer));
            break;
        }
        case ArchAction::IncreaseResolution:
        case ArchAction::DecreaseResolution: {
            auto stepped = step_in_set(resolutions, next.resolution,
                                       move.kind == ArchAction::IncreaseResolution ? 1 : -1);
            if (!stepped) return std::nullopt;
            next.resolution = *stepped;
            next.derive_dims();
            break;
        }
        case ArchAction::SkipLayer: {
            if (move.layer < 0 || move.layer >= static_cast<int>(next.layers.size()))
                return std::nullopt;
            Layer& l = next.layers[static_cast<std::size_t>(move.layer)];
            if (l.skipped) return std::nullopt;
            l.skipped = true;
            l.stride = 1;
            l.out_ch = l.in_ch;
            repair_chain(next, static_cast<std::size_t>(move.layer));
            next.derive_dims();
            break;
        }
        case ArchAction::UnskipLayer: {
            if (move.layer < 0 || move.layer >= static_cast<int>(next.layers.size()))
                return std::nullopt;
            Layer& l = next.layers[static_cast<std::size_t>(move.layer)];
            if (!l.skipped) return std::nullopt;
            // Identity form pinned stride=1 and out_ch=in_ch; the revived
            // layer keeps that shape.
            l.skipped = false;
            break;
        }
        case ArchAction::AddSubgraph: {
            if (next.layers.empty()) return std::nullopt;
            if (static_cast<int>(next.layers.size()) + next.tmpl.size() > space.max_layers)
                return std::nullopt;
            int ch = next.layers.back().out_ch;
            for (const auto& spec : next.tmpl.kernels) {
                Layer l;
                l.kernel = spec;
                l.stride = 1;
                l.in_ch = ch;
                l.out_ch = ch;
                next.layers.push_back(l);
            }
            next.derive_dims();
            break;
        }
        case ArchAction::DeleteSubgraph: {
            int m = next.tmpl.size();
            if (static_cast<int>(next.layers.size()) <= m) return std::nullopt;
            next.layers.resize(next.layers.size() - static_cast<std::size_t>(m));
            next.derive_dims();
            break;
        }
        case ArchAction::Terminate:
            return std::nullopt; // handled by the tree, not a state change
    }

    if (!validate(next, space).empty()) return std::nullopt;
    return next;
}

double band_reward(const BandProbe& probe, std::int64_t lat0, double alpha) {
    if (!probe.allocated) return 0.0;
    if (probe.feasible) return 1.0;
    double l0 = static_cast<double>(lat0);
    double over = std::max(0.0, (static_cast<double>(probe.low_bits_cycles) - l0) / l0);
    double under =
        std::max(0.0, (alpha * l0 - static_cast<double>(probe.high_bits_cycles)) / l0);
    return 1.0 / (1.0 + over + under);
}

namespace {

struct ProbeEntry {
    BandProbe probe;
    double reward = 0.0;
};

// MCTS over architectures; memoizes band probes per canonical state and
// harvests every feasible state it touches.
struct ArchProblem {
    using State = Architecture;
    using Action = ArchMove;

    const HardwareBudget& budget;
    const SearchConfig& config;
    std::unordered_map<std::string, ProbeEntry> memo;
    std::vector<SearchCandidate> found;

    ArchProblem(const HardwareBudget& b, const SearchConfig& c) : budget(b), config(c) {}

    std::vector<ArchMove> legal_actions(const Architecture& arch) {
        std::vector<ArchMove> moves;
        auto masked = [&](ArchAction a) { return (config.action_mask & action_bit(a)) == 0; };
        auto add_if_legal = [&](ArchMove move) {
            if (masked(move.kind)) return;
            if (try_apply_action(arch, move, config.space)) moves.push_back(move);
        };
        int n = static_cast<int>(arch.layers.size());
        for (int i = 0; i < n; ++i) {
            add_if_legal({ArchAction::IncreaseChannel, i});
            add_if_legal({ArchAction::DecreaseChannel, i});
        }
        add_if_legal({ArchAction::IncreaseResolution, -1});
        add_if_legal({ArchAction::DecreaseResolution, -1});
        for (int i = 0; i < n; ++i) {
            add_if_legal({ArchAction::SkipLayer, i});
            add_if_legal({ArchAction::UnskipLayer, i});
        }
        add_if_legal({ArchAction::AddSubgraph, -1});
        add_if_legal({ArchAction::DeleteSubgraph, -1});
        moves.push_back({ArchAction::Terminate, -1}); // always available
        return moves;
    }

    Architecture apply(const Architecture& arch, const ArchMove& move) {
        auto next = try_apply_action(arch, move, config.space);
        if (!next)
            throw std::logic_error("applied an illegal architecture move");
        return *next;
    }

    bool is_terminate(const ArchMove& move) const { return move.kind == ArchAction::Terminate; }

    const ProbeEntry& probe_for(const Architecture& arch) {
        std::string key = canonical_key(arch);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;

        ProbeEntry entry;
        entry.probe = probe_band(arch, budget, config.lat0, config.alpha, config.quant);
        entry.reward = band_reward(entry.probe, config.lat0, config.alpha);
        auto [pos, inserted] = memo.emplace(std::move(key), std::move(entry));
        if (inserted && pos->second.probe.feasible)
            found.push_back({arch, pos->second.probe.low_bits_cycles,
                             pos->second.probe.high_bits_cycles});
        return pos->second;
    }

    double reward(const Architecture& arch) { return probe_for(arch).reward; }
    void observe(const Architecture& arch) { probe_for(arch); }
};

SearchResult run_one_tree(const Architecture& seed_arch, const HardwareBudget& budget,
                          const SearchConfig& config, std::uint64_t seed, int rollouts) {
    ArchProblem problem(budget, config);
    TreeSearch<ArchProblem> tree(problem, seed_arch, seed, config.exploration);
    tree.run(rollouts, config.max_depth);
    SearchResult result;
    result.candidates = std::move(problem.found);
    result.rollouts_run = rollouts;
    result.states_probed = problem.memo.size();
    return result;
}

} // namespace

SearchResult search(const Architecture& seed_arch, const HardwareBudget& budget,
                    const SearchConfig& config, int threads) {
    if (config.lat0 < 1)
        throw std::invalid_argument("search needs lat0 >= 1");
    if (config.trees < 1 || config.max_rollouts < 1)
        throw std::invalid_argument("search needs trees >= 1 and max_rollouts >= 1");
    auto violations = validate(seed_arch, config.space);
    if (!violations.empty())
        throw std::invalid_argument("seed architecture invalid: " + violations.front().message);

    int per_tree = (config.max_rollouts + config.trees - 1) / config.trees;
    std::vector<SearchResult> parts(static_cast<std::size_t>(config.trees));

    if (threads > 1 && config.trees > 1) {
        std::vector<std::future<SearchResult>> futures;
        for (int t = 0; t < config.trees; ++t)
            futures.push_back(std::async(std::launch::async, run_one_tree, std::cref(seed_arch),
                                         std::cref(budget), std::cref(config),
                                         config.seed + static_cast<std::uint64_t>(t), per_tree));
        for (int t = 0; t < config.trees; ++t)
            parts[static_cast<std::size_t>(t)] = futures[static_cast<std::size_t>(t)].get();
    } else {
        for (int t = 0; t < config.trees; ++t)
            parts[static_cast<std::size_t>(t)] =
                run_one_tree(seed_arch, budget, config,
                             config.seed + static_cast<std::uint64_t>(t), per_tree);
    }

    SearchResult merged;
    std::unordered_map<std::string, bool> seen;
    for (const auto& part : parts) {
        merged.rollouts_run += part.rollouts_run;
        merged.states_probed += part.states_probed;
        for (const auto& cand : part.candidates) {
            auto key = canonical_key(cand.arch);
            if (seen.emplace(std::move(key), true).second) merged.candidates.push_back(cand);
        }
    }
    return merged;
}

} // namespace hwopt
