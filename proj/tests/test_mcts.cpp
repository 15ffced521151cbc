// Tree search: UCT engine invariants on toy problems, then the
// architecture-space search with band-probe rewards.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "hwopt/mcts.hpp"
#include "support.hpp"

using namespace hwopt;

namespace {

// Two-armed bandit: root 0 branches to terminal arms 1 (payout 1) and 2
// (payout 0). The tree should pile visits onto arm 1.
struct BanditProblem {
    using State = int;
    using Action = int;

    std::vector<Action> legal_actions(const State& s) const {
        if (s == 0) return {1, 2};
        return {};
    }
    State apply(const State&, const Action& a) const { return a; }
    bool is_terminate(const Action&) const { return false; }
    double reward(const State& s) const { return s == 1 ? 1.0 : 0.0; }
    void observe(const State&) {}
};

// Countdown: subtract 1 or 2 until zero, or stop early via a terminate
// action. Gives a deeper tree plus terminate-created children.
struct CountdownProblem {
    using State = int;
    using Action = int; // 0 = stop, otherwise the amount subtracted

    std::vector<State> observed;

    std::vector<Action> legal_actions(const State& s) const {
        if (s <= 0) return {};
        if (s == 1) return {0, 1};
        return {0, 1, 2};
    }
    State apply(const State& s, const Action& a) const { return s - a; }
    bool is_terminate(const Action& a) const { return a == 0; }
    double reward(const State& s) const { return s == 0 ? 1.0 : 0.25; }
    void observe(const State& s) { observed.push_back(s); }
};

// Every expansion or descent into a child is preceded by exactly one visit
// of the parent, so interior counts must balance.
template <typename Node>
void check_visit_conservation(const Node& node) {
    if (node.children.empty()) return;
    int child_sum = 0;
    for (const auto& child : node.children) child_sum += child->visits;
    REQUIRE(node.visits == 1 + child_sum);
    for (const auto& child : node.children) check_visit_conservation(*child);
}

// Children created by a terminate action keep their parent's state.
template <typename Node>
int count_stop_children(const Node& node) {
    int found = 0;
    for (const auto& child : node.children) {
        if (child->state == node.state) {
            CHECK(child->terminal);
            CHECK(child->children.empty());
            ++found;
        }
        found += count_stop_children(*child);
    }
    return found;
}

Architecture toy_arch(int c0, int c1) {
    Architecture a;
    a.resolution = 32;
    a.tmpl.kernels = {KernelSpec{KernelKind::FullConv, 1}};
    a.layers = {testsup::make_layer(KernelKind::FullConv, 1, 1, 16, c0),
                testsup::make_layer(KernelKind::FullConv, 1, 1, c0, c1)};
    a.derive_dims();
    return a;
}

SearchSpace toy_space() {
    SearchSpace space;
    space.channel_set = {16, 32};
    space.resolution_set = {32};
    space.max_layers = 4;
    return space;
}

SearchConfig toy_config(std::uint64_t seed) {
    SearchConfig cfg;
    cfg.lat0 = 8224;
    cfg.alpha = 0.4;
    cfg.max_rollouts = 200;
    cfg.max_depth = 10;
    cfg.seed = seed;
    cfg.space = toy_space();
    cfg.action_mask =
        action_bit(ArchAction::IncreaseChannel) | action_bit(ArchAction::DecreaseChannel);
    return cfg;
}

std::vector<std::string> candidate_keys(const SearchResult& result) {
    std::vector<std::string> keys;
    for (const auto& cand : result.candidates) keys.push_back(canonical_key(cand.arch));
    return keys;
}

} // namespace

TEST_CASE("uct score blends mean value with an exploration bonus") {
    CHECK(uct_score(0.0, 0, 10, 1.0) == std::numeric_limits<double>::infinity());
    CHECK(uct_score(3.0, 4, 10, 0.0) == 0.75);                     // pure exploitation
    CHECK(std::abs(uct_score(3.0, 4, 10, std::sqrt(2.0)) - 1.823) < 1e-3);
    // More parent visits raise the bonus of a rarely tried child.
    CHECK(uct_score(0.0, 1, 100, 1.0) > uct_score(0.0, 1, 10, 1.0));
}

TEST_CASE("bandit tree concentrates visits on the paying arm") {
    BanditProblem problem;
    TreeSearch<BanditProblem> tree(problem, 0, 42, std::sqrt(2.0));
    CHECK(tree.root().visits == 1);

    tree.run(1000, 5);
    const auto& root = tree.root();
    CHECK(root.visits == 1001);
    REQUIRE(root.children.size() == 2);

    int good_visits = 0;
    int bad_visits = 0;
    for (const auto& child : root.children) {
        CHECK(child->terminal);
        if (child->state == 1) {
            good_visits = child->visits;
            CHECK(child->value_sum == doctest::Approx(child->visits));
        } else {
            REQUIRE(child->state == 2);
            bad_visits = child->visits;
            CHECK(child->value_sum == 0.0);
        }
    }
    CHECK(good_visits + bad_visits == 1000);
    CHECK(good_visits >= 800);
    CHECK(root.value_sum == doctest::Approx(static_cast<double>(good_visits)));
}

TEST_CASE("visit counts stay conserved after every single rollout") {
    SUBCASE("two-armed bandit") {
        BanditProblem problem;
        TreeSearch<BanditProblem> tree(problem, 0, 7, std::sqrt(2.0));
        for (int i = 1; i <= 100; ++i) {
            tree.run(1, 5);
            CHECK(tree.root().visits == 1 + i);
            check_visit_conservation(tree.root());
        }
    }
    SUBCASE("countdown chain") {
        CountdownProblem problem;
        TreeSearch<CountdownProblem> tree(problem, 6, 11, 1.0);
        for (int i = 1; i <= 200; ++i) {
            tree.run(1, 10);
            CHECK(tree.root().visits == 1 + i);
            check_visit_conservation(tree.root());
        }
    }
}

TEST_CASE("terminate actions create terminal children that keep the parent state") {
    CountdownProblem problem;
    TreeSearch<CountdownProblem> tree(problem, 6, 3, 1.0);
    tree.run(200, 10);

    CHECK(count_stop_children(tree.root()) >= 1);

    // The root was observed at construction and every applied state lies on
    // the countdown range; stop actions never produce a new observation.
    REQUIRE(!problem.observed.empty());
    CHECK(problem.observed.front() == 6);
    for (int s : problem.observed) {
        CHECK(s >= 0);
        CHECK(s <= 6);
    }
}

TEST_CASE("identical seeds grow identical trees") {
    BanditProblem p1;
    BanditProblem p2;
    TreeSearch<BanditProblem> t1(p1, 0, 99, std::sqrt(2.0));
    TreeSearch<BanditProblem> t2(p2, 0, 99, std::sqrt(2.0));
    t1.run(500, 5);
    t2.run(500, 5);
    REQUIRE(t1.root().children.size() == t2.root().children.size());
    for (std::size_t i = 0; i < t1.root().children.size(); ++i) {
        CHECK(t1.root().children[i]->state == t2.root().children[i]->state);
        CHECK(t1.root().children[i]->visits == t2.root().children[i]->visits);
    }
}

TEST_CASE("architecture moves respect sets, chains, and identity form") {
    // One full mbv2-style instance plus a partial second instance.
    Architecture arch;
    arch.resolution = 32;
    arch.tmpl.kernels = {KernelSpec{KernelKind::FullConv, 1},
                         KernelSpec{KernelKind::DepthwiseConv, 3},
                         KernelSpec{KernelKind::FullConv, 1}};
    arch.layers = {testsup::make_layer(KernelKind::FullConv, 1, 1, 8, 16),
                   testsup::make_layer(KernelKind::DepthwiseConv, 3, 1, 16, 16),
                   testsup::make_layer(KernelKind::FullConv, 1, 1, 16, 24),
                   testsup::make_layer(KernelKind::FullConv, 1, 1, 24, 32)};
    arch.derive_dims();
    REQUIRE(validate_structure(arch).empty());

    SearchSpace space;
    space.channel_set = {8, 16, 24, 32, 48, 64};
    space.resolution_set = {16, 32};
    space.max_layers = 10;
    REQUIRE(validate(arch, space).empty());

    SUBCASE("channel step ripples through depthwise and stops at a full conv") {
        auto next = try_apply_action(arch, {ArchAction::IncreaseChannel, 0}, space);
        REQUIRE(next.has_value());
        CHECK(next->layers[0].out_ch == 24);
        CHECK(next->layers[1].in_ch == 24);
        CHECK(next->layers[1].out_ch == 24); // depthwise mirrors its input
        CHECK(next->layers[2].in_ch == 24);
        CHECK(next->layers[2].out_ch == 24); // absorbing conv keeps its width
        CHECK(next->layers[3].in_ch == 24);
        CHECK(validate(*next, space).empty());
    }
    SUBCASE("channel steps clamp at the set boundaries") {
        auto bumped = try_apply_action(arch, {ArchAction::IncreaseChannel, 3}, space);
        REQUIRE(bumped.has_value());
        CHECK(bumped->layers[3].out_ch == 48);
        Architecture top = *bumped;
        top.layers[3].out_ch = 64;
        CHECK(!try_apply_action(top, {ArchAction::IncreaseChannel, 3}, space).has_value());

        auto down = try_apply_action(arch, {ArchAction::DecreaseChannel, 0}, space);
        REQUIRE(down.has_value());
        CHECK(down->layers[0].out_ch == 8);
        CHECK(!try_apply_action(*down, {ArchAction::DecreaseChannel, 0}, space).has_value());
    }
    SUBCASE("channel moves skip depthwise and out-of-range layers") {
        CHECK(!try_apply_action(arch, {ArchAction::IncreaseChannel, 1}, space).has_value());
        CHECK(!try_apply_action(arch, {ArchAction::IncreaseChannel, -1}, space).has_value());
        CHECK(!try_apply_action(arch, {ArchAction::IncreaseChannel, 4}, space).has_value());
    }
    SUBCASE("resolution moves stay inside the resolution set") {
        auto down = try_apply_action(arch, {ArchAction::DecreaseResolution, -1}, space);
        REQUIRE(down.has_value());
        CHECK(down->resolution == 16);
        CHECK(down->layers[0].in_h == 16); // dims rederived
        CHECK(!try_apply_action(*down, {ArchAction::DecreaseResolution, -1}, space).has_value());
        CHECK(!try_apply_action(arch, {ArchAction::IncreaseResolution, -1}, space).has_value());
    }
    SUBCASE("skip pins the identity form and unskip keeps it") {
        auto skipped = try_apply_action(arch, {ArchAction::SkipLayer, 2}, space);
        REQUIRE(skipped.has_value());
        CHECK(skipped->layers[2].skipped);
        CHECK(skipped->layers[2].out_ch == 16);
        CHECK(skipped->layers[2].stride == 1);
        CHECK(skipped->layers[3].in_ch == 16);
        CHECK(!try_apply_action(*skipped, {ArchAction::SkipLayer, 2}, space).has_value());
        CHECK(!try_apply_action(*skipped, {ArchAction::IncreaseChannel, 2}, space).has_value());

        auto revived = try_apply_action(*skipped, {ArchAction::UnskipLayer, 2}, space);
        REQUIRE(revived.has_value());
        CHECK(!revived->layers[2].skipped);
        CHECK(revived->layers[2].out_ch == 16); // identity shape survives
        CHECK(!try_apply_action(arch, {ArchAction::UnskipLayer, 2}, space).has_value());
    }
    SUBCASE("subgraphs append and trim template-sized blocks") {
        auto grown = try_apply_action(arch, {ArchAction::AddSubgraph, -1}, space);
        REQUIRE(grown.has_value());
        REQUIRE(grown->layers.size() == 7);
        CHECK(grown->layers[4].kernel == arch.tmpl.kernels[0]);
        CHECK(grown->layers[5].kernel == arch.tmpl.kernels[1]);
        CHECK(grown->layers[6].kernel == arch.tmpl.kernels[2]);
        for (std::size_t i = 4; i < 7; ++i) {
            CHECK(grown->layers[i].in_ch == 32);
            CHECK(grown->layers[i].out_ch == 32);
            CHECK(grown->layers[i].stride == 1);
        }
        CHECK(validate(*grown, space).empty());

        SearchSpace tight = space;
        tight.max_layers = 7;
        CHECK(!try_apply_action(*grown, {ArchAction::AddSubgraph, -1}, tight).has_value());

        auto trimmed = try_apply_action(*grown, {ArchAction::DeleteSubgraph, -1}, space);
        REQUIRE(trimmed.has_value());
        CHECK(trimmed->layers.size() == 4);
        CHECK(canonical_key(*trimmed) == canonical_key(arch));

        Architecture minimal = toy_arch(16, 16);
        minimal.layers.pop_back();
        minimal.derive_dims();
        // One layer left against a one-slot template: nothing to delete.
        CHECK(!try_apply_action(minimal, {ArchAction::DeleteSubgraph, -1}, toy_space())
                   .has_value());
    }
    SUBCASE("terminate is not a state mutation") {
        CHECK(!try_apply_action(arch, {ArchAction::Terminate, -1}, space).has_value());
    }
}

TEST_CASE("band reward is 1 inside the band and decays with the violation") {
    BandProbe probe;
    probe.allocated = false;
    CHECK(band_reward(probe, 1000, 0.5) == 0.0);

    probe.allocated = true;
    probe.feasible = true;
    probe.low_bits_cycles = 900;
    probe.high_bits_cycles = 950;
    CHECK(band_reward(probe, 1000, 0.5) == 1.0);

    probe.feasible = false;
    probe.low_bits_cycles = 1500; // overshoots the ceiling by half
    probe.high_bits_cycles = 2000;
    CHECK(band_reward(probe, 1000, 0.5) == doctest::Approx(1.0 / 1.5));

    probe.low_bits_cycles = 100; // too fast even at the widest bits
    probe.high_bits_cycles = 200;
    CHECK(band_reward(probe, 1000, 0.5) == doctest::Approx(1.0 / 1.3));
}

TEST_CASE("band probes of the four-state toy space match hand-derived cycles") {
    const HardwareBudget budget = HardwareBudget::zu3eg();
    const QuantSearchOptions quant; // bits 2..8, activations fixed at 8

    // Both layers are transfer-bound, so the best latency is the activation
    // stream plus the bandwidth-limited weight load, independent of the
    // parallelism choice.
    const std::pair<int, int> combos[4] = {{16, 16}, {16, 32}, {32, 16}, {32, 32}};
    const std::int64_t expect_low[4] = {4112, 6168, 8224, 8240};
    const std::int64_t expect_high[4] = {4160, 6240, 8320, 8384};

    for (int i = 0; i < 4; ++i) {
        auto probe = probe_band(toy_arch(combos[i].first, combos[i].second), budget, 8224, 0.4,
                                quant);
        REQUIRE(probe.allocated);
        CHECK(probe.low_bits_cycles == expect_low[i]);
        CHECK(probe.high_bits_cycles == expect_high[i]);
        CHECK(probe.feasible == (i != 3)); // only (32,32) overshoots lat0
    }
}

TEST_CASE("search recovers every band-feasible architecture in the toy space") {
    const HardwareBudget budget = HardwareBudget::zu3eg();
    std::set<std::string> feasible_keys = {canonical_key(toy_arch(16, 16)),
                                           canonical_key(toy_arch(16, 32)),
                                           canonical_key(toy_arch(32, 16))};

    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        auto result = search(toy_arch(16, 16), budget, toy_config(seed));
        CHECK(result.rollouts_run == 200);
        CHECK(result.states_probed == 4); // the whole space gets visited
        auto keys = candidate_keys(result);
        CHECK(std::set<std::string>(keys.begin(), keys.end()) == feasible_keys);
        // The seed state is probed first, so it leads the discovery order.
        REQUIRE(!keys.empty());
        CHECK(keys.front() == canonical_key(toy_arch(16, 16)));
        for (const auto& cand : result.candidates) {
            CHECK(cand.low_bits_cycles <= 8224);
            CHECK(cand.high_bits_cycles >= static_cast<std::int64_t>(0.4 * 8224));
        }
    }
}

TEST_CASE("search returns no candidates when the band is unreachable") {
    auto cfg = toy_config(0);
    cfg.lat0 = 2000; // below every achievable latency
    auto result = search(toy_arch(16, 16), HardwareBudget::zu3eg(), cfg);
    CHECK(result.candidates.empty());
    CHECK(result.rollouts_run == 200);
    CHECK(result.states_probed >= 1);
}

TEST_CASE("search is deterministic and thread-split stable") {
    const HardwareBudget budget = HardwareBudget::zu3eg();
    auto r1 = search(toy_arch(16, 16), budget, toy_config(7));
    auto r2 = search(toy_arch(16, 16), budget, toy_config(7));
    CHECK(candidate_keys(r1) == candidate_keys(r2));

    auto cfg = toy_config(7);
    cfg.trees = 2;
    auto serial = search(toy_arch(16, 16), budget, cfg, 1);
    auto parallel = search(toy_arch(16, 16), budget, cfg, 2);
    CHECK(serial.rollouts_run == 200);
    CHECK(candidate_keys(serial) == candidate_keys(parallel));
    for (std::size_t i = 0; i < serial.candidates.size(); ++i) {
        CHECK(serial.candidates[i].low_bits_cycles == parallel.candidates[i].low_bits_cycles);
        CHECK(serial.candidates[i].high_bits_cycles ==
              parallel.candidates[i].high_bits_cycles);
    }
}

TEST_CASE("search rejects malformed requests") {
    auto cfg = toy_config(0);
    cfg.lat0 = 0;
    CHECK_THROWS_AS(search(toy_arch(16, 16), HardwareBudget::zu3eg(), cfg),
                    std::invalid_argument);

    cfg = toy_config(0);
    cfg.trees = 0;
    CHECK_THROWS_AS(search(toy_arch(16, 16), HardwareBudget::zu3eg(), cfg),
                    std::invalid_argument);

    // 24 channels is not in the {16, 32} search space.
    CHECK_THROWS_AS(search(toy_arch(24, 16), HardwareBudget::zu3eg(), toy_config(0)),
                    std::invalid_argument);
}
