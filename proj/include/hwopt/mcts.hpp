#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "hwopt/arch.hpp"
#include "hwopt/quant_solver.hpp"

namespace hwopt {

// Mean value plus exploration bonus; unvisited nodes sort first.
inline double uct_score(double value_sum, int visits, int parent_visits, double exploration) {
    if (visits == 0) return std::numeric_limits<double>::infinity();
    return value_sum / visits +
           exploration * std::sqrt(std::log(static_cast<double>(parent_visits)) / visits);
}

// Generic UCT tree. Problem supplies:
//   using State; using Action;
//   std::vector<Action> legal_actions(const State&);
//   State apply(const State&, const Action&);
//   bool is_terminate(const Action&);   // action that ends an episode in place
//   double reward(const State&);        // in [0,1]
//   void observe(const State&);         // called once per materialized state
template <class Problem>
class TreeSearch {
public:
    struct Node {
        typename Problem::State state;
        bool terminal = false;
        int visits = 0;
        double value_sum = 0.0;
        std::vector<typename Problem::Action> untried;
        std::vector<std::unique_ptr<Node>> children;
    };

    TreeSearch(Problem& problem, typename Problem::State root_state, std::uint64_t seed,
               double exploration)
        : problem_(problem), rng_(seed), exploration_(exploration) {
        root_ = std::make_unique<Node>();
        root_->state = std::move(root_state);
        root_->untried = problem_.legal_actions(root_->state);
        root_->terminal = root_->untried.empty();
        root_->visits = 1; // virtual visit; keeps parent = 1 + sum(children)
        problem_.observe(root_->state);
    }

    void run(int rollouts, int max_depth) {
        for (int r = 0; r < rollouts; ++r) iterate(max_depth);
    }

    const Node& root() const { return *root_; }

private:
    void iterate(int max_depth) {
        std::vector<Node*> path{root_.get()};
        Node* node = root_.get();

        while (!node->terminal && node->untried.empty() && !node->children.empty()) {
            node = best_child(node);
            path.push_back(node);
        }

        double reward;
        if (!node->terminal && !node->untried.empty()) {
            Node* child = expand(node);
            path.push_back(child);
            reward = child->terminal ? problem_.reward(child->state)
                                     : rollout(child->state, max_depth);
        } else {
            // Terminal leaf re-selected: re-evaluate in place.
            reward = problem_.reward(node->state);
        }

        for (Node* n : path) {
            n->visits += 1;
            n->value_sum += reward;
        }
    }

    Node* best_child(Node* node) {
        Node* best = nullptr;
        double best_score = -std::numeric_limits<double>::infinity();
        for (const auto& child : node->children) {
            double score =
                uct_score(child->value_sum, child->visits, node->visits, exploration_);
            if (score > best_score) {
                best_score = score;
                best = child.get();
            }
        }
        return best;
    }

    Node* expand(Node* node) {
        std::uniform_int_distribution<std::size_t> pick(0, node->untried.size() - 1);
        std::size_t idx = pick(rng_);
        auto action = node->untried[idx];
        node->untried[idx] = node->untried.back();
        node->untried.pop_back();

        auto child = std::make_unique<Node>();
        if (problem_.is_terminate(action)) {
            child->state = node->state;
            child->terminal = true;
        } else {
            child->state = problem_.apply(node->state, action);
            child->untried = problem_.legal_actions(child->state);
            child->terminal = child->untried.empty();
            problem_.observe(child->state);
        }
        node->children.push_back(std::move(child));
        return node->children.back().get();
    }

    double rollout(typename Problem::State state, int max_depth) {
        for (int d = 0; d < max_depth; ++d) {
            auto actions = problem_.legal_actions(state);
            if (actions.empty()) break;
            std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
            const auto& action = actions[pick(rng_)];
            if (problem_.is_terminate(action)) break;
            state = problem_.apply(state, action);
            problem_.observe(state);
        }
        return problem_.reward(state);
    }

    Problem& problem_;
    std::unique_ptr<Node> root_;
    std::mt19937_64 rng_;
    double exploration_;
};

// --- architecture search on top of the generic tree ---

enum class ArchAction : int {
    IncreaseChannel = 0,
    DecreaseChannel,
    IncreaseResolution,
    DecreaseResolution,
    SkipLayer,
    UnskipLayer,
    AddSubgraph,
    DeleteSubgraph,
    Terminate,
};

inline constexpr std::uint32_t action_bit(ArchAction a) { return 1u << static_cast<int>(a); }
inline constexpr std::uint32_t kAllArchActions = (1u << 9) - 1;

struct SearchConfig {
    std::int64_t lat0 = 0;
    double alpha = 0.5;
    double exploration = std::sqrt(2.0);
    int max_rollouts = 1000;
    int max_depth = 30;
    std::uint64_t seed = 0;
    int trees = 1;
    SearchSpace space = SearchSpace::defaults();
    QuantSearchOptions quant; // band probes: bit range, parallelism, quant unit
    // Terminate is always available; this masks the mutation families.
    std::uint32_t action_mask = kAllArchActions;
};

struct ArchMove {
    ArchAction kind = ArchAction::Terminate;
    int layer = -1;
};

// One mutation step; nullopt when the move is illegal or leaves the space.
std::optional<Architecture> try_apply_action(const Architecture& arch, const ArchMove& move,
                                             const SearchSpace& space);

struct SearchCandidate {
    Architecture arch;
    std::int64_t low_bits_cycles = 0;
    std::int64_t high_bits_cycles = 0;
};

struct SearchResult {
    std::vector<SearchCandidate> candidates; // dedup, discovery order
    int rollouts_run = 0;
    std::size_t states_probed = 0;
};

// Band reward: 1 when the probes bracket [alpha*lat0, lat0], else
// 1/(1+violation) with violation the lat0-normalized overshoot of the
// low-bits probe plus undershoot of the high-bits probe; 0 when allocation
// fails outright.
double band_reward(const BandProbe& probe, std::int64_t lat0, double alpha);

// Runs `trees` independent trees (seeds seed+0..) of max_rollouts/trees
// rollouts each, merging candidate pools in tree order. Deterministic for a
// fixed (seed, trees); threads only bounds concurrency.
SearchResult search(const Architecture& seed_arch, const HardwareBudget& budget,
                    const SearchConfig& config, int threads = 1);

} // namespace hwopt
