#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omle/exact.hpp"
#include "omle/mle.hpp"
#include "omle/policy.hpp"

namespace omle {

/**
 * @brief How Π_exp(π) is built from the greedy policy.
 *
 * psr-core: {ν(π, h, a) : h in [0, H-1], a in Q^A_h}; identity: {π};
 * uniform-tail: {π on steps 1..h, uniform afterwards : h in [0, H-1]}.
 */
struct ExplorationStrategy {
    enum class Kind { PsrCore, Identity, UniformTail };
    Kind kind = Kind::Identity;
    std::vector<std::vector<std::vector<int>>> core_actions;  ///< Q^A_h for h = 0..H-1 (psr-core only)

    static ExplorationStrategy psr_core(std::vector<std::vector<std::vector<int>>> qa);
    static ExplorationStrategy identity();
    static ExplorationStrategy uniform_tail();
    /** @brief Parses "psr-core", "identity" or "uniform-tail"; core actions are supplied separately. */
    static Kind parse_kind(const std::string& name);
    std::string name() const;
    /**
     * @brief Throws PrefixViolation unless there is one set per step, each set is prefix-free
     * without repeats, and every sequence fits before the horizon with valid actions.
     */
    void validate(const EpisodeSpec& spec) const;
};

/** @brief Π_exp(π) for the strategy. */
std::vector<PolicyPtr> make_exploration(const ExplorationStrategy& strat, const PolicyPtr& pi);

/** @brief Knobs shared by both loops. */
struct RunOptions {
    int K = 100;
    double beta = 0.0;
    std::uint64_t seed = 0;
    double p_min = 0.0;
    double tv_const = 10.0;  ///< C_emp in Σ TV² ≤ C_emp·β
    bool misspecified = false;
    std::uint64_t cap = kDefaultCapLeaves;
};

/** @brief One OMLE iteration. */
struct OmleIteration {
    int k = 0;
    int theta = 0;                 ///< θ^k
    double optimistic_value = 0.0; ///< V^{π^k}(θ^k)
    double true_value = 0.0;       ///< V^{π^k}(θ*)
    double v_star = 0.0;           ///< V*(θ*)
    double explore_value = 0.0;    ///< mean V^{π}(θ*) over π in Π_exp^k
    int alive = 0;                 ///< |B^k| when θ^k was chosen
    bool true_alive = false;
    bool optimism_ok = true;
    double sum_tv2 = 0.0;          ///< max over surviving θ of Σ_{t≤k} Σ_{π∈Π_exp^t} TV²(θ, θ*)
    bool tv_ok = true;
    std::size_t episodes = 0;
    double wall_ms = 0.0;          ///< kept out of the CSV
};

struct OmleRunLog {
    std::vector<OmleIteration> iters;
    double beta = 0.0;
    std::string strategy;
    std::uint64_t seed = 0;
    int true_index = -1;

    /** @brief One row per iteration, fixed column order, no timing columns. */
    void write_csv(const std::string& path) const;
    std::string csv() const;
};

struct OmleResult {
    PolicyPtr pi_out;      ///< uniform mixture of {π^k}
    double pi_out_value = 0.0;
    OmleRunLog log;
    nlohmann::json summary() const;
};

/** @brief Optimistic MLE loop over a finite class; env generates the episodes. */
OmleResult run_omle(const ModelClass& cls, const HistoryModel& env, const ExplorationStrategy& strat,
                    const RunOptions& opt);

/** @brief One Reward-Free OMLE iteration. */
struct RewardFreeIteration {
    int k = 0;
    int pair_i = -1, pair_j = -1;  ///< maximizing alive pair, -1 when a single model is alive
    double diameter = 0.0;         ///< max_π TV over the alive pair
    int alive = 0;
    bool true_alive = false;
    double sum_tv2 = 0.0;
    bool tv_ok = true;
    int theta_out = 0;             ///< lowest alive index after the update
    double tv_error = 0.0;         ///< max_π TV(θ_out, θ*)
    std::size_t episodes = 0;
    double wall_ms = 0.0;
};

struct RewardFreeLog {
    std::vector<RewardFreeIteration> iters;
    double beta = 0.0;
    std::string strategy;
    std::uint64_t seed = 0;
    int true_index = -1;

    void write_csv(const std::string& path) const;
    std::string csv() const;
};

struct RewardFreeResult {
    int theta_out = 0;
    double tv_error = 0.0;  ///< max_π TV(P_{θ_out}, P_env)
    RewardFreeLog log;
    nlohmann::json summary() const;
};

/** @brief Reward-free MLE exploration over a finite class; returns the lowest alive model and its TV error. */
RewardFreeResult run_reward_free(const ModelClass& cls, const HistoryModel& env, const ExplorationStrategy& strat,
                                 const RunOptions& opt);

/**
 * @brief V*_env(R) − V^{π̂}_env(R), where π̂ is optimal for `learned` under the same rewards R.
 *
 * Bounded by 2H·max_π TV(learned, env) for any R with entries in [0, 1].
 */
double planning_loss(const HistoryModel& learned, const HistoryModel& env, const std::vector<std::vector<double>>& R,
                     std::uint64_t cap = kDefaultCapLeaves);

}  // namespace omle
