#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "omle/core.hpp"

namespace omle {

/**
 * @brief Finite-horizon history-dependent policy.
 *
 * The decision at step h sees the prefix (o,a)_{1:h-1} (as a flat tree index)
 * and the current observation o_h. Tree policies store one action
 * distribution per such node; composite policies are ν(π, h*, a):
 * π before step h*, uniform at h*, the fixed sequence a right after, and
 * uniform for the remaining steps.
 */
class HistoryPolicy {
public:
    enum class Kind { DeterministicTree, StochasticTree, Composite };

    /** @brief Uniformly random policy. */
    static std::shared_ptr<const HistoryPolicy> uniform(const EpisodeSpec& spec);
    /** @brief Deterministic tree policy from per-depth action tables (index prefix*O + o). */
    static std::shared_ptr<const HistoryPolicy> deterministic(const EpisodeSpec& spec,
                                                              std::vector<std::vector<int>> actions);
    /** @brief Deterministic policy from a rule (h, prefix index, o) -> action. */
    static std::shared_ptr<const HistoryPolicy> from_rule(
        const EpisodeSpec& spec, const std::function<int(int, std::uint64_t, int)>& rule);
    /** @brief Stochastic tree policy; tables hold A probabilities per node. */
    static std::shared_ptr<const HistoryPolicy> stochastic(const EpisodeSpec& spec,
                                                           std::vector<std::vector<double>> probs);
    /** @brief Composite ν(base, switch_step, seq); switch_step in [0, H-1]. */
    static std::shared_ptr<const HistoryPolicy> composite(std::shared_ptr<const HistoryPolicy> base,
                                                          int switch_step, std::vector<int> seq);
    /** @brief Behavioural policy equivalent to a weighted mixture of policies. */
    static std::shared_ptr<const HistoryPolicy> mixture(
        const std::vector<std::shared_ptr<const HistoryPolicy>>& comps, const std::vector<double>& weights);

    Kind kind() const { return kind_; }
    const EpisodeSpec& spec() const { return spec_; }
    bool is_deterministic() const;

    /** @brief Probability of action a at step h given prefix index and o_h. */
    double prob(int h, std::uint64_t prefix, int o, int a) const;
    /** @brief Writes the A action probabilities into out. */
    void probs(int h, std::uint64_t prefix, int o, double* out) const;
    /** @brief Action of a deterministic policy (lowest index with mass for stochastic ones). */
    int action(int h, std::uint64_t prefix, int o) const;
    /** @brief π(τ): product of the action probabilities along a (partial) trajectory. */
    double trajectory_prob(const Trajectory& t) const;

    int switch_step() const { return switch_step_; }
    const std::vector<int>& sequence() const { return seq_; }
    const std::shared_ptr<const HistoryPolicy>& base() const { return base_; }

private:
    HistoryPolicy() = default;
    void check_tables() const;

    Kind kind_ = Kind::StochasticTree;
    EpisodeSpec spec_;
    bool uniform_ = false;
    std::vector<std::vector<int>> actions_;
    std::vector<std::vector<double>> probs_;
    std::shared_ptr<const HistoryPolicy> base_;
    int switch_step_ = 0;
    std::vector<int> seq_;
};

using PolicyPtr = std::shared_ptr<const HistoryPolicy>;

/** @brief Stochastic tree policy with independent Dirichlet(1) action distributions at every node. */
PolicyPtr random_stochastic_policy(const EpisodeSpec& spec, Rng& rng);

}  // namespace omle
