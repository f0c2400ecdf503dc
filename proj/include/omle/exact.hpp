#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omle/history_model.hpp"
#include "omle/policy.hpp"

namespace omle {

/**
 * @brief P̄(τ_h) = P(o_{1:h} | a_{1:h}) for every history up to depth H.
 *
 * pbar[h] is indexed by the flat (O*A)-ary tree index of τ_h; pbar[0] = {1}.
 * The model's reward table is copied so planning can run from the table alone.
 */
struct CondTable {
    EpisodeSpec spec;
    std::vector<std::vector<double>> pbar;
    std::vector<std::vector<double>> R;

    double at(const Trajectory& t) const { return pbar[t.length()][t.prefix_index(spec, t.length())]; }
    const std::vector<double>& leaves() const { return pbar[spec.H]; }
    /** @brief Largest marginalization residual |Σ_o P̄(τ,o,a) − P̄(τ)| over all nodes. */
    double marginal_residual() const;
    /** @brief Writes one CSV row per history (depth, index, obs/acts, value). */
    void write_csv(const std::string& path) const;
};

CondTable cond_table(const HistoryModel& model, std::uint64_t cap = kDefaultCapLeaves);

/** @brief P^π(τ) = P̄(τ)·π(τ) over all full trajectories. */
std::vector<double> trajectory_distribution(const CondTable& table, const HistoryPolicy& policy);
std::vector<double> trajectory_distribution(const HistoryModel& model, const HistoryPolicy& policy,
                                            std::uint64_t cap = kDefaultCapLeaves);

/** @brief π(τ_h) for all histories at every depth (pi[h] indexed like pbar[h]). */
std::vector<std::vector<double>> policy_weights(const HistoryPolicy& policy);

double tv_distance(const CondTable& t1, const CondTable& t2, const HistoryPolicy& policy);
double tv_distance(const HistoryModel& m1, const HistoryModel& m2, const HistoryPolicy& policy,
                   std::uint64_t cap = kDefaultCapLeaves);

double policy_value(const CondTable& table, const HistoryPolicy& policy);
double policy_value(const HistoryModel& model, const HistoryPolicy& policy,
                    std::uint64_t cap = kDefaultCapLeaves);

/** @brief A value together with a deterministic policy achieving it. */
struct Plan {
    double value = 0.0;
    PolicyPtr policy;
};

/** @brief Exact backward induction over the history tree; ties go to the lowest action. */
Plan optimal_plan(const CondTable& table);
Plan optimal_plan(const HistoryModel& model, std::uint64_t cap = kDefaultCapLeaves);

/** @brief argmax_π TV(P^π_1, P^π_2) by backward induction on leaf weights ½|P̄_1 − P̄_2|. */
Plan max_tv_plan(const CondTable& t1, const CondTable& t2);
Plan max_tv_plan(const HistoryModel& m1, const HistoryModel& m2, std::uint64_t cap = kDefaultCapLeaves);

/** @brief One trajectory from P^π_model; deterministic given the RNG state. */
Trajectory sample_trajectory(const HistoryModel& model, const HistoryPolicy& policy, Rng& rng);
Trajectory sample_trajectory(const HistoryModel& model, const HistoryPolicy& policy, std::uint64_t seed);

}  // namespace omle
