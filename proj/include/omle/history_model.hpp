#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "omle/core.hpp"

namespace omle {

/**
 * @brief Generic conditional dynamics P(o_h | o_{1:h-1}, a_{1:h-1}).
 *
 * Implementations expose a filtering state so that tree enumerations can
 * advance incrementally. The state at step h summarizes the prefix
 * (o,a)_{1:h-1}; `obs_probs(h, state)` returns the distribution of o_h.
 */
class HistoryModel {
public:
    virtual ~HistoryModel() = default;

    virtual const EpisodeSpec& spec() const = 0;
    /** @brief Filtering state for step 1 (empty prefix). */
    virtual Eigen::VectorXd initial_state() const = 0;
    /** @brief Raw conditional of o_h; may carry tiny negative noise for non-tabular models. */
    virtual Eigen::VectorXd raw_obs_probs(int h, const Eigen::VectorXd& state) const = 0;
    /**
     * @brief Next filtering state after observing o at step h and acting a.
     * @param p_obs the conditional probability of o (already computed by the caller).
     */
    virtual Eigen::VectorXd advance(int h, const Eigen::VectorXd& state, int o, int a,
                                    double p_obs) const = 0;
    /** @brief Reward R_h(o) in [0,1]. */
    virtual double reward(int h, int o) const = 0;

    /** @brief Conditional of o_h as a clipped, normalized distribution. */
    Eigen::VectorXd obs_probs(int h, const Eigen::VectorXd& state) const;
    /** @brief P(o_h = . | prefix), where prefix holds exactly h-1 pairs. */
    Eigen::VectorXd cond(int h, const Trajectory& prefix) const;
    /** @brief Filtering state after the given prefix; throws ZeroProbabilityPrefix. */
    Eigen::VectorXd state_after(const Trajectory& prefix) const;
};

using ModelPtr = std::shared_ptr<const HistoryModel>;

/** @brief Wraps a model and replaces its reward table R[h][o]. */
class RewardOverride : public HistoryModel {
public:
    RewardOverride(ModelPtr base, std::vector<std::vector<double>> R);
    const EpisodeSpec& spec() const override { return base_->spec(); }
    Eigen::VectorXd initial_state() const override { return base_->initial_state(); }
    Eigen::VectorXd raw_obs_probs(int h, const Eigen::VectorXd& s) const override {
        return base_->raw_obs_probs(h, s);
    }
    Eigen::VectorXd advance(int h, const Eigen::VectorXd& s, int o, int a, double p) const override {
        return base_->advance(h, s, o, a, p);
    }
    double reward(int h, int o) const override { return R_[h - 1][o]; }

private:
    ModelPtr base_;
    std::vector<std::vector<double>> R_;
};

}  // namespace omle
