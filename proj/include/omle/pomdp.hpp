#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "omle/history_model.hpp"

namespace omle {

/**
 * @brief Tabular latent-state model.
 *
 * T[h-1][a](s', s) = P(s' | s, a) for transitions out of step h (h in [H-1]);
 * Obs[h-1](o, s) = O_h(o | s); R[h-1][o] = R_h(o).
 */
class TabularPOMDP : public HistoryModel {
public:
    TabularPOMDP() = default;
    TabularPOMDP(EpisodeSpec spec, Eigen::VectorXd mu1, std::vector<std::vector<Eigen::MatrixXd>> T,
                 std::vector<Eigen::MatrixXd> Obs, std::vector<std::vector<double>> R);

    /** @brief Throws InvalidModel when any stochasticity or range invariant fails. */
    void validate() const;

    const EpisodeSpec& spec() const override { return spec_; }
    Eigen::VectorXd initial_state() const override { return mu1_; }
    Eigen::VectorXd raw_obs_probs(int h, const Eigen::VectorXd& belief) const override;
    Eigen::VectorXd advance(int h, const Eigen::VectorXd& belief, int o, int a,
                            double p_obs) const override;
    double reward(int h, int o) const override { return R_[h - 1][o]; }

    const Eigen::VectorXd& mu1() const { return mu1_; }
    const Eigen::MatrixXd& T(int h, int a) const { return T_[h - 1][a]; }
    const Eigen::MatrixXd& Obs(int h) const { return Obs_[h - 1]; }
    const std::vector<std::vector<double>>& rewards() const { return R_; }
    const std::vector<std::vector<Eigen::MatrixXd>>& transitions() const { return T_; }
    const std::vector<Eigen::MatrixXd>& emissions() const { return Obs_; }

    nlohmann::json to_json() const;
    static TabularPOMDP from_json(const nlohmann::json& j);
    static TabularPOMDP load(const std::string& path);
    void save(const std::string& path) const;

    /** @brief Same dynamics with a different reward table. */
    TabularPOMDP with_rewards(std::vector<std::vector<double>> R) const;

private:
    EpisodeSpec spec_;
    Eigen::VectorXd mu1_;
    std::vector<std::vector<Eigen::MatrixXd>> T_;
    std::vector<Eigen::MatrixXd> Obs_;
    std::vector<std::vector<double>> R_;
};

/** @brief P(o_h = . | prefix) for a tabular model (forward belief recursion). */
Eigen::VectorXd pomdp_cond(const TabularPOMDP& model, int h, const Trajectory& prefix);

/**
 * @brief Brute-force P(o_{1:L} | a_{1:L}) by summing over all latent paths.
 *
 * Exponential in L; used as an independent check of the belief recursion.
 */
double latent_path_probability(const TabularPOMDP& model, const Trajectory& traj);

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);

}  // namespace omle
