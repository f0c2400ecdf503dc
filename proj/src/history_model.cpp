#include "omle/history_model.hpp"

namespace omle {

Eigen::VectorXd HistoryModel::obs_probs(int h, const Eigen::VectorXd& state) const {
    Eigen::VectorXd p = raw_obs_probs(h, state);
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0) p[i] = 0.0;
        s += p[i];
    }
    if (s > kZeroProb) p /= s;
    return p;
}

Eigen::VectorXd HistoryModel::state_after(const Trajectory& prefix) const {
    Eigen::VectorXd st = initial_state();
    for (int i = 0; i < prefix.length(); ++i) {
        const int h = i + 1;
        Eigen::VectorXd p = obs_probs(h, st);
        const double po = p[prefix.obs[i]];
        if (po <= kZeroProb)
            throw ZeroProbabilityPrefix("observation " + std::to_string(prefix.obs[i]) +
                                        " at step " + std::to_string(h) + " has probability 0");
        st = advance(h, st, prefix.obs[i], prefix.acts[i], po);
    }
    return st;
}

Eigen::VectorXd HistoryModel::cond(int h, const Trajectory& prefix) const {
    if (prefix.length() != h - 1)
        throw InvalidModel("cond at step " + std::to_string(h) + " needs a prefix of " +
                           std::to_string(h - 1) + " pairs");
    return obs_probs(h, state_after(prefix));
}

RewardOverride::RewardOverride(ModelPtr base, std::vector<std::vector<double>> R)
    : base_(std::move(base)), R_(std::move(R)) {
    const auto& sp = base_->spec();
    if (static_cast<int>(R_.size()) != sp.H) throw InvalidModel("reward table needs H rows");
    for (const auto& row : R_) {
        if (static_cast<int>(row.size()) != sp.O) throw InvalidModel("reward row needs O entries");
        for (double r : row)
            if (!(r >= 0.0 && r <= 1.0)) throw InvalidModel("rewards must lie in [0,1]");
    }
}

}  // namespace omle
