#include "omle/pomdp.hpp"

#include <cmath>
#include <fstream>

namespace omle {

namespace {

constexpr double kStochTol = 1e-12;

void check_stochastic(const Eigen::MatrixXd& m, const std::string& what) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double s = 0.0;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            if (!(m(r, c) >= 0.0) || !std::isfinite(m(r, c)))
                throw InvalidModel(what + " has a negative or non-finite entry");
            s += m(r, c);
        }
        if (std::abs(s - 1.0) > kStochTol)
            throw InvalidModel(what + " column " + std::to_string(c) + " sums to " +
                               std::to_string(s));
    }
}

}  // namespace

TabularPOMDP::TabularPOMDP(EpisodeSpec spec, Eigen::VectorXd mu1,
                           std::vector<std::vector<Eigen::MatrixXd>> T, std::vector<Eigen::MatrixXd> Obs,
                           std::vector<std::vector<double>> R)
    : spec_(spec), mu1_(std::move(mu1)), T_(std::move(T)), Obs_(std::move(Obs)), R_(std::move(R)) {
    validate();
}

void TabularPOMDP::validate() const {
    spec_.validate();
    const int S = spec_.S, O = spec_.O, A = spec_.A, H = spec_.H;
    if (mu1_.size() != S) throw InvalidModel("mu1 must have S entries");
    check_stochastic(mu1_, "mu1");
    if (static_cast<int>(T_.size()) != H - 1) throw InvalidModel("T needs H-1 steps");
    for (int h = 0; h < H - 1; ++h) {
        if (static_cast<int>(T_[h].size()) != A) throw InvalidModel("T[h] needs A matrices");
        for (int a = 0; a < A; ++a) {
            if (T_[h][a].rows() != S || T_[h][a].cols() != S) throw InvalidModel("T[h][a] must be SxS");
            check_stochastic(T_[h][a], "T[" + std::to_string(h + 1) + "][" + std::to_string(a) + "]");
        }
    }
    if (static_cast<int>(Obs_.size()) != H) throw InvalidModel("Obs needs H steps");
    for (int h = 0; h < H; ++h) {
        if (Obs_[h].rows() != O || Obs_[h].cols() != S) throw InvalidModel("Obs[h] must be OxS");
        check_stochastic(Obs_[h], "Obs[" + std::to_string(h + 1) + "]");
    }
    if (static_cast<int>(R_.size()) != H) throw InvalidModel("R needs H steps");
    for (const auto& row : R_) {
        if (static_cast<int>(row.size()) != O) throw InvalidModel("R[h] needs O entries");
        for (double r : row)
            if (!(r >= 0.0 && r <= 1.0)) throw InvalidModel("rewards must lie in [0,1]");
    }
}

Eigen::VectorXd TabularPOMDP::raw_obs_probs(int h, const Eigen::VectorXd& belief) const {
    return Obs_[h - 1] * belief;
}

Eigen::VectorXd TabularPOMDP::advance(int h, const Eigen::VectorXd& belief, int o, int a,
                                      double p_obs) const {
    Eigen::VectorXd post = Obs_[h - 1].row(o).transpose().cwiseProduct(belief);
    if (p_obs <= kZeroProb) throw ZeroProbabilityPrefix("advance through a zero-probability observation");
    post /= p_obs;
    if (h >= spec_.H) return post;
    Eigen::VectorXd next = T_[h - 1][a] * post;
    double s = 0.0;
    for (Eigen::Index i = 0; i < next.size(); ++i) {
        if (next[i] < kZeroProb) next[i] = 0.0;
        s += next[i];
    }
    if (s <= kZeroProb) throw ZeroProbabilityPrefix("belief vanished after transition");
    return next / s;
}

Eigen::VectorXd pomdp_cond(const TabularPOMDP& model, int h, const Trajectory& prefix) {
    return model.cond(h, prefix);
}

double latent_path_probability(const TabularPOMDP& model, const Trajectory& traj) {
    const int S = model.spec().S;
    const int L = traj.length();
    double total = 0.0;
    std::vector<int> path(L, 0);
    const std::uint64_t n = ipow(static_cast<std::uint64_t>(S), L);
    for (std::uint64_t idx = 0; idx < n; ++idx) {
        std::uint64_t r = idx;
        for (int i = L - 1; i >= 0; --i) {
            path[i] = static_cast<int>(r % S);
            r /= S;
        }
        double p = model.mu1()[path[0]];
        for (int i = 0; i < L && p > 0.0; ++i) {
            p *= model.Obs(i + 1)(traj.obs[i], path[i]);
            if (i + 1 < L) p *= model.T(i + 1, traj.acts[i])(path[i + 1], path[i]);
        }
        total += p;
    }
    return total;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw InvalidModel("ragged matrix in JSON");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(row);
    }
    return j;
}

nlohmann::json TabularPOMDP::to_json() const {
    nlohmann::json j;
    j["spec"] = {{"S", spec_.S}, {"O", spec_.O}, {"A", spec_.A}, {"H", spec_.H}};
    j["mu1"] = std::vector<double>(mu1_.data(), mu1_.data() + mu1_.size());
    j["T"] = nlohmann::json::array();
    for (const auto& step : T_) {
        nlohmann::json js = nlohmann::json::array();
        for (const auto& m : step) js.push_back(matrix_to_json(m));
        j["T"].push_back(js);
    }
    j["Obs"] = nlohmann::json::array();
    for (const auto& m : Obs_) j["Obs"].push_back(matrix_to_json(m));
    j["R"] = R_;
    return j;
}

TabularPOMDP TabularPOMDP::from_json(const nlohmann::json& j) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        if (k != "spec" && k != "mu1" && k != "T" && k != "Obs" && k != "R")
            throw InvalidModel("unknown model field '" + k + "'");
    }
    EpisodeSpec sp;
    const auto& js = j.at("spec");
    sp.S = js.at("S").get<int>();
    sp.O = js.at("O").get<int>();
    sp.A = js.at("A").get<int>();
    sp.H = js.at("H").get<int>();
    auto mu = j.at("mu1").get<std::vector<double>>();
    Eigen::VectorXd mu1 = Eigen::Map<Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    std::vector<std::vector<Eigen::MatrixXd>> T;
    for (const auto& step : j.at("T")) {
        std::vector<Eigen::MatrixXd> ms;
        for (const auto& m : step) ms.push_back(matrix_from_json(m));
        T.push_back(std::move(ms));
    }
    std::vector<Eigen::MatrixXd> Obs;
    for (const auto& m : j.at("Obs")) Obs.push_back(matrix_from_json(m));
    auto R = j.at("R").get<std::vector<std::vector<double>>>();
    return TabularPOMDP(sp, mu1, T, Obs, R);
}

TabularPOMDP TabularPOMDP::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidModel("cannot open model file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidModel(std::string("malformed model JSON: ") + e.what());
    }
    try {
        return from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidModel(std::string("model JSON schema error: ") + e.what());
    }
}

void TabularPOMDP::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw InvalidModel("cannot write model file " + path);
    out << to_json().dump(2) << "\n";
}

TabularPOMDP TabularPOMDP::with_rewards(std::vector<std::vector<double>> R) const {
    return TabularPOMDP(spec_, mu1_, T_, Obs_, std::move(R));
}

}  // namespace omle
