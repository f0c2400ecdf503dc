#include <algorithm>
#include <cmath>
#include <numeric>

#include "omle/envs.hpp"
#include "omle/sail.hpp"

namespace omle {

namespace {

constexpr double kStochTol = 1e-9;
constexpr int kMaxFactoredStates = 4096;

void check_column(const Eigen::VectorXd& c, const std::string& what) {
    if ((c.array() < -kStochTol).any() || std::abs(c.sum() - 1.0) > kStochTol)
        throw InvalidModel(what + " is not a distribution");
}

nlohmann::json nested_matrices(const std::vector<std::vector<Eigen::MatrixXd>>& v) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& row : v) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& M : row) r.push_back(matrix_to_json(M));
        j.push_back(r);
    }
    return j;
}

std::vector<std::vector<Eigen::MatrixXd>> nested_from_json(const nlohmann::json& j) {
    std::vector<std::vector<Eigen::MatrixXd>> v;
    for (const auto& row : j) {
        v.emplace_back();
        for (const auto& M : row) v.back().push_back(matrix_from_json(M));
    }
    return v;
}

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
    const auto x = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

std::vector<double> vec_to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& what) {
    for (const auto& [k, _] : j.items())
        if (std::find_if(keys.begin(), keys.end(), [&](const char* a) { return k == a; }) == keys.end())
            throw InvalidModel("unknown " + what + " key " + k);
}

Eigen::MatrixXd row_stochastic(Rng& rng, int d) {
    Eigen::MatrixXd W(d, d);
    for (int r = 0; r < d; ++r) W.row(r) = dirichlet_column(rng, d).transpose();
    return W;
}

std::vector<std::vector<double>> random_state_rewards(int H, int S, Rng& rng) {
    return random_rewards(EpisodeSpec{S, S, 1, H}, rng);
}

}  // namespace

void TabularMdp::validate() const {
    EpisodeSpec{S, S, A, H}.validate();
    if (mu1.size() != S) throw InvalidModel("initial distribution has the wrong size");
    check_column(mu1, "initial distribution");
    if (static_cast<int>(T.size()) != H - 1) throw InvalidModel("MDP needs H-1 transition steps");
    for (const auto& step : T) {
        if (static_cast<int>(step.size()) != A) throw InvalidModel("MDP transition step needs A matrices");
        for (const auto& M : step) {
            if (M.rows() != S || M.cols() != S) throw InvalidModel("MDP transition has the wrong shape");
            for (int s = 0; s < S; ++s) check_column(M.col(s), "MDP transition column");
        }
    }
    if (static_cast<int>(R.size()) != H) throw InvalidModel("MDP rewards need H rows");
    for (const auto& row : R) {
        if (static_cast<int>(row.size()) != S) throw InvalidModel("MDP reward row has the wrong size");
        for (double r : row)
            if (r < 0.0 || r > 1.0) throw InvalidModel("MDP reward outside [0, 1]");
    }
}

MarkovPolicy TabularMdp::greedy() const {
    MarkovPolicy pi(H, std::vector<int>(S, 0));
    Eigen::VectorXd V = Eigen::VectorXd::Zero(S);
    for (int h = H; h >= 1; --h) {
        Eigen::VectorXd next(S);
        for (int s = 0; s < S; ++s) {
            double best = -1.0;
            for (int a = 0; a < A; ++a) {
                const double q = h < H ? T[h - 1][a].col(s).dot(V) : 0.0;
                if (q > best + 1e-12) {
                    best = q;
                    pi[h - 1][s] = a;
                }
            }
            next[s] = R[h - 1][s] + best;
        }
        V = next;
    }
    return pi;
}

std::vector<Eigen::MatrixXd> TabularMdp::occupancy(const MarkovPolicy& pi) const {
    std::vector<Eigen::MatrixXd> occ(H, Eigen::MatrixXd::Zero(S, A));
    Eigen::VectorXd d = mu1;
    for (int h = 1; h <= H; ++h) {
        for (int s = 0; s < S; ++s) occ[h - 1](s, pi[h - 1][s]) = d[s];
        if (h == H) break;
        Eigen::VectorXd next = Eigen::VectorXd::Zero(S);
        for (int a = 0; a < A; ++a) next += T[h - 1][a] * occ[h - 1].col(a);
        d = next;
    }
    return occ;
}

Eigen::MatrixXd TabularMdp::l1_gap(const TabularMdp& other, int h) const {
    if (h < 1 || h > H - 1) throw InvalidModel("transition gaps exist for h in [1, H-1]");
    Eigen::MatrixXd G(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) G(s, a) = (T[h - 1][a].col(s) - other.T[h - 1][a].col(s)).lpNorm<1>();
    return G;
}

TabularPOMDP TabularMdp::to_pomdp() const {
    return TabularPOMDP(EpisodeSpec{S, S, A, H}, mu1, T, std::vector<Eigen::MatrixXd>(H, Eigen::MatrixXd::Identity(S, S)),
                        R);
}

PolicyPtr TabularMdp::as_history_policy(const MarkovPolicy& pi) const {
    return HistoryPolicy::from_rule(EpisodeSpec{S, S, A, H},
                                    [pi](int h, std::uint64_t, int o) { return pi[h - 1][o]; });
}

int FactoredMdp::states() const {
    const std::uint64_t n = ipow(static_cast<std::uint64_t>(X), m);
    if (n > static_cast<std::uint64_t>(kMaxFactoredStates))
        throw CapExceeded("factored state space larger than " + std::to_string(kMaxFactoredStates));
    return static_cast<int>(n);
}

int FactoredMdp::digit(int s, int i) const {
    for (int k = 0; k < i; ++k) s /= X;
    return s % X;
}

int FactoredMdp::parent_index(int s, int i) const {
    int z = 0, mult = 1;
    for (int p : parents[i]) {
        z += digit(s, p) * mult;
        mult *= X;
    }
    return z;
}

int FactoredMdp::parent_configs(int i) const { return static_cast<int>(ipow(X, static_cast<int>(parents[i].size()))); }

void FactoredMdp::validate() const {
    if (m < 1 || X < 1 || A < 1 || H < 1) throw InvalidModel("factored MDP sizes must be positive");
    const int S = states();
    if (static_cast<int>(parents.size()) != m) throw InvalidModel("one parent set per factor");
    for (const auto& pa : parents)
        for (int p : pa)
            if (p < 0 || p >= m) throw InvalidModel("parent index out of range");
    if (static_cast<int>(P.size()) != H - 1) throw InvalidModel("factored MDP needs H-1 transition steps");
    for (const auto& step : P) {
        if (static_cast<int>(step.size()) != m) throw InvalidModel("one factor transition per factor");
        for (int i = 0; i < m; ++i) {
            if (step[i].rows() != X || step[i].cols() != parent_configs(i) * A)
                throw InvalidModel("factor transition has the wrong shape");
            for (Eigen::Index c = 0; c < step[i].cols(); ++c) check_column(step[i].col(c), "factor transition column");
        }
    }
    if (mu1.size() != S) throw InvalidModel("factored initial distribution has the wrong size");
    check_column(mu1, "factored initial distribution");
    if (static_cast<int>(R.size()) != H) throw InvalidModel("factored rewards need H rows");
    for (const auto& row : R)
        if (static_cast<int>(row.size()) != S) throw InvalidModel("factored reward row has the wrong size");
}

TabularMdp FactoredMdp::to_mdp() const {
    validate();
    const int S = states();
    TabularMdp mdp{S, A, H, mu1, {}, R};
    for (int h = 1; h < H; ++h) {
        mdp.T.emplace_back();
        for (int a = 0; a < A; ++a) {
            Eigen::MatrixXd M(S, S);
            for (int s = 0; s < S; ++s)
                for (int t = 0; t < S; ++t) {
                    double p = 1.0;
                    for (int i = 0; i < m && p > 0.0; ++i) p *= P[h - 1][i](digit(t, i), parent_index(s, i) * A + a);
                    M(t, s) = p;
                }
            mdp.T.back().push_back(M);
        }
    }
    mdp.validate();
    return mdp;
}

nlohmann::json FactoredMdp::to_json() const {
    return {{"m", m},           {"X", X},   {"A", A}, {"H", H}, {"parents", parents}, {"P", nested_matrices(P)},
            {"mu1", vec_to_std(mu1)}, {"R", R}};
}

FactoredMdp FactoredMdp::from_json(const nlohmann::json& j) {
    reject_unknown(j, {"m", "X", "A", "H", "parents", "P", "mu1", "R"}, "factored MDP");
    FactoredMdp f;
    f.m = j.at("m");
    f.X = j.at("X");
    f.A = j.at("A");
    f.H = j.at("H");
    f.parents = j.at("parents").get<std::vector<std::vector<int>>>();
    f.P = nested_from_json(j.at("P"));
    f.mu1 = vec_from_json(j.at("mu1"));
    f.R = j.at("R").get<std::vector<std::vector<double>>>();
    f.validate();
    return f;
}

FactoredChain gen_factored_chain(int n, double rank_tol) {
    if (n < 2) throw InvalidModel("the factored chain needs n >= 2");
    if (n > 10) throw CapExceeded("the factored chain supports n <= 10");
    FactoredChain out;
    FactoredMdp& f = out.mdp;
    f.m = n;
    f.X = 2;
    f.A = 2;
    f.H = n;
    for (int i = 0; i < n; ++i) f.parents.push_back({i});
    for (int h = 1; h < n; ++h) {
        f.P.emplace_back();
        for (int i = 0; i < n; ++i) {
            Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2, 4);
            for (int z = 0; z < 2; ++z)
                for (int a = 0; a < 2; ++a) M(i == h - 1 ? a : z, z * 2 + a) = 1.0;
            f.P.back().push_back(M);
        }
    }
    const int S = f.states();
    f.mu1 = Eigen::VectorXd::Unit(S, 0);
    // Reward: fraction of factors set to one.
    f.R.assign(n, std::vector<double>(S));
    for (int s = 0; s < S; ++s) {
        int ones = 0;
        for (int i = 0; i < n; ++i) ones += f.digit(s, i);
        for (int h = 0; h < n; ++h) f.R[h][s] = static_cast<double>(ones) / n;
    }
    f.validate();
    out.measured_rank = support_rank(f.to_mdp().to_pomdp(), n - 1, rank_tol);
    out.claimed_rank = 1 << (n - 2);
    out.matches_claim = out.measured_rank == out.claimed_rank;
    return out;
}

FactoredMdp random_factored_mdp(int m, int X, int A, int H, std::vector<std::vector<int>> parents,
                                std::uint64_t seed) {
    Rng rng(seed);
    FactoredMdp f;
    f.m = m;
    f.X = X;
    f.A = A;
    f.H = H;
    f.parents = std::move(parents);
    for (int h = 1; h < H; ++h) {
        f.P.emplace_back();
        for (int i = 0; i < m; ++i) {
            Eigen::MatrixXd M(X, f.parent_configs(i) * A);
            for (Eigen::Index c = 0; c < M.cols(); ++c) M.col(c) = dirichlet_column(rng, X);
            f.P.back().push_back(M);
        }
    }
    const int S = f.states();
    f.mu1 = dirichlet_column(rng, S);
    f.R = random_state_rewards(H, S, rng);
    f.validate();
    return f;
}

std::vector<FactoredMdp> gen_factored_class(const FactoredMdp& truth, int n_models, double sigma,
                                            std::uint64_t seed) {
    truth.validate();
    if (n_models < 1) throw InvalidModel("class needs at least one model");
    Rng rng(seed);
    std::vector<FactoredMdp> cls{truth};
    for (int k = 1; k < n_models; ++k) {
        FactoredMdp f = truth;
        for (auto& step : f.P)
            for (auto& M : step)
                for (Eigen::Index c = 0; c < M.cols(); ++c)
                    M.col(c) = (1.0 - sigma) * M.col(c) + sigma * dirichlet_column(rng, static_cast<int>(M.rows()));
        f.validate();
        cls.push_back(std::move(f));
    }
    return cls;
}

void SparseLinearBandit::validate() const {
    if (arms.empty() || theta.size() == 0) throw InvalidModel("bandit needs arms and a parameter");
    int nnz = 0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) nnz += theta[i] != 0.0;
    if (nnz > sparsity) throw InvalidModel("bandit parameter is not " + std::to_string(sparsity) + "-sparse");
    if (theta.norm() > C_theta + 1e-12) throw InvalidModel("bandit parameter exceeds C_theta");
    for (const auto& a : arms) {
        if (a.size() != theta.size()) throw InvalidModel("arm dimension mismatch");
        if (a.norm() > C_arm + 1e-12) throw InvalidModel("arm exceeds C_arm");
        const double mean = a.dot(theta);
        if (mean < -1e-12 || mean > 1.0 + 1e-12) throw InvalidModel("mean reward outside [0, 1]");
    }
}

int SparseLinearBandit::greedy_arm() const {
    int best = 0;
    for (std::size_t k = 1; k < arms.size(); ++k)
        if (arms[k].dot(theta) > arms[best].dot(theta) + 1e-15) best = static_cast<int>(k);
    return best;
}

TabularPOMDP SparseLinearBandit::to_pomdp() const {
    validate();
    const int K = static_cast<int>(arms.size());
    EpisodeSpec sp{K, 2, K, 2};
    std::vector<Eigen::MatrixXd> step(K);
    for (int a = 0; a < K; ++a) {
        step[a] = Eigen::MatrixXd::Zero(K, K);
        step[a].row(a).setOnes();
    }
    Eigen::MatrixXd o1 = Eigen::MatrixXd::Zero(2, K), o2(2, K);
    o1.row(0).setOnes();
    for (int a = 0; a < K; ++a) {
        const double mean = std::clamp(arms[a].dot(theta), 0.0, 1.0);
        o2(0, a) = 1.0 - mean;
        o2(1, a) = mean;
    }
    return TabularPOMDP(sp, Eigen::VectorXd::Unit(K, 0), {step}, {o1, o2}, {{0.0, 0.0}, {0.0, 1.0}});
}

nlohmann::json SparseLinearBandit::to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& x : arms) a.push_back(vec_to_std(x));
    return {{"arms", a}, {"theta", vec_to_std(theta)}, {"sparsity", sparsity}, {"CTheta", C_theta}, {"CArm", C_arm}};
}

SparseLinearBandit SparseLinearBandit::from_json(const nlohmann::json& j) {
    reject_unknown(j, {"arms", "theta", "sparsity", "CTheta", "CArm"}, "bandit");
    SparseLinearBandit b;
    for (const auto& a : j.at("arms")) b.arms.push_back(vec_from_json(a));
    b.theta = vec_from_json(j.at("theta"));
    b.sparsity = j.at("sparsity");
    b.C_theta = j.at("CTheta");
    b.C_arm = j.at("CArm");
    b.validate();
    return b;
}

std::vector<SparseLinearBandit> gen_sparse_bandit_class(int d_lin, int sparsity, int n_models, std::uint64_t seed) {
    if (d_lin < 1 || sparsity < 1 || sparsity > d_lin || n_models < 1) throw InvalidModel("bad bandit sizes");
    Rng rng(seed);
    // Arms: the standard basis and the midpoints of pairs of basis vectors.
    std::vector<Eigen::VectorXd> arms;
    for (int i = 0; i < d_lin; ++i) arms.push_back(Eigen::VectorXd::Unit(d_lin, i));
    for (int i = 0; i < d_lin; ++i)
        for (int j = i + 1; j < d_lin; ++j)
            arms.emplace_back(0.5 * (Eigen::VectorXd::Unit(d_lin, i) + Eigen::VectorXd::Unit(d_lin, j)));
    std::vector<SparseLinearBandit> cls;
    for (int k = 0; k < n_models; ++k) {
        std::vector<int> idx(d_lin);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng.engine());
        SparseLinearBandit b;
        b.arms = arms;
        b.sparsity = sparsity;
        b.C_theta = std::sqrt(static_cast<double>(sparsity));
        b.C_arm = 1.0;
        b.theta = Eigen::VectorXd::Zero(d_lin);
        for (int s = 0; s < sparsity; ++s) b.theta[idx[s]] = std::round(rng.uniform() * 1000.0) / 1000.0;
        b.validate();
        cls.push_back(std::move(b));
    }
    return cls;
}

TabularMdp KernelLinearMdp::to_mdp() const {
    if (phi.rows() != S * A || psi.rows() != S || psi.cols() != phi.cols())
        throw FeatureMismatch("kernel features have inconsistent shapes");
    if (static_cast<int>(W.size()) != H - 1) throw FeatureMismatch("kernel MDP needs H-1 weight matrices");
    TabularMdp mdp{S, A, H, mu1, {}, R};
    for (int h = 1; h < H; ++h) {
        const Eigen::MatrixXd P = phi * W[h - 1] * psi.transpose();
        mdp.T.emplace_back(A, Eigen::MatrixXd(S, S));
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const Eigen::VectorXd col = P.row(s * A + a).transpose();
                if ((col.array() < -1e-10).any() || std::abs(col.sum() - 1.0) > 1e-10)
                    throw FeatureMismatch("φᵀWψ is not a distribution at step " + std::to_string(h));
                mdp.T.back()[a].col(s) = col;
            }
    }
    mdp.validate();
    return mdp;
}

nlohmann::json KernelLinearMdp::to_json() const {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& M : W) w.push_back(matrix_to_json(M));
    return {{"S", S},  {"A", A}, {"H", H}, {"mu1", vec_to_std(mu1)}, {"phi", matrix_to_json(phi)},
            {"psi", matrix_to_json(psi)}, {"W", w}, {"R", R}};
}

KernelLinearMdp KernelLinearMdp::from_json(const nlohmann::json& j) {
    reject_unknown(j, {"S", "A", "H", "mu1", "phi", "psi", "W", "R"}, "kernel linear MDP");
    KernelLinearMdp k;
    k.S = j.at("S");
    k.A = j.at("A");
    k.H = j.at("H");
    k.mu1 = vec_from_json(j.at("mu1"));
    k.phi = matrix_from_json(j.at("phi"));
    k.psi = matrix_from_json(j.at("psi"));
    for (const auto& M : j.at("W")) k.W.push_back(matrix_from_json(M));
    k.R = j.at("R").get<std::vector<std::vector<double>>>();
    k.to_mdp();
    return k;
}

KernelLinearMdp KernelLinearMdp::from_tabular(const TabularMdp& mdp, const Eigen::MatrixXd& phi,
                                              const Eigen::MatrixXd& psi) {
    mdp.validate();
    if (phi.rows() != mdp.S * mdp.A || psi.rows() != mdp.S || psi.cols() != phi.cols())
        throw FeatureMismatch("kernel features have inconsistent shapes");
    KernelLinearMdp k{mdp.S, mdp.A, mdp.H, mdp.mu1, phi, psi, {}, mdp.R};
    const Eigen::MatrixXd phi_pinv = phi.completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::MatrixXd psiT_pinv = psi.transpose().completeOrthogonalDecomposition().pseudoInverse();
    for (int h = 1; h < mdp.H; ++h) {
        Eigen::MatrixXd P(mdp.S * mdp.A, mdp.S);
        for (int s = 0; s < mdp.S; ++s)
            for (int a = 0; a < mdp.A; ++a) P.row(s * mdp.A + a) = mdp.T[h - 1][a].col(s).transpose();
        Eigen::MatrixXd Wh = phi_pinv * P * psiT_pinv;
        const double err = (phi * Wh * psi.transpose() - P).cwiseAbs().maxCoeff();
        if (err > 1e-10)
            throw FeatureMismatch("features cannot represent the transition at step " + std::to_string(h) +
                                  " (residual " + std::to_string(err) + ")");
        k.W.push_back(std::move(Wh));
    }
    return k;
}

void tabular_features(int S, int A, Eigen::MatrixXd& phi, Eigen::MatrixXd& psi) {
    phi = Eigen::MatrixXd::Identity(S * A, S * A);
    psi = Eigen::MatrixXd::Zero(S, S * A);
    for (int s = 0; s < S; ++s) psi(s, s * A) = 1.0;
}

std::vector<KernelLinearMdp> gen_kernel_linear_class(int S, int A, int H, int d, int n_models, double sigma,
                                                     std::uint64_t seed) {
    if (S < 1 || A < 1 || H < 2 || d < 1 || n_models < 1) throw InvalidModel("bad kernel linear sizes");
    if (S * A > 256) throw CapExceeded("kernel linear witness supports S·A <= 256");
    Rng rng(seed);
    KernelLinearMdp truth;
    truth.S = S;
    truth.A = A;
    truth.H = H;
    truth.mu1 = dirichlet_column(rng, S);
    truth.phi.resize(S * A, d);
    for (int r = 0; r < S * A; ++r) truth.phi.row(r) = dirichlet_column(rng, d).transpose();
    truth.psi.resize(S, d);
    for (int k = 0; k < d; ++k) truth.psi.col(k) = dirichlet_column(rng, S);
    for (int h = 1; h < H; ++h) truth.W.push_back(row_stochastic(rng, d));
    truth.R = random_state_rewards(H, S, rng);
    truth.to_mdp();
    std::vector<KernelLinearMdp> cls{truth};
    for (int k = 1; k < n_models; ++k) {
        KernelLinearMdp m = truth;
        for (auto& Wh : m.W) Wh = (1.0 - sigma) * Wh + sigma * row_stochastic(rng, d);
        m.to_mdp();
        cls.push_back(std::move(m));
    }
    return cls;
}

}  // namespace omle
