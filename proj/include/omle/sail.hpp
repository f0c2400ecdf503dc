#pragma once

#include <Eigen/Dense>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "omle/omle.hpp"
#include "omle/pomdp.hpp"
#include "omle/psr.hpp"

namespace omle {

/** @brief Deterministic Markov policy acts[h-1][s]. */
using MarkovPolicy = std::vector<std::vector<int>>;

/**
 * @brief Fully observed finite-horizon MDP.
 *
 * T[h-1][a](s', s) = P(s' | s, a) for transitions out of step h; R[h-1][s] is the known reward.
 */
struct TabularMdp {
    int S = 1, A = 1, H = 1;
    Eigen::VectorXd mu1;
    std::vector<std::vector<Eigen::MatrixXd>> T;
    std::vector<std::vector<double>> R;

    void validate() const;
    /** @brief Backward induction over states; ties go to the lowest action. */
    MarkovPolicy greedy() const;
    /** @brief occ[h-1](s, a) = P^π(s_h = s, a_h = a) for h in [1, H]. */
    std::vector<Eigen::MatrixXd> occupancy(const MarkovPolicy& pi) const;
    /** @brief ‖P(·|s,a) − P'(·|s,a)‖₁ at step h as an S×A matrix. */
    Eigen::MatrixXd l1_gap(const TabularMdp& other, int h) const;
    /** @brief The same process as a POMDP with identity emissions (O = S). */
    TabularPOMDP to_pomdp() const;
    /** @brief A Markov policy as a history policy on to_pomdp(). */
    PolicyPtr as_history_policy(const MarkovPolicy& pi) const;
};

/**
 * @brief Factored MDP over 𝔖 = 𝒳^m with known parent sets.
 *
 * Factor i of state s is digit i of s in base X (factor 0 least significant).
 * P[h-1][i](x', z·A + a) = P^i(s_{h+1}[i] = x' | s_h[pa_i] = z, a_h = a), where the
 * parent assignment z lists the parents' digits in base X, first parent least significant.
 */
struct FactoredMdp {
    int m = 1, X = 2, A = 2, H = 1;
    std::vector<std::vector<int>> parents;
    std::vector<std::vector<Eigen::MatrixXd>> P;
    Eigen::VectorXd mu1;                    ///< over joint states
    std::vector<std::vector<double>> R;     ///< R[h-1][s]

    int states() const;
    int digit(int s, int i) const;
    /** @brief Parent assignment index z of factor i in state s. */
    int parent_index(int s, int i) const;
    int parent_configs(int i) const;
    void validate() const;
    TabularMdp to_mdp() const;
    nlohmann::json to_json() const;
    static FactoredMdp from_json(const nlohmann::json& j);
};

/** @brief The deterministic chain where step h writes a_h into factor h, with its measured rank. */
struct FactoredChain {
    FactoredMdp mdp;
    int measured_rank = 0;  ///< rank of D_{H-1}
    int claimed_rank = 0;   ///< 2^{H-2}
    bool matches_claim = false;
};

/**
 * @brief n factors, pa_i = {i}, X = A = 2, H = n, s_1 = 0 and s_{h+1}[h] = a_h.
 * @throws CapExceeded for n > 10
 */
FactoredChain gen_factored_chain(int n, double rank_tol = kRankTol);

/** @brief n_models factored MDPs with truth's parents: index 0 is the truth, the rest mix in Dirichlet(1) jitter. */
std::vector<FactoredMdp> gen_factored_class(const FactoredMdp& truth, int n_models, double sigma, std::uint64_t seed);

/** @brief Random factored MDP with the given parent sets. */
FactoredMdp random_factored_mdp(int m, int X, int A, int H, std::vector<std::vector<int>> parents, std::uint64_t seed);

/** @brief m-sparse linear bandit with Bernoulli rewards of mean ⟨θ, a⟩. */
struct SparseLinearBandit {
    std::vector<Eigen::VectorXd> arms;
    Eigen::VectorXd theta;
    int sparsity = 1;
    double C_theta = 1.0;
    double C_arm = 1.0;

    int dim() const { return static_cast<int>(theta.size()); }
    void validate() const;
    /** @brief Greedy arm of this parameter (lowest index on ties). */
    int greedy_arm() const;
    /** @brief Two-step POMDP: a dummy first observation, the arm, then the reward bit as o_2. */
    TabularPOMDP to_pomdp() const;
    nlohmann::json to_json() const;
    static SparseLinearBandit from_json(const nlohmann::json& j);
};

/** @brief Random m-sparse parameters over the given arms with ⟨θ, a⟩ in [0, 1]. */
std::vector<SparseLinearBandit> gen_sparse_bandit_class(int d_lin, int sparsity, int n_models, std::uint64_t seed);

/**
 * @brief Kernel linear MDP: P_h(s'|s,a) = φ(s,a)ᵀ W_h ψ(s').
 *
 * phi has one row per (s,a) at index s·A + a; psi has one row per next state.
 */
struct KernelLinearMdp {
    int S = 1, A = 1, H = 1;
    Eigen::VectorXd mu1;
    Eigen::MatrixXd phi, psi;
    std::vector<Eigen::MatrixXd> W;
    std::vector<std::vector<double>> R;

    int dim() const { return static_cast<int>(phi.cols()); }
    /** @throws FeatureMismatch if some φᵀWψ is not a distribution within 1e-10 */
    TabularMdp to_mdp() const;
    nlohmann::json to_json() const;
    static KernelLinearMdp from_json(const nlohmann::json& j);
    /**
     * @brief Solves Φ W_h Ψᵀ = P_h by least squares.
     * @throws FeatureMismatch if the reconstruction misses P by more than 1e-10
     */
    static KernelLinearMdp from_tabular(const TabularMdp& mdp, const Eigen::MatrixXd& phi, const Eigen::MatrixXd& psi);
};

/** @brief Indicator features with d_lin = SA (ψ(s') = e_{(s',0)}). */
void tabular_features(int S, int A, Eigen::MatrixXd& phi, Eigen::MatrixXd& psi);

/**
 * @brief Kernel linear class with d latent mixtures: φ rows in the simplex, ψ columns
 * distributions over states, W_h row-stochastic; index 0 is the truth.
 */
std::vector<KernelLinearMdp> gen_kernel_linear_class(int S, int A, int H, int d, int n_models, double sigma,
                                                     std::uint64_t seed);

/** @brief One witness display check for a (θ, θ', h) triple. */
struct WitnessTerm {
    int theta = 0, theta_p = 0, h = 0;
    double discrepancy = 0.0;  ///< E‖𝔻_{θ'} − 𝔻_{θ*}‖₁
    double inner = 0.0;        ///< |⟨f_h(θ), g_h(θ')⟩|
    double lower_margin = 0.0; ///< discrepancy − inner/κ
    double upper_margin = 0.0; ///< inner − discrepancy
    double norm = 0.0;         ///< ‖f_h(θ)‖₁·‖g_h(θ')‖∞
};

/**
 * @brief Witness features f_h(θ), g_h(θ') with their exact verification.
 *
 * Entry h-1 covers step h for every step whose discrepancy 𝔻 is not trivially zero:
 * h in [1, H-1] for MDPs (rewards are known, so step H carries nothing) and the single
 * step of a bandit.
 */
struct WitnessFeatures {
    std::string type = "Q";  ///< "Q" or "V"
    int d = 0;
    double kappa = 1.0;
    double B = 0.0;
    int A = 1;  ///< action count of the underlying process (for the V-type SAIL constant)
    std::vector<std::vector<Eigen::VectorXd>> f, g;  ///< f[θ][h-1], g[θ'][h-1]
    std::vector<WitnessTerm> terms;
    double min_lower_margin = 0.0, min_upper_margin = 0.0, max_norm = 0.0;
    bool pass = false;

    /** @brief Fills the margins and pass flag from terms (tolerance tol). */
    void finalize(double tol = 1e-9);
    nlohmann::json to_json() const;
};

/** @brief Q-type witness of a factored class: d = AΣ|X|^{|pa_i|}, κ = m, B = Σ|X|^{|pa_i|}. */
WitnessFeatures factored_witness(const FactoredMdp& env, const std::vector<FactoredMdp>& cls, int true_index);

/** @brief Q-type witness of a sparse bandit class: f(θ) = a_θ, g(θ') = 2(θ' − θ*), κ = 1, B = 4√d C_Θ C_𝒜. */
WitnessFeatures bandit_witness(const SparseLinearBandit& env, const std::vector<SparseLinearBandit>& cls,
                               int true_index, double tol = 1e-12);

/** @brief V-type witness of a kernel linear class: d = d_lin, κ = 1, B = 2(√d C_φ C_W C_ψ + 1). */
WitnessFeatures kernel_linear_witness(const KernelLinearMdp& env, const std::vector<KernelLinearMdp>& cls,
                                      int true_index, double tol = 1e-10);

/** @brief SAIL features: f[θ][h-1] and g[θ][h-1] each hold the lists over i and j. */
struct SailFeatures {
    std::vector<std::vector<std::vector<Eigen::VectorXd>>> f, g;
};

/** @brief Single-mapping SAIL features taken from a witness. */
SailFeatures sail_from_witness(const WitnessFeatures& w);

/** @brief Inflated SAIL constant: 2κ for Q-type, 2Aκ for V-type. */
double sail_kappa(const WitnessFeatures& w);

/** @brief Per-pair and per-model SAIL display margins. */
struct SailCertificate {
    struct Pair {
        int theta = 0, theta_p = 0;
        double tv_sum = 0.0;  ///< Σ_{π̃∈Π_exp(π_θ)} TV(θ*, θ')
        double rhs = 0.0;     ///< κ⁻¹ Σ_h Σ_i Σ_j |⟨f, g⟩|
        double margin = 0.0;  ///< tv_sum − rhs
    };
    struct Self {
        int theta = 0;
        int policy = -1;      ///< sampled policy index (strong check only)
        double tv = 0.0;      ///< TV(P^{π_θ}_{θ*}, P^{π_θ}_θ)
        double rhs = 0.0;     ///< Σ_h Σ_i Σ_j |⟨f, g⟩|
        double margin = 0.0;  ///< rhs − tv
    };
    double kappa = 1.0, B = 0.0;
    std::string strategy;
    bool sampled = false;     ///< strong SAIL over a finite policy sample
    int policies = 0;
    std::vector<Pair> pairs;
    std::vector<Self> selfs;
    double max_norm = 0.0;
    double min_pair_margin = 0.0, min_self_margin = 0.0, norm_margin = 0.0;
    bool pass = false;
    std::string violation;    ///< first violated display, empty on pass
    nlohmann::json to_json() const;
};

/**
 * @brief Exact check of the three SAIL displays for every (θ, θ') pair.
 * @param greedy π_θ for each model; TV terms come from exact enumeration.
 */
SailCertificate verify_sail(const std::vector<ModelPtr>& cls, int true_index, const SailFeatures& features,
                            const std::vector<PolicyPtr>& greedy, const ExplorationStrategy& strat, double kappa,
                            double B, double tol = 1e-9, std::uint64_t cap = kDefaultCapLeaves);

/** @brief Features f_h(π) of an arbitrary policy for the strong condition. */
using PolicyFeatureFn = std::function<std::vector<std::vector<Eigen::VectorXd>>(const HistoryPolicy&)>;

/**
 * @brief Strong SAIL checked over a finite policy sample (never a proof over all policies).
 *
 * g[θ][h-1] lists the g features; pairs and selfs record theta = policy index for the
 * first display and (policy, theta) for the second.
 */
SailCertificate verify_strong_sail(const std::vector<ModelPtr>& cls, int true_index, const PolicyFeatureFn& f,
                                   const std::vector<std::vector<std::vector<Eigen::VectorXd>>>& g,
                                   const std::vector<PolicyPtr>& policies, const ExplorationStrategy& strat,
                                   double kappa, double B, double tol = 1e-9, std::uint64_t cap = kDefaultCapLeaves);

/**
 * @brief n_random Dirichlet policies plus every deterministic stationary memoryless policy
 * (o ↦ a) when A^O ≤ max_memoryless.
 */
std::vector<PolicyPtr> policy_sample(const EpisodeSpec& spec, int n_random, std::uint64_t seed,
                                     int max_memoryless = 4096);

/** @brief occ[h-1](o, a) = P^π(o_h = o, a_h = a) by enumerating the model's trajectory tree. */
std::vector<Eigen::MatrixXd> tree_occupancy(const HistoryModel& model, const HistoryPolicy& policy,
                                            std::uint64_t cap = kDefaultCapLeaves);

/** @brief f_h(π) of the factored witness for an arbitrary history policy on env.to_mdp().to_pomdp(). */
PolicyFeatureFn factored_policy_features(const FactoredMdp& env, std::uint64_t cap = kDefaultCapLeaves);

}  // namespace omle
