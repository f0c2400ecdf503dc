#pragma once

#include <Eigen/Dense>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "omle/exact.hpp"
#include "omle/history_model.hpp"
#include "omle/pomdp.hpp"

namespace omle {

/** @brief Default relative singular-value tolerance for numerical ranks. */
inline constexpr double kRankTol = 1e-8;

/**
 * @brief System-dynamic matrices D_h for h in [0, H-1].
 *
 * D[h] has (O*A)^h rows (histories τ_h) and (O*A)^{H-h} columns (full
 * futures including the final action), entry P̄(τ_h, ω_h).
 */
struct SystemDynamics {
    EpisodeSpec spec;
    std::vector<Eigen::MatrixXd> D;

    static SystemDynamics from_table(const CondTable& table);
};

SystemDynamics build_system_dynamics(const HistoryModel& model, std::uint64_t cap = kDefaultCapLeaves);

struct RankReport {
    std::vector<int> rank_h;  ///< entry h for D_h, h in [0, H-1]
    int rank = 0;             ///< max over h
};

/** @brief Numerical rank of each D_h (singular values above tol·σ_max). */
RankReport psr_rank(const SystemDynamics& sd, double tol = kRankTol);

/**
 * @brief rank(D_h) computed on the support of the distribution only.
 *
 * Walks the history tree skipping zero-probability observations, so models
 * with deterministic dynamics and large observation spaces stay tractable.
 * Zero rows and columns do not change the rank.
 * @throws CapExceeded when more than max_support nonzero leaves exist
 */
int support_rank(const HistoryModel& model, int h, double tol = kRankTol,
                 std::uint64_t max_support = kDefaultCapLeaves);

/**
 * @brief An observation-terminated test (o_{h+1}, a_{h+1}, ..., o_{h+L}).
 *
 * acts has exactly obs.size() - 1 entries.
 */
struct CoreTest {
    std::vector<int> obs;
    std::vector<int> acts;

    int length() const { return static_cast<int>(obs.size()); }
    std::string to_string() const;
    auto operator<=>(const CoreTest&) const = default;
};

/** @brief All tests with L in [1, max_len] observations, ordered by length then lexicographically. */
std::vector<CoreTest> enumerate_tests(const EpisodeSpec& spec, int max_len);

/**
 * @brief Full-future columns of D_h that aggregate into a test.
 *
 * P̄(τ_h, q) = A^{-free} Σ_{ω ⊇ q} P̄(τ_h, ω), where free = H - h - L + 1 is
 * the number of unconstrained actions. Returns the column indices; the
 * common weight is written to `weight`.
 */
std::vector<std::uint64_t> test_columns(const EpisodeSpec& spec, int h, const CoreTest& q, double& weight);

/** @brief Rows of `F` (indexed by full futures at step h) aggregated into test rows. */
Eigen::MatrixXd aggregate_test_rows(const EpisodeSpec& spec, int h, const std::vector<CoreTest>& tests,
                                    const Eigen::MatrixXd& F);

/** @brief P̄(τ_h, q) read off a conditional table. */
double test_probability(const CondTable& table, const Trajectory& history, const CoreTest& q);

/** @brief Core tests Q_h (h in [0, H-1]) and their core action sequences. */
struct CoreTestSet {
    std::vector<std::vector<CoreTest>> Q;
    std::vector<std::vector<std::vector<int>>> QA;

    /** @brief Fills QA from Q: distinct action sequences with proper prefixes removed. */
    void derive_action_sets();
    nlohmann::json to_json() const;
    static CoreTestSet from_json(const nlohmann::json& j);
};

/** @brief Distinct sequences, dropping any that is a proper prefix of another (the result is prefix-free). */
std::vector<std::vector<int>> prefix_free_reduce(std::vector<std::vector<int>> seqs);

/**
 * @brief Greedy column pivoting over candidate tests of each D_h.
 *
 * At each step the candidate with the largest residual norm (after projecting
 * out the chosen columns) is taken; ties go to the earliest candidate. Stops at
 * rank(D_h) columns.
 * @throws RankDeficientSelection when the chosen submatrix does not reach rank(D_h)
 */
CoreTestSet select_core_tests(const SystemDynamics& sd, double tol = kRankTol);

/** @brief Observable operator model from the SVDs of D_hᵀ. */
struct OomRep {
    EpisodeSpec spec;
    double b0 = 0.0;
    std::vector<std::vector<std::vector<Eigen::MatrixXd>>> B;  ///< B[h-1][o][a], h in [1, H]
    std::vector<Eigen::VectorXd> upsilon;                       ///< upsilon[h], h in [0, H]
    std::vector<Eigen::MatrixXd> U;                             ///< U[h], h in [0, H]; U[H] = [1]

    /** @brief Residuals of the five representation conditions (all should be <= 0 up to tolerance). */
    struct Check {
        double max_B_norm = 0.0;       ///< max ‖B_h(o,a)‖₂
        double b0_bound = 0.0;         ///< √(A^H)
        double max_upsilon_excess = 0.0;  ///< max ‖υ_h‖₂ − √((O/A)^{H−h})
        double flow_residual = 0.0;    ///< max ‖υ_hᵀ Σ_o B_h(o,a) − υ_{h−1}ᵀ‖∞
        double prob_residual = 0.0;    ///< max |υ_hᵀ B_h ⋯ B_1 b₀ − P̄(τ_h)|
        bool pass = false;
        nlohmann::json to_json() const;
    } check;
};

/** @brief Builds the OOM and verifies its conditions; throws NumericalFailure on violation. */
OomRep build_oom(const SystemDynamics& sd, double tol = kRankTol, double check_tol = 1e-8);

/**
 * @brief A PSR operator tuple (ψ₀, {M_h(o,a)}, {φ_H(o,a)}) with its core tests.
 *
 * M[h-1][o][a] maps ψ(τ_{h-1}) to ψ(τ_h) for h in [1, H-1]; phiH[o][a] gives
 * P̄(τ_H) = φ_H(o_H,a_H)ᵀ ψ(τ_{H-1}).
 */
struct PsrRep {
    EpisodeSpec spec;
    CoreTestSet tests;
    Eigen::VectorXd psi0;
    std::vector<std::vector<std::vector<Eigen::MatrixXd>>> M;
    std::vector<std::vector<Eigen::VectorXd>> phiH;

    int dim(int h) const { return static_cast<int>(tests.Q[h].size()); }
    /** @brief Structural checks on all operator shapes. */
    void validate() const;
    /** @brief ψ(τ_h) = M_h ⋯ M_1 ψ₀ (unnormalized). */
    Eigen::VectorXd predict(const Trajectory& history) const;
    /** @brief φ_Hᵀ M_{H-1} ⋯ M_1 ψ₀ for a full trajectory. */
    double probability(const Trajectory& full) const;
    /** @brief w_h with P̄(τ_h) = w_hᵀ ψ(τ_h), obtained by marginalizing with action 0. */
    std::vector<Eigen::VectorXd> marginal_weights() const;

    nlohmann::json to_json() const;
    static PsrRep from_json(const nlohmann::json& j);
};

/** @brief Residuals of the two defining PSR identities against a conditional table. */
struct PsrCheck {
    double psr1 = 0.0;  ///< max over τ_H of |φ_Hᵀ M ⋯ ψ₀ − P̄(τ_H)|
    double psr2 = 0.0;  ///< max over τ_h with P̄(τ_h) > 0 of ‖ψ(τ_h) − P̄(τ_h, Q_h)‖∞
    nlohmann::json to_json() const;
};

PsrCheck verify_psr(const PsrRep& rep, const CondTable& truth);

/** @brief A self-consistent PSR with its full φ_h family and condition residuals. */
struct SelfConsistentPsr {
    PsrRep rep;
    std::vector<Eigen::VectorXd> phi;  ///< phi[h], h in [0, H-1]
    struct Check {
        double cond1 = 0.0;  ///< |φ_hᵀ M_h ⋯ ψ₀ − P̄(τ_h)| over all h, τ_h
        double cond2 = 0.0;  ///< PSR_2 residual
        double cond3 = 0.0;  ///< φ_hᵀ Σ_o M_h(o,a) − φ_{h−1}ᵀ
        double cond4 = 0.0;  ///< row q of M_h(o,a) against φ_{h+L}ᵀ M_{h+L} ⋯ M_h
        bool pass = false;
        nlohmann::json to_json() const;
    } check;
};

SelfConsistentPsr build_self_consistent_psr(const SystemDynamics& sd, const CoreTestSet& q,
                                            double tol = kRankTol, double check_tol = 1e-8);

/** @brief HistoryModel view of a PSR; the filtering state is ψ(τ_{h-1}) / P̄(τ_{h-1}). */
class PsrModel : public HistoryModel {
public:
    PsrModel(PsrRep rep, std::vector<std::vector<double>> R);
    const EpisodeSpec& spec() const override { return rep_.spec; }
    Eigen::VectorXd initial_state() const override { return rep_.psi0; }
    Eigen::VectorXd raw_obs_probs(int h, const Eigen::VectorXd& state) const override;
    Eigen::VectorXd advance(int h, const Eigen::VectorXd& state, int o, int a, double p_obs) const override;
    double reward(int h, int o) const override { return R_[h - 1][o]; }
    const PsrRep& rep() const { return rep_; }

private:
    PsrRep rep_;
    std::vector<std::vector<double>> R_;
    std::vector<Eigen::VectorXd> w_;
};

/** @brief Result of a POMDP-to-PSR construction with its reconstruction residuals. */
struct ConstructedPsr {
    PsrRep rep;
    PsrCheck check;
    std::vector<double> inverse_norms;  ///< ‖G_h‖₁ of the ℓ1-minimal inverses used (observable only)
    double alpha = 0.0;                 ///< certified observability constant (observable only)
};

/**
 * @brief PSR of an m-step α-observable POMDP via ℓ1-minimal left inverses of the m-step matrices.
 *
 * Q_h holds all tests with min(m, H-h) observations. For h <= H-m the operator is
 * M_h(o,a) = 𝐌_{h+1} T_{h,a} diag(O_h(o|·)) G_h; afterwards it selects rows.
 * @throws NotObservable when α is numerically zero
 */
ConstructedPsr pomdp_to_psr_observable(const TabularPOMDP& p, int m, double alpha_floor = 1e-9);

/**
 * @brief Decoder ζ_h(z_h) with z_h = [(o,a)_{max(1,h-m):h-1}, o_h] (m preceding pairs and o_h).
 *
 * The trajectory argument holds obs of length k+1 and acts of length k.
 */
using Decoder = std::function<int(int h, const Trajectory& z)>;

/** @brief Exhaustive check that ζ recovers the latent state on every positive-probability history. */
void check_decoder(const TabularPOMDP& p, const Decoder& decoder, int m, double tol = 1e-9);

/**
 * @brief PSR of an m-step decodable POMDP.
 *
 * Q_h holds all tests with min(m+1, H-h) observations. Operators multiply the
 * decoded next-observation probability with a shift indicator; near the end of
 * the episode they only shift.
 * @throws DecoderInconsistent with a violating history
 */
ConstructedPsr pomdp_to_psr_decodable(const TabularPOMDP& p, const Decoder& decoder, int m);

}  // namespace omle
