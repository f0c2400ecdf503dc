#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <vector>

#include "omle/policy.hpp"
#include "omle/psr.hpp"

namespace omle {

/**
 * @brief Weight vectors of a PSR at step h.
 *
 * kind 1: m1(ω)ᵀ = φ_H(o_H,a_H)ᵀ M_{H-1} ⋯ M_{h+1} over full futures ω = (o,a)_{h+1:H}
 * (row index = flat future index).
 * kind 2: m2(o,a,q)ᵀ = e_qᵀ M_{h+1}(o,a) over 𝒪 × 𝒜 × Q_{h+1} (row index (o·A+a)·|Q_{h+1}| + q).
 * At h = H-1 there is no M_H, and kind 2 coincides with kind 1.
 */
Eigen::MatrixXd weight_vectors(const PsrRep& rep, int h, int kind);

/** @brief The episode spec of futures after step h: (O, A, H-h). */
EpisodeSpec future_spec(const EpisodeSpec& spec, int h);

/**
 * @brief Σ_ω π(ω)·|m_i(ω)ᵀx| by direct enumeration of the futures of step h.
 *
 * The policy lives on future_spec(spec, h) and is indexed from o_{h+1}.
 */
double gamma_objective(const PsrRep& rep, int h, int kind, const Eigen::VectorXd& x, const HistoryPolicy& policy);

/** @brief γ⁻¹ with the (h, i, coordinate, policy) attaining it. */
struct GammaReport {
    double gamma_inv = 0.0;
    double gamma = 0.0;  ///< +inf when no weight vector exists (H = 1)
    int h = 0;
    int kind = 1;
    int coord = 0;
    PolicyPtr policy;                  ///< deterministic future policy on future_spec(spec, h)
    std::vector<double> per_h;         ///< entry h-1 for h in [1, H-1]
    nlohmann::json to_json() const;
};

/**
 * @brief Exact γ⁻¹ = max over h in [1, H-1], i in {1,2}, coordinates q and deterministic
 * future policies of Σ_ω π(ω)|m_i(ω)_q|.
 *
 * The ℓ1-ball maximum sits at ±e_q by convexity, and the policy maximum is a
 * backward recursion over the future trie (observation nodes add their own
 * weight, then take the best action; action nodes sum over the next observation).
 */
GammaReport gamma_well_conditioned(const PsrRep& rep);

/** @brief Largest objective over n random probes (x uniform on the ℓ1 sphere, Dirichlet future policy). */
double gamma_random_probes(const PsrRep& rep, int n, Rng& rng);

}  // namespace omle
