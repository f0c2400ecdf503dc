#pragma once

#include <cstdint>
#include <utility>

#include "omle/mle.hpp"
#include "omle/pomdp.hpp"

namespace omle {

/** @brief Dirichlet(1) column over n outcomes as an Eigen vector. */
Eigen::VectorXd dirichlet_column(Rng& rng, int n);

/** @brief Rewards R_h(o) i.i.d. Uniform[0,1], rounded to two decimals. */
std::vector<std::vector<double>> random_rewards(const EpisodeSpec& spec, Rng& rng);

/** @brief POMDP with Dirichlet(1) initial, transition and emission columns and random rewards. */
TabularPOMDP random_pomdp(const EpisodeSpec& spec, Rng& rng);

/** @brief A generated POMDP with its certified observability constant. */
struct CertifiedPomdp {
    TabularPOMDP model;
    int m = 1;
    double alpha = 0.0;
    int attempts = 0;
};

inline constexpr int kMaxRejections = 10000;

/**
 * @brief Rejection-samples random_pomdp until the m-step α is at least alpha_min.
 * @throws GenerationTimeout after max_rejections rejected draws
 */
CertifiedPomdp gen_observable_pomdp(int S, int O, int A, int H, double alpha_min, std::uint64_t seed,
                                    int m = 1, int max_rejections = kMaxRejections);

/**
 * @brief The two non-decodable / non-observable counterexamples.
 *
 * A: A=1, Obs = [[0.99,0.01],[0.01,0.99]], T = I, μ₁ = [0.5,0.5].
 * B: S=O=A=2, Obs = [[1,1],[0,0]], action a moves to state a, μ₁ = [1,0].
 * Rewards are zero; attach rewards with TabularPOMDP::with_rewards.
 */
std::pair<TabularPOMDP, TabularPOMDP> counterexample_pomdps(int H = 3);

/** @brief S=O model with identity emissions and the given transitions (a fully observed MDP). */
TabularPOMDP identity_emission_pomdp(const Eigen::VectorXd& mu1,
                                     const std::vector<std::vector<Eigen::MatrixXd>>& T, int A,
                                     std::vector<std::vector<double>> R);

/** @brief Recipe for a finite model class around a true POMDP. */
struct ClassRecipe {
    enum class Mode { Grid, Perturb };
    Mode mode = Mode::Perturb;
    int n = 19;              ///< number of jittered candidates
    double sigma = 0.1;      ///< jitter weight: column' = (1-σ)·column + σ·Dirichlet(1)
    double eps = 0.0;        ///< lattice width (grid mode)
    double alpha_min = -1.0; ///< optional observability filter; negative disables it
    int alpha_m = 1;
    int max_rejections = kMaxRejections;
};

inline constexpr int kMaxClassSize = 500;

/**
 * @brief Finite class with the truth at index 0.
 *
 * Perturb mode adds n jittered copies of the truth. Grid mode rounds each
 * jittered copy to the ε-lattice, renormalizes, and keeps the distinct results
 * that differ from the rounded truth (a discretized cover). All members share
 * the truth's rewards.
 * @throws CapExceeded above kMaxClassSize members; GenerationTimeout when the α filter rejects too often
 */
ModelClass gen_model_class(const TabularPOMDP& truth, const ClassRecipe& recipe, std::uint64_t seed);

/** @brief Rounds every stochastic column to the ε-lattice and renormalizes. */
TabularPOMDP round_to_lattice(const TabularPOMDP& p, double eps);

}  // namespace omle
