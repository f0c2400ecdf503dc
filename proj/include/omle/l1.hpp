#pragma once

#include <Eigen/Dense>
#include <vector>

#include "omle/pomdp.hpp"

namespace omle {

/** @brief Largest latent-state count accepted by the sign-pattern enumeration. */
inline constexpr int kMaxAlphaStates = 12;

/** @brief min over disjoint ν1, ν2 of ‖M(ν1 − ν2)‖₁ / ‖ν1 − ν2‖₁, with its witness. */
struct AlphaWitness {
    double alpha = 0.0;
    Eigen::VectorXd nu1, nu2;
};

/**
 * @brief Observability coefficient of a single m-step matrix (rows: tests, columns: states).
 *
 * Enumerates the 2^{S-1}-1 sign patterns of z = ν1 − ν2 and solves one LP per
 * pattern. S = 1 returns α = 1 (the condition is vacuous).
 */
AlphaWitness alpha_of_matrix(const Eigen::MatrixXd& M);

/** @brief min over all x with ‖x‖₁ = 1 of ‖Mx‖₁ (no sum-to-zero restriction). */
AlphaWitness l1_contraction(const Eigen::MatrixXd& M);

/**
 * @brief The m-step matrix at step h: rows are (o_h, a_h, ..., o_{h+L-1}) with
 * L = min(m, H-h+1) observations, entries P(o_{h:h+L-1} | s_h, a_{h:h+L-2}).
 */
Eigen::MatrixXd mstep_matrix(const TabularPOMDP& p, int h, int m);

struct AlphaReport {
    int m = 1;
    std::vector<double> alpha_h;  ///< entry h-1 for h in [H-m+1]
    double alpha = 0.0;
    int argmin_h = 1;
    AlphaWitness witness;
};

/** @brief m-step observability α = min over h in [H-m+1]. */
AlphaReport observability_alpha(const TabularPOMDP& p, int m);

struct L1Inverse {
    Eigen::MatrixXd G;         ///< S x R left inverse with minimal ‖G‖₁
    double norm = 0.0;         ///< max column absolute sum of G
    double pinv_norm = 0.0;    ///< same norm of the Moore-Penrose inverse
    double residual = 0.0;     ///< max |G·O − I|
};

/** @brief ‖M‖₁ as the max column absolute sum. */
double l1_norm(const Eigen::MatrixXd& M);

/** @brief Left inverse G = O† + Y (YO = 0) minimizing ‖G‖₁, via one LP. */
L1Inverse l1_min_pseudoinverse(const Eigen::MatrixXd& O, double tol = 1e-10);

struct Spanner {
    std::vector<int> indices;  ///< columns of the input chosen as the spanner
    Eigen::MatrixXd X;         ///< D x r
    Eigen::MatrixXd Xdag;      ///< r x D pseudo-inverse
    int rank = 0;
    double C = 1.01;
    double max_coef = 0.0;     ///< max over inputs of ‖X† v‖∞
};

/**
 * @brief C-approximate Barycentric spanner of the columns of V (swap algorithm).
 * @param normalize_l1 divide each column by its ℓ1 norm first (zero columns dropped)
 */
Spanner barycentric_spanner(const Eigen::MatrixXd& V, double C = 1.01, bool normalize_l1 = false,
                            double tol = 1e-10);

/** @brief Numerical rank: singular values above tol·σ_max. */
int numerical_rank(const Eigen::MatrixXd& M, double tol = 1e-8);

}  // namespace omle
