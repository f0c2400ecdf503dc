#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>

namespace omle {

/**
 * @brief min cᵀx s.t. A_eq x = b_eq, A_ub x <= b_ub, lower <= x <= upper.
 *
 * Empty bound vectors mean x >= 0. Use ±infinity for missing bounds.
 */
struct LpProblem {
    Eigen::VectorXd c;
    Eigen::MatrixXd A_eq;
    Eigen::VectorXd b_eq;
    Eigen::MatrixXd A_ub;
    Eigen::VectorXd b_ub;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    explicit LpProblem(int n = 0);
    int num_vars() const { return static_cast<int>(c.size()); }
    /** @brief Appends an equality row. */
    void add_eq(const Eigen::RowVectorXd& row, double rhs);
    /** @brief Appends an inequality row (row·x <= rhs). */
    void add_ub(const Eigen::RowVectorXd& row, double rhs);
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

std::string to_string(LpStatus s);

struct LpResult {
    LpStatus status = LpStatus::IterationLimit;
    double value = std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd x;
    /** @brief Unbounded: improving ray in x-space. Infeasible: phase-one dual multipliers. */
    Eigen::VectorXd certificate;
    double primal_residual = 0.0;
    /** @brief Most negative reduced cost at the final basis (0 when dual feasible). */
    double dual_residual = 0.0;
    long iterations = 0;
};

inline constexpr long kLpIterationCap = 1000000;

/** @brief Two-phase dense simplex with Bland's anti-cycling rule. */
LpResult solve_lp(const LpProblem& p, long max_iter = kLpIterationCap);

/** @brief As solve_lp but throws IterationLimit / NumericalFailure unless Optimal. */
LpResult solve_lp_checked(const LpProblem& p, const std::string& what, long max_iter = kLpIterationCap);

}  // namespace omle
