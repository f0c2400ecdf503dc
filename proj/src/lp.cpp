#include "omle/lp.hpp"

#include <cmath>
#include <vector>

#include "omle/core.hpp"

namespace omle {

LpProblem::LpProblem(int n)
    : c(Eigen::VectorXd::Zero(n)),
      A_eq(0, n),
      b_eq(0),
      A_ub(0, n),
      b_ub(0),
      lower(Eigen::VectorXd::Zero(n)),
      upper(Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity())) {}

void LpProblem::add_eq(const Eigen::RowVectorXd& row, double rhs) {
    A_eq.conservativeResize(A_eq.rows() + 1, num_vars());
    A_eq.row(A_eq.rows() - 1) = row;
    b_eq.conservativeResize(b_eq.size() + 1);
    b_eq[b_eq.size() - 1] = rhs;
}

void LpProblem::add_ub(const Eigen::RowVectorXd& row, double rhs) {
    A_ub.conservativeResize(A_ub.rows() + 1, num_vars());
    A_ub.row(A_ub.rows() - 1) = row;
    b_ub.conservativeResize(b_ub.size() + 1);
    b_ub[b_ub.size() - 1] = rhs;
}

std::string to_string(LpStatus s) {
    switch (s) {
        case LpStatus::Optimal: return "Optimal";
        case LpStatus::Infeasible: return "Infeasible";
        case LpStatus::Unbounded: return "Unbounded";
        case LpStatus::IterationLimit: return "IterationLimit";
    }
    return "?";
}

namespace {

constexpr double kPivTol = 1e-9;
constexpr double kCostTol = 1e-10;

// x_j = offset + sign * y[pos] (- y[neg] when free)
struct VarMap {
    double offset = 0.0;
    double sign = 1.0;
    int pos = -1;
    int neg = -1;
};

struct Tableau {
    int m = 0, ncols = 0;  // ncols excludes rhs
    Eigen::MatrixXd T;     // (m+1) x (ncols+1); last row objective, last col rhs
    std::vector<int> basis;

    double& rhs(int r) { return T(r, ncols); }

    void pivot(int r, int c) {
        T.row(r) /= T(r, c);
        for (int i = 0; i <= m; ++i) {
            if (i == r) continue;
            const double f = T(i, c);
            if (f != 0.0) T.row(i) -= f * T.row(r);
        }
        basis[r] = c;
    }

    // Bland's rule over columns where allowed[c] is true.
    // Returns 0 optimal, 1 unbounded (col in *ucol), 2 iteration limit.
    int run(const std::vector<char>& allowed, long& iters, long max_iter, int* ucol) {
        while (true) {
            int enter = -1;
            for (int c = 0; c < ncols; ++c)
                if (allowed[c] && T(m, c) < -kCostTol) {
                    enter = c;
                    break;
                }
            if (enter < 0) return 0;
            if (iters >= max_iter) return 2;
            int leave = -1;
            double best = 0.0;
            for (int r = 0; r < m; ++r) {
                const double a = T(r, enter);
                if (a > kPivTol) {
                    const double ratio = T(r, ncols) / a;
                    if (leave < 0 || ratio < best - 1e-12 ||
                        (std::abs(ratio - best) <= 1e-12 && basis[r] < basis[leave])) {
                        leave = r;
                        best = ratio;
                    }
                }
            }
            if (leave < 0) {
                *ucol = enter;
                return 1;
            }
            pivot(leave, enter);
            ++iters;
        }
    }
};

}  // namespace

LpResult solve_lp(const LpProblem& p, long max_iter) {
    const int n = p.num_vars();
    const double inf = std::numeric_limits<double>::infinity();
    Eigen::VectorXd lo = p.lower.size() == n ? p.lower : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd up = p.upper.size() == n ? p.upper : Eigen::VectorXd::Constant(n, inf);

    // Standard form: Ay = b, y >= 0.
    std::vector<VarMap> vm(n);
    int N = 0;
    std::vector<std::pair<int, double>> upper_rows;  // (std var, bound)
    for (int j = 0; j < n; ++j) {
        if (std::isfinite(lo[j])) {
            vm[j].offset = lo[j];
            vm[j].sign = 1.0;
            vm[j].pos = N++;
            if (std::isfinite(up[j])) upper_rows.emplace_back(vm[j].pos, up[j] - lo[j]);
        } else if (std::isfinite(up[j])) {
            vm[j].offset = up[j];
            vm[j].sign = -1.0;
            vm[j].pos = N++;
        } else {
            vm[j].pos = N++;
            vm[j].neg = N++;
        }
    }
    auto expand_row = [&](const Eigen::RowVectorXd& row, double rhs, Eigen::RowVectorXd& out, double& b) {
        out = Eigen::RowVectorXd::Zero(N);
        b = rhs;
        for (int j = 0; j < n; ++j) {
            const double a = row[j];
            if (a == 0.0) continue;
            b -= a * vm[j].offset;
            out[vm[j].pos] += a * vm[j].sign;
            if (vm[j].neg >= 0) out[vm[j].neg] -= a;
        }
    };
    const int n_eq = static_cast<int>(p.A_eq.rows());
    const int n_ub = static_cast<int>(p.A_ub.rows()) + static_cast<int>(upper_rows.size());
    const int Nstd = N + n_ub;  // plus slacks
    const int m = n_eq + n_ub;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, Nstd);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    {
        Eigen::RowVectorXd row;
        double rhs;
        int r = 0;
        for (int i = 0; i < n_eq; ++i, ++r) {
            expand_row(p.A_eq.row(i), p.b_eq[i], row, rhs);
            A.row(r).head(N) = row;
            b[r] = rhs;
        }
        int slack = N;
        for (int i = 0; i < p.A_ub.rows(); ++i, ++r) {
            expand_row(p.A_ub.row(i), p.b_ub[i], row, rhs);
            A.row(r).head(N) = row;
            A(r, slack++) = 1.0;
            b[r] = rhs;
        }
        for (const auto& [k, bound] : upper_rows) {
            A(r, k) = 1.0;
            A(r, slack++) = 1.0;
            b[r] = bound;
            ++r;
        }
    }
    Eigen::VectorXd cstd = Eigen::VectorXd::Zero(Nstd);
    for (int j = 0; j < n; ++j) {
        cstd[vm[j].pos] += p.c[j] * vm[j].sign;
        if (vm[j].neg >= 0) cstd[vm[j].neg] -= p.c[j];
    }
    for (int r = 0; r < m; ++r)
        if (b[r] < 0) {
            A.row(r) *= -1.0;
            b[r] *= -1.0;
        }

    LpResult res;
    auto to_x = [&](const Eigen::VectorXd& y) {
        Eigen::VectorXd x(n);
        for (int j = 0; j < n; ++j) {
            x[j] = vm[j].offset + vm[j].sign * y[vm[j].pos];
            if (vm[j].neg >= 0) x[j] -= y[vm[j].neg];
        }
        return x;
    };

    // Phase one tableau with artificials for every row.
    Tableau tb;
    tb.m = m;
    tb.ncols = Nstd + m;
    tb.T = Eigen::MatrixXd::Zero(m + 1, tb.ncols + 1);
    tb.T.topLeftCorner(m, Nstd) = A;
    tb.T.block(0, Nstd, m, m) = Eigen::MatrixXd::Identity(m, m);
    tb.T.col(tb.ncols).head(m) = b;
    tb.basis.resize(m);
    for (int r = 0; r < m; ++r) tb.basis[r] = Nstd + r;
    for (int r = 0; r < m; ++r) tb.T.row(m) -= tb.T.row(r);
    for (int r = 0; r < m; ++r) tb.T(m, Nstd + r) = 0.0;

    std::vector<char> allowed(tb.ncols, 1);
    long iters = 0;
    int ucol = -1;
    int st = tb.run(allowed, iters, max_iter, &ucol);
    res.iterations = iters;
    if (st == 2) {
        res.status = LpStatus::IterationLimit;
        return res;
    }
    const double phase1 = -tb.T(m, tb.ncols);
    const double scale = 1.0 + (m > 0 ? b.cwiseAbs().maxCoeff() : 0.0);
    if (m > 0 && phase1 > 1e-9 * scale) {
        res.status = LpStatus::Infeasible;
        // Phase-one duals: y = -(reduced costs of artificials) shifted by their unit cost.
        Eigen::VectorXd y(m);
        for (int r = 0; r < m; ++r) y[r] = -(tb.T(m, Nstd + r) - 1.0);
        res.certificate = y;
        return res;
    }
    // Drive artificials out of the basis; drop redundant rows.
    std::vector<char> keep(m, 1);
    for (int r = 0; r < m; ++r) {
        if (tb.basis[r] < Nstd) continue;
        int col = -1;
        for (int c = 0; c < Nstd; ++c)
            if (std::abs(tb.T(r, c)) > kPivTol) {
                col = c;
                break;
            }
        if (col >= 0)
            tb.pivot(r, col);
        else
            keep[r] = 0;
    }
    // Phase two objective row.
    tb.T.row(m).setZero();
    for (int c = 0; c < Nstd; ++c) tb.T(m, c) = cstd[c];
    for (int r = 0; r < m; ++r) {
        if (!keep[r]) continue;
        const int bc = tb.basis[r];
        const double f = tb.T(m, bc);
        if (f != 0.0) tb.T.row(m) -= f * tb.T.row(r);
    }
    for (int c = Nstd; c < tb.ncols; ++c) allowed[c] = 0;
    // Redundant rows keep an artificial at zero level; exclude them from ratio tests by zeroing.
    for (int r = 0; r < m; ++r)
        if (!keep[r]) tb.T.row(r).setZero();
    st = tb.run(allowed, iters, max_iter, &ucol);
    res.iterations = iters;
    if (st == 2) {
        res.status = LpStatus::IterationLimit;
        return res;
    }
    if (st == 1) {
        res.status = LpStatus::Unbounded;
        Eigen::VectorXd dir = Eigen::VectorXd::Zero(Nstd);
        dir[ucol] = 1.0;
        for (int r = 0; r < m; ++r)
            if (keep[r] && tb.basis[r] < Nstd) dir[tb.basis[r]] = -tb.T(r, ucol);
        Eigen::VectorXd ray(n);
        for (int j = 0; j < n; ++j) {
            ray[j] = vm[j].sign * dir[vm[j].pos];
            if (vm[j].neg >= 0) ray[j] -= dir[vm[j].neg];
        }
        res.certificate = ray;
        return res;
    }
    // Refine the basic solution by a direct solve on the final basis.
    std::vector<int> rows, cols;
    for (int r = 0; r < m; ++r)
        if (keep[r]) {
            rows.push_back(r);
            cols.push_back(tb.basis[r]);
        }
    Eigen::VectorXd y = Eigen::VectorXd::Zero(Nstd);
    Eigen::VectorXd yrow = Eigen::VectorXd::Zero(m);
    if (!rows.empty()) {
        const int k = static_cast<int>(rows.size());
        Eigen::MatrixXd B(k, k);
        Eigen::VectorXd bb(k), cb(k);
        for (int i = 0; i < k; ++i) {
            bb[i] = b[rows[i]];
            cb[i] = cstd[cols[i]];
            for (int jj = 0; jj < k; ++jj) B(i, jj) = A(rows[i], cols[jj]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
        Eigen::VectorXd xb = lu.solve(bb);
        bool ok = lu.isInvertible() && xb.allFinite();
        if (ok)
            for (int i = 0; i < k; ++i) y[cols[i]] = std::max(0.0, xb[i]);
        else
            for (int r = 0; r < m; ++r)
                if (keep[r]) y[tb.basis[r]] = std::max(0.0, tb.T(r, tb.ncols));
        Eigen::VectorXd dual = ok ? Eigen::VectorXd(lu.transpose().solve(cb)) : Eigen::VectorXd::Zero(k);
        for (int i = 0; i < k; ++i) yrow[rows[i]] = dual[i];
    }
    double worst_rc = 0.0;
    Eigen::VectorXd rc = cstd - A.transpose() * yrow;
    for (int c = 0; c < Nstd; ++c) worst_rc = std::min(worst_rc, rc[c]);
    res.dual_residual = -worst_rc;
    res.x = to_x(y);
    res.value = p.c.dot(res.x);
    // Primal residual against the original constraints.
    double pr = 0.0;
    if (p.A_eq.rows()) pr = std::max(pr, (p.A_eq * res.x - p.b_eq).cwiseAbs().maxCoeff());
    if (p.A_ub.rows()) pr = std::max(pr, (p.A_ub * res.x - p.b_ub).maxCoeff());
    for (int j = 0; j < n; ++j) {
        pr = std::max(pr, lo[j] - res.x[j]);
        pr = std::max(pr, res.x[j] - up[j]);
    }
    res.primal_residual = std::max(0.0, pr);
    res.status = LpStatus::Optimal;
    return res;
}

LpResult solve_lp_checked(const LpProblem& p, const std::string& what, long max_iter) {
    LpResult r = solve_lp(p, max_iter);
    if (r.status == LpStatus::IterationLimit)
        throw IterationLimit(what + ": simplex hit the iteration cap of " + std::to_string(max_iter));
    if (r.status != LpStatus::Optimal)
        throw NumericalFailure(what + ": LP reported " + to_string(r.status));
    return r;
}

}  // namespace omle
