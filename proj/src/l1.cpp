#include "omle/l1.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "omle/lp.hpp"

namespace omle {

int numerical_rank(const Eigen::MatrixXd& M, double tol) {
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv[0] <= 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > tol * sv[0]) ++r;
    return r;
}

double l1_norm(const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    return M.cwiseAbs().colwise().sum().maxCoeff();
}

namespace {

// min ‖Mz‖₁ with z = Σ_P p_i e_i − Σ_N n_j e_j, Σp = sp, Σn = sn (sn may be 0 with N empty),
// or with the single normalization Σp + Σn = 1 when joint is true.
AlphaWitness pattern_lp(const Eigen::MatrixXd& M, const std::vector<int>& P, const std::vector<int>& N,
                        bool joint) {
    const int R = static_cast<int>(M.rows());
    const int np = static_cast<int>(P.size()), nn = static_cast<int>(N.size());
    const int nv = np + nn + R;
    LpProblem lp(nv);
    for (int r = 0; r < R; ++r) lp.c[np + nn + r] = 1.0;
    for (int r = 0; r < R; ++r) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nv);
        for (int i = 0; i < np; ++i) row[i] = M(r, P[i]);
        for (int j = 0; j < nn; ++j) row[np + j] = -M(r, N[j]);
        Eigen::RowVectorXd up = row;
        up[np + nn + r] = -1.0;
        lp.add_ub(up, 0.0);
        Eigen::RowVectorXd dn = -row;
        dn[np + nn + r] = -1.0;
        lp.add_ub(dn, 0.0);
    }
    if (joint) {
        Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(nv);
        s.head(np + nn).setOnes();
        lp.add_eq(s, 1.0);
    } else {
        Eigen::RowVectorXd s1 = Eigen::RowVectorXd::Zero(nv), s2 = Eigen::RowVectorXd::Zero(nv);
        s1.head(np).setOnes();
        s2.segment(np, nn).setOnes();
        lp.add_eq(s1, 1.0);
        lp.add_eq(s2, 1.0);
    }
    LpResult res = solve_lp_checked(lp, "observability LP");
    AlphaWitness w;
    const int S = static_cast<int>(M.cols());
    w.nu1 = Eigen::VectorXd::Zero(S);
    w.nu2 = Eigen::VectorXd::Zero(S);
    for (int i = 0; i < np; ++i) w.nu1[P[i]] = std::max(0.0, res.x[i]);
    for (int j = 0; j < nn; ++j) w.nu2[N[j]] = std::max(0.0, res.x[np + j]);
    const Eigen::VectorXd z = w.nu1 - w.nu2;
    const double zn = z.lpNorm<1>();
    // Re-evaluate the objective exactly at the returned point.
    w.alpha = zn > 0 ? (M * z).lpNorm<1>() / zn : 0.0;
    return w;
}

template <bool Joint>
AlphaWitness enumerate_patterns(const Eigen::MatrixXd& M) {
    const int S = static_cast<int>(M.cols());
    if (S > kMaxAlphaStates)
        throw CapExceeded("sign-pattern enumeration supports S <= " + std::to_string(kMaxAlphaStates));
    AlphaWitness best;
    best.alpha = std::numeric_limits<double>::infinity();
    const std::uint64_t n = std::uint64_t{1} << (S - 1);
    for (std::uint64_t mask = 0; mask < n; ++mask) {
        std::vector<int> P{0}, N;
        for (int s = 1; s < S; ++s) ((mask >> (s - 1)) & 1u ? P : N).push_back(s);
        if (!Joint && N.empty()) continue;
        AlphaWitness w = pattern_lp(M, P, N, Joint);
        if (w.alpha < best.alpha - 1e-15) best = w;
    }
    return best;
}

}  // namespace

AlphaWitness alpha_of_matrix(const Eigen::MatrixXd& M) {
    if (M.cols() <= 1) {
        AlphaWitness w;
        w.alpha = 1.0;
        w.nu1 = w.nu2 = Eigen::VectorXd::Ones(M.cols());
        return w;
    }
    return enumerate_patterns<false>(M);
}

AlphaWitness l1_contraction(const Eigen::MatrixXd& M) {
    if (M.cols() == 0) return {};
    return enumerate_patterns<true>(M);
}

Eigen::MatrixXd mstep_matrix(const TabularPOMDP& p, int h, int m) {
    const auto& sp = p.spec();
    const int L = std::min(m, sp.H - h + 1);
    if (L < 1) throw InvalidModel("m-step matrix needs at least one observation");
    const std::uint64_t R = sp.tree_size(L - 1, UINT64_MAX) * static_cast<std::uint64_t>(sp.O);
    Eigen::MatrixXd M(static_cast<Eigen::Index>(R), sp.S);
    std::vector<int> obs(L), acts(std::max(0, L - 1));
    for (std::uint64_t idx = 0; idx < R; ++idx) {
        std::uint64_t r = idx;
        obs[L - 1] = static_cast<int>(r % sp.O);
        r /= sp.O;
        for (int k = L - 2; k >= 0; --k) {
            const int pair = static_cast<int>(r % sp.pairs());
            r /= sp.pairs();
            obs[k] = pair / sp.A;
            acts[k] = pair % sp.A;
        }
        Eigen::RowVectorXd f = p.Obs(h + L - 1).row(obs[L - 1]);
        for (int k = L - 2; k >= 0; --k) {
            Eigen::RowVectorXd g = f * p.T(h + k, acts[k]);
            f = g.cwiseProduct(p.Obs(h + k).row(obs[k]));
        }
        M.row(static_cast<Eigen::Index>(idx)) = f;
    }
    return M;
}

AlphaReport observability_alpha(const TabularPOMDP& p, int m) {
    const auto& sp = p.spec();
    if (m < 1 || m > sp.H) throw InvalidModel("observability needs 1 <= m <= H");
    if (sp.S > kMaxAlphaStates)
        throw CapExceeded("observability α supports S <= " + std::to_string(kMaxAlphaStates));
    AlphaReport rep;
    rep.m = m;
    rep.alpha = std::numeric_limits<double>::infinity();
    for (int h = 1; h <= sp.H - m + 1; ++h) {
        AlphaWitness w = alpha_of_matrix(mstep_matrix(p, h, m));
        rep.alpha_h.push_back(w.alpha);
        if (w.alpha < rep.alpha) {
            rep.alpha = w.alpha;
            rep.argmin_h = h;
            rep.witness = w;
        }
    }
    return rep;
}

L1Inverse l1_min_pseudoinverse(const Eigen::MatrixXd& O, double tol) {
    const int R = static_cast<int>(O.rows()), S = static_cast<int>(O.cols());
    if (numerical_rank(O, tol) < S) throw RankDeficient("matrix does not have full column rank");
    const int nG = S * R;
    const int nv = 2 * nG + 1;
    auto gi = [&](int s, int r) { return s * R + r; };
    LpProblem lp(nv);
    lp.c[nv - 1] = 1.0;
    for (int s = 0; s < S; ++s)
        for (int s2 = 0; s2 < S; ++s2) {
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nv);
            for (int r = 0; r < R; ++r) {
                row[gi(s, r)] = O(r, s2);
                row[nG + gi(s, r)] = -O(r, s2);
            }
            lp.add_eq(row, s == s2 ? 1.0 : 0.0);
        }
    for (int r = 0; r < R; ++r) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nv);
        for (int s = 0; s < S; ++s) {
            row[gi(s, r)] = 1.0;
            row[nG + gi(s, r)] = 1.0;
        }
        row[nv - 1] = -1.0;
        lp.add_ub(row, 0.0);
    }
    LpResult res = solve_lp_checked(lp, "l1 pseudo-inverse LP");
    L1Inverse out;
    out.G.resize(S, R);
    for (int s = 0; s < S; ++s)
        for (int r = 0; r < R; ++r) out.G(s, r) = res.x[gi(s, r)] - res.x[nG + gi(s, r)];
    out.norm = l1_norm(out.G);
    Eigen::MatrixXd pinv = O.completeOrthogonalDecomposition().pseudoInverse();
    out.pinv_norm = l1_norm(pinv);
    out.residual = (out.G * O - Eigen::MatrixXd::Identity(S, S)).cwiseAbs().maxCoeff();
    return out;
}

Spanner barycentric_spanner(const Eigen::MatrixXd& Vin, double C, bool normalize_l1, double tol) {
    if (C < 1.0) throw InvalidModel("spanner approximation factor must be >= 1");
    std::vector<int> keep;
    Eigen::MatrixXd V(Vin.rows(), Vin.cols());
    int nk = 0;
    for (Eigen::Index j = 0; j < Vin.cols(); ++j) {
        const double n1 = Vin.col(j).lpNorm<1>();
        if (normalize_l1 && n1 <= 0.0) continue;
        V.col(nk++) = normalize_l1 ? Eigen::VectorXd(Vin.col(j) / n1) : Eigen::VectorXd(Vin.col(j));
        keep.push_back(static_cast<int>(j));
    }
    V.conservativeResize(Vin.rows(), nk);
    if (nk == 0) throw DegenerateSet("spanner input is empty");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[0] > 0.0 && sv[i] > tol * sv[0]) ++r;
    if (r == 0) throw DegenerateSet("spanner input spans a zero-dimensional subspace");
    const Eigen::MatrixXd Q = svd.matrixU().leftCols(r);
    const Eigen::MatrixXd Y = Q.transpose() * V;  // r x nk

    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(r, r);
    std::vector<int> idx(r, -1);
    auto det_with = [&](int col, int cand) {
        Eigen::MatrixXd Bt = B;
        Bt.col(col) = Y.col(cand);
        return std::abs(Bt.determinant());
    };
    for (int j = 0; j < r; ++j) {
        int best = 0;
        double bd = -1.0;
        for (int i = 0; i < nk; ++i) {
            const double d = det_with(j, i);
            if (d > bd * (1.0 + 1e-12)) {
                bd = d;
                best = i;
            }
        }
        B.col(j) = Y.col(best);
        idx[j] = best;
    }
    bool improved = true;
    long guard = 0;
    while (improved && guard++ < 100000) {
        improved = false;
        const double cur = std::abs(B.determinant());
        for (int j = 0; j < r && !improved; ++j)
            for (int i = 0; i < nk && !improved; ++i)
                if (det_with(j, i) > C * cur) {
                    B.col(j) = Y.col(i);
                    idx[j] = i;
                    improved = true;
                }
    }
    Spanner sp;
    sp.C = C;
    sp.rank = r;
    sp.X.resize(V.rows(), r);
    for (int j = 0; j < r; ++j) {
        sp.X.col(j) = V.col(idx[j]);
        sp.indices.push_back(keep[idx[j]]);
    }
    sp.Xdag = sp.X.completeOrthogonalDecomposition().pseudoInverse();
    sp.max_coef = (sp.Xdag * V).cwiseAbs().maxCoeff();
    return sp;
}

}  // namespace omle
