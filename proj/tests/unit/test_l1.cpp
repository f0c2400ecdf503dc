#include <doctest.h>

#include <cmath>

#include "omle/envs.hpp"
#include "omle/l1.hpp"

using namespace omle;

namespace {

Eigen::MatrixXd random_stochastic_matrix(Rng& rng, int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c) m.col(c) = dirichlet_column(rng, rows);
    return m;
}

TabularPOMDP with_emission(const Eigen::MatrixXd& obs, int H) {
    const int O = static_cast<int>(obs.rows()), S = static_cast<int>(obs.cols());
    EpisodeSpec sp{S, O, 1, H};
    std::vector<std::vector<Eigen::MatrixXd>> T(H - 1, {Eigen::MatrixXd::Identity(S, S)});
    return TabularPOMDP(sp, Eigen::VectorXd::Constant(S, 1.0 / S), T, std::vector<Eigen::MatrixXd>(H, obs),
                        std::vector<std::vector<double>>(H, std::vector<double>(O, 0.0)));
}

}  // namespace

TEST_CASE("identity emissions give alpha 1") {
    for (int S = 2; S <= 4; ++S) {
        AlphaWitness w = alpha_of_matrix(Eigen::MatrixXd::Identity(S, S));
        CHECK(w.alpha == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("POMDP-A is 1-step 0.98-observable and POMDP-B is not observable") {
    auto [pa, pb] = counterexample_pomdps(3);
    AlphaReport ra = observability_alpha(pa, 1);
    CHECK(std::abs(ra.alpha - 0.98) < 1e-12);
    CHECK(ra.alpha >= 0.5);
    for (int m = 1; m <= 3; ++m) CHECK(std::abs(observability_alpha(pb, m).alpha) < 1e-12);
}

TEST_CASE("alpha witnesses re-certify and random pairs respect the bound") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int S = 2 + trial % 3;
        Eigen::MatrixXd M = random_stochastic_matrix(rng, 5, S);
        AlphaWitness w = alpha_of_matrix(M);
        CHECK(w.alpha >= 0.0);
        CHECK(w.alpha <= 2.0);
        CHECK(std::abs(w.nu1.sum() - 1.0) < 1e-9);
        CHECK(std::abs(w.nu2.sum() - 1.0) < 1e-9);
        CHECK(w.nu1.cwiseProduct(w.nu2).cwiseAbs().maxCoeff() < 1e-12);
        const Eigen::VectorXd z = w.nu1 - w.nu2;
        CHECK(std::abs((M * z).lpNorm<1>() - w.alpha * z.lpNorm<1>()) < 1e-8);
        for (int k = 0; k < 1000; ++k) {
            Eigen::VectorXd a = dirichlet_column(rng, S), b = dirichlet_column(rng, S);
            CHECK((M * (a - b)).lpNorm<1>() >= w.alpha * (a - b).lpNorm<1>() - 1e-9);
        }
    }
}

TEST_CASE("mstep matrix rows are test probabilities") {
    Rng rng(32);
    TabularPOMDP p = random_pomdp({3, 2, 2, 4}, rng);
    Eigen::MatrixXd M = mstep_matrix(p, 2, 2);
    CHECK(M.rows() == 2 * 2 * 2);
    // For each fixed action, probabilities over (o_2, o_3) sum to 1.
    for (int a = 0; a < 2; ++a) {
        Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(3);
        for (int o1 = 0; o1 < 2; ++o1)
            for (int o2 = 0; o2 < 2; ++o2) s += M.row((o1 * 2 + a) * 2 + o2);
        CHECK((s.array() - 1.0).abs().maxCoeff() < 1e-12);
    }
    // Near the end of the episode only the remaining observations are used.
    CHECK(mstep_matrix(p, 4, 3).rows() == 2);
}

TEST_CASE("l1 pseudo-inverse of identity and block emissions") {
    L1Inverse g = l1_min_pseudoinverse(Eigen::MatrixXd::Identity(3, 3));
    CHECK(g.norm == doctest::Approx(1.0));
    CHECK(g.residual < 1e-12);
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(5, 2);
    block(0, 0) = 0.3;
    block(1, 0) = 0.7;
    block(2, 1) = 0.2;
    block(3, 1) = 0.5;
    block(4, 1) = 0.3;
    L1Inverse gb = l1_min_pseudoinverse(block);
    CHECK(gb.norm == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(gb.residual < 1e-10);
    CHECK_THROWS_AS(l1_min_pseudoinverse(Eigen::MatrixXd::Ones(3, 2)), RankDeficient);
}

TEST_CASE("l1 pseudo-inverse respects the S/alpha bound and beats the plain pseudo-inverse") {
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd O = random_stochastic_matrix(rng, 6, 3);
        L1Inverse g = l1_min_pseudoinverse(O);
        CHECK(g.residual < 1e-8);
        CHECK(g.norm <= g.pinv_norm + 1e-9);
        const double alpha = alpha_of_matrix(O).alpha;
        CHECK(g.norm <= 3.0 / alpha + 1e-6);
    }
}

TEST_CASE("l1 pseudo-inverse matches a direct search over the left null space for 3x2 matrices") {
    Rng rng(34);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd O = random_stochastic_matrix(rng, 3, 2);
        L1Inverse g = l1_min_pseudoinverse(O);
        Eigen::MatrixXd pinv = O.completeOrthogonalDecomposition().pseudoInverse();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(O, Eigen::ComputeFullU);
        Eigen::VectorXd n = svd.matrixU().col(2);
        // G = O† + t nᵀ per row; minimize the max column sum over (t0, t1) by coarse-to-fine search.
        auto norm_at = [&](double t0, double t1) {
            Eigen::MatrixXd G = pinv;
            G.row(0) += t0 * n.transpose();
            G.row(1) += t1 * n.transpose();
            return l1_norm(G);
        };
        double c0 = 0.0, c1 = 0.0, width = 20.0, best = norm_at(0.0, 0.0);
        for (int level = 0; level < 40; ++level) {
            double b0 = c0, b1 = c1;
            for (int i = -10; i <= 10; ++i)
                for (int j = -10; j <= 10; ++j) {
                    const double t0 = c0 + width * i / 10.0, t1 = c1 + width * j / 10.0;
                    const double v = norm_at(t0, t1);
                    if (v < best) {
                        best = v;
                        b0 = t0;
                        b1 = t1;
                    }
                }
            c0 = b0;
            c1 = b1;
            width *= 0.5;
        }
        CHECK(g.norm <= best + 1e-9);
        CHECK(g.norm >= best - 1e-6);
    }
}

TEST_CASE("l1 contraction lower-bounds the sum-to-zero observability constant") {
    Rng rng(35);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd O = random_stochastic_matrix(rng, 4, 3);
        CHECK(l1_contraction(O).alpha <= alpha_of_matrix(O).alpha + 1e-12);
    }
    auto [pa, pb] = counterexample_pomdps(1);
    CHECK(std::abs(l1_contraction(pa.Obs(1)).alpha - 0.98) < 1e-12);
    CHECK(with_emission(pa.Obs(1), 2).spec().S == 2);
}

TEST_CASE("Barycentric spanner of the standard basis") {
    Spanner sp = barycentric_spanner(Eigen::MatrixXd::Identity(4, 4));
    CHECK(sp.rank == 4);
    CHECK(sp.max_coef == doctest::Approx(1.0));
    CHECK_THROWS_AS(barycentric_spanner(Eigen::MatrixXd::Zero(3, 2)), DegenerateSet);
}

TEST_CASE("Barycentric spanner of vectors in a 3-dim subspace") {
    Rng rng(36);
    Eigen::MatrixXd basis(10, 3);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 3; ++j) basis(i, j) = 2.0 * rng.uniform() - 1.0;
    Eigen::MatrixXd coef(3, 20);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 20; ++j) coef(i, j) = 2.0 * rng.uniform() - 1.0;
    Eigen::MatrixXd V = basis * coef;
    Spanner sp = barycentric_spanner(V, 1.01);
    CHECK(sp.rank == 3);
    for (int j = 0; j < 20; ++j) {
        Eigen::VectorXd c = sp.X.colPivHouseholderQr().solve(V.col(j));
        CHECK((sp.X * c - V.col(j)).norm() < 1e-9);
        CHECK(c.cwiseAbs().maxCoeff() <= 1.01 + 1e-9);
    }
}

TEST_CASE("numerical rank of a product of random factors") {
    Rng rng(37);
    Eigen::MatrixXd L(8, 2), R(2, 12);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 2; ++j) L(i, j) = rng.uniform();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 12; ++j) R(i, j) = rng.uniform();
    CHECK(numerical_rank(L * R) == 2);
    CHECK(numerical_rank(Eigen::MatrixXd::Zero(3, 3)) == 0);
}
