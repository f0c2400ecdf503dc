#include <doctest.h>

#include <cmath>

#include "omle/envs.hpp"
#include "omle/l1.hpp"
#include "omle/psr.hpp"

using namespace omle;

namespace {

TabularPOMDP single_outcome(int H) {
    EpisodeSpec sp{1, 1, 1, H};
    return TabularPOMDP(sp, Eigen::VectorXd::Ones(1),
                        std::vector<std::vector<Eigen::MatrixXd>>(H - 1, {Eigen::MatrixXd::Ones(1, 1)}),
                        std::vector<Eigen::MatrixXd>(H, Eigen::MatrixXd::Ones(1, 1)),
                        std::vector<std::vector<double>>(H, {0.0}));
}

// Observation equals the latent state; transitions random.
TabularPOMDP block_mdp(Rng& rng, int S, int A, int H) {
    EpisodeSpec sp{S, S, A, H};
    TabularPOMDP r = random_pomdp(sp, rng);
    return TabularPOMDP(sp, r.mu1(), r.transitions(), std::vector<Eigen::MatrixXd>(H, Eigen::MatrixXd::Identity(S, S)),
                        r.rewards());
}

}  // namespace

TEST_CASE("system dynamics of the single-outcome model") {
    SystemDynamics sd = build_system_dynamics(single_outcome(3));
    REQUIRE(sd.D.size() == 3);
    for (const auto& D : sd.D) {
        CHECK(D.rows() == 1);
        CHECK(D.cols() == 1);
        CHECK(D(0, 0) == 1.0);
    }
    RankReport r = psr_rank(sd);
    CHECK(r.rank == 1);
    OomRep oom = build_oom(sd);
    CHECK(oom.b0 == doctest::Approx(1.0));
    for (const auto& Bh : oom.B) CHECK(Bh[0][0](0, 0) == doctest::Approx(1.0));
    for (const auto& u : oom.upsilon) CHECK(u[0] == doctest::Approx(1.0));
    SelfConsistentPsr psr = build_self_consistent_psr(sd, select_core_tests(sd));
    CHECK(psr.rep.psi0[0] == doctest::Approx(1.0));
    for (const auto& Mh : psr.rep.M) CHECK(Mh[0][0](0, 0) == doctest::Approx(1.0));
    CHECK(psr.rep.phiH[0][0][0] == doctest::Approx(1.0));
}

TEST_CASE("system dynamics agree with cond_table rows and test columns") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        EpisodeSpec sp{2 + trial % 2, 2, 2, 3};
        TabularPOMDP p = random_pomdp(sp, rng);
        CondTable t = cond_table(p);
        SystemDynamics sd = SystemDynamics::from_table(t);
        for (int h = 0; h < sp.H; ++h) {
            CHECK(sd.D[h].minCoeff() >= 0.0);
            CHECK(sd.D[h].maxCoeff() <= 1.0);
            for (Eigen::Index r = 0; r < sd.D[h].rows(); ++r) {
                const double pbar = sd.D[h].row(r).sum() / std::pow(2.0, sp.H - h);
                CHECK(std::abs(pbar - t.pbar[h][r]) < 1e-10);
                const Trajectory hist = decode_history(sp, r, h);
                for (const auto& q : enumerate_tests(sp, sp.H - h)) {
                    double w = 0.0;
                    double agg = 0.0;
                    for (auto c : test_columns(sp, h, q, w)) agg += sd.D[h](r, static_cast<Eigen::Index>(c));
                    CHECK(std::abs(w * agg - test_probability(t, hist, q)) < 1e-10);
                }
            }
        }
    }
}

TEST_CASE("PSR rank is at most S and detects synthetic rank 2") {
    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        const int S = 1 + trial % 3;
        TabularPOMDP p = random_pomdp({S, 3, 2, 3}, rng);
        CHECK(psr_rank(build_system_dynamics(p)).rank <= S);
    }
    SystemDynamics sd;
    sd.spec = {1, 2, 2, 2};
    Eigen::MatrixXd L(4, 2), R(2, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) {
            L(i, j) = rng.uniform();
            R(j, i) = rng.uniform();
        }
    sd.D = {Eigen::MatrixXd::Ones(1, 16), L * R};
    CHECK(psr_rank(sd).rank_h[1] == 2);
}

TEST_CASE("support rank matches the dense rank") {
    Rng rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        TabularPOMDP p = random_pomdp({3, 2, 2, 4}, rng);
        RankReport r = psr_rank(build_system_dynamics(p));
        for (int h = 0; h < 4; ++h) CHECK(support_rank(p, h) == r.rank_h[h]);
    }
    auto [pa, pb] = counterexample_pomdps(4);
    RankReport rb = psr_rank(build_system_dynamics(pb));
    for (int h = 0; h < 4; ++h) CHECK(support_rank(pb, h) == rb.rank_h[h]);
}

TEST_CASE("core-test selection") {
    SystemDynamics one = build_system_dynamics(single_outcome(3));
    CoreTestSet q1 = select_core_tests(one);
    for (const auto& Qh : q1.Q) {
        REQUIRE(Qh.size() == 1);
        CHECK(Qh[0].length() == 1);
    }
    auto [pa, pb] = counterexample_pomdps(3);
    CoreTestSet qa = select_core_tests(build_system_dynamics(pa));
    REQUIRE(qa.Q[0].size() == 1);
    CHECK(qa.Q[0][0].length() == 1);
    CHECK(qa.Q[0][0].obs[0] == 0);
    for (int h = 1; h < 3; ++h) {
        REQUIRE(qa.Q[h].size() == 2);
        CHECK(qa.Q[h][0].length() == 1);
        CHECK(qa.Q[h][1].length() == 1);
        CHECK(qa.Q[h][0].obs[0] == 0);
        CHECK(qa.Q[h][1].obs[0] == 1);
        REQUIRE(qa.QA[h].size() == 1);
        CHECK(qa.QA[h][0].empty());
    }
    Rng rng(44);
    for (int trial = 0; trial < 20; ++trial) {
        EpisodeSpec sp{2 + trial % 2, 2, 2, 3};
        SystemDynamics sd = build_system_dynamics(random_pomdp(sp, rng));
        CoreTestSet q = select_core_tests(sd);
        RankReport rr = psr_rank(sd);
        for (int h = 0; h < 3; ++h) {
            CHECK(static_cast<int>(q.Q[h].size()) == rr.rank_h[h]);
            Eigen::MatrixXd sub = aggregate_test_rows(sp, h, q.Q[h], sd.D[h].transpose());
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(sd.D[h]);
            int full = 0;
            for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
                if (svd.singularValues()[i] > 1e-8 * svd.singularValues()[0]) ++full;
            CHECK(numerical_rank(sub) == full);
        }
    }
}

TEST_CASE("prefix-free reduction of action sequences") {
    auto r = prefix_free_reduce({{}, {0}, {1}, {0}, {0, 1}});
    REQUIRE(r.size() == 2);
    CHECK(r[0] == std::vector<int>{0, 1});
    CHECK(r[1] == std::vector<int>{1});
    CHECK(prefix_free_reduce({{}}).size() == 1);
}

TEST_CASE("OOM conditions on random POMDPs") {
    Rng rng(45);
    for (int trial = 0; trial < 10; ++trial) {
        TabularPOMDP p = random_pomdp({3, 2 + trial % 2, 2, 3}, rng);
        SystemDynamics sd = build_system_dynamics(p);
        OomRep oom = build_oom(sd);
        CHECK(oom.check.pass);
        CHECK(oom.check.flow_residual < 1e-8);
        CHECK(oom.check.prob_residual < 1e-8);
        CHECK(oom.check.max_B_norm <= 1.0 + 1e-9);
        CHECK(oom.b0 == doctest::Approx(sd.D[0].norm()).epsilon(1e-12));
        CHECK(oom.b0 <= std::sqrt(8.0) + 1e-9);
    }
    // A deterministic model with a single observation puts all mass into one column per action sequence.
    SystemDynamics sd = build_system_dynamics(single_outcome(2));
    CHECK(build_oom(sd).b0 == doctest::Approx(std::sqrt(1.0)));
}

TEST_CASE("self-consistent PSR reproduces probabilities and prediction vectors") {
    Rng rng(46);
    for (int trial = 0; trial < 10; ++trial) {
        EpisodeSpec sp{1 + trial % 3, 2 + trial % 2, 2, 3 + trial % 2};
        TabularPOMDP p = random_pomdp(sp, rng);
        CondTable t = cond_table(p);
        SystemDynamics sd = SystemDynamics::from_table(t);
        SelfConsistentPsr psr = build_self_consistent_psr(sd, select_core_tests(sd));
        CHECK(psr.check.pass);
        PsrCheck ck = verify_psr(psr.rep, t);
        CHECK(ck.psr1 < 1e-8);
        CHECK(ck.psr2 < 1e-8);
        PsrModel model(psr.rep, p.rewards());
        CondTable t2 = cond_table(model);
        for (int h = 0; h <= sp.H; ++h)
            for (std::size_t i = 0; i < t.pbar[h].size(); ++i) CHECK(std::abs(t.pbar[h][i] - t2.pbar[h][i]) < 1e-8);
        for (int k = 0; k < 5; ++k) {
            Trajectory prefix = decode_history(sp, static_cast<std::uint64_t>(k * 3) % sp.tree_size(2), 2);
            if (t.at(prefix) < 1e-10) continue;
            Eigen::VectorXd c1 = p.cond(3, prefix), c2 = model.cond(3, prefix);
            CHECK((c1 - c2).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("PSR JSON round trip") {
    Rng rng(47);
    TabularPOMDP p = random_pomdp({2, 2, 2, 3}, rng);
    SystemDynamics sd = build_system_dynamics(p);
    PsrRep rep = build_self_consistent_psr(sd, select_core_tests(sd)).rep;
    PsrRep back = PsrRep::from_json(nlohmann::json::parse(rep.to_json().dump()));
    CHECK(back.tests.Q == rep.tests.Q);
    CHECK((back.psi0 - rep.psi0).norm() == 0.0);
    CHECK(verify_psr(back, cond_table(p)).psr1 < 1e-8);
    nlohmann::json bad = rep.to_json();
    bad["extra"] = 1;
    CHECK_THROWS_AS(PsrRep::from_json(bad), InvalidModel);
}

TEST_CASE("observable construction on POMDP-A and random observable POMDPs") {
    auto [pa, pb] = counterexample_pomdps(3);
    ConstructedPsr c = pomdp_to_psr_observable(pa, 1);
    CHECK(c.check.psr1 < 1e-8);
    CHECK(c.check.psr2 < 1e-8);
    CHECK(c.alpha == doctest::Approx(0.98));
    for (const auto& Qh : c.rep.tests.Q) CHECK(Qh.size() == 2);
    CHECK_THROWS_AS(pomdp_to_psr_observable(pb, 1), NotObservable);
    Rng rng(48);
    for (int m = 1; m <= 2; ++m) {
        CertifiedPomdp g = gen_observable_pomdp(2, 2, 2, 4, 0.1, 100 + m, m);
        ConstructedPsr cg = pomdp_to_psr_observable(g.model, m);
        CHECK(cg.check.psr1 < 1e-8);
        CHECK(cg.check.psr2 < 1e-8);
        for (double n : cg.inverse_norms) CHECK(n <= 2.0 / cg.alpha + 1e-6);
    }
    TabularPOMDP bm = block_mdp(rng, 3, 2, 3);
    ConstructedPsr cb = pomdp_to_psr_observable(bm, 1);
    for (double n : cb.inverse_norms) CHECK(n == doctest::Approx(1.0));
    CHECK(cb.check.psr1 < 1e-8);
}

TEST_CASE("decodable construction on POMDP-B and block MDPs") {
    auto [pa, pb] = counterexample_pomdps(4);
    Decoder prev_action = [](int h, const Trajectory& z) { return h == 1 ? 0 : z.acts.back(); };
    ConstructedPsr c = pomdp_to_psr_decodable(pb, prev_action, 1);
    CHECK(c.check.psr1 < 1e-8);
    CHECK(c.check.psr2 < 1e-8);
    CHECK(c.rep.tests.QA[0].size() == 2);
    Rng rng(49);
    TabularPOMDP bm = block_mdp(rng, 3, 2, 4);
    Decoder by_obs = [](int, const Trajectory& z) { return z.obs.back(); };
    ConstructedPsr cb = pomdp_to_psr_decodable(bm, by_obs, 0);
    CHECK(cb.check.psr1 < 1e-8);
    CHECK(cb.check.psr2 < 1e-8);
    ConstructedPsr cb2 = pomdp_to_psr_decodable(bm, by_obs, 2);
    CHECK(cb2.check.psr1 < 1e-8);
    Decoder wrong = [](int, const Trajectory&) { return 0; };
    CHECK_THROWS_AS(pomdp_to_psr_decodable(pb, wrong, 1), DecoderInconsistent);
    CHECK_THROWS_AS(check_decoder(pa, by_obs, 0), DecoderInconsistent);
}
