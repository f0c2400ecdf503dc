#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <cmath>
#include <numeric>

#include "omle/envs.hpp"
#include "omle/exact.hpp"

using namespace omle;

namespace {

TabularPOMDP single_step(double p0) {
    EpisodeSpec sp{1, 2, 2, 1};
    Eigen::MatrixXd obs(2, 1);
    obs << p0, 1.0 - p0;
    return TabularPOMDP(sp, Eigen::VectorXd::Ones(1), {}, {obs}, {{0.0, 0.0}});
}

// All deterministic policies for tiny specs, enumerated by mixed-radix action tables.
std::vector<PolicyPtr> all_deterministic(const EpisodeSpec& sp) {
    std::uint64_t nodes = 0;
    for (int h = 1; h <= sp.H; ++h) nodes += sp.tree_size(h - 1) * sp.O;
    const std::uint64_t count = ipow(sp.A, static_cast<int>(nodes));
    std::vector<PolicyPtr> out;
    for (std::uint64_t c = 0; c < count; ++c) {
        std::vector<std::vector<int>> acts(sp.H);
        std::uint64_t r = c;
        for (int h = 1; h <= sp.H; ++h) {
            acts[h - 1].resize(sp.tree_size(h - 1) * sp.O);
            for (auto& a : acts[h - 1]) {
                a = static_cast<int>(r % sp.A);
                r /= sp.A;
            }
        }
        out.push_back(HistoryPolicy::deterministic(sp, std::move(acts)));
    }
    return out;
}

PolicyPtr random_stochastic(const EpisodeSpec& sp, Rng& rng) {
    std::vector<std::vector<double>> probs(sp.H);
    for (int h = 1; h <= sp.H; ++h) {
        const std::uint64_t n = sp.tree_size(h - 1) * sp.O;
        for (std::uint64_t k = 0; k < n; ++k) {
            auto d = dirichlet_ones(rng, sp.A);
            double s = std::accumulate(d.begin(), d.end(), 0.0);
            for (double x : d) probs[h - 1].push_back(x / s);
        }
    }
    return HistoryPolicy::stochastic(sp, std::move(probs));
}

}  // namespace

TEST_CASE("cond_table of the single-outcome model") {
    EpisodeSpec sp{1, 1, 1, 1};
    TabularPOMDP p(sp, Eigen::VectorXd::Ones(1), {}, {Eigen::MatrixXd::Ones(1, 1)}, {{0.0}});
    CondTable t = cond_table(p);
    CHECK(t.pbar[0][0] == 1.0);
    CHECK(t.pbar[1][0] == 1.0);
}

TEST_CASE("cond_table of POMDP-A at H=2 matches latent-path enumeration") {
    auto [pa, pb] = counterexample_pomdps(2);
    CondTable t = cond_table(pa);
    CHECK(std::abs(t.at(Trajectory{{0}, {0}}) - 0.5) < 1e-15);
    CHECK(std::abs(t.at(Trajectory{{0, 0}, {0, 0}}) - 0.4901) < 1e-14);
    CHECK(std::abs(latent_path_probability(pa, Trajectory{{0, 0}, {0, 0}}) - 0.4901) < 1e-14);
}

TEST_CASE("cond_table marginalizes and agrees with latent paths") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        TabularPOMDP p = random_pomdp({3, 2, 2, 4}, rng);
        CondTable t = cond_table(p);
        CHECK(t.marginal_residual() < 1e-10);
        for (std::uint64_t i = 0; i < t.leaves().size(); i += 7)
            CHECK(std::abs(t.leaves()[i] - latent_path_probability(p, decode_history(p.spec(), i, 4))) < 1e-12);
    }
}

TEST_CASE("cond_table enforces the leaf cap") {
    Rng rng(1);
    TabularPOMDP p = random_pomdp({2, 3, 3, 5}, rng);
    CHECK_THROWS_AS(cond_table(p, 1000), CapExceeded);
}

TEST_CASE("trajectory distributions sum to one") {
    Rng rng(2);
    TabularPOMDP p = random_pomdp({2, 3, 2, 3}, rng);
    auto d = trajectory_distribution(p, *random_stochastic(p.spec(), rng));
    CHECK(std::abs(std::accumulate(d.begin(), d.end(), 0.0) - 1.0) < 1e-9);
    CHECK(*std::min_element(d.begin(), d.end()) >= 0.0);
}

TEST_CASE("tv_distance basic values") {
    TabularPOMDP a = single_step(0.9), b = single_step(0.1);
    auto u = HistoryPolicy::uniform(a.spec());
    CHECK(std::abs(tv_distance(a, b, *u) - 0.8) < 1e-14);
    CHECK(tv_distance(a, a, *u) == 0.0);
    Rng rng(4);
    TabularPOMDP p = random_pomdp({2, 2, 2, 3}, rng), q = random_pomdp({2, 2, 2, 3}, rng);
    auto pol = random_stochastic(p.spec(), rng);
    CHECK(tv_distance(p, q, *pol) == doctest::Approx(tv_distance(q, p, *pol)).epsilon(1e-15));
}

TEST_CASE("policy_value basic values") {
    Rng rng(6);
    TabularPOMDP p = random_pomdp({2, 2, 2, 3}, rng);
    auto u = HistoryPolicy::uniform(p.spec());
    CHECK(policy_value(p.with_rewards(std::vector<std::vector<double>>(3, {0.0, 0.0})), *u) == 0.0);
    CHECK(policy_value(p.with_rewards(std::vector<std::vector<double>>(3, {1.0, 1.0})), *u) ==
          doctest::Approx(3.0).epsilon(1e-12));
    auto [pa, pb] = counterexample_pomdps(1);
    CHECK(std::abs(policy_value(pa.with_rewards({{1.0, 0.0}}), *HistoryPolicy::uniform(pa.spec())) - 0.5) < 1e-14);
}

TEST_CASE("optimal_plan on POMDP-B with a terminal reward") {
    auto [pa, pb] = counterexample_pomdps(2);
    TabularPOMDP m = pb.with_rewards({{0.0, 0.0}, {1.0, 0.0}});
    Plan plan = optimal_plan(m);
    CHECK(plan.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(policy_value(m, *plan.policy) == doctest::Approx(plan.value).epsilon(1e-12));
    for (const auto& pol : all_deterministic(m.spec())) CHECK(policy_value(m, *pol) <= plan.value + 1e-12);
}

TEST_CASE("optimal_plan with zero rewards picks the lowest actions") {
    Rng rng(9);
    TabularPOMDP p = random_pomdp({2, 2, 3, 2}, rng).with_rewards({{0.0, 0.0}, {0.0, 0.0}});
    Plan plan = optimal_plan(p);
    CHECK(plan.value == 0.0);
    for (int o = 0; o < 2; ++o) CHECK(plan.policy->action(1, 0, o) == 0);
}

TEST_CASE("optimal_plan dominates random policies and matches its own value") {
    Rng rng(10);
    for (int trial = 0; trial < 5; ++trial) {
        TabularPOMDP p = random_pomdp({3, 2, 2, 4}, rng);
        CondTable t = cond_table(p);
        Plan plan = optimal_plan(t);
        CHECK(std::abs(policy_value(t, *plan.policy) - plan.value) < 1e-9);
        for (int k = 0; k < 20; ++k) CHECK(policy_value(t, *random_stochastic(p.spec(), rng)) <= plan.value + 1e-12);
    }
}

TEST_CASE("optimal value is invariant to consistent relabeling of observations") {
    Rng rng(12);
    TabularPOMDP p = random_pomdp({2, 3, 2, 3}, rng);
    std::vector<Eigen::MatrixXd> obs = p.emissions();
    auto R = p.rewards();
    const int perm[3] = {2, 0, 1};
    for (int h = 0; h < 3; ++h) {
        Eigen::MatrixXd o2 = obs[h];
        std::vector<double> r2 = R[h];
        for (int o = 0; o < 3; ++o) {
            o2.row(perm[o]) = obs[h].row(o);
            r2[perm[o]] = R[h][o];
        }
        obs[h] = o2;
        R[h] = r2;
    }
    TabularPOMDP q(p.spec(), p.mu1(), p.transitions(), obs, R);
    CHECK(optimal_plan(q).value == doctest::Approx(optimal_plan(p).value).epsilon(1e-12));
}

TEST_CASE("max_tv_plan matches exhaustive enumeration") {
    Rng rng(13);
    for (int trial = 0; trial < 3; ++trial) {
        EpisodeSpec sp{2, 2, 2, 2};
        TabularPOMDP p = random_pomdp(sp, rng), q = random_pomdp(sp, rng);
        CondTable tp = cond_table(p), tq = cond_table(q);
        Plan plan = max_tv_plan(tp, tq);
        double best = 0.0;
        for (const auto& pol : all_deterministic(sp)) best = std::max(best, tv_distance(tp, tq, *pol));
        CHECK(std::abs(plan.value - best) < 1e-12);
        CHECK(std::abs(tv_distance(tp, tq, *plan.policy) - plan.value) < 1e-12);
        CHECK(plan.value >= tv_distance(tp, tq, *HistoryPolicy::uniform(sp)) - 1e-12);
        CHECK(plan.value <= 1.0);
    }
    TabularPOMDP a = single_step(0.9), b = single_step(0.3);
    CHECK(std::abs(max_tv_plan(a, b).value - tv_distance(a, b, *HistoryPolicy::uniform(a.spec()))) < 1e-14);
    CHECK(max_tv_plan(a, a).value == 0.0);
}

TEST_CASE("CondTable CSV export writes one row per history") {
    auto [pa, pb] = counterexample_pomdps(2);
    CondTable t = cond_table(pa);
    const std::string path = "cond_table_test.csv";
    t.write_csv(path);
    std::ifstream in(path);
    int lines = 0;
    for (std::string s; std::getline(in, s);) ++lines;
    CHECK(lines == 1 + 1 + 2 + 4);
    std::remove(path.c_str());
}
