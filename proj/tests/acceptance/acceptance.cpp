#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "omle/exact.hpp"
#include "omle/experiment.hpp"
#include "omle/gamma.hpp"
#include "omle/l1.hpp"
#include "omle/psr.hpp"

#ifndef OMLE_CONFIG_DIR
#define OMLE_CONFIG_DIR "configs"
#endif

using namespace omle;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

ExperimentConfig load_config(const std::string& name) {
    std::ifstream f(std::string(OMLE_CONFIG_DIR) + "/" + name);
    if (!f) throw MissingData("cannot open config " + name);
    return ExperimentConfig::from_json(nlohmann::json::parse(f));
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s / static_cast<double>(hi - lo);
}

/** The fixed 20-model corpus: S, O, A in [1, 3], H in [1, 4]. */
std::vector<TabularPOMDP> psr_corpus() {
    Rng rng(20240);
    std::vector<TabularPOMDP> out;
    for (int i = 0; i < 20; ++i) {
        const EpisodeSpec sp{1 + i % 3, 1 + (i / 3) % 3, 1 + (i / 2) % 3, 1 + (i * 3 + 1) % 4};
        out.push_back(random_pomdp(sp, rng));
    }
    return out;
}

Outcome psr_reconstruction() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (const auto& p : psr_corpus()) {
        const CondTable t = cond_table(p);
        const SystemDynamics sd = SystemDynamics::from_table(t);
        const SelfConsistentPsr psr = build_self_consistent_psr(sd, select_core_tests(sd), kRankTol, 1e300);
        const PsrCheck ck = verify_psr(psr.rep, t);
        worst = std::max({worst, ck.psr1, ck.psr2});
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-8 && secs < 30.0, fmt("max |P_psr - P| = %.3g over 20 models (tol 1e-8), %.2f s (limit 30 s)", worst, secs)};
}

Outcome oom_bounds() {
    double flow = 0.0, prob = 0.0, up = -1e300, bnorm = 0.0, b0_excess = -1e300;
    for (const auto& p : psr_corpus()) {
        const OomRep oom = build_oom(build_system_dynamics(p), kRankTol, 1e300);
        flow = std::max(flow, oom.check.flow_residual);
        prob = std::max(prob, oom.check.prob_residual);
        up = std::max(up, oom.check.max_upsilon_excess);
        bnorm = std::max(bnorm, oom.check.max_B_norm);
        b0_excess = std::max(b0_excess, std::abs(oom.b0) - oom.check.b0_bound);
    }
    const bool pass = flow <= 1e-8 && prob <= 1e-8 && up <= 1e-8 && bnorm <= 1.0 + 1e-9 && b0_excess <= 1e-8;
    return {pass, fmt("max||B||=%.12g, |b0|-sqrt(A^H)=%.3g, upsilon excess=%.3g, flow/prob residual=%.3g", bnorm,
                      b0_excess, up, std::max(flow, prob))};
}

Outcome l1_inverse_bound() {
    const auto t0 = Clock::now();
    Rng rng(31337);
    int done = 0, tries = 0;
    double resid = 0.0, slack = 1e300;
    while (done < 50 && tries < 10000) {
        ++tries;
        const int S = 1 + static_cast<int>(rng.uniform() * 4);
        const int O = S + static_cast<int>(rng.uniform() * (9 - S));
        Eigen::MatrixXd M(O, S);
        for (int s = 0; s < S; ++s) M.col(s) = dirichlet_column(rng, O);
        const double alpha = alpha_of_matrix(M).alpha;
        if (alpha <= 1e-6) continue;
        const L1Inverse g = l1_min_pseudoinverse(M);
        resid = std::max(resid, (g.G * M - Eigen::MatrixXd::Identity(S, S)).cwiseAbs().maxCoeff());
        slack = std::min(slack, S / alpha + 1e-6 - g.norm);
        ++done;
    }
    const double secs = seconds_since(t0);
    return {done == 50 && resid <= 1e-8 && slack >= 0.0 && secs < 60.0,
            fmt("%g matrices: max|GO-I|=%.3g, min(S/alpha + 1e-6 - ||G||_1)=%.3g, %.2f s (limit 60 s)", done, resid,
                slack, secs)};
}

Outcome gamma_checks() {
    const auto [pa, pb] = counterexample_pomdps(3);
    const Decoder prev = [](int h, const Trajectory& z) { return h == 1 ? 0 : z.acts.back(); };
    check_decoder(pb, prev, 1);
    const double gb = gamma_well_conditioned(pomdp_to_psr_decodable(pb, prev, 1).rep).gamma_inv;
    const ConstructedPsr ca = pomdp_to_psr_observable(pa, 1);
    const double ga = gamma_well_conditioned(ca.rep).gamma_inv;
    const double bound = 8.0 * pa.spec().S / ca.alpha;
    return {gb <= 1.0 + 1e-9 && ga <= bound,
            fmt("POMDP-B 1/gamma=%.12g (<= 1+1e-9); POMDP-A 1/gamma=%.6g (<= 8S/alpha=%.6g, alpha=%.4g)", gb, ga,
                bound, ca.alpha)};
}

Outcome chain_rank() {
    bool pass = true;
    std::string d;
    for (int n : {3, 4, 5}) {
        const FactoredChain c = gen_factored_chain(n);
        pass = pass && c.measured_rank == (1 << (n - 2));
        d += "n=" + std::to_string(n) + ": rank(D_{H-1})=" + std::to_string(c.measured_rank) +
             " vs 2^{H-2}=" + std::to_string(1 << (n - 2)) + "; ";
    }
    return {pass, d};
}

Outcome witness_sandwich() {
    bool pass = true;
    std::string d;
    std::vector<FactoredMdp> truths{gen_factored_chain(3).mdp, gen_factored_chain(4).mdp,
                                    random_factored_mdp(3, 2, 2, 3, {{0, 1}, {1}, {1, 2}}, 3),
                                    random_factored_mdp(2, 3, 2, 3, {{0}, {0, 1}}, 4)};
    int k = 0;
    for (const auto& t : truths) {
        const auto cls = gen_factored_class(t, 6, 0.4, 100 + k++);
        const WitnessFeatures w = factored_witness(t, cls, 0);
        int configs = 0;
        for (const auto& pa : t.parents) configs += static_cast<int>(std::pow(t.X, pa.size()));
        pass = pass && w.pass && w.d == t.A * configs && w.kappa == t.m;
    }
    d += "factored (4 classes): " + std::string(pass ? "sandwich holds" : "violated") + "; ";
    int pairs = 0;
    double worst = 0.0;
    bool bp = true;
    for (std::uint64_t s = 0; pairs < 100; ++s) {
        const auto cls = gen_sparse_bandit_class(4 + static_cast<int>(s % 3), 2, 2, 500 + s);
        const WitnessFeatures w = bandit_witness(cls[0], cls, 0);
        bp = bp && w.pass;
        for (const auto& t : w.terms)
            if (t.theta == 1 && t.theta_p == 1) {
                worst = std::max(worst, std::abs(t.discrepancy - t.inner));
                ++pairs;
            }
    }
    pass = pass && bp && worst <= 1e-12;
    d += fmt("bandit: max |disc - <f,g>| = %.3g over %g pairs (tol 1e-12)", worst, pairs);
    return {pass, d};
}

std::vector<SeedRun> omle_runs;
double omle_secs = 0.0;

const std::vector<SeedRun>& omle_scenario() {
    if (omle_runs.empty()) {
        const auto t0 = Clock::now();
        omle_runs = run_experiment(load_config("omle_acceptance.json"), thread_limit());
        omle_secs = seconds_since(t0);
    }
    return omle_runs;
}

Outcome confidence_soundness() {
    const auto& runs = omle_scenario();
    double alive = 0.0, total = 0.0;
    int opt_bad = 0, tv_bad = 0, aborted = 0;
    for (const auto& r : runs) {
        if (r.csv.empty()) {
            ++aborted;
            continue;
        }
        const CsvTable t = parse_csv(r.csv);
        const auto a = t.series("theta_star_alive"), o = t.series("optimism_ok"), v = t.series("tv_bound_ok");
        for (std::size_t i = 0; i < a.size(); ++i) {
            alive += a[i];
            total += 1.0;
            opt_bad += a[i] == 1.0 && o[i] == 0.0;
            tv_bad += v[i] == 0.0;
        }
    }
    const double rate = total > 0 ? alive / total : 0.0;
    return {aborted == 0 && runs.size() == 50 && rate >= 0.95 && opt_bad == 0 && tv_bad == 0 && omle_secs < 600.0,
            fmt("theta* alive %.4f (>= 0.95), optimism failures %g, sum TV^2 > 10 beta at %g iterations, %.1f s",
                rate, opt_bad, tv_bad, omle_secs)};
}

Outcome omle_trend() {
    std::vector<double> first, last;
    for (const auto& r : omle_scenario()) {
        if (r.csv.empty()) continue;
        const auto s = parse_csv(r.csv).series("suboptimality");
        if (s.size() < 200) continue;
        first.push_back(mean_of(s, 0, 50));
        last.push_back(mean_of(s, 150, 200));
    }
    if (first.empty()) return {false, "no complete runs"};
    const double mf = median(first), ml = median(last);
    return {first.size() == 50 && ml < 0.5 * mf,
            fmt("median over seeds: mean subopt k=151..200 is %.4g vs 0.5 x k=1..50 mean %.4g", ml, 0.5 * mf)};
}

std::vector<SeedRun> rf20, rf200;

Outcome reward_free_trend() {
    rf20 = run_experiment(load_config("reward_free_k20.json"), thread_limit());
    rf200 = run_experiment(load_config("reward_free_k200.json"), thread_limit());
    std::vector<double> e20, e200;
    bool loss_ok = true;
    double worst_ratio = 0.0;
    for (const auto* runs : {&rf20, &rf200})
        for (const auto& r : *runs) {
            if (!r.summary.contains("planningLoss")) {
                loss_ok = false;
                continue;
            }
            const double loss = r.summary["planningLoss"], bound = r.summary["planningBound"];
            loss_ok = loss_ok && loss <= bound + 1e-9;
            if (bound > 0) worst_ratio = std::max(worst_ratio, loss / bound);
            (runs == &rf20 ? e20 : e200).push_back(r.summary["tvError"].get<double>());
        }
    if (e20.empty() || e200.empty()) return {false, "no completed reward-free runs"};
    const double m20 = median(e20), m200 = median(e200);
    return {loss_ok && m200 < 0.5 * m20,
            fmt("median final TV error K=200 %.4g vs 0.5 x K=20 %.4g; worst planning loss / (2H TV) = %.3g", m200,
                0.5 * m20, worst_ratio)};
}

Outcome sampling_agreement() {
    Rng rng(777);
    const auto [pa, pb] = counterexample_pomdps(3);
    std::vector<std::pair<TabularPOMDP, PolicyPtr>> cases;
    cases.emplace_back(random_pomdp({2, 2, 2, 2}, rng), nullptr);
    cases.emplace_back(random_pomdp({3, 2, 2, 3}, rng), nullptr);
    cases.emplace_back(random_pomdp({2, 3, 1, 3}, rng), nullptr);
    cases.emplace_back(pa, nullptr);
    cases.emplace_back(pb, nullptr);
    const int N = 100000;
    double worst_z = 0.0;
    bool pass = true;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const auto& model = cases[c].first;
        const PolicyPtr pi = random_stochastic_policy(model.spec(), rng);
        const std::vector<double> p = trajectory_distribution(model, *pi);
        std::vector<double> counts(p.size(), 0.0);
        Rng draw(9000 + c);
        for (int i = 0; i < N; ++i) {
            const Trajectory t = sample_trajectory(model, *pi, draw);
            counts[t.prefix_index(model.spec(), model.spec().H)] += 1.0;
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double sd = std::sqrt(N * p[i] * (1.0 - p[i]));
            const double dev = std::abs(counts[i] - N * p[i]);
            if (sd == 0.0) {
                pass = pass && dev == 0.0;
                continue;
            }
            worst_z = std::max(worst_z, dev / sd);
            pass = pass && dev <= 3.0 * sd;
        }
    }
    return {pass, fmt("5 (model, policy) pairs, 1e5 draws each: max |count - Np| / sigma = %.3f (limit 3)", worst_z)};
}

Outcome determinism() {
    const auto& first = omle_scenario();
    const auto again = run_experiment(load_config("omle_acceptance.json"), 1);
    const auto rf_again = run_experiment(load_config("reward_free_k200.json"), 1);
    int same = 0, total = 0;
    for (std::size_t i = 0; i < first.size(); ++i, ++total) same += !first[i].csv.empty() && first[i].csv == again[i].csv;
    for (std::size_t i = 0; i < rf200.size() && i < rf_again.size(); ++i, ++total)
        same += !rf200[i].csv.empty() && rf200[i].csv == rf_again[i].csv;
    return {same == total && total == 70,
            fmt("%g/%g CSVs byte-identical on rerun (single worker vs pool)", same, total)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 psr-reconstruction", psr_reconstruction},
        {"2 oom-bounds", oom_bounds},
        {"3 l1-inverse-bound", l1_inverse_bound},
        {"4 gamma-conditioning", gamma_checks},
        {"5 factored-chain-rank", chain_rank},
        {"6 witness-sandwich", witness_sandwich},
        {"7 confidence-soundness", confidence_soundness},
        {"8 omle-trend", omle_trend},
        {"9 reward-free-trend", reward_free_trend},
        {"10 sampling-agreement", sampling_agreement},
        {"11 determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s  criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
