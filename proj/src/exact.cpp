#include "omle/exact.hpp"

#include <cmath>
#include <fstream>

namespace omle {

namespace {

constexpr double kTieEps = 1e-14;

void fill_table(const HistoryModel& model, CondTable& tab, int depth, std::uint64_t idx,
                const Eigen::VectorXd& state, double P) {
    const auto& sp = tab.spec;
    const int h = depth + 1;
    const Eigen::VectorXd p = model.obs_probs(h, state);
    for (int o = 0; o < sp.O; ++o) {
        const double po = p[o];
        const double child = P * po;
        if (!(child > 0.0)) continue;
        Eigen::VectorXd next;
        const bool go = h < sp.H;
        for (int a = 0; a < sp.A; ++a) {
            const std::uint64_t cidx = idx * sp.pairs() + static_cast<std::uint64_t>(o * sp.A + a);
            tab.pbar[h][cidx] = child;
            if (go && po > kZeroProb) {
                next = model.advance(h, state, o, a, po);
                fill_table(model, tab, h, cidx, next, child);
            }
        }
    }
}

}  // namespace

CondTable cond_table(const HistoryModel& model, std::uint64_t cap) {
    CondTable tab;
    tab.spec = model.spec();
    const auto& sp = tab.spec;
    sp.leaves(cap);
    tab.pbar.resize(sp.H + 1);
    for (int h = 0; h <= sp.H; ++h) tab.pbar[h].assign(sp.tree_size(h, UINT64_MAX), 0.0);
    tab.pbar[0][0] = 1.0;
    tab.R.assign(sp.H, std::vector<double>(sp.O, 0.0));
    for (int h = 1; h <= sp.H; ++h)
        for (int o = 0; o < sp.O; ++o) tab.R[h - 1][o] = model.reward(h, o);
    fill_table(model, tab, 0, 0, model.initial_state(), 1.0);
    return tab;
}

double CondTable::marginal_residual() const {
    double worst = 0.0;
    const int P = spec.pairs();
    for (int h = 1; h <= spec.H; ++h) {
        const auto& prev = pbar[h - 1];
        const auto& cur = pbar[h];
        for (std::uint64_t i = 0; i < prev.size(); ++i)
            for (int a = 0; a < spec.A; ++a) {
                double s = 0.0;
                for (int o = 0; o < spec.O; ++o) s += cur[i * P + o * spec.A + a];
                worst = std::max(worst, std::abs(s - prev[i]));
            }
    }
    return worst;
}

void CondTable::write_csv(const std::string& path) const {
    std::ofstream out(path);
    out << "depth,index,history,pbar\n";
    out.precision(17);
    for (int h = 0; h <= spec.H; ++h)
        for (std::uint64_t i = 0; i < pbar[h].size(); ++i) {
            Trajectory t = decode_history(spec, i, h);
            out << h << "," << i << ",";
            for (int k = 0; k < h; ++k) out << (k ? " " : "") << t.obs[k] << ":" << t.acts[k];
            out << "," << pbar[h][i] << "\n";
        }
}

std::vector<std::vector<double>> policy_weights(const HistoryPolicy& policy) {
    const auto& sp = policy.spec();
    const int O = sp.O, A = sp.A;
    std::vector<std::vector<double>> w(sp.H + 1);
    w[0] = {1.0};
    std::vector<double> pa(A);
    for (int h = 1; h <= sp.H; ++h) {
        const auto& prev = w[h - 1];
        auto& cur = w[h];
        cur.assign(prev.size() * O * A, 0.0);
        for (std::uint64_t i = 0; i < prev.size(); ++i) {
            if (prev[i] == 0.0) continue;
            for (int o = 0; o < O; ++o) {
                policy.probs(h, i, o, pa.data());
                for (int a = 0; a < A; ++a) cur[(i * O + o) * A + a] = prev[i] * pa[a];
            }
        }
    }
    return w;
}

std::vector<double> trajectory_distribution(const CondTable& table, const HistoryPolicy& policy) {
    auto w = policy_weights(policy);
    std::vector<double> d = table.leaves();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= w[table.spec.H][i];
    return d;
}

std::vector<double> trajectory_distribution(const HistoryModel& model, const HistoryPolicy& policy,
                                            std::uint64_t cap) {
    return trajectory_distribution(cond_table(model, cap), policy);
}

double tv_distance(const CondTable& t1, const CondTable& t2, const HistoryPolicy& policy) {
    if (!t1.spec.same_interface(t2.spec)) throw InvalidModel("tv_distance: spec mismatch");
    auto w = policy_weights(policy);
    const auto& l1 = t1.leaves();
    const auto& l2 = t2.leaves();
    const auto& wl = w[t1.spec.H];
    double s = 0.0;
    for (std::size_t i = 0; i < l1.size(); ++i) s += wl[i] * std::abs(l1[i] - l2[i]);
    return 0.5 * s;
}

double tv_distance(const HistoryModel& m1, const HistoryModel& m2, const HistoryPolicy& policy,
                   std::uint64_t cap) {
    return tv_distance(cond_table(m1, cap), cond_table(m2, cap), policy);
}

double policy_value(const CondTable& table, const HistoryPolicy& policy) {
    const auto& sp = table.spec;
    auto w = policy_weights(policy);
    double v = 0.0;
    for (int h = 1; h <= sp.H; ++h) {
        const auto& pb = table.pbar[h];
        const auto& wh = w[h];
        for (std::uint64_t i = 0; i < pb.size(); ++i) {
            if (pb[i] == 0.0 || wh[i] == 0.0) continue;
            const int o = static_cast<int>((i % sp.pairs()) / sp.A);
            v += pb[i] * wh[i] * table.R[h - 1][o];
        }
    }
    return v;
}

double policy_value(const HistoryModel& model, const HistoryPolicy& policy, std::uint64_t cap) {
    return policy_value(cond_table(model, cap), policy);
}

namespace {

// Backward induction where node (prefix at depth h-1, o_h) has value
// leaf(prefix, o) at depth H and immediate(h, prefix, o) + max_a Σ_o' child otherwise.
template <class Leaf, class Immediate>
Plan backward_plan(const EpisodeSpec& sp, Leaf leaf, Immediate immediate) {
    const int O = sp.O, A = sp.A;
    std::vector<std::vector<int>> acts(sp.H);
    std::vector<double> child;  // values at depth h+1 nodes, index prefix_h * O + o'
    for (int h = sp.H; h >= 1; --h) {
        const std::uint64_t np = sp.tree_size(h - 1, UINT64_MAX);
        std::vector<double> cur(np * O, 0.0);
        acts[h - 1].assign(np * O, 0);
        for (std::uint64_t pre = 0; pre < np; ++pre)
            for (int o = 0; o < O; ++o) {
                const std::uint64_t node = pre * O + o;
                if (h == sp.H) {
                    double best = -1.0;
                    int ba = 0;
                    for (int a = 0; a < A; ++a) {
                        const double v = leaf(pre, o, a);
                        if (v > best + kTieEps) {
                            best = v;
                            ba = a;
                        }
                    }
                    cur[node] = best + immediate(h, pre, o);
                    acts[h - 1][node] = ba;
                } else {
                    double best = -1.0;
                    int ba = 0;
                    for (int a = 0; a < A; ++a) {
                        const std::uint64_t hidx = pre * sp.pairs() + static_cast<std::uint64_t>(o * A + a);
                        double v = 0.0;
                        for (int o2 = 0; o2 < O; ++o2) v += child[hidx * O + o2];
                        if (v > best + kTieEps) {
                            best = v;
                            ba = a;
                        }
                    }
                    cur[node] = best + immediate(h, pre, o);
                    acts[h - 1][node] = ba;
                }
            }
        child = std::move(cur);
    }
    Plan plan;
    for (int o = 0; o < O; ++o) plan.value += child[o];
    plan.policy = HistoryPolicy::deterministic(sp, std::move(acts));
    return plan;
}

}  // namespace

Plan optimal_plan(const CondTable& table) {
    const auto& sp = table.spec;
    auto pb = [&](int h, std::uint64_t pre, int o) {
        return table.pbar[h][pre * sp.pairs() + static_cast<std::uint64_t>(o * sp.A)];
    };
    return backward_plan(
        sp, [&](std::uint64_t, int, int) { return 0.0; },
        [&](int h, std::uint64_t pre, int o) { return pb(h, pre, o) * table.R[h - 1][o]; });
}

Plan optimal_plan(const HistoryModel& model, std::uint64_t cap) { return optimal_plan(cond_table(model, cap)); }

Plan max_tv_plan(const CondTable& t1, const CondTable& t2) {
    if (!t1.spec.same_interface(t2.spec)) throw InvalidModel("max_tv_plan: spec mismatch");
    const auto& sp = t1.spec;
    const auto& l1 = t1.leaves();
    const auto& l2 = t2.leaves();
    Plan p = backward_plan(
        sp,
        [&](std::uint64_t pre, int o, int a) {
            const std::uint64_t i = pre * sp.pairs() + static_cast<std::uint64_t>(o * sp.A + a);
            return 0.5 * std::abs(l1[i] - l2[i]);
        },
        [](int, std::uint64_t, int) { return 0.0; });
    return p;
}

Plan max_tv_plan(const HistoryModel& m1, const HistoryModel& m2, std::uint64_t cap) {
    return max_tv_plan(cond_table(m1, cap), cond_table(m2, cap));
}

Trajectory sample_trajectory(const HistoryModel& model, const HistoryPolicy& policy, Rng& rng) {
    const auto& sp = model.spec();
    Trajectory t;
    t.obs.resize(sp.H);
    t.acts.resize(sp.H);
    Eigen::VectorXd st = model.initial_state();
    std::uint64_t prefix = 0;
    std::vector<double> pa(sp.A);
    for (int h = 1; h <= sp.H; ++h) {
        const Eigen::VectorXd p = model.obs_probs(h, st);
        const int o = rng.categorical_vec(p, sp.O);
        policy.probs(h, prefix, o, pa.data());
        const int a = rng.categorical_vec(pa, sp.A);
        t.obs[h - 1] = o;
        t.acts[h - 1] = a;
        if (h < sp.H) st = model.advance(h, st, o, a, p[o]);
        prefix = prefix * sp.pairs() + static_cast<std::uint64_t>(o * sp.A + a);
    }
    return t;
}

Trajectory sample_trajectory(const HistoryModel& model, const HistoryPolicy& policy, std::uint64_t seed) {
    Rng rng(seed);
    return sample_trajectory(model, policy, rng);
}

}  // namespace omle
