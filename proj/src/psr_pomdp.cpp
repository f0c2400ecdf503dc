#include <cmath>
#include <functional>

#include "omle/l1.hpp"
#include "omle/psr.hpp"

namespace omle {

namespace {

std::vector<CoreTest> tests_of_length(const EpisodeSpec& sp, int L) {
    std::vector<CoreTest> all = enumerate_tests(sp, L);
    const std::size_t n = sp.tree_size(L - 1) * static_cast<std::uint64_t>(sp.O);
    return std::vector<CoreTest>(all.end() - static_cast<std::ptrdiff_t>(n), all.end());
}

std::uint64_t local_index(const EpisodeSpec& sp, const std::vector<int>& obs, const std::vector<int>& acts) {
    std::uint64_t idx = 0;
    for (std::size_t k = 0; k + 1 < obs.size(); ++k)
        idx = idx * sp.pairs() + static_cast<std::uint64_t>(obs[k] * sp.A + acts[k]);
    return idx * sp.O + static_cast<std::uint64_t>(obs.back());
}

// Row q of Q_h picks the entry (o, a, q) of Q_{h-1}.
Eigen::MatrixXd shift_operator(const EpisodeSpec& sp, const std::vector<CoreTest>& Qh, int prev_dim, int o,
                               int a) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(Qh.size()), prev_dim);
    for (std::size_t i = 0; i < Qh.size(); ++i) {
        std::vector<int> obs{o}, acts{a};
        obs.insert(obs.end(), Qh[i].obs.begin(), Qh[i].obs.end());
        acts.insert(acts.end(), Qh[i].acts.begin(), Qh[i].acts.end());
        M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(local_index(sp, obs, acts))) = 1.0;
    }
    return M;
}

void init_rep(PsrRep& rep, const EpisodeSpec& sp) {
    rep.spec = sp;
    rep.M.assign(sp.H - 1, std::vector<std::vector<Eigen::MatrixXd>>(sp.O, std::vector<Eigen::MatrixXd>(sp.A)));
    rep.phiH.assign(sp.O, std::vector<Eigen::VectorXd>(sp.A));
    for (int o = 0; o < sp.O; ++o)
        for (int a = 0; a < sp.A; ++a) rep.phiH[o][a] = Eigen::VectorXd::Unit(sp.O, o);
}

std::string describe(const Trajectory& t) {
    std::string s;
    for (int k = 0; k < t.length(); ++k) {
        if (k) s += " ";
        s += "o" + std::to_string(t.obs[k]);
        if (k < static_cast<int>(t.acts.size())) s += " a" + std::to_string(t.acts[k]);
    }
    return s;
}

// Decoder input at step h: the last min(m, h-1) pairs of the prefix and o_h.
Trajectory decoder_input(const Trajectory& prefix, int o, int m) {
    const int k = std::min(m, prefix.length());
    Trajectory z;
    z.obs.assign(prefix.obs.end() - k, prefix.obs.end());
    z.acts.assign(prefix.acts.end() - k, prefix.acts.end());
    z.obs.push_back(o);
    return z;
}

}  // namespace

ConstructedPsr pomdp_to_psr_observable(const TabularPOMDP& p, int m, double alpha_floor) {
    const auto& sp = p.spec();
    const int H = sp.H, O = sp.O, A = sp.A;
    if (m < 1 || m > H) throw InvalidModel("observable construction needs 1 <= m <= H");
    ConstructedPsr out;
    out.alpha = observability_alpha(p, m).alpha;
    if (!(out.alpha > alpha_floor))
        throw NotObservable("m=" + std::to_string(m) + " observability constant is " + std::to_string(out.alpha));
    PsrRep& rep = out.rep;
    init_rep(rep, sp);
    for (int h = 0; h < H; ++h) rep.tests.Q.push_back(tests_of_length(sp, std::min(m, H - h)));
    rep.tests.derive_action_sets();
    rep.psi0 = mstep_matrix(p, 1, m) * p.mu1();
    for (int h = 1; h < H; ++h) {
        if (h <= H - m) {
            const Eigen::MatrixXd Mh = mstep_matrix(p, h, m), Mnext = mstep_matrix(p, h + 1, m);
            const L1Inverse G = l1_min_pseudoinverse(Mh);
            out.inverse_norms.push_back(G.norm);
            for (int o = 0; o < O; ++o) {
                const Eigen::MatrixXd emit = p.Obs(h).row(o).transpose().asDiagonal();
                for (int a = 0; a < A; ++a) rep.M[h - 1][o][a] = Mnext * p.T(h, a) * emit * G.G;
            }
        } else {
            for (int o = 0; o < O; ++o)
                for (int a = 0; a < A; ++a)
                    rep.M[h - 1][o][a] = shift_operator(sp, rep.tests.Q[h], rep.dim(h - 1), o, a);
        }
    }
    rep.validate();
    out.check = verify_psr(rep, cond_table(p));
    return out;
}

void check_decoder(const TabularPOMDP& p, const Decoder& decoder, int m, double tol) {
    const auto& sp = p.spec();
    if (m < 0) throw InvalidModel("decoder window must be nonnegative");
    Trajectory prefix;
    std::function<void(int, const Eigen::VectorXd&)> walk = [&](int h, const Eigen::VectorXd& prior) {
        for (int o = 0; o < sp.O; ++o) {
            const Eigen::VectorXd joint = p.Obs(h).row(o).transpose().cwiseProduct(prior);
            const double po = joint.sum();
            if (!(po > kZeroProb)) continue;
            const Eigen::VectorXd post = joint / po;
            const Trajectory z = decoder_input(prefix, o, m);
            const int s = decoder(h, z);
            if (s < 0 || s >= sp.S || post[s] < 1.0 - tol) {
                Trajectory shown = prefix;
                shown.obs.push_back(o);
                throw DecoderInconsistent("at step " + std::to_string(h) + " history [" + describe(shown) +
                                          "] with suffix [" + describe(z) + "] decodes to state " +
                                          std::to_string(s) + " but its posterior is " +
                                          std::to_string(s >= 0 && s < sp.S ? post[s] : 0.0));
            }
            if (h == sp.H) continue;
            for (int a = 0; a < sp.A; ++a) {
                prefix.obs.push_back(o);
                prefix.acts.push_back(a);
                walk(h + 1, p.T(h, a) * post);
                prefix.obs.pop_back();
                prefix.acts.pop_back();
            }
        }
    };
    walk(1, p.mu1());
}

ConstructedPsr pomdp_to_psr_decodable(const TabularPOMDP& p, const Decoder& decoder, int m) {
    const auto& sp = p.spec();
    const int H = sp.H, O = sp.O, A = sp.A;
    check_decoder(p, decoder, m);
    ConstructedPsr out;
    PsrRep& rep = out.rep;
    init_rep(rep, sp);
    for (int h = 0; h < H; ++h) rep.tests.Q.push_back(tests_of_length(sp, std::min(m + 1, H - h)));
    rep.tests.derive_action_sets();
    rep.psi0.resize(rep.dim(0));
    for (int i = 0; i < rep.dim(0); ++i) {
        const CoreTest& q = rep.tests.Q[0][i];
        Eigen::VectorXd f = p.mu1();
        for (int k = 0; k < q.length(); ++k) {
            f = p.Obs(k + 1).row(q.obs[k]).transpose().cwiseProduct(f);
            if (k + 1 < q.length()) f = p.T(k + 1, q.acts[k]) * f;
        }
        rep.psi0[i] = f.sum();
    }
    for (int h = 1; h < H; ++h) {
        const int L = rep.tests.Q[h].front().length(), Lprev = rep.tests.Q[h - 1].front().length();
        for (int o = 0; o < O; ++o)
            for (int a = 0; a < A; ++a) {
                if (L + 1 == Lprev) {
                    rep.M[h - 1][o][a] = shift_operator(sp, rep.tests.Q[h], rep.dim(h - 1), o, a);
                    continue;
                }
                // Entry (q, q') with q' = [o, a, q_{1:L-1}]: P(o at step h+L | decoded state at h+L-1, action).
                Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rep.dim(h), rep.dim(h - 1));
                for (int i = 0; i < rep.dim(h); ++i) {
                    const CoreTest& q = rep.tests.Q[h][i];
                    std::vector<int> obs{o}, acts;
                    obs.insert(obs.end(), q.obs.begin(), q.obs.end() - 1);
                    if (L >= 2) {
                        acts.push_back(a);
                        acts.insert(acts.end(), q.acts.begin(), q.acts.end() - 1);
                    }
                    Trajectory z;
                    z.obs.assign(obs.end() - (m + 1), obs.end());
                    z.acts.assign(acts.end() - m, acts.end());
                    const int step = h + L - 1;
                    const int s = decoder(step, z);
                    if (s < 0 || s >= sp.S) throw InvalidModel("decoder returned an invalid state");
                    const int act = L >= 2 ? q.acts.back() : a;
                    const double pnext = p.Obs(step + 1).row(q.obs.back()).dot(p.T(step, act).col(s));
                    M(i, static_cast<Eigen::Index>(local_index(sp, obs, acts))) = pnext;
                }
                rep.M[h - 1][o][a] = M;
            }
    }
    rep.validate();
    out.check = verify_psr(rep, cond_table(p));
    return out;
}

}  // namespace omle
