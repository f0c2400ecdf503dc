#include "omle/gamma.hpp"

#include <cmath>
#include <limits>

namespace omle {

namespace {

int effective_kind(const PsrRep& rep, int h, int kind) { return h + 1 >= rep.spec.H ? 1 : kind; }

void check_step(const PsrRep& rep, int h, int kind) {
    if (h < 1 || h > rep.spec.H - 1) throw InvalidModel("weight vectors are defined for h in [1, H-1]");
    if (kind != 1 && kind != 2) throw InvalidModel("weight vector kind must be 1 or 2");
}

// π of the partial future (o1, a1, q): actions of every pair, nothing after the final observation.
double partial_prob(const HistoryPolicy& pol, const EpisodeSpec& fs, int o1, int a1, const CoreTest& q) {
    double p = pol.prob(1, 0, o1, a1);
    std::uint64_t prefix = static_cast<std::uint64_t>(o1 * fs.A + a1);
    for (int k = 0; k + 1 < q.length() && p > 0.0; ++k) {
        p *= pol.prob(k + 2, prefix, q.obs[k], q.acts[k]);
        prefix = prefix * fs.pairs() + static_cast<std::uint64_t>(q.obs[k] * fs.A + q.acts[k]);
    }
    return p;
}

struct TrieResult {
    double value = 0.0;
    std::vector<std::vector<int>> acts;
};

// Backward recursion over the future trie for one coordinate.
TrieResult trie_max(const EpisodeSpec& fs, const std::vector<std::vector<double>>& wo,
                    const std::vector<std::vector<double>>& wa) {
    const int Hf = fs.H, O = fs.O, A = fs.A;
    TrieResult res;
    res.acts.resize(Hf);
    std::vector<double> next;
    for (int d = Hf; d >= 1; --d) {
        const std::uint64_t nodes = fs.tree_size(d - 1) * static_cast<std::uint64_t>(O);
        std::vector<double> cur(nodes);
        res.acts[d - 1].assign(nodes, 0);
        for (std::uint64_t n = 0; n < nodes; ++n) {
            const std::uint64_t p = n / O;
            const int o = static_cast<int>(n % O);
            double best = -std::numeric_limits<double>::infinity();
            int ba = 0;
            for (int a = 0; a < A; ++a) {
                double v = wa[d - 1].empty() ? 0.0 : wa[d - 1][n * A + a];
                if (d < Hf) {
                    const std::uint64_t child = (p * fs.pairs() + static_cast<std::uint64_t>(o * A + a)) * O;
                    for (int o2 = 0; o2 < O; ++o2) v += next[child + o2];
                }
                if (v > best + 1e-15) {
                    best = v;
                    ba = a;
                }
            }
            cur[n] = best + (wo[d - 1].empty() ? 0.0 : wo[d - 1][n]);
            res.acts[d - 1][n] = ba;
        }
        next = std::move(cur);
    }
    for (int o = 0; o < O; ++o) res.value += next[o];
    return res;
}

}  // namespace

EpisodeSpec future_spec(const EpisodeSpec& spec, int h) { return EpisodeSpec{1, spec.O, spec.A, spec.H - h}; }

Eigen::MatrixXd weight_vectors(const PsrRep& rep, int h, int kind) {
    check_step(rep, h, kind);
    const auto& sp = rep.spec;
    if (effective_kind(rep, h, kind) == 2) {
        const int nq = rep.dim(h + 1);
        Eigen::MatrixXd W(sp.O * sp.A * nq, rep.dim(h));
        for (int o = 0; o < sp.O; ++o)
            for (int a = 0; a < sp.A; ++a) W.middleRows((o * sp.A + a) * nq, nq) = rep.M[h][o][a];
        return W;
    }
    const EpisodeSpec fs = future_spec(sp, h);
    const std::uint64_t n = fs.leaves();
    Eigen::MatrixXd W(static_cast<Eigen::Index>(n), rep.dim(h));
    for (std::uint64_t idx = 0; idx < n; ++idx) {
        const Trajectory w = decode_history(fs, idx, fs.H);
        Eigen::RowVectorXd row = rep.phiH[w.obs.back()][w.acts.back()].transpose();
        for (int k = fs.H - 2; k >= 0; --k) row = row * rep.M[h + k][w.obs[k]][w.acts[k]];
        W.row(static_cast<Eigen::Index>(idx)) = row;
    }
    return W;
}

double gamma_objective(const PsrRep& rep, int h, int kind, const Eigen::VectorXd& x, const HistoryPolicy& policy) {
    check_step(rep, h, kind);
    const EpisodeSpec fs = future_spec(rep.spec, h);
    if (!fs.same_interface(policy.spec())) throw InvalidModel("future policy must live on the future spec");
    const Eigen::MatrixXd W = weight_vectors(rep, h, kind);
    const Eigen::VectorXd v = W * x;
    double total = 0.0;
    if (effective_kind(rep, h, kind) == 1) {
        for (Eigen::Index idx = 0; idx < W.rows(); ++idx)
            total += policy.trajectory_prob(decode_history(fs, static_cast<std::uint64_t>(idx), fs.H)) *
                     std::abs(v[idx]);
        return total;
    }
    const auto& Q = rep.tests.Q[h + 1];
    const int nq = static_cast<int>(Q.size());
    for (int o = 0; o < fs.O; ++o)
        for (int a = 0; a < fs.A; ++a)
            for (int i = 0; i < nq; ++i)
                total += partial_prob(policy, fs, o, a, Q[i]) * std::abs(v[(o * fs.A + a) * nq + i]);
    return total;
}

nlohmann::json GammaReport::to_json() const {
    return {{"gammaInv", gamma_inv}, {"gamma", std::isinf(gamma) ? nlohmann::json("inf") : nlohmann::json(gamma)},
            {"h", h},          {"kind", kind},
            {"coord", coord},  {"perStep", per_h}};
}

GammaReport gamma_well_conditioned(const PsrRep& rep) {
    rep.validate();
    const auto& sp = rep.spec;
    GammaReport out;
    out.gamma = std::numeric_limits<double>::infinity();
    for (int h = 1; h <= sp.H - 1; ++h) {
        const EpisodeSpec fs = future_spec(sp, h);
        double step_best = 0.0;
        for (int kind = 1; kind <= 2; ++kind) {
            if (kind == 2 && effective_kind(rep, h, 2) == 1) continue;
            const Eigen::MatrixXd W = weight_vectors(rep, h, kind).cwiseAbs();
            std::vector<std::vector<double>> wo(fs.H), wa(fs.H);
            for (int j = 0; j < rep.dim(h); ++j) {
                if (kind == 1) {
                    wa[fs.H - 1].assign(W.rows(), 0.0);
                    for (Eigen::Index r = 0; r < W.rows(); ++r) wa[fs.H - 1][r] = W(r, j);
                } else {
                    const auto& Q = rep.tests.Q[h + 1];
                    const int nq = static_cast<int>(Q.size());
                    for (int d = 0; d < fs.H; ++d) wo[d].clear();
                    for (int o = 0; o < sp.O; ++o)
                        for (int a = 0; a < sp.A; ++a)
                            for (int i = 0; i < nq; ++i) {
                                const CoreTest& q = Q[i];
                                const int d = q.length() + 1;
                                std::uint64_t p = static_cast<std::uint64_t>(o * sp.A + a);
                                for (int k = 0; k + 1 < q.length(); ++k)
                                    p = p * fs.pairs() + static_cast<std::uint64_t>(q.obs[k] * sp.A + q.acts[k]);
                                if (wo[d - 1].empty())
                                    wo[d - 1].assign(fs.tree_size(d - 1) * static_cast<std::uint64_t>(sp.O), 0.0);
                                wo[d - 1][p * sp.O + q.obs.back()] += W((o * sp.A + a) * nq + i, j);
                            }
                }
                TrieResult tr = trie_max(fs, wo, wa);
                step_best = std::max(step_best, tr.value);
                if (tr.value > out.gamma_inv || !out.policy) {
                    out.gamma_inv = tr.value;
                    out.h = h;
                    out.kind = kind;
                    out.coord = j;
                    out.policy = HistoryPolicy::deterministic(fs, tr.acts);
                }
            }
        }
        out.per_h.push_back(step_best);
    }
    if (out.policy) out.gamma = out.gamma_inv > 0.0 ? 1.0 / out.gamma_inv : std::numeric_limits<double>::infinity();
    return out;
}

double gamma_random_probes(const PsrRep& rep, int n, Rng& rng) {
    const auto& sp = rep.spec;
    if (sp.H < 2) return 0.0;
    double best = 0.0;
    for (int t = 0; t < n; ++t) {
        const int h = 1 + static_cast<int>(rng.uniform() * (sp.H - 1));
        const int kind = 1 + (rng.uniform() < 0.5 ? 0 : 1);
        const auto mags = dirichlet_ones(rng, rep.dim(h));
        Eigen::VectorXd x(rep.dim(h));
        for (int i = 0; i < rep.dim(h); ++i) x[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * mags[i];
        const PolicyPtr pol = random_stochastic_policy(future_spec(sp, h), rng);
        best = std::max(best, gamma_objective(rep, h, kind, x, *pol));
    }
    return best;
}

}  // namespace omle
