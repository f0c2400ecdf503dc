#include "omle/policy.hpp"

#include <cmath>

namespace omle {

namespace {

std::uint64_t nodes_at(const EpisodeSpec& spec, int h) {
    return spec.tree_size(h - 1, UINT64_MAX) * static_cast<std::uint64_t>(spec.O);
}

}  // namespace

PolicyPtr HistoryPolicy::uniform(const EpisodeSpec& spec) {
    auto* p = new HistoryPolicy();
    p->kind_ = Kind::StochasticTree;
    p->spec_ = spec;
    p->uniform_ = true;
    return PolicyPtr(p);
}

PolicyPtr HistoryPolicy::deterministic(const EpisodeSpec& spec, std::vector<std::vector<int>> actions) {
    auto* p = new HistoryPolicy();
    p->kind_ = Kind::DeterministicTree;
    p->spec_ = spec;
    p->actions_ = std::move(actions);
    PolicyPtr out(p);
    p->check_tables();
    return out;
}

PolicyPtr HistoryPolicy::from_rule(const EpisodeSpec& spec,
                                   const std::function<int(int, std::uint64_t, int)>& rule) {
    if (nodes_at(spec, spec.H) > kDefaultCapLeaves)
        throw CapExceeded("rule policy needs more than " + std::to_string(kDefaultCapLeaves) + " decision nodes");
    std::vector<std::vector<int>> acts(spec.H);
    for (int h = 1; h <= spec.H; ++h) {
        const std::uint64_t n = nodes_at(spec, h);
        acts[h - 1].resize(n);
        for (std::uint64_t k = 0; k < n; ++k)
            acts[h - 1][k] = rule(h, k / spec.O, static_cast<int>(k % spec.O));
    }
    return deterministic(spec, std::move(acts));
}

PolicyPtr HistoryPolicy::stochastic(const EpisodeSpec& spec, std::vector<std::vector<double>> probs) {
    auto* p = new HistoryPolicy();
    p->kind_ = Kind::StochasticTree;
    p->spec_ = spec;
    p->probs_ = std::move(probs);
    PolicyPtr out(p);
    p->check_tables();
    return out;
}

PolicyPtr HistoryPolicy::composite(PolicyPtr base, int switch_step, std::vector<int> seq) {
    const auto& sp = base->spec();
    if (switch_step < 0 || switch_step > sp.H)
        throw InvalidModel("composite switch step out of range");
    if (switch_step + static_cast<int>(seq.size()) > sp.H)
        throw InvalidModel("composite action sequence runs past the horizon");
    for (int a : seq)
        if (a < 0 || a >= sp.A) throw InvalidModel("composite action out of range");
    auto* p = new HistoryPolicy();
    p->kind_ = Kind::Composite;
    p->spec_ = sp;
    p->base_ = std::move(base);
    p->switch_step_ = switch_step;
    p->seq_ = std::move(seq);
    return PolicyPtr(p);
}

void HistoryPolicy::check_tables() const {
    if (kind_ == Kind::DeterministicTree) {
        if (static_cast<int>(actions_.size()) != spec_.H) throw InvalidModel("policy needs H action tables");
        for (int h = 1; h <= spec_.H; ++h) {
            if (actions_[h - 1].size() != nodes_at(spec_, h)) throw InvalidModel("policy table size mismatch");
            for (int a : actions_[h - 1])
                if (a < 0 || a >= spec_.A) throw InvalidModel("policy action out of range");
        }
    } else if (kind_ == Kind::StochasticTree && !uniform_) {
        if (static_cast<int>(probs_.size()) != spec_.H) throw InvalidModel("policy needs H tables");
        for (int h = 1; h <= spec_.H; ++h) {
            const auto& t = probs_[h - 1];
            if (t.size() != nodes_at(spec_, h) * spec_.A) throw InvalidModel("policy table size mismatch");
            for (std::size_t k = 0; k < t.size(); k += spec_.A) {
                double s = 0.0;
                for (int a = 0; a < spec_.A; ++a) {
                    if (!(t[k + a] >= 0.0)) throw InvalidModel("negative action probability");
                    s += t[k + a];
                }
                if (std::abs(s - 1.0) > 1e-9) throw InvalidModel("action distribution does not sum to 1");
            }
        }
    }
}

bool HistoryPolicy::is_deterministic() const {
    if (kind_ == Kind::DeterministicTree) return true;
    if (kind_ == Kind::Composite) return false;
    if (uniform_) return spec_.A == 1;
    for (const auto& t : probs_)
        for (double x : t)
            if (x != 0.0 && x != 1.0) return false;
    return true;
}

void HistoryPolicy::probs(int h, std::uint64_t prefix, int o, double* out) const {
    const int A = spec_.A;
    switch (kind_) {
        case Kind::DeterministicTree: {
            const int a = actions_[h - 1][prefix * spec_.O + o];
            for (int b = 0; b < A; ++b) out[b] = (b == a) ? 1.0 : 0.0;
            return;
        }
        case Kind::StochasticTree: {
            if (uniform_) {
                for (int b = 0; b < A; ++b) out[b] = 1.0 / A;
                return;
            }
            const double* row = probs_[h - 1].data() + (prefix * spec_.O + o) * A;
            for (int b = 0; b < A; ++b) out[b] = row[b];
            return;
        }
        case Kind::Composite: {
            const int k = static_cast<int>(seq_.size());
            if (h < switch_step_) {
                base_->probs(h, prefix, o, out);
            } else if (h > switch_step_ && h <= switch_step_ + k) {
                const int a = seq_[h - switch_step_ - 1];
                for (int b = 0; b < A; ++b) out[b] = (b == a) ? 1.0 : 0.0;
            } else {
                for (int b = 0; b < A; ++b) out[b] = 1.0 / A;
            }
            return;
        }
    }
}

double HistoryPolicy::prob(int h, std::uint64_t prefix, int o, int a) const {
    std::vector<double> p(spec_.A);
    probs(h, prefix, o, p.data());
    return p[a];
}

int HistoryPolicy::action(int h, std::uint64_t prefix, int o) const {
    if (kind_ == Kind::DeterministicTree) return actions_[h - 1][prefix * spec_.O + o];
    std::vector<double> p(spec_.A);
    probs(h, prefix, o, p.data());
    int best = 0;
    for (int a = 1; a < spec_.A; ++a)
        if (p[a] > p[best]) best = a;
    return best;
}

double HistoryPolicy::trajectory_prob(const Trajectory& t) const {
    double p = 1.0;
    std::uint64_t prefix = 0;
    for (int i = 0; i < t.length() && p > 0.0; ++i) {
        p *= prob(i + 1, prefix, t.obs[i], t.acts[i]);
        prefix = prefix * spec_.pairs() + static_cast<std::uint64_t>(t.obs[i] * spec_.A + t.acts[i]);
    }
    return p;
}

PolicyPtr HistoryPolicy::mixture(const std::vector<PolicyPtr>& comps, const std::vector<double>& weights) {
    if (comps.empty() || comps.size() != weights.size()) throw InvalidModel("mixture needs matching weights");
    const EpisodeSpec sp = comps[0]->spec();
    const int O = sp.O, A = sp.A, n = static_cast<int>(comps.size());
    std::vector<std::vector<double>> tables(sp.H);
    // reach[c][prefix]: probability that component c produced the action part of prefix.
    std::vector<std::vector<double>> reach(n, std::vector<double>(1, 1.0));
    std::vector<double> pa(A);
    for (int h = 1; h <= sp.H; ++h) {
        const std::uint64_t np = sp.tree_size(h - 1, UINT64_MAX);
        auto& tab = tables[h - 1];
        tab.assign(np * O * A, 0.0);
        std::vector<std::vector<double>> next(n, std::vector<double>(np * O * A, 0.0));
        for (std::uint64_t pre = 0; pre < np; ++pre) {
            for (int o = 0; o < O; ++o) {
                double denom = 0.0;
                double* row = tab.data() + (pre * O + o) * A;
                for (int c = 0; c < n; ++c) {
                    const double w = weights[c] * reach[c][pre];
                    comps[c]->probs(h, pre, o, pa.data());
                    for (int a = 0; a < A; ++a) {
                        row[a] += w * pa[a];
                        next[c][(pre * O + o) * A + a] = reach[c][pre] * pa[a];
                    }
                    denom += w;
                }
                if (denom > 0.0) {
                    for (int a = 0; a < A; ++a) row[a] /= denom;
                } else {
                    for (int a = 0; a < A; ++a) row[a] = 1.0 / A;
                }
            }
        }
        reach = std::move(next);
    }
    return stochastic(sp, std::move(tables));
}

PolicyPtr random_stochastic_policy(const EpisodeSpec& spec, Rng& rng) {
    std::vector<std::vector<double>> probs(spec.H);
    for (int h = 1; h <= spec.H; ++h) {
        const std::uint64_t n = spec.tree_size(h - 1) * static_cast<std::uint64_t>(spec.O);
        probs[h - 1].reserve(n * spec.A);
        for (std::uint64_t k = 0; k < n; ++k)
            for (double x : dirichlet_ones(rng, spec.A)) probs[h - 1].push_back(x);
    }
    return HistoryPolicy::stochastic(spec, std::move(probs));
}

}  // namespace omle
