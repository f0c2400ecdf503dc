#include <algorithm>
#include <cmath>
#include <limits>

#include "omle/sail.hpp"

namespace omle {

namespace {

constexpr int kMaxSignStates = 20;

void check_index(int true_index, std::size_t n) {
    if (n == 0) throw InvalidModel("witness class is empty");
    if (true_index < 0 || static_cast<std::size_t>(true_index) >= n) throw InvalidModel("true index out of range");
}

void check_same_structure(const FactoredMdp& a, const FactoredMdp& b) {
    if (a.m != b.m || a.X != b.X || a.A != b.A || a.H != b.H || a.parents != b.parents)
        throw InvalidModel("factored class members disagree on structure");
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/** Aggregates an S×A occupancy into the factored coordinates offset_i + z·A + â. */
Eigen::VectorXd factored_coords(const FactoredMdp& f, const Eigen::MatrixXd& occ) {
    int d = 0;
    for (int i = 0; i < f.m; ++i) d += f.parent_configs(i) * f.A;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    const int S = static_cast<int>(occ.rows());
    int offset = 0;
    for (int i = 0; i < f.m; ++i) {
        for (int s = 0; s < S; ++s) {
            const int z = f.parent_index(s, i);
            for (int a = 0; a < f.A; ++a) out[offset + z * f.A + a] += occ(s, a);
        }
        offset += f.parent_configs(i) * f.A;
    }
    return out;
}

Eigen::VectorXd factored_gaps(const FactoredMdp& truth, const FactoredMdp& other, int h) {
    std::vector<double> g;
    for (int i = 0; i < truth.m; ++i) {
        const Eigen::MatrixXd& P = truth.P[h - 1][i];
        const Eigen::MatrixXd& Q = other.P[h - 1][i];
        for (Eigen::Index c = 0; c < P.cols(); ++c) g.push_back((P.col(c) - Q.col(c)).lpNorm<1>());
    }
    return Eigen::Map<Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

double sum_abs_inner(const std::vector<Eigen::VectorXd>& fs, const std::vector<Eigen::VectorXd>& gs) {
    double s = 0.0;
    for (const auto& f : fs)
        for (const auto& g : gs) {
            if (f.size() != g.size()) throw FeatureMismatch("SAIL feature dimensions disagree");
            s += std::abs(f.dot(g));
        }
    return s;
}

double norm_product(const std::vector<Eigen::VectorXd>& fs, const std::vector<Eigen::VectorXd>& gs) {
    double nf = 0.0, ng = 0.0;
    for (const auto& f : fs) nf += f.lpNorm<1>();
    for (const auto& g : gs) ng += g.lpNorm<Eigen::Infinity>();
    return nf * ng;
}

/** max over y in {±1}^S of ‖Σ_s y_s ψ(s)‖₁. */
double psi_norm(const Eigen::MatrixXd& psi) {
    const int S = static_cast<int>(psi.rows());
    if (S > kMaxSignStates) throw CapExceeded("C_psi sign enumeration supports S <= 20");
    double best = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << S); ++mask) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(psi.cols());
        for (int s = 0; s < S; ++s) v += ((mask >> s) & 1 ? -1.0 : 1.0) * psi.row(s).transpose();
        best = std::max(best, v.lpNorm<1>());
    }
    return best;
}

void finalize_certificate(SailCertificate& c, double tol) {
    c.min_pair_margin = std::numeric_limits<double>::infinity();
    c.min_self_margin = std::numeric_limits<double>::infinity();
    for (const auto& p : c.pairs) {
        c.min_pair_margin = std::min(c.min_pair_margin, p.margin);
        if (c.violation.empty() && p.margin < -tol)
            c.violation = "lower display fails at (" + std::to_string(p.theta) + ", " + std::to_string(p.theta_p) +
                          "): TV sum " + std::to_string(p.tv_sum) + " < " + std::to_string(p.rhs);
    }
    for (const auto& s : c.selfs) {
        c.min_self_margin = std::min(c.min_self_margin, s.margin);
        if (c.violation.empty() && s.margin < -tol)
            c.violation = "upper display fails at theta " + std::to_string(s.theta) + ": TV " + std::to_string(s.tv) +
                          " > " + std::to_string(s.rhs);
    }
    c.norm_margin = c.B - c.max_norm;
    if (c.violation.empty() && c.norm_margin < -tol)
        c.violation = "normalization fails: " + std::to_string(c.max_norm) + " > B = " + std::to_string(c.B);
    c.pass = c.violation.empty();
}

}  // namespace

void WitnessFeatures::finalize(double tol) {
    min_lower_margin = std::numeric_limits<double>::infinity();
    min_upper_margin = std::numeric_limits<double>::infinity();
    max_norm = 0.0;
    for (const auto& t : terms) {
        min_lower_margin = std::min(min_lower_margin, t.lower_margin);
        min_upper_margin = std::min(min_upper_margin, t.upper_margin);
        max_norm = std::max(max_norm, t.norm);
    }
    pass = min_lower_margin >= -tol && min_upper_margin >= -tol && max_norm <= B + tol;
}

nlohmann::json WitnessFeatures::to_json() const {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& x : terms)
        t.push_back({{"theta", x.theta},
                     {"thetaPrime", x.theta_p},
                     {"h", x.h},
                     {"discrepancy", x.discrepancy},
                     {"inner", x.inner},
                     {"lowerMargin", x.lower_margin},
                     {"upperMargin", x.upper_margin},
                     {"norm", x.norm}});
    auto feats = [](const std::vector<std::vector<Eigen::VectorXd>>& v) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& per_model : v) {
            nlohmann::json r = nlohmann::json::array();
            for (const auto& x : per_model) r.push_back(to_std(x));
            j.push_back(r);
        }
        return j;
    };
    return {{"type", type},
            {"d", d},
            {"kappa", kappa},
            {"B", B},
            {"A", A},
            {"f", feats(f)},
            {"g", feats(g)},
            {"terms", t},
            {"minLowerMargin", min_lower_margin},
            {"minUpperMargin", min_upper_margin},
            {"maxNorm", max_norm},
            {"pass", pass}};
}

WitnessFeatures factored_witness(const FactoredMdp& env, const std::vector<FactoredMdp>& cls, int true_index) {
    check_index(true_index, cls.size());
    env.validate();
    for (const auto& c : cls) check_same_structure(env, c);
    const TabularMdp truth = env.to_mdp();
    std::vector<TabularMdp> mdps;
    for (const auto& c : cls) mdps.push_back(c.to_mdp());

    WitnessFeatures w;
    w.type = "Q";
    w.kappa = env.m;
    w.A = env.A;
    int configs = 0;
    for (int i = 0; i < env.m; ++i) configs += env.parent_configs(i);
    w.d = env.A * configs;
    w.B = configs;
    const int n = static_cast<int>(cls.size());
    std::vector<std::vector<Eigen::MatrixXd>> occ(n);
    for (int t = 0; t < n; ++t) {
        occ[t] = truth.occupancy(mdps[t].greedy());
        w.f.emplace_back();
        w.g.emplace_back();
        for (int h = 1; h < env.H; ++h) {
            w.f[t].push_back(factored_coords(env, occ[t][h - 1]));
            w.g[t].push_back(factored_gaps(env, cls[t], h));
        }
    }
    for (int t = 0; t < n; ++t)
        for (int tp = 0; tp < n; ++tp)
            for (int h = 1; h < env.H; ++h) {
                WitnessTerm term{t, tp, h};
                term.discrepancy = occ[t][h - 1].cwiseProduct(truth.l1_gap(mdps[tp], h)).sum();
                term.inner = std::abs(w.f[t][h - 1].dot(w.g[tp][h - 1]));
                term.lower_margin = term.discrepancy - term.inner / w.kappa;
                term.upper_margin = term.inner - term.discrepancy;
                term.norm = w.f[t][h - 1].lpNorm<1>() * w.g[tp][h - 1].lpNorm<Eigen::Infinity>();
                w.terms.push_back(term);
            }
    w.finalize();
    return w;
}

WitnessFeatures bandit_witness(const SparseLinearBandit& env, const std::vector<SparseLinearBandit>& cls,
                               int true_index, double tol) {
    check_index(true_index, cls.size());
    env.validate();
    for (const auto& c : cls) {
        c.validate();
        if (c.dim() != env.dim() || c.arms.size() != env.arms.size())
            throw InvalidModel("bandit class members disagree on arms");
    }
    WitnessFeatures w;
    w.type = "Q";
    w.kappa = 1.0;
    w.A = static_cast<int>(env.arms.size());
    w.d = env.dim();
    w.B = 4.0 * std::sqrt(static_cast<double>(w.d)) * env.C_theta * env.C_arm;
    const int n = static_cast<int>(cls.size());
    for (int t = 0; t < n; ++t) {
        w.f.push_back({env.arms[cls[t].greedy_arm()]});
        w.g.push_back({2.0 * (cls[t].theta - env.theta)});
    }
    for (int t = 0; t < n; ++t) {
        const Eigen::VectorXd& a = env.arms[cls[t].greedy_arm()];
        const double p_star = a.dot(env.theta);
        for (int tp = 0; tp < n; ++tp) {
            const double p = a.dot(cls[tp].theta);
            WitnessTerm term{t, tp, 1};
            term.discrepancy = std::abs(p - p_star) + std::abs((1.0 - p) - (1.0 - p_star));
            term.inner = std::abs(w.f[t][0].dot(w.g[tp][0]));
            term.lower_margin = term.discrepancy - term.inner;
            term.upper_margin = term.inner - term.discrepancy;
            term.norm = w.f[t][0].lpNorm<1>() * w.g[tp][0].lpNorm<Eigen::Infinity>();
            w.terms.push_back(term);
        }
    }
    w.finalize(tol);
    return w;
}

WitnessFeatures kernel_linear_witness(const KernelLinearMdp& env, const std::vector<KernelLinearMdp>& cls,
                                      int true_index, double tol) {
    check_index(true_index, cls.size());
    if (env.S * env.A > 256) throw CapExceeded("kernel linear witness supports S·A <= 256");
    const TabularMdp truth = env.to_mdp();
    std::vector<TabularMdp> mdps;
    for (const auto& c : cls) {
        if (c.S != env.S || c.A != env.A || c.H != env.H || c.dim() != env.dim())
            throw FeatureMismatch("kernel class members disagree on sizes");
        if ((c.phi - env.phi).cwiseAbs().maxCoeff() > 0.0 || (c.psi - env.psi).cwiseAbs().maxCoeff() > 0.0)
            throw FeatureMismatch("kernel class members must share the known features");
        mdps.push_back(c.to_mdp());
    }
    const int n = static_cast<int>(cls.size());
    const int d = env.dim();

    WitnessFeatures w;
    w.type = "V";
    w.kappa = 1.0;
    w.A = env.A;
    w.d = d;
    double C_phi = 0.0, C_W = 0.0;
    for (Eigen::Index r = 0; r < env.phi.rows(); ++r) C_phi = std::max(C_phi, env.phi.row(r).norm());
    for (const auto& c : cls)
        for (const auto& Wh : c.W) C_W = std::max(C_W, Eigen::JacobiSVD<Eigen::MatrixXd>(Wh).singularValues()[0]);
    w.B = 2.0 * (std::sqrt(static_cast<double>(d)) * C_phi * C_W * psi_norm(env.psi) + 1.0);

    std::vector<MarkovPolicy> greedy;
    std::vector<std::vector<Eigen::MatrixXd>> occ;
    for (int t = 0; t < n; ++t) {
        greedy.push_back(mdps[t].greedy());
        occ.push_back(truth.occupancy(greedy[t]));
    }
    // δ_h(s) = ‖P_θ'(·|s, π_θ'(s)) − P*(·|s, π_θ'(s))‖₁
    auto delta = [&](int tp, int h) {
        const Eigen::MatrixXd gap = truth.l1_gap(mdps[tp], h);
        Eigen::VectorXd v(env.S);
        for (int s = 0; s < env.S; ++s) v[s] = gap(s, greedy[tp][h - 1][s]);
        return v;
    };
    for (int t = 0; t < n; ++t) {
        w.f.emplace_back();
        w.g.emplace_back();
        for (int h = 1; h < env.H; ++h) {
            const Eigen::VectorXd dl = delta(t, h);
            if (h == 1) {
                w.f[t].push_back(Eigen::VectorXd::Unit(d, 0));
                w.g[t].push_back(env.mu1.dot(dl) * Eigen::VectorXd::Unit(d, 0));
                continue;
            }
            Eigen::VectorXd f = Eigen::VectorXd::Zero(d);
            for (int s = 0; s < env.S; ++s)
                for (int a = 0; a < env.A; ++a) f += occ[t][h - 2](s, a) * env.phi.row(s * env.A + a).transpose();
            w.f[t].push_back(f);
            w.g[t].push_back(env.W[h - 2] * env.psi.transpose() * dl);
        }
    }
    for (int t = 0; t < n; ++t)
        for (int tp = 0; tp < n; ++tp) {
            for (int h = 1; h < env.H; ++h) {
                const Eigen::VectorXd state = occ[t][h - 1].rowwise().sum();
                WitnessTerm term{t, tp, h};
                term.discrepancy = state.dot(delta(tp, h));
                term.inner = std::abs(w.f[t][h - 1].dot(w.g[tp][h - 1]));
                term.lower_margin = term.discrepancy - term.inner / w.kappa;
                term.upper_margin = term.inner - term.discrepancy;
                term.norm = w.f[t][h - 1].lpNorm<1>() * w.g[tp][h - 1].lpNorm<Eigen::Infinity>();
                w.terms.push_back(term);
            }
        }
    w.finalize(tol);
    return w;
}

SailFeatures sail_from_witness(const WitnessFeatures& w) {
    SailFeatures s;
    auto wrap = [](const std::vector<std::vector<Eigen::VectorXd>>& v) {
        std::vector<std::vector<std::vector<Eigen::VectorXd>>> out;
        for (const auto& per_model : v) {
            out.emplace_back();
            for (const auto& x : per_model) out.back().push_back({x});
        }
        return out;
    };
    s.f = wrap(w.f);
    s.g = wrap(w.g);
    return s;
}

double sail_kappa(const WitnessFeatures& w) { return w.type == "V" ? 2.0 * w.A * w.kappa : 2.0 * w.kappa; }

nlohmann::json SailCertificate::to_json() const {
    nlohmann::json p = nlohmann::json::array(), s = nlohmann::json::array();
    for (const auto& x : pairs)
        p.push_back({{"theta", x.theta}, {"thetaPrime", x.theta_p}, {"tvSum", x.tv_sum}, {"rhs", x.rhs},
                     {"margin", x.margin}});
    for (const auto& x : selfs)
        s.push_back({{"theta", x.theta}, {"policy", x.policy}, {"tv", x.tv}, {"rhs", x.rhs}, {"margin", x.margin}});
    return {{"kappa", kappa},
            {"B", B},
            {"strategy", strategy},
            {"sampled", sampled},
            {"policies", policies},
            {"pairs", p},
            {"selfs", s},
            {"maxNorm", max_norm},
            {"minPairMargin", min_pair_margin},
            {"minSelfMargin", min_self_margin},
            {"normMargin", norm_margin},
            {"pass", pass},
            {"violation", violation}};
}

SailCertificate verify_sail(const std::vector<ModelPtr>& cls, int true_index, const SailFeatures& features,
                            const std::vector<PolicyPtr>& greedy, const ExplorationStrategy& strat, double kappa,
                            double B, double tol, std::uint64_t cap) {
    check_index(true_index, cls.size());
    const std::size_t n = cls.size();
    if (features.f.size() != n || features.g.size() != n || greedy.size() != n)
        throw FeatureMismatch("SAIL features and greedy policies need one entry per model");
    if (!(kappa > 0.0)) throw InvalidModel("kappa must be positive");
    strat.validate(cls[0]->spec());
    std::vector<CondTable> tables;
    for (const auto& m : cls) tables.push_back(cond_table(*m, cap));
    const CondTable& star = tables[true_index];

    SailCertificate c;
    c.kappa = kappa;
    c.B = B;
    c.strategy = strat.name();
    c.policies = static_cast<int>(n);
    for (std::size_t t = 0; t < n; ++t) {
        const auto exps = make_exploration(strat, greedy[t]);
        for (std::size_t tp = 0; tp < n; ++tp) {
            SailCertificate::Pair p{static_cast<int>(t), static_cast<int>(tp)};
            for (const auto& pi : exps) p.tv_sum += tv_distance(star, tables[tp], *pi);
            const std::size_t steps = std::min(features.f[t].size(), features.g[tp].size());
            for (std::size_t h = 0; h < steps; ++h) {
                p.rhs += sum_abs_inner(features.f[t][h], features.g[tp][h]);
                c.max_norm = std::max(c.max_norm, norm_product(features.f[t][h], features.g[tp][h]));
            }
            p.rhs /= kappa;
            p.margin = p.tv_sum - p.rhs;
            c.pairs.push_back(p);
        }
        SailCertificate::Self s{static_cast<int>(t)};
        s.tv = tv_distance(star, tables[t], *greedy[t]);
        const std::size_t steps = std::min(features.f[t].size(), features.g[t].size());
        for (std::size_t h = 0; h < steps; ++h) s.rhs += sum_abs_inner(features.f[t][h], features.g[t][h]);
        s.margin = s.rhs - s.tv;
        c.selfs.push_back(s);
    }
    finalize_certificate(c, tol);
    return c;
}

SailCertificate verify_strong_sail(const std::vector<ModelPtr>& cls, int true_index, const PolicyFeatureFn& f,
                                   const std::vector<std::vector<std::vector<Eigen::VectorXd>>>& g,
                                   const std::vector<PolicyPtr>& policies, const ExplorationStrategy& strat,
                                   double kappa, double B, double tol, std::uint64_t cap) {
    check_index(true_index, cls.size());
    const std::size_t n = cls.size();
    if (g.size() != n) throw FeatureMismatch("strong SAIL needs g features for every model");
    if (!(kappa > 0.0)) throw InvalidModel("kappa must be positive");
    strat.validate(cls[0]->spec());
    std::vector<CondTable> tables;
    for (const auto& m : cls) tables.push_back(cond_table(*m, cap));
    const CondTable& star = tables[true_index];

    SailCertificate c;
    c.kappa = kappa;
    c.B = B;
    c.strategy = strat.name();
    c.sampled = true;
    c.policies = static_cast<int>(policies.size());
    for (std::size_t k = 0; k < policies.size(); ++k) {
        const auto F = f(*policies[k]);
        const auto exps = make_exploration(strat, policies[k]);
        for (std::size_t t = 0; t < n; ++t) {
            double rhs = 0.0;
            const std::size_t steps = std::min(F.size(), g[t].size());
            for (std::size_t h = 0; h < steps; ++h) {
                rhs += sum_abs_inner(F[h], g[t][h]);
                c.max_norm = std::max(c.max_norm, norm_product(F[h], g[t][h]));
            }
            SailCertificate::Pair p{static_cast<int>(k), static_cast<int>(t)};
            for (const auto& pi : exps) p.tv_sum += tv_distance(star, tables[t], *pi);
            p.rhs = rhs / kappa;
            p.margin = p.tv_sum - p.rhs;
            c.pairs.push_back(p);
            SailCertificate::Self s{static_cast<int>(t), static_cast<int>(k)};
            s.tv = tv_distance(star, tables[t], *policies[k]);
            s.rhs = rhs;
            s.margin = s.rhs - s.tv;
            c.selfs.push_back(s);
        }
    }
    finalize_certificate(c, tol);
    return c;
}

std::vector<PolicyPtr> policy_sample(const EpisodeSpec& spec, int n_random, std::uint64_t seed, int max_memoryless) {
    if (n_random < 0) throw InvalidModel("policy sample size must be nonnegative");
    Rng rng(seed);
    std::vector<PolicyPtr> out;
    for (int k = 0; k < n_random; ++k) out.push_back(random_stochastic_policy(spec, rng));
    const std::uint64_t count = ipow(static_cast<std::uint64_t>(spec.A), spec.O);
    if (count > static_cast<std::uint64_t>(max_memoryless)) return out;
    for (std::uint64_t code = 0; code < count; ++code) {
        std::vector<int> map(spec.O);
        std::uint64_t c = code;
        for (int o = 0; o < spec.O; ++o, c /= spec.A) map[o] = static_cast<int>(c % spec.A);
        out.push_back(HistoryPolicy::from_rule(spec, [map](int, std::uint64_t, int o) { return map[o]; }));
    }
    return out;
}

std::vector<Eigen::MatrixXd> tree_occupancy(const HistoryModel& model, const HistoryPolicy& policy,
                                            std::uint64_t cap) {
    const auto& sp = model.spec();
    const CondTable table = cond_table(model, cap);
    const auto pi = policy_weights(policy);
    std::vector<Eigen::MatrixXd> occ(sp.H, Eigen::MatrixXd::Zero(sp.O, sp.A));
    for (int h = 1; h <= sp.H; ++h)
        for (std::size_t idx = 0; idx < table.pbar[h].size(); ++idx) {
            const int pair = static_cast<int>(idx % sp.pairs());
            occ[h - 1](pair / sp.A, pair % sp.A) += table.pbar[h][idx] * pi[h][idx];
        }
    return occ;
}

PolicyFeatureFn factored_policy_features(const FactoredMdp& env, std::uint64_t cap) {
    const auto pomdp = std::make_shared<TabularPOMDP>(env.to_mdp().to_pomdp());
    return [env, pomdp, cap](const HistoryPolicy& policy) {
        const auto occ = tree_occupancy(*pomdp, policy, cap);
        std::vector<std::vector<Eigen::VectorXd>> out;
        for (int h = 1; h < env.H; ++h) out.push_back({factored_coords(env, occ[h - 1])});
        return out;
    };
}

}  // namespace omle
