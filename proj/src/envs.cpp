#include "omle/envs.hpp"

#include <algorithm>
#include <cmath>

#include "omle/l1.hpp"

namespace omle {

Eigen::VectorXd dirichlet_column(Rng& rng, int n) {
    auto v = dirichlet_ones(rng, n);
    Eigen::VectorXd out = Eigen::Map<Eigen::VectorXd>(v.data(), n);
    // Exact renormalization keeps column sums within the validator's tolerance.
    return out / out.sum();
}

std::vector<std::vector<double>> random_rewards(const EpisodeSpec& spec, Rng& rng) {
    std::vector<std::vector<double>> R(spec.H, std::vector<double>(spec.O));
    for (auto& row : R)
        for (auto& r : row) r = std::round(rng.uniform() * 100.0) / 100.0;
    return R;
}

TabularPOMDP random_pomdp(const EpisodeSpec& spec, Rng& rng) {
    spec.validate();
    Eigen::VectorXd mu1 = dirichlet_column(rng, spec.S);
    std::vector<std::vector<Eigen::MatrixXd>> T(spec.H - 1);
    for (auto& step : T) {
        step.resize(spec.A);
        for (auto& m : step) {
            m.resize(spec.S, spec.S);
            for (int s = 0; s < spec.S; ++s) m.col(s) = dirichlet_column(rng, spec.S);
        }
    }
    std::vector<Eigen::MatrixXd> Obs(spec.H);
    for (auto& m : Obs) {
        m.resize(spec.O, spec.S);
        for (int s = 0; s < spec.S; ++s) m.col(s) = dirichlet_column(rng, spec.O);
    }
    auto R = random_rewards(spec, rng);
    return TabularPOMDP(spec, mu1, T, Obs, R);
}

CertifiedPomdp gen_observable_pomdp(int S, int O, int A, int H, double alpha_min, std::uint64_t seed, int m,
                                    int max_rejections) {
    EpisodeSpec sp{S, O, A, H};
    sp.validate();
    if (S > kMaxAlphaStates) throw CapExceeded("α certification supports S <= " + std::to_string(kMaxAlphaStates));
    Rng rng(seed);
    for (int attempt = 1; attempt <= max_rejections + 1; ++attempt) {
        TabularPOMDP p = random_pomdp(sp, rng);
        const double alpha = observability_alpha(p, m).alpha;
        if (alpha >= alpha_min) return {std::move(p), m, alpha, attempt};
    }
    throw GenerationTimeout("no POMDP with α >= " + std::to_string(alpha_min) + " after " +
                            std::to_string(max_rejections) + " rejections");
}

std::pair<TabularPOMDP, TabularPOMDP> counterexample_pomdps(int H) {
    if (H < 1) throw InvalidModel("counterexamples need H >= 1");
    EpisodeSpec sa{2, 2, 1, H};
    Eigen::MatrixXd obsA(2, 2);
    obsA << 0.99, 0.01, 0.01, 0.99;
    std::vector<std::vector<Eigen::MatrixXd>> TA(H - 1, {Eigen::MatrixXd::Identity(2, 2)});
    TabularPOMDP pa(sa, Eigen::Vector2d(0.5, 0.5), TA, std::vector<Eigen::MatrixXd>(H, obsA),
                    std::vector<std::vector<double>>(H, std::vector<double>(2, 0.0)));

    EpisodeSpec sb{2, 2, 2, H};
    Eigen::MatrixXd obsB(2, 2);
    obsB << 1, 1, 0, 0;
    Eigen::MatrixXd t0(2, 2), t1(2, 2);
    t0 << 1, 1, 0, 0;
    t1 << 0, 0, 1, 1;
    std::vector<std::vector<Eigen::MatrixXd>> TB(H - 1, {t0, t1});
    TabularPOMDP pb(sb, Eigen::Vector2d(1.0, 0.0), TB, std::vector<Eigen::MatrixXd>(H, obsB),
                    std::vector<std::vector<double>>(H, std::vector<double>(2, 0.0)));
    return {std::move(pa), std::move(pb)};
}

TabularPOMDP identity_emission_pomdp(const Eigen::VectorXd& mu1,
                                     const std::vector<std::vector<Eigen::MatrixXd>>& T, int A,
                                     std::vector<std::vector<double>> R) {
    const int S = static_cast<int>(mu1.size());
    const int H = static_cast<int>(T.size()) + 1;
    EpisodeSpec sp{S, S, A, H};
    return TabularPOMDP(sp, mu1, T, std::vector<Eigen::MatrixXd>(H, Eigen::MatrixXd::Identity(S, S)),
                        std::move(R));
}

namespace {

// Applies f to every stochastic column (μ₁, transitions, emissions).
template <class F>
TabularPOMDP map_columns(const TabularPOMDP& p, F&& f) {
    Eigen::VectorXd mu1 = f(p.mu1());
    auto T = p.transitions();
    auto Obs = p.emissions();
    for (auto& step : T)
        for (auto& M : step)
            for (Eigen::Index c = 0; c < M.cols(); ++c) M.col(c) = f(Eigen::VectorXd(M.col(c)));
    for (auto& M : Obs)
        for (Eigen::Index c = 0; c < M.cols(); ++c) M.col(c) = f(Eigen::VectorXd(M.col(c)));
    return TabularPOMDP(p.spec(), mu1, T, Obs, p.rewards());
}

bool same_parameters(const TabularPOMDP& a, const TabularPOMDP& b) { return a.to_json() == b.to_json(); }

}  // namespace

TabularPOMDP round_to_lattice(const TabularPOMDP& p, double eps) {
    if (!(eps > 0.0)) throw InvalidModel("lattice width must be positive");
    return map_columns(p, [eps](const Eigen::VectorXd& c) {
        Eigen::VectorXd r = (c / eps).array().round() * eps;
        if (!(r.sum() > 0.0)) {
            Eigen::Index i;
            c.maxCoeff(&i);
            r.setZero();
            r[i] = 1.0;
        }
        return Eigen::VectorXd(r / r.sum());
    });
}

ModelClass gen_model_class(const TabularPOMDP& truth, const ClassRecipe& recipe, std::uint64_t seed) {
    truth.validate();
    if (recipe.n < 0) throw InvalidModel("candidate count must be nonnegative");
    if (recipe.n + 1 > kMaxClassSize) throw CapExceeded("model class larger than " + std::to_string(kMaxClassSize));
    if (recipe.sigma < 0.0 || recipe.sigma > 1.0) throw InvalidModel("jitter weight must lie in [0, 1]");
    const bool grid = recipe.mode == ClassRecipe::Mode::Grid;
    Rng rng(seed);
    ModelClass cls;
    cls.models.push_back(std::make_shared<TabularPOMDP>(truth));
    cls.true_index = 0;
    cls.provenance = grid ? "discretized-cover" : "explicit";
    cls.cover_eps = grid ? recipe.eps : 0.0;
    std::vector<TabularPOMDP> kept{grid ? round_to_lattice(truth, recipe.eps) : truth};
    const double s = recipe.sigma;
    int rejections = 0;
    for (int i = 0; i < recipe.n; ++i) {
        TabularPOMDP cand = map_columns(truth, [&](const Eigen::VectorXd& c) {
            return Eigen::VectorXd((1.0 - s) * c + s * dirichlet_column(rng, static_cast<int>(c.size())));
        });
        if (grid) cand = round_to_lattice(cand, recipe.eps);
        cand.validate();
        if (recipe.alpha_min >= 0.0 && observability_alpha(cand, recipe.alpha_m).alpha < recipe.alpha_min) {
            if (++rejections > recipe.max_rejections)
                throw GenerationTimeout("α filter rejected " + std::to_string(rejections) + " candidates");
            --i;
            continue;
        }
        if (grid && std::any_of(kept.begin(), kept.end(), [&](const auto& k) { return same_parameters(k, cand); }))
            continue;
        kept.push_back(cand);
        cls.models.push_back(std::make_shared<TabularPOMDP>(std::move(cand)));
    }
    cls.validate();
    return cls;
}

}  // namespace omle
