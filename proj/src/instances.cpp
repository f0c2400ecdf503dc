#include <set>

#include "omle/experiment.hpp"
#include "omle/l1.hpp"

namespace omle {

namespace {

/** Reads keys off a recipe object, rejecting anything not consumed. */
class Recipe {
public:
    explicit Recipe(const nlohmann::json& j) : j_(j) {
        if (!j_.is_object()) throw ConfigError("recipe must be an object");
    }
    template <class T>
    T get(const char* key, T fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("recipe.") + key + ": " + e.what());
        }
    }
    void allow(const char* key) { seen_.insert(key); }
    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown recipe key " + k);
    }

private:
    const nlohmann::json& j_;
    std::set<std::string> seen_;
};

nlohmann::json pomdp_doc(const TabularPOMDP& p, int m, const nlohmann::json& recipe, int attempts = 0) {
    nlohmann::json cert{{"alpha", observability_alpha(p, m).alpha}, {"m", m}};
    if (attempts > 0) cert["attempts"] = attempts;
    return {{"family", "pomdp"}, {"model", p.to_json()}, {"certificate", cert}, {"recipe", recipe}};
}

template <class T>
nlohmann::json class_doc(const std::string& family, const std::vector<T>& cls, const nlohmann::json& recipe) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cls) arr.push_back(c.to_json());
    return {{"family", family}, {"truth", cls[0].to_json()}, {"class", arr}, {"trueIndex", 0}, {"recipe", recipe}};
}

template <class T>
std::vector<T> read_class(const nlohmann::json& arr) {
    std::vector<T> out;
    for (const auto& j : arr) out.push_back(T::from_json(j));
    if (out.empty()) throw InvalidModel("instance class is empty");
    return out;
}

std::vector<ModelPtr> as_models(const std::vector<TabularMdp>& mdps) {
    std::vector<ModelPtr> out;
    for (const auto& m : mdps) out.push_back(std::make_shared<TabularPOMDP>(m.to_pomdp()));
    return out;
}

std::vector<PolicyPtr> markov_greedy(const std::vector<TabularMdp>& mdps) {
    std::vector<PolicyPtr> out;
    for (const auto& m : mdps) out.push_back(m.as_history_policy(m.greedy()));
    return out;
}

}  // namespace

nlohmann::json generate_env(const nlohmann::json& recipe) {
    Recipe r(recipe);
    const std::string family = r.get<std::string>("family", "observable");
    const std::uint64_t seed = r.get<std::uint64_t>("seed", 0);
    nlohmann::json doc;
    if (family == "observable") {
        const int S = r.get("S", 2), O = r.get("O", 2), A = r.get("A", 2), H = r.get("H", 3), m = r.get("m", 1);
        const double alpha_min = r.get("alphaMin", 0.3);
        const int max_rej = r.get("maxRejections", kMaxRejections);
        const CertifiedPomdp c = gen_observable_pomdp(S, O, A, H, alpha_min, seed, m, max_rej);
        doc = pomdp_doc(c.model, c.m, recipe, c.attempts);
    } else if (family == "random-pomdp") {
        const EpisodeSpec sp{r.get("S", 2), r.get("O", 2), r.get("A", 2), r.get("H", 3)};
        Rng rng(seed);
        doc = pomdp_doc(random_pomdp(sp, rng), 1, recipe);
    } else if (family == "counterexample-a" || family == "counterexample-b") {
        const auto pair = counterexample_pomdps(r.get("H", 3));
        const TabularPOMDP& base = family == "counterexample-a" ? pair.first : pair.second;
        Rng rng(seed);
        doc = pomdp_doc(base.with_rewards(random_rewards(base.spec(), rng)), 1, recipe);
    } else if (family == "factored-chain") {
        const int n = r.get("n", 4);
        const FactoredChain chain = gen_factored_chain(n);
        const auto cls = gen_factored_class(chain.mdp, r.get("classSize", 4), r.get("sigma", 0.3), seed);
        doc = class_doc("factored", cls, recipe);
        doc["certificate"] = {{"measuredRank", chain.measured_rank},
                              {"claimedRank", chain.claimed_rank},
                              {"matchesClaim", chain.matches_claim},
                              {"rankStep", n - 1}};
    } else if (family == "factored-random") {
        const int m = r.get("m", 2);
        auto parents = r.get<std::vector<std::vector<int>>>("parents", {});
        if (parents.empty())
            for (int i = 0; i < m; ++i) parents.push_back({i});
        const FactoredMdp truth = random_factored_mdp(m, r.get("X", 2), r.get("A", 2), r.get("H", 3), parents, seed);
        doc = class_doc("factored", gen_factored_class(truth, r.get("classSize", 4), r.get("sigma", 0.3), seed + 1),
                        recipe);
    } else if (family == "bandit") {
        doc = class_doc("bandit",
                        gen_sparse_bandit_class(r.get("dLin", 4), r.get("sparsity", 2), r.get("classSize", 10), seed),
                        recipe);
    } else if (family == "kernel-linear") {
        doc = class_doc("kernel-linear",
                        gen_kernel_linear_class(r.get("S", 4), r.get("A", 2), r.get("H", 3), r.get("d", 2),
                                                r.get("classSize", 5), r.get("sigma", 0.4), seed),
                        recipe);
    } else {
        throw ConfigError("unknown env family " + family);
    }
    r.finish();
    return doc;
}

nlohmann::json sail_report(const nlohmann::json& instance, std::uint64_t cap) {
    if (!instance.is_object() || !instance.contains("family")) throw ConfigError("instance needs a family");
    if (!instance.contains("truth")) {
        nlohmann::json recipe = instance;
        nlohmann::json strong = recipe.contains("strong") ? recipe["strong"] : nlohmann::json();
        recipe.erase("strong");
        nlohmann::json doc = generate_env(recipe);
        if (!strong.is_null()) doc["strong"] = strong;
        return sail_report(doc, cap);
    }
    for (const auto& [k, _] : instance.items())
        if (k != "family" && k != "truth" && k != "class" && k != "trueIndex" && k != "recipe" && k != "certificate" &&
            k != "strong")
            throw ConfigError("unknown instance key " + k);
    const std::string family = instance.at("family");
    const int ti = instance.value("trueIndex", 0);
    nlohmann::json out{{"family", family}, {"trueIndex", ti}};
    bool pass = true;
    if (family == "factored") {
        const FactoredMdp truth = FactoredMdp::from_json(instance.at("truth"));
        const auto cls = read_class<FactoredMdp>(instance.at("class"));
        if (instance.contains("certificate") && instance["certificate"].contains("measuredRank")) {
            const int rank = support_rank(truth.to_mdp().to_pomdp(), truth.H - 1);
            if (rank != instance["certificate"]["measuredRank"].get<int>())
                throw InvalidModel("rank certificate does not re-verify (measured " + std::to_string(rank) + ")");
            out["rank"] = {{"step", truth.H - 1},
                           {"measured", rank},
                           {"claimed", instance["certificate"].value("claimedRank", 0)}};
        }
        const WitnessFeatures w = factored_witness(truth, cls, ti);
        std::vector<TabularMdp> mdps;
        for (const auto& c : cls) mdps.push_back(c.to_mdp());
        const auto models = as_models(mdps);
        const SailCertificate c = verify_sail(models, ti, sail_from_witness(w), markov_greedy(mdps),
                                              ExplorationStrategy::identity(), sail_kappa(w), w.B, 1e-9, cap);
        out["witness"] = w.to_json();
        out["sail"] = c.to_json();
        pass = w.pass && c.pass;
        if (instance.contains("strong")) {
            const auto& s = instance["strong"];
            const auto policies =
                policy_sample(models[0]->spec(), s.value("random", 8), s.value("seed", std::uint64_t{0}),
                              s.value("maxMemoryless", 4096));
            std::vector<std::vector<std::vector<Eigen::VectorXd>>> g;
            for (const auto& per_model : w.g) {
                g.emplace_back();
                for (const auto& x : per_model) g.back().push_back({x});
            }
            const SailCertificate sc =
                verify_strong_sail(models, ti, factored_policy_features(truth, cap), g, policies,
                                   ExplorationStrategy::identity(), sail_kappa(w), w.B, 1e-9, cap);
            out["strongSail"] = sc.to_json();
            pass = pass && sc.pass;
        }
    } else if (family == "bandit") {
        const SparseLinearBandit truth = SparseLinearBandit::from_json(instance.at("truth"));
        const auto cls = read_class<SparseLinearBandit>(instance.at("class"));
        const WitnessFeatures w = bandit_witness(truth, cls, ti);
        std::vector<ModelPtr> models;
        std::vector<PolicyPtr> greedy;
        for (const auto& c : cls) {
            models.push_back(std::make_shared<TabularPOMDP>(c.to_pomdp()));
            const int arm = c.greedy_arm();
            greedy.push_back(HistoryPolicy::from_rule(models.back()->spec(),
                                                      [arm](int h, std::uint64_t, int) { return h == 1 ? arm : 0; }));
        }
        const SailCertificate c = verify_sail(models, ti, sail_from_witness(w), greedy,
                                              ExplorationStrategy::identity(), sail_kappa(w), w.B, 1e-9, cap);
        out["witness"] = w.to_json();
        out["sail"] = c.to_json();
        pass = w.pass && c.pass;
    } else if (family == "kernel-linear") {
        const KernelLinearMdp truth = KernelLinearMdp::from_json(instance.at("truth"));
        const auto cls = read_class<KernelLinearMdp>(instance.at("class"));
        const WitnessFeatures w = kernel_linear_witness(truth, cls, ti);
        std::vector<TabularMdp> mdps;
        for (const auto& c : cls) mdps.push_back(c.to_mdp());
        const SailCertificate c = verify_sail(as_models(mdps), ti, sail_from_witness(w), markov_greedy(mdps),
                                              ExplorationStrategy::uniform_tail(), sail_kappa(w), w.B, 1e-9, cap);
        out["witness"] = w.to_json();
        out["sail"] = c.to_json();
        pass = w.pass && c.pass;
    } else {
        throw ConfigError("unknown SAIL family " + family);
    }
    out["pass"] = pass;
    return out;
}

}  // namespace omle
