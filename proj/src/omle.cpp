#include "omle/omle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace omle {

namespace {

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw MissingData("cannot open " + path + " for writing");
    f << text;
}

// Shared state of both loops: exact tables, confidence set, data and the TV² diagnostic.
struct LoopState {
    const ModelClass& cls;
    const HistoryModel& env;
    const RunOptions& opt;
    std::vector<CondTable> tables;
    CondTable env_table;
    ConfidenceSet cs;
    Dataset data;
    Rng rng;
    std::vector<double> tv2;

    LoopState(const ModelClass& c, const HistoryModel& e, const RunOptions& o)
        : cls(c), env(e), opt(o), tables(c.tables(o.cap)), env_table(cond_table(e, o.cap)),
          cs(make_confidence(c, o.beta, o.p_min)), data(e.spec()), rng(o.seed), tv2(c.models.size(), 0.0) {
        if (!c.spec().same_interface(e.spec())) throw InvalidModel("environment does not match the class interface");
        if (o.K < 1) throw InvalidModel("K must be positive");
        if (!o.misspecified) {
            if (!c.true_index) throw InvalidModel("class has no true index; set misspecified to run anyway");
            const auto& a = tables[*c.true_index].leaves();
            const auto& b = env_table.leaves();
            for (std::size_t i = 0; i < a.size(); ++i)
                if (std::abs(a[i] - b[i]) > 1e-9)
                    throw InvalidModel("environment differs from the class member at the true index");
        }
    }

    bool true_alive() const { return cls.true_index && cs.is_alive(*cls.true_index); }

    // Runs Π_exp once, updates the confidence set, returns max Σ TV² over survivors.
    double explore(const std::vector<PolicyPtr>& pols) {
        for (const auto& pi : pols) {
            const int id = data.register_policy(pi);
            data.add(id, sample_trajectory(env, *pi, rng));
            for (std::size_t i = 0; i < tables.size(); ++i) {
                const double tv = tv_distance(tables[i], env_table, *pi);
                tv2[i] += tv * tv;
            }
        }
        update_confidence(cs, cls, data);
        double worst = 0.0;
        for (int i : cs.alive_indices()) worst = std::max(worst, tv2[i]);
        return worst;
    }
};

}  // namespace

ExplorationStrategy ExplorationStrategy::psr_core(std::vector<std::vector<std::vector<int>>> qa) {
    ExplorationStrategy s;
    s.kind = Kind::PsrCore;
    s.core_actions = std::move(qa);
    return s;
}

ExplorationStrategy ExplorationStrategy::identity() { return ExplorationStrategy{}; }

ExplorationStrategy ExplorationStrategy::uniform_tail() {
    ExplorationStrategy s;
    s.kind = Kind::UniformTail;
    return s;
}

ExplorationStrategy::Kind ExplorationStrategy::parse_kind(const std::string& name) {
    if (name == "psr-core") return Kind::PsrCore;
    if (name == "identity") return Kind::Identity;
    if (name == "uniform-tail") return Kind::UniformTail;
    throw ConfigError("unknown exploration strategy " + name);
}

std::string ExplorationStrategy::name() const {
    switch (kind) {
        case Kind::PsrCore: return "psr-core";
        case Kind::UniformTail: return "uniform-tail";
        default: return "identity";
    }
}

void ExplorationStrategy::validate(const EpisodeSpec& spec) const {
    if (kind != Kind::PsrCore) return;
    if (static_cast<int>(core_actions.size()) != spec.H)
        throw PrefixViolation("psr-core needs one core action set per step h = 0..H-1");
    for (int h = 0; h < spec.H; ++h) {
        const auto& set = core_actions[h];
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (h + static_cast<int>(set[i].size()) > spec.H)
                throw PrefixViolation("core action sequence at h=" + std::to_string(h) + " runs past the horizon");
            for (int a : set[i])
                if (a < 0 || a >= spec.A) throw PrefixViolation("core action out of range");
            for (std::size_t j = 0; j < set.size(); ++j) {
                if (i == j || set[j].size() < set[i].size()) continue;
                if (std::equal(set[i].begin(), set[i].end(), set[j].begin()))
                    throw PrefixViolation("core action set at h=" + std::to_string(h) + " is not prefix-free");
            }
        }
    }
}

std::vector<PolicyPtr> make_exploration(const ExplorationStrategy& strat, const PolicyPtr& pi) {
    const EpisodeSpec& sp = pi->spec();
    strat.validate(sp);
    std::vector<PolicyPtr> out;
    switch (strat.kind) {
        case ExplorationStrategy::Kind::Identity: out.push_back(pi); break;
        case ExplorationStrategy::Kind::UniformTail:
            for (int h = 0; h < sp.H; ++h) out.push_back(HistoryPolicy::composite(pi, h + 1, {}));
            break;
        case ExplorationStrategy::Kind::PsrCore:
            for (int h = 0; h < sp.H; ++h)
                for (const auto& a : strat.core_actions[h]) out.push_back(HistoryPolicy::composite(pi, h, a));
            break;
    }
    return out;
}

std::string OmleRunLog::csv() const {
    std::ostringstream s;
    s << "k,theta,optimistic_value,true_value,v_star,suboptimality,explore_value,alive,theta_star_alive,"
         "optimism_ok,sum_tv2,tv_bound_ok,episodes\n";
    for (const auto& it : iters)
        s << it.k << ',' << it.theta << ',' << num(it.optimistic_value) << ',' << num(it.true_value) << ','
          << num(it.v_star) << ',' << num(it.v_star - it.true_value) << ',' << num(it.explore_value) << ','
          << it.alive << ',' << it.true_alive << ',' << it.optimism_ok << ',' << num(it.sum_tv2) << ','
          << it.tv_ok << ',' << it.episodes << '\n';
    return s.str();
}

void OmleRunLog::write_csv(const std::string& path) const { write_text(path, csv()); }

nlohmann::json OmleResult::summary() const {
    const auto& it = log.iters;
    int alive = 0, opt_bad = 0, tv_bad = 0;
    double subopt = 0.0;
    for (const auto& r : it) {
        alive += r.true_alive;
        opt_bad += !r.optimism_ok;
        tv_bad += !r.tv_ok;
        subopt += r.v_star - r.true_value;
    }
    const double n = static_cast<double>(it.size());
    return {{"algorithm", "omle"},
            {"K", it.size()},
            {"beta", log.beta},
            {"seed", log.seed},
            {"strategy", log.strategy},
            {"trueIndex", log.true_index},
            {"vStar", it.empty() ? 0.0 : it.back().v_star},
            {"piOutValue", pi_out_value},
            {"meanSuboptimality", subopt / n},
            {"thetaStarAliveFraction", alive / n},
            {"optimismViolations", opt_bad},
            {"tvBoundViolations", tv_bad},
            {"finalAlive", it.empty() ? 0 : it.back().alive},
            {"episodes", it.empty() ? std::size_t{0} : it.back().episodes}};
}

OmleResult run_omle(const ModelClass& cls, const HistoryModel& env, const ExplorationStrategy& strat,
                    const RunOptions& opt) {
    strat.validate(env.spec());
    LoopState st(cls, env, opt);
    std::vector<Plan> plans;
    plans.reserve(st.tables.size());
    for (const auto& t : st.tables) plans.push_back(optimal_plan(t));
    const double v_star = optimal_plan(st.env_table).value;

    OmleResult res;
    res.log.beta = opt.beta;
    res.log.strategy = strat.name();
    res.log.seed = opt.seed;
    res.log.true_index = cls.true_index.value_or(-1);
    std::vector<PolicyPtr> chosen;
    double value_sum = 0.0;
    for (int k = 1; k <= opt.K; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        OmleIteration it;
        it.k = k;
        it.alive = st.cs.alive_count();
        it.true_alive = st.true_alive();
        int best = -1;
        for (int i : st.cs.alive_indices())
            if (best < 0 || plans[i].value > plans[best].value) best = i;
        it.theta = best;
        it.optimistic_value = plans[best].value;
        it.v_star = v_star;
        const PolicyPtr& pi = plans[best].policy;
        it.true_value = policy_value(st.env_table, *pi);
        it.optimism_ok = !it.true_alive || it.optimistic_value >= v_star - 1e-9;
        const auto pols = make_exploration(strat, pi);
        for (const auto& p : pols) it.explore_value += policy_value(st.env_table, *p);
        it.explore_value /= static_cast<double>(pols.size());
        it.sum_tv2 = st.explore(pols);
        it.tv_ok = it.sum_tv2 <= opt.tv_const * opt.beta;
        it.episodes = st.data.size();
        it.wall_ms = elapsed_ms(t0);
        chosen.push_back(pi);
        value_sum += it.true_value;
        res.log.iters.push_back(it);
    }
    res.pi_out = HistoryPolicy::mixture(chosen, std::vector<double>(chosen.size(), 1.0 / opt.K));
    res.pi_out_value = value_sum / opt.K;
    return res;
}

std::string RewardFreeLog::csv() const {
    std::ostringstream s;
    s << "k,pair_i,pair_j,diameter,alive,theta_star_alive,sum_tv2,tv_bound_ok,theta_out,tv_error,episodes\n";
    for (const auto& it : iters)
        s << it.k << ',' << it.pair_i << ',' << it.pair_j << ',' << num(it.diameter) << ',' << it.alive << ','
          << it.true_alive << ',' << num(it.sum_tv2) << ',' << it.tv_ok << ',' << it.theta_out << ','
          << num(it.tv_error) << ',' << it.episodes << '\n';
    return s.str();
}

void RewardFreeLog::write_csv(const std::string& path) const { write_text(path, csv()); }

nlohmann::json RewardFreeResult::summary() const {
    const auto& it = log.iters;
    int alive = 0, tv_bad = 0;
    for (const auto& r : it) {
        alive += r.true_alive;
        tv_bad += !r.tv_ok;
    }
    return {{"algorithm", "reward-free"},
            {"K", it.size()},
            {"beta", log.beta},
            {"seed", log.seed},
            {"strategy", log.strategy},
            {"trueIndex", log.true_index},
            {"thetaOut", theta_out},
            {"tvError", tv_error},
            {"thetaStarAliveFraction", alive / static_cast<double>(it.size())},
            {"tvBoundViolations", tv_bad},
            {"finalAlive", it.empty() ? 0 : it.back().alive},
            {"episodes", it.empty() ? std::size_t{0} : it.back().episodes}};
}

RewardFreeResult run_reward_free(const ModelClass& cls, const HistoryModel& env, const ExplorationStrategy& strat,
                                 const RunOptions& opt) {
    strat.validate(env.spec());
    LoopState st(cls, env, opt);
    // TV between two fixed models does not depend on the iteration, so pair plans are memoized.
    std::map<std::pair<int, int>, Plan> pair_plans;
    auto pair_plan = [&](int i, int j) -> const Plan& {
        auto found = pair_plans.find({i, j});
        if (found != pair_plans.end()) return found->second;
        return pair_plans.emplace(std::make_pair(i, j), max_tv_plan(st.tables[i], st.tables[j])).first->second;
    };
    std::vector<double> err(st.tables.size(), -1.0);
    auto error_of = [&](int i) {
        if (err[i] < 0.0) err[i] = max_tv_plan(st.tables[i], st.env_table).value;
        return err[i];
    };
    const PolicyPtr fallback = HistoryPolicy::uniform(env.spec());

    RewardFreeResult res;
    res.log.beta = opt.beta;
    res.log.strategy = strat.name();
    res.log.seed = opt.seed;
    res.log.true_index = cls.true_index.value_or(-1);
    for (int k = 1; k <= opt.K; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        RewardFreeIteration it;
        it.k = k;
        it.alive = st.cs.alive_count();
        it.true_alive = st.true_alive();
        const auto alive = st.cs.alive_indices();
        PolicyPtr pi = fallback;
        for (std::size_t a = 0; a < alive.size(); ++a)
            for (std::size_t b = a + 1; b < alive.size(); ++b) {
                const Plan& p = pair_plan(alive[a], alive[b]);
                if (it.pair_i < 0 || p.value > it.diameter) {
                    it.pair_i = alive[a];
                    it.pair_j = alive[b];
                    it.diameter = p.value;
                    pi = p.policy;
                }
            }
        it.sum_tv2 = st.explore(make_exploration(strat, pi));
        it.tv_ok = it.sum_tv2 <= opt.tv_const * opt.beta;
        it.theta_out = st.cs.alive_indices().front();
        it.tv_error = error_of(it.theta_out);
        it.episodes = st.data.size();
        it.wall_ms = elapsed_ms(t0);
        res.log.iters.push_back(it);
    }
    res.theta_out = res.log.iters.back().theta_out;
    res.tv_error = res.log.iters.back().tv_error;
    return res;
}

double planning_loss(const HistoryModel& learned, const HistoryModel& env, const std::vector<std::vector<double>>& R,
                     std::uint64_t cap) {
    const auto keep = [](const HistoryModel*) {};
    const RewardOverride l(ModelPtr(&learned, keep), R), e(ModelPtr(&env, keep), R);
    const Plan plan = optimal_plan(l, cap);
    return optimal_plan(e, cap).value - policy_value(e, *plan.policy, cap);
}

}  // namespace omle
