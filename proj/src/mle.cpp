#include "omle/mle.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

namespace omle {

void ModelClass::validate() const {
    if (models.empty()) throw InvalidModel("model class is empty");
    for (const auto& m : models) {
        if (!m) throw InvalidModel("model class holds a null model");
        if (!m->spec().same_interface(spec())) throw InvalidModel("model class members disagree on (O, A, H)");
    }
    if (true_index && (*true_index < 0 || *true_index >= size())) throw InvalidModel("true index out of range");
}

std::vector<CondTable> ModelClass::tables(std::uint64_t cap) const {
    std::vector<CondTable> out;
    out.reserve(models.size());
    for (const auto& m : models) out.push_back(cond_table(*m, cap));
    return out;
}

int Dataset::register_policy(PolicyPtr policy) {
    if (!policy || !policy->spec().same_interface(spec_)) throw InvalidModel("policy does not match the dataset spec");
    policies_.push_back(std::move(policy));
    return static_cast<int>(policies_.size()) - 1;
}

void Dataset::add(int policy_id, Trajectory traj) {
    if (policy_id < 0) throw InvalidModel("negative policy id");
    traj.validate(spec_, true);
    records_.push_back({policy_id, std::move(traj)});
}

void Dataset::write_jsonl(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw MissingData("cannot open " + path + " for writing");
    for (const auto& r : records_)
        f << nlohmann::json{{"policyId", r.policy_id}, {"obs", r.traj.obs}, {"acts", r.traj.acts}}.dump() << '\n';
}

Dataset Dataset::read_jsonl(const std::string& path, const EpisodeSpec& spec) {
    std::ifstream f(path);
    if (!f) throw MissingData("cannot open " + path);
    Dataset d(spec);
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        for (const auto& [key, _] : j.items())
            if (key != "policyId" && key != "obs" && key != "acts") throw InvalidModel("unknown record key " + key);
        Trajectory t{j.at("obs").get<std::vector<int>>(), j.at("acts").get<std::vector<int>>()};
        d.add(j.at("policyId").get<int>(), std::move(t));
    }
    return d;
}

double traj_loglik(const HistoryModel& model, const Trajectory& traj, double p_min) {
    const auto& sp = model.spec();
    Eigen::VectorXd state = model.initial_state();
    double ll = 0.0;
    for (int h = 1; h <= traj.length(); ++h) {
        const int o = traj.obs[h - 1];
        const double p = model.obs_probs(h, state)[o];
        if (p_min > 0.0) {
            ll += std::log(std::max(p, p_min));
        } else {
            if (!(p > kZeroProb)) return -std::numeric_limits<double>::infinity();
            ll += std::log(p);
        }
        if (h < sp.H && h < traj.length()) {
            // A floored zero cannot be filtered past; the remaining factors take the floor.
            if (!(p > kZeroProb)) return ll + (traj.length() - h) * std::log(p_min);
            state = model.advance(h, state, o, traj.acts[h - 1], p);
        }
    }
    return ll;
}

double beta_default(int class_size, std::uint64_t episodes, double delta, double c) {
    if (class_size < 1 || episodes < 1 || !(delta > 0.0) || !(c > 0.0))
        throw InvalidModel("beta_default needs positive inputs");
    return c * std::log(static_cast<double>(episodes) * class_size / delta);
}

double log_cover_size(const EpisodeSpec& spec, double eps) {
    if (!(eps > 0.0)) throw InvalidModel("cover width must be positive");
    const double S = spec.S, O = spec.O, A = spec.A, H = spec.H;
    return H * (S * S * A + S * O) * std::log(S * A * O * H / eps);
}

int ConfidenceSet::alive_count() const {
    int n = 0;
    for (char a : alive) n += a != 0;
    return n;
}

std::vector<int> ConfidenceSet::alive_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < alive.size(); ++i)
        if (alive[i]) out.push_back(static_cast<int>(i));
    return out;
}

ConfidenceSet make_confidence(const ModelClass& cls, double beta, double p_min) {
    cls.validate();
    if (!(beta >= 0.0)) throw InvalidModel("beta must be nonnegative");
    ConfidenceSet cs;
    cs.alive.assign(cls.models.size(), 1);
    cs.loglik.assign(cls.models.size(), 0.0);
    cs.beta = beta;
    cs.p_min = p_min;
    return cs;
}

void update_confidence(ConfidenceSet& cs, const ModelClass& cls, const Dataset& data) {
    if (cs.alive.size() != cls.models.size()) throw InvalidModel("confidence set does not match the class");
    const auto& recs = data.records();
    for (std::size_t i = 0; i < cls.models.size(); ++i) {
        double& ll = cs.loglik[i];
        for (std::size_t r = cs.consumed; r < recs.size() && std::isfinite(ll); ++r)
            ll += traj_loglik(*cls.models[i], recs[r].traj, cs.p_min);
    }
    cs.consumed = recs.size();
    double best = -std::numeric_limits<double>::infinity();
    for (double ll : cs.loglik) best = std::max(best, ll);
    for (std::size_t i = 0; i < cs.alive.size(); ++i)
        cs.alive[i] = cs.alive[i] && std::isfinite(cs.loglik[i]) && cs.loglik[i] >= best - cs.beta;
    ++cs.k;
    if (cs.alive_count() == 0)
        throw EmptyConfidenceSet("no model survives after " + std::to_string(recs.size()) + " episodes");
}

}  // namespace omle
