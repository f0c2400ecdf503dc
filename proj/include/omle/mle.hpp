#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "omle/exact.hpp"
#include "omle/history_model.hpp"
#include "omle/policy.hpp"

namespace omle {

/** @brief A finite model class Θ sharing one episode spec. */
struct ModelClass {
    std::vector<ModelPtr> models;
    std::optional<int> true_index;
    std::string provenance = "explicit";  ///< "explicit" or "discretized-cover"
    double cover_eps = 0.0;               ///< lattice width for discretized covers

    int size() const { return static_cast<int>(models.size()); }
    const EpisodeSpec& spec() const { return models.front()->spec(); }
    /** @brief Throws InvalidModel on an empty class, mismatched specs or a bad true index. */
    void validate() const;
    /** @brief Exact tables of every member (used for planning and TV diagnostics). */
    std::vector<CondTable> tables(std::uint64_t cap = kDefaultCapLeaves) const;
};

/** @brief One executed episode. */
struct Record {
    int policy_id = 0;
    Trajectory traj;
};

/** @brief Append-only list of episodes with a registry of the policies that produced them. */
class Dataset {
public:
    explicit Dataset(EpisodeSpec spec) : spec_(spec) {}

    /** @brief Registers a policy and returns its id. */
    int register_policy(PolicyPtr policy);
    /** @brief Appends an episode; the trajectory must be full length for its EpisodeSpec. */
    void add(int policy_id, Trajectory traj);

    const EpisodeSpec& spec() const { return spec_; }
    const std::vector<Record>& records() const { return records_; }
    const std::vector<PolicyPtr>& policies() const { return policies_; }
    std::size_t size() const { return records_.size(); }

    /** @brief One JSON object per line: {"policyId", "obs", "acts"}. */
    void write_jsonl(const std::string& path) const;
    /** @brief Reads records written by write_jsonl; the policy registry stays empty. */
    static Dataset read_jsonl(const std::string& path, const EpisodeSpec& spec);

private:
    EpisodeSpec spec_;
    std::vector<Record> records_;
    std::vector<PolicyPtr> policies_;
};

/**
 * @brief Σ_h log P_h(o_h | τ_{h-1}) under the model.
 *
 * Policy factors are identical across models and are left out. Returns -inf as
 * soon as a factor is zero. With p_min > 0 every factor is floored at p_min.
 */
double traj_loglik(const HistoryModel& model, const Trajectory& traj, double p_min = 0.0);

/** @brief β = c·log(T·|Θ|/δ). */
double beta_default(int class_size, std::uint64_t episodes, double delta = 0.05, double c = 2.0);

/** @brief log of the discretization cover size H(S²A+SO)·log(SAOH/ε) for tabular POMDPs. */
double log_cover_size(const EpisodeSpec& spec, double eps);

/** @brief The confidence set B^k over a model class. */
struct ConfidenceSet {
    std::vector<char> alive;
    std::vector<double> loglik;
    double beta = 0.0;
    double p_min = 0.0;
    int k = 0;                  ///< number of updates applied
    std::size_t consumed = 0;   ///< dataset records already accumulated

    int alive_count() const;
    bool is_alive(int i) const { return alive[i] != 0; }
    /** @brief Indices of alive models in increasing order. */
    std::vector<int> alive_indices() const;
};

/** @brief B^0 = Θ with zero log-likelihoods. */
ConfidenceSet make_confidence(const ModelClass& cls, double beta, double p_min = 0.0);

/**
 * @brief Accumulates the records added since the last update and re-thresholds.
 *
 * A model stays alive iff it was alive and its log-likelihood is finite and at
 * least max_{θ'∈Θ} loglik(θ') − β. Throws EmptyConfidenceSet if none survives.
 */
void update_confidence(ConfidenceSet& cs, const ModelClass& cls, const Dataset& data);

}  // namespace omle
