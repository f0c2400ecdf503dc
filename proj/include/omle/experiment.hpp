#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omle/envs.hpp"
#include "omle/omle.hpp"
#include "omle/sail.hpp"

namespace omle {

/** @brief Library version recorded in bundle manifests. */
inline constexpr const char* kVersion = "0.1.0";

/** @brief Where the true environment comes from; seeds shift by the run seed when per_seed is set. */
struct EnvRecipe {
    std::string family = "observable";  ///< observable | counterexample-a | counterexample-b | file
    int S = 2, O = 2, A = 2, H = 3;
    double alpha_min = 0.3;
    int m = 1;
    std::uint64_t seed = 1000;
    bool per_seed = true;
    std::string file;
};

/** @brief Model-class recipe around the truth. */
struct ClassSpec {
    std::string mode = "perturb";  ///< singleton | perturb | grid
    int n = 19;
    double sigma = 0.5;
    double eps = 0.1;
    double alpha_min = -1.0;
    std::uint64_t seed = 2000;
    bool true_last = false;  ///< move θ* from index 0 to the last index
};

/** @brief Exploration strategy; psr-core actions come from a construction on the truth or are given. */
struct StrategySpec {
    std::string kind = "psr-core";  ///< psr-core | identity | uniform-tail
    std::string core = "observable";  ///< observable | spectral | explicit
    int m = 1;
    std::vector<std::vector<std::vector<int>>> core_actions;
};

/**
 * @brief A full experiment: one environment recipe, one class recipe, one algorithm, many seeds.
 *
 * JSON keys: algorithm, env, class, strategy, K, beta, c, delta, pMin, tvConst,
 * misspecified, seeds, capLeaves, rewardSeed. Unknown keys throw ConfigError.
 */
struct ExperimentConfig {
    std::string algorithm = "omle";  ///< omle | reward-free
    EnvRecipe env;
    ClassSpec model_class;
    StrategySpec strategy;
    int K = 200;
    std::optional<double> beta;
    double c = 2.0, delta = 0.05;
    double p_min = 0.0;
    double tv_const = 10.0;
    bool misspecified = false;
    std::vector<std::uint64_t> seeds{0};
    std::uint64_t cap = kDefaultCapLeaves;
    std::uint64_t reward_seed = 3000;  ///< fresh rewards for the reward-free planning check

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;
};

/** @brief Loads a POMDP instance, accepting a bare model or a gen-env document; certificates are re-verified. */
TabularPOMDP load_env_file(const std::string& path);

/** @brief The environment, its certificate and class for one seed. */
struct SeedScenario {
    TabularPOMDP env;
    nlohmann::json certificate;
    ModelClass cls;
    ExplorationStrategy strategy;
    RunOptions options;
};

SeedScenario build_scenario(const ExperimentConfig& cfg, std::uint64_t seed);

/** @brief Outcome of one seed; csv is empty when the run aborted. */
struct SeedRun {
    std::uint64_t seed = 0;
    std::string csv;
    nlohmann::json summary;
    bool invariants_ok = false;
    std::vector<std::string> failures;
    double wall_ms = 0.0;
};

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/** @brief Runs every seed with at most `threads` workers; results come back in seed order. */
std::vector<SeedRun> run_experiment(const ExperimentConfig& cfg, int threads);

/** @brief Worker bound from PSR_OMLE_THREADS (default: hardware concurrency). */
int thread_limit();

/** @brief Header plus numeric rows of a run CSV. */
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    int column(const std::string& name) const;
    std::vector<double> series(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);

/** @brief Aggregate statistics computed only from the per-seed CSVs. */
nlohmann::json aggregate_runs(const std::string& algorithm, const std::vector<std::uint64_t>& seeds,
                              const std::vector<CsvTable>& tables);

/**
 * @brief Writes config.json, seed_<s>.csv, seed_<s>.json, aggregate.json and manifest.json.
 *
 * Only the manifest carries timestamps and wall times.
 */
void write_bundle(const std::string& dir, const ExperimentConfig& cfg, const std::vector<SeedRun>& runs,
                  double wall_ms);

/** @brief Deterministic SVG with faint per-seed series and a bold median series. */
std::string line_plot_svg(const std::string& title, const std::string& ylabel,
                          const std::vector<std::vector<double>>& series);

/**
 * @brief Renders the two plots of a bundle into out_dir and returns their file names.
 * @throws MissingData when the bundle has no manifest or a listed CSV is missing
 */
std::vector<std::string> plot_bundle(const std::string& bundle_dir, const std::string& out_dir);

/** @brief Builds a witness/SAIL instance from its JSON document ("family" plus model data or a recipe). */
nlohmann::json sail_report(const nlohmann::json& instance, std::uint64_t cap = kDefaultCapLeaves);

/** @brief Generates an instance document for gen-env from a recipe. */
nlohmann::json generate_env(const nlohmann::json& recipe);

}  // namespace omle
