#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "omle/experiment.hpp"

using namespace omle;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("omle_unit_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("experiment config round trip and key checking") {
    nlohmann::json j{{"algorithm", "reward-free"},
                     {"K", 30},
                     {"seeds", {3, 4}},
                     {"class", {{"mode", "perturb"}, {"n", 7}, {"trueLast", true}}},
                     {"strategy", {{"kind", "uniform-tail"}}},
                     {"beta", 4.5}};
    const ExperimentConfig c = ExperimentConfig::from_json(j);
    CHECK(c.algorithm == "reward-free");
    CHECK(c.K == 30);
    CHECK(c.model_class.n == 7);
    CHECK(c.model_class.true_last);
    CHECK(*c.beta == 4.5);
    CHECK(ExperimentConfig::from_json(c.to_json()).to_json() == c.to_json());

    j["typo"] = 1;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
    j.erase("typo");
    j["class"]["sgima"] = 0.1;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"algorithm", "ucb"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"K", 0}}), ConfigError);
}

TEST_CASE("scenario construction") {
    ExperimentConfig c;
    c.K = 10;
    const SeedScenario a = build_scenario(c, 0);
    CHECK(a.cls.size() == 20);
    CHECK(a.cls.true_index == 0);
    CHECK(a.options.beta == doctest::Approx(beta_default(20, 10 * 3, 0.05, 2.0)));
    CHECK(a.certificate["alpha"].get<double>() >= 0.3);
    c.model_class.true_last = true;
    const SeedScenario b = build_scenario(c, 0);
    CHECK(b.cls.true_index == 19);
    const auto& last = dynamic_cast<const TabularPOMDP&>(*b.cls.models[19]);
    CHECK(last.to_json() == dynamic_cast<const TabularPOMDP&>(*a.cls.models[0]).to_json());
    const SeedScenario other = build_scenario(c, 1);
    CHECK(other.env.to_json() != a.env.to_json());
}

TEST_CASE("singleton class has zero regret") {
    ExperimentConfig c;
    c.model_class.mode = "singleton";
    c.K = 15;
    c.seeds = {0, 1};
    const auto runs = run_experiment(c, 2);
    REQUIRE(runs.size() == 2);
    for (const auto& r : runs) {
        CHECK(r.invariants_ok);
        for (double v : parse_csv(r.csv).series("suboptimality")) CHECK(std::abs(v) <= 1e-12);
    }
}

TEST_CASE("bundles are deterministic and aggregates come from the CSVs") {
    ExperimentConfig c;
    c.K = 12;
    c.seeds = {0, 1, 2};
    const fs::path d1 = scratch("bundle1"), d2 = scratch("bundle2");
    write_bundle(d1.string(), c, run_experiment(c, 1), 1.0);
    write_bundle(d2.string(), c, run_experiment(c, 3), 2.0);
    for (const char* f : {"config.json", "aggregate.json", "seed_0.csv", "seed_2.csv", "seed_1.json"})
        CHECK(slurp(d1 / f) == slurp(d2 / f));

    std::vector<CsvTable> tables;
    for (int s = 0; s < 3; ++s) tables.push_back(parse_csv(slurp(d1 / ("seed_" + std::to_string(s) + ".csv"))));
    nlohmann::json agg = aggregate_runs("omle", {0, 1, 2}, tables);
    agg["invariantsOk"] = true;
    CHECK(agg == nlohmann::json::parse(slurp(d1 / "aggregate.json")));
    CHECK(agg["window"] == 3);

    const auto names = plot_bundle(d1.string(), (d1 / "plots").string());
    CHECK(names == std::vector<std::string>{"suboptimality.svg", "tv2.svg"});
    plot_bundle(d2.string(), (d2 / "plots").string());
    CHECK(slurp(d1 / "plots" / "tv2.svg") == slurp(d2 / "plots" / "tv2.svg"));
    CHECK(slurp(d1 / "plots" / "tv2.svg").rfind("<svg", 0) == 0);

    CHECK_THROWS_AS(plot_bundle(scratch("missing").string(), "unused"), MissingData);
    const fs::path empty = scratch("empty");
    c.seeds = {};
    write_bundle(empty.string(), c, {}, 0.0);
    CHECK(plot_bundle(empty.string(), (empty / "plots").string()).empty());
    fs::remove_all(d1);
    fs::remove_all(d2);
    fs::remove_all(empty);
}

TEST_CASE("csv parsing") {
    const CsvTable t = parse_csv("a,b\n1,2.5\n3,-4e-3\n");
    CHECK(t.header.size() == 2);
    CHECK(t.series("b") == std::vector<double>{2.5, -4e-3});
    CHECK_THROWS_AS(t.column("c"), MissingData);
    CHECK_THROWS(parse_csv("a,b\n1\n"));
}

TEST_CASE("svg rendering is deterministic") {
    const std::vector<std::vector<double>> s{{1, 0.5, 0.25}, {2, 1, 0.5}, {0.5, 0.5, 0.1}};
    const std::string a = line_plot_svg("t<1>", "y", s);
    CHECK(a == line_plot_svg("t<1>", "y", s));
    CHECK(a.find("t&lt;1&gt;") != std::string::npos);
    CHECK(a.find("#d62728") != std::string::npos);
}

TEST_CASE("instance generation") {
    const auto doc = generate_env({{"family", "observable"}, {"seed", 3}});
    CHECK(doc["family"] == "pomdp");
    CHECK(doc["certificate"]["alpha"].get<double>() >= 0.3);
    const TabularPOMDP p = TabularPOMDP::from_json(doc["model"]);
    CHECK(p.spec().H == 3);
    CHECK(generate_env({{"family", "observable"}, {"seed", 3}}) == doc);
    CHECK_THROWS_AS(generate_env({{"family", "observable"}, {"Sx", 3}}), ConfigError);
    CHECK_THROWS_AS(generate_env({{"family", "zoo"}}), ConfigError);

    const auto chain = generate_env({{"family", "factored-chain"}, {"n", 3}});
    CHECK(chain["certificate"]["measuredRank"] == 4);
    CHECK(chain["certificate"]["claimedRank"] == 2);
    CHECK(chain["class"].size() == 4);
}

TEST_CASE("sail reports") {
    const auto chain = sail_report({{"family", "factored-chain"}, {"n", 3}, {"strong", {{"random", 2}}}});
    CHECK(chain["pass"] == true);
    CHECK(chain["rank"]["measured"] == 4);
    CHECK(chain.contains("strongSail"));
    CHECK(sail_report({{"family", "bandit"}, {"seed", 2}})["pass"] == true);
    CHECK(sail_report({{"family", "kernel-linear"}, {"seed", 2}})["pass"] == true);

    auto doc = generate_env({{"family", "factored-chain"}, {"n", 3}});
    doc["certificate"]["measuredRank"] = 2;
    CHECK_THROWS_AS(sail_report(doc), InvalidModel);
    CHECK_THROWS_AS(sail_report({{"family", "pomdp"}, {"truth", 1}}), ConfigError);
}
