#include "omle/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "omle/l1.hpp"
#include "omle/psr.hpp"

namespace omle {

namespace fs = std::filesystem;

namespace {


/** Typed access to a JSON object that remembers which keys were read. */
class Reader {
public:
    Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
    }
    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }
    bool has(const char* key) const { return j_.contains(key); }
    const nlohmann::json& at(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }
    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown key " + where_ + "." + k);
    }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw MissingData("cannot open " + p.string() + " for writing");
    f << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw MissingData("cannot open " + p.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/** Per-iteration statistic across seeds for one column. */
template <class F>
std::vector<double> across(const std::vector<CsvTable>& tables, const std::string& col, F stat) {
    std::size_t len = 0;
    for (const auto& t : tables) len = std::max(len, t.rows.size());
    std::vector<double> out;
    for (std::size_t k = 0; k < len; ++k) {
        std::vector<double> v;
        for (const auto& t : tables)
            if (k < t.rows.size()) v.push_back(t.rows[k][t.column(col)]);
        out.push_back(stat(v));
    }
    return out;
}

std::string fmt(double x, const char* f = "%.2f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

std::string seed_stem(std::uint64_t s) { return "seed_" + std::to_string(s); }

std::vector<std::vector<std::vector<int>>> core_actions_for(const StrategySpec& st, const TabularPOMDP& truth,
                                                            std::uint64_t cap) {
    if (st.core == "explicit") return st.core_actions;
    if (st.core == "observable") return pomdp_to_psr_observable(truth, st.m).rep.tests.QA;
    return select_core_tests(build_system_dynamics(truth, cap)).QA;
}

TabularPOMDP make_env(const EnvRecipe& r, std::uint64_t seed, nlohmann::json& cert) {
    const std::uint64_t s = r.seed + (r.per_seed ? seed : 0);
    if (r.family == "observable") {
        const CertifiedPomdp c = gen_observable_pomdp(r.S, r.O, r.A, r.H, r.alpha_min, s, r.m);
        cert = {{"alpha", c.alpha}, {"m", c.m}, {"attempts", c.attempts}, {"seed", s}};
        return c.model;
    }
    if (r.family == "counterexample-a" || r.family == "counterexample-b") {
        const auto pair = counterexample_pomdps(r.H);
        const TabularPOMDP& base = r.family == "counterexample-a" ? pair.first : pair.second;
        Rng rng(s);
        const TabularPOMDP p = base.with_rewards(random_rewards(base.spec(), rng));
        cert = {{"alpha", observability_alpha(p, 1).alpha}, {"m", 1}, {"seed", s}};
        return p;
    }
    const TabularPOMDP p = load_env_file(r.file);
    cert = {{"file", r.file}};
    return p;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    Reader r(j, "config");
    r.get("algorithm", c.algorithm);
    r.get("K", c.K);
    if (r.has("beta")) {
        double b = 0.0;
        r.get("beta", b);
        c.beta = b;
    }
    r.get("c", c.c);
    r.get("delta", c.delta);
    r.get("pMin", c.p_min);
    r.get("tvConst", c.tv_const);
    r.get("misspecified", c.misspecified);
    r.get("seeds", c.seeds);
    r.get("capLeaves", c.cap);
    r.get("rewardSeed", c.reward_seed);
    if (r.has("env")) {
        Reader e(r.at("env"), "env");
        e.get("family", c.env.family);
        e.get("S", c.env.S);
        e.get("O", c.env.O);
        e.get("A", c.env.A);
        e.get("H", c.env.H);
        e.get("alphaMin", c.env.alpha_min);
        e.get("m", c.env.m);
        e.get("seed", c.env.seed);
        e.get("perSeed", c.env.per_seed);
        e.get("file", c.env.file);
        e.finish();
    }
    if (r.has("class")) {
        Reader m(r.at("class"), "class");
        m.get("mode", c.model_class.mode);
        m.get("n", c.model_class.n);
        m.get("sigma", c.model_class.sigma);
        m.get("eps", c.model_class.eps);
        m.get("alphaMin", c.model_class.alpha_min);
        m.get("seed", c.model_class.seed);
        m.get("trueLast", c.model_class.true_last);
        m.finish();
    }
    if (r.has("strategy")) {
        Reader s(r.at("strategy"), "strategy");
        s.get("kind", c.strategy.kind);
        s.get("core", c.strategy.core);
        s.get("m", c.strategy.m);
        s.get("coreActions", c.strategy.core_actions);
        s.finish();
    }
    r.finish();
    c.validate();
    return c;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j{{"algorithm", algorithm},
                     {"env",
                      {{"family", env.family},
                       {"S", env.S},
                       {"O", env.O},
                       {"A", env.A},
                       {"H", env.H},
                       {"alphaMin", env.alpha_min},
                       {"m", env.m},
                       {"seed", env.seed},
                       {"perSeed", env.per_seed},
                       {"file", env.file}}},
                     {"class",
                      {{"mode", model_class.mode},
                       {"n", model_class.n},
                       {"sigma", model_class.sigma},
                       {"eps", model_class.eps},
                       {"alphaMin", model_class.alpha_min},
                       {"seed", model_class.seed},
                       {"trueLast", model_class.true_last}}},
                     {"strategy",
                      {{"kind", strategy.kind},
                       {"core", strategy.core},
                       {"m", strategy.m},
                       {"coreActions", strategy.core_actions}}},
                     {"K", K},
                     {"c", c},
                     {"delta", delta},
                     {"pMin", p_min},
                     {"tvConst", tv_const},
                     {"misspecified", misspecified},
                     {"seeds", seeds},
                     {"capLeaves", cap},
                     {"rewardSeed", reward_seed}};
    if (beta) j["beta"] = *beta;
    return j;
}

void ExperimentConfig::validate() const {
    if (algorithm != "omle" && algorithm != "reward-free") throw ConfigError("algorithm must be omle or reward-free");
    static const std::set<std::string> families{"observable", "counterexample-a", "counterexample-b", "file"};
    if (!families.count(env.family)) throw ConfigError("unknown env family " + env.family);
    if (env.family == "file" && env.file.empty()) throw ConfigError("env.file is required for the file family");
    if (model_class.mode != "singleton" && model_class.mode != "perturb" && model_class.mode != "grid")
        throw ConfigError("class.mode must be singleton, perturb or grid");
    ExplorationStrategy::parse_kind(strategy.kind);
    if (strategy.core != "observable" && strategy.core != "spectral" && strategy.core != "explicit")
        throw ConfigError("strategy.core must be observable, spectral or explicit");
    if (K < 1) throw ConfigError("K must be positive");
    if (beta && !(*beta >= 0.0)) throw ConfigError("beta must be nonnegative");
    if (!(c > 0.0) || !(delta > 0.0 && delta <= 1.0)) throw ConfigError("beta sizing needs c > 0 and delta in (0, 1]");
    if (p_min < 0.0) throw ConfigError("pMin must be nonnegative");
}

TabularPOMDP load_env_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidModel(path + ": " + e.what());
    }
    if (!j.contains("model")) return TabularPOMDP::from_json(j);
    for (const auto& [k, _] : j.items())
        if (k != "family" && k != "model" && k != "certificate" && k != "recipe")
            throw InvalidModel("unknown environment document key " + k);
    TabularPOMDP p = TabularPOMDP::from_json(j.at("model"));
    if (j.contains("certificate") && j["certificate"].contains("alpha")) {
        const int m = j["certificate"].value("m", 1);
        const double claimed = j["certificate"]["alpha"].get<double>();
        const double measured = observability_alpha(p, m).alpha;
        if (std::abs(measured - claimed) > 1e-9)
            throw InvalidModel("certificate alpha " + std::to_string(claimed) + " does not re-verify (measured " +
                               std::to_string(measured) + ")");
    }
    return p;
}

SeedScenario build_scenario(const ExperimentConfig& cfg, std::uint64_t seed) {
    nlohmann::json cert;
    TabularPOMDP env = make_env(cfg.env, seed, cert);
    SeedScenario sc{std::move(env), std::move(cert), {}, {}, {}};
    const std::uint64_t cs = cfg.model_class.seed + seed;
    if (cfg.model_class.mode == "singleton") {
        sc.cls.models.push_back(std::make_shared<TabularPOMDP>(sc.env));
        sc.cls.true_index = 0;
        sc.cls.provenance = "singleton";
    } else {
        ClassRecipe rec;
        rec.mode = cfg.model_class.mode == "grid" ? ClassRecipe::Mode::Grid : ClassRecipe::Mode::Perturb;
        rec.n = cfg.model_class.n;
        rec.sigma = cfg.model_class.sigma;
        rec.eps = cfg.model_class.eps;
        rec.alpha_min = cfg.model_class.alpha_min;
        rec.alpha_m = cfg.env.m;
        sc.cls = gen_model_class(sc.env, rec, cs);
    }
    if (cfg.model_class.true_last && sc.cls.size() > 1) {
        std::rotate(sc.cls.models.begin(), sc.cls.models.begin() + 1, sc.cls.models.end());
        sc.cls.true_index = sc.cls.size() - 1;
    }
    const auto kind = ExplorationStrategy::parse_kind(cfg.strategy.kind);
    if (kind == ExplorationStrategy::Kind::PsrCore)
        sc.strategy = ExplorationStrategy::psr_core(core_actions_for(cfg.strategy, sc.env, cfg.cap));
    else if (kind == ExplorationStrategy::Kind::Identity)
        sc.strategy = ExplorationStrategy::identity();
    else
        sc.strategy = ExplorationStrategy::uniform_tail();
    sc.strategy.validate(sc.env.spec());
    const auto per_iter = make_exploration(sc.strategy, HistoryPolicy::uniform(sc.env.spec())).size();
    RunOptions& o = sc.options;
    o.K = cfg.K;
    o.seed = seed;
    o.p_min = cfg.p_min;
    o.tv_const = cfg.tv_const;
    o.misspecified = cfg.misspecified;
    o.cap = cfg.cap;
    o.beta = cfg.beta ? *cfg.beta
                      : beta_default(sc.cls.size(), static_cast<std::uint64_t>(cfg.K) * per_iter, cfg.delta, cfg.c);
    return sc;
}

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    SeedRun out;
    out.seed = seed;
    try {
        const SeedScenario sc = build_scenario(cfg, seed);
        if (cfg.algorithm == "omle") {
            const OmleResult r = run_omle(sc.cls, sc.env, sc.strategy, sc.options);
            out.csv = r.log.csv();
            out.summary = r.summary();
            int prev = sc.cls.size();
            for (const auto& it : r.log.iters) {
                if (!it.optimism_ok) out.failures.push_back("optimism fails at k=" + std::to_string(it.k));
                if (!it.tv_ok) out.failures.push_back("TV control fails at k=" + std::to_string(it.k));
                if (it.alive > prev) out.failures.push_back("confidence set grows at k=" + std::to_string(it.k));
                prev = it.alive;
            }
        } else {
            const RewardFreeResult r = run_reward_free(sc.cls, sc.env, sc.strategy, sc.options);
            out.csv = r.log.csv();
            out.summary = r.summary();
            int prev = sc.cls.size();
            for (const auto& it : r.log.iters) {
                if (!it.tv_ok) out.failures.push_back("TV control fails at k=" + std::to_string(it.k));
                if (it.alive > prev) out.failures.push_back("confidence set grows at k=" + std::to_string(it.k));
                prev = it.alive;
            }
            Rng rng(cfg.reward_seed + seed);
            const auto R = random_rewards(sc.env.spec(), rng);
            const double loss = planning_loss(*sc.cls.models[r.theta_out], sc.env, R, cfg.cap);
            const double bound = 2.0 * sc.env.spec().H * r.tv_error;
            out.summary["planningLoss"] = loss;
            out.summary["planningBound"] = bound;
            if (loss > bound + 1e-9) out.failures.push_back("fresh-reward planning loss exceeds 2H·TV");
        }
        out.summary["certificate"] = sc.certificate;
        out.summary["classSize"] = sc.cls.size();
    } catch (const Error& e) {
        out.failures.push_back(e.what());
        out.summary = {{"error", e.kind()}, {"message", e.what()}, {"seed", seed}};
    }
    out.invariants_ok = out.failures.empty();
    out.summary["invariantsOk"] = out.invariants_ok;
    out.summary["failures"] = out.failures;
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

int thread_limit() {
    int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* v = std::getenv("PSR_OMLE_THREADS")) {
        const int t = std::atoi(v);
        if (t < 1) throw ConfigError("PSR_OMLE_THREADS must be a positive integer");
        n = t;
    }
    return n;
}

std::vector<SeedRun> run_experiment(const ExperimentConfig& cfg, int threads) {
    cfg.validate();
    std::vector<SeedRun> runs(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) runs[i] = run_seed(cfg, cfg.seeds[i]);
    };
    const int n = std::max(1, std::min<int>(threads, static_cast<int>(runs.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return runs;
}

int CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MissingData("CSV has no column " + name);
    return static_cast<int>(it - header.begin());
}

std::vector<double> CsvTable::series(const std::string& name) const {
    const int c = column(name);
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r[c]);
    return v;
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    if (!std::getline(in, line)) throw MissingData("empty CSV");
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != t.header.size()) throw MissingData("ragged CSV row: " + line);
        std::vector<double> row;
        for (const auto& c : cells) row.push_back(std::strtod(c.c_str(), nullptr));
        t.rows.push_back(std::move(row));
    }
    return t;
}

nlohmann::json aggregate_runs(const std::string& algorithm, const std::vector<std::uint64_t>& seeds,
                              const std::vector<CsvTable>& tables) {
    nlohmann::json j{{"algorithm", algorithm}, {"seeds", seeds}};
    if (tables.empty()) return j;
    auto rate = [&](const std::string& col) {
        double hit = 0.0, n = 0.0;
        for (const auto& t : tables)
            for (double v : t.series(col)) {
                hit += v;
                n += 1.0;
            }
        return n > 0.0 ? hit / n : 0.0;
    };
    auto failures = [&](const std::string& col) {
        int bad = 0;
        for (const auto& t : tables)
            for (double v : t.series(col)) bad += v == 0.0;
        return bad;
    };
    j["meanAlive"] = across(tables, "alive", mean);
    j["thetaStarAliveRate"] = rate("theta_star_alive");
    j["tvBoundViolations"] = failures("tv_bound_ok");
    if (algorithm == "omle") {
        j["meanSuboptimality"] = across(tables, "suboptimality", mean);
        j["medianSuboptimality"] = across(tables, "suboptimality", median);
        j["optimismViolations"] = failures("optimism_ok");
        std::vector<double> first, last;
        std::size_t window = 0;
        for (const auto& t : tables) {
            const auto s = t.series("suboptimality");
            window = std::max<std::size_t>(1, s.size() / 4);
            first.push_back(mean({s.begin(), s.begin() + static_cast<long>(std::min(window, s.size()))}));
            last.push_back(mean({s.end() - static_cast<long>(std::min(window, s.size())), s.end()}));
        }
        j["window"] = window;
        j["firstWindowMean"] = first;
        j["lastWindowMean"] = last;
        j["medianFirstWindow"] = median(first);
        j["medianLastWindow"] = median(last);
    } else {
        j["medianTvError"] = across(tables, "tv_error", median);
        j["meanTvError"] = across(tables, "tv_error", mean);
        j["medianDiameter"] = across(tables, "diameter", median);
        std::vector<double> final_tv;
        for (const auto& t : tables) final_tv.push_back(t.rows.empty() ? 0.0 : t.series("tv_error").back());
        j["finalTvError"] = final_tv;
        j["medianFinalTvError"] = median(final_tv);
    }
    return j;
}

void write_bundle(const std::string& dir, const ExperimentConfig& cfg, const std::vector<SeedRun>& runs,
                  double wall_ms) {
    const fs::path root(dir);
    fs::create_directories(root);
    write_file(root / "config.json", cfg.to_json().dump(2) + "\n");
    std::vector<std::uint64_t> seeds;
    std::vector<CsvTable> tables;
    nlohmann::json files = nlohmann::json::array({"config.json", "aggregate.json"});
    nlohmann::json seed_wall = nlohmann::json::object();
    bool ok = true;
    for (const auto& r : runs) {
        const std::string stem = seed_stem(r.seed);
        write_file(root / (stem + ".json"), r.summary.dump(2) + "\n");
        files.push_back(stem + ".json");
        seed_wall[std::to_string(r.seed)] = r.wall_ms;
        ok = ok && r.invariants_ok;
        if (r.csv.empty()) continue;
        write_file(root / (stem + ".csv"), r.csv);
        files.push_back(stem + ".csv");
        seeds.push_back(r.seed);
        tables.push_back(parse_csv(read_file(root / (stem + ".csv"))));
    }
    nlohmann::json agg = aggregate_runs(cfg.algorithm, seeds, tables);
    agg["invariantsOk"] = ok;
    write_file(root / "aggregate.json", agg.dump(2) + "\n");
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    const nlohmann::json manifest{{"tool", "omle-bench"},
                                  {"version", kVersion},
                                  {"algorithm", cfg.algorithm},
                                  {"createdAt", stamp},
                                  {"wallMs", wall_ms},
                                  {"seedWallMs", seed_wall},
                                  {"seeds", seeds},
                                  {"files", files},
                                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                std::to_string(EIGEN_MINOR_VERSION)}};
    write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

std::string line_plot_svg(const std::string& title, const std::string& ylabel,
                          const std::vector<std::vector<double>>& series) {
    constexpr double W = 640, Ht = 400, L = 70, R = 20, T = 40, B = 50;
    std::size_t len = 0;
    double ymax = 0.0, ymin = 0.0;
    for (const auto& s : series) {
        len = std::max(len, s.size());
        for (double v : s) {
            ymax = std::max(ymax, v);
            ymin = std::min(ymin, v);
        }
    }
    if (!(ymax > ymin)) ymax = ymin + 1.0;
    const double xspan = len > 1 ? static_cast<double>(len - 1) : 1.0;
    auto X = [&](std::size_t k) { return L + (W - L - R) * static_cast<double>(k) / xspan; };
    auto Y = [&](double v) { return Ht - B - (Ht - T - B) * (v - ymin) / (ymax - ymin); };
    auto polyline = [&](const std::vector<double>& s, const char* style) {
        std::string pts;
        for (std::size_t k = 0; k < s.size(); ++k) pts += (k ? " " : "") + fmt(X(k)) + "," + fmt(Y(s[k]));
        return "  <polyline fill=\"none\" " + std::string(style) + " points=\"" + pts + "\"/>\n";
    };
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Ht << "\" viewBox=\"0 0 " << W
      << ' ' << Ht << "\">\n";
    o << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "  <text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
    o << "  <line x1=\"" << L << "\" y1=\"" << Ht - B << "\" x2=\"" << W - R << "\" y2=\"" << Ht - B
      << "\" stroke=\"black\"/>\n";
    o << "  <line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << Ht - B << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = ymin + (ymax - ymin) * t / 4.0;
        o << "  <text x=\"" << L - 6 << "\" y=\"" << fmt(Y(v) + 4)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v, "%.3g") << "</text>\n";
        const std::size_t k = static_cast<std::size_t>(std::lround(xspan * t / 4.0));
        o << "  <text x=\"" << fmt(X(k)) << "\" y=\"" << Ht - B + 16
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << k + 1 << "</text>\n";
    }
    o << "  <text x=\"" << (L + W - R) / 2 << "\" y=\"" << Ht - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">iteration k</text>\n";
    o << "  <text x=\"16\" y=\"" << (T + Ht - B) / 2 << "\" transform=\"rotate(-90 16 " << (T + Ht - B) / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(ylabel)
      << "</text>\n";
    for (const auto& s : series) o << polyline(s, "stroke=\"#1f77b4\" stroke-opacity=\"0.25\" stroke-width=\"1\"");
    std::vector<double> med;
    for (std::size_t k = 0; k < len; ++k) {
        std::vector<double> v;
        for (const auto& s : series)
            if (k < s.size()) v.push_back(s[k]);
        med.push_back(median(v));
    }
    if (!series.empty()) o << polyline(med, "stroke=\"#d62728\" stroke-width=\"2\"");
    o << "</svg>\n";
    return o.str();
}

std::vector<std::string> plot_bundle(const std::string& bundle_dir, const std::string& out_dir) {
    const fs::path root(bundle_dir);
    if (!fs::exists(root / "manifest.json")) throw MissingData("no manifest.json in " + bundle_dir);
    const auto manifest = nlohmann::json::parse(read_file(root / "manifest.json"));
    const auto seeds = manifest.at("seeds").get<std::vector<std::uint64_t>>();
    const std::string algorithm = manifest.at("algorithm");
    if (seeds.empty()) return {};
    std::vector<CsvTable> tables;
    for (auto s : seeds) tables.push_back(parse_csv(read_file(root / (seed_stem(s) + ".csv"))));
    auto collect = [&](const std::string& col) {
        std::vector<std::vector<double>> out;
        for (const auto& t : tables) out.push_back(t.series(col));
        return out;
    };
    fs::create_directories(out_dir);
    std::vector<std::pair<std::string, std::string>> plots;
    if (algorithm == "omle") {
        plots.emplace_back("suboptimality.svg",
                           line_plot_svg("OMLE suboptimality", "V* - V(pi_k)", collect("suboptimality")));
        plots.emplace_back("tv2.svg", line_plot_svg("Cumulative squared TV of survivors", "sum TV^2",
                                                    collect("sum_tv2")));
    } else {
        plots.emplace_back("tv_error.svg",
                           line_plot_svg("Reward-free model error", "max_pi TV(theta_out, env)", collect("tv_error")));
        plots.emplace_back("diameter.svg",
                           line_plot_svg("Confidence-set diameter", "max_pi TV over alive pair", collect("diameter")));
    }
    std::vector<std::string> names;
    for (const auto& [name, svg] : plots) {
        write_file(fs::path(out_dir) / name, svg);
        names.push_back(name);
    }
    return names;
}

}  // namespace omle
