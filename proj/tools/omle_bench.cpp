#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "omle/experiment.hpp"
#include "omle/gamma.hpp"
#include "omle/l1.hpp"
#include "omle/psr.hpp"

using namespace omle;

namespace {

constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

nlohmann::json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingData("cannot open " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void emit(const nlohmann::json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) throw MissingData("cannot open " + out + " for writing");
    f << j.dump(2) << '\n';
}

int fail(const std::string& kind, const std::string& msg, int code) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", msg}}.dump() << '\n';
    return code;
}

Decoder make_decoder(const std::string& name) {
    if (name == "prev-action") return [](int h, const Trajectory& z) { return h == 1 ? 0 : z.acts.back(); };
    if (name == "observation") return [](int, const Trajectory& z) { return z.obs.back(); };
    throw ConfigError("unknown decoder " + name + " (prev-action or observation)");
}

nlohmann::json alpha_json(const AlphaReport& a) {
    return {{"m", a.m},
            {"alpha", a.alpha},
            {"perStep", a.alpha_h},
            {"argminH", a.argmin_h},
            {"witness",
             {{"nu1", std::vector<double>(a.witness.nu1.data(), a.witness.nu1.data() + a.witness.nu1.size())},
              {"nu2", std::vector<double>(a.witness.nu2.data(), a.witness.nu2.data() + a.witness.nu2.size())}}}};
}

/** Runs one diagnostic, turning library failures into a structured entry. */
template <class F>
nlohmann::json guarded(F f) {
    try {
        return f();
    } catch (const Error& e) {
        return {{"error", e.kind()}, {"message", e.what()}};
    }
}

struct Common {
    std::string config, out;
    std::uint64_t seed_offset = 0;
    std::uint64_t cap = kDefaultCapLeaves;
};

int run_algorithm(const Common& c, const std::string& algorithm) {
    nlohmann::json j = read_json(c.config);
    if (j.is_object() && !j.contains("algorithm")) j["algorithm"] = algorithm;
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    if (cfg.algorithm != algorithm)
        throw ConfigError("config algorithm " + cfg.algorithm + " does not match run-" + algorithm);
    for (auto& s : cfg.seeds) s += c.seed_offset;
    if (c.cap != kDefaultCapLeaves) cfg.cap = c.cap;
    const auto t0 = std::chrono::steady_clock::now();
    const auto runs = run_experiment(cfg, thread_limit());
    const double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    write_bundle(c.out, cfg, runs, wall);
    int bad = 0;
    for (const auto& r : runs)
        if (!r.invariants_ok) {
            ++bad;
            std::cerr << nlohmann::json{{"seed", r.seed}, {"failures", r.failures}}.dump() << '\n';
        }
    std::cout << (bad ? "FAIL" : "OK") << ": " << runs.size() - bad << "/" << runs.size()
              << " seeds passed invariants; bundle in " << c.out << '\n';
    return bad ? kExitInvariant : 0;
}

struct DiagnoseArgs {
    std::string model, out, gamma, decoder = "prev-action";
    int alpha_m = 0, m = 1;
    bool rank = false, spanner = false, l1inv = false;
    std::uint64_t cap = kDefaultCapLeaves;
};

int diagnose(const DiagnoseArgs& a) {
    const TabularPOMDP p = load_env_file(a.model);
    const auto& sp = p.spec();
    nlohmann::json rep{{"model", a.model}, {"spec", {{"S", sp.S}, {"O", sp.O}, {"A", sp.A}, {"H", sp.H}}}};
    if (a.alpha_m > 0) rep["alpha"] = guarded([&] { return alpha_json(observability_alpha(p, a.alpha_m)); });
    if (a.rank)
        rep["rank"] = guarded([&]() -> nlohmann::json {
            const RankReport r = psr_rank(build_system_dynamics(p, a.cap));
            return {{"perStep", r.rank_h}, {"rank", r.rank}};
        });
    if (!a.gamma.empty())
        rep["gamma"] = guarded([&]() -> nlohmann::json {
            ConstructedPsr c;
            nlohmann::json g{{"construction", a.gamma}, {"m", a.m}};
            if (a.gamma == "observable") {
                c = pomdp_to_psr_observable(p, a.m);
                g["alpha"] = c.alpha;
                g["bound"] = 8.0 * sp.S / c.alpha * std::pow(sp.A, a.m - 1);
            } else if (a.gamma == "decodable") {
                const Decoder d = make_decoder(a.decoder);
                check_decoder(p, d, a.m);
                g["decodable"] = true;
                g["decoder"] = a.decoder;
                c = pomdp_to_psr_decodable(p, d, a.m);
                g["bound"] = 1.0;
            } else {
                throw ConfigError("gamma construction must be observable or decodable");
            }
            const GammaReport gr = gamma_well_conditioned(c.rep);
            g["report"] = gr.to_json();
            g["gammaInv"] = gr.gamma_inv;
            g["check"] = c.check.to_json();
            g["withinBound"] = gr.gamma_inv <= g["bound"].get<double>() + 1e-9;
            return g;
        });
    if (a.spanner)
        rep["spanner"] = guarded([&] {
            const SystemDynamics sd = build_system_dynamics(p, a.cap);
            nlohmann::json per = nlohmann::json::array();
            for (int h = 0; h < sp.H; ++h) {
                const Spanner s = barycentric_spanner(sd.D[h], 1.01, true);
                per.push_back({{"h", h}, {"indices", s.indices}, {"rank", s.rank}, {"C", s.C}, {"maxCoef", s.max_coef}});
            }
            return per;
        });
    if (a.l1inv)
        rep["l1inv"] = guarded([&] {
            const int m = std::max(1, a.alpha_m);
            nlohmann::json per = nlohmann::json::array();
            for (int h = 1; h <= sp.H - m + 1; ++h) {
                const Eigen::MatrixXd M = mstep_matrix(p, h, m);
                nlohmann::json e{{"h", h}};
                try {
                    const L1Inverse inv = l1_min_pseudoinverse(M);
                    const double alpha = alpha_of_matrix(M).alpha;
                    e.update({{"norm", inv.norm},
                              {"pinvNorm", inv.pinv_norm},
                              {"residual", inv.residual},
                              {"alpha", alpha},
                              {"bound", alpha > 0 ? sp.S / alpha : -1.0}});
                } catch (const Error& err) {
                    e.update({{"error", err.kind()}, {"message", err.what()}});
                }
                per.push_back(e);
            }
            return per;
        });
    emit(rep, a.out);
    return 0;
}

struct PsrArgs {
    std::string model, out, construction = "spectral", decoder = "prev-action", psr_in, psr_out;
    int m = 1;
    bool oom = false;
    std::uint64_t cap = kDefaultCapLeaves;
};

int verify_psr_cmd(const PsrArgs& a) {
    const TabularPOMDP p = load_env_file(a.model);
    const CondTable table = cond_table(p, a.cap);
    nlohmann::json rep{{"model", a.model}};
    PsrRep psr;
    if (!a.psr_in.empty()) {
        psr = PsrRep::from_json(read_json(a.psr_in));
    } else if (a.construction == "spectral") {
        const SystemDynamics sd = build_system_dynamics(p, a.cap);
        const SelfConsistentPsr sc = build_self_consistent_psr(sd, select_core_tests(sd));
        psr = sc.rep;
        rep["selfConsistent"] = sc.check.to_json();
    } else if (a.construction == "observable") {
        const ConstructedPsr c = pomdp_to_psr_observable(p, a.m);
        psr = c.rep;
        rep["alpha"] = c.alpha;
        rep["inverseNorms"] = c.inverse_norms;
    } else if (a.construction == "decodable") {
        psr = pomdp_to_psr_decodable(p, make_decoder(a.decoder), a.m).rep;
    } else {
        throw ConfigError("construction must be spectral, observable or decodable");
    }
    rep["construction"] = a.psr_in.empty() ? a.construction : "file";
    std::vector<int> dims;
    for (int h = 0; h < p.spec().H; ++h) dims.push_back(psr.dim(h));
    rep["dims"] = dims;
    rep["coreActions"] = psr.tests.QA;
    const PsrCheck chk = verify_psr(psr, table);
    rep["check"] = chk.to_json();
    rep["gamma"] = guarded([&] { return gamma_well_conditioned(psr).to_json(); });
    bool pass = chk.psr1 <= 1e-8 && chk.psr2 <= 1e-8;
    if (a.oom)
        rep["oom"] = guarded([&] { return build_oom(build_system_dynamics(p, a.cap)).check.to_json(); });
    rep["pass"] = pass;
    if (!a.psr_out.empty()) emit(psr.to_json(), a.psr_out);
    emit(rep, a.out);
    return pass ? 0 : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimistic MLE experiments, PSR diagnostics and SAIL certificates"};
    app.require_subcommand(1);

    Common omle_args, rf_args;
    auto add_common = [](CLI::App* sub, Common& c) {
        sub->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", c.out, "bundle directory")->required();
        sub->add_option("--seed-offset", c.seed_offset, "added to every configured seed");
        sub->add_option("--cap-leaves", c.cap, "limit on enumerated trajectories");
    };
    auto* run_omle_cmd = app.add_subcommand("run-omle", "run OMLE over every configured seed");
    add_common(run_omle_cmd, omle_args);
    auto* run_rf_cmd = app.add_subcommand("run-reward-free", "run reward-free OMLE over every configured seed");
    add_common(run_rf_cmd, rf_args);

    DiagnoseArgs da;
    auto* diag = app.add_subcommand("diagnose", "observability, rank, gamma, spanner and l1-inverse diagnostics");
    diag->add_option("--model", da.model, "POMDP JSON (bare or gen-env document)")->required()->check(CLI::ExistingFile);
    diag->add_option("--alpha", da.alpha_m, "m for the m-step observability coefficient");
    diag->add_option("--gamma", da.gamma, "PSR construction for gamma: observable | decodable");
    diag->add_option("--m", da.m, "construction window m");
    diag->add_option("--decoder", da.decoder, "decoder for the decodable construction: prev-action | observation");
    diag->add_flag("--rank", da.rank, "rank of every system-dynamics matrix");
    diag->add_flag("--spanner", da.spanner, "Barycentric spanner of each D_h");
    diag->add_flag("--l1inv", da.l1inv, "l1-minimal left inverses of the m-step matrices");
    diag->add_option("--out", da.out, "report file (default: stdout)");
    diag->add_option("--cap-leaves", da.cap, "limit on enumerated trajectories");

    PsrArgs pa;
    auto* vpsr = app.add_subcommand("verify-psr", "build or load a PSR and check it against exact dynamics");
    vpsr->add_option("--model", pa.model, "POMDP JSON")->required()->check(CLI::ExistingFile);
    vpsr->add_option("--construction", pa.construction, "spectral | observable | decodable");
    vpsr->add_option("--m", pa.m, "construction window m");
    vpsr->add_option("--decoder", pa.decoder, "decoder for the decodable construction");
    vpsr->add_option("--psr", pa.psr_in, "verify this PSR JSON instead of building one")->check(CLI::ExistingFile);
    vpsr->add_option("--psr-out", pa.psr_out, "write the PSR JSON here");
    vpsr->add_flag("--oom", pa.oom, "also build and check the observable operator model");
    vpsr->add_option("--out", pa.out, "report file (default: stdout)");
    vpsr->add_option("--cap-leaves", pa.cap, "limit on enumerated trajectories");

    Common sail_args;
    auto* vsail = app.add_subcommand("verify-sail", "witness and SAIL certificates for an instance or recipe");
    vsail->add_option("--config", sail_args.config, "instance or recipe JSON")->required()->check(CLI::ExistingFile);
    vsail->add_option("--out", sail_args.out, "certificate file (default: stdout)");
    vsail->add_option("--cap-leaves", sail_args.cap, "limit on enumerated trajectories");

    Common gen_args;
    auto* gen = app.add_subcommand("gen-env", "generate an environment or model-class instance from a recipe");
    gen->add_option("--config", gen_args.config, "recipe JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", gen_args.out, "instance file (default: stdout)");
    gen->add_option("--seed-offset", gen_args.seed_offset, "added to the recipe seed");

    std::string bundle, plot_out;
    auto* plot = app.add_subcommand("plot", "render SVG plots from a run bundle");
    plot->add_option("--bundle", bundle, "bundle directory")->required();
    plot->add_option("--out", plot_out, "output directory (default: the bundle)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("ConfigError", e.what(), kExitConfig);
    }

    try {
        if (*run_omle_cmd) return run_algorithm(omle_args, "omle");
        if (*run_rf_cmd) return run_algorithm(rf_args, "reward-free");
        if (*diag) return diagnose(da);
        if (*vpsr) return verify_psr_cmd(pa);
        if (*vsail) {
            const nlohmann::json report = sail_report(read_json(sail_args.config), sail_args.cap);
            emit(report, sail_args.out);
            return report["pass"].get<bool>() ? 0 : kExitInvariant;
        }
        if (*gen) {
            nlohmann::json recipe = read_json(gen_args.config);
            if (gen_args.seed_offset && recipe.is_object())
                recipe["seed"] = recipe.value("seed", std::uint64_t{0}) + gen_args.seed_offset;
            emit(generate_env(recipe), gen_args.out);
            return 0;
        }
        if (*plot) {
            const auto files = plot_bundle(bundle, plot_out.empty() ? bundle : plot_out);
            if (files.empty()) std::cerr << "warning: bundle lists no seeds, no plots written\n";
            for (const auto& f : files) std::cout << f << '\n';
            return 0;
        }
    } catch (const ConfigError& e) {
        return fail(e.kind(), e.what(), kExitConfig);
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), kExitRuntime);
    } catch (const nlohmann::json::exception& e) {
        return fail("InvalidModel", e.what(), kExitRuntime);
    } catch (const std::exception& e) {
        return fail("Error", e.what(), kExitRuntime);
    }
    return 0;
}
