#include "omle/psr.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "omle/l1.hpp"

namespace omle {

namespace {

Eigen::BDCSVD<Eigen::MatrixXd> thin_svd(const Eigen::MatrixXd& M) {
    return Eigen::BDCSVD<Eigen::MatrixXd>(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

int rank_of(const Eigen::VectorXd& sv, double tol) {
    if (sv.size() == 0 || !(sv[0] > 0.0)) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > tol * sv[0]) ++r;
    return r;
}

int big_rank(const Eigen::MatrixXd& M, double tol) {
    if (M.size() == 0) return 0;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
    return rank_of(svd.singularValues(), tol);
}

double spectral_norm(const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    return svd.singularValues()[0];
}

Eigen::MatrixXd left_pinv(const Eigen::MatrixXd& M, const std::string& what, double tol) {
    if (numerical_rank(M, tol) < M.cols())
        throw RankDeficientSelection(what + " does not have full column rank");
    return M.completeOrthogonalDecomposition().pseudoInverse();
}

std::vector<double> json_vec(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

SystemDynamics SystemDynamics::from_table(const CondTable& table) {
    SystemDynamics sd;
    sd.spec = table.spec;
    const auto& sp = sd.spec;
    const auto& leaves = table.leaves();
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    for (int h = 0; h < sp.H; ++h) {
        const auto rows = static_cast<Eigen::Index>(sp.tree_size(h, UINT64_MAX));
        const auto cols = static_cast<Eigen::Index>(sp.tree_size(sp.H - h, UINT64_MAX));
        sd.D.emplace_back(Eigen::Map<const RowMajor>(leaves.data(), rows, cols));
    }
    return sd;
}

SystemDynamics build_system_dynamics(const HistoryModel& model, std::uint64_t cap) {
    return SystemDynamics::from_table(cond_table(model, cap));
}

RankReport psr_rank(const SystemDynamics& sd, double tol) {
    RankReport rep;
    for (const auto& D : sd.D) {
        rep.rank_h.push_back(big_rank(D, tol));
        rep.rank = std::max(rep.rank, rep.rank_h.back());
    }
    return rep;
}

int support_rank(const HistoryModel& model, int h, double tol, std::uint64_t max_support) {
    const auto& sp = model.spec();
    if (h < 0 || h >= sp.H) throw InvalidModel("support_rank needs h in [0, H-1]");
    const std::uint64_t rest = ipow(static_cast<std::uint64_t>(sp.pairs()), sp.H - h);
    std::map<std::uint64_t, int> rows, cols;
    std::vector<std::tuple<int, int, double>> entries;
    std::function<void(int, std::uint64_t, const Eigen::VectorXd&, double)> walk =
        [&](int depth, std::uint64_t idx, const Eigen::VectorXd& state, double P) {
            const int step = depth + 1;
            const Eigen::VectorXd p = model.obs_probs(step, state);
            for (int o = 0; o < sp.O; ++o) {
                if (!(p[o] > kZeroProb)) continue;
                const double child = P * p[o];
                for (int a = 0; a < sp.A; ++a) {
                    const std::uint64_t cidx = idx * sp.pairs() + static_cast<std::uint64_t>(o * sp.A + a);
                    if (step == sp.H) {
                        if (entries.size() >= max_support)
                            throw CapExceeded("support exceeds " + std::to_string(max_support) + " leaves");
                        const std::uint64_t r = cidx / rest, c = cidx % rest;
                        auto ri = rows.emplace(r, static_cast<int>(rows.size())).first->second;
                        auto ci = cols.emplace(c, static_cast<int>(cols.size())).first->second;
                        entries.emplace_back(ri, ci, child);
                    } else {
                        walk(step, cidx, model.advance(step, state, o, a, p[o]), child);
                    }
                }
            }
        };
    walk(0, 0, model.initial_state(), 1.0);
    const double cells = static_cast<double>(rows.size()) * static_cast<double>(cols.size());
    if (cells > 2e8) throw CapExceeded("support matrix too large for a dense rank");
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()),
                                              static_cast<Eigen::Index>(cols.size()));
    for (const auto& [r, c, v] : entries) D(r, c) = v;
    return big_rank(D, tol);
}

std::string CoreTest::to_string() const {
    std::ostringstream s;
    for (int k = 0; k < length(); ++k) {
        if (k) s << " a" << acts[k - 1] << " ";
        s << "o" << obs[k];
    }
    return s.str();
}

std::vector<CoreTest> enumerate_tests(const EpisodeSpec& spec, int max_len) {
    std::vector<CoreTest> out;
    for (int L = 1; L <= max_len; ++L) {
        const std::uint64_t n = spec.tree_size(L - 1) * static_cast<std::uint64_t>(spec.O);
        for (std::uint64_t idx = 0; idx < n; ++idx) {
            CoreTest q;
            q.obs.assign(L, 0);
            q.acts.assign(L - 1, 0);
            std::uint64_t r = idx;
            q.obs[L - 1] = static_cast<int>(r % spec.O);
            r /= spec.O;
            for (int k = L - 2; k >= 0; --k) {
                const int pair = static_cast<int>(r % spec.pairs());
                r /= spec.pairs();
                q.obs[k] = pair / spec.A;
                q.acts[k] = pair % spec.A;
            }
            out.push_back(std::move(q));
        }
    }
    return out;
}

std::vector<std::uint64_t> test_columns(const EpisodeSpec& spec, int h, const CoreTest& q, double& weight) {
    const int L = q.length();
    if (L < 1 || L > spec.H - h || static_cast<int>(q.acts.size()) != L - 1)
        throw InvalidModel("test " + q.to_string() + " does not fit step " + std::to_string(h));
    const std::uint64_t P = spec.pairs();
    std::uint64_t prefix = 0;
    for (int k = 0; k + 1 < L; ++k) prefix = prefix * P + static_cast<std::uint64_t>(q.obs[k] * spec.A + q.acts[k]);
    const std::uint64_t rest = ipow(P, spec.H - h - L);
    std::vector<std::uint64_t> cols;
    cols.reserve(spec.A * rest);
    for (int a = 0; a < spec.A; ++a) {
        const std::uint64_t head = (prefix * P + static_cast<std::uint64_t>(q.obs.back() * spec.A + a)) * rest;
        for (std::uint64_t r = 0; r < rest; ++r) cols.push_back(head + r);
    }
    weight = std::pow(static_cast<double>(spec.A), -(spec.H - h - L + 1));
    return cols;
}

Eigen::MatrixXd aggregate_test_rows(const EpisodeSpec& spec, int h, const std::vector<CoreTest>& tests,
                                    const Eigen::MatrixXd& F) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tests.size()), F.cols());
    for (std::size_t i = 0; i < tests.size(); ++i) {
        double w = 0.0;
        for (std::uint64_t c : test_columns(spec, h, tests[i], w)) out.row(i) += F.row(static_cast<Eigen::Index>(c));
        out.row(i) *= w;
    }
    return out;
}

double test_probability(const CondTable& table, const Trajectory& history, const CoreTest& q) {
    Trajectory t = history;
    for (int k = 0; k < q.length(); ++k) {
        t.obs.push_back(q.obs[k]);
        t.acts.push_back(k + 1 < q.length() ? q.acts[k] : 0);
    }
    if (t.length() > table.spec.H) throw InvalidModel("test runs past the horizon");
    return table.at(t);
}

std::vector<std::vector<int>> prefix_free_reduce(std::vector<std::vector<int>> seqs) {
    std::sort(seqs.begin(), seqs.end());
    seqs.erase(std::unique(seqs.begin(), seqs.end()), seqs.end());
    std::vector<std::vector<int>> out;
    for (const auto& s : seqs) {
        bool is_prefix = false;
        for (const auto& t : seqs)
            if (t.size() > s.size() && std::equal(s.begin(), s.end(), t.begin())) {
                is_prefix = true;
                break;
            }
        if (!is_prefix) out.push_back(s);
    }
    return out;
}

void CoreTestSet::derive_action_sets() {
    QA.clear();
    for (const auto& Qh : Q) {
        std::vector<std::vector<int>> seqs;
        for (const auto& q : Qh) seqs.push_back(q.acts);
        QA.push_back(prefix_free_reduce(std::move(seqs)));
    }
}

nlohmann::json CoreTestSet::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& Qh : Q) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& q : Qh) row.push_back({{"obs", q.obs}, {"acts", q.acts}});
        j.push_back(row);
    }
    return j;
}

CoreTestSet CoreTestSet::from_json(const nlohmann::json& j) {
    CoreTestSet s;
    for (const auto& row : j) {
        std::vector<CoreTest> Qh;
        for (const auto& t : row) {
            CoreTest q{t.at("obs").get<std::vector<int>>(), t.at("acts").get<std::vector<int>>()};
            if (q.obs.empty() || q.acts.size() + 1 != q.obs.size())
                throw InvalidModel("core test needs one more observation than actions");
            Qh.push_back(std::move(q));
        }
        s.Q.push_back(std::move(Qh));
    }
    s.derive_action_sets();
    return s;
}

CoreTestSet select_core_tests(const SystemDynamics& sd, double tol) {
    const auto& sp = sd.spec;
    CoreTestSet set;
    for (int h = 0; h < sp.H; ++h) {
        const Eigen::MatrixXd& D = sd.D[h];
        const int r = big_rank(D, tol);
        const auto cands = enumerate_tests(sp, sp.H - h);
        // Test columns: C(:, j) = P̄(·, q_j).
        const Eigen::MatrixXd C = aggregate_test_rows(sp, h, cands, D.transpose()).transpose();
        Eigen::MatrixXd R = C;
        const double scale = C.colwise().norm().maxCoeff();
        std::vector<int> chosen;
        std::vector<char> used(cands.size(), 0);
        for (int k = 0; k < r; ++k) {
            const Eigen::RowVectorXd norms = R.colwise().norm();
            double best = -1.0;
            int bj = -1;
            for (Eigen::Index j = 0; j < norms.size(); ++j) {
                if (used[j]) continue;
                if (norms[j] > best * (1.0 + 1e-9) + 1e-300) {
                    best = norms[j];
                    bj = static_cast<int>(j);
                }
            }
            if (bj < 0 || !(best > tol * scale))
                throw RankDeficientSelection("step " + std::to_string(h) + ": only " + std::to_string(k) +
                                             " independent tests found, rank is " + std::to_string(r));
            used[bj] = 1;
            chosen.push_back(bj);
            const Eigen::VectorXd u = R.col(bj) / best;
            R -= u * (u.transpose() * R);
        }
        Eigen::MatrixXd sub(C.rows(), static_cast<Eigen::Index>(chosen.size()));
        for (std::size_t i = 0; i < chosen.size(); ++i) sub.col(i) = C.col(chosen[i]);
        if (big_rank(sub, tol) != r)
            throw RankDeficientSelection("step " + std::to_string(h) + ": selected tests do not reach rank " +
                                         std::to_string(r));
        std::sort(chosen.begin(), chosen.end());
        std::vector<CoreTest> Qh;
        for (int j : chosen) Qh.push_back(cands[j]);
        set.Q.push_back(std::move(Qh));
    }
    set.derive_action_sets();
    return set;
}

nlohmann::json OomRep::Check::to_json() const {
    return {{"maxBNorm", max_B_norm},           {"b0Bound", b0_bound},
            {"maxUpsilonExcess", max_upsilon_excess}, {"flowResidual", flow_residual},
            {"probResidual", prob_residual},    {"pass", pass}};
}

OomRep build_oom(const SystemDynamics& sd, double tol, double check_tol) {
    const auto& sp = sd.spec;
    const int H = sp.H, O = sp.O, A = sp.A;
    OomRep oom;
    oom.spec = sp;
    for (int h = 0; h < H; ++h) {
        auto svd = thin_svd(sd.D[h].transpose());
        const int r = std::max(1, rank_of(svd.singularValues(), tol));
        Eigen::MatrixXd U = svd.matrixU().leftCols(r);
        // Fix the SVD sign freedom: each column gets a nonnegative sum.
        for (int c = 0; c < r; ++c)
            if (U.col(c).sum() < 0.0) U.col(c) *= -1.0;
        oom.U.push_back(std::move(U));
    }
    oom.U.push_back(Eigen::MatrixXd::Ones(1, 1));
    oom.b0 = (oom.U[0].transpose() * sd.D[0].transpose())(0, 0);
    oom.B.resize(H);
    for (int h = 1; h <= H; ++h) {
        const auto n = static_cast<Eigen::Index>(ipow(static_cast<std::uint64_t>(sp.pairs()), H - h));
        oom.B[h - 1].assign(O, std::vector<Eigen::MatrixXd>(A));
        for (int o = 0; o < O; ++o)
            for (int a = 0; a < A; ++a)
                oom.B[h - 1][o][a] =
                    oom.U[h].transpose() * oom.U[h - 1].middleRows((o * A + a) * n, n);
    }
    for (int h = 0; h <= H; ++h)
        oom.upsilon.push_back(std::pow(static_cast<double>(A), -(H - h)) *
                              oom.U[h].transpose() * Eigen::VectorXd::Ones(oom.U[h].rows()));

    auto& ck = oom.check;
    for (const auto& Bh : oom.B)
        for (const auto& Bo : Bh)
            for (const auto& B : Bo) ck.max_B_norm = std::max(ck.max_B_norm, spectral_norm(B));
    ck.b0_bound = std::sqrt(std::pow(static_cast<double>(A), H));
    ck.max_upsilon_excess = -std::numeric_limits<double>::infinity();
    for (int h = 0; h <= H; ++h)
        ck.max_upsilon_excess =
            std::max(ck.max_upsilon_excess,
                     oom.upsilon[h].norm() - std::sqrt(std::pow(static_cast<double>(O) / A, H - h)));
    for (int h = 1; h <= H; ++h)
        for (int a = 0; a < A; ++a) {
            Eigen::MatrixXd S = Eigen::MatrixXd::Zero(oom.B[h - 1][0][a].rows(), oom.B[h - 1][0][a].cols());
            for (int o = 0; o < O; ++o) S += oom.B[h - 1][o][a];
            const Eigen::RowVectorXd d = oom.upsilon[h].transpose() * S - oom.upsilon[h - 1].transpose();
            ck.flow_residual = std::max(ck.flow_residual, d.cwiseAbs().maxCoeff());
        }
    // Probability identity and U_h b(τ_h) = D_hᵀ(:, τ_h) over the whole tree.
    std::function<void(int, std::uint64_t, const Eigen::VectorXd&)> walk = [&](int h, std::uint64_t idx,
                                                                               const Eigen::VectorXd& b) {
        double pbar;
        if (h < H) {
            const Eigen::VectorXd col = sd.D[h].row(static_cast<Eigen::Index>(idx)).transpose();
            pbar = col.sum() * std::pow(static_cast<double>(A), -(H - h));
            ck.prob_residual = std::max(ck.prob_residual, (oom.U[h] * b - col).cwiseAbs().maxCoeff());
        } else {
            const auto n = static_cast<std::uint64_t>(sd.D[H - 1].cols());
            pbar = sd.D[H - 1](static_cast<Eigen::Index>(idx / n), static_cast<Eigen::Index>(idx % n));
        }
        ck.prob_residual = std::max(ck.prob_residual, std::abs(oom.upsilon[h].dot(b) - pbar));
        if (h == H) return;
        for (int o = 0; o < O; ++o)
            for (int a = 0; a < A; ++a)
                walk(h + 1, idx * sp.pairs() + static_cast<std::uint64_t>(o * A + a), oom.B[h][o][a] * b);
    };
    walk(0, 0, Eigen::VectorXd::Constant(1, oom.b0));
    ck.pass = ck.max_B_norm <= 1.0 + 1e-9 && std::abs(oom.b0) <= ck.b0_bound + 1e-9 &&
              ck.max_upsilon_excess <= 1e-9 && ck.flow_residual <= check_tol && ck.prob_residual <= check_tol;
    if (!ck.pass) throw NumericalFailure("OOM conditions violated: " + ck.to_json().dump());
    return oom;
}

void PsrRep::validate() const {
    const int H = spec.H, O = spec.O, A = spec.A;
    if (static_cast<int>(tests.Q.size()) != H) throw InvalidModel("PSR needs core tests for h in [0, H-1]");
    for (int h = 0; h < H; ++h)
        for (const auto& q : tests.Q[h]) {
            double w = 0.0;
            test_columns(spec, h, q, w);
            for (int o : q.obs)
                if (o < 0 || o >= O) throw InvalidModel("core test observation out of range");
            for (int a : q.acts)
                if (a < 0 || a >= A) throw InvalidModel("core test action out of range");
        }
    if (psi0.size() != dim(0)) throw InvalidModel("psi0 must have |Q_0| entries");
    if (static_cast<int>(M.size()) != H - 1) throw InvalidModel("M needs H-1 steps");
    for (int h = 1; h < H; ++h) {
        if (static_cast<int>(M[h - 1].size()) != O) throw InvalidModel("M[h] needs O entries");
        for (const auto& Mo : M[h - 1]) {
            if (static_cast<int>(Mo.size()) != A) throw InvalidModel("M[h][o] needs A entries");
            for (const auto& m : Mo)
                if (m.rows() != dim(h) || m.cols() != dim(h - 1))
                    throw InvalidModel("M[" + std::to_string(h) + "] must be |Q_h| x |Q_{h-1}|");
        }
    }
    if (static_cast<int>(phiH.size()) != O) throw InvalidModel("phiH needs O entries");
    for (const auto& po : phiH) {
        if (static_cast<int>(po.size()) != A) throw InvalidModel("phiH[o] needs A entries");
        for (const auto& v : po)
            if (v.size() != dim(H - 1)) throw InvalidModel("phiH vectors must have |Q_{H-1}| entries");
    }
}

Eigen::VectorXd PsrRep::predict(const Trajectory& history) const {
    if (history.length() >= spec.H) throw InvalidModel("prediction vectors exist for h <= H-1");
    Eigen::VectorXd psi = psi0;
    for (int i = 0; i < history.length(); ++i) psi = M[i][history.obs[i]][history.acts[i]] * psi;
    return psi;
}

double PsrRep::probability(const Trajectory& full) const {
    if (full.length() != spec.H) throw InvalidModel("probability needs a full-length trajectory");
    Trajectory pre{std::vector<int>(full.obs.begin(), full.obs.end() - 1),
                   std::vector<int>(full.acts.begin(), full.acts.end() - 1)};
    return phiH[full.obs.back()][full.acts.back()].dot(predict(pre));
}

std::vector<Eigen::VectorXd> PsrRep::marginal_weights() const {
    const int H = spec.H;
    std::vector<Eigen::VectorXd> w(H);
    w[H - 1] = Eigen::VectorXd::Zero(dim(H - 1));
    for (int o = 0; o < spec.O; ++o) w[H - 1] += phiH[o][0];
    for (int h = H - 2; h >= 0; --h) {
        w[h] = Eigen::VectorXd::Zero(dim(h));
        for (int o = 0; o < spec.O; ++o) w[h] += M[h][o][0].transpose() * w[h + 1];
    }
    return w;
}

nlohmann::json PsrRep::to_json() const {
    nlohmann::json Mj = nlohmann::json::array();
    for (const auto& Mh : M) {
        nlohmann::json ho = nlohmann::json::array();
        for (const auto& Mo : Mh) {
            nlohmann::json oa = nlohmann::json::array();
            for (const auto& m : Mo) oa.push_back(matrix_to_json(m));
            ho.push_back(oa);
        }
        Mj.push_back(ho);
    }
    nlohmann::json Pj = nlohmann::json::array();
    for (const auto& po : phiH) {
        nlohmann::json oa = nlohmann::json::array();
        for (const auto& v : po) oa.push_back(vec_json(v));
        Pj.push_back(oa);
    }
    return {{"spec", {{"O", spec.O}, {"A", spec.A}, {"H", spec.H}}},
            {"coreTests", tests.to_json()},
            {"psi0", vec_json(psi0)},
            {"M", Mj},
            {"phiH", Pj}};
}

PsrRep PsrRep::from_json(const nlohmann::json& j) {
    static const std::set<std::string> keys{"spec", "coreTests", "psi0", "M", "phiH", "R"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!keys.count(it.key())) throw InvalidModel("unknown PSR field '" + it.key() + "'");
    PsrRep rep;
    const auto& s = j.at("spec");
    rep.spec.O = s.at("O").get<int>();
    rep.spec.A = s.at("A").get<int>();
    rep.spec.H = s.at("H").get<int>();
    rep.spec.S = 1;
    rep.spec.validate();
    rep.tests = CoreTestSet::from_json(j.at("coreTests"));
    rep.psi0 = to_vec(json_vec(j.at("psi0")));
    for (const auto& ho : j.at("M")) {
        std::vector<std::vector<Eigen::MatrixXd>> Mh;
        for (const auto& oa : ho) {
            std::vector<Eigen::MatrixXd> Mo;
            for (const auto& m : oa) Mo.push_back(matrix_from_json(m));
            Mh.push_back(std::move(Mo));
        }
        rep.M.push_back(std::move(Mh));
    }
    for (const auto& oa : j.at("phiH")) {
        std::vector<Eigen::VectorXd> po;
        for (const auto& v : oa) po.push_back(to_vec(json_vec(v)));
        rep.phiH.push_back(std::move(po));
    }
    rep.validate();
    return rep;
}

nlohmann::json PsrCheck::to_json() const { return {{"psr1", psr1}, {"psr2", psr2}}; }

PsrCheck verify_psr(const PsrRep& rep, const CondTable& truth) {
    const auto& sp = rep.spec;
    if (!sp.same_interface(truth.spec)) throw InvalidModel("PSR and table specs differ");
    PsrCheck ck;
    std::function<void(int, std::uint64_t, const Eigen::VectorXd&)> walk = [&](int h, std::uint64_t idx,
                                                                               const Eigen::VectorXd& psi) {
        const Trajectory hist = decode_history(sp, idx, h);
        if (truth.pbar[h][idx] > 0.0)
            for (int i = 0; i < rep.dim(h); ++i)
                ck.psr2 = std::max(ck.psr2, std::abs(psi[i] - test_probability(truth, hist, rep.tests.Q[h][i])));
        for (int o = 0; o < sp.O; ++o)
            for (int a = 0; a < sp.A; ++a) {
                const std::uint64_t c = idx * sp.pairs() + static_cast<std::uint64_t>(o * sp.A + a);
                if (h + 1 == sp.H)
                    ck.psr1 = std::max(ck.psr1, std::abs(rep.phiH[o][a].dot(psi) - truth.pbar[sp.H][c]));
                else
                    walk(h + 1, c, rep.M[h][o][a] * psi);
            }
    };
    walk(0, 0, rep.psi0);
    return ck;
}

nlohmann::json SelfConsistentPsr::Check::to_json() const {
    return {{"cond1", cond1}, {"cond2", cond2}, {"cond3", cond3}, {"cond4", cond4}, {"pass", pass}};
}

SelfConsistentPsr build_self_consistent_psr(const SystemDynamics& sd, const CoreTestSet& q, double tol,
                                            double check_tol) {
    const auto& sp = sd.spec;
    const int H = sp.H, O = sp.O, A = sp.A;
    if (static_cast<int>(q.Q.size()) != H) throw InvalidModel("core tests needed for h in [0, H-1]");
    const OomRep oom = build_oom(sd, tol, check_tol);
    std::vector<Eigen::MatrixXd> UQ, UQinv;
    for (int h = 0; h < H; ++h) {
        UQ.push_back(aggregate_test_rows(sp, h, q.Q[h], oom.U[h]));
        UQinv.push_back(left_pinv(UQ[h], "core-test rows of U_" + std::to_string(h), tol));
    }
    SelfConsistentPsr out;
    PsrRep& rep = out.rep;
    rep.spec = sp;
    rep.tests = q;
    rep.tests.derive_action_sets();
    rep.psi0 = UQ[0] * Eigen::VectorXd::Constant(1, oom.b0);
    rep.M.resize(H - 1);
    for (int h = 1; h < H; ++h) {
        rep.M[h - 1].assign(O, std::vector<Eigen::MatrixXd>(A));
        for (int o = 0; o < O; ++o)
            for (int a = 0; a < A; ++a) rep.M[h - 1][o][a] = UQ[h] * oom.B[h - 1][o][a] * UQinv[h - 1];
    }
    rep.phiH.assign(O, std::vector<Eigen::VectorXd>(A));
    for (int o = 0; o < O; ++o)
        for (int a = 0; a < A; ++a)
            rep.phiH[o][a] = (oom.upsilon[H].transpose() * oom.B[H - 1][o][a] * UQinv[H - 1]).transpose();
    for (int h = 0; h < H; ++h) out.phi.push_back((oom.upsilon[h].transpose() * UQinv[h]).transpose());

    auto& ck = out.check;
    const double Ad = A;
    std::function<void(int, std::uint64_t, const Eigen::VectorXd&)> walk = [&](int h, std::uint64_t idx,
                                                                               const Eigen::VectorXd& psi) {
        const Eigen::RowVectorXd row = sd.D[h].row(static_cast<Eigen::Index>(idx));
        const double pbar = row.sum() * std::pow(Ad, -(H - h));
        ck.cond1 = std::max(ck.cond1, std::abs(out.phi[h].dot(psi) - pbar));
        const Eigen::VectorXd direct = aggregate_test_rows(sp, h, q.Q[h], row.transpose());
        ck.cond2 = std::max(ck.cond2, (psi - direct).cwiseAbs().maxCoeff());
        for (int o = 0; o < O; ++o)
            for (int a = 0; a < A; ++a) {
                const std::uint64_t c = idx * sp.pairs() + static_cast<std::uint64_t>(o * A + a);
                if (h + 1 == H) {
                    const auto n = static_cast<std::uint64_t>(sd.D[H - 1].cols());
                    const double leaf =
                        sd.D[H - 1](static_cast<Eigen::Index>(c / n), static_cast<Eigen::Index>(c % n));
                    ck.cond1 = std::max(ck.cond1, std::abs(rep.phiH[o][a].dot(psi) - leaf));
                } else {
                    walk(h + 1, c, rep.M[h][o][a] * psi);
                }
            }
    };
    walk(0, 0, rep.psi0);
    for (int h = 1; h <= H; ++h)
        for (int a = 0; a < A; ++a) {
            Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(rep.dim(h - 1));
            for (int o = 0; o < O; ++o)
                s += h < H ? Eigen::RowVectorXd(out.phi[h].transpose() * rep.M[h - 1][o][a])
                           : Eigen::RowVectorXd(rep.phiH[o][a].transpose());
            ck.cond3 = std::max(ck.cond3, (s - out.phi[h - 1].transpose()).cwiseAbs().maxCoeff());
        }
    for (int h = 1; h < H; ++h)
        for (int o = 0; o < O; ++o)
            for (int a = 0; a < A; ++a)
                for (int i = 0; i < rep.dim(h); ++i) {
                    const CoreTest& t = q.Q[h][i];
                    const int L = t.length();
                    for (int astar = 0; astar < A; ++astar) {
                        Eigen::MatrixXd prod = rep.M[h - 1][o][a];
                        for (int k = 0; k + 1 < L; ++k) prod = rep.M[h + k][t.obs[k]][t.acts[k]] * prod;
                        Eigen::RowVectorXd lhs;
                        if (h + L == H)
                            lhs = rep.phiH[t.obs[L - 1]][astar].transpose() * prod;
                        else
                            lhs = out.phi[h + L].transpose() * rep.M[h + L - 1][t.obs[L - 1]][astar] * prod;
                        ck.cond4 = std::max(ck.cond4, (lhs - rep.M[h - 1][o][a].row(i)).cwiseAbs().maxCoeff());
                    }
                }
    ck.pass = ck.cond1 <= check_tol && ck.cond2 <= check_tol && ck.cond3 <= check_tol && ck.cond4 <= check_tol;
    if (!ck.pass) throw NumericalFailure("self-consistent PSR conditions violated: " + ck.to_json().dump());
    return out;
}

PsrModel::PsrModel(PsrRep rep, std::vector<std::vector<double>> R) : rep_(std::move(rep)), R_(std::move(R)) {
    rep_.validate();
    if (R_.empty()) R_.assign(rep_.spec.H, std::vector<double>(rep_.spec.O, 0.0));
    if (static_cast<int>(R_.size()) != rep_.spec.H) throw InvalidModel("reward table needs H rows");
    for (const auto& row : R_) {
        if (static_cast<int>(row.size()) != rep_.spec.O) throw InvalidModel("reward row needs O entries");
        for (double r : row)
            if (!(r >= 0.0 && r <= 1.0)) throw InvalidModel("rewards must lie in [0,1]");
    }
    w_ = rep_.marginal_weights();
}

Eigen::VectorXd PsrModel::raw_obs_probs(int h, const Eigen::VectorXd& state) const {
    const int O = rep_.spec.O;
    Eigen::VectorXd p(O);
    for (int o = 0; o < O; ++o)
        p[o] = h < rep_.spec.H ? w_[h].dot(rep_.M[h - 1][o][0] * state) : rep_.phiH[o][0].dot(state);
    return p;
}

Eigen::VectorXd PsrModel::advance(int h, const Eigen::VectorXd& state, int o, int a, double p_obs) const {
    if (h >= rep_.spec.H) return state;
    return rep_.M[h - 1][o][a] * state / p_obs;
}

}  // namespace omle
