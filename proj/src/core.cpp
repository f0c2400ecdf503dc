#include "omle/core.hpp"

#include <cmath>
#include <limits>

namespace omle {

void EpisodeSpec::validate() const {
    if (O < 1 || A < 1 || H < 1 || S < 1)
        throw InvalidModel("episode spec requires S,O,A,H >= 1 (got S=" + std::to_string(S) +
                           " O=" + std::to_string(O) + " A=" + std::to_string(A) +
                           " H=" + std::to_string(H) + ")");
}

std::uint64_t ipow(std::uint64_t base, int exp) {
    std::uint64_t r = 1;
    for (int i = 0; i < exp; ++i) {
        if (base != 0 && r > std::numeric_limits<std::uint64_t>::max() / base)
            return std::numeric_limits<std::uint64_t>::max();
        r *= base;
    }
    return r;
}

std::uint64_t EpisodeSpec::tree_size(int len, std::uint64_t cap) const {
    std::uint64_t n = ipow(static_cast<std::uint64_t>(pairs()), len);
    if (n > cap)
        throw CapExceeded("history tree of depth " + std::to_string(len) + " has " +
                          (n == std::numeric_limits<std::uint64_t>::max() ? std::string("overflowing")
                                                                          : std::to_string(n)) +
                          " nodes, cap is " + std::to_string(cap));
    return n;
}

std::uint64_t Trajectory::prefix_index(const EpisodeSpec& spec, int len) const {
    std::uint64_t idx = 0;
    for (int i = 0; i < len; ++i)
        idx = idx * static_cast<std::uint64_t>(spec.pairs()) +
              static_cast<std::uint64_t>(obs[i] * spec.A + acts[i]);
    return idx;
}

void Trajectory::validate(const EpisodeSpec& spec, bool full) const {
    if (obs.size() != acts.size()) throw InvalidModel("trajectory obs/acts length mismatch");
    if (full && length() != spec.H)
        throw InvalidModel("trajectory length " + std::to_string(length()) + " != H=" +
                           std::to_string(spec.H));
    if (length() > spec.H) throw InvalidModel("trajectory longer than horizon");
    for (int i = 0; i < length(); ++i) {
        if (obs[i] < 0 || obs[i] >= spec.O) throw InvalidModel("observation index out of range");
        if (acts[i] < 0 || acts[i] >= spec.A) throw InvalidModel("action index out of range");
    }
}

Trajectory decode_history(const EpisodeSpec& spec, std::uint64_t index, int len) {
    Trajectory t;
    t.obs.assign(len, 0);
    t.acts.assign(len, 0);
    const auto P = static_cast<std::uint64_t>(spec.pairs());
    for (int i = len - 1; i >= 0; --i) {
        int pair = static_cast<int>(index % P);
        index /= P;
        t.obs[i] = pair / spec.A;
        t.acts[i] = pair % spec.A;
    }
    return t;
}

int Rng::categorical(const std::vector<double>& p) {
    return categorical_vec(p, static_cast<int>(p.size()));
}

std::vector<double> dirichlet_ones(Rng& rng, int n) {
    // Dirichlet(1) via normalized exponentials.
    std::vector<double> v(n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        v[i] = -std::log1p(-u);
        s += v[i];
    }
    for (auto& x : v) x /= s;
    return v;
}

}  // namespace omle
