#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace omle {

/** @brief Base class for all library errors; `kind()` names the failure. */
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define OMLE_DEFINE_ERROR(Name)                                             \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& msg) : Error(#Name, msg) {}        \
    };

OMLE_DEFINE_ERROR(InvalidModel)
OMLE_DEFINE_ERROR(ZeroProbabilityPrefix)
OMLE_DEFINE_ERROR(CapExceeded)
OMLE_DEFINE_ERROR(RankDeficientSelection)
OMLE_DEFINE_ERROR(RankDeficient)
OMLE_DEFINE_ERROR(NumericalFailure)
OMLE_DEFINE_ERROR(NotObservable)
OMLE_DEFINE_ERROR(DecoderInconsistent)
OMLE_DEFINE_ERROR(DegenerateSet)
OMLE_DEFINE_ERROR(IterationLimit)
OMLE_DEFINE_ERROR(EmptyConfidenceSet)
OMLE_DEFINE_ERROR(PrefixViolation)
OMLE_DEFINE_ERROR(GenerationTimeout)
OMLE_DEFINE_ERROR(FeatureMismatch)
OMLE_DEFINE_ERROR(ConfigError)
OMLE_DEFINE_ERROR(MissingData)

#undef OMLE_DEFINE_ERROR

/** @brief Default limit on the number of full-length trajectories (O*A)^H. */
inline constexpr std::uint64_t kDefaultCapLeaves = 2000000;

/** @brief Probabilities below this are treated as exact zeros. */
inline constexpr double kZeroProb = 1e-15;

/**
 * @brief Sizes of an episodic problem.
 *
 * Steps are 1-based in the API (h in [1, H]); observation and action
 * indices are 0-based.
 */
struct EpisodeSpec {
    int S = 1;  ///< latent states (POMDPs only)
    int O = 1;  ///< observations
    int A = 1;  ///< actions
    int H = 1;  ///< horizon

    void validate() const;
    /** @brief Number of (o,a) pairs, the branching factor of the history tree. */
    int pairs() const { return O * A; }
    /** @brief (O*A)^len, throwing CapExceeded above `cap`. */
    std::uint64_t tree_size(int len, std::uint64_t cap = kDefaultCapLeaves) const;
    /** @brief Number of full trajectories (O*A)^H, throwing CapExceeded above `cap`. */
    std::uint64_t leaves(std::uint64_t cap = kDefaultCapLeaves) const { return tree_size(H, cap); }
    bool same_interface(const EpisodeSpec& o) const { return O == o.O && A == o.A && H == o.H; }
};

/** @brief A full-length (or partial) observation-action sequence. */
struct Trajectory {
    std::vector<int> obs;
    std::vector<int> acts;

    int length() const { return static_cast<int>(obs.size()); }
    /** @brief Flat index of the first `len` pairs in the (O*A)-ary tree. */
    std::uint64_t prefix_index(const EpisodeSpec& spec, int len) const;
    void validate(const EpisodeSpec& spec, bool full = true) const;
    bool operator==(const Trajectory&) const = default;
};

/** @brief Decode a flat history index of `len` pairs into a trajectory. */
Trajectory decode_history(const EpisodeSpec& spec, std::uint64_t index, int len);

/** @brief Integer power with overflow saturation at UINT64_MAX. */
std::uint64_t ipow(std::uint64_t base, int exp);

/** @brief Explicit random state; wraps a fully specified engine. */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    /** @brief Uniform double in [0,1) built from 53 random bits. */
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    /** @brief Draw an index from a discrete distribution given by `p`. */
    int categorical(const std::vector<double>& p);
    template <class Vec>
    int categorical_vec(const Vec& p, int n) {
        double u = uniform();
        double acc = 0.0;
        int last = 0;
        for (int i = 0; i < n; ++i) {
            if (p[i] <= 0.0) continue;
            acc += p[i];
            last = i;
            if (u < acc) return i;
        }
        return last;
    }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

/** @brief Sample a Dirichlet(1,...,1) vector of length n. */
std::vector<double> dirichlet_ones(Rng& rng, int n);

}  // namespace omle
