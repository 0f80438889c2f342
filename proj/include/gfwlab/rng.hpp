#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gfwlab {

/// splitmix64 finalizer; also used to derive per-entity seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a over a string, folded through mix64. Stable across platforms.
constexpr std::uint64_t hash_str(std::string_view s, std::uint64_t seed = 0) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

/// xoshiro256** with hand-rolled samplers. The standard <random>
/// distributions are implementation-defined, which would break byte-stable
/// transcripts across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept
    {
        std::uint64_t s = seed;
        for (auto& w : state_) {
            s = mix64(s);
            w = s;
        }
    }

    std::uint64_t next() noexcept
    {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept
    {
        // Lemire's nearly-divisionless method with rejection.
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Standard normal via Box-Muller (one value per call, no caching so the
    /// stream position is a pure function of call count).
    double normal() noexcept
    {
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Fork an independent stream keyed by `tag`.
    Rng fork(std::uint64_t tag) noexcept { return Rng(mix64(next() ^ mix64(tag))); }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
};

/// Walker/Vose alias table for O(1) weighted sampling.
class AliasTable {
public:
    AliasTable() = default;

    explicit AliasTable(std::span<const double> weights)
    {
        const std::size_t n = weights.size();
        if (n == 0)
            throw std::invalid_argument("alias table needs at least one weight");
        double total = 0.0;
        for (double w : weights) {
            if (!(w > 0.0) || !std::isfinite(w))
                throw std::invalid_argument("alias table weights must be positive and finite");
            total += w;
        }
        prob_.resize(n);
        alias_.resize(n);
        std::vector<double> scaled(n);
        std::vector<std::size_t> small, large;
        for (std::size_t i = 0; i < n; ++i) {
            scaled[i] = weights[i] * static_cast<double>(n) / total;
            (scaled[i] < 1.0 ? small : large).push_back(i);
        }
        while (!small.empty() && !large.empty()) {
            const std::size_t s = small.back();
            small.pop_back();
            const std::size_t l = large.back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
        for (std::size_t i : large) {
            prob_[i] = 1.0;
            alias_[i] = i;
        }
        for (std::size_t i : small) {
            prob_[i] = 1.0;
            alias_[i] = i;
        }
    }

    std::size_t sample(Rng& rng) const noexcept
    {
        const std::size_t column = rng.below(prob_.size());
        return rng.uniform() < prob_[column] ? column : alias_[column];
    }

    std::size_t size() const noexcept { return prob_.size(); }

private:
    std::vector<double> prob_;
    std::vector<std::size_t> alias_;
};

/// Random lowercase alphanumeric string, the alphabet used for probe permutations.
inline std::string random_label(Rng& rng, std::size_t length)
{
    static constexpr std::string_view alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string out(length, 'a');
    for (auto& c : out)
        c = alphabet[rng.below(alphabet.size())];
    return out;
}

} // namespace gfwlab
