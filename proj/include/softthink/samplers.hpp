#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "softthink/rng.hpp"
#include "softthink/simplex.hpp"

namespace softthink {

enum class Randomizer { none, dirichlet, gumbel_softmax };

inline const char* randomizer_name(Randomizer r) {
    switch (r) {
        case Randomizer::dirichlet: return "dirichlet";
        case Randomizer::gumbel_softmax: return "gumbel_softmax";
        default: return "none";
    }
}

/// A SoftToken plus the randomizer and hyperparameter that produced it.
struct RandomizedSoftToken {
    SoftToken token;
    Randomizer source = Randomizer::none;
    double param = 0.0; // gamma for dirichlet, tau for gumbel_softmax
};

/// Draw a token id with probability equal to its weight. Inverse CDF over
/// the descending-ordered entries.
inline TokenId sample_categorical(const SoftToken& st, RngState& rng) {
    if (st.empty()) throw DataError("sample_categorical: empty token");
    const double u = rng.uniform01();
    double cumulative = 0.0;
    for (const auto& e : st.entries) {
        cumulative += e.weight;
        if (u < cumulative) return e.id;
    }
    return st.entries.back().id;
}

/// n independent draws from Gumbel(0,1): g = -ln(-ln(u)), u clamped away
/// from {0,1} so every output is finite.
inline std::vector<double> sample_gumbel(int n, RngState& rng) {
    if (n < 1) throw std::invalid_argument("sample_gumbel: n must be >= 1");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (double& v : g) v = -std::log(-std::log(rng.uniform_open01()));
    return g;
}

namespace detail {

/// Index of the largest perturbed log-weight g_i + ln(w_i).
inline std::size_t perturbed_argmax(const SoftToken& st, const std::vector<double>& noise) {
    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < st.entries.size(); ++i) {
        const double value = noise[i] + std::log(st.entries[i].weight);
        if (value > best_value) {
            best_value = value;
            best = i;
        }
    }
    return best;
}

} // namespace detail

/// Gumbel-Max draw: perturb log-weights with fresh Gumbel noise and return
/// the argmax id. Marginal law equals the token's weights.
inline TokenId gumbel_argmax(const SoftToken& st, RngState& rng) {
    if (st.empty()) throw DataError("gumbel_argmax: empty token");
    const std::vector<double> noise = sample_gumbel(static_cast<int>(st.size()), rng);
    return st.entries[detail::perturbed_argmax(st, noise)].id;
}

/// Ids of the k largest perturbed log-weights, in decreasing value order.
/// Distributed as an ordered sample without replacement from the token's
/// categorical distribution.
inline std::vector<TokenId> gumbel_top_k(const SoftToken& st, int k, RngState& rng) {
    if (st.empty()) throw DataError("gumbel_top_k: empty token");
    if (k < 1 || static_cast<std::size_t>(k) > st.size())
        throw std::invalid_argument("gumbel_top_k: k must be in [1, support size]");
    const std::vector<double> noise = sample_gumbel(static_cast<int>(st.size()), rng);
    std::vector<std::size_t> order(st.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return noise[a] + std::log(st.entries[a].weight) >
               noise[b] + std::log(st.entries[b].weight);
    });
    std::vector<TokenId> ids(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) ids[static_cast<std::size_t>(i)] = st.entries[order[static_cast<std::size_t>(i)]].id;
    return ids;
}

/// Temperature-tau softmax relaxation of Gumbel-Max over the truncated
/// support: y_i = exp((g_i + ln w_i)/tau) / sum_k exp((g_k + ln w_k)/tau).
/// For one noise realization the argmax is the same for every tau and
/// matches the Gumbel-Max choice. Entries whose weight underflows to zero
/// at very small tau are dropped to keep weights strictly positive.
inline RandomizedSoftToken gumbel_softmax(const SoftToken& st, double tau, RngState& rng) {
    if (st.empty()) throw DataError("gumbel_softmax: empty token");
    if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be positive");
    const std::vector<double> noise = sample_gumbel(static_cast<int>(st.size()), rng);
    std::vector<double> perturbed(st.size());
    double max_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < st.size(); ++i) {
        perturbed[i] = noise[i] + std::log(st.entries[i].weight);
        max_value = std::max(max_value, perturbed[i]);
    }
    std::vector<SoftTokenEntry> entries(st.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < st.size(); ++i) {
        entries[i] = {st.entries[i].id, std::exp((perturbed[i] - max_value) / tau)};
        sum += entries[i].weight;
    }
    for (auto& e : entries) e.weight /= sum;
    detail::sort_entries(entries);
    detail::renormalize(entries);
    return {SoftToken{std::move(entries)}, Randomizer::gumbel_softmax, tau};
}

/// Gamma(shape, 1) variate via the Marsaglia-Tsang squeeze method
/// (Marsaglia & Tsang 2000, "A simple method for generating gamma
/// variables"). Shapes below 1 use the boost transform
/// Gamma(a) = Gamma(a+1) * U^(1/a).
inline double gamma_variate(double shape, RngState& rng) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma_variate: shape must be positive");
    if (shape < 1.0) {
        const double boost = std::pow(rng.uniform_open01(), 1.0 / shape);
        return gamma_variate(shape + 1.0, rng) * boost;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform_open01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

inline constexpr int kNoTopK = std::numeric_limits<int>::max();

/// Draw from Dirichlet(gamma * weights) over the truncated support, via
/// independent gamma variates normalized to sum 1, optionally followed by
/// the usual top-k/top-p truncation of the sampled vector.
inline RandomizedSoftToken dirichlet_resample(const SoftToken& st, double gamma, RngState& rng,
                                              int top_k = kNoTopK, double top_p = 1.0) {
    if (st.empty()) throw DataError("dirichlet_resample: empty token");
    if (!(gamma > 0.0)) throw std::invalid_argument("dirichlet_resample: gamma must be positive");
    std::vector<SoftTokenEntry> entries(st.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < st.size(); ++i) {
        entries[i] = {st.entries[i].id, gamma_variate(gamma * st.entries[i].weight, rng)};
        sum += entries[i].weight;
    }
    if (sum <= 0.0) {
        // All variates underflowed (tiny concentrations); collapse to the
        // dominant component.
        return {SoftToken::one_hot(st.dominant()), Randomizer::dirichlet, gamma};
    }
    for (auto& e : entries) e.weight /= sum;
    detail::sort_entries(entries);
    detail::renormalize(entries);
    SoftToken sampled{std::move(entries)};
    if (top_k != kNoTopK || top_p < 1.0)
        sampled = truncate(sampled, top_k, top_p);
    return {sampled, Randomizer::dirichlet, gamma};
}

} // namespace softthink
