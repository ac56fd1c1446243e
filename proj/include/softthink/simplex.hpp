#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "softthink/common.hpp"

namespace softthink {

/// Dense probability distribution over the vocabulary. Invariant: every
/// weight >= 0 and the weights sum to 1 within 1e-9. All probability math
/// is done in double regardless of model compute precision.
using ProbVector = std::vector<double>;

inline constexpr double kSumTolerance = 1e-9;

struct SoftTokenEntry {
    TokenId id = -1;
    double weight = 0.0;
};

/// Sparse truncated distribution: (token id, weight) pairs, descending by
/// weight with ties broken by ascending id. Weights are strictly positive
/// and sum to 1 within 1e-9. The first entry is the dominant component.
struct SoftToken {
    std::vector<SoftTokenEntry> entries;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    TokenId dominant() const { return entries.front().id; }

    static SoftToken one_hot(TokenId id) { return SoftToken{{{id, 1.0}}}; }
};

inline bool operator==(const SoftTokenEntry& a, const SoftTokenEntry& b) {
    return a.id == b.id && a.weight == b.weight;
}
inline bool operator==(const SoftToken& a, const SoftToken& b) {
    return a.entries == b.entries;
}

namespace detail {

/// Canonical entry order: weight descending, id ascending on ties.
inline void sort_entries(std::vector<SoftTokenEntry>& entries) {
    std::sort(entries.begin(), entries.end(),
              [](const SoftTokenEntry& a, const SoftTokenEntry& b) {
                  if (a.weight != b.weight) return a.weight > b.weight;
                  return a.id < b.id;
              });
}

/// Renormalize in place; drops nonpositive entries first. Sums already
/// within 1e-12 of one are left untouched so that re-truncating an
/// already-truncated token is bit-exact.
inline void renormalize(std::vector<SoftTokenEntry>& entries) {
    entries.erase(std::remove_if(entries.begin(), entries.end(),
                                 [](const SoftTokenEntry& e) { return !(e.weight > 0.0); }),
                  entries.end());
    double sum = 0.0;
    for (const auto& e : entries) sum += e.weight;
    if (sum > 0.0 && std::abs(sum - 1.0) > 1e-12) {
        for (auto& e : entries) e.weight /= sum;
    }
}

} // namespace detail

/// True when st satisfies every SoftToken invariant.
inline bool is_valid(const SoftToken& st) {
    if (st.empty()) return false;
    double sum = 0.0;
    for (std::size_t i = 0; i < st.entries.size(); ++i) {
        const auto& e = st.entries[i];
        if (!(e.weight > 0.0) || !std::isfinite(e.weight)) return false;
        if (i > 0) {
            const auto& prev = st.entries[i - 1];
            if (e.weight > prev.weight) return false;
            if (e.weight == prev.weight && e.id <= prev.id) return false;
        }
        for (std::size_t j = 0; j < i; ++j)
            if (st.entries[j].id == e.id) return false;
        sum += e.weight;
    }
    return std::abs(sum - 1.0) <= kSumTolerance;
}

/// Numerically stable softmax with temperature. Argmax is preserved for
/// every positive temperature.
template <class Real>
ProbVector softmax(std::span<const Real> logits, double temperature) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("softmax: temperature must be positive");
    if (logits.empty())
        throw DataError("softmax: empty logit vector");
    double max_logit = -std::numeric_limits<double>::infinity();
    for (const Real l : logits) {
        if (!std::isfinite(static_cast<double>(l)))
            throw DataError("softmax: non-finite logit");
        max_logit = std::max(max_logit, static_cast<double>(l));
    }
    ProbVector out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((static_cast<double>(logits[i]) - max_logit) / temperature);
        sum += out[i];
    }
    for (double& p : out) p /= sum;
    return out;
}

inline ProbVector softmax(const std::vector<double>& logits, double temperature) {
    return softmax(std::span<const double>(logits), temperature);
}
inline ProbVector softmax(const std::vector<float>& logits, double temperature) {
    return softmax(std::span<const float>(logits), temperature);
}

/// Keep the k highest-weight indices (ties by ascending id), renormalized.
/// k larger than the support keeps the whole support.
inline SoftToken truncate_top_k(const ProbVector& p, int k) {
    if (k < 1) throw std::invalid_argument("truncate_top_k: k must be >= 1");
    std::vector<SoftTokenEntry> entries;
    entries.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) entries.push_back({static_cast<TokenId>(i), p[i]});
    detail::sort_entries(entries);
    if (entries.size() > static_cast<std::size_t>(k)) entries.resize(k);
    detail::renormalize(entries);
    SoftToken st{std::move(entries)};
    if (st.empty()) throw DataError("truncate_top_k: distribution has empty support");
    return st;
}

namespace detail {

/// Nucleus cut over already-sorted entries: keep the smallest prefix whose
/// cumulative mass reaches the threshold (inclusive), at least one entry.
/// The rule is scale-invariant (cumulative vs threshold * total).
inline std::size_t nucleus_keep_count(const std::vector<SoftTokenEntry>& entries,
                                      double threshold) {
    double total = 0.0;
    for (const auto& e : entries) total += e.weight;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        cumulative += entries[i].weight;
        if (cumulative >= threshold * total - 1e-15) return std::max<std::size_t>(i + 1, 1);
    }
    return std::max<std::size_t>(entries.size(), 1);
}

inline void nucleus_cut(std::vector<SoftTokenEntry>& entries, double threshold) {
    entries.resize(nucleus_keep_count(entries, threshold));
    renormalize(entries);
}

/// Renormalizing after a nucleus cut can push a shorter prefix over the
/// threshold, so a single pass is not idempotent. Iterating to the fixed
/// point makes the combined truncation an exact projection.
inline void nucleus_cut_fixed_point(std::vector<SoftTokenEntry>& entries, double threshold) {
    for (;;) {
        const std::size_t keep = nucleus_keep_count(entries, threshold);
        if (keep >= entries.size()) break;
        entries.resize(keep);
    }
    renormalize(entries);
}

} // namespace detail

/// Keep the smallest descending-weight prefix with cumulative mass >=
/// threshold, renormalized. Always keeps at least one entry.
inline SoftToken truncate_top_p(const ProbVector& p, double threshold) {
    if (!(threshold > 0.0) || threshold > 1.0)
        throw std::invalid_argument("truncate_top_p: threshold must be in (0, 1]");
    std::vector<SoftTokenEntry> entries;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) entries.push_back({static_cast<TokenId>(i), p[i]});
    detail::sort_entries(entries);
    if (entries.empty()) throw DataError("truncate_top_p: distribution has empty support");
    detail::nucleus_cut(entries, threshold);
    return SoftToken{std::move(entries)};
}

/// Top-k first, then top-p over the surviving renormalized mass (nucleus
/// stage iterated to its fixed point, so the whole operation is an exact
/// projection).
inline SoftToken truncate(const ProbVector& p, int k, double threshold) {
    if (!(threshold > 0.0) || threshold > 1.0)
        throw std::invalid_argument("truncate: threshold must be in (0, 1]");
    SoftToken st = truncate_top_k(p, k);
    detail::nucleus_cut_fixed_point(st.entries, threshold);
    return st;
}

/// Same combined truncation applied to an existing sparse token.
inline SoftToken truncate(const SoftToken& st, int k, double threshold) {
    if (st.empty()) throw DataError("truncate: empty token");
    if (k < 1) throw std::invalid_argument("truncate: k must be >= 1");
    if (!(threshold > 0.0) || threshold > 1.0)
        throw std::invalid_argument("truncate: threshold must be in (0, 1]");
    std::vector<SoftTokenEntry> entries = st.entries;
    detail::sort_entries(entries);
    if (entries.size() > static_cast<std::size_t>(k)) entries.resize(k);
    detail::renormalize(entries);
    detail::nucleus_cut_fixed_point(entries, threshold);
    return SoftToken{std::move(entries)};
}

/// Shannon entropy of the token in nats.
inline double entropy(const SoftToken& st) {
    double h = 0.0;
    for (const auto& e : st.entries)
        if (e.weight > 0.0) h -= e.weight * std::log(e.weight);
    return h;
}

/// Entropy divided by ln(support size); 0 for a single-entry token. The
/// raw entropy is exposed alongside via entropy().
inline double entropy_normalized(const SoftToken& st) {
    const std::size_t m = st.size();
    if (m <= 1) return 0.0;
    return entropy(st) / std::log(static_cast<double>(m));
}

/// KL(p || q) in nats. Returns +infinity when p puts mass where q has none.
inline double kl_divergence(const ProbVector& p, const ProbVector& q) {
    if (p.size() != q.size())
        throw DataError("kl_divergence: dimension mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

/// Jensen-Shannon divergence via the mid-point distribution. Symmetric,
/// always finite, bounded by ln 2.
inline double js_divergence(const ProbVector& p, const ProbVector& q) {
    if (p.size() != q.size())
        throw DataError("js_divergence: dimension mismatch");
    double js = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
    }
    return std::max(js, 0.0);
}

/// Sparse JS over the union support; equal to the dense form on any
/// vocabulary large enough to hold both tokens.
inline double js_divergence(const SoftToken& a, const SoftToken& b) {
    auto weight_of = [](const SoftToken& st, TokenId id) {
        for (const auto& e : st.entries)
            if (e.id == id) return e.weight;
        return 0.0;
    };
    std::vector<TokenId> ids;
    for (const auto& e : a.entries) ids.push_back(e.id);
    for (const auto& e : b.entries)
        if (weight_of(a, e.id) == 0.0) ids.push_back(e.id);
    double js = 0.0;
    for (TokenId id : ids) {
        const double pa = weight_of(a, id);
        const double pb = weight_of(b, id);
        const double m = 0.5 * (pa + pb);
        if (pa > 0.0) js += 0.5 * pa * std::log(pa / m);
        if (pb > 0.0) js += 0.5 * pb * std::log(pb / m);
    }
    return std::max(js, 0.0);
}

/// Expand a sparse token onto a dense vocabulary-sized vector.
inline ProbVector densify(const SoftToken& st, int vocab_size) {
    ProbVector p(static_cast<std::size_t>(vocab_size), 0.0);
    for (const auto& e : st.entries) {
        if (e.id < 0 || e.id >= vocab_size)
            throw DataError("densify: token id out of range");
        p[static_cast<std::size_t>(e.id)] = e.weight;
    }
    return p;
}

/// Collect entries with weight > epsilon, renormalized. Lossless round
/// trip with densify for epsilon = 0.
inline SoftToken sparsify(const ProbVector& p, double epsilon) {
    std::vector<SoftTokenEntry> entries;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > epsilon) entries.push_back({static_cast<TokenId>(i), p[i]});
    detail::sort_entries(entries);
    detail::renormalize(entries);
    if (entries.empty()) throw DataError("sparsify: no entries above epsilon");
    return SoftToken{std::move(entries)};
}

} // namespace softthink
