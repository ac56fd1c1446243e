#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "softthink/decode.hpp"
#include "softthink/model.hpp"
#include "softthink/samplers.hpp"
#include "softthink/simplex.hpp"

namespace softthink {

namespace detail {

/// Rebuild the decode-time prefix by teacher-forcing each step's recorded
/// fed input. fn(step, cache) is invoked with the cache state *before*
/// the step's input, i.e. the state whose next forward produced the
/// step's logits, so comparison forwards share an identical prefix.
/// Steps with no context room left for a one-step comparison forward are
/// skipped (a trace can fill the window exactly).
template <class Fn>
void walk_trace(const Trace& trace, const ModelWeights& w, Fn&& fn) {
    if (!(trace.card == w.card))
        throw DataError("probe: trace model card does not match loaded weights");
    DecoderCache cache = make_cache(w.card);
    std::vector<std::vector<float>> prompt_inputs;
    prompt_inputs.reserve(trace.prompt.size());
    for (const TokenId id : trace.prompt) prompt_inputs.push_back(embed_token(id, w));
    forward(prompt_inputs, w, cache);
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const TraceStep& s = trace.steps[i];
        if (cache.length < w.card.context) fn(s, cache);
        if (i + 1 == trace.steps.size()) break;
        std::vector<float> input = s.committed ? embed_token(*s.committed, w)
                                               : embed_soft(s.fed_token(), w);
        forward({std::move(input)}, w, cache);
    }
}

/// One forward from a forked copy of the prefix, softmaxed.
inline ProbVector one_step_distribution(const DecoderCache& prefix, std::vector<float> input,
                                        const ModelWeights& w, double temperature) {
    DecoderCache fork = prefix;
    return softmax(forward({std::move(input)}, w, fork).logits, temperature);
}

} // namespace detail

// ---------------------------------------------------------------------------
// JS-divergence forward comparison
// ---------------------------------------------------------------------------

struct JsProbeRecord {
    int step = 0;
    double entropy = 0.0;     // normalized entropy of the fed soft token
    double top1_weight = 0.0;
    double top2_weight = 0.0;
    double js_top1 = 0.0;     // JS(P_st, P_1)
    double js_top2 = 0.0;     // JS(P_st, P_2)
};

/// For every multi-support thinking step of a soft-mode trace, run three
/// forwards from the shared prefix -- the soft input, the top-1 token,
/// and the top-2 token -- and record both JS divergences. Single-support
/// steps are skipped; discrete traces yield no records.
inline std::vector<JsProbeRecord> js_probe(const Trace& trace, const ModelWeights& w,
                                           double temperature = 1.0) {
    std::vector<JsProbeRecord> records;
    if (!is_soft_mode(trace.config.mode)) {
        if (!(trace.card == w.card))
            throw DataError("probe: trace model card does not match loaded weights");
        return records;
    }
    detail::walk_trace(trace, w, [&](const TraceStep& s, const DecoderCache& cache) {
        if (s.phase != Phase::thinking) return;
        const SoftToken& fed = s.fed_token();
        if (fed.size() < 2) return;
        const ProbVector p_soft =
            detail::one_step_distribution(cache, embed_soft(fed, w), w, temperature);
        const ProbVector p1 =
            detail::one_step_distribution(cache, embed_token(fed.entries[0].id, w), w, temperature);
        const ProbVector p2 =
            detail::one_step_distribution(cache, embed_token(fed.entries[1].id, w), w, temperature);
        records.push_back({s.index, entropy_normalized(fed), fed.entries[0].weight,
                           fed.entries[1].weight, js_divergence(p_soft, p1),
                           js_divergence(p_soft, p2)});
    });
    return records;
}

/// Thinking steps whose top-1 and top-2 tokens induce next-step
/// predictions at least js_threshold apart.
inline std::vector<int> find_branching_points(const Trace& trace, const ModelWeights& w,
                                              double js_threshold = 0.3,
                                              double temperature = 1.0) {
    std::vector<int> points;
    if (!is_soft_mode(trace.config.mode)) return points;
    detail::walk_trace(trace, w, [&](const TraceStep& s, const DecoderCache& cache) {
        if (s.phase != Phase::thinking) return;
        const SoftToken& fed = s.fed_token();
        if (fed.size() < 2) return;
        const ProbVector p1 =
            detail::one_step_distribution(cache, embed_token(fed.entries[0].id, w), w, temperature);
        const ProbVector p2 =
            detail::one_step_distribution(cache, embed_token(fed.entries[1].id, w), w, temperature);
        if (js_divergence(p1, p2) >= js_threshold) points.push_back(s.index);
    });
    return points;
}

// ---------------------------------------------------------------------------
// Linearity (path-summation) check
// ---------------------------------------------------------------------------

struct LinearityResult {
    ProbVector lhs; // distribution from the soft forward
    ProbVector rhs; // probability-weighted mixture of per-token forwards
    double js = 0.0;
};

/// Compare the soft-input forward against the weighted mixture of
/// individual token forwards from the same discrete context. Exact on a
/// model whose output distribution is linear in the input token vector;
/// measurably positive on a real transformer.
inline LinearityResult linearity_check(std::span<const TokenId> context, const SoftToken& st,
                                       const ModelWeights& w, double temperature = 1.0,
                                       std::size_t max_support = 8) {
    if (st.empty()) throw DataError("linearity_check: empty token");
    if (st.size() > max_support)
        throw std::invalid_argument("linearity_check: support exceeds the per-token forward budget");
    DecoderCache cache = make_cache(w.card);
    if (!context.empty()) {
        std::vector<std::vector<float>> inputs;
        inputs.reserve(context.size());
        for (const TokenId id : context) inputs.push_back(embed_token(id, w));
        forward(inputs, w, cache);
    }
    LinearityResult result;
    result.lhs = detail::one_step_distribution(cache, embed_soft(st, w), w, temperature);
    result.rhs.assign(result.lhs.size(), 0.0);
    for (const auto& e : st.entries) {
        const ProbVector p =
            detail::one_step_distribution(cache, embed_token(e.id, w), w, temperature);
        for (std::size_t i = 0; i < p.size(); ++i) result.rhs[i] += e.weight * p[i];
    }
    result.js = js_divergence(result.lhs, result.rhs);
    return result;
}

struct LinearityRecord {
    int step = 0;
    int support = 0;
    double js = 0.0;
};

/// Trace-driven variant: evaluates the same comparison at every
/// small-support thinking step, teacher-forcing the recorded prefix.
inline std::vector<LinearityRecord> linearity_probe(const Trace& trace, const ModelWeights& w,
                                                    double temperature = 1.0,
                                                    std::size_t max_support = 8,
                                                    std::size_t max_steps = SIZE_MAX) {
    std::vector<LinearityRecord> records;
    if (!is_soft_mode(trace.config.mode)) return records;
    detail::walk_trace(trace, w, [&](const TraceStep& s, const DecoderCache& cache) {
        if (s.phase != Phase::thinking || records.size() >= max_steps) return;
        const SoftToken& fed = s.fed_token();
        if (fed.size() < 2 || fed.size() > max_support) return;
        const ProbVector lhs =
            detail::one_step_distribution(cache, embed_soft(fed, w), w, temperature);
        ProbVector rhs(lhs.size(), 0.0);
        for (const auto& e : fed.entries) {
            const ProbVector p =
                detail::one_step_distribution(cache, embed_token(e.id, w), w, temperature);
            for (std::size_t i = 0; i < p.size(); ++i) rhs[i] += e.weight * p[i];
        }
        records.push_back({s.index, static_cast<int>(fed.size()), js_divergence(lhs, rhs)});
    });
    return records;
}

// ---------------------------------------------------------------------------
// Logit-lens branching analysis
// ---------------------------------------------------------------------------

/// Per-layer intersection fractions for the two single-token paths
/// against the soft forward. layers+1 values each, all multiples of 0.2.
struct LensCurve {
    std::vector<double> token1;
    std::vector<double> token2;
};

/// Indices of the n largest probabilities, ties by ascending id.
inline std::vector<TokenId> top_ids(const ProbVector& p, int n) {
    std::vector<TokenId> ids(p.size());
    std::iota(ids.begin(), ids.end(), 0);
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(n), ids.size());
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                      [&](TokenId a, TokenId b) {
                          if (p[static_cast<std::size_t>(a)] != p[static_cast<std::size_t>(b)])
                              return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)];
                          return a < b;
                      });
    ids.resize(keep);
    return ids;
}

namespace detail {

inline double intersection_fraction(const std::vector<TokenId>& top5,
                                    const std::vector<TokenId>& top10) {
    int hits = 0;
    for (const TokenId id : top5)
        if (std::find(top10.begin(), top10.end(), id) != top10.end()) ++hits;
    return static_cast<double>(hits) / 5.0;
}

inline LensCurve lens_curves_at(const DecoderCache& prefix, TokenId token1, TokenId token2,
                                const ModelWeights& w, double weight1 = 0.6) {
    if (token1 == token2) throw DataError("lens_probe: tokens must differ");
    SoftToken st;
    st.entries = {{token1, weight1}, {token2, 1.0 - weight1}};
    sort_entries(st.entries);

    DecoderCache fork_soft = prefix;
    const ForwardResult soft_fw = forward({embed_soft(st, w)}, w, fork_soft, true);
    DecoderCache fork1 = prefix;
    const ForwardResult t1_fw = forward({embed_token(token1, w)}, w, fork1, true);
    DecoderCache fork2 = prefix;
    const ForwardResult t2_fw = forward({embed_token(token2, w)}, w, fork2, true);

    LensCurve curve;
    const std::size_t levels = soft_fw.activations.states.size();
    for (std::size_t layer = 0; layer < levels; ++layer) {
        const auto soft_top10 = top_ids(logit_lens(soft_fw.activations.states[layer], w), 10);
        const auto t1_top5 = top_ids(logit_lens(t1_fw.activations.states[layer], w), 5);
        const auto t2_top5 = top_ids(logit_lens(t2_fw.activations.states[layer], w), 5);
        curve.token1.push_back(intersection_fraction(t1_top5, soft_top10));
        curve.token2.push_back(intersection_fraction(t2_top5, soft_top10));
    }
    return curve;
}

} // namespace detail

/// Build a balanced (0.6, 0.4) soft token from the pair, run three
/// capture forwards from the context, and lens-decode every layer: each
/// curve value is |top5(single-token lens) intersect top10(soft lens)|/5.
/// weight1 overrides the token-1 share of the manufactured soft token.
inline LensCurve lens_probe(std::span<const TokenId> context, TokenId token1, TokenId token2,
                            const ModelWeights& w, double weight1 = 0.6) {
    if (token1 == token2) throw DataError("lens_probe: tokens must differ");
    DecoderCache cache = make_cache(w.card);
    if (!context.empty()) {
        std::vector<std::vector<float>> inputs;
        inputs.reserve(context.size());
        for (const TokenId id : context) inputs.push_back(embed_token(id, w));
        forward(inputs, w, cache);
    }
    return detail::lens_curves_at(cache, token1, token2, w, weight1);
}

struct LensRecord {
    int step = 0;
    TokenId token1 = -1;
    TokenId token2 = -1;
    LensCurve curve;
};

/// Lens curves at the first max_points branching points of a trace,
/// using each step's top-1/top-2 tokens and teacher-forced prefix.
inline std::vector<LensRecord> lens_scan(const Trace& trace, const ModelWeights& w,
                                         double js_threshold = 0.3, double temperature = 1.0,
                                         std::size_t max_points = 4) {
    std::vector<LensRecord> records;
    if (!is_soft_mode(trace.config.mode)) return records;
    detail::walk_trace(trace, w, [&](const TraceStep& s, const DecoderCache& cache) {
        if (s.phase != Phase::thinking || records.size() >= max_points) return;
        const SoftToken& fed = s.fed_token();
        if (fed.size() < 2) return;
        const TokenId token1 = fed.entries[0].id;
        const TokenId token2 = fed.entries[1].id;
        const ProbVector p1 =
            detail::one_step_distribution(cache, embed_token(token1, w), w, temperature);
        const ProbVector p2 =
            detail::one_step_distribution(cache, embed_token(token2, w), w, temperature);
        if (js_divergence(p1, p2) < js_threshold) return;
        records.push_back({s.index, token1, token2, detail::lens_curves_at(cache, token1, token2, w)});
    });
    return records;
}

// ---------------------------------------------------------------------------
// ROUGE-L and prefix similarity
// ---------------------------------------------------------------------------

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Longest common subsequence length, O(m*n) time, O(min) memory.
inline int lcs_length(std::span<const TokenId> a, std::span<const TokenId> b) {
    if (b.size() > a.size()) std::swap(a, b);
    std::vector<int> prev(b.size() + 1, 0), current(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1]) current[j] = prev[j - 1] + 1;
            else current[j] = std::max(prev[j], current[j - 1]);
        }
        std::swap(prev, current);
    }
    return prev[b.size()];
}

/// LCS-based similarity over token ids: precision = LCS/|candidate|,
/// recall = LCS/|reference|, f1 their harmonic mean.
inline RougeScore rouge_l(std::span<const TokenId> candidate, std::span<const TokenId> reference) {
    if (candidate.empty() || reference.empty())
        throw DataError("rouge_l: sequences must be non-empty");
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    RougeScore score;
    score.precision = lcs / static_cast<double>(candidate.size());
    score.recall = lcs / static_cast<double>(reference.size());
    score.f1 = (score.precision + score.recall) > 0.0
                   ? 2.0 * score.precision * score.recall / (score.precision + score.recall)
                   : 0.0;
    return score;
}

inline RougeScore rouge_l(const std::vector<TokenId>& candidate,
                          const std::vector<TokenId>& reference) {
    return rouge_l(std::span<const TokenId>(candidate), std::span<const TokenId>(reference));
}

/// ROUGE-L f1 of the two prefixes at each requested length; lengths past
/// a sequence's end clip to the full sequence.
inline std::vector<std::pair<int, double>> prefix_curve(std::span<const TokenId> candidate,
                                                        std::span<const TokenId> reference,
                                                        std::span<const int> lengths) {
    if (!std::is_sorted(lengths.begin(), lengths.end()))
        throw std::invalid_argument("prefix_curve: lengths must be ascending");
    std::vector<std::pair<int, double>> curve;
    curve.reserve(lengths.size());
    for (const int len : lengths) {
        if (len < 1) throw std::invalid_argument("prefix_curve: lengths must be positive");
        const auto c = candidate.first(std::min<std::size_t>(static_cast<std::size_t>(len), candidate.size()));
        const auto r = reference.first(std::min<std::size_t>(static_cast<std::size_t>(len), reference.size()));
        curve.emplace_back(len, rouge_l(c, r).f1);
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Softness vs randomness scan
// ---------------------------------------------------------------------------

struct ScanRecord {
    Randomizer randomizer = Randomizer::none;
    double param = 0.0;
    int prompt_index = 0;
    int step = 0;
    double softness = 0.0;   // entropy_normalized(st')
    double randomness = 0.0; // JS(pi, st') over the truncated support
};

struct ScanGrid {
    std::vector<double> gamma_values;
    std::vector<double> tau_values;

    /// gamma 1..10 step 1; tau 0.3..0.9 step 0.1.
    static ScanGrid defaults() {
        ScanGrid g;
        for (int i = 1; i <= 10; ++i) g.gamma_values.push_back(static_cast<double>(i));
        for (int i = 0; i <= 6; ++i) g.tau_values.push_back(0.3 + 0.1 * i);
        return g;
    }
};

/// Decode each prompt once per grid point with the matching randomizer
/// and collect per-step (softness, randomness) pairs. Seeds derive from
/// (base seed, grid index, prompt index).
inline std::vector<ScanRecord> randomness_softness_scan(
    const std::vector<std::vector<TokenId>>& prompts, const ModelWeights& w, const ScanGrid& grid,
    const DecodeConfig& base) {
    if (grid.gamma_values.empty() && grid.tau_values.empty())
        throw std::invalid_argument("randomness_softness_scan: empty grid");
    if (prompts.empty()) throw DataError("randomness_softness_scan: no prompts");
    std::vector<ScanRecord> records;
    std::uint64_t group = 0;
    auto run_group = [&](DecodeMode mode, double param) {
        DecodeConfig config = base;
        config.mode = mode;
        if (mode == DecodeMode::soft_dirichlet) config.gamma = param;
        else config.tau = param;
        for (std::size_t pi = 0; pi < prompts.size(); ++pi) {
            config.seed = derive_seed(derive_seed(base.seed, group), pi);
            const Trace trace = decode(prompts[pi], config, w);
            for (const TraceStep& s : trace.steps) {
                if (s.phase != Phase::thinking || !s.randomized) continue;
                records.push_back({s.randomized->source, param, static_cast<int>(pi), s.index,
                                   entropy_normalized(s.randomized->token),
                                   js_divergence(s.soft, s.randomized->token)});
            }
        }
        ++group;
    };
    for (const double gamma : grid.gamma_values) run_group(DecodeMode::soft_dirichlet, gamma);
    for (const double tau : grid.tau_values) run_group(DecodeMode::soft_gumbel, tau);
    return records;
}

} // namespace softthink
