#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "softthink/model.hpp"
#include "softthink/samplers.hpp"
#include "softthink/simplex.hpp"

namespace softthink {

enum class DecodeMode { greedy, sample, soft_vanilla, soft_dirichlet, soft_gumbel };
enum class AnswerMode { discrete_sample, discrete_greedy };
enum class Phase { thinking, answer };
enum class Termination { eot, max_len };

inline const char* mode_name(DecodeMode m) {
    switch (m) {
        case DecodeMode::greedy: return "greedy";
        case DecodeMode::sample: return "sample";
        case DecodeMode::soft_vanilla: return "soft_vanilla";
        case DecodeMode::soft_dirichlet: return "soft_dirichlet";
        case DecodeMode::soft_gumbel: return "soft_gumbel";
    }
    return "greedy";
}

inline DecodeMode mode_from_name(const std::string& name) {
    if (name == "greedy") return DecodeMode::greedy;
    if (name == "sample") return DecodeMode::sample;
    if (name == "soft_vanilla") return DecodeMode::soft_vanilla;
    if (name == "soft_dirichlet") return DecodeMode::soft_dirichlet;
    if (name == "soft_gumbel") return DecodeMode::soft_gumbel;
    throw DataError("unknown decode mode: " + name);
}

inline bool is_soft_mode(DecodeMode m) {
    return m == DecodeMode::soft_vanilla || m == DecodeMode::soft_dirichlet ||
           m == DecodeMode::soft_gumbel;
}

inline const char* answer_mode_name(AnswerMode m) {
    return m == AnswerMode::discrete_greedy ? "discrete_greedy" : "discrete_sample";
}
inline AnswerMode answer_mode_from_name(const std::string& name) {
    if (name == "discrete_sample") return AnswerMode::discrete_sample;
    if (name == "discrete_greedy") return AnswerMode::discrete_greedy;
    throw DataError("unknown answer mode: " + name);
}

inline const char* phase_name(Phase p) { return p == Phase::answer ? "answer" : "thinking"; }
inline Phase phase_from_name(const std::string& name) {
    if (name == "thinking") return Phase::thinking;
    if (name == "answer") return Phase::answer;
    throw DataError("unknown phase: " + name);
}

inline const char* termination_name(Termination t) {
    return t == Termination::eot ? "eot" : "max_len";
}
inline Termination termination_from_name(const std::string& name) {
    if (name == "eot") return Termination::eot;
    if (name == "max_len") return Termination::max_len;
    throw DataError("unknown termination reason: " + name);
}

struct DecodeConfig {
    DecodeMode mode = DecodeMode::soft_vanilla;
    double temperature = 0.6;
    int top_k = 30;
    double top_p = 0.95;
    double gamma = 4.0; // Dirichlet concentration scale (alpha in some write-ups)
    double tau = 0.5;   // Gumbel-Softmax temperature
    int max_len = 32768;
    std::uint64_t seed = 0;
    TokenId eot_id = tokens::kEot;
    AnswerMode answer_mode = AnswerMode::discrete_sample;
    /// Evaluate the end-of-thinking switch on the pre-randomizer token
    /// instead of the token actually fed forward.
    bool eot_check_pre_randomizer = false;
    /// Temperature -> 0 limit: emitted distributions collapse to the
    /// one-hot argmax before truncation.
    bool zero_temp_limit = false;
    /// Truncation applied to Dirichlet-resampled vectors; 0 inherits the
    /// decode-level top_k / top_p.
    int resample_top_k = 0;
    double resample_top_p = 0.0;

    bool operator==(const DecodeConfig&) const = default;
};

struct TraceStep {
    int index = 0;
    Phase phase = Phase::thinking;
    /// Vanilla soft token (post truncation, pre randomizer). Empty in
    /// discrete modes and answer-phase steps.
    SoftToken soft;
    std::optional<RandomizedSoftToken> randomized;
    /// First entry of the soft token actually fed forward, or the
    /// committed id for discrete steps.
    TokenId dominant = -1;
    /// Normalized entropy of the fed soft token; 0 for discrete steps.
    double entropy = 0.0;
    /// Discrete id fed forward: set for discrete-mode steps, the
    /// EOT-triggered switch step, and answer-phase steps.
    std::optional<TokenId> committed;
    std::uint64_t child_seed = 0;

    /// The token that was (or would be) fed forward at this step.
    const SoftToken& fed_token() const { return randomized ? randomized->token : soft; }
};

inline bool operator==(const RandomizedSoftToken& a, const RandomizedSoftToken& b) {
    return a.token == b.token && a.source == b.source && a.param == b.param;
}
inline bool operator==(const TraceStep& a, const TraceStep& b) {
    return a.index == b.index && a.phase == b.phase && a.soft == b.soft &&
           a.randomized == b.randomized && a.dominant == b.dominant && a.entropy == b.entropy &&
           a.committed == b.committed && a.child_seed == b.child_seed;
}

struct Trace {
    DecodeConfig config;
    ModelCard card;
    std::string model_ref;
    std::vector<TokenId> prompt;
    std::vector<TraceStep> steps;
    Termination termination = Termination::max_len;
    /// Runtime metadata only: not serialized and excluded from equality.
    double duration_ms = 0.0;

    /// Discrete ids fed forward, in order (committed steps only).
    std::vector<TokenId> committed_ids() const {
        std::vector<TokenId> ids;
        for (const auto& s : steps)
            if (s.committed) ids.push_back(*s.committed);
        return ids;
    }

    /// Top-1 token of each thinking step, the unit of the greedy-pitfall
    /// similarity analyses.
    std::vector<TokenId> thinking_top1_ids() const {
        std::vector<TokenId> ids;
        for (const auto& s : steps)
            if (s.phase == Phase::thinking) ids.push_back(s.dominant);
        return ids;
    }
};

/// Structural equality over the persistent fields (duration excluded).
inline bool trace_equal(const Trace& a, const Trace& b) {
    return a.config == b.config && a.card == b.card && a.model_ref == b.model_ref &&
           a.prompt == b.prompt && a.steps == b.steps && a.termination == b.termination;
}

namespace detail {

inline TokenId argmax_token(const std::vector<float>& logits) {
    return static_cast<TokenId>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
}

/// Distribution construction shared by sample mode and soft thinking:
/// temperature softmax (or argmax one-hot in the zero-temperature limit)
/// followed by combined top-k/top-p truncation.
inline SoftToken emitted_token(const std::vector<float>& logits, const DecodeConfig& config) {
    if (config.zero_temp_limit) return SoftToken::one_hot(argmax_token(logits));
    const ProbVector p = softmax(logits, config.temperature);
    return truncate(p, config.top_k, config.top_p);
}

inline void validate_decode_inputs(const std::vector<TokenId>& prompt, const DecodeConfig& config,
                                   const ModelWeights& weights) {
    if (prompt.empty()) throw DataError("decode: empty prompt");
    for (const TokenId id : prompt)
        if (id < 0 || id >= weights.card.vocab_size)
            throw DataError("decode: prompt token id out of range");
    if (config.max_len < 1) throw std::invalid_argument("decode: max_len must be >= 1");
    if (config.mode != DecodeMode::greedy && !(config.temperature > 0.0))
        throw std::invalid_argument("decode: temperature must be positive");
    if (config.top_k < 1) throw std::invalid_argument("decode: top_k must be >= 1");
    if (!(config.top_p > 0.0) || config.top_p > 1.0)
        throw std::invalid_argument("decode: top_p must be in (0, 1]");
    if (config.mode == DecodeMode::soft_dirichlet && !(config.gamma > 0.0))
        throw std::invalid_argument("decode: gamma must be positive");
    if (config.mode == DecodeMode::soft_gumbel && !(config.tau > 0.0))
        throw std::invalid_argument("decode: tau must be positive");
    if (config.eot_id < 0 || config.eot_id >= weights.card.vocab_size)
        throw DataError("decode: eot_id out of vocabulary range");
}

} // namespace detail

/// Run one seeded decode. Greedy picks the argmax every step (temperature
/// ignored); sample draws from the truncated temperature softmax; the
/// soft modes feed Soft Inputs during the thinking phase and switch to
/// discrete decoding once the dominant component of the fed token is the
/// end-of-thinking id. Every step draws from its own child stream
/// (seed, step index), so prefixes replay independently.
inline Trace decode(const std::vector<TokenId>& prompt, const DecodeConfig& config,
                    const ModelWeights& weights, const std::string& model_ref = "") {
    detail::validate_decode_inputs(prompt, config, weights);
    const auto start = std::chrono::steady_clock::now();

    Trace trace;
    trace.config = config;
    trace.card = weights.card;
    trace.model_ref = model_ref;
    trace.prompt = prompt;

    DecoderCache cache = make_cache(weights.card);
    std::vector<std::vector<float>> prompt_inputs;
    prompt_inputs.reserve(prompt.size());
    for (const TokenId id : prompt) prompt_inputs.push_back(embed_token(id, weights));
    std::vector<float> logits = forward(prompt_inputs, weights, cache).logits;

    // The step budget also clips to the context window: positions consumed
    // are prompt + steps - 1, so running out of context terminates with
    // reason max_len rather than erroring mid-decode.
    const std::int64_t context_budget =
        static_cast<std::int64_t>(weights.card.context) - static_cast<std::int64_t>(prompt.size()) + 1;
    const int budget = static_cast<int>(
        std::min<std::int64_t>(config.max_len, std::max<std::int64_t>(context_budget, 0)));

    const bool soft = is_soft_mode(config.mode);
    Phase phase = Phase::thinking;
    bool terminated = false;

    for (int step = 0; step < budget; ++step) {
        RngState child = RngState::child(config.seed, static_cast<std::uint64_t>(step));
        TraceStep ts;
        ts.index = step;
        ts.child_seed = child.seed();
        ts.phase = phase;

        std::vector<float> next_input;
        if (!soft || phase == Phase::answer) {
            const bool greedy_step =
                config.mode == DecodeMode::greedy ||
                (phase == Phase::answer && config.answer_mode == AnswerMode::discrete_greedy);
            TokenId id;
            if (greedy_step) {
                id = detail::argmax_token(logits);
            } else {
                id = sample_categorical(detail::emitted_token(logits, config), child);
            }
            ts.dominant = id;
            ts.committed = id;
            trace.steps.push_back(ts);
            if (id == config.eot_id) {
                terminated = true;
                break;
            }
            next_input = embed_token(id, weights);
        } else {
            SoftToken raw = detail::emitted_token(logits, config);
            std::optional<RandomizedSoftToken> randomized;
            if (config.mode == DecodeMode::soft_dirichlet) {
                const int rk = config.resample_top_k > 0 ? config.resample_top_k : config.top_k;
                const double rp = config.resample_top_p > 0.0 ? config.resample_top_p : config.top_p;
                randomized = dirichlet_resample(raw, config.gamma, child, rk, rp);
            } else if (config.mode == DecodeMode::soft_gumbel) {
                randomized = gumbel_softmax(raw, config.tau, child);
            }
            ts.soft = std::move(raw);
            ts.randomized = std::move(randomized);
            const SoftToken& fed = ts.fed_token();
            const SoftToken& eot_basis = config.eot_check_pre_randomizer ? ts.soft : fed;
            ts.entropy = entropy_normalized(fed);
            if (eot_basis.dominant() == config.eot_id) {
                // Switch: the end-of-thinking token is committed discretely
                // and the answer phase begins.
                ts.dominant = config.eot_id;
                ts.committed = config.eot_id;
                next_input = embed_token(config.eot_id, weights);
                trace.steps.push_back(std::move(ts));
                phase = Phase::answer;
            } else {
                ts.dominant = fed.dominant();
                next_input = embed_soft(fed, weights);
                trace.steps.push_back(std::move(ts));
            }
        }
        if (step + 1 < budget)
            logits = forward({std::move(next_input)}, weights, cache).logits;
    }

    trace.termination = terminated ? Termination::eot : Termination::max_len;
    trace.duration_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    return trace;
}

/// Discrete decoding entry point: greedy or temperature sampling only.
inline Trace decode_discrete(const std::vector<TokenId>& prompt, const DecodeConfig& config,
                             const ModelWeights& weights, const std::string& model_ref = "") {
    if (is_soft_mode(config.mode))
        throw std::invalid_argument("decode_discrete: mode must be greedy or sample");
    return decode(prompt, config, weights, model_ref);
}

/// Soft-thinking entry point: vanilla or randomized soft modes only.
inline Trace decode_soft(const std::vector<TokenId>& prompt, const DecodeConfig& config,
                         const ModelWeights& weights, const std::string& model_ref = "") {
    if (!is_soft_mode(config.mode))
        throw std::invalid_argument("decode_soft: mode must be a soft thinking mode");
    return decode(prompt, config, weights, model_ref);
}

/// Re-execute a trace from its stored config and seed. The model card
/// must match the loaded weights. An optional max_len override replays
/// just a prefix.
inline Trace replay(const Trace& trace, const ModelWeights& weights,
                    std::optional<int> max_len_override = std::nullopt) {
    if (!(trace.card == weights.card))
        throw DataError("replay: trace model card does not match loaded weights");
    DecodeConfig config = trace.config;
    if (max_len_override) config.max_len = *max_len_override;
    return decode(trace.prompt, config, weights, trace.model_ref);
}

} // namespace softthink
