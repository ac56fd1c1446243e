#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "softthink/common.hpp"
#include "softthink/linalg.hpp"
#include "softthink/rng.hpp"
#include "softthink/safetensors.hpp"
#include "softthink/samplers.hpp"
#include "softthink/simplex.hpp"
#include "softthink/tokenizer.hpp"

namespace softthink {

/// Architecture of a loaded model. "transformer" is the pre-norm decoder
/// stack; "linear" is a single stochastic-matrix head over the token
/// probability vector, whose output distribution is exactly the weighted
/// mixture of its per-token outputs.
enum class Arch { transformer, linear };

inline const char* arch_name(Arch a) { return a == Arch::linear ? "linear" : "transformer"; }

struct ModelCard {
    int vocab_size = tokens::kVocabSize;
    int dim = 64;
    int layers = 2;
    int heads = 4;
    int context = 512;
    TokenId eot_id = tokens::kEot;
    bool tied_head = true;
    std::string positional = "rope"; // "rope" | "none"
    Arch arch = Arch::transformer;

    bool operator==(const ModelCard&) const = default;
};

inline nlohmann::json card_to_json(const ModelCard& c) {
    return {
        {"vocab_size", c.vocab_size}, {"dim", c.dim},         {"layers", c.layers},
        {"heads", c.heads},           {"context", c.context}, {"eot_id", c.eot_id},
        {"tied_head", c.tied_head},   {"positional", c.positional},
        {"arch", arch_name(c.arch)},
    };
}

inline ModelCard card_from_json(const nlohmann::json& j) {
    ModelCard c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.dim = j.at("dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.context = j.at("context").get<int>();
    c.eot_id = j.at("eot_id").get<TokenId>();
    c.tied_head = j.at("tied_head").get<bool>();
    c.positional = j.at("positional").get<std::string>();
    const std::string arch = j.value("arch", "transformer");
    if (arch == "linear") c.arch = Arch::linear;
    else if (arch == "transformer") c.arch = Arch::transformer;
    else throw DataError("model card: unknown arch " + arch);
    return c;
}

struct BlockWeights {
    std::vector<float> attn_norm; // [dim]
    Mat wq, wk, wv, wo;           // [dim x dim]
    std::vector<float> mlp_norm;  // [dim]
    Mat fc1;                      // [hidden x dim]
    Mat fc2;                      // [dim x hidden]
};

struct ModelWeights {
    ModelCard card;
    Mat embed;                     // [vocab x dim]; unused for Arch::linear
    std::vector<BlockWeights> blocks;
    std::vector<float> final_norm; // [dim]
    Mat lm_head;                   // [vocab x dim] when untied; [vocab x vocab] for linear

    const Mat& head() const { return card.tied_head ? embed : lm_head; }
};

/// Hidden state of the final sequence position after each stage: index 0
/// is the embedding output, index i+1 the output of block i. Always
/// layers+1 vectors.
struct LayerActivations {
    std::vector<std::vector<float>> states;
};

/// Per-layer attention keys/values for the positions seen so far. One
/// cache per decode session; copyable so probes can fork a prefix.
struct DecoderCache {
    std::vector<std::vector<float>> keys;   // per layer, length * dim
    std::vector<std::vector<float>> values; // per layer, length * dim
    int length = 0;
};

inline DecoderCache make_cache(const ModelCard& card) {
    DecoderCache cache;
    cache.keys.resize(static_cast<std::size_t>(card.layers));
    cache.values.resize(static_cast<std::size_t>(card.layers));
    return cache;
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

inline std::vector<float> embed_token(TokenId id, const ModelWeights& w) {
    if (id < 0 || id >= w.card.vocab_size)
        throw DataError("embed_token: token id out of range");
    if (w.card.arch == Arch::linear) {
        std::vector<float> x(static_cast<std::size_t>(w.card.vocab_size), 0.0f);
        x[static_cast<std::size_t>(id)] = 1.0f;
        return x;
    }
    const float* row = w.embed.row(id);
    return std::vector<float>(row, row + w.card.dim);
}

/// Soft input: the convex combination of embedding rows weighted by the
/// token's entries. A one-hot token reproduces its row bit-exactly.
inline std::vector<float> embed_soft(const SoftToken& st, const ModelWeights& w) {
    if (st.empty()) throw DataError("embed_soft: empty token");
    for (const auto& e : st.entries)
        if (e.id < 0 || e.id >= w.card.vocab_size)
            throw DataError("embed_soft: token id out of range");
    if (st.size() == 1) return embed_token(st.entries[0].id, w);
    if (w.card.arch == Arch::linear) {
        std::vector<float> x(static_cast<std::size_t>(w.card.vocab_size), 0.0f);
        for (const auto& e : st.entries)
            x[static_cast<std::size_t>(e.id)] = static_cast<float>(e.weight);
        return x;
    }
    std::vector<float> out(static_cast<std::size_t>(w.card.dim), 0.0f);
    for (const auto& e : st.entries) {
        const float* row = w.embed.row(e.id);
        const float weight = static_cast<float>(e.weight);
        for (int i = 0; i < w.card.dim; ++i) out[static_cast<std::size_t>(i)] += weight * row[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct ForwardResult {
    std::vector<float> logits;
    LayerActivations activations; // filled only when capture was requested
};

namespace detail {

inline void rope_rotate(std::span<float> vec, int heads, int pos) {
    const int head_dim = static_cast<int>(vec.size()) / heads;
    for (int h = 0; h < heads; ++h) {
        float* base = vec.data() + static_cast<std::size_t>(h) * head_dim;
        for (int i = 0; i < head_dim; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / head_dim);
            const double theta = static_cast<double>(pos) * freq;
            const float c = static_cast<float>(std::cos(theta));
            const float s = static_cast<float>(std::sin(theta));
            const float a = base[i];
            const float b = base[i + 1];
            base[i] = a * c - b * s;
            base[i + 1] = a * s + b * c;
        }
    }
}

inline void check_finite(std::span<const float> x, int layer_index) {
    for (const float v : x)
        if (!std::isfinite(v))
            throw NumericError("forward: non-finite activation at layer " +
                               std::to_string(layer_index));
}

/// Advance one transformer position: append K/V to the cache and return
/// the new hidden state (and per-block captures when requested).
inline std::vector<float> transformer_position(const std::vector<float>& input,
                                               const ModelWeights& w, DecoderCache& cache,
                                               LayerActivations* capture) {
    const ModelCard& card = w.card;
    const int dim = card.dim;
    const int heads = card.heads;
    const int head_dim = dim / heads;
    const int pos = cache.length;
    const float score_scale = 1.0f / std::sqrt(static_cast<float>(head_dim));

    std::vector<float> x = input;
    if (capture) capture->states.push_back(x);
    check_finite(x, 0);

    for (int layer = 0; layer < card.layers; ++layer) {
        const BlockWeights& block = w.blocks[static_cast<std::size_t>(layer)];

        // attention
        std::vector<float> normed = linalg::rmsnorm(x, block.attn_norm);
        std::vector<float> q = linalg::matvec(block.wq, normed);
        std::vector<float> k = linalg::matvec(block.wk, normed);
        std::vector<float> v = linalg::matvec(block.wv, normed);
        if (card.positional == "rope") {
            rope_rotate(q, heads, pos);
            rope_rotate(k, heads, pos);
        }
        auto& layer_keys = cache.keys[static_cast<std::size_t>(layer)];
        auto& layer_values = cache.values[static_cast<std::size_t>(layer)];
        layer_keys.insert(layer_keys.end(), k.begin(), k.end());
        layer_values.insert(layer_values.end(), v.begin(), v.end());

        std::vector<float> attn_out(static_cast<std::size_t>(dim), 0.0f);
        std::vector<float> scores(static_cast<std::size_t>(pos) + 1);
        for (int h = 0; h < heads; ++h) {
            const int off = h * head_dim;
            float max_score = -std::numeric_limits<float>::infinity();
            for (int t = 0; t <= pos; ++t) {
                const float* kt = layer_keys.data() + static_cast<std::size_t>(t) * dim + off;
                float dot = 0.0f;
                for (int i = 0; i < head_dim; ++i) dot += q[static_cast<std::size_t>(off + i)] * kt[i];
                scores[static_cast<std::size_t>(t)] = dot * score_scale;
                max_score = std::max(max_score, scores[static_cast<std::size_t>(t)]);
            }
            float sum = 0.0f;
            for (int t = 0; t <= pos; ++t) {
                scores[static_cast<std::size_t>(t)] = std::exp(scores[static_cast<std::size_t>(t)] - max_score);
                sum += scores[static_cast<std::size_t>(t)];
            }
            for (int t = 0; t <= pos; ++t) {
                const float weight = scores[static_cast<std::size_t>(t)] / sum;
                const float* vt = layer_values.data() + static_cast<std::size_t>(t) * dim + off;
                for (int i = 0; i < head_dim; ++i)
                    attn_out[static_cast<std::size_t>(off + i)] += weight * vt[i];
            }
        }
        std::vector<float> projected = linalg::matvec(block.wo, attn_out);
        linalg::add_inplace(x, projected);

        // mlp
        std::vector<float> normed2 = linalg::rmsnorm(x, block.mlp_norm);
        std::vector<float> hidden = linalg::matvec(block.fc1, normed2);
        for (float& value : hidden) value = linalg::gelu(value);
        std::vector<float> mlp_out = linalg::matvec(block.fc2, hidden);
        linalg::add_inplace(x, mlp_out);

        check_finite(x, layer + 1);
        if (capture) capture->states.push_back(x);
    }
    cache.length += 1;
    return x;
}

/// Linear arch position: the distribution over next tokens is the
/// stochastic matrix applied to the input probability vector; logits are
/// its elementwise log, so softmax recovers it exactly.
inline std::vector<float> linear_logits(const std::vector<float>& input, const ModelWeights& w) {
    std::vector<float> mixed = linalg::matvec(w.lm_head, input);
    for (float& value : mixed) value = std::log(std::max(value, 1e-30f));
    return mixed;
}

} // namespace detail

/// Run the model over a sequence of input embeddings, appending to the
/// cache, and return next-position logits for the last input. When
/// capture is on, also return the per-layer hidden states of that last
/// position. Deterministic given weights and inputs.
inline ForwardResult forward(const std::vector<std::vector<float>>& inputs, const ModelWeights& w,
                             DecoderCache& cache, bool capture = false) {
    if (inputs.empty()) throw DataError("forward: no inputs");
    if (cache.length + static_cast<int>(inputs.size()) > w.card.context)
        throw CapacityError("forward: sequence exceeds context length " +
                            std::to_string(w.card.context));
    ForwardResult result;
    if (w.card.arch == Arch::linear) {
        cache.length += static_cast<int>(inputs.size());
        result.logits = detail::linear_logits(inputs.back(), w);
        if (capture) result.activations.states.push_back(inputs.back());
        return result;
    }
    std::vector<float> x;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const bool last = (i + 1 == inputs.size());
        LayerActivations* cap = (capture && last) ? &result.activations : nullptr;
        if (static_cast<int>(inputs[i].size()) != w.card.dim)
            throw DataError("forward: input width does not match model dim");
        x = detail::transformer_position(inputs[i], w, cache, cap);
    }
    std::vector<float> final_state = linalg::rmsnorm(x, w.final_norm);
    result.logits = linalg::matvec(w.head(), final_state);
    detail::check_finite(result.logits, w.card.layers + 1);
    return result;
}

/// Decode a hidden state through the final normalization and LM head,
/// then softmax at temperature 1. At the top layer this reproduces the
/// model's own output distribution.
inline ProbVector logit_lens(std::span<const float> hidden, const ModelWeights& w) {
    if (w.card.arch == Arch::linear) {
        std::vector<float> input(hidden.begin(), hidden.end());
        return softmax(detail::linear_logits(input, w), 1.0);
    }
    if (static_cast<int>(hidden.size()) != w.card.dim)
        throw DataError("logit_lens: hidden width does not match model dim");
    std::vector<float> normed = linalg::rmsnorm(hidden, w.final_norm);
    std::vector<float> logits = linalg::matvec(w.head(), normed);
    return softmax(logits, 1.0);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

struct ToyModelSpec {
    int layers = 2;
    int dim = 64;
    int heads = 4;
    int vocab = tokens::kVocabSize;
    int context = 512;
    TokenId eot_id = tokens::kEot;
    bool tied_head = true;
};

namespace detail {

inline void fill_normal(std::vector<float>& data, double stddev, RngState& rng) {
    for (float& value : data) value = static_cast<float>(stddev * rng.normal());
}

inline Mat random_mat(int rows, int cols, double stddev, RngState& rng) {
    Mat m(rows, cols);
    fill_normal(m.data, stddev, rng);
    return m;
}

} // namespace detail

inline void validate_weights(const ModelWeights& w);

/// Deterministic small random transformer. The embedding scale is chosen
/// so that tied-head logits land in a range where temperature-0.6
/// truncated distributions are concentrated but usually multi-token.
inline ModelWeights init_toy_model(const ToyModelSpec& spec, std::uint64_t seed) {
    if (spec.dim % spec.heads != 0 || (spec.dim / spec.heads) % 2 != 0)
        throw std::invalid_argument("init_toy_model: dim must split into even-sized heads");
    if (spec.layers < 1) throw std::invalid_argument("init_toy_model: layers must be >= 1");
    ModelWeights w;
    w.card = ModelCard{spec.vocab, spec.dim,   spec.layers, spec.heads, spec.context,
                       spec.eot_id, spec.tied_head, "rope",  Arch::transformer};
    RngState rng(seed);
    const double dim_scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
    const int hidden = 4 * spec.dim;

    w.embed = detail::random_mat(spec.vocab, spec.dim, dim_scale, rng);
    for (int layer = 0; layer < spec.layers; ++layer) {
        BlockWeights block;
        block.attn_norm.assign(static_cast<std::size_t>(spec.dim), 1.0f);
        block.wq = detail::random_mat(spec.dim, spec.dim, dim_scale, rng);
        block.wk = detail::random_mat(spec.dim, spec.dim, dim_scale, rng);
        block.wv = detail::random_mat(spec.dim, spec.dim, dim_scale, rng);
        block.wo = detail::random_mat(spec.dim, spec.dim, 0.5 * dim_scale, rng);
        block.mlp_norm.assign(static_cast<std::size_t>(spec.dim), 1.0f);
        block.fc1 = detail::random_mat(hidden, spec.dim, dim_scale, rng);
        block.fc2 = detail::random_mat(spec.dim, hidden, 0.5 / std::sqrt(static_cast<double>(hidden)), rng);
        w.blocks.push_back(std::move(block));
    }
    w.final_norm.assign(static_cast<std::size_t>(spec.dim), 1.0f);
    if (!spec.tied_head)
        w.lm_head = detail::random_mat(spec.vocab, spec.dim, dim_scale, rng);
    validate_weights(w);
    return w;
}

/// Single-linear-layer model: next-token distribution = M p where M is a
/// column-stochastic matrix and p the input token probability vector.
/// Mixing inputs mixes outputs exactly, so the path-summation identity
/// holds by construction. eot_floor lifts the end-of-thinking row so
/// decodes terminate.
inline ModelWeights init_linear_model(int vocab, std::uint64_t seed, double eot_floor = 0.02,
                                      TokenId eot_id = tokens::kEot) {
    if (vocab < 2) throw std::invalid_argument("init_linear_model: vocab must be >= 2");
    if (eot_floor < 0.0 || eot_floor >= 1.0)
        throw std::invalid_argument("init_linear_model: eot_floor must be in [0, 1)");
    ModelWeights w;
    w.card = ModelCard{vocab, vocab, 0, 1, 1 << 20, eot_id, false, "none", Arch::linear};
    RngState rng(seed);
    Mat m(vocab, vocab);
    // Column j: spiky random distribution (gamma(0.5) variates) blended
    // with the EOT floor.
    for (int col = 0; col < vocab; ++col) {
        double sum = 0.0;
        std::vector<double> raw(static_cast<std::size_t>(vocab));
        for (int row = 0; row < vocab; ++row) {
            raw[static_cast<std::size_t>(row)] = gamma_variate(0.5, rng);
            sum += raw[static_cast<std::size_t>(row)];
        }
        for (int row = 0; row < vocab; ++row) {
            double p = raw[static_cast<std::size_t>(row)] / sum;
            p *= (1.0 - eot_floor);
            if (row == eot_id) p += eot_floor;
            m.data[static_cast<std::size_t>(row) * vocab + col] = static_cast<float>(p);
        }
    }
    w.lm_head = std::move(m);
    validate_weights(w);
    return w;
}

inline void validate_weights(const ModelWeights& w) {
    const ModelCard& c = w.card;
    if (c.eot_id < 0 || c.eot_id >= c.vocab_size)
        throw DataError("model: eot_id out of vocabulary range");
    auto check = [](const std::vector<float>& data, const std::string& name) {
        for (const float v : data)
            if (!std::isfinite(v)) throw DataError("model: non-finite value in " + name);
    };
    if (c.arch == Arch::linear) {
        if (w.lm_head.rows != c.vocab_size || w.lm_head.cols != c.vocab_size)
            throw DataError("model: linear head shape mismatch");
        check(w.lm_head.data, "lm_head.weight");
        return;
    }
    if (w.embed.rows != c.vocab_size || w.embed.cols != c.dim)
        throw DataError("model: embed shape mismatch");
    check(w.embed.data, "embed.weight");
    if (static_cast<int>(w.blocks.size()) != c.layers)
        throw DataError("model: block count mismatch");
    const int hidden = 4 * c.dim;
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
        const BlockWeights& b = w.blocks[i];
        const std::string prefix = "block." + std::to_string(i) + ".";
        if (static_cast<int>(b.attn_norm.size()) != c.dim ||
            static_cast<int>(b.mlp_norm.size()) != c.dim)
            throw DataError("model: norm shape mismatch in " + prefix);
        if (b.wq.rows != c.dim || b.wq.cols != c.dim || b.wk.rows != c.dim ||
            b.wk.cols != c.dim || b.wv.rows != c.dim || b.wv.cols != c.dim ||
            b.wo.rows != c.dim || b.wo.cols != c.dim)
            throw DataError("model: attention shape mismatch in " + prefix);
        if (b.fc1.rows != hidden || b.fc1.cols != c.dim || b.fc2.rows != c.dim ||
            b.fc2.cols != hidden)
            throw DataError("model: mlp shape mismatch in " + prefix);
        check(b.attn_norm, prefix + "attn.norm.weight");
        check(b.wq.data, prefix + "attn.wq.weight");
        check(b.wk.data, prefix + "attn.wk.weight");
        check(b.wv.data, prefix + "attn.wv.weight");
        check(b.wo.data, prefix + "attn.wo.weight");
        check(b.mlp_norm, prefix + "mlp.norm.weight");
        check(b.fc1.data, prefix + "mlp.fc1.weight");
        check(b.fc2.data, prefix + "mlp.fc2.weight");
    }
    if (static_cast<int>(w.final_norm.size()) != c.dim)
        throw DataError("model: final_norm shape mismatch");
    check(w.final_norm, "final_norm.weight");
    if (!c.tied_head) {
        if (w.lm_head.rows != c.vocab_size || w.lm_head.cols != c.dim)
            throw DataError("model: lm_head shape mismatch");
        check(w.lm_head.data, "lm_head.weight");
    }
}

// ---------------------------------------------------------------------------
// Container I/O
// ---------------------------------------------------------------------------

namespace detail {

inline std::string card_path_for(const std::string& weights_path) {
    const std::string suffix = ".safetensors";
    if (weights_path.size() > suffix.size() &&
        weights_path.compare(weights_path.size() - suffix.size(), suffix.size(), suffix) == 0)
        return weights_path.substr(0, weights_path.size() - suffix.size()) + ".json";
    return weights_path + ".json";
}

inline NamedTensor to_tensor(const Mat& m) {
    return NamedTensor{{m.rows, m.cols}, m.data};
}
inline NamedTensor to_tensor(const std::vector<float>& v) {
    return NamedTensor{{static_cast<std::int64_t>(v.size())}, v};
}

inline Mat mat_from(const NamedTensor& t, const std::string& name) {
    if (t.shape.size() != 2) throw DataError("model: tensor " + name + " is not 2-D");
    Mat m(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]));
    m.data = t.data;
    return m;
}
inline std::vector<float> vec_from(const NamedTensor& t, const std::string& name) {
    if (t.shape.size() != 1) throw DataError("model: tensor " + name + " is not 1-D");
    return t.data;
}

inline const NamedTensor& require(const TensorMap& tensors, const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("model: missing tensor " + name);
    return it->second;
}

} // namespace detail

/// Write weights as a safetensors container plus a sidecar card JSON
/// (same path with .safetensors replaced by .json).
inline void save_model(const ModelWeights& w, const std::string& weights_path) {
    TensorMap tensors;
    if (w.card.arch == Arch::linear) {
        tensors["lm_head.weight"] = detail::to_tensor(w.lm_head);
    } else {
        tensors["embed.weight"] = detail::to_tensor(w.embed);
        for (std::size_t i = 0; i < w.blocks.size(); ++i) {
            const std::string prefix = "block." + std::to_string(i) + ".";
            const BlockWeights& b = w.blocks[i];
            tensors[prefix + "attn.norm.weight"] = detail::to_tensor(b.attn_norm);
            tensors[prefix + "attn.wq.weight"] = detail::to_tensor(b.wq);
            tensors[prefix + "attn.wk.weight"] = detail::to_tensor(b.wk);
            tensors[prefix + "attn.wv.weight"] = detail::to_tensor(b.wv);
            tensors[prefix + "attn.wo.weight"] = detail::to_tensor(b.wo);
            tensors[prefix + "mlp.norm.weight"] = detail::to_tensor(b.mlp_norm);
            tensors[prefix + "mlp.fc1.weight"] = detail::to_tensor(b.fc1);
            tensors[prefix + "mlp.fc2.weight"] = detail::to_tensor(b.fc2);
        }
        tensors["final_norm.weight"] = detail::to_tensor(w.final_norm);
        if (!w.card.tied_head) tensors["lm_head.weight"] = detail::to_tensor(w.lm_head);
    }
    safetensors::save(weights_path, tensors);

    std::ofstream card_out(detail::card_path_for(weights_path), std::ios::trunc);
    if (!card_out) throw DataError("model: cannot write card for " + weights_path);
    card_out << card_to_json(w.card).dump(2) << "\n";
}

inline ModelWeights load_model(const std::string& weights_path) {
    std::ifstream card_in(detail::card_path_for(weights_path));
    if (!card_in) throw DataError("model: missing card file " + detail::card_path_for(weights_path));
    nlohmann::json card_json;
    try {
        card_in >> card_json;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model: bad card JSON: ") + e.what());
    }
    ModelWeights w;
    w.card = card_from_json(card_json);
    const TensorMap tensors = safetensors::load(weights_path);
    if (w.card.arch == Arch::linear) {
        w.lm_head = detail::mat_from(detail::require(tensors, "lm_head.weight"), "lm_head.weight");
        validate_weights(w);
        return w;
    }
    w.embed = detail::mat_from(detail::require(tensors, "embed.weight"), "embed.weight");
    for (int i = 0; i < w.card.layers; ++i) {
        const std::string prefix = "block." + std::to_string(i) + ".";
        BlockWeights b;
        b.attn_norm = detail::vec_from(detail::require(tensors, prefix + "attn.norm.weight"),
                                       prefix + "attn.norm.weight");
        b.wq = detail::mat_from(detail::require(tensors, prefix + "attn.wq.weight"),
                                prefix + "attn.wq.weight");
        b.wk = detail::mat_from(detail::require(tensors, prefix + "attn.wk.weight"),
                                prefix + "attn.wk.weight");
        b.wv = detail::mat_from(detail::require(tensors, prefix + "attn.wv.weight"),
                                prefix + "attn.wv.weight");
        b.wo = detail::mat_from(detail::require(tensors, prefix + "attn.wo.weight"),
                                prefix + "attn.wo.weight");
        b.mlp_norm = detail::vec_from(detail::require(tensors, prefix + "mlp.norm.weight"),
                                      prefix + "mlp.norm.weight");
        b.fc1 = detail::mat_from(detail::require(tensors, prefix + "mlp.fc1.weight"),
                                 prefix + "mlp.fc1.weight");
        b.fc2 = detail::mat_from(detail::require(tensors, prefix + "mlp.fc2.weight"),
                                 prefix + "mlp.fc2.weight");
        w.blocks.push_back(std::move(b));
    }
    w.final_norm = detail::vec_from(detail::require(tensors, "final_norm.weight"),
                                    "final_norm.weight");
    if (!w.card.tied_head)
        w.lm_head = detail::mat_from(detail::require(tensors, "lm_head.weight"), "lm_head.weight");
    validate_weights(w);
    return w;
}

} // namespace softthink
