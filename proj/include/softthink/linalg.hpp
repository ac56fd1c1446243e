#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace softthink {

/// Row-major float matrix. Model math runs in 32-bit; probability
/// post-processing upcasts to double elsewhere.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

    float* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const float* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    bool empty() const { return data.empty(); }
};

namespace linalg {

/// out = W x with W [rows x cols] row-major, x of length cols.
inline void matvec(const Mat& w, std::span<const float> x, std::span<float> out) {
    for (int r = 0; r < w.rows; ++r) {
        const float* wr = w.row(r);
        float acc = 0.0f;
        for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[static_cast<std::size_t>(c)];
        out[static_cast<std::size_t>(r)] = acc;
    }
}

inline std::vector<float> matvec(const Mat& w, std::span<const float> x) {
    std::vector<float> out(static_cast<std::size_t>(w.rows));
    matvec(w, x, out);
    return out;
}

/// RMS normalization with learned gain.
inline std::vector<float> rmsnorm(std::span<const float> x, std::span<const float> gain) {
    constexpr float eps = 1e-5f;
    float mean_square = 0.0f;
    for (const float v : x) mean_square += v * v;
    mean_square /= static_cast<float>(x.size());
    const float scale = 1.0f / std::sqrt(mean_square + eps);
    std::vector<float> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * scale * gain[i];
    return out;
}

inline float gelu(float x) {
    constexpr float sqrt_2_over_pi = 0.7978845608028654f;
    return 0.5f * x * (1.0f + std::tanh(sqrt_2_over_pi * (x + 0.044715f * x * x * x)));
}

inline void add_inplace(std::span<float> x, std::span<const float> y) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

} // namespace linalg
} // namespace softthink
