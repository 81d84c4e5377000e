#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "common.hpp"
#include "linalg.hpp"

namespace anchorscope {

inline constexpr float kLnEps = 1e-5f;

/// LayerNorm of a single row vector with learned gain and bias.
inline Vec layer_norm(const Vec& x, const Vec& g, const Vec& b) {
    const float mean = x.mean();
    const Vec c = x.array() - mean;
    const float var = c.squaredNorm() / static_cast<float>(c.size());
    return (c.array() / std::sqrt(var + kLnEps)).matrix().cwiseProduct(g) + b;
}

/// LayerNorm without gain or bias (the "plain" lens variant).
inline Vec plain_layer_norm(const Vec& x) {
    const float mean = x.mean();
    const Vec c = x.array() - mean;
    const float var = c.squaredNorm() / static_cast<float>(c.size());
    return c / std::sqrt(var + kLnEps);
}

/// Row-wise LayerNorm over a (T, d) activation matrix.
inline Mat layer_norm_rows(const Mat& x, const Vec& g, const Vec& b) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = layer_norm(x.row(i), g, b);
    return out;
}

/// GPT-2's tanh-approximate GELU, applied elementwise.
inline float gelu(float x) {
    constexpr float k = 0.7978845608028654f; // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

inline void gelu_inplace(Mat& x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gelu(x.data()[i]);
}

/// In-place softmax over one attention row.
inline void softmax_row(Eigen::Ref<Eigen::RowVectorXf> row) {
    const float m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
}

/// Indices of the k largest entries, ties broken toward the smaller index so
/// reported token lists are deterministic.
inline std::vector<int> top_k_indices(const Vec& v, int k) {
    const int n = static_cast<int>(v.size());
    k = std::min(k, n);
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

/// Argmax with the same smaller-index tie rule.
inline int argmax(const Vec& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

/// Softmax probabilities of selected entries relative to the full vector.
inline std::vector<float> softmax_probs_at(const Vec& logits, const std::vector<int>& at) {
    const float m = logits.maxCoeff();
    double z = 0.0;
    for (int i = 0; i < static_cast<int>(logits.size()); ++i)
        z += std::exp(static_cast<double>(logits[i] - m));
    std::vector<float> out;
    out.reserve(at.size());
    for (int i : at)
        out.push_back(static_cast<float>(std::exp(static_cast<double>(logits[i] - m)) / z));
    return out;
}

} // namespace anchorscope
