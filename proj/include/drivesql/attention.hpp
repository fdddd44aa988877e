#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace drivesql {

/// Dense row-major matrix of tokens x features.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool finite() const;
    FeatureMatrix transposed() const;

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Row-wise concatenation; column counts must agree.
FeatureMatrix vconcat(const FeatureMatrix& top, const FeatureMatrix& bottom);
FeatureMatrix vconcat(std::span<const FeatureMatrix> parts);

/// W x H x D grid, cell (w, h) at row w*H + h when flattened.
struct BevGrid {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t dim = 0;
    std::vector<double> data;

    BevGrid() = default;
    BevGrid(std::size_t w, std::size_t h, std::size_t d, double fill = 0.0)
        : width(w), height(h), dim(d), data(w * h * d, fill) {}

    FeatureMatrix flatten() const;
};

namespace attention {

// OpenMP kernels. Rows of the output are computed independently.

FeatureMatrix matmul(const FeatureMatrix& a, const FeatureMatrix& b);

/// softmax(Q K^T / sqrt(d)) with per-row max subtraction; n x m.
FeatureMatrix attention_weights(const FeatureMatrix& queries, const FeatureMatrix& keys);

/// softmax(Q K^T / sqrt(d)) V.
FeatureMatrix cross_attention(const FeatureMatrix& queries, const FeatureMatrix& keys, const FeatureMatrix& values);

/// Multi-view Q-Former: queries attend to the view-concatenated tokens.
FeatureMatrix mv_qformer(const FeatureMatrix& mv_queries, const FeatureMatrix& mv_tokens);
FeatureMatrix mv_qformer(const FeatureMatrix& mv_queries, std::span<const FeatureMatrix> per_view_tokens);

/// Attention weights of concat(bev_queries, inst_tokens) over the projected
/// BEV cells, (K_bev + N_inst) x (W*H).
FeatureMatrix inst_bev_weights(const FeatureMatrix& bev_queries, const FeatureMatrix& inst_tokens, const BevGrid& bev,
                               const FeatureMatrix& projection);

/// Instruction-aware BEV Q-Former, (K_bev + N_inst) x D. The projected BEV
/// keys are never materialized: logits use (Q P^T) X^T and the output is
/// (A X) P, which is exact in real arithmetic.
FeatureMatrix inst_bev_qformer(const FeatureMatrix& bev_queries, const FeatureMatrix& inst_tokens, const BevGrid& bev,
                               const FeatureMatrix& projection);

/// mv_tokens + CrossAttn(mv_tokens, inst_bev_tokens, inst_bev_tokens).
FeatureMatrix inject(const FeatureMatrix& mv_tokens, const FeatureMatrix& inst_bev_tokens);

}  // namespace attention

namespace attention::reference {

// Serial implementations, one plain loop per formula.

FeatureMatrix matmul(const FeatureMatrix& a, const FeatureMatrix& b);
FeatureMatrix attention_weights(const FeatureMatrix& queries, const FeatureMatrix& keys);
FeatureMatrix cross_attention(const FeatureMatrix& queries, const FeatureMatrix& keys, const FeatureMatrix& values);
FeatureMatrix mv_qformer(const FeatureMatrix& mv_queries, const FeatureMatrix& mv_tokens);
/// Materializes the projected (W*H) x D keys.
FeatureMatrix inst_bev_qformer(const FeatureMatrix& bev_queries, const FeatureMatrix& inst_tokens, const BevGrid& bev,
                               const FeatureMatrix& projection);
FeatureMatrix inject(const FeatureMatrix& mv_tokens, const FeatureMatrix& inst_bev_tokens);

}  // namespace attention::reference

}  // namespace drivesql
