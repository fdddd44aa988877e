#include "drivesql/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "drivesql/errors.hpp"

namespace drivesql {

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ArgumentError("feature matrix data has " + std::to_string(data_.size()) + " entries, expected " +
                            std::to_string(rows * cols));
    }
}

bool FeatureMatrix::finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

FeatureMatrix FeatureMatrix::transposed() const {
    FeatureMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    }
    return t;
}

FeatureMatrix vconcat(const FeatureMatrix& top, const FeatureMatrix& bottom) {
    const FeatureMatrix parts[] = {top, bottom};
    return vconcat(parts);
}

FeatureMatrix vconcat(std::span<const FeatureMatrix> parts) {
    if (parts.empty()) return {};
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ArgumentError("vconcat: column counts differ");
        rows += p.rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
    return {rows, cols, std::move(data)};
}

FeatureMatrix BevGrid::flatten() const {
    if (width == 0 || height == 0) throw ArgumentError("bev grid needs W, H >= 1");
    if (data.size() != width * height * dim) throw ArgumentError("bev grid data size does not match W*H*D");
    return {width * height, dim, data};
}

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw ArgumentError(what);
}

void check_attention_shapes(const FeatureMatrix& q, const FeatureMatrix& k, const FeatureMatrix& v) {
    require(q.cols() == k.cols(), "cross_attention: query and key dimensions differ");
    require(k.rows() == v.rows(), "cross_attention: key and value counts differ");
    require(k.rows() >= 1, "cross_attention: needs at least one key");
    require(q.cols() >= 1, "cross_attention: feature dimension must be >= 1");
}

// One softmax row in place: max subtraction, exponentiate, normalize.
void softmax_row(std::span<double> row) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : row) v /= sum;
}

// Weights of one query row over all keys, scaled by `scale`.
void weights_row(std::span<const double> q, const FeatureMatrix& keys, double scale, std::span<double> out) {
    for (std::size_t j = 0; j < keys.rows(); ++j) {
        const auto k = keys.row(j);
        double s = 0.0;
        for (std::size_t c = 0; c < q.size(); ++c) s += q[c] * k[c];
        out[j] = s * scale;
    }
    softmax_row(out);
}

void weighted_sum(std::span<const double> w, const FeatureMatrix& values, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t j = 0; j < values.rows(); ++j) {
        const auto v = values.row(j);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += w[j] * v[c];
    }
}

}  // namespace

namespace attention {

FeatureMatrix matmul(const FeatureMatrix& a, const FeatureMatrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    FeatureMatrix out(a.rows(), b.cols());
    const auto n = static_cast<long>(a.rows());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        auto o = out.row(i);
        const auto ar = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double s = ar[k];
            const auto br = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) o[j] += s * br[j];
        }
    }
    return out;
}

FeatureMatrix attention_weights(const FeatureMatrix& queries, const FeatureMatrix& keys) {
    require(queries.cols() == keys.cols(), "attention_weights: query and key dimensions differ");
    require(keys.rows() >= 1, "attention_weights: needs at least one key");
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    FeatureMatrix w(queries.rows(), keys.rows());
    const auto n = static_cast<long>(queries.rows());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) weights_row(queries.row(i), keys, scale, w.row(i));
    return w;
}

FeatureMatrix cross_attention(const FeatureMatrix& queries, const FeatureMatrix& keys, const FeatureMatrix& values) {
    check_attention_shapes(queries, keys, values);
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    FeatureMatrix out(queries.rows(), values.cols());
    const auto n = static_cast<long>(queries.rows());
#pragma omp parallel
    {
        std::vector<double> w(keys.rows());
#pragma omp for schedule(static)
        for (long i = 0; i < n; ++i) {
            weights_row(queries.row(i), keys, scale, w);
            weighted_sum(w, values, out.row(i));
        }
    }
    return out;
}

FeatureMatrix mv_qformer(const FeatureMatrix& mv_queries, const FeatureMatrix& mv_tokens) {
    return cross_attention(mv_queries, mv_tokens, mv_tokens);
}

FeatureMatrix mv_qformer(const FeatureMatrix& mv_queries, std::span<const FeatureMatrix> per_view_tokens) {
    return mv_qformer(mv_queries, vconcat(per_view_tokens));
}

namespace {

struct BevOperands {
    FeatureMatrix cells;            // (W*H) x D_bev
    FeatureMatrix queries_reduced;  // (K+N) x D_bev, = concat(Q, L) P^T
    double scale = 1.0;
};

BevOperands bev_operands(const FeatureMatrix& bev_queries, const FeatureMatrix& inst_tokens, const BevGrid& bev,
                         const FeatureMatrix& projection) {
    require(bev_queries.cols() == inst_tokens.cols(), "inst_bev_qformer: query and instruction dimensions differ");
    require(projection.rows() == bev.dim, "inst_bev_qformer: projection rows must equal D_bev");
    require(projection.cols() == bev_queries.cols(), "inst_bev_qformer: projection columns must equal D");
    BevOperands ops;
    ops.cells = bev.flatten();
    ops.queries_reduced = matmul(vconcat(bev_queries, inst_tokens), projection.transposed());
    ops.scale = 1.0 / std::sqrt(static_cast<double>(projection.cols()));
    return ops;
}

}  // namespace

FeatureMatrix inst_bev_weights(const FeatureMatrix& bev_queries, const FeatureMatrix& inst_tokens, const BevGrid& bev,
                               const FeatureMatrix& projection) {
    const BevOperands ops = bev_operands(bev_queries, inst_tokens, bev, projection);
    FeatureMatrix w(ops.queries_reduced.rows(), ops.cells.rows());
    const auto n = static_cast<long>(w.rows());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) weights_row(ops.queries_reduced.row(i), ops.cells, ops.scale, w.row(i));
    return w;
}

FeatureMatrix inst_bev_qformer(const FeatureMatrix& bev_queries, const FeatureMatrix& inst_tokens, const BevGrid& bev,
                               const FeatureMatrix& projection) {
    const BevOperands ops = bev_operands(bev_queries, inst_tokens, bev, projection);
    FeatureMatrix pooled(ops.queries_reduced.rows(), ops.cells.cols());
    const auto n = static_cast<long>(pooled.rows());
#pragma omp parallel
    {
        std::vector<double> w(ops.cells.rows());
#pragma omp for schedule(static)
        for (long i = 0; i < n; ++i) {
            weights_row(ops.queries_reduced.row(i), ops.cells, ops.scale, w);
            weighted_sum(w, ops.cells, pooled.row(i));
        }
    }
    return matmul(pooled, projection);
}

FeatureMatrix inject(const FeatureMatrix& mv_tokens, const FeatureMatrix& inst_bev_tokens) {
    require(mv_tokens.cols() == inst_bev_tokens.cols(), "inject: feature dimensions differ");
    FeatureMatrix out = cross_attention(mv_tokens, inst_bev_tokens, inst_bev_tokens);
    auto& d = out.data();
    const auto& base = mv_tokens.data();
    const auto n = static_cast<long>(d.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) d[i] = base[i] + d[i];
    return out;
}

}  // namespace attention

namespace attention::reference {

FeatureMatrix matmul(const FeatureMatrix& a, const FeatureMatrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    FeatureMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            out(i, j) = s;
        }
    }
    return out;
}

FeatureMatrix attention_weights(const FeatureMatrix& queries, const FeatureMatrix& keys) {
    require(queries.cols() == keys.cols(), "attention_weights: query and key dimensions differ");
    require(keys.rows() >= 1, "attention_weights: needs at least one key");
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    FeatureMatrix w(queries.rows(), keys.rows());
    for (std::size_t i = 0; i < queries.rows(); ++i) weights_row(queries.row(i), keys, scale, w.row(i));
    return w;
}

FeatureMatrix cross_attention(const FeatureMatrix& queries, const FeatureMatrix& keys, const FeatureMatrix& values) {
    check_attention_shapes(queries, keys, values);
    return matmul(attention_weights(queries, keys), values);
}

FeatureMatrix mv_qformer(const FeatureMatrix& mv_queries, const FeatureMatrix& mv_tokens) {
    return cross_attention(mv_queries, mv_tokens, mv_tokens);
}

FeatureMatrix inst_bev_qformer(const FeatureMatrix& bev_queries, const FeatureMatrix& inst_tokens, const BevGrid& bev,
                               const FeatureMatrix& projection) {
    require(projection.rows() == bev.dim, "inst_bev_qformer: projection rows must equal D_bev");
    const FeatureMatrix keys = matmul(bev.flatten(), projection);
    return cross_attention(vconcat(bev_queries, inst_tokens), keys, keys);
}

FeatureMatrix inject(const FeatureMatrix& mv_tokens, const FeatureMatrix& inst_bev_tokens) {
    require(mv_tokens.cols() == inst_bev_tokens.cols(), "inject: feature dimensions differ");
    FeatureMatrix out = cross_attention(mv_tokens, inst_bev_tokens, inst_bev_tokens);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) += mv_tokens(i, c);
    }
    return out;
}

}  // namespace attention::reference

}  // namespace drivesql
