#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "texgen/common.hpp"

// Minimal reverse-mode autodiff over dense row-major matrices in double
// precision. Rows index texels or points, columns index channels. Every op
// is single-threaded and has a fixed summation order, so forward and backward
// passes are bitwise reproducible.
namespace texgen::ag {

struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    size_t size() const { return static_cast<size_t>(rows) * cols; }
    void ensure_grad() {
        if (grad.size() != size()) grad.assign(size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor constant(int rows, int cols, std::vector<double> values);
    static Tensor zeros(int rows, int cols);
    static Tensor parameter(int rows, int cols, std::vector<double> values);

    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    size_t size() const { return node_->size(); }
    bool defined() const { return static_cast<bool>(node_); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& value() const { return node_->value; }
    std::vector<double>& mutable_value() { return node_->value; }
    const std::vector<double>& grad() const { return node_->grad; }
    std::vector<double>& mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    double item() const { return node_->value.at(0); }
    double at(int r, int c) const { return node_->value[static_cast<size_t>(r) * cols() + c]; }

    void zero_grad() { node_->grad.assign(node_->size(), 0.0); }
    /// Drops any recorded history; the result is a constant with the same value.
    Tensor detach() const { return constant(rows(), cols(), value()); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Runs reverse accumulation from a 1x1 tensor. Gradients are added into
/// every reachable node that requires grad.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Index structures shared by gather-style ops. They are immutable once built
// and typically cached per geometry.

/// Sparse linear map: out[r] = sum_k weight * in[src]. CSR by output row,
/// with a transposed copy for the backward pass.
class SparseMap {
public:
    SparseMap(int out_rows, int in_rows, std::vector<int> row_ptr, std::vector<int> src, std::vector<double> weight);

    int out_rows() const { return out_rows_; }
    int in_rows() const { return in_rows_; }
    const std::vector<int>& row_ptr() const { return row_ptr_; }
    const std::vector<int>& src() const { return src_; }
    const std::vector<double>& weight() const { return weight_; }
    const std::vector<int>& t_row_ptr() const { return t_row_ptr_; }
    const std::vector<int>& t_dst() const { return t_dst_; }
    const std::vector<double>& t_weight() const { return t_weight_; }

    /// Builder from (out_row, in_row, weight) triplets; order within a row is
    /// preserved.
    static std::shared_ptr<const SparseMap> from_triplets(int out_rows, int in_rows,
                                                          const std::vector<std::tuple<int, int, double>>& t);

private:
    int out_rows_, in_rows_;
    std::vector<int> row_ptr_, src_;
    std::vector<double> weight_;
    std::vector<int> t_row_ptr_, t_dst_;
    std::vector<double> t_weight_;
};

/// Fixed-fanout neighbourhood (im2col): out[r, k*C + c] = in[idx[r*K + k], c]
/// or 0 where idx is -1.
class NeighborTable {
public:
    NeighborTable(int out_rows, int in_rows, int fanout, std::vector<int> idx);

    int out_rows() const { return out_rows_; }
    int in_rows() const { return in_rows_; }
    int fanout() const { return fanout_; }
    const std::vector<int>& idx() const { return idx_; }
    const std::vector<int>& t_row_ptr() const { return t_row_ptr_; }
    const std::vector<int>& t_slot() const { return t_slot_; }  // out_row * K + k

private:
    int out_rows_, in_rows_, fanout_;
    std::vector<int> idx_;
    std::vector<int> t_row_ptr_, t_slot_;
};

/// 3x3 neighbourhood on an H x W grid with zero padding; stride 2 samples
/// input (2i + dy, 2j + dx) for output (i, j).
std::shared_ptr<const NeighborTable> grid_neighbors(int height, int width, int stride);

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b);
/// x * w + b (b is 1 x out, may be undefined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a + r where r is 1 x C broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& r);
/// a * r where r is 1 x C broadcast over rows.
Tensor mul_row(const Tensor& a, const Tensor& r);
/// (1 + gamma) * f + beta, gamma and beta 1 x C.
Tensor modulate(const Tensor& f, const Tensor& gamma, const Tensor& beta);
Tensor silu(const Tensor& a);
Tensor abs(const Tensor& a);
/// Multiplies row r by mask[r].
Tensor mask_rows(const Tensor& a, std::shared_ptr<const std::vector<double>> mask);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, int start, int count);
Tensor gather(const Tensor& x, std::shared_ptr<const SparseMap> map);
Tensor im2col(const Tensor& x, std::shared_ptr<const NeighborTable> table);

/// Group normalization with statistics over rows where mask > 0.5 (all rows
/// when mask is null). Rows outside the mask are written as zero. No affine.
Tensor group_norm(const Tensor& x, int groups, std::shared_ptr<const std::vector<double>> mask, double eps = 1e-5);
struct GroupNormStats {
    std::vector<double> mean, inv_std;  // per group
};
/// The statistics group_norm would use for x.
GroupNormStats group_norm_stats(const Tensor& x, int groups, const std::shared_ptr<const std::vector<double>>& mask,
                                double eps = 1e-5);
/// Group normalization with externally fixed statistics (no gradient through
/// them). Used to probe spatial receptive fields.
Tensor group_norm_fixed(const Tensor& x, const GroupNormStats& stats, std::shared_ptr<const std::vector<double>> mask);
/// Per-row normalization over channels, no affine.
Tensor layer_norm(const Tensor& x, double eps = 1e-6);

using Patches = std::vector<std::vector<int>>;
/// Multi-head softmax attention restricted to each patch of row indices.
Tensor patch_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::shared_ptr<const Patches> patches,
                       int heads);
/// Attention probabilities for one head of one patch (rows = queries).
std::vector<double> patch_attention_weights(const Tensor& q, const Tensor& k, const std::vector<int>& patch, int heads,
                                            int head);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// sum_r w[r] * sum_c a[r, c]
Tensor weighted_row_sum(const Tensor& a, std::shared_ptr<const std::vector<double>> w);

// ---------------------------------------------------------------------------
// Parameters

enum class Init { zeros, ones, normal, kaiming };

/// Ordered, named parameter collection. In shape-only mode no storage is
/// allocated, which lets large configurations be summarized cheaply.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0, bool shape_only = false) : rng_(seed), shape_only_(shape_only) {}

    /// fan_in is used by kaiming init (std = 1/sqrt(fan_in)); std by normal.
    Tensor create(const std::string& name, int rows, int cols, Init init, double scale = 1.0);

    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
    size_t parameter_count() const { return count_; }
    bool shape_only() const { return shape_only_; }

    Tensor find(const std::string& name) const;
    void zero_grad();

private:
    Rng rng_;
    bool shape_only_;
    size_t count_ = 0;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::map<std::string, size_t> index_;
};

}  // namespace texgen::ag
