#include "texgen/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace texgen::ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

CMapMat cmap(const Node& n) { return CMapMat(n.value.data(), n.rows, n.cols); }
MapMat gmap(Node& n) {
    n.ensure_grad();
    return MapMat(n.grad.data(), n.rows, n.cols);
}

bool any_requires(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

Tensor result(int rows, int cols, std::vector<double> value, std::initializer_list<const Tensor*> parents,
              std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(value);
    if (any_requires(parents)) {
        n->requires_grad = true;
        for (const Tensor* p : parents) n->parents.push_back(p->defined() ? p->node() : nullptr);
        n->backward_fn = std::move(fn);
    }
    return Tensor(std::move(n));
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw PreconditionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
}

void check_row(const Tensor& a, const Tensor& r, const char* op) {
    if (r.rows() != 1 || r.cols() != a.cols())
        throw PreconditionError(std::string(op) + ": expected 1x" + std::to_string(a.cols()) + " row vector");
}

Node* parent(Node& n, size_t i) {
    Node* p = n.parents[i].get();
    return (p && p->requires_grad) ? p : nullptr;
}

}  // namespace

Tensor Tensor::constant(int rows, int cols, std::vector<double> values) {
    if (values.size() != static_cast<size_t>(rows) * cols) throw PreconditionError("Tensor::constant: size mismatch");
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(int rows, int cols) {
    return constant(rows, cols, std::vector<double>(static_cast<size_t>(rows) * cols, 0.0));
}

Tensor Tensor::parameter(int rows, int cols, std::vector<double> values) {
    Tensor t = constant(rows, cols, std::move(values));
    t.node()->requires_grad = true;
    return t;
}

void backward(const Tensor& loss) {
    if (loss.size() != 1) throw PreconditionError("backward: loss must be 1x1");
    if (!loss.requires_grad()) return;
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p && p->requires_grad && p->backward_fn && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }
    Node& root = *loss.node();
    root.ensure_grad();
    root.grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------

SparseMap::SparseMap(int out_rows, int in_rows, std::vector<int> row_ptr, std::vector<int> src,
                     std::vector<double> weight)
    : out_rows_(out_rows), in_rows_(in_rows), row_ptr_(std::move(row_ptr)), src_(std::move(src)),
      weight_(std::move(weight)) {
    t_row_ptr_.assign(in_rows_ + 1, 0);
    for (int s : src_) t_row_ptr_[s + 1]++;
    for (int i = 0; i < in_rows_; ++i) t_row_ptr_[i + 1] += t_row_ptr_[i];
    t_dst_.resize(src_.size());
    t_weight_.resize(src_.size());
    std::vector<int> fill(t_row_ptr_.begin(), t_row_ptr_.end() - 1);
    for (int r = 0; r < out_rows_; ++r) {
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            int pos = fill[src_[k]]++;
            t_dst_[pos] = r;
            t_weight_[pos] = weight_[k];
        }
    }
}

std::shared_ptr<const SparseMap> SparseMap::from_triplets(int out_rows, int in_rows,
                                                          const std::vector<std::tuple<int, int, double>>& t) {
    std::vector<int> row_ptr(out_rows + 1, 0);
    for (const auto& [r, s, w] : t) {
        if (r < 0 || r >= out_rows || s < 0 || s >= in_rows) throw PreconditionError("SparseMap: index out of range");
        row_ptr[r + 1]++;
    }
    for (int i = 0; i < out_rows; ++i) row_ptr[i + 1] += row_ptr[i];
    std::vector<int> src(t.size());
    std::vector<double> weight(t.size());
    std::vector<int> fill(row_ptr.begin(), row_ptr.end() - 1);
    for (const auto& [r, s, w] : t) {
        int pos = fill[r]++;
        src[pos] = s;
        weight[pos] = w;
    }
    return std::make_shared<SparseMap>(out_rows, in_rows, std::move(row_ptr), std::move(src), std::move(weight));
}

NeighborTable::NeighborTable(int out_rows, int in_rows, int fanout, std::vector<int> idx)
    : out_rows_(out_rows), in_rows_(in_rows), fanout_(fanout), idx_(std::move(idx)) {
    if (idx_.size() != static_cast<size_t>(out_rows_) * fanout_) throw PreconditionError("NeighborTable: size mismatch");
    t_row_ptr_.assign(in_rows_ + 1, 0);
    for (int i : idx_)
        if (i >= 0) t_row_ptr_[i + 1]++;
    for (int i = 0; i < in_rows_; ++i) t_row_ptr_[i + 1] += t_row_ptr_[i];
    t_slot_.resize(t_row_ptr_.back());
    std::vector<int> fill(t_row_ptr_.begin(), t_row_ptr_.end() - 1);
    for (size_t s = 0; s < idx_.size(); ++s) {
        if (idx_[s] < 0) continue;
        t_slot_[fill[idx_[s]]++] = static_cast<int>(s);
    }
}

std::shared_ptr<const NeighborTable> grid_neighbors(int height, int width, int stride) {
    const int oh = height / stride, ow = width / stride;
    std::vector<int> idx(static_cast<size_t>(oh) * ow * 9, -1);
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            int k = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx, ++k) {
                    int y = i * stride + dy, x = j * stride + dx;
                    if (y < 0 || x < 0 || y >= height || x >= width) continue;
                    idx[(static_cast<size_t>(i) * ow + j) * 9 + k] = y * width + x;
                }
            }
        }
    }
    return std::make_shared<NeighborTable>(oh * ow, height * width, 9, std::move(idx));
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) { return linear(a, b, Tensor()); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.cols() != w.rows())
        throw PreconditionError("linear: inner dimension mismatch " + std::to_string(x.cols()) + " vs " +
                                std::to_string(w.rows()));
    if (b.defined() && (b.rows() != 1 || b.cols() != w.cols())) throw PreconditionError("linear: bias shape");
    // Operands are copied into Eigen-owned (aligned) storage: with wide SIMD the
    // kernels otherwise peel a heap-address-dependent prefix and the rounding
    // varies from run to run.
    RowMat yv = RowMat(cmap(*x.node())) * RowMat(cmap(*w.node()));
    if (b.defined()) yv.rowwise() += CMapMat(b.value().data(), 1, b.cols()).row(0);
    std::vector<double> out(yv.data(), yv.data() + yv.size());
    return result(x.rows(), w.cols(), std::move(out), {&x, &w, &b}, [](Node& n) {
        const RowMat g = CMapMat(n.grad.data(), n.rows, n.cols);
        Node* xn = n.parents[0].get();
        Node* wn = n.parents[1].get();
        if (xn->requires_grad) {
            const RowMat d = g * RowMat(cmap(*wn)).transpose();
            gmap(*xn) += d;
        }
        if (wn->requires_grad) {
            const RowMat d = RowMat(cmap(*xn)).transpose() * g;
            gmap(*wn) += d;
        }
        if (Node* bn = parent(n, 2)) {
            const RowMat d = g.colwise().sum();
            gmap(*bn) += d;
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same(a, b, "add");
    std::vector<double> out(a.value());
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return result(a.rows(), a.cols(), std::move(out), {&a, &b}, [](Node& n) {
        for (size_t p = 0; p < 2; ++p) {
            if (Node* q = parent(n, p)) {
                q->ensure_grad();
                for (size_t i = 0; i < n.grad.size(); ++i) q->grad[i] += n.grad[i];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same(a, b, "sub");
    std::vector<double> out(a.value());
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return result(a.rows(), a.cols(), std::move(out), {&a, &b}, [](Node& n) {
        if (Node* q = parent(n, 0)) {
            q->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) q->grad[i] += n.grad[i];
        }
        if (Node* q = parent(n, 1)) {
            q->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) q->grad[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same(a, b, "mul");
    std::vector<double> out(a.value());
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return result(a.rows(), a.cols(), std::move(out), {&a, &b}, [](Node& n) {
        Node* an = n.parents[0].get();
        Node* bn = n.parents[1].get();
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.value());
    for (double& v : out) v *= s;
    return result(a.rows(), a.cols(), std::move(out), {&a}, [s](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) q->grad[i] += s * n.grad[i];
    });
}

Tensor add_row(const Tensor& a, const Tensor& r) {
    check_row(a, r, "add_row");
    std::vector<double> out(a.value());
    const size_t C = a.cols();
    for (size_t i = 0; i < out.size(); ++i) out[i] += r.value()[i % C];
    return result(a.rows(), a.cols(), std::move(out), {&a, &r}, [C](Node& n) {
        if (Node* q = parent(n, 0)) {
            q->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) q->grad[i] += n.grad[i];
        }
        if (Node* q = parent(n, 1)) {
            q->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) q->grad[i % C] += n.grad[i];
        }
    });
}

Tensor mul_row(const Tensor& a, const Tensor& r) {
    check_row(a, r, "mul_row");
    std::vector<double> out(a.value());
    const size_t C = a.cols();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= r.value()[i % C];
    return result(a.rows(), a.cols(), std::move(out), {&a, &r}, [C](Node& n) {
        Node* an = n.parents[0].get();
        Node* rn = n.parents[1].get();
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * rn->value[i % C];
        }
        if (rn->requires_grad) {
            rn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) rn->grad[i % C] += n.grad[i] * an->value[i];
        }
    });
}

Tensor modulate(const Tensor& f, const Tensor& gamma, const Tensor& beta) {
    check_row(f, gamma, "modulate");
    check_row(f, beta, "modulate");
    std::vector<double> out(f.value());
    const size_t C = f.cols();
    for (size_t i = 0; i < out.size(); ++i) out[i] = (1.0 + gamma.value()[i % C]) * out[i] + beta.value()[i % C];
    return result(f.rows(), f.cols(), std::move(out), {&f, &gamma, &beta}, [C](Node& n) {
        Node* fn = n.parents[0].get();
        Node* gn = n.parents[1].get();
        if (fn->requires_grad) {
            fn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) fn->grad[i] += n.grad[i] * (1.0 + gn->value[i % C]);
        }
        if (gn->requires_grad) {
            gn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) gn->grad[i % C] += n.grad[i] * fn->value[i];
        }
        if (Node* bn = parent(n, 2)) {
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i % C] += n.grad[i];
        }
    });
}

Tensor silu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) {
        double x = a.value()[i];
        out[i] = x / (1.0 + std::exp(-x));
    }
    return result(a.rows(), a.cols(), std::move(out), {&a}, [](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double x = q->value[i];
            double s = 1.0 / (1.0 + std::exp(-x));
            q->grad[i] += n.grad[i] * (s * (1.0 + x * (1.0 - s)));
        }
    });
}

Tensor abs(const Tensor& a) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a.value()[i]);
    return result(a.rows(), a.cols(), std::move(out), {&a}, [](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double x = q->value[i];
            q->grad[i] += n.grad[i] * (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0));
        }
    });
}

Tensor mask_rows(const Tensor& a, std::shared_ptr<const std::vector<double>> mask) {
    if (!mask || mask->size() != static_cast<size_t>(a.rows())) throw PreconditionError("mask_rows: mask size");
    std::vector<double> out(a.value());
    const size_t C = a.cols();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i / C];
    return result(a.rows(), a.cols(), std::move(out), {&a}, [mask, C](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) q->grad[i] += n.grad[i] * (*mask)[i / C];
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw PreconditionError("concat_cols: row mismatch");
    const int ca = a.cols(), cb = b.cols(), C = ca + cb;
    std::vector<double> out(static_cast<size_t>(a.rows()) * C);
    for (int r = 0; r < a.rows(); ++r) {
        std::copy_n(&a.value()[static_cast<size_t>(r) * ca], ca, &out[static_cast<size_t>(r) * C]);
        std::copy_n(&b.value()[static_cast<size_t>(r) * cb], cb, &out[static_cast<size_t>(r) * C + ca]);
    }
    return result(a.rows(), C, std::move(out), {&a, &b}, [ca, cb, C](Node& n) {
        if (Node* q = parent(n, 0)) {
            q->ensure_grad();
            for (int r = 0; r < n.rows; ++r)
                for (int c = 0; c < ca; ++c) q->grad[static_cast<size_t>(r) * ca + c] += n.grad[static_cast<size_t>(r) * C + c];
        }
        if (Node* q = parent(n, 1)) {
            q->ensure_grad();
            for (int r = 0; r < n.rows; ++r)
                for (int c = 0; c < cb; ++c)
                    q->grad[static_cast<size_t>(r) * cb + c] += n.grad[static_cast<size_t>(r) * C + ca + c];
        }
    });
}

Tensor slice_cols(const Tensor& a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw PreconditionError("slice_cols: out of range");
    const int C = a.cols();
    std::vector<double> out(static_cast<size_t>(a.rows()) * count);
    for (int r = 0; r < a.rows(); ++r)
        std::copy_n(&a.value()[static_cast<size_t>(r) * C + start], count, &out[static_cast<size_t>(r) * count]);
    return result(a.rows(), count, std::move(out), {&a}, [start, count, C](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        for (int r = 0; r < n.rows; ++r)
            for (int c = 0; c < count; ++c)
                q->grad[static_cast<size_t>(r) * C + start + c] += n.grad[static_cast<size_t>(r) * count + c];
    });
}

Tensor gather(const Tensor& x, std::shared_ptr<const SparseMap> map) {
    if (map->in_rows() != x.rows()) throw PreconditionError("gather: input rows do not match map");
    const int C = x.cols();
    std::vector<double> out(static_cast<size_t>(map->out_rows()) * C, 0.0);
    const auto& rp = map->row_ptr();
    const auto& src = map->src();
    const auto& w = map->weight();
    const double* xv = x.value().data();
    for (int r = 0; r < map->out_rows(); ++r) {
        double* dst = &out[static_cast<size_t>(r) * C];
        for (int k = rp[r]; k < rp[r + 1]; ++k) {
            const double* s = xv + static_cast<size_t>(src[k]) * C;
            const double wk = w[k];
            for (int c = 0; c < C; ++c) dst[c] += wk * s[c];
        }
    }
    return result(map->out_rows(), C, std::move(out), {&x}, [map, C](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        const auto& trp = map->t_row_ptr();
        const auto& dst = map->t_dst();
        const auto& tw = map->t_weight();
        for (int i = 0; i < map->in_rows(); ++i) {
            double* g = &q->grad[static_cast<size_t>(i) * C];
            for (int k = trp[i]; k < trp[i + 1]; ++k) {
                const double* s = &n.grad[static_cast<size_t>(dst[k]) * C];
                const double wk = tw[k];
                for (int c = 0; c < C; ++c) g[c] += wk * s[c];
            }
        }
    });
}

Tensor im2col(const Tensor& x, std::shared_ptr<const NeighborTable> table) {
    if (table->in_rows() != x.rows()) throw PreconditionError("im2col: input rows do not match table");
    const int C = x.cols(), K = table->fanout(), OC = C * K;
    std::vector<double> out(static_cast<size_t>(table->out_rows()) * OC, 0.0);
    const auto& idx = table->idx();
    for (int r = 0; r < table->out_rows(); ++r) {
        for (int k = 0; k < K; ++k) {
            int s = idx[static_cast<size_t>(r) * K + k];
            if (s < 0) continue;
            std::copy_n(&x.value()[static_cast<size_t>(s) * C], C, &out[static_cast<size_t>(r) * OC + k * C]);
        }
    }
    return result(table->out_rows(), OC, std::move(out), {&x}, [table, C, K](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        const auto& trp = table->t_row_ptr();
        const auto& slot = table->t_slot();
        for (int i = 0; i < table->in_rows(); ++i) {
            double* g = &q->grad[static_cast<size_t>(i) * C];
            for (int j = trp[i]; j < trp[i + 1]; ++j) {
                int sl = slot[j];
                const double* s = &n.grad[static_cast<size_t>(sl / K) * C * K + static_cast<size_t>(sl % K) * C];
                for (int c = 0; c < C; ++c) g[c] += s[c];
            }
        }
    });
}

Tensor group_norm(const Tensor& x, int groups, std::shared_ptr<const std::vector<double>> mask, double eps) {
    const int R = x.rows(), C = x.cols();
    if (groups < 1 || C % groups != 0) throw PreconditionError("group_norm: channels not divisible by groups");
    if (mask && mask->size() != static_cast<size_t>(R)) throw PreconditionError("group_norm: mask size");
    const int gc = C / groups;
    std::vector<double> out(x.size(), 0.0);
    auto inv_std = std::make_shared<std::vector<double>>(groups, 0.0);
    auto active = [&](int r) { return !mask || (*mask)[r] > 0.5; };
    int n_rows = 0;
    for (int r = 0; r < R; ++r) n_rows += active(r) ? 1 : 0;
    const double count = static_cast<double>(n_rows) * gc;
    const double* xv = x.value().data();
    for (int g = 0; g < groups && n_rows > 0; ++g) {
        double s = 0;
        for (int r = 0; r < R; ++r) {
            if (!active(r)) continue;
            for (int c = g * gc; c < (g + 1) * gc; ++c) s += xv[static_cast<size_t>(r) * C + c];
        }
        const double mu = s / count;
        double v = 0;
        for (int r = 0; r < R; ++r) {
            if (!active(r)) continue;
            for (int c = g * gc; c < (g + 1) * gc; ++c) {
                double d = xv[static_cast<size_t>(r) * C + c] - mu;
                v += d * d;
            }
        }
        const double is = 1.0 / std::sqrt(v / count + eps);
        (*inv_std)[g] = is;
        for (int r = 0; r < R; ++r) {
            if (!active(r)) continue;
            for (int c = g * gc; c < (g + 1) * gc; ++c) {
                size_t i = static_cast<size_t>(r) * C + c;
                out[i] = (xv[i] - mu) * is;
            }
        }
    }
    return result(R, C, std::move(out), {&x}, [mask, inv_std, groups, gc, n_rows](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        const int R = n.rows, C = n.cols;
        if (n_rows == 0) return;
        const double count = static_cast<double>(n_rows) * gc;
        auto active = [&](int r) { return !mask || (*mask)[r] > 0.5; };
        for (int g = 0; g < groups; ++g) {
            double mg = 0, mgx = 0;
            for (int r = 0; r < R; ++r) {
                if (!active(r)) continue;
                for (int c = g * gc; c < (g + 1) * gc; ++c) {
                    size_t i = static_cast<size_t>(r) * C + c;
                    mg += n.grad[i];
                    mgx += n.grad[i] * n.value[i];
                }
            }
            mg /= count;
            mgx /= count;
            const double is = (*inv_std)[g];
            for (int r = 0; r < R; ++r) {
                if (!active(r)) continue;
                for (int c = g * gc; c < (g + 1) * gc; ++c) {
                    size_t i = static_cast<size_t>(r) * C + c;
                    q->grad[i] += is * (n.grad[i] - mg - n.value[i] * mgx);
                }
            }
        }
    });
}

GroupNormStats group_norm_stats(const Tensor& x, int groups, const std::shared_ptr<const std::vector<double>>& mask,
                                double eps) {
    const int R = x.rows(), C = x.cols();
    if (groups < 1 || C % groups != 0) throw PreconditionError("group_norm: channels not divisible by groups");
    const int gc = C / groups;
    GroupNormStats st{std::vector<double>(groups, 0.0), std::vector<double>(groups, 0.0)};
    int n_rows = 0;
    for (int r = 0; r < R; ++r) n_rows += (!mask || (*mask)[r] > 0.5) ? 1 : 0;
    if (n_rows == 0) return st;
    const double count = static_cast<double>(n_rows) * gc;
    for (int g = 0; g < groups; ++g) {
        double s = 0, v = 0;
        for (int r = 0; r < R; ++r)
            if (!mask || (*mask)[r] > 0.5)
                for (int c = g * gc; c < (g + 1) * gc; ++c) s += x.value()[static_cast<size_t>(r) * C + c];
        const double mu = s / count;
        for (int r = 0; r < R; ++r)
            if (!mask || (*mask)[r] > 0.5)
                for (int c = g * gc; c < (g + 1) * gc; ++c) {
                    double d = x.value()[static_cast<size_t>(r) * C + c] - mu;
                    v += d * d;
                }
        st.mean[g] = mu;
        st.inv_std[g] = 1.0 / std::sqrt(v / count + eps);
    }
    return st;
}

Tensor group_norm_fixed(const Tensor& x, const GroupNormStats& stats, std::shared_ptr<const std::vector<double>> mask) {
    const int R = x.rows(), C = x.cols();
    const int groups = static_cast<int>(stats.mean.size());
    if (groups < 1 || C % groups != 0) throw PreconditionError("group_norm: stats do not match channels");
    const int gc = C / groups;
    std::vector<double> scale_c(C), out(x.size(), 0.0);
    for (int c = 0; c < C; ++c) scale_c[c] = stats.inv_std[c / gc];
    for (int r = 0; r < R; ++r) {
        if (mask && (*mask)[r] <= 0.5) continue;
        for (int c = 0; c < C; ++c) {
            size_t i = static_cast<size_t>(r) * C + c;
            out[i] = (x.value()[i] - stats.mean[c / gc]) * scale_c[c];
        }
    }
    return result(R, C, std::move(out), {&x}, [mask, scale_c](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        const int C = n.cols;
        for (int r = 0; r < n.rows; ++r) {
            if (mask && (*mask)[r] <= 0.5) continue;
            for (int c = 0; c < C; ++c) {
                size_t i = static_cast<size_t>(r) * C + c;
                q->grad[i] += n.grad[i] * scale_c[c];
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, double eps) {
    const int R = x.rows(), C = x.cols();
    std::vector<double> out(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(R);
    for (int r = 0; r < R; ++r) {
        const double* xr = &x.value()[static_cast<size_t>(r) * C];
        double mu = 0;
        for (int c = 0; c < C; ++c) mu += xr[c];
        mu /= C;
        double v = 0;
        for (int c = 0; c < C; ++c) v += (xr[c] - mu) * (xr[c] - mu);
        double is = 1.0 / std::sqrt(v / C + eps);
        (*inv_std)[r] = is;
        for (int c = 0; c < C; ++c) out[static_cast<size_t>(r) * C + c] = (xr[c] - mu) * is;
    }
    return result(R, C, std::move(out), {&x}, [inv_std](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        const int C = n.cols;
        for (int r = 0; r < n.rows; ++r) {
            const size_t base = static_cast<size_t>(r) * C;
            double mg = 0, mgx = 0;
            for (int c = 0; c < C; ++c) {
                mg += n.grad[base + c];
                mgx += n.grad[base + c] * n.value[base + c];
            }
            mg /= C;
            mgx /= C;
            for (int c = 0; c < C; ++c)
                q->grad[base + c] += (*inv_std)[r] * (n.grad[base + c] - mg - n.value[base + c] * mgx);
        }
    });
}

namespace {

// Gathers rows of `src` (R x C) for columns [c0, c0 + d) into a dense block.
RowMat gather_block(const std::vector<double>& src, int C, const std::vector<int>& rows, int c0, int d) {
    RowMat m(rows.size(), d);
    for (size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), j) = src[static_cast<size_t>(rows[i]) * C + c0 + j];
    return m;
}

void softmax_rows(RowMat& s) {
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        double mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
    }
}

}  // namespace

std::vector<double> patch_attention_weights(const Tensor& q, const Tensor& k, const std::vector<int>& patch, int heads,
                                            int head) {
    const int C = q.cols(), d = C / heads;
    RowMat qb = gather_block(q.value(), C, patch, head * d, d);
    RowMat kb = gather_block(k.value(), C, patch, head * d, d);
    RowMat s = (qb * kb.transpose()) / std::sqrt(static_cast<double>(d));
    softmax_rows(s);
    return {s.data(), s.data() + s.size()};
}

Tensor patch_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::shared_ptr<const Patches> patches,
                       int heads) {
    check_same(q, k, "patch_attention");
    check_same(q, v, "patch_attention");
    const int R = q.rows(), C = q.cols();
    if (heads < 1 || C % heads != 0) throw PreconditionError("patch_attention: channels not divisible by heads");
    const int d = C / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> out(static_cast<size_t>(R) * C, 0.0);
    // Probabilities per (patch, head), kept for the backward pass.
    auto probs = std::make_shared<std::vector<RowMat>>();
    probs->reserve(patches->size() * heads);
    for (const auto& patch : *patches) {
        for (int h = 0; h < heads; ++h) {
            RowMat qb = gather_block(q.value(), C, patch, h * d, d);
            RowMat kb = gather_block(k.value(), C, patch, h * d, d);
            RowMat vb = gather_block(v.value(), C, patch, h * d, d);
            RowMat s = (qb * kb.transpose()) * inv_sqrt;
            softmax_rows(s);
            RowMat o = s * vb;
            for (size_t i = 0; i < patch.size(); ++i)
                for (int j = 0; j < d; ++j) out[static_cast<size_t>(patch[i]) * C + h * d + j] = o(static_cast<Eigen::Index>(i), j);
            probs->push_back(std::move(s));
        }
    }
    return result(R, C, std::move(out), {&q, &k, &v}, [patches, probs, heads, d, inv_sqrt](Node& n) {
        Node* qn = n.parents[0].get();
        Node* kn = n.parents[1].get();
        Node* vn = n.parents[2].get();
        const int C = n.cols;
        size_t pi = 0;
        for (const auto& patch : *patches) {
            for (int h = 0; h < heads; ++h, ++pi) {
                const RowMat& p = (*probs)[pi];
                RowMat go = gather_block(n.grad, C, patch, h * d, d);
                RowMat vb = gather_block(vn->value, C, patch, h * d, d);
                auto scatter_add = [&](Node* dst, const RowMat& m) {
                    dst->ensure_grad();
                    for (size_t i = 0; i < patch.size(); ++i)
                        for (int j = 0; j < d; ++j)
                            dst->grad[static_cast<size_t>(patch[i]) * C + h * d + j] += m(static_cast<Eigen::Index>(i), j);
                };
                if (vn->requires_grad) scatter_add(vn, p.transpose() * go);
                if (qn->requires_grad || kn->requires_grad) {
                    RowMat dp = go * vb.transpose();
                    Eigen::VectorXd rs = (dp.array() * p.array()).rowwise().sum();
                    RowMat ds = dp;
                    ds.colwise() -= rs;
                    ds = (ds.array() * p.array()).matrix();
                    ds *= inv_sqrt;
                    if (qn->requires_grad) scatter_add(qn, ds * gather_block(kn->value, C, patch, h * d, d));
                    if (kn->requires_grad) scatter_add(kn, ds.transpose() * gather_block(qn->value, C, patch, h * d, d));
                }
            }
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0;
    for (double v : a.value()) s += v;
    return result(1, 1, {s}, {&a}, [](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        for (double& g : q->grad) g += n.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor weighted_row_sum(const Tensor& a, std::shared_ptr<const std::vector<double>> w) {
    if (!w || w->size() != static_cast<size_t>(a.rows())) throw PreconditionError("weighted_row_sum: weight size");
    const size_t C = a.cols();
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += (*w)[i / C] * a.value()[i];
    return result(1, 1, {s}, {&a}, [w, C](Node& n) {
        Node* q = n.parents[0].get();
        q->ensure_grad();
        for (size_t i = 0; i < q->grad.size(); ++i) q->grad[i] += n.grad[0] * (*w)[i / C];
    });
}

// ---------------------------------------------------------------------------

Tensor ParamStore::create(const std::string& name, int rows, int cols, Init init, double scale) {
    if (index_.count(name)) throw PreconditionError("duplicate parameter name: " + name);
    const size_t n = static_cast<size_t>(rows) * cols;
    count_ += n;
    auto node = std::make_shared<Node>();
    node->rows = rows;
    node->cols = cols;
    node->requires_grad = true;
    if (!shape_only_) {
        node->value.assign(n, 0.0);
        switch (init) {
            case Init::zeros: break;
            case Init::ones: std::fill(node->value.begin(), node->value.end(), scale); break;
            case Init::normal:
                for (double& v : node->value) v = scale * rng_.normal();
                break;
            case Init::kaiming: {
                const double std = scale / std::sqrt(static_cast<double>(rows));
                for (double& v : node->value) v = std * rng_.normal();
                break;
            }
        }
    }
    Tensor t(node);
    index_[name] = params_.size();
    params_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw PreconditionError("unknown parameter: " + name);
    return params_[it->second].second;
}

void ParamStore::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

}  // namespace texgen::ag
