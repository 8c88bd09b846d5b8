#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nfc/errors.hpp"
#include "nfc/random.hpp"

namespace nfc {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Dense row-major tensor of 64-bit reals. Rank is kept general but the tape
// operations work on scalars ({1}) and matrices ({rows, cols}).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(numel_of(t.shape), 0.0);
        return t;
    }
    static Tensor full(std::vector<int> s, double v) {
        Tensor t = zeros(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int e : s) n *= e;
        return n;
    }

    long numel() const { return static_cast<long>(data.size()); }
    bool is_scalar() const { return data.size() == 1; }
    double scalar_value() const { return data[0]; }

    // Matrix view: rank-2 as is, rank-1 as a row vector, scalar as 1x1.
    int rows() const { return shape.size() == 2 ? shape[0] : 1; }
    int cols() const { return shape.size() == 2 ? shape[1] : static_cast<int>(data.size()); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    MatMap mat() { return MatMap(data.data(), rows(), cols()); }
    ConstMatMap mat() const { return ConstMatMap(data.data(), rows(), cols()); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

enum class Op {
    Leaf,
    MatMul,
    Add,
    Mul,
    Affine,      // s0 * x + s1
    Relu,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Sum,         // all elements -> scalar
    Mean,        // all elements -> scalar
    RowSum,      // [R,C] -> [R,1]
    Broadcast,   // {1} | {1,C} | {R,1} -> {R,C}
    ConcatCols,  // [R,C1],[R,C2] -> [R,C1+C2]
    SliceCols,   // [R,C] -> [R,c1-c0]
    Reshape,
    ClampUpper,  // min(x, s0)
    ClampLower,  // max(x, s0)
    CumsumExcl,  // y[i,j] = sum_{k<j} x[i,k]
    SumGroups,   // [G*N,C] -> [G,C], i0 = N
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Mul: return "mul";
        case Op::Affine: return "affine";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Softplus: return "softplus";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::RowSum: return "row_sum";
        case Op::Broadcast: return "broadcast";
        case Op::ConcatCols: return "concat_cols";
        case Op::SliceCols: return "slice_cols";
        case Op::Reshape: return "reshape";
        case Op::ClampUpper: return "clamp_upper";
        case Op::ClampLower: return "clamp_lower";
        case Op::CumsumExcl: return "cumsum_excl";
        case Op::SumGroups: return "sum_groups";
    }
    return "?";
}

class Tape;

// Handle to a node on a tape.
class Value {
public:
    Value() = default;
    Value(Tape* tape, int id) : tape_(tape), id_(id) {}

    int id() const { return id_; }
    Tape* tape() const { return tape_; }
    const Tensor& val() const;
    const std::vector<int>& shape() const { return val().shape; }
    long numel() const { return val().numel(); }
    double scalar_value() const { return val().scalar_value(); }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Dynamic tape: nodes are appended in topological order and the backward pass
// walks them once in reverse. Rebuilt every training step.
class Tape {
public:
    struct Node {
        Op op;
        int a = -1, b = -1;
        Tensor val;
        double s0 = 0.0, s1 = 0.0;
        int i0 = 0, i1 = 0;
    };

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_[id]; }

    Value leaf(Tensor t) { return push(Op::Leaf, std::move(t)); }
    Value scalar(double v) { return leaf(Tensor::scalar(v)); }

    Value matmul(Value a, Value b) {
        const Tensor& ta = nodes_[a.id()].val;
        const Tensor& tb = nodes_[b.id()].val;
        if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
            throw ShapeError("matmul shape mismatch: " + shape_str(ta.shape) + " x " + shape_str(tb.shape));
        Tensor out = Tensor::zeros({ta.shape[0], tb.shape[1]});
        out.mat().noalias() = ta.mat() * tb.mat();
        return push(Op::MatMul, std::move(out), a.id(), b.id());
    }

    Value add(Value a, Value b) { return binary_elementwise(Op::Add, a, b); }
    Value mul(Value a, Value b) { return binary_elementwise(Op::Mul, a, b); }

    // s0 * x + s1
    Value affine(Value x, double mul_by, double add_to) {
        Tensor out = nodes_[x.id()].val;
        for (double& v : out.data) v = mul_by * v + add_to;
        Node n{Op::Affine, x.id(), -1, std::move(out), mul_by, add_to, 0, 0};
        return push_node(std::move(n));
    }
    Value neg(Value x) { return affine(x, -1.0, 0.0); }
    Value scale(Value x, double s) { return affine(x, s, 0.0); }
    Value add_scalar(Value x, double c) { return affine(x, 1.0, c); }
    Value one_minus(Value x) { return affine(x, -1.0, 1.0); }
    Value sub(Value a, Value b) { return add(a, neg(b)); }

    Value relu(Value x) {
        Tensor out = nodes_[x.id()].val;
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return push(Op::Relu, std::move(out), x.id());
    }

    Value sigmoid(Value x) {
        Tensor out = nodes_[x.id()].val;
        for (double& v : out.data) v = stable_sigmoid(v);
        return push(Op::Sigmoid, std::move(out), x.id());
    }

    Value softplus(Value x) {
        Tensor out = nodes_[x.id()].val;
        for (double& v : out.data) v = stable_softplus(v);
        return push(Op::Softplus, std::move(out), x.id());
    }

    Value exp(Value x) {
        Tensor out = nodes_[x.id()].val;
        for (double& v : out.data) v = std::exp(v);
        return push(Op::Exp, std::move(out), x.id());
    }

    Value log(Value x) {
        Tensor out = nodes_[x.id()].val;
        for (double& v : out.data) {
            if (!(v > 0.0))
                throw DomainError("log of non-positive element " + std::to_string(v) +
                                  " (missing clamp upstream?)");
            v = std::log(v);
        }
        return push(Op::Log, std::move(out), x.id());
    }

    Value sum(Value x) {
        const Tensor& t = nodes_[x.id()].val;
        double s = std::accumulate(t.data.begin(), t.data.end(), 0.0);
        return push(Op::Sum, Tensor::scalar(s), x.id());
    }

    Value mean(Value x) {
        const Tensor& t = nodes_[x.id()].val;
        double s = std::accumulate(t.data.begin(), t.data.end(), 0.0);
        return push(Op::Mean, Tensor::scalar(s / double(t.numel())), x.id());
    }

    Value row_sum(Value x) {
        const Tensor& t = require_rank2(x, "row_sum");
        Tensor out = Tensor::zeros({t.shape[0], 1});
        const int rows = t.shape[0], cols = t.shape[1];
        for (int r = 0; r < rows; ++r) {
            double s = 0.0;
            const double* p = t.data.data() + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) s += p[c];
            out.data[r] = s;
        }
        return push(Op::RowSum, std::move(out), x.id());
    }

    Value broadcast(Value x, std::vector<int> target) {
        const Tensor& t = nodes_[x.id()].val;
        if (target.size() != 2) throw ShapeError("broadcast target must be rank-2, got " + shape_str(target));
        const int rows = target[0], cols = target[1];
        Tensor out = Tensor::zeros(target);
        if (t.is_scalar()) {
            std::fill(out.data.begin(), out.data.end(), t.data[0]);
        } else if (t.shape.size() == 2 && t.shape[0] == 1 && t.shape[1] == cols) {
            for (int r = 0; r < rows; ++r)
                std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<size_t>(r) * cols);
        } else if (t.shape.size() == 2 && t.shape[1] == 1 && t.shape[0] == rows) {
            for (int r = 0; r < rows; ++r)
                std::fill_n(out.data.begin() + static_cast<size_t>(r) * cols, cols, t.data[r]);
        } else {
            throw ShapeError("cannot broadcast " + shape_str(t.shape) + " to " + shape_str(target));
        }
        return push(Op::Broadcast, std::move(out), x.id());
    }

    Value concat_cols(Value a, Value b) {
        const Tensor& ta = require_rank2(a, "concat_cols");
        const Tensor& tb = require_rank2(b, "concat_cols");
        if (ta.shape[0] != tb.shape[0])
            throw ShapeError("concat_cols row mismatch: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
        const int rows = ta.shape[0], ca = ta.shape[1], cb = tb.shape[1];
        Tensor out = Tensor::zeros({rows, ca + cb});
        for (int r = 0; r < rows; ++r) {
            std::copy_n(ta.data.begin() + static_cast<size_t>(r) * ca, ca,
                        out.data.begin() + static_cast<size_t>(r) * (ca + cb));
            std::copy_n(tb.data.begin() + static_cast<size_t>(r) * cb, cb,
                        out.data.begin() + static_cast<size_t>(r) * (ca + cb) + ca);
        }
        return push(Op::ConcatCols, std::move(out), a.id(), b.id());
    }

    Value slice_cols(Value x, int c0, int c1) {
        const Tensor& t = require_rank2(x, "slice_cols");
        if (c0 < 0 || c1 > t.shape[1] || c0 >= c1)
            throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " +
                             shape_str(t.shape));
        const int rows = t.shape[0], cols = t.shape[1], w = c1 - c0;
        Tensor out = Tensor::zeros({rows, w});
        for (int r = 0; r < rows; ++r)
            std::copy_n(t.data.begin() + static_cast<size_t>(r) * cols + c0, w,
                        out.data.begin() + static_cast<size_t>(r) * w);
        Node n{Op::SliceCols, x.id(), -1, std::move(out), 0, 0, c0, c1};
        return push_node(std::move(n));
    }

    Value reshape(Value x, std::vector<int> shape) {
        const Tensor& t = nodes_[x.id()].val;
        if (Tensor::numel_of(shape) != t.numel())
            throw ShapeError("reshape " + shape_str(t.shape) + " to " + shape_str(shape));
        Tensor out(std::move(shape), t.data);
        return push(Op::Reshape, std::move(out), x.id());
    }

    Value clamp_upper(Value x, double bound) {
        Tensor out = nodes_[x.id()].val;
        for (double& v : out.data) v = std::min(v, bound);
        Node n{Op::ClampUpper, x.id(), -1, std::move(out), bound, 0, 0, 0};
        return push_node(std::move(n));
    }

    Value clamp_lower(Value x, double bound) {
        Tensor out = nodes_[x.id()].val;
        for (double& v : out.data) v = std::max(v, bound);
        Node n{Op::ClampLower, x.id(), -1, std::move(out), bound, 0, 0, 0};
        return push_node(std::move(n));
    }

    Value cumsum_exclusive(Value x) {
        const Tensor& t = require_rank2(x, "cumsum_exclusive");
        const int rows = t.shape[0], cols = t.shape[1];
        Tensor out = Tensor::zeros({rows, cols});
        for (int r = 0; r < rows; ++r) {
            const double* src = t.data.data() + static_cast<size_t>(r) * cols;
            double* dst = out.data.data() + static_cast<size_t>(r) * cols;
            double acc = 0.0;
            for (int c = 0; c < cols; ++c) {
                dst[c] = acc;
                acc += src[c];
            }
        }
        return push(Op::CumsumExcl, std::move(out), x.id());
    }

    // Sums every `group` consecutive rows: [G*group, C] -> [G, C].
    Value sum_groups(Value x, int group) {
        const Tensor& t = require_rank2(x, "sum_groups");
        if (group < 1 || t.shape[0] % group != 0)
            throw ShapeError("sum_groups: rows " + std::to_string(t.shape[0]) + " not divisible by group " +
                             std::to_string(group));
        const int groups = t.shape[0] / group, cols = t.shape[1];
        Tensor out = Tensor::zeros({groups, cols});
        for (int g = 0; g < groups; ++g) {
            double* dst = out.data.data() + static_cast<size_t>(g) * cols;
            for (int n = 0; n < group; ++n) {
                const double* src = t.data.data() + (static_cast<size_t>(g) * group + n) * cols;
                for (int c = 0; c < cols; ++c) dst[c] += src[c];
            }
        }
        Node n{Op::SumGroups, x.id(), -1, std::move(out), 0, 0, group, 0};
        return push_node(std::move(n));
    }

    // Reverse-mode sweep from a scalar loss. Returns gradients indexed by
    // node id; nodes outside the loss subgraph keep empty tensors.
    std::vector<Tensor> backward(Value loss) const {
        const int root = loss.id();
        if (!nodes_[root].val.is_scalar())
            throw ShapeError("backward requires a scalar loss, got " + shape_str(nodes_[root].val.shape));
        std::vector<Tensor> grads(nodes_.size());
        std::vector<char> reach(nodes_.size(), 0);
        reach[root] = 1;
        grads[root] = Tensor::scalar(1.0);
        for (int id = root; id >= 0; --id) {
            if (!reach[id]) continue;
            const Node& n = nodes_[id];
            if (n.a >= 0) reach[n.a] = 1;
            if (n.b >= 0) reach[n.b] = 1;
            backward_node(id, grads);
        }
        return grads;
    }

    static double stable_sigmoid(double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    }
    static double stable_softplus(double x) {
        if (x > 0.0) return x + std::log1p(std::exp(-x));
        return std::log1p(std::exp(x));
    }

private:
    friend class Value;

    std::vector<Node> nodes_;

    const Tensor& require_rank2(Value x, const char* what) const {
        const Tensor& t = nodes_[x.id()].val;
        if (t.shape.size() != 2) throw ShapeError(std::string(what) + " requires rank-2, got " + shape_str(t.shape));
        return t;
    }

    Value push(Op op, Tensor val, int a = -1, int b = -1) {
        Node n{op, a, b, std::move(val), 0, 0, 0, 0};
        return push_node(std::move(n));
    }

    Value push_node(Node n) {
        nodes_.push_back(std::move(n));
        return Value(this, static_cast<int>(nodes_.size()) - 1);
    }

    // Elementwise with implicit broadcast of a scalar / row / column operand.
    Value binary_elementwise(Op op, Value a, Value b) {
        const Tensor& ta = nodes_[a.id()].val;
        const Tensor& tb = nodes_[b.id()].val;
        if (!same_shape(ta.shape, tb.shape)) {
            if (broadcastable_to(tb, ta)) {
                b = broadcast(b, ta.shape);
            } else if (broadcastable_to(ta, tb)) {
                a = broadcast(a, tb.shape);
            } else {
                throw ShapeError(std::string(op_name(op)) + " shape mismatch: " + shape_str(ta.shape) + " vs " +
                                 shape_str(tb.shape));
            }
        }
        const Tensor& fa = nodes_[a.id()].val;
        const Tensor& fb = nodes_[b.id()].val;
        Tensor out = fa;
        if (op == Op::Add)
            for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += fb.data[i];
        else
            for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= fb.data[i];
        return push(op, std::move(out), a.id(), b.id());
    }

    static bool broadcastable_to(const Tensor& src, const Tensor& dst) {
        if (dst.shape.size() != 2) return false;
        if (src.is_scalar()) return true;
        if (src.shape.size() != 2) return false;
        return (src.shape[0] == 1 && src.shape[1] == dst.shape[1]) ||
               (src.shape[1] == 1 && src.shape[0] == dst.shape[0]);
    }

    Tensor& grad_slot(std::vector<Tensor>& grads, int id) const {
        if (grads[id].data.empty()) grads[id] = Tensor::zeros(nodes_[id].val.shape);
        return grads[id];
    }

    void backward_node(int id, std::vector<Tensor>& grads) const {
        const Node& n = nodes_[id];
        const Tensor& gy = grads[id];
        if (gy.data.empty() || n.op == Op::Leaf) return;
        switch (n.op) {
            case Op::MatMul: {
                const Tensor& ta = nodes_[n.a].val;
                const Tensor& tb = nodes_[n.b].val;
                grad_slot(grads, n.a).mat().noalias() += gy.mat() * tb.mat().transpose();
                grad_slot(grads, n.b).mat().noalias() += ta.mat().transpose() * gy.mat();
                break;
            }
            case Op::Add: {
                accumulate(grad_slot(grads, n.a), gy, 1.0);
                accumulate(grad_slot(grads, n.b), gy, 1.0);
                break;
            }
            case Op::Mul: {
                Tensor& ga = grad_slot(grads, n.a);
                Tensor& gb = grad_slot(grads, n.b);
                const Tensor& ta = nodes_[n.a].val;
                const Tensor& tb = nodes_[n.b].val;
                for (size_t i = 0; i < gy.data.size(); ++i) {
                    ga.data[i] += gy.data[i] * tb.data[i];
                    gb.data[i] += gy.data[i] * ta.data[i];
                }
                break;
            }
            case Op::Affine: {
                accumulate(grad_slot(grads, n.a), gy, n.s0);
                break;
            }
            case Op::Relu: {
                Tensor& ga = grad_slot(grads, n.a);
                const Tensor& x = nodes_[n.a].val;
                for (size_t i = 0; i < gy.data.size(); ++i)
                    if (x.data[i] > 0.0) ga.data[i] += gy.data[i];
                break;
            }
            case Op::Sigmoid: {
                Tensor& ga = grad_slot(grads, n.a);
                for (size_t i = 0; i < gy.data.size(); ++i) {
                    double y = n.val.data[i];
                    ga.data[i] += gy.data[i] * y * (1.0 - y);
                }
                break;
            }
            case Op::Softplus: {
                Tensor& ga = grad_slot(grads, n.a);
                for (size_t i = 0; i < gy.data.size(); ++i)
                    ga.data[i] += gy.data[i] * (1.0 - std::exp(-n.val.data[i]));
                break;
            }
            case Op::Exp: {
                Tensor& ga = grad_slot(grads, n.a);
                for (size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i] * n.val.data[i];
                break;
            }
            case Op::Log: {
                Tensor& ga = grad_slot(grads, n.a);
                const Tensor& x = nodes_[n.a].val;
                for (size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i] / x.data[i];
                break;
            }
            case Op::Sum: {
                accumulate_all(grad_slot(grads, n.a), gy.data[0]);
                break;
            }
            case Op::Mean: {
                accumulate_all(grad_slot(grads, n.a), gy.data[0] / double(nodes_[n.a].val.numel()));
                break;
            }
            case Op::RowSum: {
                Tensor& ga = grad_slot(grads, n.a);
                const int rows = ga.shape[0], cols = ga.shape[1];
                for (int r = 0; r < rows; ++r) {
                    double g = gy.data[r];
                    double* p = ga.data.data() + static_cast<size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) p[c] += g;
                }
                break;
            }
            case Op::Broadcast: {
                Tensor& ga = grad_slot(grads, n.a);
                const Tensor& src = nodes_[n.a].val;
                const int rows = n.val.shape[0], cols = n.val.shape[1];
                if (src.is_scalar()) {
                    double s = 0.0;
                    for (double v : gy.data) s += v;
                    ga.data[0] += s;
                } else if (src.shape[0] == 1) {
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < cols; ++c) ga.data[c] += gy.data[static_cast<size_t>(r) * cols + c];
                } else {
                    for (int r = 0; r < rows; ++r) {
                        double s = 0.0;
                        const double* p = gy.data.data() + static_cast<size_t>(r) * cols;
                        for (int c = 0; c < cols; ++c) s += p[c];
                        ga.data[r] += s;
                    }
                }
                break;
            }
            case Op::ConcatCols: {
                Tensor& ga = grad_slot(grads, n.a);
                Tensor& gb = grad_slot(grads, n.b);
                const int rows = ga.shape[0], ca = ga.shape[1], cb = gb.shape[1];
                for (int r = 0; r < rows; ++r) {
                    const double* src = gy.data.data() + static_cast<size_t>(r) * (ca + cb);
                    double* pa = ga.data.data() + static_cast<size_t>(r) * ca;
                    double* pb = gb.data.data() + static_cast<size_t>(r) * cb;
                    for (int c = 0; c < ca; ++c) pa[c] += src[c];
                    for (int c = 0; c < cb; ++c) pb[c] += src[ca + c];
                }
                break;
            }
            case Op::SliceCols: {
                Tensor& ga = grad_slot(grads, n.a);
                const int rows = ga.shape[0], cols = ga.shape[1], w = n.i1 - n.i0;
                for (int r = 0; r < rows; ++r) {
                    const double* src = gy.data.data() + static_cast<size_t>(r) * w;
                    double* dst = ga.data.data() + static_cast<size_t>(r) * cols + n.i0;
                    for (int c = 0; c < w; ++c) dst[c] += src[c];
                }
                break;
            }
            case Op::Reshape: {
                Tensor& ga = grad_slot(grads, n.a);
                for (size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i];
                break;
            }
            case Op::ClampUpper: {
                Tensor& ga = grad_slot(grads, n.a);
                const Tensor& x = nodes_[n.a].val;
                for (size_t i = 0; i < gy.data.size(); ++i)
                    if (x.data[i] < n.s0) ga.data[i] += gy.data[i];
                break;
            }
            case Op::ClampLower: {
                Tensor& ga = grad_slot(grads, n.a);
                const Tensor& x = nodes_[n.a].val;
                for (size_t i = 0; i < gy.data.size(); ++i)
                    if (x.data[i] > n.s0) ga.data[i] += gy.data[i];
                break;
            }
            case Op::CumsumExcl: {
                Tensor& ga = grad_slot(grads, n.a);
                const int rows = ga.shape[0], cols = ga.shape[1];
                for (int r = 0; r < rows; ++r) {
                    const double* src = gy.data.data() + static_cast<size_t>(r) * cols;
                    double* dst = ga.data.data() + static_cast<size_t>(r) * cols;
                    double acc = 0.0;
                    for (int c = cols - 1; c >= 0; --c) {
                        dst[c] += acc;
                        acc += src[c];
                    }
                }
                break;
            }
            case Op::SumGroups: {
                Tensor& ga = grad_slot(grads, n.a);
                const int group = n.i0, cols = ga.shape[1];
                const int groups = n.val.shape[0];
                for (int g = 0; g < groups; ++g) {
                    const double* src = gy.data.data() + static_cast<size_t>(g) * cols;
                    for (int k = 0; k < group; ++k) {
                        double* dst = ga.data.data() + (static_cast<size_t>(g) * group + k) * cols;
                        for (int c = 0; c < cols; ++c) dst[c] += src[c];
                    }
                }
                break;
            }
            case Op::Leaf:
                break;
        }
    }

    static void accumulate(Tensor& dst, const Tensor& src, double s) {
        for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += s * src.data[i];
    }
    static void accumulate_all(Tensor& dst, double v) {
        for (double& d : dst.data) d += v;
    }
};

inline const Tensor& Value::val() const { return tape_->node(id_).val; }

// Max relative error between analytic gradients and central finite
// differences over all coordinates of all inputs:
//   max |analytic - numeric| / max(1, |analytic|)
// F: (Tape&, const std::vector<Value>&) -> Value (scalar loss).
template <class F>
double grad_check(F&& f, const std::vector<Tensor>& points, double h = 1e-6) {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(points.size());
    for (const Tensor& p : points) leaves.push_back(tape.leaf(p));
    Value loss = f(tape, leaves);
    std::vector<Tensor> grads = tape.backward(loss);

    auto eval_at = [&](const std::vector<Tensor>& pts) {
        Tape t;
        std::vector<Value> ls;
        ls.reserve(pts.size());
        for (const Tensor& p : pts) ls.push_back(t.leaf(p));
        return f(t, ls).scalar_value();
    };

    double max_err = 0.0;
    std::vector<Tensor> work = points;
    for (size_t i = 0; i < points.size(); ++i) {
        const Tensor& g = grads[leaves[i].id()];
        for (size_t c = 0; c < work[i].data.size(); ++c) {
            const double orig = work[i].data[c];
            work[i].data[c] = orig + h;
            double fp = eval_at(work);
            work[i].data[c] = orig - h;
            double fm = eval_at(work);
            work[i].data[c] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            double analytic = g.data.empty() ? 0.0 : g.data[c];
            double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace nfc
