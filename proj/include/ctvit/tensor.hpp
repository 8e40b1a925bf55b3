#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ctvit/common.hpp"

namespace ctvit {

struct TensorNode;

// Value-semantic handle to a node in a define-by-run autodiff graph. Data is
// row-major float64 and immutable once an op has consumed the tensor; grad
// buffers are the only thing backward() mutates. The graph is rebuilt on
// every forward pass.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    int64_t dim(int axis) const;  // negative axes count from the back
    int64_t numel() const;

    const std::vector<double>& data() const;
    // Mutable view of the value buffer; for leaf initialization and the
    // optimizer only, never for tensors already consumed by an op.
    std::vector<double>& mutable_data();

    bool requires_grad() const;
    void set_requires_grad(bool v);
    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    // Leaf tensor sharing this value buffer; gradients stop here.
    Tensor detach() const;

    double item() const;

    TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<Tensor> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(TensorNode&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data->size()); }
    bool is_leaf() const { return !backward_fn; }
    void ensure_grad();
    void add_grad(const double* src, int64_t n);
};

// --- ops ------------------------------------------------------------------

// Batched matrix product a[..., m, k] x b[..., k, n] -> [..., m, n]; leading
// dims broadcast numpy-style.
Tensor matmul(const Tensor& a, const Tensor& b);

// Swap the last two axes (copying).
Tensor transpose(const Tensor& t);

// Elementwise with suffix broadcasting: shapes must be equal, or the smaller
// operand's shape must equal the trailing shape of the larger one (a scalar
// broadcasts against anything).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// t * constant (not differentiable w.r.t. the constant).
Tensor scale(const Tensor& t, double c);

Tensor softmax(const Tensor& t, int axis);
Tensor tanh(const Tensor& t);
Tensor gelu(const Tensor& t);

// Normalizes the last axis to mean 0 / population variance 1, then applies
// gamma/beta (both of shape {last_dim}).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

Tensor concat(const std::vector<Tensor>& ts, int axis);
Tensor slice(const Tensor& t, int axis, int64_t start, int64_t end);
Tensor reshape(const Tensor& t, Shape shape);

Tensor mean(const Tensor& t);
Tensor sum(const Tensor& t);

// Propagate gradients from a scalar loss through the graph. Leaf grads
// accumulate additively across calls; intermediate grads are recomputed.
void backward(const Tensor& loss);

// Index of the largest element, ties broken by the lowest index.
int64_t argmax(const Tensor& t);

}  // namespace ctvit
