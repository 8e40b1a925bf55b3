#include "ctvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "ctvit/kernels.hpp"

namespace ctvit {

namespace {

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data,
                                      bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::make_shared<std::vector<double>>(std::move(data));
    node->requires_grad = requires_grad;
    return node;
}

std::shared_ptr<TensorNode> result_node(Shape shape, std::vector<double> data,
                                        std::vector<Tensor> parents) {
    bool rg = false;
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
    auto node = make_node(std::move(shape), std::move(data), rg);
    if (rg) node->parents = std::move(parents);
    return node;
}

void transpose_2d(const double* src, int64_t rows, int64_t cols, double* dst) {
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

int normalize_axis(int axis, int rank, const char* op) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank)
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
    return a;
}

}  // namespace

void TensorNode::ensure_grad() {
    if (grad.empty()) grad.assign(data->size(), 0.0);
}

void TensorNode::add_grad(const double* src, int64_t n) {
    if (!requires_grad) return;
    ensure_grad();
    kernels::active().axpy(1.0, src, grad.data(), n);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("from_data: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_node({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

int64_t Tensor::dim(int axis) const {
    return node_->shape[static_cast<size_t>(normalize_axis(axis, rank(), "dim"))];
}

int64_t Tensor::numel() const { return node_->numel(); }
const std::vector<double>& Tensor::data() const { return *node_->data; }
std::vector<double>& Tensor::mutable_data() { return *node_->data; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool v) { node_->requires_grad = v; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty())
        throw ShapeError("grad accessed before any backward pass reached this tensor");
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
    auto node = std::make_shared<TensorNode>();
    node->shape = node_->shape;
    node->data = node_->data;  // shared buffer, no graph edge
    node->requires_grad = false;
    return Tensor(node);
}

double Tensor::item() const {
    if (numel() != 1)
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return (*node_->data)[0];
}

// --- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeError("matmul: both inputs need rank >= 2, got " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int64_t m = a.dim(-2), ka = a.dim(-1);
    const int64_t kb = b.dim(-2), n = b.dim(-1);
    if (ka != kb)
        throw ShapeError("matmul: inner dimensions disagree: " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));

    // Broadcast the leading (batch) dims right-aligned.
    const Shape abatch(a.shape().begin(), a.shape().end() - 2);
    const Shape bbatch(b.shape().begin(), b.shape().end() - 2);
    const size_t brank = std::max(abatch.size(), bbatch.size());
    Shape batch(brank, 1);
    for (size_t i = 0; i < brank; ++i) {
        const int64_t da = i < abatch.size() ? abatch[abatch.size() - 1 - i] : 1;
        const int64_t db = i < bbatch.size() ? bbatch[bbatch.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1)
            throw ShapeError("matmul: batch dimensions incompatible: " +
                             shape_str(a.shape()) + " x " + shape_str(b.shape()));
        batch[brank - 1 - i] = std::max(da, db);
    }
    const int64_t nbatch = shape_numel(batch);

    // Per-slice element offsets honoring broadcast (stride 0 on size-1 dims).
    const int64_t k = ka;
    std::vector<int64_t> a_off(nbatch), b_off(nbatch);
    for (int64_t s = 0; s < nbatch; ++s) {
        int64_t flat = s, ai = 0, bi = 0;
        for (size_t i = 0; i < brank; ++i) {
            const size_t ax = brank - 1 - i;
            const int64_t coord = flat % batch[ax];
            flat /= batch[ax];
            if (i < abatch.size()) {
                const size_t oax = abatch.size() - 1 - i;
                int64_t stride = 1;
                for (size_t j = oax + 1; j < abatch.size(); ++j) stride *= abatch[j];
                ai += (abatch[oax] == 1 ? 0 : coord) * stride;
            }
            if (i < bbatch.size()) {
                const size_t oax = bbatch.size() - 1 - i;
                int64_t stride = 1;
                for (size_t j = oax + 1; j < bbatch.size(); ++j) stride *= bbatch[j];
                bi += (bbatch[oax] == 1 ? 0 : coord) * stride;
            }
        }
        a_off[s] = ai * m * k;
        b_off[s] = bi * k * n;
    }

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(nbatch * m * n, 0.0);

    const auto& kt = kernels::active();
    for (int64_t s = 0; s < nbatch; ++s) {
        kt.matmul(a.data().data() + a_off[s], b.data().data() + b_off[s],
                  out.data() + s * m * n, m, k, n);
    }

    auto node = result_node(std::move(out_shape), std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [m, k, n, nbatch, a_off = std::move(a_off),
                             b_off = std::move(b_off)](TensorNode& self) {
            const Tensor& pa = self.parents[0];
            const Tensor& pb = self.parents[1];
            const auto& kt2 = kernels::active();
            std::vector<double> bt, at;
            if (pa.requires_grad()) {
                pa.node()->ensure_grad();
                bt.resize(n * k);
            }
            if (pb.requires_grad()) {
                pb.node()->ensure_grad();
                at.resize(k * m);
            }
            for (int64_t s = 0; s < nbatch; ++s) {
                const double* gp = self.grad.data() + s * m * n;
                if (pa.requires_grad()) {
                    transpose_2d(pb.data().data() + b_off[s], k, n, bt.data());
                    kt2.matmul(gp, bt.data(), pa.node()->grad.data() + a_off[s], m, n, k);
                }
                if (pb.requires_grad()) {
                    transpose_2d(pa.data().data() + a_off[s], m, k, at.data());
                    kt2.matmul(at.data(), gp, pb.node()->grad.data() + b_off[s], k, m, n);
                }
            }
        };
    }
    return Tensor(node);
}

Tensor transpose(const Tensor& t) {
    if (t.rank() < 2)
        throw ShapeError("transpose: rank >= 2 required, got " + shape_str(t.shape()));
    const int64_t rows = t.dim(-2), cols = t.dim(-1);
    const int64_t nslice = t.numel() / (rows * cols);
    Shape out_shape = t.shape();
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    std::vector<double> out(t.numel());
    for (int64_t s = 0; s < nslice; ++s)
        transpose_2d(t.data().data() + s * rows * cols, rows, cols,
                     out.data() + s * rows * cols);

    auto node = result_node(std::move(out_shape), std::move(out), {t});
    if (node->requires_grad) {
        node->backward_fn = [rows, cols, nslice](TensorNode& self) {
            Tensor& p = self.parents[0];
            p.node()->ensure_grad();
            for (int64_t s = 0; s < nslice; ++s) {
                const double* g = self.grad.data() + s * rows * cols;
                double* pg = p.node()->grad.data() + s * rows * cols;
                for (int64_t i = 0; i < cols; ++i)
                    for (int64_t j = 0; j < rows; ++j) pg[j * cols + i] += g[i * rows + j];
            }
        };
    }
    return Tensor(node);
}

// --- elementwise with suffix broadcast --------------------------------------

namespace {

enum class EwOp { Add, Sub, Mul };

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Tensor elementwise(const Tensor& a, const Tensor& b, EwOp op, const char* name) {
    const bool b_small = is_suffix(b.shape(), a.shape());
    const bool a_small = !b_small && is_suffix(a.shape(), b.shape());
    if (!b_small && !a_small)
        throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " do not broadcast");

    const Tensor& big = b_small ? a : b;
    const Tensor& small = b_small ? b : a;
    const int64_t bs = std::max<int64_t>(small.numel(), 1);
    const int64_t repeats = big.numel() / bs;

    const double* bigp = big.data().data();
    const double* smallp = small.data().data();
    std::vector<double> out(big.numel());
    for (int64_t r = 0; r < repeats; ++r) {
        double* o = out.data() + r * bs;
        const double* bp = bigp + r * bs;
        switch (op) {
            case EwOp::Add:
                kernels::active().add(bp, smallp, o, bs);
                break;
            case EwOp::Sub:
                if (b_small)
                    for (int64_t j = 0; j < bs; ++j) o[j] = bp[j] - smallp[j];
                else
                    for (int64_t j = 0; j < bs; ++j) o[j] = smallp[j] - bp[j];
                break;
            case EwOp::Mul:
                kernels::active().mul(bp, smallp, o, bs);
                break;
        }
    }

    auto node = result_node(big.shape(), std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward_fn = [op, b_small, bs, repeats](TensorNode& self) {
            Tensor& pa = self.parents[0];
            Tensor& pb = self.parents[1];
            Tensor& pbig = b_small ? pa : pb;
            Tensor& psmall = b_small ? pb : pa;
            const double big_sign = (op == EwOp::Sub && !b_small) ? -1.0 : 1.0;
            const double small_sign = (op == EwOp::Sub && b_small) ? -1.0 : 1.0;

            if (op == EwOp::Mul) {
                if (pbig.requires_grad()) {
                    pbig.node()->ensure_grad();
                    double* g = pbig.node()->grad.data();
                    const double* sp = psmall.data().data();
                    for (int64_t r = 0; r < repeats; ++r)
                        for (int64_t j = 0; j < bs; ++j)
                            g[r * bs + j] += self.grad[r * bs + j] * sp[j];
                }
                if (psmall.requires_grad()) {
                    psmall.node()->ensure_grad();
                    double* g = psmall.node()->grad.data();
                    const double* bp = pbig.data().data();
                    for (int64_t r = 0; r < repeats; ++r)
                        for (int64_t j = 0; j < bs; ++j)
                            g[j] += self.grad[r * bs + j] * bp[r * bs + j];
                }
            } else {
                if (pbig.requires_grad()) {
                    pbig.node()->ensure_grad();
                    kernels::active().axpy(big_sign, self.grad.data(),
                                           pbig.node()->grad.data(), self.numel());
                }
                if (psmall.requires_grad()) {
                    psmall.node()->ensure_grad();
                    double* g = psmall.node()->grad.data();
                    for (int64_t r = 0; r < repeats; ++r)
                        for (int64_t j = 0; j < bs; ++j)
                            g[j] += small_sign * self.grad[r * bs + j];
                }
            }
        };
    }
    return Tensor(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwOp::Mul, "mul"); }

Tensor scale(const Tensor& t, double c) {
    std::vector<double> out(t.numel());
    kernels::active().scale(c, t.data().data(), out.data(), t.numel());
    auto node = result_node(t.shape(), std::move(out), {t});
    if (node->requires_grad) {
        node->backward_fn = [c](TensorNode& self) {
            Tensor& p = self.parents[0];
            p.node()->ensure_grad();
            kernels::active().axpy(c, self.grad.data(), p.node()->grad.data(), self.numel());
        };
    }
    return Tensor(node);
}

// --- softmax / activations ---------------------------------------------------

Tensor softmax(const Tensor& t, int axis) {
    const int ax = normalize_axis(axis, t.rank(), "softmax");
    const Shape& s = t.shape();
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= s[i];
    for (size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
    const int64_t an = s[ax];

    std::vector<double> out(t.numel());
    const double* x = t.data().data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * an * inner + in;
            double mx = x[base];
            for (int64_t j = 1; j < an; ++j) mx = std::max(mx, x[base + j * inner]);
            double denom = 0.0;
            for (int64_t j = 0; j < an; ++j) {
                const double e = std::exp(x[base + j * inner] - mx);
                out[base + j * inner] = e;
                denom += e;
            }
            for (int64_t j = 0; j < an; ++j) out[base + j * inner] /= denom;
        }
    }

    auto node = result_node(t.shape(), std::move(out), {t});
    if (node->requires_grad) {
        node->backward_fn = [outer, inner, an](TensorNode& self) {
            Tensor& p = self.parents[0];
            p.node()->ensure_grad();
            const double* y = self.data->data();
            double* g = p.node()->grad.data();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o * an * inner + in;
                    double dot = 0.0;
                    for (int64_t j = 0; j < an; ++j)
                        dot += self.grad[base + j * inner] * y[base + j * inner];
                    for (int64_t j = 0; j < an; ++j)
                        g[base + j * inner] +=
                            y[base + j * inner] * (self.grad[base + j * inner] - dot);
                }
            }
        };
    }
    return Tensor(node);
}

Tensor tanh(const Tensor& t) {
    std::vector<double> out(t.numel());
    const double* x = t.data().data();
    for (int64_t i = 0; i < t.numel(); ++i) out[i] = std::tanh(x[i]);
    auto node = result_node(t.shape(), std::move(out), {t});
    if (node->requires_grad) {
        node->backward_fn = [](TensorNode& self) {
            Tensor& p = self.parents[0];
            p.node()->ensure_grad();
            const double* y = self.data->data();
            double* g = p.node()->grad.data();
            for (size_t i = 0; i < self.grad.size(); ++i)
                g[i] += self.grad[i] * (1.0 - y[i] * y[i]);
        };
    }
    return Tensor(node);
}

Tensor gelu(const Tensor& t) {
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    std::vector<double> out(t.numel());
    const double* x = t.data().data();
    for (int64_t i = 0; i < t.numel(); ++i)
        out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
    auto node = result_node(t.shape(), std::move(out), {t});
    if (node->requires_grad) {
        node->backward_fn = [](TensorNode& self) {
            Tensor& p = self.parents[0];
            p.node()->ensure_grad();
            const double* xi = p.data().data();
            double* g = p.node()->grad.data();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const double cdf = 0.5 * (1.0 + std::erf(xi[i] * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi[i] * xi[i]);
                g[i] += self.grad[i] * (cdf + xi[i] * pdf);
            }
        };
    }
    return Tensor(node);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (eps <= 0.0) throw ShapeError("layer_norm: eps must be positive");
    const int64_t d = x.dim(-1);
    if (gamma.numel() != d || beta.numel() != d)
        throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(d) +
                         " elements, got " + shape_str(gamma.shape()) + " / " +
                         shape_str(beta.shape()));
    const int64_t rows = x.numel() / d;

    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_sigma(rows);
    const double* xp = x.data().data();
    const double* gp = gamma.data().data();
    const double* bp = beta.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = xp + r * d;
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += row[j];
        mu /= d;
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = row[j] - mu;
            var += c * c;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = inv;
        for (int64_t j = 0; j < d; ++j) {
            const double h = (row[j] - mu) * inv;
            xhat[r * d + j] = h;
            out[r * d + j] = gp[j] * h + bp[j];
        }
    }

    auto node = result_node(x.shape(), std::move(out), {x, gamma, beta});
    if (node->requires_grad) {
        node->backward_fn = [d, rows, xhat = std::move(xhat),
                             inv_sigma = std::move(inv_sigma)](TensorNode& self) {
            Tensor& px = self.parents[0];
            Tensor& pg = self.parents[1];
            Tensor& pb = self.parents[2];
            const double* gmma = pg.data().data();
            if (px.requires_grad()) {
                px.node()->ensure_grad();
                double* gx = px.node()->grad.data();
                for (int64_t r = 0; r < rows; ++r) {
                    const double* dy = self.grad.data() + r * d;
                    const double* h = xhat.data() + r * d;
                    double mean_g = 0.0, mean_gh = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                        const double gj = dy[j] * gmma[j];
                        mean_g += gj;
                        mean_gh += gj * h[j];
                    }
                    mean_g /= d;
                    mean_gh /= d;
                    for (int64_t j = 0; j < d; ++j) {
                        const double gj = dy[j] * gmma[j];
                        gx[r * d + j] += (gj - mean_g - h[j] * mean_gh) * inv_sigma[r];
                    }
                }
            }
            if (pg.requires_grad()) {
                pg.node()->ensure_grad();
                double* gg = pg.node()->grad.data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j)
                        gg[j] += self.grad[r * d + j] * xhat[r * d + j];
            }
            if (pb.requires_grad()) {
                pb.node()->ensure_grad();
                double* gb = pb.node()->grad.data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j) gb[j] += self.grad[r * d + j];
            }
        };
    }
    return Tensor(node);
}

// --- structural ops ----------------------------------------------------------

Tensor concat(const std::vector<Tensor>& ts, int axis) {
    if (ts.empty()) throw ShapeError("concat: no inputs");
    const int rank = ts[0].rank();
    const int ax = normalize_axis(axis, rank, "concat");
    Shape out_shape = ts[0].shape();
    int64_t total_axis = 0;
    for (const Tensor& t : ts) {
        if (t.rank() != rank)
            throw ShapeError("concat: rank mismatch between inputs");
        for (int i = 0; i < rank; ++i) {
            if (i != ax && t.shape()[i] != out_shape[i])
                throw ShapeError("concat: shapes " + shape_str(out_shape) + " and " +
                                 shape_str(t.shape()) + " disagree off the concat axis");
        }
        total_axis += t.shape()[ax];
    }
    out_shape[ax] = total_axis;

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= out_shape[i];
    for (int i = ax + 1; i < rank; ++i) inner *= out_shape[i];

    std::vector<double> out(shape_numel(out_shape));
    int64_t axis_off = 0;
    for (const Tensor& t : ts) {
        const int64_t tn = t.shape()[ax];
        const double* src = t.data().data();
        for (int64_t o = 0; o < outer; ++o) {
            std::memcpy(out.data() + (o * total_axis + axis_off) * inner,
                        src + o * tn * inner, tn * inner * sizeof(double));
        }
        axis_off += tn;
    }

    auto node = result_node(std::move(out_shape), std::move(out), ts);
    if (node->requires_grad) {
        node->backward_fn = [outer, inner, total_axis, ax](TensorNode& self) {
            int64_t axis_off2 = 0;
            for (Tensor& p : self.parents) {
                const int64_t tn = p.shape()[ax];
                if (p.requires_grad()) {
                    p.node()->ensure_grad();
                    double* g = p.node()->grad.data();
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* src =
                            self.grad.data() + (o * total_axis + axis_off2) * inner;
                        kernels::active().axpy(1.0, src, g + o * tn * inner, tn * inner);
                    }
                }
                axis_off2 += tn;
            }
        };
    }
    return Tensor(node);
}

Tensor slice(const Tensor& t, int axis, int64_t start, int64_t end) {
    const int ax = normalize_axis(axis, t.rank(), "slice");
    const int64_t an = t.shape()[ax];
    if (start < 0 || end > an || start >= end)
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(end) + ") invalid for axis size " +
                         std::to_string(an));
    Shape out_shape = t.shape();
    out_shape[ax] = end - start;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= t.shape()[i];
    for (int i = ax + 1; i < t.rank(); ++i) inner *= t.shape()[i];

    const int64_t len = end - start;
    std::vector<double> out(shape_numel(out_shape));
    const double* src = t.data().data();
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + o * len * inner, src + (o * an + start) * inner,
                    len * inner * sizeof(double));

    auto node = result_node(std::move(out_shape), std::move(out), {t});
    if (node->requires_grad) {
        node->backward_fn = [outer, inner, an, start, len](TensorNode& self) {
            Tensor& p = self.parents[0];
            p.node()->ensure_grad();
            double* g = p.node()->grad.data();
            for (int64_t o = 0; o < outer; ++o)
                kernels::active().axpy(1.0, self.grad.data() + o * len * inner,
                                       g + (o * an + start) * inner, len * inner);
        };
    }
    return Tensor(node);
}

Tensor reshape(const Tensor& t, Shape shape) {
    if (shape_numel(shape) != t.numel())
        throw ShapeError("reshape: cannot view " + shape_str(t.shape()) + " as " +
                         shape_str(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = t.node_ptr()->data;  // same buffer, new shape
    node->requires_grad = t.requires_grad();
    if (node->requires_grad) {
        node->parents = {t};
        node->backward_fn = [](TensorNode& self) {
            Tensor& p = self.parents[0];
            p.node()->add_grad(self.grad.data(), self.numel());
        };
    }
    return Tensor(node);
}

namespace {

Tensor reduce_all(const Tensor& t, bool take_mean) {
    double acc = 0.0;
    for (double v : t.data()) acc += v;
    const double denom = take_mean ? static_cast<double>(t.numel()) : 1.0;
    auto node = result_node({}, {acc / denom}, {t});
    if (node->requires_grad) {
        node->backward_fn = [denom](TensorNode& self) {
            Tensor& p = self.parents[0];
            p.node()->ensure_grad();
            const double g = self.grad[0] / denom;
            double* pg = p.node()->grad.data();
            for (int64_t i = 0; i < p.numel(); ++i) pg[i] += g;
        };
    }
    return Tensor(node);
}

}  // namespace

Tensor mean(const Tensor& t) { return reduce_all(t, true); }
Tensor sum(const Tensor& t) { return reduce_all(t, false); }

// --- backward ----------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward requires a scalar loss, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    TensorNode* root = loss.node();
    if (!root->requires_grad) return;

    // Post-order over the grad-requiring subgraph: inputs come before the ops
    // that consume them, so the reversed order is a valid propagation order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        TensorNode* node;
        size_t next;
    };
    std::vector<Frame> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            TensorNode* p = f.node->parents[f.next++].node();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    // Intermediate grads are per-call scratch; leaf grads accumulate across
    // calls.
    for (TensorNode* n : order)
        if (!n->is_leaf()) n->grad.clear();

    root->ensure_grad();
    root->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

int64_t argmax(const Tensor& t) {
    const auto& d = t.data();
    int64_t best = 0;
    for (int64_t i = 1; i < t.numel(); ++i)
        if (d[i] > d[best]) best = i;
    return best;
}

}  // namespace ctvit
