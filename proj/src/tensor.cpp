#include "mvhan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mvhan/kernels.hpp"

namespace mvhan {

std::string shape_str(const Shape& s) {
    std::ostringstream ss;
    ss << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) ss << ", ";
        ss << s[i];
    }
    ss << "]";
    return ss.str();
}

size_t shape_size(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

namespace autograd {

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

} // namespace autograd

using autograd::Node;

namespace {

std::shared_ptr<Node> new_node(Shape shape, std::string op) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values.resize(shape_size(n->shape));
    n->op = std::move(op);
    return n;
}

void check_finite(const Node& n) {
    for (double v : n.values) {
        if (!std::isfinite(v))
            throw NumericsError("operation '" + n.op +
                                "' produced a non-finite value");
    }
}

// Wires parents and the backward closure when gradients are on, then runs the
// finiteness invariant. Every op funnels through here.
Tensor finish(std::shared_ptr<Node> out,
              std::vector<std::shared_ptr<Node>> parents,
              std::function<void(Node&)> backward_fn) {
    check_finite(*out);
    bool needs = false;
    if (autograd::grad_enabled()) {
        for (const auto& p : parents)
            if (p->requires_grad) needs = true;
    }
    if (needs) {
        out->requires_grad = true;
        out->parents = std::move(parents);
        out->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(out));
}

void accumulate(Node& parent, const double* g, size_t n) {
    parent.ensure_grad();
    for (size_t i = 0; i < n; ++i) parent.grad[i] += g[i];
}

} // namespace

// ----------------------------------------------------------- construction

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = new_node(std::move(shape), "zeros");
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape_size(shape))
        throw ShapeError("tensor values length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    auto n = new_node(std::move(shape), "literal");
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    check_finite(*n);
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
    size_t n = values.size();
    return from({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(size_t rows, size_t cols, std::vector<double> values,
                      bool requires_grad) {
    return from({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
size_t Tensor::size() const { return node_->values.size(); }

size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2, shape " + shape_str(shape()));
    return shape()[0];
}

size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2, shape " + shape_str(shape()));
    return shape()[1];
}

double Tensor::item() const {
    if (size() != 1)
        throw ContractError("item(): tensor has " + std::to_string(size()) +
                            " elements, expected 1");
    return node_->values[0];
}

std::span<const double> Tensor::values() const { return node_->values; }
std::span<double> Tensor::values_mut() { return node_->values; }

std::span<const double> Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::zero_grad() {
    node_->grad.assign(node_->values.size(), 0.0);
}

// ------------------------------------------------------------------- ops

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    size_t m = a.rows(), k = a.cols(), n = b.cols();
    auto out = new_node({m, n}, "matmul");
    kernels::matmul_nn(a.values().data(), b.values().data(), out->values.data(), m, k, n);
    auto pa = a.node(), pb = b.node();
    return finish(out, {pa, pb}, [pa, pb, m, k, n](Node& self) {
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            std::vector<double> da(m * k);
            kernels::matmul_nt(g, pb->values.data(), da.data(), m, n, k);
            accumulate(*pa, da.data(), da.size());
        }
        if (pb->requires_grad) {
            std::vector<double> db(k * n);
            kernels::matmul_tn(pa->values.data(), g, db.data(), m, k, n);
            accumulate(*pb, db.data(), db.size());
        }
    });
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto out = new_node(a.shape(), "add");
    kernels::add(a.values().data(), b.values().data(), out->values.data(), out->size());
    auto pa = a.node(), pb = b.node();
    return finish(out, {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) accumulate(*pa, self.grad.data(), self.grad.size());
        if (pb->requires_grad) accumulate(*pb, self.grad.data(), self.grad.size());
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto out = new_node(a.shape(), "mul");
    kernels::mul(a.values().data(), b.values().data(), out->values.data(), out->size());
    auto pa = a.node(), pb = b.node();
    return finish(out, {pa, pb}, [pa, pb](Node& self) {
        size_t n = self.grad.size();
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i] * pb->values[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < n; ++i) pb->grad[i] += self.grad[i] * pa->values[i];
        }
    });
}

Tensor relu(const Tensor& x) {
    auto out = new_node(x.shape(), "relu");
    kernels::relu(x.values().data(), out->values.data(), out->size());
    auto px = x.node();
    return finish(out, {px}, [px](Node& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        // Subgradient at exactly 0 is 0: gate strictly by input > 0.
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (px->values[i] > 0.0) px->grad[i] += self.grad[i];
    });
}

Tensor scale(const Tensor& x, double c) {
    auto out = new_node(x.shape(), "scale");
    kernels::scale(x.values().data(), c, out->values.data(), out->size());
    auto px = x.node();
    return finish(out, {px}, [px, c](Node& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += c * self.grad[i];
    });
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 2)
        throw ShapeError("softmax_rows: expected rank-2, got " + shape_str(x.shape()));
    size_t rows = x.rows(), cols = x.cols();
    auto out = new_node(x.shape(), "softmax_rows");
    kernels::softmax_rows(x.values().data(), out->values.data(), rows, cols);
    auto px = x.node();
    return finish(out, {px}, [px, rows, cols](Node& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < rows; ++i) {
            const double* y = self.values.data() + i * cols;
            const double* g = self.grad.data() + i * cols;
            double dotgy = 0.0;
            for (size_t j = 0; j < cols; ++j) dotgy += g[j] * y[j];
            double* dx = px->grad.data() + i * cols;
            for (size_t j = 0; j < cols; ++j) dx[j] += y[j] * (g[j] - dotgy);
        }
    });
}

namespace {

constexpr double kNormEps = 1e-12;

// Shared forward/backward for row-wise L2 normalization; a rank-1 vector is
// one row.
Tensor l2_normalize_impl(const Tensor& x, size_t rows, size_t cols, const char* op) {
    auto out = new_node(x.shape(), op);
    std::vector<double> norms(rows);
    for (size_t i = 0; i < rows; ++i) {
        const double* v = x.values().data() + i * cols;
        double s = 0.0;
        for (size_t j = 0; j < cols; ++j) s += v[j] * v[j];
        double norm = std::sqrt(s);
        if (!(norm > kNormEps))
            throw DegenerateVectorError(std::string(op) + ": row " + std::to_string(i) +
                                        " has near-zero norm " + std::to_string(norm));
        norms[i] = norm;
        double inv = 1.0 / norm;
        double* y = out->values.data() + i * cols;
        for (size_t j = 0; j < cols; ++j) y[j] = v[j] * inv;
    }
    auto px = x.node();
    return finish(out, {px}, [px, rows, cols, norms](Node& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < rows; ++i) {
            const double* y = self.values.data() + i * cols;
            const double* g = self.grad.data() + i * cols;
            double gy = 0.0;
            for (size_t j = 0; j < cols; ++j) gy += g[j] * y[j];
            double inv = 1.0 / norms[i];
            double* dx = px->grad.data() + i * cols;
            for (size_t j = 0; j < cols; ++j) dx[j] += (g[j] - gy * y[j]) * inv;
        }
    });
}

} // namespace

Tensor l2_normalize(const Tensor& v) {
    if (v.rank() != 1)
        throw ShapeError("l2_normalize: expected rank-1, got " + shape_str(v.shape()));
    return l2_normalize_impl(v, 1, v.size(), "l2_normalize");
}

Tensor l2_normalize_rows(const Tensor& x) {
    if (x.rank() != 2)
        throw ShapeError("l2_normalize_rows: expected rank-2, got " + shape_str(x.shape()));
    return l2_normalize_impl(x, x.rows(), x.cols(), "l2_normalize_rows");
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    if (x.rank() != 2 || b.rank() != 1 || x.cols() != b.size())
        throw ShapeError("add_rowvec: incompatible shapes " + shape_str(x.shape()) +
                         " + " + shape_str(b.shape()));
    size_t rows = x.rows(), cols = x.cols();
    auto out = new_node(x.shape(), "add_rowvec");
    for (size_t i = 0; i < rows; ++i) {
        const double* xr = x.values().data() + i * cols;
        double* yr = out->values.data() + i * cols;
        for (size_t j = 0; j < cols; ++j) yr[j] = xr[j] + b.values()[j];
    }
    auto px = x.node(), pb = b.node();
    return finish(out, {px, pb}, [px, pb, rows, cols](Node& self) {
        if (px->requires_grad) accumulate(*px, self.grad.data(), self.grad.size());
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < rows; ++i)
                for (size_t j = 0; j < cols; ++j)
                    pb->grad[j] += self.grad[i * cols + j];
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: no inputs");
    size_t rows = xs[0].rows(), total = 0;
    for (const auto& x : xs) {
        if (x.rank() != 2 || x.rows() != rows)
            throw ShapeError("concat_cols: row mismatch, " + shape_str(x.shape()));
        total += x.cols();
    }
    auto out = new_node({rows, total}, "concat_cols");
    std::vector<std::shared_ptr<Node>> parents;
    std::vector<size_t> offsets;
    size_t off = 0;
    for (const auto& x : xs) {
        size_t c = x.cols();
        for (size_t i = 0; i < rows; ++i)
            std::copy_n(x.values().data() + i * c, c,
                        out->values.data() + i * total + off);
        parents.push_back(x.node());
        offsets.push_back(off);
        off += c;
    }
    auto ps = parents;
    return finish(out, std::move(parents), [ps, offsets, rows, total](Node& self) {
        for (size_t f = 0; f < ps.size(); ++f) {
            auto& p = *ps[f];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            size_t c = p.shape[1];
            for (size_t i = 0; i < rows; ++i) {
                const double* g = self.grad.data() + i * total + offsets[f];
                double* dp = p.grad.data() + i * c;
                for (size_t j = 0; j < c; ++j) dp[j] += g[j];
            }
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    auto out = new_node(std::move(shape), "reshape");
    out->values.assign(x.values().begin(), x.values().end());
    auto px = x.node();
    return finish(out, {px}, [px](Node& self) {
        if (px->requires_grad) accumulate(*px, self.grad.data(), self.grad.size());
    });
}

Tensor sum(const Tensor& x) {
    auto out = new_node({}, "sum");
    double s = 0.0;
    for (double v : x.values()) s += v;
    out->values[0] = s;
    auto px = x.node();
    return finish(out, {px}, [px](Node& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        double g = self.grad[0];
        for (double& d : px->grad) d += g;
    });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size())
        throw ShapeError("dot: incompatible shapes " + shape_str(a.shape()) +
                         " . " + shape_str(b.shape()));
    auto out = new_node({}, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    out->values[0] = s;
    auto pa = a.node(), pb = b.node();
    return finish(out, {pa, pb}, [pa, pb](Node& self) {
        double g = self.grad[0];
        size_t n = pa->values.size();
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < n; ++i) pa->grad[i] += g * pb->values[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < n; ++i) pb->grad[i] += g * pa->values[i];
        }
    });
}

Tensor embedding_gather(const Tensor& table, std::span<const uint32_t> ids) {
    if (table.rank() != 2)
        throw ShapeError("embedding_gather: table must be rank-2, got " +
                         shape_str(table.shape()));
    size_t vocab = table.rows(), d = table.cols(), n = ids.size();
    for (size_t i = 0; i < n; ++i)
        if (ids[i] >= vocab)
            throw LookupError("embedding_gather: id " + std::to_string(ids[i]) +
                              " out of range [0, " + std::to_string(vocab) + ")");
    auto out = new_node({n, d}, "embedding_gather");
    for (size_t i = 0; i < n; ++i)
        std::copy_n(table.values().data() + static_cast<size_t>(ids[i]) * d, d,
                    out->values.data() + i * d);
    auto pt = table.node();
    std::vector<uint32_t> ids_copy(ids.begin(), ids.end());
    return finish(out, {pt}, [pt, ids_copy, d](Node& self) {
        if (!pt->requires_grad) return;
        pt->ensure_grad();
        // Scatter-add stays serial: several rows may hit the same table row
        // and the accumulation order is part of the determinism contract.
        for (size_t i = 0; i < ids_copy.size(); ++i) {
            const double* g = self.grad.data() + i * d;
            double* dst = pt->grad.data() + static_cast<size_t>(ids_copy[i]) * d;
            for (size_t j = 0; j < d; ++j) dst[j] += g[j];
        }
    });
}

Tensor stack_fields(const std::vector<Tensor>& fields) {
    if (fields.empty()) throw ShapeError("stack_fields: no inputs");
    size_t n = fields[0].rows(), d = fields[0].cols(), F = fields.size();
    for (const auto& f : fields)
        if (f.rank() != 2 || f.rows() != n || f.cols() != d)
            throw ShapeError("stack_fields: inconsistent field shape " +
                             shape_str(f.shape()));
    auto out = new_node({n * F, d}, "stack_fields");
    std::vector<std::shared_ptr<Node>> parents;
    for (size_t f = 0; f < F; ++f) {
        for (size_t i = 0; i < n; ++i)
            std::copy_n(fields[f].values().data() + i * d, d,
                        out->values.data() + (i * F + f) * d);
        parents.push_back(fields[f].node());
    }
    auto ps = parents;
    return finish(out, std::move(parents), [ps, n, d](Node& self) {
        size_t F = ps.size();
        for (size_t f = 0; f < F; ++f) {
            auto& p = *ps[f];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (size_t i = 0; i < n; ++i) {
                const double* g = self.grad.data() + (i * F + f) * d;
                double* dp = p.grad.data() + i * d;
                for (size_t j = 0; j < d; ++j) dp[j] += g[j];
            }
        }
    });
}

namespace {

void require_grouped(const Tensor& t, size_t rows_per_group, const char* op) {
    if (t.rank() != 2 || rows_per_group == 0 || t.rows() % rows_per_group != 0)
        throw ShapeError(std::string(op) + ": rows " + shape_str(t.shape()) +
                         " not divisible into groups of " +
                         std::to_string(rows_per_group));
}

} // namespace

Tensor grouped_matmul_nt(const Tensor& a, const Tensor& b, size_t rows_per_group) {
    require_grouped(a, rows_per_group, "grouped_matmul_nt");
    if (b.shape() != a.shape())
        throw ShapeError("grouped_matmul_nt: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    size_t r = rows_per_group, c = a.cols(), G = a.rows() / r;
    auto out = new_node({G * r, r}, "grouped_matmul_nt");
    kernels::batched_nt(a.values().data(), b.values().data(), out->values.data(),
                        G, r, c, r);
    auto pa = a.node(), pb = b.node();
    return finish(out, {pa, pb}, [pa, pb, G, r, c](Node& self) {
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            std::vector<double> da(G * r * c);
            kernels::batched_nn(g, pb->values.data(), da.data(), G, r, r, c);
            accumulate(*pa, da.data(), da.size());
        }
        if (pb->requires_grad) {
            std::vector<double> db(G * r * c);
            kernels::batched_tn(g, pa->values.data(), db.data(), G, r, r, c);
            accumulate(*pb, db.data(), db.size());
        }
    });
}

Tensor grouped_matmul_nn(const Tensor& a, const Tensor& b, size_t rows_per_group) {
    require_grouped(a, rows_per_group, "grouped_matmul_nn");
    size_t r = rows_per_group;
    if (a.cols() != r || b.rank() != 2 || b.rows() != a.rows())
        throw ShapeError("grouped_matmul_nn: incompatible shapes " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
    size_t c = b.cols(), G = a.rows() / r;
    auto out = new_node({G * r, c}, "grouped_matmul_nn");
    kernels::batched_nn(a.values().data(), b.values().data(), out->values.data(),
                        G, r, r, c);
    auto pa = a.node(), pb = b.node();
    return finish(out, {pa, pb}, [pa, pb, G, r, c](Node& self) {
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            std::vector<double> da(G * r * r);
            kernels::batched_nt(g, pb->values.data(), da.data(), G, r, c, r);
            accumulate(*pa, da.data(), da.size());
        }
        if (pb->requires_grad) {
            std::vector<double> db(G * r * c);
            kernels::batched_tn(pa->values.data(), g, db.data(), G, r, r, c);
            accumulate(*pb, db.data(), db.size());
        }
    });
}

Tensor grouped_dot(const Tensor& u, const Tensor& c, size_t group) {
    if (u.rank() != 2 || c.rank() != 2 || group == 0 ||
        c.rows() != u.rows() * group || c.cols() != u.cols())
        throw ShapeError("grouped_dot: incompatible shapes " + shape_str(u.shape()) +
                         " vs " + shape_str(c.shape()) + " with group " +
                         std::to_string(group));
    size_t n = u.rows(), k = u.cols();
    auto out = new_node({n, group}, "grouped_dot");
    for (size_t i = 0; i < n; ++i) {
        const double* ur = u.values().data() + i * k;
        for (size_t j = 0; j < group; ++j) {
            const double* cr = c.values().data() + (i * group + j) * k;
            double s = 0.0;
            for (size_t p = 0; p < k; ++p) s += ur[p] * cr[p];
            out->values[i * group + j] = s;
        }
    }
    auto pu = u.node(), pc = c.node();
    return finish(out, {pu, pc}, [pu, pc, n, k, group](Node& self) {
        if (pu->requires_grad) pu->ensure_grad();
        if (pc->requires_grad) pc->ensure_grad();
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < group; ++j) {
                double g = self.grad[i * group + j];
                const double* ur = pu->values.data() + i * k;
                const double* cr = pc->values.data() + (i * group + j) * k;
                if (pu->requires_grad) {
                    double* du = pu->grad.data() + i * k;
                    for (size_t p = 0; p < k; ++p) du[p] += g * cr[p];
                }
                if (pc->requires_grad) {
                    double* dc = pc->grad.data() + (i * group + j) * k;
                    for (size_t p = 0; p < k; ++p) dc[p] += g * ur[p];
                }
            }
        }
    });
}

Tensor softmax_xent_col0(const Tensor& logits) {
    if (logits.rank() != 2 || logits.cols() == 0 || logits.rows() == 0)
        throw ShapeError("softmax_xent_col0: expected nonempty rank-2, got " +
                         shape_str(logits.shape()));
    size_t n = logits.rows(), m = logits.cols();
    auto out = new_node({}, "softmax_xent_col0");
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double* row = logits.values().data() + i * m;
        double mx = row[0];
        for (size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (size_t j = 0; j < m; ++j) s += std::exp(row[j] - mx);
        total += mx + std::log(s) - row[0];
    }
    out->values[0] = total / static_cast<double>(n);
    auto pl = logits.node();
    return finish(out, {pl}, [pl, n, m](Node& self) {
        if (!pl->requires_grad) return;
        pl->ensure_grad();
        double g = self.grad[0] / static_cast<double>(n);
        std::vector<double> sm(n * m);
        kernels::softmax_rows(pl->values.data(), sm.data(), n, m);
        for (size_t i = 0; i < n; ++i) {
            double* dl = pl->grad.data() + i * m;
            const double* p = sm.data() + i * m;
            for (size_t j = 0; j < m; ++j) dl[j] += g * (p[j] - (j == 0 ? 1.0 : 0.0));
        }
    });
}

// -------------------------------------------------------------- backward

void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError("backward: loss must be scalar, got shape " +
                            shape_str(loss.shape()));
    auto root = loss.node();
    if (!root->requires_grad) return; // nothing reachable

    // Iterative postorder over the requires-grad subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
    // The graph is single-use: drop edges so intermediates free immediately.
    for (Node* node : order) {
        node->backward_fn = nullptr;
        node->parents.clear();
    }
}

double finite_diff_check(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double eps) {
    if (!(eps > 0.0)) throw ContractError("finite_diff_check: eps must be > 0");

    for (auto p : params) p.zero_grad();
    Tensor loss = f();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params)
        analytic.emplace_back(p.grad().begin(), p.grad().end());

    autograd::NoGradGuard ng;
    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        auto vals = p.values_mut();
        for (size_t i = 0; i < vals.size(); ++i) {
            double orig = vals[i];
            vals[i] = orig + eps;
            double fp = f().item();
            vals[i] = orig - eps;
            double fm = f().item();
            vals[i] = orig;
            double numeric = (fp - fm) / (2.0 * eps);
            double a = analytic[pi][i];
            double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
            max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
        }
    }
    return max_rel;
}

} // namespace mvhan
