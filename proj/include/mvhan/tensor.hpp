#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mvhan/errors.hpp"

namespace mvhan {

using Shape = std::vector<size_t>;

std::string shape_str(const Shape& s);
size_t shape_size(const Shape& s);

namespace autograd {

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // same length as values once touched
    bool requires_grad = false;
    std::string op; // producing operation, for error messages
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

bool grad_enabled();

// Disables graph construction in its scope (inference / finite differences).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

} // namespace autograd

// Dense 64-bit float tensor with reverse-mode autodiff. Ranks 0..2 are used:
// scalar {}, vector {n}, matrix {rows, cols}, all row-major. Value-semantic
// handle; copies share the underlying node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> values, bool requires_grad = false);
    static Tensor matrix(size_t rows, size_t cols, std::vector<double> values,
                         bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    size_t rank() const { return shape().size(); }
    size_t size() const;
    size_t rows() const; // rank-2 only
    size_t cols() const; // rank-2 only
    double item() const; // single-element tensors

    std::span<const double> values() const;
    // Parameter updates only; mutating a tensor that sits inside a live graph
    // invalidates recorded intermediate values.
    std::span<double> values_mut();
    std::span<const double> grad() const;
    bool requires_grad() const;
    void zero_grad();

    std::shared_ptr<autograd::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<autograd::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<autograd::Node> node_;
};

// ------------------------------------------------------------------ ops

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor softmax_rows(const Tensor& x);
Tensor l2_normalize(const Tensor& v);      // rank-1
Tensor l2_normalize_rows(const Tensor& x); // rank-2
Tensor add_rowvec(const Tensor& x, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b); // rank-1 x rank-1 -> scalar

// Rows of `table` (vocab x d) selected by ids; backward scatter-adds.
Tensor embedding_gather(const Tensor& table, std::span<const uint32_t> ids);

// F per-field matrices (n x d) interleaved into one (n*F) x d token matrix,
// row i*F + f holding field f of example i.
Tensor stack_fields(const std::vector<Tensor>& fields);

// Block-diagonal products over groups of `rows_per_group` consecutive rows.
// nt: a (G*r x c), b (G*r x c) -> (G*r x r), per group A * B^T.
Tensor grouped_matmul_nt(const Tensor& a, const Tensor& b, size_t rows_per_group);
// nn: a (G*r x r), b (G*r x c) -> (G*r x c), per group A * B.
Tensor grouped_matmul_nn(const Tensor& a, const Tensor& b, size_t rows_per_group);

// logits[i][j] = dot(u.row(i), c.row(i*group + j)); u n x k, c (n*group) x k.
Tensor grouped_dot(const Tensor& u, const Tensor& c, size_t group);

// Mean over rows of -log softmax(row)[0]; the sampled-softmax objective with
// the positive fixed at column 0.
Tensor softmax_xent_col0(const Tensor& logits);

// Reverse-mode accumulation from a scalar loss into every reachable
// requires-grad node; the graph is released afterwards.
void backward(const Tensor& loss);

// Central-difference gradient check. Runs `f` once with gradients on, then
// perturbs each parameter coordinate by +-eps with gradients off. Returns the
// max relative error, |a - n| / max(|a|, |n|, 1e-6).
double finite_diff_check(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double eps);

} // namespace mvhan
