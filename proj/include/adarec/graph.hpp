#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adarec/rng.hpp"
#include "adarec/tensor.hpp"

namespace adarec {

class Node;
using Var = std::shared_ptr<Node>;

// One vertex of the computation DAG. Children hold shared_ptrs to parents,
// so a graph is kept alive by its root and freed when the root goes away.
// Values are immutable after construction; backward only writes `grad`.
class Node {
public:
    Tensor value;
    Tensor grad;  // allocated on first accumulation during backward
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // pulls this->grad into parents
    const char* op = "leaf";

    bool has_grad() const { return !grad.data.empty(); }
    void accumulate(const Tensor& g);
};

Var constant(Tensor v);
Var param(Tensor v);  // leaf with requires_grad

// ---- primitives -----------------------------------------------------------

// Same-shape elementwise add; also accepts rank-2 + rank-1 row broadcast.
Var add(const Var& a, const Var& b);
Var add_n(const std::vector<Var>& xs);
Var scale(const Var& a, double c);
// Multiply by a scalar-valued node (e.g. a learnable residual coefficient).
Var scale_by(const Var& a, const Var& s);
Var cmul(const Var& a, const Tensor& c);  // elementwise by constant tensor
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a . b^T
Var embedding_gather(const Var& table, const std::vector<int>& ids);
// Length-preserving 1-D convolution. x: [t x d_in], kernel: [k x d_in x d_out],
// bias: [d_out]. pad_left + pad_right must equal (k-1)*dilation.
Var conv1d(const Var& x, const Var& kernel, const Var& bias, int dilation,
           int pad_left, int pad_right);
Var causal_dilated_conv1d(const Var& x, const Var& kernel, const Var& bias,
                          int dilation);
Var conv1d_same(const Var& x, const Var& kernel, const Var& bias);
Var relu(const Var& x);
// Normalizes over the last axis with epsilon 1e-5 inside the square root.
Var layer_norm(const Var& x, const Var& gain, const Var& bias);
Var softmax(const Var& x);  // last axis
Var vlog(const Var& x);
Var mse(const Var& a, const Var& b);
// Row-wise KL(p || q) averaged over rows; q floor-clipped at 1e-12.
Var kl_divergence(const Var& p, const Var& q);
// Same but rows weighted (weights >= 0); average over sum of weights.
Var kl_divergence_rows(const Var& p, const Var& q,
                       const std::vector<double>& row_weights);
// Inverted dropout; rate 0 is the identity and draws nothing from rng.
Var dropout(const Var& x, double rate, Rng& rng);
// Backward-looking window pools preserving length. Max ignores the padded
// region; avg divides the backward-window sum by k (zero padding).
Var max_pool1d(const Var& x, int k);
Var avg_pool1d(const Var& x, int k);
// Scaled dot-product attention with causal mask. q,k,v: [t x d_h].
// key_valid, when given, marks key positions to exclude (0 = masked out).
Var attention(const Var& q, const Var& k, const Var& v,
              const std::vector<double>* key_valid = nullptr);
Var sum(const Var& x);
Var mean(const Var& x);
// Weighted-row mean of -log(probs[row, target]); probs floor-clipped 1e-12.
Var nll_rows(const Var& probs, const std::vector<int>& targets,
             const std::vector<double>& row_weights);
// sum_i w_i * xs_i with w a rank-1 node; exact-zero weights skip their term
// in the forward value so a one-hot w reproduces the chosen input bitwise.
Var weighted_sum(const std::vector<Var>& xs, const Var& w);
Var dot(const Var& a, const Var& b);  // rank-1 . rank-1 -> scalar
// Forward: one-hot of argmax(y); backward: identity into y.
Var straight_through(const Var& y);
Var slice_cols(const Var& x, int c0, int c1);
Var concat_cols(const std::vector<Var>& xs);
// Multiply each row of x by a 0/1 constant (padding-position masking).
Var mask_rows(const Var& x, const std::vector<double>& row_mask);

// ---- backward and checks --------------------------------------------------

// Reverse-topological accumulation from a scalar root. Deterministic for a
// fixed graph. Gradients accumulate; callers zero leaf grads between steps.
void backward(const Var& root);
// Leaf parameters reachable from root, in deterministic discovery order.
std::vector<Var> parameters(const Var& root);
void zero_grad(const std::vector<Var>& params);

// Central finite differences against the analytic gradient of fn(point).
// Returns max over components of |a - n| / max(|a|, |n|, 1e-8).
// Non-finite fn values at perturbed points raise NumericError.
double finite_difference_check(const std::function<Var(const Var&)>& fn,
                               const Tensor& point, double eps);

// ---- op library ------------------------------------------------------------

// One gradient-check instance: a probed input plus a scalar-loss builder
// with every other operand baked in.
struct GradCheckCase {
    std::string label;
    Tensor point;
    std::function<Var(const Var&)> build;
};

struct OpInfo {
    std::string name;
    // Fresh random check cases (one per differentiable input of the op).
    std::function<std::vector<GradCheckCase>(Rng&)> make_cases;
};

// The differentiable primitive set exposed to the rest of the system.
const std::vector<OpInfo>& op_library();

}  // namespace adarec
