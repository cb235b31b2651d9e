#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "e2v/array.hpp"

namespace e2v::ag {

// Reverse-mode autodiff over f64 arrays. The graph is a dynamic tape of
// shared_ptr nodes; dropping the loss variable frees the whole tape.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Array value;
    Array grad;  // allocated on first use
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // accumulates into parents' grads

    Array& grad_buf();
    void accumulate(const double* g, std::size_t n);
};

// Global gradient mode. Inference paths wrap themselves in NoGradGuard so the
// tape never grows.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

Var constant(Array v);
Var make_param(Array v);
Var detach(const Var& x);

// Scalar root only. Accumulates into every reachable requires_grad node.
void backward(const Var& root);

// ---- arithmetic ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// broadcast multiplies over a (C,H,W) tensor
Var mul_channel(const Var& x, const Var& gate);   // gate: (C) or (C,1,1)
Var mul_spatial(const Var& x, const Var& map);    // map: (H,W) or (1,H,W)
Var add_channel(const Var& x, const Var& bias);   // bias: (C) or (C,1,1)

// ---- pointwise ----
Var relu(const Var& x);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
Var tanh_v(const Var& x);
Var exp_v(const Var& x);
Var abs_v(const Var& x);
Var square(const Var& x);

// ---- reductions ----
Var sum_all(const Var& x);   // -> shape {1}
Var mean_all(const Var& x);  // -> shape {1}

// ---- shape ----
Var reshape(const Var& x, std::vector<int> shape);
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int c0, int c1);  // [c0, c1)
// (C,H,W) -> (H*W, C), spatial position becomes the row index
Var flatten_spatial_rows(const Var& x);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);  // (n,k) x (k,m)
Var transpose(const Var& a);             // (n,m) -> (m,n)
Var softmax_rows(const Var& a);

// ---- conv / spatial ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv2d_depthwise(const Var& x, const Var& k, int pad);  // k: (C,kh,kw)
Var upsample_bilinear2x(const Var& x);
// flow: (2,H,W) backward convention, samples img at (x + u, y + v), border clamp.
// Differentiable in img; flow is data.
Var warp_bilinear(const Var& img, const Array& flow);
Var instance_norm(const Var& x, double eps = 1e-8);
// Per spatial position, scale the channel vector to unit L2 norm
// (epsilon-stabilized; a zero vector maps to zero).
Var channel_l2_normalize(const Var& x, double eps = 1e-12);
Var global_avg_pool(const Var& x);  // (C,H,W) -> (C,1,1)

double scalar(const Var& x);

}  // namespace e2v::ag
