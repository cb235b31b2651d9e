#include "e2v/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace e2v::ag {

namespace {
thread_local bool g_grad_enabled = true;

Var make_node(Array value, std::vector<Var> parents,
              std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool track = g_grad_enabled;
    if (track) {
        bool any = false;
        for (const auto& p : parents) any = any || (p && p->requires_grad);
        track = any;
    }
    if (track) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
}
}  // namespace

Array& Node::grad_buf() {
    if (grad.size() != value.size()) grad = Array(value.shape());
    return grad;
}

void Node::accumulate(const double* g, std::size_t n) {
    Array& gb = grad_buf();
    double* dst = gb.data();
    for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
}

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var constant(Array v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

Var make_param(Array v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

Var detach(const Var& x) { return constant(x->value); }

void backward(const Var& root) {
    if (root->value.size() != 1) {
        throw std::invalid_argument("backward: root must be scalar");
    }
    // Iterative post-order over the requires_grad subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (root->requires_grad) stack.push_back({root.get(), 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent == 0 && visited.count(f.n)) {
            stack.pop_back();
            continue;
        }
        if (f.next_parent < f.n->parents.size()) {
            Node* p = f.n->parents[f.next_parent++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                stack.push_back({p, 0});
            }
        } else {
            visited.insert(f.n);
            order.push_back(f.n);
            stack.pop_back();
        }
    }
    root->grad_buf()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad.size() == n->value.size()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Array out(a->value.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    return make_node(std::move(out), {a, b}, [a, b, n](Node& self) {
        if (a->requires_grad) a->accumulate(self.grad.data(), n);
        if (b->requires_grad) b->accumulate(self.grad.data(), n);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Array out(a->value.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
    return make_node(std::move(out), {a, b}, [a, b, n](Node& self) {
        if (a->requires_grad) a->accumulate(self.grad.data(), n);
        if (b->requires_grad) {
            Array& gb = b->grad_buf();
            for (std::size_t i = 0; i < n; ++i) gb[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Array out(a->value.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
    return make_node(std::move(out), {a, b}, [a, b, n](Node& self) {
        if (a->requires_grad) {
            Array& ga = a->grad_buf();
            for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Array& gb = b->grad_buf();
            for (std::size_t i = 0; i < n; ++i) gb[i] += self.grad[i] * a->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Array out(a->value.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = a->value[i] * s;
    return make_node(std::move(out), {a}, [a, s, n](Node& self) {
        Array& ga = a->grad_buf();
        for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Array out(a->value.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = a->value[i] + s;
    return make_node(std::move(out), {a}, [a, n](Node& self) {
        a->accumulate(self.grad.data(), n);
    });
}

namespace {
struct ChwDims {
    int c, h, w;
    std::size_t plane;
};
ChwDims chw(const Var& x, const char* op) {
    if (x->value.ndim() != 3) {
        throw std::invalid_argument(std::string(op) + ": expected (C,H,W)");
    }
    ChwDims d{x->value.dim(0), x->value.dim(1), x->value.dim(2), 0};
    d.plane = static_cast<std::size_t>(d.h) * d.w;
    return d;
}
}  // namespace

Var mul_channel(const Var& x, const Var& gate) {
    ChwDims d = chw(x, "mul_channel");
    if (gate->value.size() != static_cast<std::size_t>(d.c)) {
        throw std::invalid_argument("mul_channel: gate size mismatch");
    }
    Array out(x->value.shape());
    for (int c = 0; c < d.c; ++c) {
        const double g = gate->value[static_cast<std::size_t>(c)];
        const double* xin = x->value.data() + c * d.plane;
        double* o = out.data() + c * d.plane;
        for (std::size_t i = 0; i < d.plane; ++i) o[i] = xin[i] * g;
    }
    return make_node(std::move(out), {x, gate}, [x, gate, d](Node& self) {
        if (x->requires_grad) {
            Array& gx = x->grad_buf();
            for (int c = 0; c < d.c; ++c) {
                const double g = gate->value[static_cast<std::size_t>(c)];
                const double* go = self.grad.data() + c * d.plane;
                double* dst = gx.data() + c * d.plane;
                for (std::size_t i = 0; i < d.plane; ++i) dst[i] += go[i] * g;
            }
        }
        if (gate->requires_grad) {
            Array& gg = gate->grad_buf();
            for (int c = 0; c < d.c; ++c) {
                const double* go = self.grad.data() + c * d.plane;
                const double* xin = x->value.data() + c * d.plane;
                double s = 0.0;
                for (std::size_t i = 0; i < d.plane; ++i) s += go[i] * xin[i];
                gg[static_cast<std::size_t>(c)] += s;
            }
        }
    });
}

Var mul_spatial(const Var& x, const Var& map) {
    ChwDims d = chw(x, "mul_spatial");
    if (map->value.size() != d.plane) {
        throw std::invalid_argument("mul_spatial: map size mismatch");
    }
    Array out(x->value.shape());
    for (int c = 0; c < d.c; ++c) {
        const double* xin = x->value.data() + c * d.plane;
        const double* m = map->value.data();
        double* o = out.data() + c * d.plane;
        for (std::size_t i = 0; i < d.plane; ++i) o[i] = xin[i] * m[i];
    }
    return make_node(std::move(out), {x, map}, [x, map, d](Node& self) {
        if (x->requires_grad) {
            Array& gx = x->grad_buf();
            const double* m = map->value.data();
            for (int c = 0; c < d.c; ++c) {
                const double* go = self.grad.data() + c * d.plane;
                double* dst = gx.data() + c * d.plane;
                for (std::size_t i = 0; i < d.plane; ++i) dst[i] += go[i] * m[i];
            }
        }
        if (map->requires_grad) {
            Array& gm = map->grad_buf();
            for (int c = 0; c < d.c; ++c) {
                const double* go = self.grad.data() + c * d.plane;
                const double* xin = x->value.data() + c * d.plane;
                for (std::size_t i = 0; i < d.plane; ++i) gm[i] += go[i] * xin[i];
            }
        }
    });
}

Var add_channel(const Var& x, const Var& bias) {
    ChwDims d = chw(x, "add_channel");
    if (bias->value.size() != static_cast<std::size_t>(d.c)) {
        throw std::invalid_argument("add_channel: bias size mismatch");
    }
    Array out(x->value.shape());
    for (int c = 0; c < d.c; ++c) {
        const double b = bias->value[static_cast<std::size_t>(c)];
        const double* xin = x->value.data() + c * d.plane;
        double* o = out.data() + c * d.plane;
        for (std::size_t i = 0; i < d.plane; ++i) o[i] = xin[i] + b;
    }
    return make_node(std::move(out), {x, bias}, [x, bias, d](Node& self) {
        if (x->requires_grad) x->accumulate(self.grad.data(), self.grad.size());
        if (bias->requires_grad) {
            Array& gb = bias->grad_buf();
            for (int c = 0; c < d.c; ++c) {
                const double* go = self.grad.data() + c * d.plane;
                double s = 0.0;
                for (std::size_t i = 0; i < d.plane; ++i) s += go[i];
                gb[static_cast<std::size_t>(c)] += s;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// pointwise
// ---------------------------------------------------------------------------

namespace {
template <typename F, typename G>
Var pointwise(const Var& x, F fwd, G grad_of) {
    Array out(x->value.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x->value[i]);
    return make_node(std::move(out), {x}, [x, grad_of, n](Node& self) {
        Array& gx = x->grad_buf();
        for (std::size_t i = 0; i < n; ++i) {
            gx[i] += self.grad[i] * grad_of(x->value[i], self.value[i]);
        }
    });
}
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Var relu(const Var& x) {
    return pointwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x) {
    return pointwise(
        x,
        [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
        [](double v, double) {
            return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
                   v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
        });
}

Var sigmoid(const Var& x) {
    return pointwise(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh_v(const Var& x) {
    return pointwise(
        x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Var exp_v(const Var& x) {
    return pointwise(
        x, [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

Var abs_v(const Var& x) {
    return pointwise(
        x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& x) {
    return pointwise(
        x, [](double v) { return v * v; },
        [](double v, double) { return 2.0 * v; });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var sum_all(const Var& x) {
    Array out({1});
    out[0] = x->value.sum();
    return make_node(std::move(out), {x}, [x](Node& self) {
        const double g = self.grad[0];
        Array& gx = x->grad_buf();
        const std::size_t n = gx.size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
}

Var mean_all(const Var& x) {
    const double inv = 1.0 / static_cast<double>(x->value.size());
    Array out({1});
    out[0] = x->value.sum() * inv;
    return make_node(std::move(out), {x}, [x, inv](Node& self) {
        const double g = self.grad[0] * inv;
        Array& gx = x->grad_buf();
        const std::size_t n = gx.size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& x, std::vector<int> shape) {
    if (shape_numel(shape) != x->value.size()) {
        throw std::invalid_argument("reshape: element count mismatch");
    }
    Array out = Array::from_data(std::move(shape), x->value.vec());
    return make_node(std::move(out), {x}, [x](Node& self) {
        x->accumulate(self.grad.data(), self.grad.size());
    });
}

Var concat_channels(const Var& a, const Var& b) {
    ChwDims da = chw(a, "concat_channels");
    ChwDims db = chw(b, "concat_channels");
    if (da.h != db.h || da.w != db.w) {
        throw std::invalid_argument("concat_channels: spatial mismatch");
    }
    Array out({da.c + db.c, da.h, da.w});
    std::copy(a->value.data(), a->value.data() + a->value.size(), out.data());
    std::copy(b->value.data(), b->value.data() + b->value.size(),
              out.data() + a->value.size());
    const std::size_t na = a->value.size();
    const std::size_t nb = b->value.size();
    return make_node(std::move(out), {a, b}, [a, b, na, nb](Node& self) {
        if (a->requires_grad) a->accumulate(self.grad.data(), na);
        if (b->requires_grad) b->accumulate(self.grad.data() + na, nb);
    });
}

Var slice_channels(const Var& x, int c0, int c1) {
    ChwDims d = chw(x, "slice_channels");
    if (c0 < 0 || c1 > d.c || c0 >= c1) {
        throw std::invalid_argument("slice_channels: bad range");
    }
    Array out({c1 - c0, d.h, d.w});
    std::copy(x->value.data() + c0 * d.plane, x->value.data() + c1 * d.plane,
              out.data());
    return make_node(std::move(out), {x}, [x, c0, d](Node& self) {
        Array& gx = x->grad_buf();
        double* dst = gx.data() + c0 * d.plane;
        const std::size_t n = self.grad.size();
        const double* g = self.grad.data();
        for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
    });
}

Var flatten_spatial_rows(const Var& x) {
    ChwDims d = chw(x, "flatten_spatial_rows");
    const int hw = d.h * d.w;
    Array out({hw, d.c});
    for (int c = 0; c < d.c; ++c) {
        const double* xin = x->value.data() + c * d.plane;
        for (int i = 0; i < hw; ++i) out.at(i, c) = xin[i];
    }
    return make_node(std::move(out), {x}, [x, d, hw](Node& self) {
        Array& gx = x->grad_buf();
        for (int c = 0; c < d.c; ++c) {
            double* dst = gx.data() + c * d.plane;
            for (int i = 0; i < hw; ++i) dst[i] += self.grad.at(i, c);
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

namespace {
// C(n,m) += A(n,k) * B(k,m)
void mm_acc(const double* A, const double* B, double* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* arow = A + static_cast<std::size_t>(i) * k;
        double* crow = C + static_cast<std::size_t>(i) * m;
        for (int l = 0; l < k; ++l) {
            const double a = arow[l];
            const double* brow = B + static_cast<std::size_t>(l) * m;
            for (int j = 0; j < m; ++j) crow[j] += a * brow[j];
        }
    }
}
// C(n,m) += A(n,k) * B(m,k)^T
void mm_acc_bt(const double* A, const double* B, double* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* arow = A + static_cast<std::size_t>(i) * k;
        double* crow = C + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* brow = B + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int l = 0; l < k; ++l) s += arow[l] * brow[l];
            crow[j] += s;
        }
    }
}
// C(k,m) += A(n,k)^T * B(n,m)
void mm_acc_at(const double* A, const double* B, double* C, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const double* arow = A + static_cast<std::size_t>(i) * k;
        const double* brow = B + static_cast<std::size_t>(i) * m;
        for (int l = 0; l < k; ++l) {
            const double a = arow[l];
            double* crow = C + static_cast<std::size_t>(l) * m;
            for (int j = 0; j < m; ++j) crow[j] += a * brow[j];
        }
    }
}
}  // namespace

Var matmul(const Var& a, const Var& b) {
    if (a->value.ndim() != 2 || b->value.ndim() != 2 ||
        a->value.dim(1) != b->value.dim(0)) {
        throw std::invalid_argument("matmul: shape mismatch");
    }
    const int n = a->value.dim(0), k = a->value.dim(1), m = b->value.dim(1);
    Array out({n, m});
    mm_acc(a->value.data(), b->value.data(), out.data(), n, k, m);
    return make_node(std::move(out), {a, b}, [a, b, n, k, m](Node& self) {
        if (a->requires_grad) {
            mm_acc_bt(self.grad.data(), b->value.data(), a->grad_buf().data(), n, m, k);
        }
        if (b->requires_grad) {
            mm_acc_at(a->value.data(), self.grad.data(), b->grad_buf().data(), n, k, m);
        }
    });
}

Var transpose(const Var& a) {
    if (a->value.ndim() != 2) throw std::invalid_argument("transpose: expected 2-d");
    const int n = a->value.dim(0), m = a->value.dim(1);
    Array out({m, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(j, i) = a->value.at(i, j);
    return make_node(std::move(out), {a}, [a, n, m](Node& self) {
        Array& ga = a->grad_buf();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) ga.at(i, j) += self.grad.at(j, i);
    });
}

Var softmax_rows(const Var& a) {
    if (a->value.ndim() != 2) throw std::invalid_argument("softmax_rows: expected 2-d");
    const int n = a->value.dim(0), m = a->value.dim(1);
    Array out({n, m});
    for (int i = 0; i < n; ++i) {
        double mx = a->value.at(i, 0);
        for (int j = 1; j < m; ++j) mx = std::max(mx, a->value.at(i, j));
        double s = 0.0;
        for (int j = 0; j < m; ++j) {
            const double e = std::exp(a->value.at(i, j) - mx);
            out.at(i, j) = e;
            s += e;
        }
        const double inv = 1.0 / s;
        for (int j = 0; j < m; ++j) out.at(i, j) *= inv;
    }
    return make_node(std::move(out), {a}, [a, n, m](Node& self) {
        Array& ga = a->grad_buf();
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < m; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
            for (int j = 0; j < m; ++j) {
                ga.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// conv / spatial
// ---------------------------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    ChwDims dx = chw(x, "conv2d");
    if (w->value.ndim() != 4 || w->value.dim(1) != dx.c) {
        throw std::invalid_argument("conv2d: weight shape mismatch");
    }
    const int cout = w->value.dim(0), cin = dx.c;
    const int kh = w->value.dim(2), kw = w->value.dim(3);
    const int ho = (dx.h + 2 * pad - kh) / stride + 1;
    const int wo = (dx.w + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: output too small");
    if (b && b->value.size() != static_cast<std::size_t>(cout)) {
        throw std::invalid_argument("conv2d: bias size mismatch");
    }

    Array out({cout, ho, wo});
    const std::size_t oplane = static_cast<std::size_t>(ho) * wo;
    const int H = dx.h, W = dx.w, S = stride, P = pad;

    for (int co = 0; co < cout; ++co) {
        double* oc = out.data() + co * oplane;
        if (b) {
            const double bias = b->value[static_cast<std::size_t>(co)];
            for (std::size_t i = 0; i < oplane; ++i) oc[i] = bias;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const double* xc = x->value.data() + ci * dx.plane;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double wv = w->value.at(co, ci, ky, kx);
                    if (wv == 0.0) continue;
                    // valid output column range for this tap
                    int ox0 = std::max(0, (P - kx + S - 1) / S);
                    const int ix_max = W - 1 - kx + P;
                    int ox1 = std::min(wo - 1, ix_max >= 0 ? ix_max / S : -1);
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * S + ky - P;
                        if (iy < 0 || iy >= H) continue;
                        const double* xrow = xc + static_cast<std::size_t>(iy) * W;
                        double* orow = oc + static_cast<std::size_t>(oy) * wo;
                        int ix = ox0 * S + kx - P;
                        for (int ox = ox0; ox <= ox1; ++ox, ix += S) {
                            orow[ox] += wv * xrow[ix];
                        }
                    }
                }
            }
        }
    }

    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_node(
        std::move(out), std::move(parents),
        [x, w, b, cout, cin, kh, kw, ho, wo, H, W, S, P, dx, oplane](Node& self) {
            const Array& go = self.grad;
            if (x->requires_grad) {
                Array& gx = x->grad_buf();
                for (int ci = 0; ci < cin; ++ci) {
                    double* gxc = gx.data() + ci * dx.plane;
                    for (int co = 0; co < cout; ++co) {
                        const double* goc = go.data() + co * oplane;
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                const double wv = w->value.at(co, ci, ky, kx);
                                if (wv == 0.0) continue;
                                int ox0 = std::max(0, (P - kx + S - 1) / S);
                                const int ix_max = W - 1 - kx + P;
                                int ox1 = std::min(wo - 1, ix_max >= 0 ? ix_max / S : -1);
                                for (int oy = 0; oy < ho; ++oy) {
                                    const int iy = oy * S + ky - P;
                                    if (iy < 0 || iy >= H) continue;
                                    double* gxrow = gxc + static_cast<std::size_t>(iy) * W;
                                    const double* gorow =
                                        goc + static_cast<std::size_t>(oy) * wo;
                                    int ix = ox0 * S + kx - P;
                                    for (int ox = ox0; ox <= ox1; ++ox, ix += S) {
                                        gxrow[ix] += wv * gorow[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if (w->requires_grad) {
                Array& gw = w->grad_buf();
                for (int co = 0; co < cout; ++co) {
                    const double* goc = go.data() + co * oplane;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* xc = x->value.data() + ci * dx.plane;
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                int ox0 = std::max(0, (P - kx + S - 1) / S);
                                const int ix_max = W - 1 - kx + P;
                                int ox1 = std::min(wo - 1, ix_max >= 0 ? ix_max / S : -1);
                                double s = 0.0;
                                for (int oy = 0; oy < ho; ++oy) {
                                    const int iy = oy * S + ky - P;
                                    if (iy < 0 || iy >= H) continue;
                                    const double* xrow =
                                        xc + static_cast<std::size_t>(iy) * W;
                                    const double* gorow =
                                        goc + static_cast<std::size_t>(oy) * wo;
                                    int ix = ox0 * S + kx - P;
                                    for (int ox = ox0; ox <= ox1; ++ox, ix += S) {
                                        s += gorow[ox] * xrow[ix];
                                    }
                                }
                                gw.at(co, ci, ky, kx) += s;
                            }
                        }
                    }
                }
            }
            if (b && b->requires_grad) {
                Array& gb = b->grad_buf();
                for (int co = 0; co < cout; ++co) {
                    const double* goc = go.data() + co * oplane;
                    double s = 0.0;
                    for (std::size_t i = 0; i < oplane; ++i) s += goc[i];
                    gb[static_cast<std::size_t>(co)] += s;
                }
            }
        });
}

Var conv2d_depthwise(const Var& x, const Var& k, int pad) {
    ChwDims d = chw(x, "conv2d_depthwise");
    if (k->value.ndim() != 3 || k->value.dim(0) != d.c) {
        throw std::invalid_argument("conv2d_depthwise: kernel shape mismatch");
    }
    const int kh = k->value.dim(1), kw = k->value.dim(2);
    const int ho = d.h + 2 * pad - kh + 1;
    const int wo = d.w + 2 * pad - kw + 1;
    if (ho <= 0 || wo <= 0) {
        throw std::invalid_argument("conv2d_depthwise: output too small");
    }
    Array out({d.c, ho, wo});
    const std::size_t oplane = static_cast<std::size_t>(ho) * wo;
    for (int c = 0; c < d.c; ++c) {
        const double* xc = x->value.data() + c * d.plane;
        double* oc = out.data() + c * oplane;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const double wv = k->value.at(c, ky, kx);
                if (wv == 0.0) continue;
                int ox0 = std::max(0, pad - kx);
                int ox1 = std::min(wo - 1, d.w - 1 - kx + pad);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= d.h) continue;
                    const double* xrow = xc + static_cast<std::size_t>(iy) * d.w;
                    double* orow = oc + static_cast<std::size_t>(oy) * wo;
                    for (int ox = ox0; ox <= ox1; ++ox) {
                        orow[ox] += wv * xrow[ox + kx - pad];
                    }
                }
            }
        }
    }
    return make_node(std::move(out), {x, k},
                     [x, k, d, kh, kw, ho, wo, pad, oplane](Node& self) {
        for (int c = 0; c < d.c; ++c) {
            const double* goc = self.grad.data() + c * oplane;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double wv = k->value.at(c, ky, kx);
                    int ox0 = std::max(0, pad - kx);
                    int ox1 = std::min(wo - 1, d.w - 1 - kx + pad);
                    double s = 0.0;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy + ky - pad;
                        if (iy < 0 || iy >= d.h) continue;
                        const double* gorow = goc + static_cast<std::size_t>(oy) * wo;
                        const double* xrow =
                            x->value.data() + c * d.plane +
                            static_cast<std::size_t>(iy) * d.w;
                        double* gxrow =
                            x->requires_grad
                                ? x->grad_buf().data() + c * d.plane +
                                      static_cast<std::size_t>(iy) * d.w
                                : nullptr;
                        for (int ox = ox0; ox <= ox1; ++ox) {
                            const int ix = ox + kx - pad;
                            s += gorow[ox] * xrow[ix];
                            if (gxrow) gxrow[ix] += wv * gorow[ox];
                        }
                    }
                    if (k->requires_grad) k->grad_buf().at(c, ky, kx) += s;
                }
            }
        }
    });
}

Var upsample_bilinear2x(const Var& x) {
    ChwDims d = chw(x, "upsample_bilinear2x");
    const int ho = d.h * 2, wo = d.w * 2;
    Array out({d.c, ho, wo});
    // source coordinate for output pixel i: (i + 0.5) / 2 - 0.5
    auto src = [](int i) { return (i + 0.5) * 0.5 - 0.5; };
    for (int c = 0; c < d.c; ++c) {
        const double* xc = x->value.data() + c * d.plane;
        double* oc = out.data() + c * static_cast<std::size_t>(ho) * wo;
        for (int oy = 0; oy < ho; ++oy) {
            const double sy = src(oy);
            int y0 = static_cast<int>(std::floor(sy));
            double fy = sy - y0;
            int y0c = std::clamp(y0, 0, d.h - 1);
            int y1c = std::clamp(y0 + 1, 0, d.h - 1);
            for (int ox = 0; ox < wo; ++ox) {
                const double sx = src(ox);
                int x0 = static_cast<int>(std::floor(sx));
                double fx = sx - x0;
                int x0c = std::clamp(x0, 0, d.w - 1);
                int x1c = std::clamp(x0 + 1, 0, d.w - 1);
                oc[static_cast<std::size_t>(oy) * wo + ox] =
                    (1 - fy) * ((1 - fx) * xc[static_cast<std::size_t>(y0c) * d.w + x0c] +
                                fx * xc[static_cast<std::size_t>(y0c) * d.w + x1c]) +
                    fy * ((1 - fx) * xc[static_cast<std::size_t>(y1c) * d.w + x0c] +
                          fx * xc[static_cast<std::size_t>(y1c) * d.w + x1c]);
            }
        }
    }
    return make_node(std::move(out), {x}, [x, d, ho, wo](Node& self) {
        auto src = [](int i) { return (i + 0.5) * 0.5 - 0.5; };
        Array& gx = x->grad_buf();
        for (int c = 0; c < d.c; ++c) {
            double* gxc = gx.data() + c * d.plane;
            const double* goc =
                self.grad.data() + c * static_cast<std::size_t>(ho) * wo;
            for (int oy = 0; oy < ho; ++oy) {
                const double sy = src(oy);
                int y0 = static_cast<int>(std::floor(sy));
                double fy = sy - y0;
                int y0c = std::clamp(y0, 0, d.h - 1);
                int y1c = std::clamp(y0 + 1, 0, d.h - 1);
                for (int ox = 0; ox < wo; ++ox) {
                    const double sx = src(ox);
                    int x0 = static_cast<int>(std::floor(sx));
                    double fx = sx - x0;
                    int x0c = std::clamp(x0, 0, d.w - 1);
                    int x1c = std::clamp(x0 + 1, 0, d.w - 1);
                    const double g = goc[static_cast<std::size_t>(oy) * wo + ox];
                    gxc[static_cast<std::size_t>(y0c) * d.w + x0c] += (1 - fy) * (1 - fx) * g;
                    gxc[static_cast<std::size_t>(y0c) * d.w + x1c] += (1 - fy) * fx * g;
                    gxc[static_cast<std::size_t>(y1c) * d.w + x0c] += fy * (1 - fx) * g;
                    gxc[static_cast<std::size_t>(y1c) * d.w + x1c] += fy * fx * g;
                }
            }
        }
    });
}

namespace {
struct WarpDims {
    int c, h, w;
};
WarpDims warp_dims(const Var& img) {
    if (img->value.ndim() == 2) return {1, img->value.dim(0), img->value.dim(1)};
    if (img->value.ndim() == 3)
        return {img->value.dim(0), img->value.dim(1), img->value.dim(2)};
    throw std::invalid_argument("warp_bilinear: expected (H,W) or (C,H,W)");
}
}  // namespace

Var warp_bilinear(const Var& img, const Array& flow) {
    WarpDims d = warp_dims(img);
    if (flow.ndim() != 3 || flow.dim(0) != 2 || flow.dim(1) != d.h ||
        flow.dim(2) != d.w) {
        throw std::invalid_argument("warp_bilinear: flow shape mismatch");
    }
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    Array out(img->value.shape());
    // Sample positions are the same for every channel; precompute them.
    std::vector<int> ix0(plane), iy0(plane);
    std::vector<double> fx(plane), fy(plane);
    for (int y = 0; y < d.h; ++y) {
        for (int x = 0; x < d.w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * d.w + x;
            double sx = x + flow.at(0, y, x);
            double sy = y + flow.at(1, y, x);
            sx = std::clamp(sx, 0.0, static_cast<double>(d.w - 1));
            sy = std::clamp(sy, 0.0, static_cast<double>(d.h - 1));
            int x0 = std::min(static_cast<int>(std::floor(sx)), d.w - 2 >= 0 ? d.w - 2 : 0);
            int y0 = std::min(static_cast<int>(std::floor(sy)), d.h - 2 >= 0 ? d.h - 2 : 0);
            x0 = std::max(x0, 0);
            y0 = std::max(y0, 0);
            ix0[i] = x0;
            iy0[i] = y0;
            fx[i] = sx - x0;
            fy[i] = sy - y0;
        }
    }
    const int w1 = d.w > 1 ? 1 : 0;
    const int h1 = d.h > 1 ? 1 : 0;
    for (int c = 0; c < d.c; ++c) {
        const double* src = img->value.data() + c * plane;
        double* dst = out.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t base = static_cast<std::size_t>(iy0[i]) * d.w + ix0[i];
            const double a = src[base];
            const double bb = src[base + w1];
            const double cc = src[base + static_cast<std::size_t>(h1) * d.w];
            const double dd = src[base + static_cast<std::size_t>(h1) * d.w + w1];
            dst[i] = (1 - fy[i]) * ((1 - fx[i]) * a + fx[i] * bb) +
                     fy[i] * ((1 - fx[i]) * cc + fx[i] * dd);
        }
    }
    return make_node(std::move(out), {img},
                     [img, d, plane, ix0, iy0, fx, fy, w1, h1](Node& self) {
        Array& gi = img->grad_buf();
        for (int c = 0; c < d.c; ++c) {
            double* g = gi.data() + c * plane;
            const double* go = self.grad.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const std::size_t base =
                    static_cast<std::size_t>(iy0[i]) * d.w + ix0[i];
                g[base] += (1 - fy[i]) * (1 - fx[i]) * go[i];
                g[base + w1] += (1 - fy[i]) * fx[i] * go[i];
                g[base + static_cast<std::size_t>(h1) * d.w] += fy[i] * (1 - fx[i]) * go[i];
                g[base + static_cast<std::size_t>(h1) * d.w + w1] += fy[i] * fx[i] * go[i];
            }
        }
    });
}

Var instance_norm(const Var& x, double eps) {
    ChwDims d = chw(x, "instance_norm");
    Array out(x->value.shape());
    std::vector<double> inv_std(static_cast<std::size_t>(d.c));
    const double invn = 1.0 / static_cast<double>(d.plane);
    for (int c = 0; c < d.c; ++c) {
        const double* xc = x->value.data() + c * d.plane;
        double mean = 0.0;
        for (std::size_t i = 0; i < d.plane; ++i) mean += xc[i];
        mean *= invn;
        double var = 0.0;
        for (std::size_t i = 0; i < d.plane; ++i) {
            const double dv = xc[i] - mean;
            var += dv * dv;
        }
        var *= invn;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(c)] = is;
        double* oc = out.data() + c * d.plane;
        for (std::size_t i = 0; i < d.plane; ++i) oc[i] = (xc[i] - mean) * is;
    }
    return make_node(std::move(out), {x}, [x, d, inv_std, invn](Node& self) {
        Array& gx = x->grad_buf();
        for (int c = 0; c < d.c; ++c) {
            const double* y = self.value.data() + c * d.plane;
            const double* gy = self.grad.data() + c * d.plane;
            double* dst = gx.data() + c * d.plane;
            double sum_gy = 0.0, sum_gy_y = 0.0;
            for (std::size_t i = 0; i < d.plane; ++i) {
                sum_gy += gy[i];
                sum_gy_y += gy[i] * y[i];
            }
            const double mg = sum_gy * invn;
            const double mgy = sum_gy_y * invn;
            const double is = inv_std[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < d.plane; ++i) {
                dst[i] += is * (gy[i] - mg - y[i] * mgy);
            }
        }
    });
}

Var channel_l2_normalize(const Var& x, double eps) {
    ChwDims d = chw(x, "channel_l2_normalize");
    Array out(x->value.shape());
    std::vector<double> inv_norm(d.plane);
    const double eps_sq = eps * eps;
    for (std::size_t i = 0; i < d.plane; ++i) {
        double s = eps_sq;
        for (int c = 0; c < d.c; ++c) {
            const double v = x->value[c * d.plane + i];
            s += v * v;
        }
        inv_norm[i] = 1.0 / std::sqrt(s);
    }
    for (int c = 0; c < d.c; ++c) {
        const double* xc = x->value.data() + c * d.plane;
        double* oc = out.data() + c * d.plane;
        for (std::size_t i = 0; i < d.plane; ++i) oc[i] = xc[i] * inv_norm[i];
    }
    return make_node(std::move(out), {x}, [x, d, inv_norm](Node& self) {
        Array& gx = x->grad_buf();
        for (std::size_t i = 0; i < d.plane; ++i) {
            double dot = 0.0;
            for (int c = 0; c < d.c; ++c) {
                dot += self.value[c * d.plane + i] * self.grad[c * d.plane + i];
            }
            for (int c = 0; c < d.c; ++c) {
                gx[c * d.plane + i] +=
                    (self.grad[c * d.plane + i] - self.value[c * d.plane + i] * dot) *
                    inv_norm[i];
            }
        }
    });
}

Var global_avg_pool(const Var& x) {
    ChwDims d = chw(x, "global_avg_pool");
    Array out({d.c, 1, 1});
    const double invn = 1.0 / static_cast<double>(d.plane);
    for (int c = 0; c < d.c; ++c) {
        const double* xc = x->value.data() + c * d.plane;
        double s = 0.0;
        for (std::size_t i = 0; i < d.plane; ++i) s += xc[i];
        out[static_cast<std::size_t>(c)] = s * invn;
    }
    return make_node(std::move(out), {x}, [x, d, invn](Node& self) {
        Array& gx = x->grad_buf();
        for (int c = 0; c < d.c; ++c) {
            const double g = self.grad[static_cast<std::size_t>(c)] * invn;
            double* dst = gx.data() + c * d.plane;
            for (std::size_t i = 0; i < d.plane; ++i) dst[i] += g;
        }
    });
}

double scalar(const Var& x) {
    if (x->value.size() != 1) throw std::invalid_argument("scalar: not a scalar");
    return x->value[0];
}

}  // namespace e2v::ag
