#include "e2v/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace e2v::nn {

Var ParamStore::add(const std::string& name, Array init) {
    for (const auto& [n, v] : items_) {
        if (n == name) throw std::invalid_argument("duplicate parameter: " + name);
    }
    Var p = ag::make_param(std::move(init));
    items_.emplace_back(name, p);
    return p;
}

Var ParamStore::find(const std::string& name) const {
    for (const auto& [n, v] : items_) {
        if (n == name) return v;
    }
    throw std::invalid_argument("unknown parameter: " + name);
}

void ParamStore::zero_grad() {
    for (auto& [n, v] : items_) {
        if (v->grad.size() == v->value.size()) v->grad.fill(0.0);
    }
}

std::size_t ParamStore::total_elements() const {
    std::size_t s = 0;
    for (const auto& [n, v] : items_) s += v->value.size();
    return s;
}

Array he_init(std::vector<int> shape, int fan_in, Rng& rng) {
    Array a(std::move(shape));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = sd * rng.gaussian();
    return a;
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout,
               int ksize, int stride_, Rng& rng)
    : stride(stride_), pad(ksize / 2) {
    w = ps.add(name + ".w", he_init({cout, cin, ksize, ksize}, cin * ksize * ksize, rng));
    b = ps.add(name + ".b", Array({cout}));
}

Var Conv2d::forward(const Var& x) const { return ag::conv2d(x, w, b, stride, pad); }

ConvLSTMCell::ConvLSTMCell(ParamStore& ps, const std::string& name, int cin,
                           int chidden, Rng& rng)
    : gates(ps, name + ".gates", cin + chidden, 4 * chidden, 3, 1, rng),
      hidden(chidden) {}

std::pair<Var, Var> ConvLSTMCell::forward(const Var& x, const Var& h,
                                          const Var& c) const {
    Var g = gates.forward(ag::concat_channels(x, h));
    Var i = ag::sigmoid(ag::slice_channels(g, 0, hidden));
    Var f = ag::sigmoid(ag::slice_channels(g, hidden, 2 * hidden));
    Var z = ag::tanh_v(ag::slice_channels(g, 2 * hidden, 3 * hidden));
    Var o = ag::sigmoid(ag::slice_channels(g, 3 * hidden, 4 * hidden));
    Var c_next = ag::add(ag::mul(f, c), ag::mul(i, z));
    Var h_next = ag::mul(o, ag::tanh_v(c_next));
    return {h_next, c_next};
}

ResidualBlock::ResidualBlock(ParamStore& ps, const std::string& name, int ch,
                             Rng& rng)
    : c1(ps, name + ".c1", ch, ch, 3, 1, rng), c2(ps, name + ".c2", ch, ch, 3, 1, rng) {}

Var ResidualBlock::forward(const Var& x) const {
    return ag::add(x, c2.forward(ag::relu(c1.forward(x))));
}

Adam::Adam(ParamStore& ps, double lr, double beta1, double beta2, double eps,
           double clip_norm)
    : ps_(ps), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      clip_norm_(clip_norm) {
    for (const auto& [n, p] : ps.items()) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::zero_grad() { ps_.zero_grad(); }

void Adam::step() {
    // global grad norm over all parameters
    double sq = 0.0;
    for (const auto& [n, p] : ps_.items()) {
        if (p->grad.size() != p->value.size()) continue;
        for (std::size_t i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
    }
    last_grad_norm_ = std::sqrt(sq);
    double scale = 1.0;
    if (clip_norm_ > 0.0 && last_grad_norm_ > clip_norm_) {
        scale = clip_norm_ / last_grad_norm_;
    }

    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    std::size_t k = 0;
    for (const auto& [n, p] : ps_.items()) {
        Array& m = m_[k];
        Array& v = v_[k];
        ++k;
        if (p->grad.size() != p->value.size()) continue;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i] * scale;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace e2v::nn
