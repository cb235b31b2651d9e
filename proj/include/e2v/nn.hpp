#pragma once

#include <string>
#include <utility>
#include <vector>

#include "e2v/autograd.hpp"
#include "e2v/rng.hpp"

namespace e2v::nn {

using ag::Var;

// Named parameter registry. Registration order is fixed by construction
// order, which keeps checkpoints and optimizer state deterministic.
class ParamStore {
public:
    Var add(const std::string& name, Array init);
    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
    Var find(const std::string& name) const;
    void zero_grad();
    std::size_t total_elements() const;

private:
    std::vector<std::pair<std::string, Var>> items_;
};

Array he_init(std::vector<int> shape, int fan_in, Rng& rng);

struct Conv2d {
    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int ksize,
           int stride, Rng& rng);
    Var forward(const Var& x) const;
    Var w, b;
    int stride = 1, pad = 0;
};

// Convolutional LSTM cell, kernel 3. Gate order: input, forget, cell, output.
struct ConvLSTMCell {
    ConvLSTMCell() = default;
    ConvLSTMCell(ParamStore& ps, const std::string& name, int cin, int chidden,
                 Rng& rng);
    // returns (h, c)
    std::pair<Var, Var> forward(const Var& x, const Var& h, const Var& c) const;
    Conv2d gates;
    int hidden = 0;
};

struct ResidualBlock {
    ResidualBlock() = default;
    ResidualBlock(ParamStore& ps, const std::string& name, int ch, Rng& rng);
    Var forward(const Var& x) const;
    Conv2d c1, c2;
};

// Adam with global-norm gradient clipping.
class Adam {
public:
    Adam(ParamStore& ps, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8, double clip_norm = 1.0);
    void step();
    void zero_grad();
    double last_grad_norm() const { return last_grad_norm_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    ParamStore& ps_;
    double lr_, beta1_, beta2_, eps_, clip_norm_;
    long step_count_ = 0;
    double last_grad_norm_ = 0.0;
    std::vector<Array> m_, v_;
};

}  // namespace e2v::nn
