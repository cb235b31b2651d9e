#include <doctest.h>

#include <cmath>

#include "e2v/autograd.hpp"
#include "e2v/nn.hpp"
#include "test_support.hpp"

using namespace e2v;
using ag::Var;
using test_support::grad_check;
using test_support::random_array;

namespace {

// FD-checks one op applied to randomly-initialized parameter inputs.
void check_op(const std::function<Var(const std::vector<Var>&)>& op,
              std::vector<std::vector<int>> shapes, std::uint64_t seed,
              double tol = 1e-3) {
    Rng rng(seed);
    std::vector<Var> params;
    for (auto& s : shapes) params.push_back(ag::make_param(random_array(s, rng)));
    auto build = [&]() { return ag::mean_all(ag::square(op(params))); };
    Rng pick(seed ^ 0xabcdef);
    auto result = grad_check(params, build, pick, 8);
    CHECK(result.max_rel <= tol);
}

}  // namespace

TEST_CASE("pointwise and arithmetic op gradients") {
    check_op([](const std::vector<Var>& p) { return ag::add(p[0], p[1]); },
             {{3, 4, 4}, {3, 4, 4}}, 1);
    check_op([](const std::vector<Var>& p) { return ag::sub(p[0], p[1]); },
             {{3, 4, 4}, {3, 4, 4}}, 2);
    check_op([](const std::vector<Var>& p) { return ag::mul(p[0], p[1]); },
             {{3, 4, 4}, {3, 4, 4}}, 3);
    check_op([](const std::vector<Var>& p) { return ag::gelu(p[0]); }, {{2, 5, 5}}, 4);
    check_op([](const std::vector<Var>& p) { return ag::sigmoid(p[0]); }, {{2, 5, 5}}, 5);
    check_op([](const std::vector<Var>& p) { return ag::tanh_v(p[0]); }, {{2, 5, 5}}, 6);
    check_op([](const std::vector<Var>& p) { return ag::exp_v(ag::scale(p[0], 0.3)); },
             {{2, 5, 5}}, 7);
    check_op([](const std::vector<Var>& p) { return ag::square(p[0]); }, {{2, 5, 5}}, 8);
}

TEST_CASE("broadcast multiply gradients") {
    check_op([](const std::vector<Var>& p) { return ag::mul_channel(p[0], p[1]); },
             {{3, 4, 4}, {3}}, 10);
    check_op([](const std::vector<Var>& p) { return ag::mul_spatial(p[0], p[1]); },
             {{3, 4, 4}, {4, 4}}, 11);
    check_op([](const std::vector<Var>& p) { return ag::add_channel(p[0], p[1]); },
             {{3, 4, 4}, {3}}, 12);
}

TEST_CASE("conv2d gradients (stride 1 and 2, with bias)") {
    check_op(
        [](const std::vector<Var>& p) { return ag::conv2d(p[0], p[1], p[2], 1, 1); },
        {{2, 6, 6}, {3, 2, 3, 3}, {3}}, 20);
    check_op(
        [](const std::vector<Var>& p) { return ag::conv2d(p[0], p[1], p[2], 2, 2); },
        {{2, 8, 8}, {4, 2, 5, 5}, {4}}, 21);
    check_op(
        [](const std::vector<Var>& p) { return ag::conv2d(p[0], p[1], nullptr, 1, 0); },
        {{2, 5, 5}, {3, 2, 3, 3}}, 22);
}

TEST_CASE("conv2d_depthwise gradients") {
    check_op(
        [](const std::vector<Var>& p) { return ag::conv2d_depthwise(p[0], p[1], 1); },
        {{3, 6, 6}, {3, 3, 3}}, 25);
}

TEST_CASE("shape op gradients") {
    check_op(
        [](const std::vector<Var>& p) { return ag::concat_channels(p[0], p[1]); },
        {{2, 4, 4}, {3, 4, 4}}, 30);
    check_op(
        [](const std::vector<Var>& p) { return ag::slice_channels(p[0], 1, 3); },
        {{4, 4, 4}}, 31);
    check_op(
        [](const std::vector<Var>& p) { return ag::flatten_spatial_rows(p[0]); },
        {{3, 3, 4}}, 32);
    check_op([](const std::vector<Var>& p) { return ag::reshape(p[0], {16, 3}); },
             {{3, 4, 4}}, 33);
}

TEST_CASE("linear algebra gradients") {
    check_op([](const std::vector<Var>& p) { return ag::matmul(p[0], p[1]); },
             {{4, 3}, {3, 5}}, 40);
    check_op([](const std::vector<Var>& p) { return ag::transpose(p[0]); }, {{4, 6}},
             41);
    check_op([](const std::vector<Var>& p) { return ag::softmax_rows(p[0]); },
             {{5, 7}}, 42);
}

TEST_CASE("spatial op gradients") {
    check_op([](const std::vector<Var>& p) { return ag::upsample_bilinear2x(p[0]); },
             {{2, 4, 4}}, 50);
    check_op([](const std::vector<Var>& p) { return ag::instance_norm(p[0]); },
             {{3, 5, 5}}, 51);
    check_op([](const std::vector<Var>& p) { return ag::channel_l2_normalize(p[0]); },
             {{4, 3, 3}}, 52);
    check_op([](const std::vector<Var>& p) { return ag::global_avg_pool(p[0]); },
             {{3, 6, 6}}, 53);

    Rng rng(54);
    Array flow = random_array({2, 6, 6}, rng, 0.7);
    check_op(
        [flow](const std::vector<Var>& p) { return ag::warp_bilinear(p[0], flow); },
        {{6, 6}}, 55);
}

TEST_CASE("instance norm whitens per channel") {
    Rng rng(60);
    Var x = ag::constant(random_array({4, 8, 8}, rng, 3.0));
    Var y = ag::instance_norm(x);
    for (int c = 0; c < 4; ++c) {
        double mean = 0.0, var = 0.0;
        for (int i = 0; i < 64; ++i) mean += y->value[c * 64 + i];
        mean /= 64;
        for (int i = 0; i < 64; ++i) {
            const double d = y->value[c * 64 + i] - mean;
            var += d * d;
        }
        var /= 64;
        CHECK(std::fabs(mean) <= 1e-5);
        CHECK(std::fabs(var - 1.0) <= 1e-4);
    }
}

TEST_CASE("instance norm handles constant channels (epsilon guard)") {
    Array a({2, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) a[i] = 3.0;       // constant channel
    for (std::size_t i = 16; i < 32; ++i) a[i] = double(i);
    Var y = ag::instance_norm(ag::constant(a));
    CHECK(y->value.all_finite());
    for (int i = 0; i < 16; ++i) CHECK(y->value[i] == 0.0);
}

TEST_CASE("channel_l2_normalize: unit norms, zero vectors stay zero") {
    Rng rng(61);
    Array a = random_array({5, 3, 3}, rng);
    for (int c = 0; c < 5; ++c) a[c * 9 + 4] = 0.0;  // zero out one position
    for (int c = 0; c < 5; ++c) a[c * 9 + 4] = 0.0;
    Var y = ag::channel_l2_normalize(ag::constant(a));
    for (int i = 0; i < 9; ++i) {
        double norm_sq = 0.0;
        for (int c = 0; c < 5; ++c) norm_sq += y->value[c * 9 + i] * y->value[c * 9 + i];
        if (i == 4) {
            CHECK(norm_sq == 0.0);
        } else {
            CHECK(norm_sq == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("no-grad mode keeps the tape empty") {
    Rng rng(62);
    Var p = ag::make_param(random_array({2, 4, 4}, rng));
    ag::NoGradGuard ng;
    Var y = ag::mean_all(ag::square(ag::gelu(p)));
    CHECK(y->parents.empty());
    CHECK_FALSE(y->requires_grad);
}

TEST_CASE("warp_bilinear: zero flow is the identity, constants stay constant") {
    Rng rng(63);
    Array img = random_array({8, 8}, rng);
    Array zero_flow({2, 8, 8});
    Var out = ag::warp_bilinear(ag::constant(img), zero_flow);
    for (std::size_t i = 0; i < img.size(); ++i) {
        CHECK(std::fabs(out->value[i] - img[i]) <= 1e-6);
    }

    Array konst({8, 8}, 0.37);
    Array wild = random_array({2, 8, 8}, rng, 3.0);
    Var out2 = ag::warp_bilinear(ag::constant(konst), wild);
    for (std::size_t i = 0; i < konst.size(); ++i) {
        CHECK(out2->value[i] == doctest::Approx(0.37).epsilon(1e-12));
    }
}

TEST_CASE("upsample_bilinear2x: constant map stays constant, shape doubles") {
    Array konst({3, 5, 5}, 1.25);
    Var up = ag::upsample_bilinear2x(ag::constant(konst));
    CHECK(up->value.dim(1) == 10);
    CHECK(up->value.dim(2) == 10);
    for (std::size_t i = 0; i < up->value.size(); ++i) {
        CHECK(up->value[i] == doctest::Approx(1.25).epsilon(1e-12));
    }
}

TEST_CASE("adam with zero grads leaves parameters unchanged") {
    nn::ParamStore ps;
    Rng rng(64);
    Var p = ps.add("p", random_array({4}, rng));
    const Array before = p->value;
    nn::Adam opt(ps, 0.01);
    opt.zero_grad();
    opt.step();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(p->value[i] == before[i]);
}
