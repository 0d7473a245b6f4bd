#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gcanet/autograd.hpp"
#include "gcanet/tensor_io.hpp"
#include "gradcheck.hpp"

using namespace gcanet;
using gcanet::testing::max_grad_error;
using gcanet::testing::random_tensor;

TEST_CASE("tensor shape / data invariants") {
    Tensor t(Shape{2, 3, 4, 5});
    CHECK(t.numel() == 120);
    CHECK_THROWS_AS(Tensor(Shape{1, 1, 2, 2}, std::vector<double>{1.0}), std::invalid_argument);
    Tensor empty(Shape{0, 3, 4, 5});
    CHECK(empty.numel() == 0);
}

TEST_CASE("elementwise op examples") {
    auto a = leaf(Tensor(Shape{1, 1, 1, 2}, {1, 2}));
    auto b = leaf(Tensor(Shape{1, 1, 1, 2}, {3, 4}));
    auto s = add(a, b);
    CHECK(s->value[0] == 4);
    CHECK(s->value[1] == 6);

    auto r = relu(leaf(Tensor(Shape{1, 1, 1, 3}, {-1, 0, 2})));
    CHECK(r->value[0] == 0);
    CHECK(r->value[1] == 0);
    CHECK(r->value[2] == 2);

    auto ms = mean_square(leaf(Tensor(Shape{1, 1, 1, 2}, {3, -3})));
    CHECK(ms->value[0] == doctest::Approx(9.0));

    CHECK_THROWS_WITH_AS(add(a, leaf(Tensor(Shape{1, 1, 1, 3}))),
                         doctest::Contains("(1,1,1,2)"), std::invalid_argument);
}

TEST_CASE("backward: hand chain rule of mean_square(w*x)") {
    Parameter w(Tensor(Shape{1, 1, 1, 1}, {2.0}), "w");
    auto x = leaf(Tensor(Shape{1, 1, 1, 1}, {3.0}));
    auto loss = mean_square(mul(w.var, x));
    backward(loss);
    // d/dw mean((w*x)^2) = 2*(w*x)*x = 2*6*3 = 36
    CHECK(w.grad()[0] == doctest::Approx(36.0));
}

TEST_CASE("backward: constant loss leaves parameter grads zero") {
    Parameter w(Tensor(Shape{1, 1, 1, 1}, {2.0}), "w");
    w.var->zero_grad();
    auto loss = mean_square(leaf(Tensor(Shape{1, 1, 1, 1}, {5.0})));
    backward(loss);
    CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("backward errors: non-scalar loss, double consumption") {
    auto x = leaf(Tensor(Shape{1, 1, 1, 2}, {1, 2}), true);
    x->zero_grad();
    CHECK_THROWS_AS(backward(relu(x)), std::invalid_argument);
    auto loss = mean_square(relu(x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), std::logic_error);
}

TEST_CASE("grad accumulates on leaves across backward calls") {
    auto x = leaf(Tensor(Shape{1, 1, 1, 1}, {3.0}), true);
    x->zero_grad();
    backward(mean_square(x));
    backward(mean_square(x));
    CHECK(x->grad[0] == doctest::Approx(12.0));
    x->zero_grad();
    backward(mean_square(x));
    CHECK(x->grad[0] == doctest::Approx(6.0));
}

TEST_CASE("finite-difference checks on every registered elementwise/reduction op") {
    std::mt19937_64 rng(7);
    const Shape s{1, 2, 3, 3};
    for (int trial = 0; trial < 50; ++trial) {
        Tensor a = random_tensor(s, rng), b = random_tensor(s, rng);
        Tensor g = random_tensor(Shape{1, 1, 3, 3}, rng);

        CHECK(max_grad_error([](const std::vector<Var>& v) { return mean_square(add(v[0], v[1])); },
                             {a, b}) < 1e-4);
        CHECK(max_grad_error([](const std::vector<Var>& v) { return mean_square(sub(v[0], v[1])); },
                             {a, b}) < 1e-4);
        CHECK(max_grad_error([](const std::vector<Var>& v) { return mean_square(mul(v[0], v[1])); },
                             {a, b}) < 1e-4);
        CHECK(max_grad_error(
                  [](const std::vector<Var>& v) { return mean_square(scale(v[0], -1.7)); }, {a}) <
              1e-4);
        // shift off zero so the relu kink does not sit on a sample point
        Tensor ar = a;
        for (int64_t i = 0; i < ar.numel(); ++i) ar[i] += (ar[i] >= 0 ? 0.5 : -0.5);
        CHECK(max_grad_error([](const std::vector<Var>& v) { return mean_square(relu(v[0])); },
                             {ar}) < 1e-4);
        CHECK(max_grad_error(
                  [](const std::vector<Var>& v) {
                      return mean_square(concat_channels({v[0], v[1]}));
                  },
                  {a, b}) < 1e-4);
        CHECK(max_grad_error(
                  [](const std::vector<Var>& v) {
                      return mean_square(slice_channels(v[0], 1, 2));
                  },
                  {a}) < 1e-4);
        CHECK(max_grad_error(
                  [](const std::vector<Var>& v) { return mean_square(mul_gate(v[1], v[0])); },
                  {a, g}) < 1e-4);
    }
}

TEST_CASE("determinism: same inputs give bit-identical results") {
    std::mt19937_64 rng(11);
    Tensor a = random_tensor(Shape{2, 3, 4, 4}, rng);
    Tensor b = random_tensor(Shape{2, 3, 4, 4}, rng);
    auto run = [&]() {
        auto la = leaf(a, true);
        la->zero_grad();
        auto loss = mean_square(mul(relu(la), leaf(b)));
        backward(loss);
        return std::make_pair(loss->value[0], la->grad.vec());
    };
    auto [l1, g1] = run();
    auto [l2, g2] = run();
    CHECK(l1 == l2);
    CHECK(g1 == g2);
}

TEST_CASE("tensor file round trip") {
    const std::string path = std::filesystem::temp_directory_path() / "gcat_roundtrip.bin";
    std::mt19937_64 rng(3);
    Tensor t = random_tensor(Shape{2, 3, 4, 5}, rng);
    Tensor zero(Shape{2, 0, 4, 5});
    save_tensors(path, {{"a", &t}, {"empty", &zero}});
    auto loaded = load_tensors(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded.at("a").shape() == t.shape());
    CHECK(loaded.at("a").vec() == t.vec());
    CHECK(loaded.at("empty").shape() == zero.shape());
    CHECK(loaded.at("empty").numel() == 0);
    std::filesystem::remove(path);
}

TEST_CASE("tensor file errors: magic, truncation, duplicates") {
    namespace fs = std::filesystem;
    const std::string path = fs::temp_directory_path() / "gcat_bad.bin";
    Tensor t(Shape{1, 1, 1, 1}, {1.0});
    CHECK_THROWS_AS(save_tensors(path, {{"x", &t}, {"x", &t}}), std::invalid_argument);

    save_tensors(path, {{"x", &t}});
    {
        std::ofstream os(path, std::ios::binary);
        os.write("NOPE", 4);
    }
    CHECK_THROWS_WITH_AS(load_tensors(path), doctest::Contains("magic"), std::runtime_error);

    save_tensors(path, {{"x", &t}});
    fs::resize_file(path, fs::file_size(path) - 4);  // cut into the payload
    CHECK_THROWS_WITH_AS(load_tensors(path), doctest::Contains("truncated"), std::runtime_error);
    fs::remove(path);
}
