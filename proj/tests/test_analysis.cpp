#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "gcanet/analysis.hpp"

using namespace gcanet;

namespace {

LayerChainSpec single(int64_t k, int64_t r) {
    LayerChainSpec c;
    c.layers.push_back({LayerKind::dilated_conv, k, r, 1});
    return c;
}

}  // namespace

TEST_CASE("a lone dilated layer with r=2 connects adjacent outputs to disjoint inputs") {
    DependencyReport rep = dependency_sets(single(3, 2), {10});
    CHECK(rep.deps[10] == std::set<int64_t>{10, 12, 14});
    CHECK(rep.adjacent_overlap[10] == 0);
    CHECK(rep.gridding);
}

TEST_CASE("a regular convolution overlaps adjacent outputs") {
    DependencyReport rep = dependency_sets(single(3, 1), {5});
    CHECK(rep.deps[5] == std::set<int64_t>{5, 6, 7});
    // deps(5) ∩ deps(6) = {6, 7}
    CHECK(rep.adjacent_overlap[5] == 2);
    CHECK_FALSE(rep.gridding);
}

TEST_CASE("prepending the shared smoothing conv removes the gridding pattern") {
    for (int64_t r : {2, 4}) {
        LayerChainSpec plain = single(3, r);
        LayerChainSpec smoothed;
        smoothed.layers.push_back({LayerKind::shared_separable, 0, r, 1});
        smoothed.layers.push_back({LayerKind::dilated_conv, 3, r, 1});

        std::vector<int64_t> probes{0, 1, 2, 3, 7};
        CHECK(dependency_sets(plain, probes).gridding);
        DependencyReport rep = dependency_sets(smoothed, probes);
        CHECK_FALSE(rep.gridding);
        for (int64_t i : probes) CHECK(rep.adjacent_overlap[i] > 0);
    }
}

TEST_CASE("receptive field matches the closed form and composes across layers") {
    CHECK(receptive_field(single(3, 2)) == 5);
    CHECK(receptive_field(single(3, 1)) == 3);
    CHECK(receptive_field(single(3, 4)) == 9);

    for (int64_t r = 1; r <= 8; ++r)
        for (int64_t k : {3, 5, 7}) CHECK(receptive_field(single(k, r)) == r * (k - 1) + 1);

    LayerChainSpec stack;
    stack.layers.push_back({LayerKind::dilated_conv, 3, 2, 1});
    stack.layers.push_back({LayerKind::dilated_conv, 3, 4, 1});
    CHECK(receptive_field(stack) == 13);
}

TEST_CASE("dependency analysis is exact and bounds-checked") {
    DependencyReport a = dependency_sets(single(5, 3), {0, 4, 9});
    DependencyReport b = dependency_sets(single(5, 3), {0, 4, 9});
    CHECK(a.deps == b.deps);
    CHECK(a.adjacent_overlap == b.adjacent_overlap);

    CHECK_THROWS_AS(dependency_sets(single(3, 2), {-1}), std::out_of_range);
    // output 10 of a k=3,r=2 layer needs input up to index 15
    CHECK_THROWS_AS(dependency_sets(single(3, 2), {10}, 14), std::out_of_range);
    CHECK_NOTHROW(dependency_sets(single(3, 2), {10}, 16));
}

TEST_CASE("backpropagated gradients land exactly on the combinatorial sets") {
    // single k=3 r=2 layer, interior pixel
    auto masks = empirical_gradient_support(single(3, 2), 16, 16, 4, 4);
    DependencyReport rep = dependency_sets(single(3, 2), {4});
    std::set<std::pair<int64_t, int64_t>> expected;
    for (int64_t y : rep.deps[4])
        for (int64_t x : rep.deps[4]) expected.insert({y, x});
    for (const auto& m : masks) CHECK(m == expected);

    // regular conv: 3x3 square of 9 pixels
    masks = empirical_gradient_support(single(3, 1), 12, 12, 3, 3);
    for (const auto& m : masks) CHECK(m.size() == 9);
}

TEST_CASE("empirical support never exceeds the combinatorial set across chains") {
    std::vector<LayerChainSpec> chains;
    chains.push_back(parse_chain("d3x2,d3x4"));
    chains.push_back(parse_chain("sd3x2"));
    chains.push_back(parse_chain("d5x2"));
    for (const auto& chain : chains) {
        DependencyReport rep = dependency_sets(chain, {2});
        std::set<std::pair<int64_t, int64_t>> expected;
        for (int64_t y : rep.deps[2])
            for (int64_t x : rep.deps[2]) expected.insert({y, x});
        auto masks = empirical_gradient_support(chain, 40, 40, 2, 2);
        bool any_equal = false;
        for (const auto& m : masks) {
            for (const auto& p : m) CHECK(expected.count(p) == 1);
            any_equal = any_equal || m == expected;
        }
        CHECK(any_equal);
    }
}

TEST_CASE("smoothing strictly enlarges the gradient support") {
    auto plain = empirical_gradient_support(parse_chain("d3x2"), 20, 20, 5, 5, 1);
    auto smoothed = empirical_gradient_support(parse_chain("sd3x2"), 20, 20, 5, 5, 1);
    for (const auto& p : plain[0]) CHECK(smoothed[0].count(p) == 1);
    CHECK(smoothed[0].size() > plain[0].size());
}

TEST_CASE("the chain mini-grammar parses and rejects with caret diagnostics") {
    LayerChainSpec c = parse_chain("d3x2,sd5x4");
    REQUIRE(c.layers.size() == 3);
    CHECK(c.layers[0].kind == LayerKind::dilated_conv);
    CHECK(c.layers[0].k == 3);
    CHECK(c.layers[0].r == 2);
    CHECK(c.layers[1].kind == LayerKind::shared_separable);
    CHECK(c.layers[1].r == 4);
    CHECK(c.layers[2].k == 5);
    CHECK(c.layers[2].r == 4);

    CHECK_THROWS_WITH_AS(parse_chain("d3y2"), doctest::Contains("^"), std::invalid_argument);
    CHECK_THROWS_AS(parse_chain(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_chain("x3x2"), std::invalid_argument);
    CHECK_THROWS_AS(parse_chain("d4x2"), std::invalid_argument);  // even kernel
}

TEST_CASE("the JSON report carries the chain, sets, overlaps, and flag") {
    LayerChainSpec chain = parse_chain("d3x2");
    DependencyReport rep = dependency_sets(chain, {0, 1});
    nlohmann::json j = nlohmann::json::parse(report_json(chain, rep));
    CHECK(j["gridding"] == true);
    CHECK(j["receptive_extent"] == 5);
    CHECK(j["dependencies"]["0"] == std::vector<int64_t>{0, 2, 4});
    CHECK(j["adjacent_overlap"]["0"] == 0);
}

TEST_CASE("the diagnostic panel lays out two tiles and reacts to structure") {
    Tensor flat(Shape{1, 3, 16, 16}, 0.5);
    Tensor panel = gridding_render(flat, flat, 4.0);
    CHECK(panel.shape().w == 2 * 16 + kRenderGutter);
    CHECK(panel.shape().h == 16);
    // right tile is all zero for identical inputs
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 16; ++y)
            for (int64_t x = 0; x < 16; ++x)
                CHECK(panel.at(0, c, y, 16 + kRenderGutter + x) == 0.0);

    Tensor checker(Shape{1, 3, 16, 16});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 16; ++y)
            for (int64_t x = 0; x < 16; ++x) checker.at(0, c, y, x) = (y + x) % 2;
    Tensor noisy = gridding_render(flat, checker, 4.0);
    double energy = 0.0;
    for (int64_t y = 0; y < 16; ++y)
        for (int64_t x = 0; x < 16; ++x) energy += noisy.at(0, 0, y, 16 + kRenderGutter + x);
    CHECK(energy > 16 * 16 * 0.5);

    CHECK_THROWS_AS(gridding_render(flat, Tensor(Shape{1, 3, 8, 16}, 0.0), 1.0),
                    std::invalid_argument);
}
