#include "gcanet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gcanet/layers.hpp"

namespace gcanet {

namespace {

void validate(const LayerChainSpec& chain) {
    if (chain.layers.empty()) throw std::invalid_argument("analysis: empty layer chain");
    for (const auto& e : chain.layers) {
        const int64_t k = e.kind == LayerKind::shared_separable ? 2 * e.r - 1 : e.k;
        if (k % 2 == 0 || k < 1)
            throw std::invalid_argument("analysis: kernel size " + std::to_string(k) +
                                        " must be odd");
        if (e.r < 1) throw std::invalid_argument("analysis: dilation rate must be >= 1");
        if (e.stride < 1) throw std::invalid_argument("analysis: stride must be >= 1");
    }
}

// axis tap offsets of one layer, relative to its leftmost tap
std::vector<int64_t> layer_offsets(const LayerEntry& e) {
    std::vector<int64_t> offs;
    if (e.kind == LayerKind::shared_separable) {
        for (int64_t j = 0; j < 2 * e.r - 1; ++j) offs.push_back(j);
    } else {
        for (int64_t j = 0; j < e.k; ++j) offs.push_back(j * e.r);
    }
    return offs;
}

// deps(i) for output index i of the whole chain, walking output -> input
std::set<int64_t> axis_deps(const LayerChainSpec& chain, int64_t out_index) {
    std::set<int64_t> cur{out_index};
    for (auto it = chain.layers.rbegin(); it != chain.layers.rend(); ++it) {
        const auto offs = layer_offsets(*it);
        std::set<int64_t> next;
        for (int64_t i : cur)
            for (int64_t o : offs) next.insert(i * it->stride + o);
        cur = std::move(next);
    }
    return cur;
}

}  // namespace

std::string LayerChainSpec::str() const {
    std::ostringstream os;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (i) os << ",";
        const auto& e = layers[i];
        if (e.kind == LayerKind::shared_separable)
            os << "share" << 2 * e.r - 1;
        else
            os << "d" << e.k << "x" << e.r;
        if (e.stride != 1) os << "/" << e.stride;
    }
    return os.str();
}

LayerChainSpec parse_chain(const std::string& text) {
    auto fail = [&](size_t pos, const std::string& what) {
        std::ostringstream os;
        os << "bad chain spec: " << what << "\n  " << text << "\n  " << std::string(pos, ' ')
           << "^";
        throw std::invalid_argument(os.str());
    };
    auto read_int = [&](size_t& pos) {
        if (pos >= text.size() || !std::isdigit(static_cast<unsigned char>(text[pos])))
            fail(pos, "expected a digit");
        int64_t v = 0;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])))
            v = v * 10 + (text[pos++] - '0');
        return v;
    };

    LayerChainSpec chain;
    size_t pos = 0;
    while (true) {
        bool smoothed = false;
        if (pos < text.size() && text[pos] == 's') {
            smoothed = true;
            ++pos;
        }
        if (pos >= text.size() || text[pos] != 'd') fail(pos, "expected 'd' (dilated conv)");
        ++pos;
        const int64_t k = read_int(pos);
        if (pos >= text.size() || text[pos] != 'x') fail(pos, "expected 'x' between k and r");
        ++pos;
        const int64_t r = read_int(pos);
        if (smoothed) chain.layers.push_back({LayerKind::shared_separable, 0, r, 1});
        chain.layers.push_back({LayerKind::dilated_conv, k, r, 1});
        if (pos == text.size()) break;
        if (text[pos] != ',') fail(pos, "expected ','");
        ++pos;
    }
    validate(chain);
    return chain;
}

DependencyReport dependency_sets(const LayerChainSpec& chain,
                                 const std::vector<int64_t>& output_indices,
                                 int64_t input_extent) {
    validate(chain);
    DependencyReport report;
    report.receptive_extent = receptive_field(chain);
    for (int64_t i : output_indices) {
        if (i < 0) throw std::out_of_range("dependency_sets: negative output index");
        std::set<int64_t> d = axis_deps(chain, i);
        std::set<int64_t> d_next = axis_deps(chain, i + 1);
        if (*d_next.rbegin() >= input_extent)
            throw std::out_of_range("dependency_sets: output " + std::to_string(i) +
                                    " reaches input index " + std::to_string(*d_next.rbegin()) +
                                    " beyond extent " + std::to_string(input_extent));
        std::set<int64_t> inter;
        std::set_intersection(d.begin(), d.end(), d_next.begin(), d_next.end(),
                              std::inserter(inter, inter.begin()));
        report.adjacent_overlap[i] = static_cast<int64_t>(inter.size());
        if (inter.empty()) report.gridding = true;
        report.deps[i] = std::move(d);
    }
    return report;
}

int64_t receptive_field(const LayerChainSpec& chain) {
    validate(chain);
    const std::set<int64_t> d = axis_deps(chain, 0);
    return *d.rbegin() - *d.begin() + 1;
}

std::vector<std::set<std::pair<int64_t, int64_t>>> empirical_gradient_support(
    const LayerChainSpec& chain, int64_t h, int64_t w, int64_t oy, int64_t ox, int draws,
    uint64_t seed) {
    validate(chain);
    std::vector<std::set<std::pair<int64_t, int64_t>>> masks;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Var zero_bias = leaf(Tensor(Shape{1, 1, 1, 1}, 0.0));

    for (int d = 0; d < draws; ++d) {
        Var x = leaf(Tensor(Shape{1, 1, h, w}, 0.0), true, "probe");
        x->zero_grad();
        Var y = x;
        for (const auto& e : chain.layers) {
            const int64_t k = e.kind == LayerKind::shared_separable ? 2 * e.r - 1 : e.k;
            Tensor wt(Shape{1, 1, k, k});
            for (int64_t i = 0; i < wt.numel(); ++i) wt[i] = gauss(rng);
            const int64_t dil = e.kind == LayerKind::shared_separable ? 1 : e.r;
            // no padding: analysis covers interior units only
            y = conv2d_zero(y, leaf(wt), zero_bias, e.stride, dil, 0);
        }
        const Shape os = y->value.shape();
        if (oy < 0 || oy >= os.h || ox < 0 || ox >= os.w)
            throw std::out_of_range("empirical_gradient_support: output pixel (" +
                                    std::to_string(oy) + "," + std::to_string(ox) +
                                    ") outside " + os.str());
        Tensor onehot(os, 0.0);
        onehot.at(0, 0, oy, ox) = 1.0;
        backward(sum_all(mul(y, leaf(onehot))));

        std::set<std::pair<int64_t, int64_t>> mask;
        for (int64_t yy = 0; yy < h; ++yy)
            for (int64_t xx = 0; xx < w; ++xx)
                if (x->grad.at(0, 0, yy, xx) != 0.0) mask.insert({yy, xx});
        masks.push_back(std::move(mask));
    }
    return masks;
}

std::string report_json(const LayerChainSpec& chain, const DependencyReport& report) {
    nlohmann::json j;
    j["chain"] = chain.str();
    j["receptive_extent"] = report.receptive_extent;
    j["gridding"] = report.gridding;
    nlohmann::json deps = nlohmann::json::object();
    for (const auto& [i, set] : report.deps)
        deps[std::to_string(i)] = std::vector<int64_t>(set.begin(), set.end());
    j["dependencies"] = deps;
    nlohmann::json overlap = nlohmann::json::object();
    for (const auto& [i, n] : report.adjacent_overlap) overlap[std::to_string(i)] = n;
    j["adjacent_overlap"] = overlap;
    return j.dump(2);
}

Tensor gridding_render(const Tensor& before, const Tensor& after, double diff_emphasis) {
    check_same_shape("gridding_render", before.shape(), after.shape());
    const Shape s = before.shape();
    Tensor panel(Shape{1, 3, s.h, 2 * s.w + kRenderGutter}, 0.0);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x)
                panel.at(0, c, y, x) = after.at(0, std::min(c, s.c - 1), y, x);

    // right tile: difference minus its 3x3 local mean, so flat offsets vanish
    // and gridding-frequency structure survives the amplification
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x) {
                const int64_t sc = std::min(c, s.c - 1);
                double local = 0.0;
                int64_t n = 0;
                for (int64_t dy = -1; dy <= 1; ++dy)
                    for (int64_t dx = -1; dx <= 1; ++dx) {
                        const int64_t yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                        local += after.at(0, sc, yy, xx) - before.at(0, sc, yy, xx);
                        ++n;
                    }
                const double diff = after.at(0, sc, y, x) - before.at(0, sc, y, x);
                const double hf = diff - local / n;
                panel.at(0, c, y, s.w + kRenderGutter + x) =
                    std::clamp(diff_emphasis * std::abs(hf), 0.0, 1.0);
            }
    return panel;
}

}  // namespace gcanet
