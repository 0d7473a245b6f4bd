#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gcanet/tensor.hpp"

namespace gcanet {

enum class LayerKind { dilated_conv, shared_separable };

struct LayerEntry {
    LayerKind kind = LayerKind::dilated_conv;
    int64_t k = 3;  // shared_separable derives its kernel (2r-1) from r
    int64_t r = 1;
    int64_t stride = 1;
};

// input-to-output ordered stack; the dependency engine works per axis, so 2-D
// sets are products of the 1-D sets for these square kernels
struct LayerChainSpec {
    std::vector<LayerEntry> layers;
    std::string str() const;
};

// "d3x2,sd3x4" where dKxR is a dilated conv (kernel K, rate R) and the `s`
// prefix inserts the channel-shared (2R-1) smoothing conv in front. Malformed
// input throws std::invalid_argument with a caret diagnostic.
LayerChainSpec parse_chain(const std::string& text);

struct DependencyReport {
    // axis-wise contributing input indices per requested output index
    std::map<int64_t, std::set<int64_t>> deps;
    // |deps(i) ∩ deps(i+1)| for every requested i
    std::map<int64_t, int64_t> adjacent_overlap;
    int64_t receptive_extent = 0;
    // true iff some adjacent output pair shares no input unit
    bool gridding = false;
};

// exact integer composition of tap offsets, no weights involved. Offsets use
// the forward indexing deps(i) = {i, i+r, ..., i+r(k-1)} for a single layer.
// input_extent bounds the admissible input indices; a requested output whose
// dependencies leave [0, input_extent) throws std::out_of_range.
DependencyReport dependency_sets(const LayerChainSpec& chain,
                                 const std::vector<int64_t>& output_indices,
                                 int64_t input_extent = int64_t(1) << 40);

// axis extent of the composed receptive field
int64_t receptive_field(const LayerChainSpec& chain);

// instantiates the chain as a 1-channel 2-D network with random weights and
// backprops a one-hot gradient from output pixel (oy, ox); returns the set of
// input pixels with nonzero gradient, one set per weight draw
std::vector<std::set<std::pair<int64_t, int64_t>>> empirical_gradient_support(
    const LayerChainSpec& chain, int64_t h, int64_t w, int64_t oy, int64_t ox, int draws = 3,
    uint64_t seed = 1);

// UTF-8 JSON: chain, per-output dependency sets, overlap table, gridding flag
std::string report_json(const LayerChainSpec& chain, const DependencyReport& report);

// side-by-side diagnostic: left tile is `after`, right tile is the amplified
// high-frequency difference against `before`; panel width is 2w + gutter
Tensor gridding_render(const Tensor& before, const Tensor& after, double diff_emphasis);

constexpr int64_t kRenderGutter = 8;

}  // namespace gcanet
