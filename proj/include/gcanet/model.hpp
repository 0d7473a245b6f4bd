#pragma once

#include <string>
#include <vector>

#include "gcanet/layers.hpp"

namespace gcanet {

struct ModelConfig {
    int64_t base_channels = 16;  // 64 at full scale
    std::vector<int64_t> dilation_schedule{2, 2, 2, 4, 4, 4, 1};
    bool use_smoothed_dilation = true;
    bool use_gated_fusion = true;
    NormKind norm_kind = NormKind::instance;
    bool use_edge_channel = true;
    int64_t input_image_channels = 3;

    std::string serialize() const;  // key=value lines
    static ModelConfig parse(const std::string& text);
};

// Sobel gradient magnitude of the Rec.601 luma, scaled into [0,1].
Tensor extract_edges(const Tensor& image);

// Per-pixel linear combination of three same-shape feature maps with scalar
// weight maps broadcast over channels.
Var gated_fusion(const Var& f_low, const Var& f_mid, const Var& f_high, const Var& m_low,
                 const Var& m_mid, const Var& m_high);

// Encoder (3 convs, one 1/2 downsample) -> 7 dilated resblocks -> gate fusion
// of low/mid/high taps -> deconv upsample -> 2 convs -> 3-channel residue.
class GCANet {
  public:
    GCANet(ModelConfig config, uint64_t seed);

    // requires even spatial dims and input_image_channels channels;
    // returns the predicted residue at the input resolution
    Var forward(const Var& hazy, bool training);

    // inference: reflect-pads odd sizes to even, crops back, and returns
    // clamp(hazy + residue, 0, 1)
    Tensor restore(const Tensor& hazy);

    ParamList parameters();
    int64_t parameter_count();

    void save_checkpoint(const std::string& path);
    // reads <path> and <path>.cfg; rejects any name/shape disagreement
    static GCANet load_checkpoint(const std::string& path);

    const ModelConfig& config() const { return config_; }

  private:
    // every persistent tensor (parameters + batch-norm running stats) by name
    std::vector<std::pair<std::string, Tensor*>> named_tensors();

    ModelConfig config_;
    Conv2dLayer enc0_, enc1_, enc2_;
    NormLayer enc0_norm_, enc1_norm_, enc2_norm_;
    std::vector<SmoothedDilatedResblock> blocks_;
    Conv2dLayer gate_;
    ConvTranspose2dLayer deconv_;
    NormLayer deconv_norm_;
    Conv2dLayer dec1_;
    NormLayer dec1_norm_;
    Conv2dLayer dec2_;
};

}  // namespace gcanet
