#pragma once

#include <random>
#include <vector>

#include "gcanet/autograd.hpp"

namespace gcanet {

enum class PadMode { reflect, zero };
enum class NormKind { instance, batch, none };

struct Conv2dSpec {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t kernel_size = 3;  // odd
    int64_t dilation = 1;
    int64_t stride = 1;
    PadMode pad_mode = PadMode::reflect;
    bool has_bias = true;

    // effective kernel extent r*(k-1)+1
    int64_t extent() const { return dilation * (kernel_size - 1) + 1; }
    // size-preserving padding for stride 1
    int64_t same_pad() const { return dilation * (kernel_size - 1) / 2; }
};

// ---- functional ops (autograd-aware) ----

// Reflection padding by p on each spatial side (edge not repeated); needs p <= dim-1.
Var reflect_pad(const Var& x, int64_t pad);

// Dilated 2-D convolution with zero padding. weight (oc,ic,k,k), bias (1,oc,1,1) or null.
Var conv2d_zero(const Var& x, const Var& weight, const Var& bias, int64_t stride,
                int64_t dilation, int64_t pad);

// Convolution per spec: reflect or zero padding chosen so stride-1 convs preserve size.
Var conv2d(const Var& x, const Conv2dSpec& spec, const Var& weight, const Var& bias);

// Transposed convolution, the exact adjoint of conv2d_zero(stride,pad) up to the
// declared output size. weight (ic,oc,k,k). out = (H-1)*stride - 2*pad + k + out_pad.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int64_t stride,
                     int64_t pad, int64_t out_pad);

// Channel-shared depthwise convolution: one (2r-1)x(2r-1) plane applied to every
// channel, stride 1, reflect padding, size-preserving. weight (1,1,2r-1,2r-1).
Var shared_separable_conv(const Var& x, int64_t dilation_rate, const Var& weight);

// Per-(sample, channel) normalization over (h,w), then affine.
Var instance_norm(const Var& x, const Var& scale, const Var& shift, double eps);

// Per-channel normalization over (n,h,w); updates running stats when training.
Var batch_norm(const Var& x, const Var& scale, const Var& shift, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum, double eps);

// ---- parameter-owning layers ----

using ParamList = std::vector<Parameter*>;

Tensor kaiming_uniform(Shape s, int64_t fan_in, std::mt19937_64& rng);

struct Conv2dLayer {
    Conv2dSpec spec;
    Parameter weight;
    Parameter bias;

    Conv2dLayer() = default;
    Conv2dLayer(Conv2dSpec spec, const std::string& name, std::mt19937_64& rng);
    Var forward(const Var& x) const;
    void collect(ParamList& out);
};

struct ConvTranspose2dLayer {
    int64_t in_channels = 0, out_channels = 0, kernel_size = 3;
    Parameter weight;
    Parameter bias;

    ConvTranspose2dLayer() = default;
    ConvTranspose2dLayer(int64_t in_ch, int64_t out_ch, const std::string& name,
                         std::mt19937_64& rng);
    // stride-2 upsample: output spatial dims exactly 2x input
    Var forward(const Var& x) const;
    void collect(ParamList& out);
};

struct SharedSeparableConv {
    int64_t dilation_rate = 1;
    Parameter weight;  // (1,1,2r-1,2r-1), delta-initialized

    SharedSeparableConv() = default;
    SharedSeparableConv(int64_t r, const std::string& name);
    Var forward(const Var& x) const;
    void collect(ParamList& out);
};

struct NormLayer {
    NormKind kind = NormKind::instance;
    double eps = 1e-5;
    double momentum = 0.1;
    Parameter scale;  // (1,c,1,1)
    Parameter shift;
    Tensor running_mean;  // batch kind only
    Tensor running_var;

    NormLayer() = default;
    NormLayer(NormKind kind, int64_t channels, const std::string& name);
    // non-const: batch kind updates running stats when training
    Var forward(const Var& x, bool training);
    void collect(ParamList& out);
};

struct SmoothedDilatedResblock {
    bool smoothed = true;
    SharedSeparableConv pre1, pre2;
    Conv2dLayer conv1, conv2;
    NormLayer norm1, norm2;

    SmoothedDilatedResblock() = default;
    SmoothedDilatedResblock(int64_t channels, int64_t dilation_rate, bool smoothed,
                            NormKind norm_kind, const std::string& name, std::mt19937_64& rng);
    Var forward(const Var& x, bool training);
    void collect(ParamList& out);
};

}  // namespace gcanet
