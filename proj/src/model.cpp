#include "gcanet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gcanet/tensor_io.hpp"

namespace gcanet {

namespace {

std::string norm_kind_name(NormKind k) {
    switch (k) {
        case NormKind::instance: return "instance";
        case NormKind::batch: return "batch";
        case NormKind::none: return "none";
    }
    throw std::logic_error("bad norm kind");
}

NormKind norm_kind_from(const std::string& s) {
    if (s == "instance") return NormKind::instance;
    if (s == "batch") return NormKind::batch;
    if (s == "none") return NormKind::none;
    throw std::invalid_argument("unknown norm kind '" + s + "'");
}

}  // namespace

std::string ModelConfig::serialize() const {
    std::ostringstream os;
    os << "base_channels=" << base_channels << "\n";
    os << "dilation_schedule=";
    for (size_t i = 0; i < dilation_schedule.size(); ++i)
        os << (i ? "," : "") << dilation_schedule[i];
    os << "\n";
    os << "use_smoothed_dilation=" << (use_smoothed_dilation ? 1 : 0) << "\n";
    os << "use_gated_fusion=" << (use_gated_fusion ? 1 : 0) << "\n";
    os << "norm_kind=" << norm_kind_name(norm_kind) << "\n";
    os << "use_edge_channel=" << (use_edge_channel ? 1 : 0) << "\n";
    return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
    ModelConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("model config: bad line '" + line + "'");
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "base_channels")
            cfg.base_channels = std::stoll(val);
        else if (key == "dilation_schedule") {
            cfg.dilation_schedule.clear();
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ',')) cfg.dilation_schedule.push_back(std::stoll(tok));
        } else if (key == "use_smoothed_dilation")
            cfg.use_smoothed_dilation = val == "1";
        else if (key == "use_gated_fusion")
            cfg.use_gated_fusion = val == "1";
        else if (key == "norm_kind")
            cfg.norm_kind = norm_kind_from(val);
        else if (key == "use_edge_channel")
            cfg.use_edge_channel = val == "1";
        else
            throw std::invalid_argument("model config: unknown key '" + key + "'");
    }
    return cfg;
}

Tensor extract_edges(const Tensor& image) {
    const Shape s = image.shape();
    if (s.c != 3)
        throw std::invalid_argument("extract_edges: expected 3 channels, got " + s.str());
    Tensor luma(Shape{s.n, 1, s.h, s.w});
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x)
                luma.at(n, 0, y, x) = 0.299 * image.at(n, 0, y, x) +
                                      0.587 * image.at(n, 1, y, x) +
                                      0.114 * image.at(n, 2, y, x);
    auto refl = [](int64_t i, int64_t n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
    // |grad| of Sobel on a [0,1] image is at most 4*sqrt(2)
    const double norm = 1.0 / (4.0 * std::sqrt(2.0));
    Tensor edges(Shape{s.n, 1, s.h, s.w});
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x) {
                double gx = 0.0, gy = 0.0;
                static const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const double v = luma.at(n, 0, refl(y + dy, s.h), refl(x + dx, s.w));
                        gx += kx[dy + 1][dx + 1] * v;
                        gy += kx[dx + 1][dy + 1] * v;
                    }
                edges.at(n, 0, y, x) = std::sqrt(gx * gx + gy * gy) * norm;
            }
    return edges;
}

Var gated_fusion(const Var& f_low, const Var& f_mid, const Var& f_high, const Var& m_low,
                 const Var& m_mid, const Var& m_high) {
    check_same_shape("gated_fusion", f_low->value.shape(), f_mid->value.shape());
    check_same_shape("gated_fusion", f_low->value.shape(), f_high->value.shape());
    return add(add(mul_gate(m_low, f_low), mul_gate(m_mid, f_mid)), mul_gate(m_high, f_high));
}

GCANet::GCANet(ModelConfig config, uint64_t seed) : config_(std::move(config)) {
    if (config_.base_channels < 1) throw std::invalid_argument("GCANet: base_channels < 1");
    if (config_.input_image_channels != 3)
        throw std::invalid_argument("GCANet: expected 3 image channels");
    std::mt19937_64 rng(seed);
    const int64_t C = config_.base_channels;
    const int64_t cin = config_.input_image_channels + (config_.use_edge_channel ? 1 : 0);
    const NormKind nk = config_.norm_kind;

    auto conv = [&](int64_t in, int64_t out, int64_t stride, const std::string& name) {
        Conv2dSpec sp;
        sp.in_channels = in;
        sp.out_channels = out;
        sp.stride = stride;
        return Conv2dLayer(sp, name, rng);
    };
    enc0_ = conv(cin, C, 1, "enc0");
    enc0_norm_ = NormLayer(nk, C, "enc0.norm");
    enc1_ = conv(C, C, 1, "enc1");
    enc1_norm_ = NormLayer(nk, C, "enc1.norm");
    enc2_ = conv(C, C, 2, "enc2");  // the single 1/2 downsample
    enc2_norm_ = NormLayer(nk, C, "enc2.norm");

    for (size_t i = 0; i < config_.dilation_schedule.size(); ++i)
        blocks_.emplace_back(C, config_.dilation_schedule[i], config_.use_smoothed_dilation, nk,
                             "block" + std::to_string(i), rng);

    // one 3x3 conv over the concatenated taps, 3 output channels
    gate_ = conv(3 * C, 3, 1, "gate");

    deconv_ = ConvTranspose2dLayer(C, C, "dec0", rng);
    deconv_norm_ = NormLayer(nk, C, "dec0.norm");
    dec1_ = conv(C, C, 1, "dec1");
    dec1_norm_ = NormLayer(nk, C, "dec1.norm");
    dec2_ = conv(C, 3, 1, "dec2");  // residue head: no norm, no activation
}

Var GCANet::forward(const Var& hazy, bool training) {
    const Shape s = hazy->value.shape();
    if (s.c != config_.input_image_channels)
        throw std::invalid_argument("GCANet::forward: expected " +
                                    std::to_string(config_.input_image_channels) +
                                    " channels, got " + s.str());
    if (s.h % 2 != 0 || s.w % 2 != 0)
        throw std::invalid_argument("GCANet::forward: spatial dims must be even, got " + s.str());

    Var x = hazy;
    if (config_.use_edge_channel) x = concat_channels({hazy, leaf(extract_edges(hazy->value))});

    x = relu(enc0_norm_.forward(enc0_.forward(x), training));
    x = relu(enc1_norm_.forward(enc1_.forward(x), training));
    x = relu(enc2_norm_.forward(enc2_.forward(x), training));

    const Var f_low = x;
    Var f_mid;
    for (size_t i = 0; i < blocks_.size(); ++i) {
        x = blocks_[i].forward(x, training);
        if (i + 1 == blocks_.size() / 2) f_mid = x;  // after block 3 of the default 7
    }
    const Var f_high = x;
    if (!f_mid) f_mid = f_high;

    Var fused = f_high;
    if (config_.use_gated_fusion) {
        const Var gates = gate_.forward(concat_channels({f_low, f_mid, f_high}));
        fused = gated_fusion(f_low, f_mid, f_high, slice_channels(gates, 0, 1),
                             slice_channels(gates, 1, 2), slice_channels(gates, 2, 3));
    }

    Var y = relu(deconv_norm_.forward(deconv_.forward(fused), training));
    y = relu(dec1_norm_.forward(dec1_.forward(y), training));
    return dec2_.forward(y);
}

Tensor GCANet::restore(const Tensor& hazy) {
    const Shape s = hazy.shape();
    const int64_t ph = s.h % 2, pw = s.w % 2;
    Tensor input = hazy;
    if (ph || pw) {
        // reflect-extend bottom/right rows to the next even size
        Tensor padded(Shape{s.n, s.c, s.h + ph, s.w + pw});
        for (int64_t n = 0; n < s.n; ++n)
            for (int64_t c = 0; c < s.c; ++c)
                for (int64_t y = 0; y < s.h + ph; ++y)
                    for (int64_t x = 0; x < s.w + pw; ++x)
                        padded.at(n, c, y, x) =
                            hazy.at(n, c, std::min(y, s.h - 1) - (y >= s.h ? 1 : 0),
                                    std::min(x, s.w - 1) - (x >= s.w ? 1 : 0));
        input = std::move(padded);
    }
    const Var residue = forward(leaf(input), /*training=*/false);
    Tensor out(s);
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t y = 0; y < s.h; ++y)
                for (int64_t x = 0; x < s.w; ++x)
                    out.at(n, c, y, x) = std::clamp(
                        hazy.at(n, c, y, x) + residue->value.at(n, c, y, x), 0.0, 1.0);
    return out;
}

ParamList GCANet::parameters() {
    ParamList out;
    enc0_.collect(out);
    enc0_norm_.collect(out);
    enc1_.collect(out);
    enc1_norm_.collect(out);
    enc2_.collect(out);
    enc2_norm_.collect(out);
    for (auto& b : blocks_) b.collect(out);
    if (config_.use_gated_fusion) gate_.collect(out);
    deconv_.collect(out);
    deconv_norm_.collect(out);
    dec1_.collect(out);
    dec1_norm_.collect(out);
    dec2_.collect(out);
    return out;
}

int64_t GCANet::parameter_count() {
    int64_t total = 0;
    for (Parameter* p : parameters()) total += p->value().numel();
    return total;
}

std::vector<std::pair<std::string, Tensor*>> GCANet::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (Parameter* p : parameters()) out.emplace_back(p->name(), &p->value());
    if (config_.norm_kind == NormKind::batch) {
        for (NormLayer* n :
             {&enc0_norm_, &enc1_norm_, &enc2_norm_, &deconv_norm_, &dec1_norm_}) {
            out.emplace_back(n->scale.name() + ":running_mean", &n->running_mean);
            out.emplace_back(n->scale.name() + ":running_var", &n->running_var);
        }
        for (auto& b : blocks_)
            for (NormLayer* n : {&b.norm1, &b.norm2}) {
                out.emplace_back(n->scale.name() + ":running_mean", &n->running_mean);
                out.emplace_back(n->scale.name() + ":running_var", &n->running_var);
            }
    }
    return out;
}

void GCANet::save_checkpoint(const std::string& path) {
    std::vector<std::pair<std::string, const Tensor*>> entries;
    for (auto& [name, t] : named_tensors()) entries.emplace_back(name, t);
    save_tensors(path, entries);
    std::ofstream cfg(path + ".cfg", std::ios::trunc);
    if (!cfg) throw std::runtime_error("save_checkpoint: cannot write " + path + ".cfg");
    cfg << config_.serialize();
}

GCANet GCANet::load_checkpoint(const std::string& path) {
    std::ifstream cfg_in(path + ".cfg");
    if (!cfg_in) throw std::runtime_error("load_checkpoint: missing sidecar " + path + ".cfg");
    std::ostringstream cfg_text;
    cfg_text << cfg_in.rdbuf();
    GCANet model(ModelConfig::parse(cfg_text.str()), /*seed=*/0);

    auto loaded = load_tensors(path);
    auto expected = model.named_tensors();
    if (loaded.size() != expected.size())
        throw std::runtime_error("load_checkpoint: " + path + " holds " +
                                 std::to_string(loaded.size()) + " tensors, config implies " +
                                 std::to_string(expected.size()));
    for (auto& [name, dst] : expected) {
        auto it = loaded.find(name);
        if (it == loaded.end())
            throw std::runtime_error("load_checkpoint: missing tensor '" + name + "'");
        if (!(it->second.shape() == dst->shape()))
            throw std::runtime_error("load_checkpoint: tensor '" + name + "' has shape " +
                                     it->second.shape().str() + ", config implies " +
                                     dst->shape().str());
        *dst = std::move(it->second);
    }
    return model;
}

}  // namespace gcanet
