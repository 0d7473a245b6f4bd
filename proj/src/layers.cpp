#include "gcanet/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace gcanet {

namespace {

int64_t reflect_index(int64_t i, int64_t n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

void check_conv_args(const Shape& xs, const Shape& ws, int64_t stride, int64_t dilation,
                     int64_t pad) {
    if (ws.h != ws.w || ws.h % 2 == 0)
        throw std::invalid_argument("conv2d: kernel must be square and odd, got " + ws.str());
    if (xs.c != ws.c)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(xs.c) +
                                    " do not match weight " + ws.str());
    if (stride < 1 || dilation < 1 || pad < 0)
        throw std::invalid_argument("conv2d: invalid stride/dilation/padding");
    const int64_t ext = dilation * (ws.h - 1) + 1;
    if (xs.h + 2 * pad < ext || xs.w + 2 * pad < ext)
        throw std::invalid_argument("conv2d: zero-size output for input " + xs.str() +
                                    " with kernel extent " + std::to_string(ext));
}

}  // namespace

Var reflect_pad(const Var& x, int64_t pad) {
    const Shape s = x->value.shape();
    if (pad == 0) return x;
    if (pad > s.h - 1 || pad > s.w - 1)
        throw std::invalid_argument("reflect_pad: padding " + std::to_string(pad) +
                                    " too large for " + s.str());
    const Shape os{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad};
    Tensor out(os);
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t oh = 0; oh < os.h; ++oh) {
                const int64_t ih = reflect_index(oh - pad, s.h);
                for (int64_t ow = 0; ow < os.w; ++ow)
                    out.at(n, c, oh, ow) = x->value.at(n, c, ih, reflect_index(ow - pad, s.w));
            }
    return make_node(std::move(out), {x}, [pad, s](Node& self) {
        Node& x = *self.parents[0];
        const Shape os = self.value.shape();
        for (int64_t n = 0; n < s.n; ++n)
            for (int64_t c = 0; c < s.c; ++c)
                for (int64_t oh = 0; oh < os.h; ++oh) {
                    const int64_t ih = reflect_index(oh - pad, s.h);
                    for (int64_t ow = 0; ow < os.w; ++ow)
                        x.grad.at(n, c, ih, reflect_index(ow - pad, s.w)) +=
                            self.grad.at(n, c, oh, ow);
                }
    });
}

Var conv2d_zero(const Var& x, const Var& weight, const Var& bias, int64_t stride,
                int64_t dilation, int64_t pad) {
    const Shape xs = x->value.shape();
    const Shape ws = weight->value.shape();
    check_conv_args(xs, ws, stride, dilation, pad);
    const int64_t k = ws.h, oc = ws.n, ic = ws.c;
    const int64_t ext = dilation * (k - 1) + 1;
    const int64_t oh_n = (xs.h + 2 * pad - ext) / stride + 1;
    const int64_t ow_n = (xs.w + 2 * pad - ext) / stride + 1;
    if (bias && bias->value.shape() != Shape{1, oc, 1, 1})
        throw std::invalid_argument("conv2d: bias shape " + bias->value.shape().str() +
                                    " does not match out channels " + std::to_string(oc));

    Tensor out(Shape{xs.n, oc, oh_n, ow_n});
    const double* X = x->value.data();
    const double* W = weight->value.data();
    double* Y = out.data();
    const int64_t xplane = xs.h * xs.w, yplane = oh_n * ow_n;
    for (int64_t n = 0; n < xs.n; ++n)
        for (int64_t o = 0; o < oc; ++o) {
            double* yp = Y + (n * oc + o) * yplane;
            if (bias) {
                const double b = bias->value[o];
                for (int64_t i = 0; i < yplane; ++i) yp[i] = b;
            }
            for (int64_t c = 0; c < ic; ++c) {
                const double* xp = X + (n * ic + c) * xplane;
                const double* wp = W + (o * ic + c) * k * k;
                for (int64_t kh = 0; kh < k; ++kh) {
                    const int64_t dh = kh * dilation - pad;
                    const int64_t oh_lo = std::max<int64_t>(0, (-dh + stride - 1) / stride);
                    const int64_t oh_hi = std::min(oh_n - 1, (xs.h - 1 - dh) / stride);
                    for (int64_t kw = 0; kw < k; ++kw) {
                        const double wv = wp[kh * k + kw];
                        if (wv == 0.0) continue;
                        const int64_t dw = kw * dilation - pad;
                        const int64_t ow_lo = std::max<int64_t>(0, (-dw + stride - 1) / stride);
                        const int64_t ow_hi = std::min(ow_n - 1, (xs.w - 1 - dw) / stride);
                        for (int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                            const double* xrow = xp + (oh * stride + dh) * xs.w + dw;
                            double* yrow = yp + oh * ow_n;
                            if (stride == 1)
                                for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                    yrow[ow] += wv * xrow[ow];
                            else
                                for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                    yrow[ow] += wv * xrow[ow * stride];
                        }
                    }
                }
            }
        }

    std::vector<Var> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make_node(
        std::move(out), std::move(parents), [stride, dilation, pad](Node& self) {
            Node& x = *self.parents[0];
            Node& w = *self.parents[1];
            Node* b = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
            const Shape xs = x.value.shape();
            const Shape ws = w.value.shape();
            const Shape ys = self.value.shape();
            const int64_t k = ws.h, oc = ws.n, ic = ws.c;
            const int64_t xplane = xs.h * xs.w, yplane = ys.h * ys.w;
            if (b && b->requires_grad)
                for (int64_t n = 0; n < xs.n; ++n)
                    for (int64_t o = 0; o < oc; ++o) {
                        const double* gy = self.grad.data() + (n * oc + o) * yplane;
                        double acc = 0.0;
                        for (int64_t i = 0; i < yplane; ++i) acc += gy[i];
                        b->grad[o] += acc;
                    }
            for (int64_t n = 0; n < xs.n; ++n)
                for (int64_t o = 0; o < oc; ++o) {
                    const double* gyp = self.grad.data() + (n * oc + o) * yplane;
                    for (int64_t c = 0; c < ic; ++c) {
                        const double* xp = x.value.data() + (n * ic + c) * xplane;
                        double* gxp = x.requires_grad ? x.grad.data() + (n * ic + c) * xplane
                                                      : nullptr;
                        const double* wp = w.value.data() + (o * ic + c) * k * k;
                        double* gwp =
                            w.requires_grad ? w.grad.data() + (o * ic + c) * k * k : nullptr;
                        for (int64_t kh = 0; kh < k; ++kh) {
                            const int64_t dh = kh * dilation - pad;
                            const int64_t oh_lo =
                                std::max<int64_t>(0, (-dh + stride - 1) / stride);
                            const int64_t oh_hi = std::min(ys.h - 1, (xs.h - 1 - dh) / stride);
                            for (int64_t kw = 0; kw < k; ++kw) {
                                const int64_t dw = kw * dilation - pad;
                                const int64_t ow_lo =
                                    std::max<int64_t>(0, (-dw + stride - 1) / stride);
                                const int64_t ow_hi =
                                    std::min(ys.w - 1, (xs.w - 1 - dw) / stride);
                                const double wv = wp[kh * k + kw];
                                double wacc = 0.0;
                                for (int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                                    const double* gyrow = gyp + oh * ys.w;
                                    const int64_t base = (oh * stride + dh) * xs.w + dw;
                                    if (gxp) {
                                        double* gxrow = gxp + base;
                                        for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                            gxrow[ow * stride] += wv * gyrow[ow];
                                    }
                                    if (gwp) {
                                        const double* xrow = xp + base;
                                        for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                            wacc += xrow[ow * stride] * gyrow[ow];
                                    }
                                }
                                if (gwp) gwp[kh * k + kw] += wacc;
                            }
                        }
                    }
                }
        });
}

Var conv2d(const Var& x, const Conv2dSpec& spec, const Var& weight, const Var& bias) {
    const Shape xs = x->value.shape();
    if (xs.c != spec.in_channels)
        throw std::invalid_argument("conv2d: expected " + std::to_string(spec.in_channels) +
                                    " input channels, got " + xs.str());
    const int64_t pad = spec.same_pad();
    if (spec.pad_mode == PadMode::reflect && pad > 0)
        return conv2d_zero(reflect_pad(x, pad), weight, bias, spec.stride, spec.dilation, 0);
    return conv2d_zero(x, weight, bias, spec.stride, spec.dilation, pad);
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int64_t stride,
                     int64_t pad, int64_t out_pad) {
    const Shape xs = x->value.shape();
    const Shape ws = weight->value.shape();  // (ic, oc, k, k)
    if (ws.n != xs.c)
        throw std::invalid_argument("conv_transpose2d: input channels " + std::to_string(xs.c) +
                                    " do not match weight " + ws.str());
    if (ws.h != ws.w) throw std::invalid_argument("conv_transpose2d: non-square kernel");
    const int64_t k = ws.h, ic = ws.n, oc = ws.c;
    const int64_t oh_n = (xs.h - 1) * stride - 2 * pad + k + out_pad;
    const int64_t ow_n = (xs.w - 1) * stride - 2 * pad + k + out_pad;
    if (oh_n < 1 || ow_n < 1) throw std::invalid_argument("conv_transpose2d: zero-size output");
    if (bias && bias->value.shape() != Shape{1, oc, 1, 1})
        throw std::invalid_argument("conv_transpose2d: bad bias shape");

    Tensor out(Shape{xs.n, oc, oh_n, ow_n});
    const int64_t xplane = xs.h * xs.w, yplane = oh_n * ow_n;
    for (int64_t n = 0; n < xs.n; ++n)
        for (int64_t o = 0; o < oc; ++o) {
            double* yp = out.data() + (n * oc + o) * yplane;
            if (bias) {
                const double b = bias->value[o];
                for (int64_t i = 0; i < yplane; ++i) yp[i] = b;
            }
            for (int64_t c = 0; c < ic; ++c) {
                const double* xp = x->value.data() + (n * ic + c) * xplane;
                const double* wp = weight->value.data() + (c * oc + o) * k * k;
                for (int64_t kh = 0; kh < k; ++kh)
                    for (int64_t kw = 0; kw < k; ++kw) {
                        const double wv = wp[kh * k + kw];
                        for (int64_t ih = 0; ih < xs.h; ++ih) {
                            const int64_t oh = ih * stride - pad + kh;
                            if (oh < 0 || oh >= oh_n) continue;
                            const double* xrow = xp + ih * xs.w;
                            double* yrow = yp + oh * ow_n;
                            for (int64_t iw = 0; iw < xs.w; ++iw) {
                                const int64_t ow = iw * stride - pad + kw;
                                if (ow >= 0 && ow < ow_n) yrow[ow] += wv * xrow[iw];
                            }
                        }
                    }
            }
        }

    std::vector<Var> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make_node(std::move(out), std::move(parents), [stride, pad](Node& self) {
        Node& x = *self.parents[0];
        Node& w = *self.parents[1];
        Node* b = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        const Shape xs = x.value.shape();
        const Shape ws = w.value.shape();
        const Shape ys = self.value.shape();
        const int64_t k = ws.h, ic = ws.n, oc = ws.c;
        const int64_t xplane = xs.h * xs.w, yplane = ys.h * ys.w;
        if (b && b->requires_grad)
            for (int64_t n = 0; n < xs.n; ++n)
                for (int64_t o = 0; o < oc; ++o) {
                    const double* gy = self.grad.data() + (n * oc + o) * yplane;
                    double acc = 0.0;
                    for (int64_t i = 0; i < yplane; ++i) acc += gy[i];
                    b->grad[o] += acc;
                }
        for (int64_t n = 0; n < xs.n; ++n)
            for (int64_t o = 0; o < oc; ++o) {
                const double* gyp = self.grad.data() + (n * oc + o) * yplane;
                for (int64_t c = 0; c < ic; ++c) {
                    const double* xp = x.value.data() + (n * ic + c) * xplane;
                    double* gxp =
                        x.requires_grad ? x.grad.data() + (n * ic + c) * xplane : nullptr;
                    double* gwp =
                        w.requires_grad ? w.grad.data() + (c * oc + o) * k * k : nullptr;
                    const double* wp = w.value.data() + (c * oc + o) * k * k;
                    for (int64_t kh = 0; kh < k; ++kh)
                        for (int64_t kw = 0; kw < k; ++kw) {
                            const double wv = wp[kh * k + kw];
                            double wacc = 0.0;
                            for (int64_t ih = 0; ih < xs.h; ++ih) {
                                const int64_t oh = ih * stride - pad + kh;
                                if (oh < 0 || oh >= ys.h) continue;
                                const double* gyrow = gyp + oh * ys.w;
                                for (int64_t iw = 0; iw < xs.w; ++iw) {
                                    const int64_t ow = iw * stride - pad + kw;
                                    if (ow < 0 || ow >= ys.w) continue;
                                    if (gxp) gxp[ih * xs.w + iw] += wv * gyrow[ow];
                                    wacc += xp[ih * xs.w + iw] * gyrow[ow];
                                }
                            }
                            if (gwp) gwp[kh * k + kw] += wacc;
                        }
                }
            }
    });
}

Var shared_separable_conv(const Var& x, int64_t dilation_rate, const Var& weight) {
    const int64_t k = 2 * dilation_rate - 1;
    const Shape ws = weight->value.shape();
    if (ws != Shape{1, 1, k, k})
        throw std::invalid_argument("shared_separable_conv: weight plane must be (1,1," +
                                    std::to_string(k) + "," + std::to_string(k) + "), got " +
                                    ws.str());
    const Shape xs = x->value.shape();
    const int64_t pad = (k - 1) / 2;
    const Var xp = reflect_pad(x, pad);
    const Shape ps = xp->value.shape();

    Tensor out(xs);
    const int64_t pplane = ps.h * ps.w, plane = xs.h * xs.w;
    const double* W = weight->value.data();
    for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
        const double* src = xp->value.data() + nc * pplane;
        double* dst = out.data() + nc * plane;
        for (int64_t kh = 0; kh < k; ++kh)
            for (int64_t kw = 0; kw < k; ++kw) {
                const double wv = W[kh * k + kw];
                if (wv == 0.0) continue;
                for (int64_t oh = 0; oh < xs.h; ++oh) {
                    const double* srow = src + (oh + kh) * ps.w + kw;
                    double* drow = dst + oh * xs.w;
                    for (int64_t ow = 0; ow < xs.w; ++ow) drow[ow] += wv * srow[ow];
                }
            }
    }
    return make_node(std::move(out), {xp, weight}, [k](Node& self) {
        Node& xp = *self.parents[0];
        Node& w = *self.parents[1];
        const Shape ys = self.value.shape();
        const Shape ps = xp.value.shape();
        const int64_t pplane = ps.h * ps.w, plane = ys.h * ys.w;
        for (int64_t nc = 0; nc < ys.n * ys.c; ++nc) {
            const double* gy = self.grad.data() + nc * plane;
            const double* src = xp.value.data() + nc * pplane;
            double* gx = xp.requires_grad ? xp.grad.data() + nc * pplane : nullptr;
            for (int64_t kh = 0; kh < k; ++kh)
                for (int64_t kw = 0; kw < k; ++kw) {
                    const double wv = w.value[kh * k + kw];
                    double wacc = 0.0;
                    for (int64_t oh = 0; oh < ys.h; ++oh) {
                        const double* gyrow = gy + oh * ys.w;
                        const int64_t base = (oh + kh) * ps.w + kw;
                        if (gx) {
                            double* gxrow = gx + base;
                            for (int64_t ow = 0; ow < ys.w; ++ow) gxrow[ow] += wv * gyrow[ow];
                        }
                        if (w.requires_grad) {
                            const double* srow = src + base;
                            for (int64_t ow = 0; ow < ys.w; ++ow) wacc += srow[ow] * gyrow[ow];
                        }
                    }
                    if (w.requires_grad) w.grad[kh * k + kw] += wacc;
                }
        }
    });
}

namespace {

// shared normalization kernel: groups of m contiguous-strided elements
// identified by an index function; used by both norm kinds
struct NormStats {
    std::vector<double> mean, inv_std;
};

}  // namespace

Var instance_norm(const Var& x, const Var& scale, const Var& shift, double eps) {
    const Shape s = x->value.shape();
    if (s.h * s.w <= 1)
        throw std::invalid_argument("instance_norm: spatial size must exceed 1, got " + s.str());
    if (eps <= 0) throw std::invalid_argument("instance_norm: epsilon must be positive");
    if (scale->value.shape() != Shape{1, s.c, 1, 1} ||
        shift->value.shape() != Shape{1, s.c, 1, 1})
        throw std::invalid_argument("instance_norm: affine params must be (1,c,1,1)");

    const int64_t m = s.h * s.w;
    auto stats = std::make_shared<NormStats>();
    stats->mean.resize(s.n * s.c);
    stats->inv_std.resize(s.n * s.c);
    Tensor out(s);
    for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
        const double* xp = x->value.data() + nc * m;
        double mu = 0.0;
        for (int64_t i = 0; i < m; ++i) mu += xp[i];
        mu /= m;
        double var = 0.0;
        for (int64_t i = 0; i < m; ++i) var += (xp[i] - mu) * (xp[i] - mu);
        var /= m;
        const double inv = 1.0 / std::sqrt(var + eps);
        stats->mean[nc] = mu;
        stats->inv_std[nc] = inv;
        const int64_t c = nc % s.c;
        const double g = scale->value[c], b = shift->value[c];
        double* yp = out.data() + nc * m;
        for (int64_t i = 0; i < m; ++i) yp[i] = g * (xp[i] - mu) * inv + b;
    }
    return make_node(std::move(out), {x, scale, shift}, [stats, m](Node& self) {
        Node& x = *self.parents[0];
        Node& scale = *self.parents[1];
        Node& shift = *self.parents[2];
        const Shape s = x.value.shape();
        for (int64_t nc = 0; nc < s.n * s.c; ++nc) {
            const int64_t c = nc % s.c;
            const double mu = stats->mean[nc], inv = stats->inv_std[nc];
            const double g = scale.value[c];
            const double* xp = x.value.data() + nc * m;
            const double* gy = self.grad.data() + nc * m;
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (int64_t i = 0; i < m; ++i) {
                const double xhat = (xp[i] - mu) * inv;
                sum_gy += gy[i];
                sum_gy_xhat += gy[i] * xhat;
            }
            if (shift.requires_grad) shift.grad[c] += sum_gy;
            if (scale.requires_grad) scale.grad[c] += sum_gy_xhat;
            if (x.requires_grad) {
                double* gx = x.grad.data() + nc * m;
                const double mg = sum_gy / m, mgx = sum_gy_xhat / m;
                for (int64_t i = 0; i < m; ++i) {
                    const double xhat = (xp[i] - mu) * inv;
                    gx[i] += g * inv * (gy[i] - mg - xhat * mgx);
                }
            }
        }
    });
}

Var batch_norm(const Var& x, const Var& scale, const Var& shift, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum, double eps) {
    const Shape s = x->value.shape();
    if (scale->value.shape() != Shape{1, s.c, 1, 1})
        throw std::invalid_argument("batch_norm: affine params must be (1,c,1,1)");
    const int64_t plane = s.h * s.w;
    const int64_t m = s.n * plane;
    if (m <= 1) throw std::invalid_argument("batch_norm: normalization group must exceed 1");

    auto stats = std::make_shared<NormStats>();
    stats->mean.resize(s.c);
    stats->inv_std.resize(s.c);
    for (int64_t c = 0; c < s.c; ++c) {
        double mu, var;
        if (training) {
            mu = 0.0;
            for (int64_t n = 0; n < s.n; ++n) {
                const double* xp = x->value.data() + (n * s.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) mu += xp[i];
            }
            mu /= m;
            var = 0.0;
            for (int64_t n = 0; n < s.n; ++n) {
                const double* xp = x->value.data() + (n * s.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) var += (xp[i] - mu) * (xp[i] - mu);
            }
            var /= m;
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
        } else {
            mu = running_mean[c];
            var = running_var[c];
        }
        stats->mean[c] = mu;
        stats->inv_std[c] = 1.0 / std::sqrt(var + eps);
    }

    Tensor out(s);
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c) {
            const double mu = stats->mean[c], inv = stats->inv_std[c];
            const double g = scale->value[c], b = shift->value[c];
            const double* xp = x->value.data() + (n * s.c + c) * plane;
            double* yp = out.data() + (n * s.c + c) * plane;
            for (int64_t i = 0; i < plane; ++i) yp[i] = g * (xp[i] - mu) * inv + b;
        }
    return make_node(
        std::move(out), {x, scale, shift}, [stats, training, plane, m](Node& self) {
            Node& x = *self.parents[0];
            Node& scale = *self.parents[1];
            Node& shift = *self.parents[2];
            const Shape s = x.value.shape();
            for (int64_t c = 0; c < s.c; ++c) {
                const double mu = stats->mean[c], inv = stats->inv_std[c];
                const double g = scale.value[c];
                double sum_gy = 0.0, sum_gy_xhat = 0.0;
                for (int64_t n = 0; n < s.n; ++n) {
                    const double* xp = x.value.data() + (n * s.c + c) * plane;
                    const double* gy = self.grad.data() + (n * s.c + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        sum_gy += gy[i];
                        sum_gy_xhat += gy[i] * (xp[i] - mu) * inv;
                    }
                }
                if (shift.requires_grad) shift.grad[c] += sum_gy;
                if (scale.requires_grad) scale.grad[c] += sum_gy_xhat;
                if (!x.requires_grad) continue;
                const double mg = sum_gy / m, mgx = sum_gy_xhat / m;
                for (int64_t n = 0; n < s.n; ++n) {
                    const double* xp = x.value.data() + (n * s.c + c) * plane;
                    const double* gy = self.grad.data() + (n * s.c + c) * plane;
                    double* gx = x.grad.data() + (n * s.c + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        const double xhat = (xp[i] - mu) * inv;
                        if (training)
                            gx[i] += g * inv * (gy[i] - mg - xhat * mgx);
                        else
                            gx[i] += g * inv * gy[i];
                    }
                }
            }
        });
}

// ---- layers ----

Tensor kaiming_uniform(Shape s, int64_t fan_in, std::mt19937_64& rng) {
    Tensor t(s);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

Conv2dLayer::Conv2dLayer(Conv2dSpec sp, const std::string& name, std::mt19937_64& rng)
    : spec(sp) {
    if (spec.kernel_size % 2 == 0)
        throw std::invalid_argument("Conv2dLayer: kernel size must be odd");
    const Shape ws{spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size};
    weight = Parameter(
        kaiming_uniform(ws, spec.in_channels * spec.kernel_size * spec.kernel_size, rng),
        name + ".weight");
    if (spec.has_bias) bias = Parameter(Tensor(Shape{1, spec.out_channels, 1, 1}), name + ".bias");
}

Var Conv2dLayer::forward(const Var& x) const {
    return conv2d(x, spec, weight.var, spec.has_bias ? bias.var : Var{});
}

void Conv2dLayer::collect(ParamList& out) {
    out.push_back(&weight);
    if (spec.has_bias) out.push_back(&bias);
}

ConvTranspose2dLayer::ConvTranspose2dLayer(int64_t in_ch, int64_t out_ch,
                                           const std::string& name, std::mt19937_64& rng)
    : in_channels(in_ch), out_channels(out_ch) {
    const Shape ws{in_ch, out_ch, kernel_size, kernel_size};
    weight = Parameter(kaiming_uniform(ws, in_ch * kernel_size * kernel_size, rng),
                       name + ".weight");
    bias = Parameter(Tensor(Shape{1, out_ch, 1, 1}), name + ".bias");
}

Var ConvTranspose2dLayer::forward(const Var& x) const {
    return conv_transpose2d(x, weight.var, bias.var, /*stride=*/2, /*pad=*/1, /*out_pad=*/1);
}

void ConvTranspose2dLayer::collect(ParamList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

SharedSeparableConv::SharedSeparableConv(int64_t r, const std::string& name) : dilation_rate(r) {
    const int64_t k = 2 * r - 1;
    Tensor plane(Shape{1, 1, k, k});
    plane.at(0, 0, (k - 1) / 2, (k - 1) / 2) = 1.0;  // delta: starts as identity
    weight = Parameter(std::move(plane), name + ".weight");
}

Var SharedSeparableConv::forward(const Var& x) const {
    return shared_separable_conv(x, dilation_rate, weight.var);
}

void SharedSeparableConv::collect(ParamList& out) { out.push_back(&weight); }

NormLayer::NormLayer(NormKind k, int64_t channels, const std::string& name) : kind(k) {
    if (kind == NormKind::none) return;
    scale = Parameter(Tensor(Shape{1, channels, 1, 1}, 1.0), name + ".scale");
    shift = Parameter(Tensor(Shape{1, channels, 1, 1}, 0.0), name + ".shift");
    if (kind == NormKind::batch) {
        running_mean = Tensor(Shape{1, channels, 1, 1}, 0.0);
        running_var = Tensor(Shape{1, channels, 1, 1}, 1.0);
    }
}

Var NormLayer::forward(const Var& x, bool training) {
    switch (kind) {
        case NormKind::none:
            return x;
        case NormKind::instance:
            return instance_norm(x, scale.var, shift.var, eps);
        case NormKind::batch:
            return batch_norm(x, scale.var, shift.var, running_mean, running_var, training,
                              momentum, eps);
    }
    throw std::logic_error("NormLayer: bad kind");
}

void NormLayer::collect(ParamList& out) {
    if (kind == NormKind::none) return;
    out.push_back(&scale);
    out.push_back(&shift);
}

SmoothedDilatedResblock::SmoothedDilatedResblock(int64_t channels, int64_t r, bool smooth,
                                                 NormKind norm_kind, const std::string& name,
                                                 std::mt19937_64& rng)
    : smoothed(smooth) {
    Conv2dSpec cs;
    cs.in_channels = cs.out_channels = channels;
    cs.dilation = r;
    if (smoothed) {
        pre1 = SharedSeparableConv(r, name + ".pre1");
        pre2 = SharedSeparableConv(r, name + ".pre2");
    }
    conv1 = Conv2dLayer(cs, name + ".conv1", rng);
    conv2 = Conv2dLayer(cs, name + ".conv2", rng);
    norm1 = NormLayer(norm_kind, channels, name + ".norm1");
    norm2 = NormLayer(norm_kind, channels, name + ".norm2");
}

Var SmoothedDilatedResblock::forward(const Var& x, bool training) {
    Var h = smoothed ? pre1.forward(x) : x;
    h = relu(norm1.forward(conv1.forward(h), training));
    if (smoothed) h = pre2.forward(h);
    h = norm2.forward(conv2.forward(h), training);
    return add(x, h);
}

void SmoothedDilatedResblock::collect(ParamList& out) {
    if (smoothed) {
        pre1.collect(out);
        pre2.collect(out);
    }
    conv1.collect(out);
    norm1.collect(out);
    conv2.collect(out);
    norm2.collect(out);
}

}  // namespace gcanet
