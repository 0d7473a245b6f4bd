#include "gcanet/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gcanet {

double psnr(const Tensor& a, const Tensor& b) {
    check_same_shape("psnr", a.shape(), b.shape());
    double mse = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> luma_plane(const Tensor& img) {
    const Shape s = img.shape();
    std::vector<double> out(s.h * s.w);
    for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x)
            out[y * s.w + x] =
                s.c == 1 ? img.at(0, 0, y, x)
                         : 0.299 * img.at(0, 0, y, x) + 0.587 * img.at(0, 1, y, x) +
                               0.114 * img.at(0, 2, y, x);
    return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    check_same_shape("ssim", a.shape(), b.shape());
    const Shape s = a.shape();
    if (s.n != 1)
        throw std::invalid_argument("ssim: expected a single image, got " + s.str());
    if (s.c != 1 && s.c != 3)
        throw std::invalid_argument("ssim: expected 1 or 3 channels, got " + s.str());
    if (s.h < kWindow || s.w < kWindow)
        throw std::invalid_argument("ssim: image " + s.str() + " smaller than the 11x11 window");

    double kernel[kWindow];
    double ksum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - (kWindow - 1) / 2.0;
        kernel[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        ksum += kernel[i];
    }
    for (auto& k : kernel) k /= ksum;

    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const std::vector<double> pa = luma_plane(a), pb = luma_plane(b);

    double total = 0.0;
    int64_t count = 0;
    for (int64_t y = 0; y + kWindow <= s.h; ++y)
        for (int64_t x = 0; x + kWindow <= s.w; ++x) {
            double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
            for (int i = 0; i < kWindow; ++i)
                for (int j = 0; j < kWindow; ++j) {
                    const double w = kernel[i] * kernel[j];
                    const double ua = pa[(y + i) * s.w + x + j];
                    const double ub = pb[(y + i) * s.w + x + j];
                    ma += w * ua;
                    mb += w * ub;
                    va += w * ua * ua;
                    vb += w * ub * ub;
                    cov += w * ua * ub;
                }
            va -= ma * ma;
            vb -= mb * mb;
            cov -= ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / count;
}

}  // namespace gcanet
