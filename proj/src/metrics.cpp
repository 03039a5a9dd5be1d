#include "texgen/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace texgen {

double psnr(const std::vector<double>& a, const std::vector<double>& b, int channels,
            const std::vector<double>& mask) {
    require(channels > 0, "psnr: channels must be positive");
    require(a.size() == b.size() && a.size() % channels == 0, "psnr: size mismatch");
    const size_t texels = a.size() / channels;
    require(mask.empty() || mask.size() == texels, "psnr: mask size mismatch");
    double se = 0;
    size_t n = 0;
    for (size_t p = 0; p < texels; ++p) {
        if (!mask.empty() && mask[p] <= 0.5) continue;
        for (int c = 0; c < channels; ++c) {
            const double d = a[p * channels + c] - b[p * channels + c];
            se += d * d;
        }
        n += channels;
    }
    require(n > 0, "psnr: empty selection");
    const double mse = se / static_cast<double>(n);
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(kSignalRange * kSignalRange / mse));
}

double psnr(const Grid& a, const Grid& b, const Grid* mask) {
    require(a.same_shape(b), "psnr: shape mismatch");
    if (mask) require(static_cast<size_t>(mask->height) * mask->width == a.texels(), "psnr: mask shape mismatch");
    return psnr(a.data, b.data, a.channels, mask ? mask->data : std::vector<double>{});
}

namespace {

// Separable Gaussian blur with border renormalization.
std::vector<double> blur(const std::vector<double>& img, int h, int w, const std::vector<double>& k) {
    const int r = static_cast<int>(k.size() / 2);
    std::vector<double> tmp(img.size()), out(img.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0, ws = 0;
            for (int d = -r; d <= r; ++d) {
                const int xx = x + d;
                if (xx < 0 || xx >= w) continue;
                s += k[d + r] * img[static_cast<size_t>(y) * w + xx];
                ws += k[d + r];
            }
            tmp[static_cast<size_t>(y) * w + x] = s / ws;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0, ws = 0;
            for (int d = -r; d <= r; ++d) {
                const int yy = y + d;
                if (yy < 0 || yy >= h) continue;
                s += k[d + r] * tmp[static_cast<size_t>(yy) * w + x];
                ws += k[d + r];
            }
            out[static_cast<size_t>(y) * w + x] = s / ws;
        }
    return out;
}

}  // namespace

double ssim(const Grid& a, const Grid& b) {
    require(a.same_shape(b) && a.texels() > 0, "ssim: shape mismatch");
    std::vector<double> k(11);
    for (int i = 0; i < 11; ++i) k[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
    const double c1 = std::pow(0.01 * kSignalRange, 2), c2 = std::pow(0.03 * kSignalRange, 2);
    const int h = a.height, w = a.width;
    const size_t n = a.texels();
    double total = 0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (size_t p = 0; p < n; ++p) {
            x[p] = a.data[p * a.channels + c];
            y[p] = b.data[p * b.channels + c];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mx = blur(x, h, w, k), my = blur(y, h, w, k);
        const auto sxx = blur(xx, h, w, k), syy = blur(yy, h, w, k), sxy = blur(xy, h, w, k);
        double s = 0;
        for (size_t p = 0; p < n; ++p) {
            const double vx = sxx[p] - mx[p] * mx[p], vy = syy[p] - my[p] * my[p], cv = sxy[p] - mx[p] * my[p];
            s += ((2 * mx[p] * my[p] + c1) * (2 * cv + c2)) /
                 ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
        }
        total += s / static_cast<double>(n);
    }
    return total / a.channels;
}

}  // namespace texgen
