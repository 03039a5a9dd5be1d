#pragma once

#include <vector>

#include "texgen/common.hpp"

namespace texgen {

/// Signals live in [-1, 1], so the peak-to-peak range is 2.
inline constexpr double kSignalRange = 2.0;
/// Reported PSNR for identical inputs.
inline constexpr double kPsnrCap = 100.0;

/// PSNR over interleaved C-channel values; `mask` (one entry per texel, may be
/// empty for "all") selects the texels that count. Capped at kPsnrCap.
double psnr(const std::vector<double>& a, const std::vector<double>& b, int channels,
            const std::vector<double>& mask = {});
double psnr(const Grid& a, const Grid& b, const Grid* mask = nullptr);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// channels. Windows are clipped at the image border.
double ssim(const Grid& a, const Grid& b);

}  // namespace texgen
