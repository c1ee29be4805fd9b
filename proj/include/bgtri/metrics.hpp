#pragma once

#include "bgtri/types.hpp"

#include <span>
#include <vector>

namespace bgt {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

double mse(const Image& a, const Image& b);

/// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over valid 11x11 window positions, averaged over channels.
double ssim(const Image& a, const Image& b);

/// SSIM together with d(SSIM)/d(a).
double ssim_with_gradient(const Image& a, const Image& b, Image* d_a);

/// Normalized 1D Gaussian taps of the SSIM window.
std::vector<double> ssim_taps();

/// Luma (0.299, 0.587, 0.114) of an RGB image, multiplied by `scale`.
Image grayscale(const Image& rgb, double scale = 1.0);

/// 3x3 Sobel gradient magnitude of a single-channel image; borders replicate.
Image sobel_magnitude(const Image& gray);

/// Mean Sobel magnitude of the grayscale image over `mask` (non-zero entries).
double edge_sharpness(const Image& rgb, std::span<const std::uint8_t> mask);

/// Symmetric Chamfer distance: half the sum of both directed mean
/// nearest-neighbour distances.
double chamfer(std::span<const Vec3> p, std::span<const Vec3> q);
double chamfer_bruteforce(std::span<const Vec3> p, std::span<const Vec3> q);
double chamfer_grid(std::span<const Vec3> p, std::span<const Vec3> q);

}  // namespace bgt
