#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "evifuse/image.hpp"

// Multiscale Hessian vesselness: Gaussian second-derivative responses at each
// scale, closed-form 2x2 eigenvalues, and the ridge measure
// V = exp(-R_B^2 / 2 beta^2) * (1 - exp(-S^2 / 2 c^2)), maximized over scales.

namespace evifuse {

enum class Polarity { DarkOnBright, BrightOnDark };

struct FrangiParams {
  std::vector<double> scales{1.0, 2.0, 3.0, 4.0};  // Gaussian sigmas in pixels
  double beta = 0.5;
  double c = 15.0 / 255.0;
  Polarity polarity = Polarity::DarkOnBright;

  void validate() const {
    if (scales.empty()) throw std::invalid_argument("frangi: scales must be non-empty");
    for (const double s : scales) {
      if (!(s > 0.0)) throw std::invalid_argument("frangi: scales must be positive");
    }
    if (!(beta > 0.0) || !(c > 0.0)) {
      throw std::invalid_argument("frangi: beta and c must be positive");
    }
  }
};

struct HessianImages {
  GrayImage ixx;  // reused container; values are unbounded derivative responses
  GrayImage ixy;
  GrayImage iyy;
};

namespace detail {

struct GaussianKernels {
  std::vector<double> g;   // smoothing, sum 1
  std::vector<double> g1;  // first derivative
  std::vector<double> g2;  // second derivative, zero-mean corrected
  int radius = 0;
};

inline GaussianKernels build_kernels(double sigma) {
  GaussianKernels k;
  k.radius = static_cast<int>(std::ceil(4.0 * sigma));
  const std::size_t size = static_cast<std::size_t>(2 * k.radius + 1);
  k.g.resize(size);
  k.g1.resize(size);
  k.g2.resize(size);
  const double s2 = sigma * sigma;
  double norm = 0.0;
  for (int i = -k.radius; i <= k.radius; ++i) {
    const double raw = std::exp(-0.5 * i * i / s2);
    k.g[static_cast<std::size_t>(i + k.radius)] = raw;
    k.g1[static_cast<std::size_t>(i + k.radius)] = -(i / s2) * raw;
    k.g2[static_cast<std::size_t>(i + k.radius)] = ((i * i - s2) / (s2 * s2)) * raw;
    norm += raw;
  }
  double g2_sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    k.g[i] /= norm;
    k.g1[i] /= norm;
    k.g2[i] /= norm;
    g2_sum += k.g2[i];
  }
  // force the second-derivative kernel to annihilate constants exactly
  const double correction = g2_sum / static_cast<double>(size);
  for (double& v : k.g2) v -= correction;
  // Calibrate the discrete moments so the truncated sampled kernels reproduce
  // derivatives of polynomials exactly: sum i*g1[i] = -1, sum i^2*g2[i] = 2.
  double m1 = 0.0;
  double m2 = 0.0;
  for (int i = -k.radius; i <= k.radius; ++i) {
    const double di = static_cast<double>(i);
    m1 += di * k.g1[static_cast<std::size_t>(i + k.radius)];
    m2 += di * di * k.g2[static_cast<std::size_t>(i + k.radius)];
  }
  for (double& v : k.g1) v *= -1.0 / m1;
  for (double& v : k.g2) v *= 2.0 / m2;
  return k;
}

inline std::size_t reflect(long long idx, std::size_t n) {
  const long long last = static_cast<long long>(n) - 1;
  if (idx < 0) idx = -idx;
  if (idx > last) idx = 2 * last - idx;
  return static_cast<std::size_t>(idx);
}

// Separable convolution: `horizontal` along rows, then `vertical` along columns.
inline GrayImage convolve_separable(const GrayImage& img, const std::vector<double>& horizontal,
                                    const std::vector<double>& vertical, int radius) {
  GrayImage tmp = make_image(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const std::size_t sx = reflect(static_cast<long long>(x) + i, img.width);
        acc += horizontal[static_cast<std::size_t>(i + radius)] * img.at(sx, y);
      }
      tmp.at(x, y) = acc;
    }
  }
  GrayImage out = make_image(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const std::size_t sy = reflect(static_cast<long long>(y) + i, img.height);
        acc += vertical[static_cast<std::size_t>(i + radius)] * tmp.at(x, sy);
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

inline void require_kernel_fits(const GrayImage& img, double sigma) {
  const std::size_t kernel = 2 * static_cast<std::size_t>(std::ceil(4.0 * sigma)) + 1;
  if (img.width < kernel || img.height < kernel) {
    throw std::invalid_argument("frangi: image too small for the largest kernel (sigma " +
                                std::to_string(sigma) + " needs " + std::to_string(kernel) +
                                " px)");
  }
}

}  // namespace detail

/// Scale-normalized Gaussian second derivatives via separable convolution with
/// sampled kernels truncated at radius ceil(4 sigma), reflect-padded borders.
inline HessianImages gaussian_second_derivatives(const GrayImage& img, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("frangi: sigma must be positive");
  img.validate();
  detail::require_kernel_fits(img, sigma);
  const detail::GaussianKernels k = detail::build_kernels(sigma);
  const double s2 = sigma * sigma;
  HessianImages h{detail::convolve_separable(img, k.g2, k.g, k.radius),
                  detail::convolve_separable(img, k.g1, k.g1, k.radius),
                  detail::convolve_separable(img, k.g, k.g2, k.radius)};
  for (double& v : h.ixx.data) v *= s2;
  for (double& v : h.ixy.data) v *= s2;
  for (double& v : h.iyy.data) v *= s2;
  return h;
}

/// Eigenvalues of [[ixx, ixy], [ixy, iyy]] ordered |lambda1| <= |lambda2|;
/// exact magnitude ties fall back to signed order.
inline void hessian_eigenvalues(double ixx, double ixy, double iyy, double& lambda1,
                                double& lambda2) {
  const double half_trace = 0.5 * (ixx + iyy);
  const double disc = std::sqrt(0.25 * (ixx - iyy) * (ixx - iyy) + ixy * ixy);
  const double lo = half_trace - disc;
  const double hi = half_trace + disc;
  if (std::abs(lo) < std::abs(hi) || (std::abs(lo) == std::abs(hi) && lo <= hi)) {
    lambda1 = lo;
    lambda2 = hi;
  } else {
    lambda1 = hi;
    lambda2 = lo;
  }
}

/// Per-pixel vesselness from precomputed Hessian responses.
inline GrayImage vesselness_at_scale(const HessianImages& h, const FrangiParams& params) {
  params.validate();
  if (h.ixy.width != h.ixx.width || h.iyy.width != h.ixx.width ||
      h.ixy.height != h.ixx.height || h.iyy.height != h.ixx.height) {
    throw std::invalid_argument("frangi: Hessian image dimensions differ");
  }
  GrayImage out = make_image(h.ixx.width, h.ixx.height);
  const double two_beta_sq = 2.0 * params.beta * params.beta;
  const double two_c_sq = 2.0 * params.c * params.c;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    double l1 = 0.0;
    double l2 = 0.0;
    hessian_eigenvalues(h.ixx.data[i], h.ixy.data[i], h.iyy.data[i], l1, l2);
    const bool wanted_sign =
        params.polarity == Polarity::DarkOnBright ? (l2 > 0.0) : (l2 < 0.0);
    if (!wanted_sign) continue;  // leaves 0
    const double rb = l1 / l2;
    const double s_sq = l1 * l1 + l2 * l2;
    out.data[i] = std::exp(-rb * rb / two_beta_sq) * (1.0 - std::exp(-s_sq / two_c_sq));
  }
  return out;
}

/// Pixelwise maximum of the vesselness over all configured scales.
inline GrayImage frangi_filter(const GrayImage& img, const FrangiParams& params) {
  params.validate();
  img.validate();
  for (const double sigma : params.scales) detail::require_kernel_fits(img, sigma);
  GrayImage out = make_image(img.width, img.height);
  for (const double sigma : params.scales) {
    const GrayImage v = vesselness_at_scale(gaussian_second_derivatives(img, sigma), params);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(out.data[i], v.data[i]);
  }
  return out;
}

}  // namespace evifuse
