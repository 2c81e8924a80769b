#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "anonreid/tensor.hpp"

namespace anonreid {

// HWC image, 3 channels, values in [0,1].
struct Image {
    int h = 0, w = 0;
    std::vector<real> v;  // h*w*3

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_ * 3, 0) {
        if (h_ < 1 || w_ < 1) throw std::invalid_argument("Image: non-positive dims");
    }
    Image(int h_, int w_, real fill) : Image(h_, w_) { std::fill(v.begin(), v.end(), fill); }

    real& at(int y, int x, int c) { return v[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    real at(int y, int x, int c) const { return v[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    long numel() const { return static_cast<long>(v.size()); }
};

enum class DesensitizeKind { blur, pixelate, gaussian_noise };

struct DesensitizeMethod {
    DesensitizeKind kind = DesensitizeKind::blur;
    int blur_kernel = 12;
    int pixel_block = 24;
    real noise_variance = 0.5;
    uint64_t noise_seed = 0;
};

DesensitizeKind desensitize_kind_from_string(const std::string& s);
std::string to_string(DesensitizeKind k);

// Bilinear resize, half-pixel-center convention, edge clamped.
Image resize(const Image& img, int h, int w);

// Box mean over an edge-replicated kernel x kernel neighborhood. For even
// kernels the window is anchored top-left of center (offsets -k/2 .. k/2-1).
Image blur(const Image& img, int kernel = 12);

// Gaussian-kernel variant of blur, same interface (sigma = kernel/6 by default).
Image gaussian_blur(const Image& img, int kernel = 12, real sigma = 0);

// Tile means over block x block tiles; ragged border tiles use the true mean.
Image pixelate(const Image& img, int block = 24);

// i.i.d. zero-mean Gaussian noise of the given variance, clamped to [0,1].
Image add_gaussian_noise(const Image& img, real variance, uint64_t seed);

Image desensitize(const Image& img, const DesensitizeMethod& method);

// 8-bit conversions: value/255 in, round(value*255) clamped out.
Image from_bytes(const std::vector<uint8_t>& bytes, int h, int w);
std::vector<uint8_t> to_bytes(const Image& img);

// Lossless file round-trip (PNG and friends via OpenCV).
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

// NCHW batch <-> image conversions for the network side.
Tensor images_to_batch(const std::vector<Image>& imgs);
std::vector<Image> batch_to_images(const Tensor& batch);

}  // namespace anonreid
