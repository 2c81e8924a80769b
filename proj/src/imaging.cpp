#include "anonreid/imaging.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace anonreid {

DesensitizeKind desensitize_kind_from_string(const std::string& s) {
    if (s == "blur") return DesensitizeKind::blur;
    if (s == "pixelate") return DesensitizeKind::pixelate;
    if (s == "gaussian_noise" || s == "noise") return DesensitizeKind::gaussian_noise;
    throw std::invalid_argument("unknown desensitize kind: " + s);
}

std::string to_string(DesensitizeKind k) {
    switch (k) {
        case DesensitizeKind::blur: return "blur";
        case DesensitizeKind::pixelate: return "pixelate";
        case DesensitizeKind::gaussian_noise: return "gaussian_noise";
    }
    throw std::invalid_argument("unknown desensitize kind");
}

static real clamp01(real x) { return std::min(real(1), std::max(real(0), x)); }

Image resize(const Image& img, int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("resize: non-positive dims");
    if (h == img.h && w == img.w) return img;
    Image out(h, w);
    const real sy = static_cast<real>(img.h) / h;
    const real sx = static_cast<real>(img.w) / w;
    for (int y = 0; y < h; ++y) {
        real fy = (y + real(0.5)) * sy - real(0.5);
        int y0 = static_cast<int>(std::floor(fy));
        real wy = fy - y0;
        int ya = std::clamp(y0, 0, img.h - 1);
        int yb = std::clamp(y0 + 1, 0, img.h - 1);
        for (int x = 0; x < w; ++x) {
            real fx = (x + real(0.5)) * sx - real(0.5);
            int x0 = static_cast<int>(std::floor(fx));
            real wx = fx - x0;
            int xa = std::clamp(x0, 0, img.w - 1);
            int xb = std::clamp(x0 + 1, 0, img.w - 1);
            for (int c = 0; c < 3; ++c) {
                real top = img.at(ya, xa, c) * (1 - wx) + img.at(ya, xb, c) * wx;
                real bot = img.at(yb, xa, c) * (1 - wx) + img.at(yb, xb, c) * wx;
                out.at(y, x, c) = clamp01(top * (1 - wy) + bot * wy);
            }
        }
    }
    return out;
}

Image blur(const Image& img, int kernel) {
    if (kernel < 1) throw std::invalid_argument("blur: kernel must be >= 1");
    if (kernel > img.h && kernel > img.w)
        throw std::invalid_argument("blur: kernel larger than both image dims");
    if (kernel == 1) return img;
    const int lo = -(kernel / 2), hi = kernel - 1 - kernel / 2;
    Image out(img.h, img.w);
    // separable box: horizontal then vertical pass with edge replication
    Image tmp(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                real s = 0;
                for (int dx = lo; dx <= hi; ++dx)
                    s += img.at(y, std::clamp(x + dx, 0, img.w - 1), c);
                tmp.at(y, x, c) = s / kernel;
            }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                real s = 0;
                for (int dy = lo; dy <= hi; ++dy)
                    s += tmp.at(std::clamp(y + dy, 0, img.h - 1), x, c);
                out.at(y, x, c) = clamp01(s / kernel);
            }
    return out;
}

Image gaussian_blur(const Image& img, int kernel, real sigma) {
    if (kernel < 1) throw std::invalid_argument("gaussian_blur: kernel must be >= 1");
    if (kernel == 1) return img;
    if (sigma <= 0) sigma = kernel / real(6);
    const int lo = -(kernel / 2), hi = kernel - 1 - kernel / 2;
    std::vector<real> kw(kernel);
    real ksum = 0;
    for (int d = lo; d <= hi; ++d) {
        kw[d - lo] = std::exp(-real(0.5) * d * d / (sigma * sigma));
        ksum += kw[d - lo];
    }
    for (auto& x : kw) x /= ksum;
    Image tmp(img.h, img.w), out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                real s = 0;
                for (int d = lo; d <= hi; ++d)
                    s += kw[d - lo] * img.at(y, std::clamp(x + d, 0, img.w - 1), c);
                tmp.at(y, x, c) = s;
            }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                real s = 0;
                for (int d = lo; d <= hi; ++d)
                    s += kw[d - lo] * tmp.at(std::clamp(y + d, 0, img.h - 1), x, c);
                out.at(y, x, c) = clamp01(s);
            }
    return out;
}

Image pixelate(const Image& img, int block) {
    if (block < 1) throw std::invalid_argument("pixelate: block must be >= 1");
    if (block == 1) return img;
    Image out(img.h, img.w);
    for (int ty = 0; ty < img.h; ty += block) {
        const int yend = std::min(ty + block, img.h);
        for (int tx = 0; tx < img.w; tx += block) {
            const int xend = std::min(tx + block, img.w);
            const real count = static_cast<real>(yend - ty) * (xend - tx);
            for (int c = 0; c < 3; ++c) {
                real s = 0;
                for (int y = ty; y < yend; ++y)
                    for (int x = tx; x < xend; ++x) s += img.at(y, x, c);
                const real m = s / count;
                for (int y = ty; y < yend; ++y)
                    for (int x = tx; x < xend; ++x) out.at(y, x, c) = m;
            }
        }
    }
    return out;
}

Image add_gaussian_noise(const Image& img, real variance, uint64_t seed) {
    if (variance < 0) throw std::invalid_argument("add_gaussian_noise: negative variance");
    if (variance == 0) return img;
    Image out = img;
    std::mt19937_64 rng(seed);
    std::normal_distribution<real> d(0, std::sqrt(variance));
    for (auto& x : out.v) x = clamp01(x + d(rng));
    return out;
}

Image desensitize(const Image& img, const DesensitizeMethod& m) {
    switch (m.kind) {
        case DesensitizeKind::blur: return blur(img, m.blur_kernel);
        case DesensitizeKind::pixelate: return pixelate(img, m.pixel_block);
        case DesensitizeKind::gaussian_noise:
            return add_gaussian_noise(img, m.noise_variance, m.noise_seed);
    }
    throw std::invalid_argument("desensitize: unknown kind");
}

Image from_bytes(const std::vector<uint8_t>& bytes, int h, int w) {
    if (static_cast<long>(bytes.size()) != static_cast<long>(h) * w * 3)
        throw std::invalid_argument("from_bytes: size mismatch");
    Image out(h, w);
    for (size_t i = 0; i < bytes.size(); ++i) out.v[i] = bytes[i] / real(255);
    return out;
}

std::vector<uint8_t> to_bytes(const Image& img) {
    std::vector<uint8_t> out(img.v.size());
    for (size_t i = 0; i < img.v.size(); ++i) {
        real x = std::round(img.v[i] * 255);
        out[i] = static_cast<uint8_t>(std::min(real(255), std::max(real(0), x)));
    }
    return out;
}

Image load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("load_image: cannot read " + path);
    Image out(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            const auto& px = m.at<cv::Vec3b>(y, x);  // BGR
            out.at(y, x, 0) = px[2] / real(255);
            out.at(y, x, 1) = px[1] / real(255);
            out.at(y, x, 2) = px[0] / real(255);
        }
    return out;
}

void save_image(const Image& img, const std::string& path) {
    cv::Mat m(img.h, img.w, CV_8UC3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            auto& px = m.at<cv::Vec3b>(y, x);
            auto q = [](real v) {
                real x = std::round(v * 255);
                return static_cast<uint8_t>(std::min(real(255), std::max(real(0), x)));
            };
            px[2] = q(img.at(y, x, 0));
            px[1] = q(img.at(y, x, 1));
            px[0] = q(img.at(y, x, 2));
        }
    if (!cv::imwrite(path, m)) throw std::runtime_error("save_image: cannot write " + path);
}

Tensor images_to_batch(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw std::invalid_argument("images_to_batch: empty list");
    const int h = imgs[0].h, w = imgs[0].w;
    Tensor out({static_cast<int>(imgs.size()), 3, h, w});
    for (size_t n = 0; n < imgs.size(); ++n) {
        if (imgs[n].h != h || imgs[n].w != w)
            throw std::invalid_argument("images_to_batch: mixed sizes");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    out.at4(static_cast<int>(n), c, y, x) = imgs[n].at(y, x, c);
    }
    return out;
}

std::vector<Image> batch_to_images(const Tensor& batch) {
    if (batch.ndim() != 4 || batch.dim(1) != 3)
        throw std::invalid_argument("batch_to_images: expects (N,3,H,W)");
    std::vector<Image> out;
    for (int n = 0; n < batch.dim(0); ++n) {
        Image img(batch.dim(2), batch.dim(3));
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x) img.at(y, x, c) = batch.at4(n, c, y, x);
        out.push_back(std::move(img));
    }
    return out;
}

}  // namespace anonreid
