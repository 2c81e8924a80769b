#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace anonreid {

using real = double;

// Dense row-major tensor. Conv/network code uses NCHW, images use HWC.
struct Tensor {
    std::vector<int> shape;
    std::vector<real> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), real(0));
    }
    Tensor(std::vector<int> s, real fill) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), fill);
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("negative tensor dim");
            n *= d;
        }
        return n;
    }

    long numel() const { return static_cast<long>(v.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(shape.size()); }

    real& at(long i) { return v[static_cast<size_t>(i)]; }
    real at(long i) const { return v[static_cast<size_t>(i)]; }

    // NCHW accessor
    real& at4(int n, int c, int h, int w) {
        return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    real at4(int n, int c, int h, int w) const {
        return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    real& at2(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
    real at2(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(real x) { std::fill(v.begin(), v.end(), x); }

    void fill_gaussian(std::mt19937& rng, real mean, real stddev) {
        std::normal_distribution<real> d(mean, stddev);
        for (auto& x : v) x = d(rng);
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "(";
        for (size_t i = 0; i < s.size(); ++i) {
            out += std::to_string(s[i]);
            if (i + 1 < s.size()) out += ",";
        }
        return out + ")";
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    Tensor::shape_str(a.shape) + " vs " + Tensor::shape_str(b.shape));
}

}  // namespace anonreid
