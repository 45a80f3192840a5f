#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilvr {

/// Dense row-major tensor of doubles. Images are (channels, height, width);
/// plain vectors are rank 1.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(element_count(shape), fill) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> values)
        : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != element_count(shape))
            throw std::invalid_argument("tensor: value count does not match shape");
    }

    static std::size_t element_count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    std::span<double> span() { return data; }
    std::span<const double> span() const { return data; }

    bool operator==(const Tensor&) const = default;
};

/// Channel/height/width view of a tensor shape. Rank-1 shapes are read as a
/// single row, rank-2 as a single-channel image.
struct Chw {
    std::size_t c = 1, h = 1, w = 1;
    bool operator==(const Chw&) const = default;
};

inline Chw as_chw(const std::vector<std::size_t>& shape) {
    switch (shape.size()) {
    case 1: return {1, 1, shape[0]};
    case 2: return {1, shape[0], shape[1]};
    case 3: return {shape[0], shape[1], shape[2]};
    default: throw std::invalid_argument("tensor rank must be 1, 2 or 3 for image operations");
    }
}

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape != b.shape)
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape) +
                                    " vs " + shape_string(b.shape));
}

inline bool all_finite(const Tensor& x) {
    for (double v : x.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline double rms_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("rms_distance: size mismatch");
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline void fill_normal(std::span<double> out, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : out) v = dist(rng);
}

inline Tensor randn(const std::vector<std::size_t>& shape, Rng& rng) {
    Tensor t(shape);
    fill_normal(t.span(), rng);
    return t;
}

} // namespace ilvr
