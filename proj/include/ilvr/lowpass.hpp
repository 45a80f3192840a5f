#pragma once

#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilvr {

enum class Kernel { box, bilinear, bicubic, lanczos2, lanczos3 };

inline const char* to_string(Kernel k) {
    switch (k) {
    case Kernel::box: return "box";
    case Kernel::bilinear: return "bilinear";
    case Kernel::bicubic: return "bicubic";
    case Kernel::lanczos2: return "lanczos2";
    case Kernel::lanczos3: return "lanczos3";
    }
    return "?";
}

inline Kernel parse_kernel(const std::string& s) {
    for (Kernel k : {Kernel::box, Kernel::bilinear, Kernel::bicubic, Kernel::lanczos2, Kernel::lanczos3})
        if (s == to_string(k)) return k;
    throw std::invalid_argument("unknown kernel '" + s + "'");
}

namespace detail {

inline double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

inline double kernel_support(Kernel k) {
    switch (k) {
    case Kernel::box: return 0.5;
    case Kernel::bilinear: return 1.0;
    case Kernel::bicubic: return 2.0;
    case Kernel::lanczos2: return 2.0;
    case Kernel::lanczos3: return 3.0;
    }
    return 0.0;
}

inline double kernel_value(Kernel k, double x) {
    const double ax = std::abs(x);
    switch (k) {
    case Kernel::box: return ax < 0.5 ? 1.0 : 0.0;
    case Kernel::bilinear: return ax < 1.0 ? 1.0 - ax : 0.0;
    case Kernel::bicubic: {
        constexpr double a = -0.5;
        if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
        if (ax < 2.0) return (((ax - 5.0) * ax + 8.0) * ax - 4.0) * a;
        return 0.0;
    }
    case Kernel::lanczos2: return ax < 2.0 ? sinc(x) * sinc(x / 2.0) : 0.0;
    case Kernel::lanczos3: return ax < 3.0 ? sinc(x) * sinc(x / 3.0) : 0.0;
    }
    return 0.0;
}

struct Tap {
    std::size_t index;
    double weight;
};

/// Per-output-sample taps of a 1-D resampling from `in_len` to `out_len`.
/// `scale` = out_len / in_len. When shrinking, the kernel is stretched by
/// 1/scale (antialiasing). Out-of-range taps are clamped (edge replication)
/// and weights are normalized to sum to one.
inline std::vector<std::vector<Tap>> resample_taps(Kernel k, std::size_t in_len, std::size_t out_len, double scale) {
    std::vector<std::vector<Tap>> taps(out_len);
    const double stretch = scale < 1.0 ? 1.0 / scale : 1.0;
    const double support = kernel_support(k) * stretch;
    const auto last = static_cast<long>(in_len) - 1;
    for (std::size_t o = 0; o < out_len; ++o) {
        const double center = (static_cast<double>(o) + 0.5) / scale - 0.5;
        const long lo = static_cast<long>(std::floor(center - support));
        const long hi = static_cast<long>(std::ceil(center + support));
        std::vector<double> acc(in_len, 0.0);
        double total = 0.0;
        for (long i = lo; i <= hi; ++i) {
            const double w = kernel_value(k, (static_cast<double>(i) - center) / stretch);
            if (w == 0.0) continue;
            acc[static_cast<std::size_t>(std::clamp(i, 0L, last))] += w;
            total += w;
        }
        if (total == 0.0) throw std::logic_error("resample_taps: empty kernel footprint");
        for (std::size_t i = 0; i < in_len; ++i)
            if (acc[i] != 0.0) taps[o].push_back({i, acc[i] / total});
    }
    return taps;
}

/// Box filtering: exact block mean down, nearest replication up.
inline std::vector<std::vector<Tap>> box_down_taps(std::size_t in_len, std::size_t factor) {
    std::vector<std::vector<Tap>> taps(in_len / factor);
    const double w = 1.0 / static_cast<double>(factor);
    for (std::size_t o = 0; o < taps.size(); ++o)
        for (std::size_t j = 0; j < factor; ++j) taps[o].push_back({o * factor + j, w});
    return taps;
}

inline std::vector<std::vector<Tap>> box_up_taps(std::size_t out_len, std::size_t factor) {
    std::vector<std::vector<Tap>> taps(out_len);
    for (std::size_t o = 0; o < out_len; ++o) taps[o].push_back({o / factor, 1.0});
    return taps;
}

/// Separable application: rows along height with `along_h`, columns along width with `along_w`.
inline Tensor apply_separable(const Tensor& x, Chw in, Chw out, const std::vector<std::vector<Tap>>& along_h,
                              const std::vector<std::vector<Tap>>& along_w,
                              const std::vector<std::size_t>& out_shape) {
    Tensor tmp({in.c, in.h, out.w});
    for (std::size_t c = 0; c < in.c; ++c)
        for (std::size_t r = 0; r < in.h; ++r) {
            const double* src = &x.data[(c * in.h + r) * in.w];
            double* dst = &tmp.data[(c * in.h + r) * out.w];
            for (std::size_t o = 0; o < out.w; ++o) {
                double s = 0.0;
                for (const Tap& tp : along_w[o]) s += tp.weight * src[tp.index];
                dst[o] = s;
            }
        }
    Tensor y(out_shape);
    for (std::size_t c = 0; c < in.c; ++c)
        for (std::size_t o = 0; o < out.h; ++o) {
            double* dst = &y.data[(c * out.h + o) * out.w];
            for (const Tap& tp : along_h[o]) {
                const double* src = &tmp.data[(c * in.h + tp.index) * out.w];
                for (std::size_t col = 0; col < out.w; ++col) dst[col] += tp.weight * src[col];
            }
        }
    return y;
}

} // namespace detail

/// The low-pass operator phi_N = upsample_N o downsample_N on tensors of a
/// fixed shape. Channels are filtered independently. Rank-1 tensors are
/// treated as one row, so only the width is resampled.
class LowPassOp {
public:
    LowPassOp(std::size_t factor, Kernel kernel, std::vector<std::size_t> in_shape)
        : factor_(factor), kernel_(kernel), in_shape_(std::move(in_shape)) {
        if (factor_ == 0) throw std::invalid_argument("lowpass: factor must be >= 1");
        in_ = as_chw(in_shape_);
        const bool resample_h = in_shape_.size() > 1;
        const std::size_t fh = resample_h ? factor_ : 1;
        if (in_.w < factor_ || in_.h < fh)
            throw std::invalid_argument("lowpass: factor " + std::to_string(factor_) + " exceeds image size " +
                                        shape_string(in_shape_));
        if (kernel_ == Kernel::box && (in_.w % factor_ != 0 || in_.h % fh != 0))
            throw std::invalid_argument("lowpass: box factor " + std::to_string(factor_) +
                                        " must divide image size " + shape_string(in_shape_));
        low_ = {in_.c, in_.h / fh, in_.w / factor_};
        low_shape_ = in_shape_;
        low_shape_.back() = low_.w;
        if (resample_h) low_shape_[low_shape_.size() - 2] = low_.h;

        if (kernel_ == Kernel::box) {
            down_h_ = detail::box_down_taps(in_.h, fh);
            down_w_ = detail::box_down_taps(in_.w, factor_);
            up_h_ = detail::box_up_taps(in_.h, fh);
            up_w_ = detail::box_up_taps(in_.w, factor_);
        } else {
            down_h_ = detail::resample_taps(kernel_, in_.h, low_.h, static_cast<double>(low_.h) / in_.h);
            down_w_ = detail::resample_taps(kernel_, in_.w, low_.w, static_cast<double>(low_.w) / in_.w);
            up_h_ = detail::resample_taps(kernel_, low_.h, in_.h, static_cast<double>(in_.h) / low_.h);
            up_w_ = detail::resample_taps(kernel_, low_.w, in_.w, static_cast<double>(in_.w) / low_.w);
        }
    }

    std::size_t factor() const { return factor_; }
    Kernel kernel() const { return kernel_; }
    const std::vector<std::size_t>& in_shape() const { return in_shape_; }
    const std::vector<std::size_t>& low_shape() const { return low_shape_; }

    Tensor downsample(const Tensor& x) const {
        if (x.shape != in_shape_)
            throw std::invalid_argument("downsample: expected shape " + shape_string(in_shape_) + ", got " +
                                        shape_string(x.shape));
        if (factor_ == 1) return x;
        return detail::apply_separable(x, in_, low_, down_h_, down_w_, low_shape_);
    }

    Tensor upsample(const Tensor& x_low) const {
        if (x_low.shape != low_shape_)
            throw std::invalid_argument("upsample: expected shape " + shape_string(low_shape_) + ", got " +
                                        shape_string(x_low.shape));
        if (factor_ == 1) return x_low;
        return detail::apply_separable(x_low, low_, in_, up_h_, up_w_, in_shape_);
    }

    Tensor apply(const Tensor& x) const { return upsample(downsample(x)); }

private:
    std::size_t factor_;
    Kernel kernel_;
    std::vector<std::size_t> in_shape_, low_shape_;
    Chw in_, low_;
    std::vector<std::vector<detail::Tap>> down_h_, down_w_, up_h_, up_w_;
};

inline Tensor downsample(const LowPassOp& op, const Tensor& x) { return op.downsample(x); }
inline Tensor upsample(const LowPassOp& op, const Tensor& x_low) { return op.upsample(x_low); }
inline Tensor apply_phi(const LowPassOp& op, const Tensor& x) { return op.apply(x); }

} // namespace ilvr
