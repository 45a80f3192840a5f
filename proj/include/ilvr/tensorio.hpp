#pragma once

#include "errors.hpp"
#include "gmm.hpp"
#include "neural.hpp"
#include "tensor.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace ilvr {

// Tensor file: "ILVRTEN1" | u32 dtype (0 = f32) | u32 rank | u32 dims[rank] |
// f32 payload, row-major, little-endian throughout.

inline constexpr char kTensorMagic[] = "ILVRTEN1";
inline constexpr std::uint32_t kDtypeF32 = 0;

/// Values are stored as f32; doubles that are not exactly representable are
/// rounded to nearest.
inline std::string encode_tensor(const Tensor& x) {
    std::string out(kTensorMagic, 8);
    detail::put_u32(out, kDtypeF32);
    detail::put_u32(out, static_cast<std::uint32_t>(x.shape.size()));
    for (std::size_t d : x.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    out.reserve(out.size() + 4 * x.size());
    for (double v : x.data) detail::put_f32(out, static_cast<float>(v));
    return out;
}

inline Tensor decode_tensor(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 8 || std::memcmp(p, kTensorMagic, 8) != 0) throw IoError(IoErrc::bad_magic, "not an ILVRTEN1 file");
    if (bytes.size() < 16) throw IoError(IoErrc::truncated, "tensor header truncated");
    const std::uint32_t dtype = detail::get_u32(p + 8);
    if (dtype != kDtypeF32) throw IoError(IoErrc::unsupported_dtype, "dtype code " + std::to_string(dtype));
    const std::uint32_t rank = detail::get_u32(p + 12);
    if (rank > 8) throw IoError(IoErrc::malformed_header, "rank " + std::to_string(rank));
    std::size_t pos = 16;
    if (bytes.size() < pos + 4ull * rank) throw IoError(IoErrc::truncated, "tensor shape truncated");
    std::vector<std::size_t> shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i, pos += 4) {
        shape.push_back(detail::get_u32(p + pos));
        count *= shape.back();
    }
    if (bytes.size() - pos < count * 4)
        throw IoError(IoErrc::truncated, "payload holds " + std::to_string((bytes.size() - pos) / 4) + " of " +
                                             std::to_string(count) + " elements");
    Tensor x(shape);
    for (std::size_t i = 0; i < x.size(); ++i, pos += 4) x[i] = std::bit_cast<float>(detail::get_u32(p + pos));
    return x;
}

inline void write_tensor(const std::string& path, const Tensor& x) { detail::write_file_bytes(path, encode_tensor(x)); }
inline Tensor read_tensor(const std::string& path) { return decode_tensor(detail::read_file_bytes(path)); }

// Portable pixmaps: P5 (1 channel) / P6 (3 channels), maxval 255.
// 8-bit v maps to 2 v / 255 - 1.

inline double pixel_to_value(unsigned v) { return 2.0 * (static_cast<double>(v) / 255.0) - 1.0; }

inline unsigned char value_to_pixel(double x) {
    const double c = std::clamp(x, -1.0, 1.0);
    return static_cast<unsigned char>(std::lround((c + 1.0) * 0.5 * 255.0));
}

inline bool is_pixmap(const std::string& bytes) {
    return bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6');
}

inline Tensor decode_pixmap(const std::string& bytes) {
    if (!is_pixmap(bytes)) throw IoError(IoErrc::malformed_header, "expected P5 or P6 magic");
    const std::size_t channels = bytes[1] == '5' ? 1 : 3;
    std::size_t pos = 2;
    auto next_int = [&]() -> long {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
            throw IoError(IoErrc::malformed_header, "expected integer in pixmap header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1'000'000) throw IoError(IoErrc::malformed_header, "pixmap header value too large");
            ++pos;
        }
        return v;
    };
    const long w = next_int(), h = next_int(), maxval = next_int();
    if (w <= 0 || h <= 0) throw IoError(IoErrc::malformed_header, "pixmap dimensions must be positive");
    if (maxval != 255) throw IoError(IoErrc::unsupported_maxval, "maxval " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw IoError(IoErrc::malformed_header, "missing separator after maxval");
    ++pos;
    const std::size_t W = static_cast<std::size_t>(w), H = static_cast<std::size_t>(h);
    if (bytes.size() - pos < W * H * channels) throw IoError(IoErrc::truncated, "pixmap raster truncated");
    Tensor x({channels, H, W});
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
            for (std::size_t ch = 0; ch < channels; ++ch)
                x[(ch * H + r) * W + c] =
                    pixel_to_value(static_cast<unsigned char>(bytes[pos + (r * W + c) * channels + ch]));
    return x;
}

inline std::string encode_pixmap(const Tensor& x) {
    const Chw s = as_chw(x.shape);
    if (x.shape.size() == 1 || (s.c != 1 && s.c != 3))
        throw std::invalid_argument("encode_pixmap: need a 1- or 3-channel image, got " + shape_string(x.shape));
    std::string out = (s.c == 1 ? "P5\n" : "P6\n") + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + s.h * s.w * s.c);
    for (std::size_t r = 0; r < s.h; ++r)
        for (std::size_t c = 0; c < s.w; ++c)
            for (std::size_t ch = 0; ch < s.c; ++ch)
                out[header + (r * s.w + c) * s.c + ch] = static_cast<char>(value_to_pixel(x[(ch * s.h + r) * s.w + c]));
    return out;
}

inline Tensor load_image(const std::string& path) { return decode_pixmap(detail::read_file_bytes(path)); }
inline void save_image(const std::string& path, const Tensor& x) { detail::write_file_bytes(path, encode_pixmap(x)); }

/// Reads either a tensor file or a pixmap, chosen by magic bytes.
inline Tensor load_any(const std::string& path) {
    const std::string bytes = detail::read_file_bytes(path);
    if (is_pixmap(bytes)) return decode_pixmap(bytes);
    return decode_tensor(bytes);
}

// Mixture definition: {"weights":[...], "means":[[...]], "vars":[[...]], "shape":[...]?}

inline nlohmann::json mixture_to_json(const GaussianMixture& mix) {
    nlohmann::json j{{"weights", mix.weights}, {"means", mix.means}, {"vars", mix.vars}};
    if (!mix.shape.empty()) j["shape"] = mix.shape;
    return j;
}

inline GaussianMixture mixture_from_json(const nlohmann::json& j) {
    GaussianMixture mix;
    try {
        mix.weights = j.at("weights").get<std::vector<double>>();
        mix.means = j.at("means").get<std::vector<std::vector<double>>>();
        mix.vars = j.at("vars").get<std::vector<std::vector<double>>>();
        if (j.contains("shape")) mix.shape = j.at("shape").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoErrc::bad_document, std::string("mixture: ") + e.what());
    }
    try {
        mix.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(IoErrc::bad_document, e.what());
    }
    return mix;
}

inline nlohmann::json read_json(const std::string& path) {
    const std::string text = detail::read_file_bytes(path);
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw IoError(IoErrc::bad_document, path + " is not valid JSON");
    return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    detail::write_file_bytes(path, j.dump(2) + "\n");
}

inline GaussianMixture load_mixture(const std::string& path) { return mixture_from_json(read_json(path)); }
inline void save_mixture(const std::string& path, const GaussianMixture& mix) { write_json(path, mixture_to_json(mix)); }

} // namespace ilvr
