#pragma once

#include "gmm.hpp"

#include <cmath>
#include <vector>

namespace ilvr::toy {

/// Three well-separated 2-D components.
inline GaussianMixture points_2d() {
    GaussianMixture mix;
    mix.weights = {0.5, 0.3, 0.2};
    mix.means = {{-2.0, 0.0}, {2.0, 1.0}, {0.0, -2.5}};
    mix.vars = {{0.15, 0.10}, {0.10, 0.20}, {0.20, 0.15}};
    return mix;
}

enum class Texture { checker, inverted_checker };

/// Single-channel size x size images. Each component is a smooth pattern
/// (horizontal ramp, vertical ramp, centred blob) plus a pixel-period checker
/// texture, with i.i.d. per-pixel noise. The checker has zero mean over any
/// even-sized block, so the two texture variants agree after box filtering
/// at even factors.
inline GaussianMixture images(std::size_t size = 16, Texture texture = Texture::checker, double texture_amp = 0.25,
                              double pixel_var = 0.04) {
    GaussianMixture mix;
    mix.weights = {0.4, 0.35, 0.25};
    mix.shape = {1, size, size};
    const double sign = texture == Texture::checker ? 1.0 : -1.0;
    const double n = static_cast<double>(size);
    for (int k = 0; k < 3; ++k) {
        std::vector<double> mean(size * size);
        for (std::size_t r = 0; r < size; ++r)
            for (std::size_t c = 0; c < size; ++c) {
                const double u = (static_cast<double>(c) + 0.5) / n * 2.0 - 1.0;
                const double v = (static_cast<double>(r) + 0.5) / n * 2.0 - 1.0;
                double smooth = 0.0;
                if (k == 0) smooth = 0.6 * u;
                if (k == 1) smooth = -0.6 * v;
                if (k == 2) smooth = 0.9 * std::exp(-2.0 * (u * u + v * v)) - 0.4;
                const double checker = ((r + c) % 2 == 0) ? 1.0 : -1.0;
                mean[r * size + c] = smooth + sign * texture_amp * checker;
            }
        mix.means.push_back(std::move(mean));
        mix.vars.emplace_back(size * size, pixel_var);
    }
    return mix;
}

} // namespace ilvr::toy
