#pragma once

#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilvr {

/// Diagonal-covariance Gaussian mixture over vectors of dimension D.
/// `shape` is the tensor shape samples take (product must equal D).
struct GaussianMixture {
    std::vector<double> weights;
    std::vector<std::vector<double>> means;
    std::vector<std::vector<double>> vars;
    std::vector<std::size_t> shape;

    std::size_t components() const { return weights.size(); }
    std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }

    void validate() const {
        if (weights.empty()) throw std::invalid_argument("mixture: no components");
        if (means.size() != weights.size() || vars.size() != weights.size())
            throw std::invalid_argument("mixture: weights/means/vars count mismatch");
        const std::size_t d = dim();
        if (d == 0) throw std::invalid_argument("mixture: zero dimension");
        double total = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (!(weights[k] >= 0.0)) throw std::invalid_argument("mixture: negative weight");
            total += weights[k];
            if (means[k].size() != d || vars[k].size() != d)
                throw std::invalid_argument("mixture: component dimensions disagree");
            for (double v : vars[k])
                if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("mixture: variances must be >= 0");
        }
        if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture: weights must sum to 1");
        if (!shape.empty() && Tensor::element_count(shape) != d)
            throw std::invalid_argument("mixture: shape does not match dimension");
    }

    std::vector<std::size_t> data_shape() const { return shape.empty() ? std::vector<std::size_t>{dim()} : shape; }
};

/// E[x0 | x_t] when x_t = sqrt(abar) x0 + sqrt(1-abar) eps and x0 ~ mix.
inline std::vector<double> gmm_posterior_mean(const GaussianMixture& mix, std::span<const double> x_t, double abar) {
    if (!(abar > 0.0 && abar < 1.0)) throw std::invalid_argument("gmm_posterior_mean: abar must lie in (0,1)");
    const std::size_t d = mix.dim();
    if (x_t.size() != d) throw std::invalid_argument("gmm_posterior_mean: dimension mismatch");
    const std::size_t k_count = mix.components();
    const double sa = std::sqrt(abar);
    const double noise = 1.0 - abar;

    std::vector<double> logr(k_count, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < k_count; ++k) {
        if (mix.weights[k] <= 0.0) continue;
        const auto& vk = mix.vars[k];
        const bool flat = std::all_of(vk.begin(), vk.end(), [&](double v) { return v == vk.front(); });
        double lp = std::log(mix.weights[k]);
        if (flat) {
            // shared variance: one log for the whole component
            const double var = abar * vk.front() + noise;
            double sq = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = x_t[i] - sa * mix.means[k][i];
                sq += diff * diff;
            }
            lp -= 0.5 * (sq / var + static_cast<double>(d) * std::log(2.0 * std::numbers::pi * var));
        } else {
            for (std::size_t i = 0; i < d; ++i) {
                const double var = abar * vk[i] + noise;
                const double diff = x_t[i] - sa * mix.means[k][i];
                lp -= 0.5 * (diff * diff / var + std::log(2.0 * std::numbers::pi * var));
            }
        }
        logr[k] = lp;
    }
    const double top = *std::max_element(logr.begin(), logr.end());
    double norm = 0.0;
    for (double& l : logr) {
        l = std::exp(l - top);
        norm += l;
    }

    std::vector<double> out(d, 0.0);
    for (std::size_t k = 0; k < k_count; ++k) {
        const double r = logr[k] / norm;
        if (r == 0.0) continue;
        const auto& vk = mix.vars[k];
        const auto& mk = mix.means[k];
        for (std::size_t i = 0; i < d; ++i) {
            const double v = vk[i];
            const double gain = sa * v / (abar * v + noise);
            out[i] += r * (mk[i] + gain * (x_t[i] - sa * mk[i]));
        }
    }
    return out;
}

/// Direct draw from the mixture; returns the chosen component through `component`.
inline Tensor sample_mixture(const GaussianMixture& mix, Rng& rng, std::size_t* component = nullptr) {
    std::discrete_distribution<std::size_t> pick(mix.weights.begin(), mix.weights.end());
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t k = pick(rng);
    if (component) *component = k;
    Tensor x(mix.data_shape());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = mix.means[k][i] + std::sqrt(mix.vars[k][i]) * normal(rng);
    return x;
}

inline std::vector<Tensor> sample_mixture(const GaussianMixture& mix, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample_mixture(mix, rng));
    return out;
}

/// Index of the component whose mean is nearest (Euclidean) to x.
inline std::size_t nearest_component(const GaussianMixture& mix, std::span<const double> x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < mix.components(); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double diff = x[i] - mix.means[k][i];
            acc += diff * diff;
        }
        if (acc < best_d) {
            best_d = acc;
            best = k;
        }
    }
    return best;
}

} // namespace ilvr
