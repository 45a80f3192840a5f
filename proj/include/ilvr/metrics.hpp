#pragma once

#include "gmm.hpp"
#include "lowpass.hpp"
#include "tensor.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ilvr {

struct EvalConfig {
    std::size_t factor = 0;
    int stop_step = 0;
    std::string kernel;
    bool operator==(const EvalConfig&) const = default;
};

struct EvalReport {
    std::string metric;
    double value = 0.0;
    std::size_t n = 0;
    std::optional<EvalConfig> config;
    /// Extra metadata (for example the pair count of a diversity score).
    nlohmann::json extra = nlohmann::json::object();
};

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j{{"metric", r.metric}, {"value", r.value}, {"n", r.n}};
    if (r.config)
        j["config"] = {{"factor", r.config->factor}, {"stop_step", r.config->stop_step}, {"kernel", r.config->kernel}};
    else
        j["config"] = nullptr;
    for (auto it = r.extra.begin(); it != r.extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

inline nlohmann::json to_json(const std::vector<EvalReport>& rs) {
    auto arr = nlohmann::json::array();
    for (const auto& r : rs) arr.push_back(to_json(r));
    return arr;
}

inline std::string to_table(const std::vector<EvalReport>& rs) {
    std::size_t width = 6;
    for (const auto& r : rs) width = std::max(width, r.metric.size());
    std::string out;
    char line[512];
    std::snprintf(line, sizeof line, "%-*s  %14s  %8s  %6s  %9s  %s\n", static_cast<int>(width), "metric", "value", "n",
                  "factor", "stop_step", "kernel");
    out += line;
    for (const auto& r : rs) {
        if (r.config)
            std::snprintf(line, sizeof line, "%-*s  %14.8g  %8zu  %6zu  %9d  %s\n", static_cast<int>(width),
                          r.metric.c_str(), r.value, r.n, r.config->factor, r.config->stop_step,
                          r.config->kernel.c_str());
        else
            std::snprintf(line, sizeof line, "%-*s  %14.8g  %8zu  %6s  %9s  %s\n", static_cast<int>(width),
                          r.metric.c_str(), r.value, r.n, "-", "-", "-");
        out += line;
    }
    return out;
}

/// RMS difference of the downsampled images.
inline double lowfreq_error(const Tensor& x, const Tensor& y, std::size_t factor, Kernel kernel) {
    require_same_shape(x, y, "lowfreq_error");
    const LowPassOp op(factor, kernel, x.shape);
    const Tensor dx = op.downsample(x), dy = op.downsample(y);
    return rms_distance(dx.span(), dy.span());
}

inline std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

/// Mean RMS distance over all unordered pairs.
inline double pairwise_diversity(std::span<const Tensor> samples) {
    if (samples.size() < 2) throw std::invalid_argument("pairwise_diversity: need at least 2 samples");
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            require_same_shape(samples[i], samples[j], "pairwise_diversity");
            acc += rms_distance(samples[i].span(), samples[j].span());
        }
    return acc / static_cast<double>(pair_count(samples.size()));
}

struct DiagonalMoments {
    std::vector<double> mean, stddev;
};

/// Per-dimension mean and population standard deviation.
inline DiagonalMoments diagonal_moments(std::span<const Tensor> set) {
    if (set.empty()) throw std::invalid_argument("diagonal_moments: empty set");
    const std::size_t d = set.front().size();
    DiagonalMoments m{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (const auto& x : set) {
        if (x.size() != d) throw std::invalid_argument("diagonal_moments: size mismatch");
        for (std::size_t i = 0; i < d; ++i) m.mean[i] += x[i];
    }
    const double n = static_cast<double>(set.size());
    for (double& v : m.mean) v /= n;
    for (const auto& x : set)
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = x[i] - m.mean[i];
            m.stddev[i] += diff * diff;
        }
    for (double& v : m.stddev) v = std::sqrt(v / n);
    return m;
}

/// Frechet distance between diagonal Gaussians fitted to the two sets:
/// |mu_a - mu_b|^2 + sum_d (sd_a - sd_b)^2.
inline double frechet_pixel_distance(std::span<const Tensor> a, std::span<const Tensor> b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("frechet_pixel_distance: need >= 2 samples per set");
    const auto ma = diagonal_moments(a), mb = diagonal_moments(b);
    if (ma.mean.size() != mb.mean.size()) throw std::invalid_argument("frechet_pixel_distance: dimension mismatch");
    double fd = 0.0;
    for (std::size_t i = 0; i < ma.mean.size(); ++i) {
        const double dm = ma.mean[i] - mb.mean[i];
        const double ds = ma.stddev[i] - mb.stddev[i];
        fd += dm * dm + ds * ds;
    }
    return fd;
}

struct MixtureRecovery {
    std::vector<std::size_t> counts;
    std::vector<double> occupancy;
    double occupancy_max_dev = 0.0;
    /// Euclidean distance between the empirical and true component mean; NaN
    /// when the component received no samples.
    std::vector<double> mean_error;
    /// Min/max over dimensions of empirical variance / model variance; NaN
    /// with fewer than two assigned samples.
    std::vector<double> var_ratio_min, var_ratio_max;
};

/// Nearest-mean partition of the samples, then per-component statistics.
inline MixtureRecovery mixture_recovery(std::span<const Tensor> samples, const GaussianMixture& mix) {
    if (samples.empty()) throw std::invalid_argument("mixture_recovery: no samples");
    const std::size_t K = mix.components(), D = mix.dim();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    MixtureRecovery r;
    r.counts.assign(K, 0);
    std::vector<std::vector<double>> sum(K, std::vector<double>(D, 0.0)), sq(K, std::vector<double>(D, 0.0));
    for (const auto& x : samples) {
        if (x.size() != D) throw std::invalid_argument("mixture_recovery: dimension mismatch");
        const std::size_t k = nearest_component(mix, x.data);
        ++r.counts[k];
        for (std::size_t i = 0; i < D; ++i) {
            sum[k][i] += x[i];
            sq[k][i] += x[i] * x[i];
        }
    }
    const double n = static_cast<double>(samples.size());
    r.occupancy.resize(K);
    r.mean_error.assign(K, nan);
    r.var_ratio_min.assign(K, nan);
    r.var_ratio_max.assign(K, nan);
    for (std::size_t k = 0; k < K; ++k) {
        r.occupancy[k] = static_cast<double>(r.counts[k]) / n;
        r.occupancy_max_dev = std::max(r.occupancy_max_dev, std::abs(r.occupancy[k] - mix.weights[k]));
        const double nk = static_cast<double>(r.counts[k]);
        if (r.counts[k] == 0) continue;
        double err = 0.0;
        for (std::size_t i = 0; i < D; ++i) {
            const double diff = sum[k][i] / nk - mix.means[k][i];
            err += diff * diff;
        }
        r.mean_error[k] = std::sqrt(err);
        if (r.counts[k] < 2) continue;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = 0; i < D; ++i) {
            if (mix.vars[k][i] <= 0.0) continue;
            const double m = sum[k][i] / nk;
            const double var = (sq[k][i] - nk * m * m) / (nk - 1.0);
            const double ratio = var / mix.vars[k][i];
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
        if (std::isfinite(lo)) {
            r.var_ratio_min[k] = lo;
            r.var_ratio_max[k] = hi;
        }
    }
    return r;
}

inline std::vector<EvalReport> mixture_recovery_report(std::span<const Tensor> samples, const GaussianMixture& mix) {
    const auto r = mixture_recovery(samples, mix);
    std::vector<EvalReport> out;
    out.push_back({"occupancy_max_dev", r.occupancy_max_dev, samples.size(), std::nullopt, {}});
    for (std::size_t k = 0; k < r.counts.size(); ++k) {
        const std::string sfx = "_k" + std::to_string(k);
        out.push_back({"occupancy" + sfx, r.occupancy[k], samples.size(), std::nullopt, {}});
        if (std::isfinite(r.mean_error[k])) out.push_back({"mean_error" + sfx, r.mean_error[k], r.counts[k], std::nullopt, {}});
        if (std::isfinite(r.var_ratio_min[k])) {
            out.push_back({"var_ratio_min" + sfx, r.var_ratio_min[k], r.counts[k], std::nullopt, {}});
            out.push_back({"var_ratio_max" + sfx, r.var_ratio_max[k], r.counts[k], std::nullopt, {}});
        }
    }
    return out;
}

} // namespace ilvr
