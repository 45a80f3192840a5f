#pragma once

#include "tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilvr {

enum class SigmaMode { beta, posterior };

inline const char* to_string(SigmaMode m) { return m == SigmaMode::beta ? "beta" : "posterior"; }

inline SigmaMode parse_sigma_mode(const std::string& s) {
    if (s == "beta") return SigmaMode::beta;
    if (s == "posterior") return SigmaMode::posterior;
    throw std::invalid_argument("unknown sigma mode '" + s + "'");
}

/// Fixed variance schedule. Storage is 0-based; every accessor takes the
/// diffusion step t in 1..T.
class Schedule {
public:
    Schedule(std::vector<double> betas, SigmaMode mode) : betas_(std::move(betas)), mode_(mode) {
        if (betas_.empty()) throw std::invalid_argument("schedule: T must be >= 1");
        alphas_.resize(betas_.size());
        abars_.resize(betas_.size());
        sigmas_.resize(betas_.size());
        double prod = 1.0;
        for (std::size_t i = 0; i < betas_.size(); ++i) {
            const double b = betas_[i];
            if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("schedule: betas must lie in (0,1)");
            alphas_[i] = 1.0 - b;
            prod *= alphas_[i];
            abars_[i] = prod;
        }
        for (std::size_t i = 0; i < betas_.size(); ++i) {
            if (i == 0) {
                sigmas_[i] = 0.0;
                continue;
            }
            if (mode_ == SigmaMode::beta) {
                sigmas_[i] = std::sqrt(betas_[i]);
            } else {
                const double prev = abars_[i - 1];
                sigmas_[i] = std::sqrt((1.0 - prev) / (1.0 - abars_[i]) * betas_[i]);
            }
        }
    }

    int steps() const { return static_cast<int>(betas_.size()); }
    SigmaMode sigma_mode() const { return mode_; }

    double beta(int t) const { return betas_[index(t)]; }
    double alpha(int t) const { return alphas_[index(t)]; }
    double abar(int t) const { return abars_[index(t)]; }
    double sigma(int t) const { return sigmas_[index(t)]; }
    /// abar with the abar(0) = 1 convention.
    double abar_or_one(int t) const { return t == 0 ? 1.0 : abar(t); }

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& abars() const { return abars_; }
    const std::vector<double>& sigmas() const { return sigmas_; }

    void check_step(int t) const {
        if (t < 1 || t > steps())
            throw std::out_of_range("step t=" + std::to_string(t) + " outside 1.." + std::to_string(steps()));
    }

private:
    std::size_t index(int t) const {
        check_step(t);
        return static_cast<std::size_t>(t - 1);
    }

    std::vector<double> betas_, alphas_, abars_, sigmas_;
    SigmaMode mode_;
};

inline Schedule make_linear_schedule(int steps, double beta_start, double beta_end,
                                     SigmaMode mode = SigmaMode::posterior) {
    if (steps < 1) throw std::invalid_argument("schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(steps));
    if (steps == 1) {
        betas[0] = beta_start;
    } else {
        for (int i = 0; i < steps; ++i)
            betas[static_cast<std::size_t>(i)] =
                beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(steps - 1);
    }
    return Schedule(std::move(betas), mode);
}

/// The conventional 1e-4 -> 0.02 schedule over 1000 steps, with both endpoints
/// scaled by 1000/T so that shorter chains still end near pure noise.
inline Schedule make_default_schedule(int steps = 200, SigmaMode mode = SigmaMode::posterior) {
    if (steps < 1) throw std::invalid_argument("schedule: T must be >= 1");
    const double scale = 1000.0 / static_cast<double>(steps);
    return make_linear_schedule(steps, std::min(1e-4 * scale, 0.5), std::min(0.02 * scale, 0.999), mode);
}

/// sqrt(abar) x0 + sqrt(1 - abar) eps for an explicit abar in [0,1].
inline Tensor q_sample_abar(const Tensor& x0, double a, const Tensor& eps) {
    require_same_shape(x0, eps, "q_sample");
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("q_sample: abar outside [0,1]");
    const double sa = std::sqrt(a), sb = std::sqrt(1.0 - a);
    Tensor out(x0.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sa * x0[i] + sb * eps[i];
    return out;
}

inline Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const Schedule& sched) {
    return q_sample_abar(x0, sched.abar(t), eps);
}

} // namespace ilvr
