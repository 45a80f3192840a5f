#pragma once

#include "gmm.hpp"
#include "neural.hpp"
#include "schedule.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>

namespace ilvr {

/// eps-predictor used by the samplers: the exact mixture denoiser or a
/// trained network.
class DenoiserModel {
public:
    explicit DenoiserModel(GaussianMixture mix) : impl_(std::move(mix)) { std::get<GaussianMixture>(impl_).validate(); }
    explicit DenoiserModel(NeuralDenoiser net) : impl_(std::move(net)) {}

    bool analytic() const { return std::holds_alternative<GaussianMixture>(impl_); }
    const GaussianMixture* mixture() const { return std::get_if<GaussianMixture>(&impl_); }
    const NeuralDenoiser* network() const { return std::get_if<NeuralDenoiser>(&impl_); }

    std::vector<std::size_t> data_shape() const {
        return std::visit([](const auto& m) { return m.data_shape(); }, impl_);
    }

    Tensor eps_predict(const Tensor& x_t, int t, const Schedule& sched) const {
        sched.check_step(t);
        if (x_t.shape != data_shape())
            throw std::invalid_argument("eps_predict: expected shape " + shape_string(data_shape()) + ", got " +
                                        shape_string(x_t.shape));
        if (const auto* net = network()) return net->forward(x_t, t);
        const double a = sched.abar(t);
        const auto mean = gmm_posterior_mean(*mixture(), x_t.data, a);
        const double sa = std::sqrt(a);
        const double sb = std::sqrt(std::max(1.0 - a, 1e-12));
        Tensor eps(x_t.shape);
        for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = (x_t[i] - sa * mean[i]) / sb;
        return eps;
    }

    /// One-shot estimate of x0 from x_t.
    Tensor predict_x0(const Tensor& x_t, int t, const Schedule& sched) const {
        const Tensor eps = eps_predict(x_t, t, sched);
        const double a = sched.abar(t);
        const double sa = std::sqrt(a), sb = std::sqrt(1.0 - a);
        Tensor x0(x_t.shape);
        for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = (x_t[i] - sb * eps[i]) / sa;
        return x0;
    }

private:
    std::variant<GaussianMixture, NeuralDenoiser> impl_;
};

inline Tensor eps_predict(const DenoiserModel& m, const Tensor& x_t, int t, const Schedule& s) {
    return m.eps_predict(x_t, t, s);
}

inline Tensor predict_x0(const DenoiserModel& m, const Tensor& x_t, int t, const Schedule& s) {
    return m.predict_x0(x_t, t, s);
}

} // namespace ilvr
