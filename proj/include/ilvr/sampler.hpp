#pragma once

#include "denoise.hpp"
#include "errors.hpp"
#include "lowpass.hpp"
#include "parallel.hpp"
#include "schedule.hpp"
#include "tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ilvr {

/// x_{t-1} = (x_t - (1-alpha_t)/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t z
inline Tensor reverse_step_with_eps(const Tensor& x_t, const Tensor& eps_hat, int t, const Tensor& z,
                                    const Schedule& sched) {
    require_same_shape(x_t, eps_hat, "reverse_step");
    require_same_shape(x_t, z, "reverse_step");
    const double alpha = sched.alpha(t);
    const double coef = (1.0 - alpha) / std::sqrt(1.0 - sched.abar(t));
    const double inv = 1.0 / std::sqrt(alpha);
    const double sigma = sched.sigma(t);
    Tensor out(x_t.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (x_t[i] - coef * eps_hat[i]) + sigma * z[i];
    return out;
}

inline Tensor reverse_step(const DenoiserModel& model, const Tensor& x_t, int t, const Tensor& z,
                           const Schedule& sched) {
    return reverse_step_with_eps(x_t, model.eps_predict(x_t, t, sched), t, z, sched);
}

/// phi(y_t) + x_prop - phi(x_prop)
inline Tensor ilvr_refine(const Tensor& x_prop, const Tensor& y_t, const LowPassOp& op) {
    require_same_shape(x_prop, y_t, "ilvr_refine");
    const Tensor py = op.apply(y_t);
    const Tensor px = op.apply(x_prop);
    Tensor out(x_prop.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = py[i] + (x_prop[i] - px[i]);
    return out;
}

struct IlvrConfig {
    Tensor reference;
    std::size_t factor = 4;
    Kernel kernel = Kernel::box;
    /// Refinement is applied while t > stop_step; 0 conditions every step.
    int stop_step = 0;
    std::uint64_t seed = 0;
    std::size_t count = 1;
};

struct Snapshot {
    int t = 0;
    Tensor x;
    /// Noised reference the state was matched against, when refinement ran.
    std::optional<Tensor> reference;
};

struct Trajectory {
    std::vector<Snapshot> snapshots;
};

struct SampleOptions {
    /// 0 disables trajectory recording. Otherwise states at t = T, every
    /// t divisible by the stride, and t = 0 are kept.
    int snapshot_stride = 0;
    std::size_t jobs = 1;
    /// Incremented once per completed reverse step across all samples.
    std::atomic<std::int64_t>* steps_done = nullptr;
};

struct SampleResult {
    std::vector<Tensor> samples;
    std::vector<Trajectory> trajectories; // empty unless snapshots were requested
};

/// Seed of sample i's proposal noise stream. The reference-noise stream is
/// derived from it with mix_seed.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return seed + index; }

namespace detail {

struct ChainSpec {
    const Tensor* reference = nullptr;
    const LowPassOp* op = nullptr;
    int stop_step = 0;
};

inline Tensor run_chain(const DenoiserModel& model, const Schedule& sched, const std::vector<std::size_t>& shape,
                        std::uint64_t seed, const ChainSpec& spec, const SampleOptions& opts, Trajectory* traj) {
    Rng proposal_rng(seed);
    Rng reference_rng(mix_seed(seed));
    const int T = sched.steps();
    Tensor x = randn(shape, proposal_rng);
    Tensor z(shape);
    auto keep = [&](int t, const Tensor& state, const std::optional<Tensor>& ref) {
        if (!traj) return;
        if (t == T || t == 0 || t % opts.snapshot_stride == 0) traj->snapshots.push_back({t, state, ref});
    };
    keep(T, x, std::nullopt);
    for (int t = T; t >= 1; --t) {
        if (t > 1)
            fill_normal(z.span(), proposal_rng);
        else
            std::fill(z.data.begin(), z.data.end(), 0.0);
        x = reverse_step(model, x, t, z, sched);
        std::optional<Tensor> y_prev;
        if (spec.reference && t > spec.stop_step) {
            if (t - 1 == 0) {
                y_prev = *spec.reference;
            } else {
                const Tensor noise = randn(shape, reference_rng);
                y_prev = q_sample(*spec.reference, t - 1, noise, sched);
            }
            x = ilvr_refine(x, *y_prev, *spec.op);
        }
        if (!all_finite(x)) throw NumericError("sampler: non-finite state at t=" + std::to_string(t));
        if (opts.steps_done) opts.steps_done->fetch_add(1, std::memory_order_relaxed);
        keep(t - 1, x, y_prev);
    }
    return x;
}

inline SampleResult run_chains(const DenoiserModel& model, const Schedule& sched, const std::vector<std::size_t>& shape,
                               std::uint64_t seed, std::size_t count, const ChainSpec& spec,
                               const SampleOptions& opts) {
    if (count < 1) throw std::invalid_argument("sampler: count must be >= 1");
    if (opts.snapshot_stride < 0) throw std::invalid_argument("sampler: negative snapshot stride");
    SampleResult res;
    res.samples.resize(count);
    const bool record = opts.snapshot_stride > 0;
    if (record) res.trajectories.resize(count);
    parallel_for(count, opts.jobs, [&](std::size_t i) {
        res.samples[i] = run_chain(model, sched, shape, sample_seed(seed, i), spec, opts,
                                   record ? &res.trajectories[i] : nullptr);
    });
    return res;
}

} // namespace detail

/// Ancestral sampling: x_T ~ N(0, I), then reverse_step down to t = 1 with
/// z = 0 on the last step.
inline SampleResult sample_unconditional(const DenoiserModel& model, const Schedule& sched,
                                         const std::vector<std::size_t>& shape, std::uint64_t seed, std::size_t count,
                                         const SampleOptions& opts = {}) {
    if (shape != model.data_shape())
        throw std::invalid_argument("sample_unconditional: shape " + shape_string(shape) + " does not match model " +
                                    shape_string(model.data_shape()));
    return detail::run_chains(model, sched, shape, seed, count, {}, opts);
}

inline void validate(const IlvrConfig& cfg, const DenoiserModel& model, const Schedule& sched) {
    if (cfg.reference.shape != model.data_shape())
        throw std::invalid_argument("ilvr: reference shape " + shape_string(cfg.reference.shape) +
                                    " does not match model " + shape_string(model.data_shape()));
    if (!all_finite(cfg.reference)) throw std::invalid_argument("ilvr: reference contains non-finite values");
    if (cfg.stop_step < 0 || cfg.stop_step >= sched.steps())
        throw std::invalid_argument("ilvr: stop_step must lie in [0, T)");
    if (cfg.count < 1) throw std::invalid_argument("ilvr: count must be >= 1");
    LowPassOp(cfg.factor, cfg.kernel, cfg.reference.shape);
}

/// Reference-conditioned sampling: each unconditional proposal has its
/// low-pass content replaced by that of the reference noised to the same
/// step, while t > stop_step. The t = 1 refinement uses the clean reference.
inline SampleResult sample_ilvr(const DenoiserModel& model, const Schedule& sched, const IlvrConfig& cfg,
                                const SampleOptions& opts = {}) {
    validate(cfg, model, sched);
    const LowPassOp op(cfg.factor, cfg.kernel, cfg.reference.shape);
    detail::ChainSpec spec{&cfg.reference, &op, cfg.stop_step};
    return detail::run_chains(model, sched, cfg.reference.shape, cfg.seed, cfg.count, spec, opts);
}

} // namespace ilvr
