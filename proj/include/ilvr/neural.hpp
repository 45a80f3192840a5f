#pragma once

#include "errors.hpp"
#include "schedule.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ilvr {

enum class NetKind : std::uint32_t { mlp = 0, conv = 1 };

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double silu(double z) { return z * sigmoid(z); }
inline double silu_grad(double z) {
    const double s = sigmoid(z);
    return s * (1.0 + z * (1.0 - s));
}

struct Layer {
    bool conv = false;
    std::size_t in = 0, out = 0; // features (dense) or channels (conv)
    std::size_t h = 1, w = 1;    // spatial size, conv only
    std::size_t offset = 0;      // weights, then biases, inside the flat parameter vector

    std::size_t weight_count() const { return conv ? out * in * 9 : out * in; }
    std::size_t param_count() const { return weight_count() + out; }
    std::size_t in_size() const { return in * h * w; }
    std::size_t out_size() const { return out * h * w; }
};

inline void layer_forward(const Layer& L, const double* p, const double* x, double* z) {
    const double* W = p + L.offset;
    const double* b = W + L.weight_count();
    if (!L.conv) {
        for (std::size_t o = 0; o < L.out; ++o) {
            double s = b[o];
            const double* row = W + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) s += row[i] * x[i];
            z[o] = s;
        }
        return;
    }
    const std::size_t hw = L.h * L.w;
    for (std::size_t o = 0; o < L.out; ++o) {
        double* zo = z + o * hw;
        std::fill(zo, zo + hw, b[o]);
        for (std::size_t i = 0; i < L.in; ++i) {
            const double* xi = x + i * hw;
            const double* k = W + (o * L.in + i) * 9;
            for (long dy = -1; dy <= 1; ++dy)
                for (long dx = -1; dx <= 1; ++dx) {
                    const double kv = k[(dy + 1) * 3 + (dx + 1)];
                    for (std::size_t r = 0; r < L.h; ++r) {
                        const long rr = static_cast<long>(r) + dy;
                        if (rr < 0 || rr >= static_cast<long>(L.h)) continue;
                        for (std::size_t c = 0; c < L.w; ++c) {
                            const long cc = static_cast<long>(c) + dx;
                            if (cc < 0 || cc >= static_cast<long>(L.w)) continue;
                            zo[r * L.w + c] += kv * xi[static_cast<std::size_t>(rr) * L.w + static_cast<std::size_t>(cc)];
                        }
                    }
                }
        }
    }
}

/// Accumulates parameter gradients into g and writes dL/dx into gx.
inline void layer_backward(const Layer& L, const double* p, const double* x, const double* gz, double* g,
                           double* gx) {
    const double* W = p + L.offset;
    double* gW = g + L.offset;
    double* gb = gW + L.weight_count();
    std::fill(gx, gx + L.in_size(), 0.0);
    if (!L.conv) {
        for (std::size_t o = 0; o < L.out; ++o) {
            gb[o] += gz[o];
            const double* row = W + o * L.in;
            double* grow = gW + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) {
                grow[i] += gz[o] * x[i];
                gx[i] += gz[o] * row[i];
            }
        }
        return;
    }
    const std::size_t hw = L.h * L.w;
    for (std::size_t o = 0; o < L.out; ++o) {
        const double* go = gz + o * hw;
        for (std::size_t q = 0; q < hw; ++q) gb[o] += go[q];
        for (std::size_t i = 0; i < L.in; ++i) {
            const double* xi = x + i * hw;
            double* gxi = gx + i * hw;
            const double* k = W + (o * L.in + i) * 9;
            double* gk = gW + (o * L.in + i) * 9;
            for (long dy = -1; dy <= 1; ++dy)
                for (long dx = -1; dx <= 1; ++dx) {
                    const std::size_t ki = static_cast<std::size_t>((dy + 1) * 3 + (dx + 1));
                    double acc = 0.0;
                    for (std::size_t r = 0; r < L.h; ++r) {
                        const long rr = static_cast<long>(r) + dy;
                        if (rr < 0 || rr >= static_cast<long>(L.h)) continue;
                        for (std::size_t c = 0; c < L.w; ++c) {
                            const long cc = static_cast<long>(c) + dx;
                            if (cc < 0 || cc >= static_cast<long>(L.w)) continue;
                            const std::size_t src = static_cast<std::size_t>(rr) * L.w + static_cast<std::size_t>(cc);
                            acc += go[r * L.w + c] * xi[src];
                            gxi[src] += go[r * L.w + c] * k[ki];
                        }
                    }
                    gk[ki] += acc;
                }
        }
    }
}

} // namespace detail

/// One (x_t, t, target eps) training/probe example.
struct Example {
    Tensor x_t;
    int t = 1;
    Tensor target;
};

/// Small eps-predictor: either a 3-layer MLP (vector data) or a 4-layer 3x3
/// conv net (images). The sinusoidal embedding of t is appended to the input,
/// as extra features (MLP) or as constant extra channels (conv).
class NeuralDenoiser {
public:
    static NeuralDenoiser mlp(std::size_t data_dim, std::size_t hidden, std::size_t embed_dim = 16) {
        return NeuralDenoiser(NetKind::mlp, embed_dim, {data_dim, hidden, hidden, data_dim});
    }

    static NeuralDenoiser conv(Chw shape, std::size_t features, std::size_t embed_dim = 4) {
        return NeuralDenoiser(NetKind::conv, embed_dim,
                              {shape.c, shape.h, shape.w, features, features, features, shape.c});
    }

    /// Rebuild from a checkpoint header.
    NeuralDenoiser(NetKind kind, std::size_t embed_dim, std::vector<std::size_t> dims)
        : kind_(kind), embed_dim_(embed_dim), dims_(std::move(dims)) {
        if (embed_dim_ % 2 != 0) throw std::invalid_argument("neural: embedding dimension must be even");
        std::size_t offset = 0;
        auto add = [&](detail::Layer L) {
            L.offset = offset;
            offset += L.param_count();
            layers_.push_back(L);
        };
        if (kind_ == NetKind::mlp) {
            if (dims_.size() != 4 || dims_[0] != dims_[3]) throw std::invalid_argument("neural: bad mlp dims");
            data_shape_ = {dims_[0]};
            spatial_ = 1;
            add({false, dims_[0] + embed_dim_, dims_[1]});
            add({false, dims_[1], dims_[2]});
            add({false, dims_[2], dims_[3]});
        } else {
            if (dims_.size() != 7 || dims_[0] != dims_[6]) throw std::invalid_argument("neural: bad conv dims");
            const std::size_t c = dims_[0], h = dims_[1], w = dims_[2];
            data_shape_ = {c, h, w};
            spatial_ = h * w;
            add({true, c + embed_dim_, dims_[3], h, w});
            add({true, dims_[3], dims_[4], h, w});
            add({true, dims_[4], dims_[5], h, w});
            add({true, dims_[5], dims_[6], h, w});
        }
        params_.assign(offset, 0.0);
    }

    NetKind kind() const { return kind_; }
    std::size_t embed_dim() const { return embed_dim_; }
    const std::vector<std::size_t>& dims() const { return dims_; }
    const std::vector<std::size_t>& data_shape() const { return data_shape_; }
    std::size_t data_size() const { return Tensor::element_count(data_shape_); }
    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    /// Hidden layers get scaled-uniform weights; the output layer starts at
    /// zero so the initial prediction is exactly zero.
    void init(std::uint64_t seed) {
        Rng rng(seed);
        std::fill(params_.begin(), params_.end(), 0.0);
        for (std::size_t li = 0; li + 1 < layers_.size(); ++li) {
            const auto& L = layers_[li];
            const double fan_in = static_cast<double>(L.conv ? L.in * 9 : L.in);
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            const double scale = std::sqrt(3.0 / fan_in);
            for (std::size_t i = 0; i < L.weight_count(); ++i) params_[L.offset + i] = scale * u(rng);
        }
    }

    std::vector<double> time_embedding(int t) const {
        std::vector<double> e(embed_dim_);
        const std::size_t half = embed_dim_ / 2;
        for (std::size_t i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            e[i] = std::sin(t * freq);
            e[half + i] = std::cos(t * freq);
        }
        return e;
    }

    Tensor forward(const Tensor& x_t, int t) const {
        check_input(x_t);
        Trace tr;
        run(params_, x_t, t, tr);
        return Tensor(data_shape_, std::move(tr.z.back()));
    }

    /// Mean over the batch of per-example mean squared error between the
    /// prediction and the target. Gradients w.r.t. params are written to grad
    /// when it is non-empty.
    double loss(std::span<const double> params, std::span<const Example> batch, std::span<double> grad = {}) const {
        if (batch.empty()) throw std::invalid_argument("neural: empty batch");
        if (params.size() != params_.size()) throw std::invalid_argument("neural: parameter count mismatch");
        const bool want_grad = !grad.empty();
        if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
        const double d = static_cast<double>(data_size());
        const double scale = 1.0 / (d * static_cast<double>(batch.size()));
        double total = 0.0;
        Trace tr;
        std::vector<double> gz, gx;
        for (const Example& ex : batch) {
            check_input(ex.x_t);
            require_same_shape(ex.x_t, ex.target, "neural loss");
            run(params, ex.x_t, ex.t, tr);
            const auto& pred = tr.z.back();
            gz.assign(pred.size(), 0.0);
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const double r = pred[i] - ex.target[i];
                total += r * r * scale;
                gz[i] = 2.0 * r * scale;
            }
            if (!want_grad) continue;
            for (std::size_t li = layers_.size(); li-- > 0;) {
                const auto& L = layers_[li];
                if (li + 1 < layers_.size())
                    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] *= detail::silu_grad(tr.z[li][i]);
                gx.resize(L.in_size());
                detail::layer_backward(L, params.data(), tr.a[li].data(), gz.data(), grad.data(), gx.data());
                gz.swap(gx);
            }
        }
        return total;
    }

    double loss(std::span<const Example> batch, std::span<double> grad = {}) const {
        return loss(params_, batch, grad);
    }

    bool operator==(const NeuralDenoiser& o) const {
        return kind_ == o.kind_ && embed_dim_ == o.embed_dim_ && dims_ == o.dims_ && params_ == o.params_;
    }

private:
    struct Trace {
        std::vector<std::vector<double>> a; // input to each layer
        std::vector<std::vector<double>> z; // pre-activation output of each layer
    };

    void check_input(const Tensor& x) const {
        if (x.shape != data_shape_)
            throw std::invalid_argument("neural: expected input shape " + shape_string(data_shape_) + ", got " +
                                        shape_string(x.shape));
    }

    void run(std::span<const double> params, const Tensor& x_t, int t, Trace& tr) const {
        tr.a.resize(layers_.size());
        tr.z.resize(layers_.size());
        auto& in = tr.a[0];
        in.assign(x_t.data.begin(), x_t.data.end());
        for (double e : time_embedding(t)) in.insert(in.end(), spatial_, e);
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const auto& L = layers_[li];
            tr.z[li].assign(L.out_size(), 0.0);
            detail::layer_forward(L, params.data(), tr.a[li].data(), tr.z[li].data());
            if (li + 1 < layers_.size()) {
                auto& next = tr.a[li + 1];
                next.resize(L.out_size());
                for (std::size_t i = 0; i < next.size(); ++i) next[i] = detail::silu(tr.z[li][i]);
            }
        }
    }

    NetKind kind_;
    std::size_t embed_dim_;
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> data_shape_;
    std::size_t spatial_ = 1;
    std::vector<detail::Layer> layers_;
    std::vector<double> params_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t step = 0;
    bool operator==(const AdamState&) const = default;
};

inline void adam_update(std::vector<double>& params, std::span<const double> grad, AdamState& st,
                        const AdamConfig& cfg = {}) {
    if (st.m.size() != params.size()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
        st.step = 0;
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        params[i] -= cfg.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.eps);
    }
}

/// Builds noisy training examples: t ~ U{1..T}, eps ~ N(0, I), x_t by the
/// closed-form forward process.
inline std::vector<Example> make_training_batch(std::span<const Tensor> x0s, const Schedule& sched, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> pick_t(1, sched.steps());
    std::vector<Example> batch;
    batch.reserve(x0s.size());
    for (const Tensor& x0 : x0s) {
        Example ex;
        ex.t = pick_t(rng);
        ex.target = randn(x0.shape, rng);
        ex.x_t = q_sample(x0, ex.t, ex.target, sched);
        batch.push_back(std::move(ex));
    }
    return batch;
}

/// One Adam step on the eps-MSE objective. Returns the batch loss measured
/// before the update.
inline double train_step(NeuralDenoiser& net, std::span<const Tensor> x0s, const Schedule& sched, std::uint64_t seed,
                         AdamState& opt, const AdamConfig& cfg = {}) {
    if (x0s.empty()) throw std::invalid_argument("train_step: empty batch");
    const auto batch = make_training_batch(x0s, sched, seed);
    std::vector<double> grad(net.param_count());
    const double l = net.loss(batch, grad);
    if (!std::isfinite(l)) throw NumericError("train_step: non-finite loss at optimizer step " + std::to_string(opt.step + 1));
    adam_update(net.params(), grad, opt, cfg);
    return l;
}

/// Worst relative error between `grad_fn(params)` and central finite
/// differences of `loss_fn` with the given step, over every parameter.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
template <class LossFn, class GradFn>
double grad_check(std::vector<double> params, LossFn&& loss_fn, GradFn&& grad_fn, double step = 1e-4,
                  double floor = 1e-6) {
    const std::vector<double> analytic = grad_fn(std::as_const(params));
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + step;
        const double up = loss_fn(std::as_const(params));
        params[i] = keep - step;
        const double down = loss_fn(std::as_const(params));
        params[i] = keep;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

inline double grad_check(const NeuralDenoiser& net, std::span<const Example> probe, double step = 1e-4) {
    return grad_check(
        net.params(), [&](const std::vector<double>& p) { return net.loss(p, probe); },
        [&](const std::vector<double>& p) {
            std::vector<double> g(p.size());
            net.loss(p, probe, g);
            return g;
        },
        step);
}

// Checkpoint: "ILVRNET1" | u32 kind | u32 embed_dim | u32 n | u32 dims[n] | f32 params[]
// All integers and floats little-endian.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoErrc::open_failed, "cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoErrc::open_failed, "cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(IoErrc::open_failed, "write failed for " + path);
}

} // namespace detail

inline constexpr char kCheckpointMagic[] = "ILVRNET1";

inline std::string encode_checkpoint(const NeuralDenoiser& net) {
    std::string out(kCheckpointMagic, 8);
    detail::put_u32(out, static_cast<std::uint32_t>(net.kind()));
    detail::put_u32(out, static_cast<std::uint32_t>(net.embed_dim()));
    detail::put_u32(out, static_cast<std::uint32_t>(net.dims().size()));
    for (std::size_t d : net.dims()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double p : net.params()) detail::put_f32(out, static_cast<float>(p));
    return out;
}

inline NeuralDenoiser decode_checkpoint(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 8 || std::memcmp(p, kCheckpointMagic, 8) != 0)
        throw IoError(IoErrc::bad_magic, "not an ILVRNET1 checkpoint");
    if (bytes.size() < 20) throw IoError(IoErrc::truncated, "checkpoint header truncated");
    const std::uint32_t kind = detail::get_u32(p + 8);
    const std::uint32_t embed = detail::get_u32(p + 12);
    const std::uint32_t n = detail::get_u32(p + 16);
    if (kind > 1 || n > 64) throw IoError(IoErrc::malformed_header, "checkpoint header fields out of range");
    std::size_t pos = 20;
    if (bytes.size() < pos + 4ull * n) throw IoError(IoErrc::truncated, "checkpoint dims truncated");
    std::vector<std::size_t> dims;
    for (std::uint32_t i = 0; i < n; ++i, pos += 4) dims.push_back(detail::get_u32(p + pos));
    std::optional<NeuralDenoiser> net;
    try {
        net.emplace(static_cast<NetKind>(kind), embed, dims);
    } catch (const std::invalid_argument& e) {
        throw IoError(IoErrc::malformed_header, e.what());
    }
    const std::size_t need = pos + 4 * net->param_count();
    if (bytes.size() < need) throw IoError(IoErrc::truncated, "checkpoint parameters truncated");
    for (double& v : net->params()) {
        v = std::bit_cast<float>(detail::get_u32(p + pos));
        pos += 4;
    }
    return std::move(*net);
}

inline void write_checkpoint(const std::string& path, const NeuralDenoiser& net) {
    detail::write_file_bytes(path, encode_checkpoint(net));
}

inline NeuralDenoiser read_checkpoint(const std::string& path) {
    return decode_checkpoint(detail::read_file_bytes(path));
}

} // namespace ilvr
