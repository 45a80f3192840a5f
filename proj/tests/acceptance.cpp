// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <ilvr/http_api.hpp>
#include <ilvr/metrics.hpp>
#include <ilvr/sampler.hpp>
#include <ilvr/service.hpp>
#include <ilvr/tensorio.hpp>
#include <ilvr/toy.hpp>

#include "httplib.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <sys/wait.h>
#include <thread>

using namespace ilvr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const std::vector<std::size_t> kImage{1, 16, 16};

// A1: chained single-step transitions versus the closed-form marginal.
Outcome a1() {
    const auto s = make_default_schedule(50);
    const int T = 50, trials = 100000;
    const double x0 = 1.0;
    Rng rng(1);
    std::normal_distribution<double> n01;
    double sum = 0, sq = 0;
    for (int i = 0; i < trials; ++i) {
        double x = x0;
        for (int t = 1; t <= T; ++t) x = std::sqrt(1 - s.beta(t)) * x + std::sqrt(s.beta(t)) * n01(rng);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / trials, var = sq / trials - mean * mean;
    const double want_mean = std::sqrt(s.abar(T)) * x0, want_var = 1 - s.abar(T);
    const double z_mean = std::abs(mean - want_mean) / std::sqrt(want_var / trials);
    const double z_var = std::abs(var - want_var) / (want_var * std::sqrt(2.0 / trials));
    return {z_mean < 4 && z_var < 4, fmt("mean z=%.2f var z=%.2f", z_mean, z_var)};
}

// A2: unconditional sampling with the exact mixture denoiser recovers the mixture.
Outcome a2() {
    const auto mix = toy::points_2d();
    const DenoiserModel model(mix);
    const auto res = sample_unconditional(model, make_default_schedule(200), {2}, 2024, 2000);
    const auto r = mixture_recovery(res.samples, mix);
    bool ok = r.occupancy_max_dev <= 0.03;
    double worst_mean = 0, vr_lo = 1e9, vr_hi = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        worst_mean = std::max(worst_mean, r.mean_error[k]);
        vr_lo = std::min(vr_lo, r.var_ratio_min[k]);
        vr_hi = std::max(vr_hi, r.var_ratio_max[k]);
    }
    ok = ok && worst_mean < 0.1 && vr_lo >= 0.7 && vr_hi <= 1.3;
    return {ok, fmt("occupancy dev %.4f, mean err %.4f, var ratio [%.3f, %.3f]", r.occupancy_max_dev, worst_mean, vr_lo,
                    vr_hi)};
}

struct ImageWorld {
    GaussianMixture mix = toy::images(16);
    DenoiserModel model{mix};
    Schedule sched = make_default_schedule(200);
    std::vector<Tensor> refs = sample_mixture(mix, 20, 777);
};

ImageWorld& world() {
    static ImageWorld w;
    return w;
}

std::vector<Tensor> ilvr_draw(const Tensor& ref, std::size_t factor, Kernel k, int stop, std::uint64_t seed,
                              std::size_t count) {
    auto& w = world();
    return sample_ilvr(w.model, w.sched, IlvrConfig{ref, factor, k, stop, seed, count}).samples;
}

// A3: box refinement makes the final low-pass content exactly the reference's.
Outcome a3() {
    double worst = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& ref = world().refs[i];
        for (const auto& x : ilvr_draw(ref, 4, Kernel::box, 0, 500 + 10 * i, 10)) {
            const LowPassOp op(4, Kernel::box, kImage);
            const auto dx = op.downsample(x), dy = op.downsample(ref);
            for (std::size_t j = 0; j < dx.size(); ++j) worst = std::max(worst, std::abs(dx[j] - dy[j]));
        }
    }
    return {worst < 1e-3, fmt("max |down(x0) - down(y)| = %.3g over 50 samples", worst)};
}

double mean_diversity(std::size_t factor, int stop) {
    double total = 0;
    const auto& refs = world().refs;
    for (std::size_t i = 0; i < refs.size(); ++i)
        total += pairwise_diversity(ilvr_draw(refs[i], factor, Kernel::box, stop, 1000 + 100 * i, 10));
    return total / static_cast<double>(refs.size());
}

// A4: diversity grows with the downsampling factor.
Outcome a4() {
    std::vector<double> d;
    for (std::size_t n : {1u, 2u, 4u, 8u}) d.push_back(mean_diversity(n, 0));
    int strict = 0;
    bool monotone = true;
    for (std::size_t i = 1; i < d.size(); ++i) {
        monotone = monotone && d[i] >= d[i - 1];
        strict += d[i] > d[i - 1];
    }
    return {monotone && strict >= 2, fmt("N=1,2,4,8 -> %.4f %.4f %.4f %.4f", d[0], d[1], d[2], d[3])};
}

// A5: diversity grows as conditioning stops earlier.
Outcome a5() {
    const int T = world().sched.steps();
    std::vector<double> d;
    for (int k : {0, T / 4, T / 2, 3 * T / 4}) d.push_back(mean_diversity(4, k));
    bool monotone = true;
    for (std::size_t i = 1; i < d.size(); ++i) monotone = monotone && d[i] >= d[i - 1];
    return {monotone, fmt("stop_step=0,%d,%d,%d -> %.4f %.4f %.4f %.4f", T / 4, T / 2, 3 * T / 4, d[0], d[1], d[2], d[3])};
}

// A6: conditioning on references drawn from the data does not hurt the
// Frechet proxy relative to unconditional sampling. One sample per reference.
// The proxy is noisy at this scale, so it is averaged over independent
// replicates (own direct draws, references and seeds) before comparing.
Outcome a6() {
    auto& w = world();
    const std::size_t n = 8000, replicates = 4;
    double unc = 0, cond[2] = {0, 0};
    std::string per;
    for (std::size_t r = 0; r < replicates; ++r) {
        const auto direct = sample_mixture(w.mix, 20000, 999 + r);
        const auto refs = sample_mixture(w.mix, n, 778 + r);
        SampleOptions par;
        par.jobs = default_jobs();
        const double fu =
            frechet_pixel_distance(sample_unconditional(w.model, w.sched, kImage, 6000 + 1000000 * r, n, par).samples, direct);
        unc += fu / replicates;
        per += fmt("%s[%.4f", r ? " " : "", fu);
        for (std::size_t j = 0; j < 2; ++j) {
            const std::size_t factor = j == 0 ? 4 : 8;
            std::vector<Tensor> xs(n);
            parallel_for(n, default_jobs(), [&](std::size_t i) {
                xs[i] = ilvr_draw(refs[i], factor, Kernel::box, 0, 200000 * factor + 7 * i + 5000000 * r, 1).front();
            });
            const double fd = frechet_pixel_distance(xs, direct);
            cond[j] += fd / replicates;
            per += fmt(" %.4f", fd);
        }
        per += "]";
    }
    const bool ok = cond[0] <= 1.25 * unc && cond[1] <= 1.25 * unc;
    return {ok, fmt("mean over %zu replicates: unconditional %.4f, N=4 %.4f (ratio %.3f), N=8 %.4f (ratio %.3f); "
                    "per replicate [unc N4 N8] %s",
                    replicates, unc, cond[0], cond[0] / unc, cond[1], cond[1] / unc, per.c_str())};
}

// A7: references from a shifted domain still match, and the samples stay in
// the model's domain.
Outcome a7() {
    const auto& model_mix = world().mix;
    const auto shifted = toy::images(16, toy::Texture::inverted_checker);
    GaussianMixture both = model_mix;
    for (std::size_t k = 0; k < shifted.components(); ++k) {
        both.means.push_back(shifted.means[k]);
        both.vars.push_back(shifted.vars[k]);
    }
    both.weights.assign(both.means.size(), 1.0 / static_cast<double>(both.means.size()));
    const auto refs = sample_mixture(shifted, 10, 4242);
    double worst = 0;
    int in_model = 0, total = 0;
    for (std::size_t i = 0; i < refs.size(); ++i)
        for (const auto& x : ilvr_draw(refs[i], 4, Kernel::box, 0, 50 + 10 * i, 5)) {
            ++total;
            in_model += nearest_component(both, x.data) < model_mix.components();
            worst = std::max(worst, lowfreq_error(x, refs[i], 4, Kernel::box));
            if (!all_finite(x)) return {false, "non-finite sample"};
        }
    return {worst < 1e-3 && in_model == total,
            fmt("max lowfreq_error %.3g, %d/%d nearest to a model component", worst, in_model, total)};
}

// A8: one-shot x0 prediction with the exact denoiser is the posterior mean.
Outcome a8() {
    double worst = 0;
    for (const auto& mix : {toy::points_2d(), toy::images(16)}) {
        const DenoiserModel model(mix);
        const auto s = make_default_schedule(200);
        Rng rng(8);
        std::uniform_int_distribution<int> pick(1, 200);
        for (int i = 0; i < 1000; ++i) {
            const int t = pick(rng);
            const auto x = randn(mix.data_shape(), rng);
            const auto got = predict_x0(model, x, t, s);
            const auto want = gmm_posterior_mean(mix, x.data, s.abar(t));
            for (std::size_t j = 0; j < want.size(); ++j) worst = std::max(worst, std::abs(got[j] - want[j]));
        }
    }
    return {worst < 1e-9, fmt("max deviation %.3g over 2x1000 probes", worst)};
}

// A9: samples generated with different interpolation kernels agree at low
// frequencies. All errors are measured with the same box N=4 operator.
Outcome a9() {
    const std::vector<Kernel> kernels{Kernel::box, Kernel::bilinear, Kernel::bicubic, Kernel::lanczos3};
    const std::size_t per = 5;
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& ref = world().refs[i];
        std::vector<std::vector<Tensor>> sets;
        double within = 0;
        for (Kernel k : kernels) {
            sets.push_back(ilvr_draw(ref, 4, k, 0, 31 + i, per));
            for (const auto& x : sets.back()) within += lowfreq_error(x, ref, 4, Kernel::box);
        }
        within /= static_cast<double>(kernels.size() * per);
        double worst = 0;
        for (std::size_t a = 0; a < kernels.size(); ++a)
            for (std::size_t b = a + 1; b < kernels.size(); ++b) {
                double cross = 0;
                for (std::size_t s = 0; s < per; ++s) cross += lowfreq_error(sets[a][s], sets[b][s], 4, Kernel::box);
                worst = std::max(worst, cross / per);
            }
        ok = ok && worst < 2 * within;
        detail += fmt("%sref%zu cross %.4f vs 2x within %.4f", i ? "; " : "", i, worst, 2 * within);
    }
    return {ok, detail};
}

// A10: analytic gradients match finite differences; training makes progress.
Outcome a10() {
    auto perturbed = [](NeuralDenoiser net, std::uint64_t seed) {
        Rng rng(seed);
        std::normal_distribution<double> n01;
        for (double& p : net.params()) p = 0.5 * n01(rng);
        return net;
    };
    auto probe = [](const std::vector<std::size_t>& shape, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<Example> out;
        for (int i = 0; i < 4; ++i) out.push_back({randn(shape, rng), 1 + 37 * i, randn(shape, rng)});
        return out;
    };
    const double g_mlp = grad_check(perturbed(NeuralDenoiser::mlp(2, 16, 4), 1), probe({2}, 2));
    const double g_conv = grad_check(perturbed(NeuralDenoiser::conv({1, 4, 4}, 4, 2), 3), probe({1, 4, 4}, 4));

    const auto mix = toy::points_2d();
    const auto sched = make_default_schedule(200);
    auto net = NeuralDenoiser::mlp(2, 32);
    net.init(1);
    const auto eval = make_training_batch(sample_mixture(mix, 4096, 10), sched, 11);
    const double before = net.loss(eval);
    AdamState opt;
    for (std::uint64_t step = 0; step < 5000; ++step)
        train_step(net, sample_mixture(mix, 64, mix_seed(3) + step), sched, mix_seed(4) + step, opt);
    const double after = net.loss(eval);
    return {g_mlp < 1e-4 && g_conv < 1e-4 && after < 0.9 * before,
            fmt("grad rel err mlp %.2e conv %.2e; eps-MSE %.4f -> %.4f", g_mlp, g_conv, before, after)};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ILVR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// A11: same seed, same bytes: CLI repeat runs, CLI with different --jobs, and
// the HTTP service.
Outcome a11() {
    const auto dir = fs::temp_directory_path() / "ilvr_acceptance_a11";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto p = [&](const std::string& n) { return (dir / n).string(); };
    if (run_cli("toy --kind images --out " + p("faces.json") + " --ref-out " + p("ref.pgm") + " --seed 9") != 0)
        return {false, "toy command failed"};
    const std::string base = "ilvr --model analytic:" + p("faces.json") + " --ref " + p("ref.pgm") +
                             " --factor 4 --kernel bicubic --stop-step 20 --count 4 --seed 314";
    if (run_cli(base + " --out-dir " + p("a") + " --jobs 1") != 0 || run_cli(base + " --out-dir " + p("b") + " --jobs 4") != 0)
        return {false, "ilvr command failed"};

    service::ModelRegistry reg;
    reg.add("faces", "analytic", p("faces.json"), DenoiserModel(load_mixture(p("faces.json"))));
    service::JobService jobs(std::move(reg), make_default_schedule(200));
    httplib::Server server;
    service::mount_api(server, jobs);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    const nlohmann::json body{{"model", "faces"},
                              {"reference", base64_encode(detail::read_file_bytes(p("ref.pgm")))},
                              {"factor", 4},
                              {"kernel", "bicubic"},
                              {"stop_step", 20},
                              {"count", 4},
                              {"seed", 314}};
    std::vector<std::string> ids;
    for (int i = 0; i < 2; ++i) {
        auto res = client.Post("/api/jobs", body.dump(), "application/json");
        if (!res || res->status != 202) {
            server.stop();
            th.join();
            return {false, "job submission failed"};
        }
        ids.push_back(nlohmann::json::parse(res->body)["id"]);
    }
    int same = 0, compared = 0;
    std::vector<std::string> first;
    for (const auto& id : ids) {
        jobs.wait(id);
        for (int k = 0; k < 4; ++k) {
            auto res = client.Get("/api/jobs/" + id + "/samples/" + std::to_string(k));
            const std::string name = "sample_000" + std::to_string(k);
            const auto cli_a = detail::read_file_bytes(p("a/" + name + ".pgm"));
            const auto cli_b = detail::read_file_bytes(p("b/" + name + ".pgm"));
            const auto ten_a = detail::read_file_bytes(p("a/" + name + ".ilvrt"));
            const auto ten_b = detail::read_file_bytes(p("b/" + name + ".ilvrt"));
            ++compared;
            same += res && res->status == 200 && res->body == cli_a && cli_a == cli_b && ten_a == ten_b;
        }
    }
    server.stop();
    th.join();
    fs::remove_all(dir);
    return {same == compared, fmt("%d/%d samples byte-identical across CLI --jobs 1, --jobs 4 and two service jobs",
                                  same, compared)};
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> fn;
        double budget_s; // 0: no runtime bound
    };
    const std::vector<Criterion> all{{"A1", a1, 10},  {"A2", a2, 120}, {"A3", a3, 120}, {"A4", a4, 0},
                                     {"A5", a5, 0},   {"A6", a6, 0},   {"A7", a7, 0},   {"A8", a8, 0},
                                     {"A9", a9, 0},   {"A10", a10, 0}, {"A11", a11, 0}};
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs > c.budget_s) {
            o.pass = false;
            o.detail += fmt(" [over %.0f s budget]", c.budget_s);
        }
        failed += !o.pass;
        std::printf("%s %s  %s  (%.1f s)\n", c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
