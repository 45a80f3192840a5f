// ilvr: command-line front end for training, sampling, conditioned sampling
// and evaluation. Exit codes: 0 ok, 2 usage, 3 data, 4 numeric failure.

#include <ilvr/metrics.hpp>
#include <ilvr/neural.hpp>
#include <ilvr/sampler.hpp>
#include <ilvr/tensorio.hpp>
#include <ilvr/toy.hpp>

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct ScheduleArgs {
    int steps = 200;
    std::optional<double> beta_start, beta_end;
    std::string sigma_mode = "posterior";

    void add_to(CLI::App* cmd) {
        cmd->add_option("--T", steps, "number of diffusion steps")->capture_default_str();
        cmd->add_option("--beta-start", beta_start, "first beta (default 1e-4 * 1000/T)");
        cmd->add_option("--beta-end", beta_end, "last beta (default 0.02 * 1000/T)");
        cmd->add_option("--sigma-mode", sigma_mode, "reverse noise: posterior or beta")
            ->check(CLI::IsMember({"posterior", "beta"}))
            ->capture_default_str();
    }

    ilvr::Schedule build() const {
        if (steps < 1) throw UsageError("--T must be >= 1");
        const auto mode = ilvr::parse_sigma_mode(sigma_mode);
        if (!beta_start && !beta_end) return ilvr::make_default_schedule(steps, mode);
        const double scale = 1000.0 / steps;
        try {
            return ilvr::make_linear_schedule(steps, beta_start.value_or(1e-4 * scale), beta_end.value_or(0.02 * scale),
                                              mode);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }

    static json describe(const ilvr::Schedule& s) {
        return {{"T", s.steps()},
                {"beta_start", s.beta(1)},
                {"beta_end", s.beta(s.steps())},
                {"sigma_mode", ilvr::to_string(s.sigma_mode())}};
    }
};

struct LoadedModel {
    ilvr::DenoiserModel model;
    std::string spec;
    std::string id;
    std::optional<ilvr::GaussianMixture> mixture;
};

/// "analytic:<mixture.json>" or a checkpoint path.
LoadedModel load_model(const std::string& spec) {
    constexpr std::string_view prefix = "analytic:";
    if (spec.rfind(prefix, 0) == 0) {
        const std::string path = spec.substr(prefix.size());
        const std::string bytes = ilvr::detail::read_file_bytes(path);
        auto mix = ilvr::load_mixture(path);
        return {ilvr::DenoiserModel(mix), spec, "analytic:fnv1a64:" + fnv1a_hex(bytes), mix};
    }
    const std::string bytes = ilvr::detail::read_file_bytes(spec);
    return {ilvr::DenoiserModel(ilvr::decode_checkpoint(bytes)), spec, "neural:fnv1a64:" + fnv1a_hex(bytes), std::nullopt};
}

/// Pixmaps load as [C,H,W]; reshape to the model's declared shape when the
/// layouts coincide.
ilvr::Tensor conform(ilvr::Tensor x, const std::vector<std::size_t>& want) {
    if (x.shape != want && ilvr::Tensor::element_count(want) == x.size() && ilvr::as_chw(want) == ilvr::as_chw(x.shape))
        x.shape = want;
    if (x.shape != want)
        throw std::invalid_argument("reference shape " + ilvr::shape_string(x.shape) + " does not match model shape " +
                                    ilvr::shape_string(want));
    return x;
}

bool image_shaped(const ilvr::Tensor& x) {
    if (x.shape.size() < 2) return false;
    const auto s = ilvr::as_chw(x.shape);
    return s.c == 1 || s.c == 3;
}

/// Writes sample_NNNN.ilvrt and, for images, sample_NNNN.pgm/.ppm.
std::vector<std::string> write_samples(const fs::path& dir, const std::vector<ilvr::Tensor>& samples) {
    fs::create_directories(dir);
    std::vector<std::string> files;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "sample_%04zu", i);
        const fs::path tpath = dir / (std::string(stem) + ".ilvrt");
        ilvr::write_tensor(tpath.string(), samples[i]);
        files.push_back(tpath.string());
        if (image_shaped(samples[i])) {
            const bool gray = ilvr::as_chw(samples[i].shape).c == 1;
            const fs::path ipath = dir / (std::string(stem) + (gray ? ".pgm" : ".ppm"));
            ilvr::save_image(ipath.string(), samples[i]);
            files.push_back(ipath.string());
        }
    }
    return files;
}

void write_reports(const fs::path& dir, const std::vector<ilvr::EvalReport>& reports) {
    fs::create_directories(dir);
    ilvr::write_json((dir / "reports.json").string(), ilvr::to_json(reports));
    ilvr::detail::write_file_bytes((dir / "reports.txt").string(), ilvr::to_table(reports));
    std::cout << ilvr::to_table(reports);
}

bool is_sample_file(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".pgm" || ext == ".ppm" || ext == ".ilvrt";
}

/// Sample files in a directory, sorted. Where an image and a tensor file share
/// a stem, the tensor file wins (full f32 precision).
std::vector<fs::path> list_samples(const fs::path& dir) {
    std::map<std::string, fs::path> by_stem;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || !is_sample_file(e.path())) continue;
        const auto stem = e.path().stem().string();
        const auto it = by_stem.find(stem);
        if (it == by_stem.end() || e.path().extension() == ".ilvrt") by_stem[stem] = e.path();
    }
    std::vector<fs::path> out;
    for (auto& [_, p] : by_stem) out.push_back(p);
    return out;
}

std::vector<ilvr::Tensor> load_all(const std::vector<fs::path>& files) {
    std::vector<ilvr::Tensor> out;
    for (const auto& f : files) out.push_back(ilvr::load_any(f.string()));
    return out;
}

struct Manifest {
    json doc;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    Manifest(const std::string& command, const std::vector<std::string>& argv) {
        doc["command"] = command;
        doc["argv"] = argv;
    }

    void write(const fs::path& path) {
        doc["duration_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        ilvr::write_json(path.string(), doc);
    }
};

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data, out, loss_csv, manifest;
    std::size_t steps = 5000, batch = 64, hidden = 32, features = 8;
    std::optional<std::size_t> embed;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    ScheduleArgs sched;
};

/// x0 batches for step `step`: fresh mixture draws or a seeded pick from a
/// directory of samples.
class TrainingData {
public:
    explicit TrainingData(const std::string& path) {
        if (fs::is_directory(path)) {
            examples_ = load_all(list_samples(path));
            if (examples_.empty()) throw ilvr::IoError(ilvr::IoErrc::open_failed, "no samples in " + path);
            for (const auto& e : examples_)
                if (e.shape != examples_.front().shape) throw std::invalid_argument("dataset images differ in shape");
        } else {
            mixture_ = ilvr::load_mixture(path);
        }
    }

    std::vector<std::size_t> shape() const {
        return mixture_ ? mixture_->data_shape() : examples_.front().shape;
    }

    std::vector<ilvr::Tensor> batch(std::size_t size, std::uint64_t seed) const {
        if (mixture_) return ilvr::sample_mixture(*mixture_, size, seed);
        ilvr::Rng rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, examples_.size() - 1);
        std::vector<ilvr::Tensor> out;
        for (std::size_t i = 0; i < size; ++i) out.push_back(examples_[pick(rng)]);
        return out;
    }

private:
    std::optional<ilvr::GaussianMixture> mixture_;
    std::vector<ilvr::Tensor> examples_;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
    if (a.batch < 1) throw UsageError("--batch must be >= 1");
    const auto sched = a.sched.build();
    const TrainingData data(a.data);
    const auto shape = data.shape();
    auto net = shape.size() == 1 ? ilvr::NeuralDenoiser::mlp(shape[0], a.hidden, a.embed.value_or(16))
                                 : ilvr::NeuralDenoiser::conv(ilvr::as_chw(shape), a.features, a.embed.value_or(4));
    net.init(a.seed);

    Manifest manifest("train", argv);
    ilvr::AdamState opt;
    ilvr::AdamConfig cfg;
    cfg.lr = a.lr;
    std::string csv = "step,loss\n";
    std::vector<double> losses;
    for (std::size_t step = 0; step < a.steps; ++step) {
        const auto x0 = data.batch(a.batch, ilvr::mix_seed(a.seed * 2 + 1) + step);
        const double l = ilvr::train_step(net, x0, sched, ilvr::mix_seed(a.seed * 2 + 2) + step, opt, cfg);
        losses.push_back(l);
        char line[64];
        std::snprintf(line, sizeof line, "%zu,%.9g\n", step + 1, l);
        csv += line;
    }
    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    ilvr::write_checkpoint(a.out, net);
    const std::string loss_csv = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
    ilvr::detail::write_file_bytes(loss_csv, csv);

    auto window_mean = [&](std::size_t from, std::size_t to) {
        double s = 0.0;
        for (std::size_t i = from; i < to; ++i) s += losses[i];
        return s / static_cast<double>(to - from);
    };
    const std::size_t w = std::min<std::size_t>(100, losses.size());
    json summary = json::object();
    if (w > 0) {
        summary["initial_loss"] = window_mean(0, w);
        summary["final_loss"] = window_mean(losses.size() - w, losses.size());
        std::printf("initial loss %.6f  final loss %.6f  (%zu-step windows)\n", summary["initial_loss"].get<double>(),
                    summary["final_loss"].get<double>(), w);
    }
    manifest.doc["config"] = {{"data", a.data},     {"steps", a.steps},   {"batch", a.batch},
                              {"lr", a.lr},         {"hidden", a.hidden}, {"features", a.features},
                              {"kind", net.kind() == ilvr::NetKind::mlp ? "mlp" : "conv"},
                              {"embed", net.embed_dim()}};
    manifest.doc["seed"] = a.seed;
    manifest.doc["schedule"] = ScheduleArgs::describe(sched);
    manifest.doc["model"] = {{"checkpoint", a.out},
                             {"id", "neural:fnv1a64:" + fnv1a_hex(ilvr::encode_checkpoint(net))}};
    manifest.doc["outputs"] = {a.out, loss_csv};
    manifest.doc["summary"] = summary;
    manifest.write(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
    return kOk;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
    std::string model, out_dir;
    std::size_t count = 10, jobs = ilvr::default_jobs();
    std::uint64_t seed = 0;
    ScheduleArgs sched;
};

int cmd_sample(const SampleArgs& a, const std::vector<std::string>& argv) {
    if (a.count < 1) throw UsageError("--count must be >= 1");
    const auto sched = a.sched.build();
    const auto m = load_model(a.model);
    Manifest manifest("sample", argv);
    ilvr::SampleOptions so;
    so.jobs = a.jobs;
    const auto res = ilvr::sample_unconditional(m.model, sched, m.model.data_shape(), a.seed, a.count, so);
    const auto files = write_samples(a.out_dir, res.samples);
    std::vector<ilvr::EvalReport> reports;
    if (res.samples.size() >= 2)
        reports.push_back({"pairwise_diversity", ilvr::pairwise_diversity(res.samples), res.samples.size(), std::nullopt,
                           {{"pairs", ilvr::pair_count(res.samples.size())}}});
    if (m.mixture) {
        auto rec = ilvr::mixture_recovery_report(res.samples, *m.mixture);
        reports.insert(reports.end(), rec.begin(), rec.end());
    }
    write_reports(a.out_dir, reports);
    manifest.doc["config"] = {{"count", a.count}, {"jobs", a.jobs}};
    manifest.doc["seed"] = a.seed;
    manifest.doc["schedule"] = ScheduleArgs::describe(sched);
    manifest.doc["model"] = {{"spec", m.spec}, {"id", m.id}};
    manifest.doc["outputs"] = files;
    manifest.write(fs::path(a.out_dir) / "manifest.json");
    return kOk;
}

// ---------------------------------------------------------------- ilvr

struct IlvrArgs {
    std::string model, ref, out_dir, kernel = "box";
    std::vector<std::size_t> factors{4};
    int stop_step = 0;
    std::size_t count = 10, jobs = ilvr::default_jobs();
    std::uint64_t seed = 0;
    ScheduleArgs sched;
};

int cmd_ilvr(const IlvrArgs& a, const std::vector<std::string>& argv) {
    if (a.count < 1) throw UsageError("--count must be >= 1");
    if (a.factors.empty()) throw UsageError("--factor needs at least one value");
    for (auto f : a.factors)
        if (f < 1) throw UsageError("--factor values must be >= 1");
    const auto sched = a.sched.build();
    if (a.stop_step < 0 || a.stop_step >= sched.steps()) throw UsageError("--stop-step must lie in [0, T)");
    const auto kernel = ilvr::parse_kernel(a.kernel);
    const auto m = load_model(a.model);
    const auto reference = conform(ilvr::load_any(a.ref), m.model.data_shape());

    Manifest manifest("ilvr", argv);
    std::vector<ilvr::EvalReport> reports;
    json outputs = json::array();
    ilvr::SampleOptions so;
    so.jobs = a.jobs;
    for (std::size_t factor : a.factors) {
        ilvr::IlvrConfig cfg{reference, factor, kernel, a.stop_step, a.seed, a.count};
        const auto res = ilvr::sample_ilvr(m.model, sched, cfg, so);
        const fs::path dir = a.factors.size() == 1 ? fs::path(a.out_dir) : fs::path(a.out_dir) / ("N" + std::to_string(factor));
        for (const auto& f : write_samples(dir, res.samples)) outputs.push_back(f);
        const ilvr::EvalConfig ec{factor, a.stop_step, a.kernel};
        double worst = 0.0;
        for (std::size_t i = 0; i < res.samples.size(); ++i) {
            const double e = ilvr::lowfreq_error(res.samples[i], reference, factor, kernel);
            worst = std::max(worst, e);
            reports.push_back({"lowfreq_error", e, 1, ec, {{"sample", i}}});
        }
        reports.push_back({"lowfreq_error_max", worst, res.samples.size(), ec, {}});
        if (res.samples.size() >= 2)
            reports.push_back({"pairwise_diversity", ilvr::pairwise_diversity(res.samples), res.samples.size(), ec,
                               {{"pairs", ilvr::pair_count(res.samples.size())}}});
    }
    write_reports(a.out_dir, reports);
    manifest.doc["config"] = {{"ref", a.ref},         {"factors", a.factors}, {"kernel", a.kernel},
                              {"stop_step", a.stop_step}, {"count", a.count},    {"jobs", a.jobs}};
    manifest.doc["seed"] = a.seed;
    manifest.doc["schedule"] = ScheduleArgs::describe(sched);
    manifest.doc["model"] = {{"spec", m.spec}, {"id", m.id}};
    manifest.doc["outputs"] = outputs;
    manifest.write(fs::path(a.out_dir) / "manifest.json");
    return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string samples, real, out;
    std::size_t group_size = 10;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
    if (a.group_size < 2) throw UsageError("--group-size must be >= 2");
    std::vector<std::pair<std::string, std::vector<fs::path>>> groups;
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(a.samples))
        if (e.is_directory()) subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& d : subdirs) {
        auto files = list_samples(d);
        if (!files.empty()) groups.emplace_back(d.filename().string(), std::move(files));
    }
    if (groups.empty()) {
        const auto files = list_samples(a.samples);
        for (std::size_t i = 0; i < files.size(); i += a.group_size) {
            const std::size_t end = std::min(files.size(), i + a.group_size);
            groups.emplace_back("group" + std::to_string(i / a.group_size),
                                std::vector<fs::path>(files.begin() + static_cast<long>(i), files.begin() + static_cast<long>(end)));
        }
    }
    if (groups.empty()) throw std::invalid_argument("no sample files under " + a.samples);

    Manifest manifest("eval", argv);
    std::vector<ilvr::EvalReport> reports;
    std::vector<ilvr::Tensor> pooled;
    double total = 0.0;
    for (const auto& [name, files] : groups) {
        if (files.size() < 2)
            throw std::invalid_argument("group '" + name + "' has " + std::to_string(files.size()) + " sample(s); need >= 2");
        auto xs = load_all(files);
        const double d = ilvr::pairwise_diversity(xs);
        total += d;
        reports.push_back({"pairwise_diversity", d, xs.size(), std::nullopt,
                           {{"group", name}, {"pairs", ilvr::pair_count(xs.size())}}});
        pooled.insert(pooled.end(), std::make_move_iterator(xs.begin()), std::make_move_iterator(xs.end()));
    }
    reports.push_back({"pairwise_diversity_mean", total / static_cast<double>(groups.size()), groups.size(), std::nullopt, {}});
    if (!a.real.empty()) {
        const auto real = load_all(list_samples(a.real));
        reports.push_back({"frechet_pixel_distance", ilvr::frechet_pixel_distance(pooled, real), pooled.size(),
                           std::nullopt, {{"n_real", real.size()}}});
    }
    const fs::path out = a.out.empty() ? fs::path(a.samples) / "eval" : fs::path(a.out);
    write_reports(out, reports);
    manifest.doc["config"] = {{"samples", a.samples}, {"real", a.real}, {"group_size", a.group_size}};
    manifest.doc["outputs"] = {(out / "reports.json").string(), (out / "reports.txt").string()};
    manifest.write(out / "manifest.json");
    return kOk;
}

// ---------------------------------------------------------------- toy

struct ToyArgs {
    std::string kind = "images", out, ref_out;
    std::size_t size = 16;
    std::uint64_t seed = 0;
};

int cmd_toy(const ToyArgs& a) {
    ilvr::GaussianMixture mix;
    if (a.kind == "points") mix = ilvr::toy::points_2d();
    else if (a.kind == "images") mix = ilvr::toy::images(a.size);
    else mix = ilvr::toy::images(a.size, ilvr::toy::Texture::inverted_checker);
    ilvr::save_mixture(a.out, mix);
    if (!a.ref_out.empty()) {
        ilvr::Rng rng(a.seed);
        const auto ref = ilvr::sample_mixture(mix, rng);
        if (image_shaped(ref)) ilvr::save_image(a.ref_out, ref);
        else ilvr::write_tensor(a.ref_out, ref);
    }
    return kOk;
}

int run(std::vector<std::string> args);

// ---------------------------------------------------------------- replay

/// Re-runs the argv recorded in a manifest with every output location moved
/// under `out_dir`.
int cmd_replay(const std::string& manifest_path, const std::string& out_dir) {
    const auto doc = ilvr::read_json(manifest_path);
    if (!doc.contains("argv")) throw ilvr::IoError(ilvr::IoErrc::bad_document, "manifest has no argv");
    auto argv = doc.at("argv").get<std::vector<std::string>>();
    if (!argv.empty() && argv.front() == "replay") throw UsageError("refusing to replay a replay");
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
        if (argv[i] == "--out-dir") argv[i + 1] = out_dir;
        else if (argv[i] == "--out" || argv[i] == "--loss-csv" || argv[i] == "--manifest")
            argv[i + 1] = (fs::path(out_dir) / fs::path(argv[i + 1]).filename()).string();
    }
    return run(argv);
}

int run(std::vector<std::string> args) {
    CLI::App app{"Reference-conditioned diffusion sampling lab"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a neural denoiser on a mixture file or sample directory");
    t->add_option("--data", train.data, "mixture .json or directory of .pgm/.ppm/.ilvrt")->required();
    t->add_option("--out", train.out, "checkpoint path")->required();
    t->add_option("--steps", train.steps, "optimizer steps")->capture_default_str();
    t->add_option("--batch", train.batch, "examples per step")->capture_default_str();
    t->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
    t->add_option("--hidden", train.hidden, "MLP hidden width (vector data)")->capture_default_str();
    t->add_option("--features", train.features, "conv feature channels (image data)")->capture_default_str();
    t->add_option("--embed", train.embed, "time-embedding size (default 16 MLP, 4 conv)");
    t->add_option("--seed", train.seed, "RNG seed")->capture_default_str();
    t->add_option("--loss-csv", train.loss_csv, "loss curve path (default <out>.loss.csv)");
    t->add_option("--manifest", train.manifest, "manifest path (default <out>.manifest.json)");
    train.sched.add_to(t);

    SampleArgs sample;
    auto* s = app.add_subcommand("sample", "unconditional ancestral sampling");
    s->add_option("--model", sample.model, "checkpoint path or analytic:<mixture.json>")->required();
    s->add_option("--out-dir", sample.out_dir, "output directory")->required();
    s->add_option("--count", sample.count, "samples to draw")->capture_default_str();
    s->add_option("--seed", sample.seed, "base seed; sample i uses seed + i")->capture_default_str();
    s->add_option("--jobs", sample.jobs, "concurrent samples")->capture_default_str();
    sample.sched.add_to(s);

    IlvrArgs ilvr_args;
    auto* c = app.add_subcommand("ilvr", "reference-conditioned sampling");
    c->add_option("--model", ilvr_args.model, "checkpoint path or analytic:<mixture.json>")->required();
    c->add_option("--ref", ilvr_args.ref, "reference image (.pgm/.ppm) or tensor file")->required();
    c->add_option("--out-dir", ilvr_args.out_dir, "output directory")->required();
    c->add_option("--factor", ilvr_args.factors, "downsampling factor(s); a comma list runs a sweep")
        ->delimiter(',')
        ->capture_default_str();
    c->add_option("--kernel", ilvr_args.kernel, "box, bilinear, bicubic, lanczos2, lanczos3")
        ->check(CLI::IsMember({"box", "bilinear", "bicubic", "lanczos2", "lanczos3"}))
        ->capture_default_str();
    c->add_option("--stop-step", ilvr_args.stop_step, "refine only while t > stop-step")->capture_default_str();
    c->add_option("--count", ilvr_args.count, "samples per factor")->capture_default_str();
    c->add_option("--seed", ilvr_args.seed, "base seed; sample i uses seed + i")->capture_default_str();
    c->add_option("--jobs", ilvr_args.jobs, "concurrent samples")->capture_default_str();
    ilvr_args.sched.add_to(c);

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "diversity per reference group and Frechet pixel distance");
    e->add_option("--samples", eval.samples, "directory of samples, or of per-reference subdirectories")->required();
    e->add_option("--real", eval.real, "directory of real samples for the Frechet proxy");
    e->add_option("--group-size", eval.group_size, "samples per reference when the directory is flat")
        ->capture_default_str();
    e->add_option("--out", eval.out, "report directory (default <samples>/eval)");

    ToyArgs toy;
    auto* y = app.add_subcommand("toy", "write a built-in toy mixture (and optionally a reference drawn from it)");
    y->add_option("--kind", toy.kind, "points, images or images-shifted")
        ->check(CLI::IsMember({"points", "images", "images-shifted"}))
        ->capture_default_str();
    y->add_option("--out", toy.out, "mixture JSON path")->required();
    y->add_option("--size", toy.size, "image side")->capture_default_str();
    y->add_option("--ref-out", toy.ref_out, "also write one draw as a reference");
    y->add_option("--seed", toy.seed, "seed for the reference draw")->capture_default_str();

    std::string replay_manifest, replay_out;
    auto* r = app.add_subcommand("replay", "re-run the command recorded in a manifest");
    r->add_option("--manifest", replay_manifest, "manifest.json to replay")->required();
    r->add_option("--out-dir", replay_out, "directory for the replayed outputs")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::Success& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kUsage;
    }

    try {
        if (*t) return cmd_train(train, args);
        if (*s) return cmd_sample(sample, args);
        if (*c) return cmd_ilvr(ilvr_args, args);
        if (*e) return cmd_eval(eval, args);
        if (*y) return cmd_toy(toy);
        if (*r) return cmd_replay(replay_manifest, replay_out);
    } catch (const UsageError& ex) {
        std::cerr << "usage error: " << ex.what() << "\n";
        return kUsage;
    } catch (const ilvr::NumericError& ex) {
        std::cerr << "numeric failure: " << ex.what() << "\n";
        return kNumeric;
    } catch (const ilvr::IoError& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return kData;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return kData;
    } catch (const fs::filesystem_error& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return kData;
    }
    return kUsage;
}

} // namespace

int main(int argc, char** argv) { return run(std::vector<std::string>(argv + 1, argv + argc)); }
