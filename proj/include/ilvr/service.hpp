#pragma once

#include "base64.hpp"
#include "denoise.hpp"
#include "metrics.hpp"
#include "sampler.hpp"
#include "tensorio.hpp"

#include "json.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace ilvr::service {

/// Request rejected before enqueueing; `status` is the HTTP status to report.
struct RequestError : std::runtime_error {
    RequestError(int status, const std::string& what) : std::runtime_error(what), status(status) {}
    int status;
};

struct ModelEntry {
    std::string id;
    std::string kind; // "analytic" or "neural"
    std::string source;
    std::shared_ptr<const DenoiserModel> model;
};

class ModelRegistry {
public:
    void add(std::string id, std::string kind, std::string source, DenoiserModel model) {
        entries_[id] = {id, std::move(kind), std::move(source), std::make_shared<const DenoiserModel>(std::move(model))};
    }

    /// Mixture definitions (*.json) become analytic models and checkpoints
    /// (*.ilvrnet) neural ones; the id is the file stem.
    void load_dir(const std::filesystem::path& dir) {
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            if (!e.is_regular_file()) continue;
            const auto ext = e.path().extension().string();
            if (ext == ".json")
                add(e.path().stem().string(), "analytic", e.path().string(), DenoiserModel(load_mixture(e.path().string())));
            else if (ext == ".ilvrnet")
                add(e.path().stem().string(), "neural", e.path().string(), DenoiserModel(read_checkpoint(e.path().string())));
        }
    }

    const ModelEntry* find(const std::string& id) const {
        const auto it = entries_.find(id);
        return it == entries_.end() ? nullptr : &it->second;
    }

    const std::map<std::string, ModelEntry>& entries() const { return entries_; }

private:
    std::map<std::string, ModelEntry> entries_;
};

struct JobRequest {
    std::string model;
    Tensor reference;
    std::size_t factor = 4;
    Kernel kernel = Kernel::box;
    int stop_step = 0;
    std::size_t count = 4;
    std::optional<std::uint64_t> seed;
};

enum class JobState { queued, running, done, failed };

inline const char* to_string(JobState s) {
    switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
    }
    return "?";
}

inline constexpr std::size_t kMaxCount = 64;

/// Samples are returned as pixmaps when they are 1- or 3-channel images and
/// as tensor files otherwise.
inline std::string encode_sample(const Tensor& x) {
    if (x.shape.size() >= 2) {
        const Chw s = as_chw(x.shape);
        if (s.c == 1 || s.c == 3) return encode_pixmap(x);
    }
    return encode_tensor(x);
}

inline Tensor decode_reference(const std::string& bytes) {
    if (is_pixmap(bytes)) return decode_pixmap(bytes);
    return decode_tensor(bytes);
}

/// Validates a JSON job body against the registry and schedule.
inline JobRequest parse_job_request(const nlohmann::json& body, const ModelRegistry& registry, const Schedule& sched) {
    if (!body.is_object()) throw RequestError(400, "request body must be a JSON object");
    JobRequest req;
    try {
        req.model = body.at("model").get<std::string>();
        const ModelEntry* entry = registry.find(req.model);
        if (!entry) throw RequestError(404, "unknown model '" + req.model + "'");

        const auto decoded = base64_decode(body.at("reference").get<std::string>());
        if (!decoded) throw RequestError(400, "reference is not valid base64");
        try {
            req.reference = decode_reference(*decoded);
        } catch (const IoError& e) {
            throw RequestError(400, std::string("reference: ") + e.what());
        }
        // Pixmap shapes are [C,H,W]; accept them for models declared as [H,W].
        const auto want = entry->model->data_shape();
        if (req.reference.shape != want && Tensor::element_count(want) == req.reference.size() &&
            as_chw(want) == as_chw(req.reference.shape))
            req.reference.shape = want;
        if (req.reference.shape != want)
            throw RequestError(400, "reference shape " + shape_string(req.reference.shape) + " does not match model " +
                                        shape_string(want));

        const long factor = body.value("factor", 4L);
        if (factor < 1) throw RequestError(400, "factor must be >= 1");
        req.factor = static_cast<std::size_t>(factor);
        try {
            req.kernel = parse_kernel(body.value("kernel", std::string("box")));
        } catch (const std::invalid_argument& e) {
            throw RequestError(400, e.what());
        }
        req.stop_step = body.value("stop_step", 0);
        if (req.stop_step < 0 || req.stop_step >= sched.steps())
            throw RequestError(400, "stop_step must lie in [0, " + std::to_string(sched.steps()) + ")");
        const long count = body.value("count", 4L);
        if (count < 1 || count > static_cast<long>(kMaxCount))
            throw RequestError(400, "count must lie in [1, " + std::to_string(kMaxCount) + "]");
        req.count = static_cast<std::size_t>(count);
        if (body.contains("seed") && !body.at("seed").is_null()) req.seed = body.at("seed").get<std::uint64_t>();
        try {
            LowPassOp(req.factor, req.kernel, req.reference.shape);
        } catch (const std::invalid_argument& e) {
            throw RequestError(400, e.what());
        }
    } catch (const nlohmann::json::exception& e) {
        throw RequestError(400, std::string("malformed request: ") + e.what());
    }
    return req;
}

struct JobResult {
    std::vector<std::string> samples; // encoded sample files
    std::vector<double> lowfreq_error;
    std::optional<double> diversity;
};

struct Job {
    std::string id;
    JobRequest request;
    std::uint64_t seed = 0;
    std::size_t total_steps = 0;
    std::atomic<std::int64_t> steps_done{0};

    mutable std::mutex mu;
    JobState state = JobState::queued;
    std::optional<JobResult> result;
    std::string error;
};

struct ServiceOptions {
    std::size_t workers = std::min<std::size_t>(4, default_jobs());
    /// When non-empty, finished jobs are also written to <run_dir>/<job id>/.
    std::filesystem::path run_dir;
};

/// In-memory job store with a FIFO worker pool. Each job runs on one worker.
class JobService {
public:
    JobService(ModelRegistry registry, Schedule sched, ServiceOptions opts = {})
        : registry_(std::move(registry)), sched_(std::move(sched)), opts_(std::move(opts)) {
        const std::size_t n = std::max<std::size_t>(1, opts_.workers);
        for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this](std::stop_token st) { work(st); });
    }

    ~JobService() {
        for (auto& w : workers_) w.request_stop();
        cv_.notify_all();
    }

    JobService(const JobService&) = delete;
    JobService& operator=(const JobService&) = delete;

    const ModelRegistry& registry() const { return registry_; }
    const Schedule& schedule() const { return sched_; }

    std::string submit(const nlohmann::json& body) { return submit(parse_job_request(body, registry_, sched_)); }

    std::string submit(JobRequest req) {
        auto job = std::make_shared<Job>();
        {
            std::lock_guard lock(mu_);
            const std::uint64_t number = ++counter_;
            char buf[32];
            std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(number));
            job->id = buf;
            job->seed = req.seed.value_or(number);
            job->total_steps = req.count * static_cast<std::size_t>(sched_.steps());
            job->request = std::move(req);
            jobs_[job->id] = job;
            queue_.push_back(job);
        }
        cv_.notify_one();
        return job->id;
    }

    std::shared_ptr<const Job> find(const std::string& id) const {
        std::lock_guard lock(mu_);
        const auto it = jobs_.find(id);
        return it == jobs_.end() ? nullptr : it->second;
    }

    /// JSON view of a job; sample images are inlined as base64.
    std::optional<nlohmann::json> snapshot(const std::string& id) const {
        const auto job = find(id);
        if (!job) return std::nullopt;
        const auto& req = job->request;
        nlohmann::json j{{"id", job->id},
                         {"model", req.model},
                         {"factor", req.factor},
                         {"kernel", to_string(req.kernel)},
                         {"stop_step", req.stop_step},
                         {"count", req.count},
                         {"seed", job->seed}};
        const auto done = job->steps_done.load(std::memory_order_relaxed);
        const int T = sched_.steps();
        j["progress"] = {{"steps_done", done},
                         {"steps_total", job->total_steps},
                         {"t", T - static_cast<int>(done / static_cast<std::int64_t>(req.count))}};
        std::lock_guard lock(job->mu);
        j["state"] = to_string(job->state);
        if (job->state == JobState::done && job->result) {
            nlohmann::json samples = nlohmann::json::array();
            for (const auto& s : job->result->samples) samples.push_back(base64_encode(s));
            j["results"] = {{"samples", samples},
                            {"lowfreq_error", job->result->lowfreq_error},
                            {"diversity", job->result->diversity ? nlohmann::json(*job->result->diversity) : nullptr},
                            {"pairs", pair_count(job->result->samples.size())}};
        }
        if (job->state == JobState::failed) j["error"] = job->error;
        return j;
    }

    /// Blocks until the job leaves queued/running; for tests and tools.
    JobState wait(const std::string& id) const {
        for (;;) {
            const auto job = find(id);
            if (!job) throw std::out_of_range("unknown job " + id);
            {
                std::lock_guard lock(job->mu);
                if (job->state == JobState::done || job->state == JobState::failed) return job->state;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }

private:
    void work(std::stop_token st) {
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, st, [&] { return !queue_.empty(); });
                if (st.stop_requested()) return;
                job = queue_.front();
                queue_.pop_front();
            }
            run(*job);
        }
    }

    void run(Job& job) {
        {
            std::lock_guard lock(job.mu);
            job.state = JobState::running;
        }
        try {
            const ModelEntry* entry = registry_.find(job.request.model);
            if (!entry) throw std::runtime_error("model disappeared: " + job.request.model);
            IlvrConfig cfg{job.request.reference, job.request.factor, job.request.kernel, job.request.stop_step, job.seed,
                           job.request.count};
            SampleOptions so;
            so.steps_done = &job.steps_done;
            const auto res = sample_ilvr(*entry->model, sched_, cfg, so);
            JobResult out;
            for (const auto& s : res.samples) {
                out.samples.push_back(encode_sample(s));
                out.lowfreq_error.push_back(lowfreq_error(s, cfg.reference, cfg.factor, cfg.kernel));
            }
            if (res.samples.size() >= 2) out.diversity = pairwise_diversity(res.samples);
            if (!opts_.run_dir.empty()) persist(job, out);
            std::lock_guard lock(job.mu);
            job.result = std::move(out);
            job.state = JobState::done;
        } catch (const std::exception& e) {
            std::lock_guard lock(job.mu);
            job.error = e.what();
            job.state = JobState::failed;
        }
    }

    void persist(const Job& job, const JobResult& out) const {
        const auto dir = opts_.run_dir / job.id;
        std::filesystem::create_directories(dir);
        nlohmann::json files = nlohmann::json::array();
        for (std::size_t k = 0; k < out.samples.size(); ++k) {
            char name[32];
            std::snprintf(name, sizeof name, "sample_%04zu%s", k, is_pixmap(out.samples[k]) ? ".pnm" : ".ilvrt");
            detail::write_file_bytes((dir / name).string(), out.samples[k]);
            files.push_back(name);
        }
        const auto& req = job.request;
        write_json((dir / "manifest.json").string(),
                   {{"command", "service-job"},
                    {"job", job.id},
                    {"config",
                     {{"model", req.model},
                      {"factor", req.factor},
                      {"kernel", to_string(req.kernel)},
                      {"stop_step", req.stop_step},
                      {"count", req.count},
                      {"seed", job.seed}}},
                    {"schedule", {{"T", sched_.steps()}, {"sigma_mode", to_string(sched_.sigma_mode())}}},
                    {"reference", base64_encode(encode_tensor(req.reference))},
                    {"outputs", files},
                    {"lowfreq_error", out.lowfreq_error}});
    }

    ModelRegistry registry_;
    Schedule sched_;
    ServiceOptions opts_;

    mutable std::mutex mu_;
    std::condition_variable_any cv_;
    std::deque<std::shared_ptr<Job>> queue_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::uint64_t counter_ = 0;
    std::vector<std::jthread> workers_;
};

} // namespace ilvr::service
