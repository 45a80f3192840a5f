#include <ilvr/http_api.hpp>
#include <ilvr/service.hpp>
#include <ilvr/toy.hpp>

#include "httplib.h"

#include <gtest/gtest.h>

#include <chrono>
#include <thread>

using namespace ilvr;
using namespace ilvr::service;
using nlohmann::json;

namespace {

ModelRegistry registry() {
    ModelRegistry r;
    auto mix = toy::images(16);
    r.add("faces", "analytic", "memory", DenoiserModel(mix));
    r.add("points", "analytic", "memory", DenoiserModel(toy::points_2d()));
    return r;
}

std::string reference_b64(std::uint64_t seed = 5) {
    const auto ref = sample_mixture(toy::images(16), 1, seed).front();
    return base64_encode(encode_pixmap(ref));
}

json body(std::size_t count = 4, std::optional<std::uint64_t> seed = 11) {
    json j{{"model", "faces"}, {"reference", reference_b64()}, {"factor", 4}, {"kernel", "box"},
           {"stop_step", 0}, {"count", count}};
    if (seed) j["seed"] = *seed;
    return j;
}

ServiceOptions one_worker() {
    ServiceOptions o;
    o.workers = 1;
    return o;
}

} // namespace

TEST(Service, FirstIdAndMonotonicIds) {
    JobService svc(registry(), make_default_schedule(20), one_worker());
    EXPECT_EQ(svc.submit(body(1)), "job-000001");
    EXPECT_EQ(svc.submit(body(1)), "job-000002");
    EXPECT_LT(std::string("job-000002"), svc.submit(body(1)));
}

TEST(Service, ValidationErrorsEnqueueNothing) {
    JobService svc(registry(), make_default_schedule(20), one_worker());
    auto expect_status = [&](json b, int status) {
        try {
            svc.submit(b);
            ADD_FAILURE() << "accepted " << b.dump().substr(0, 80);
        } catch (const RequestError& e) {
            EXPECT_EQ(e.status, status) << e.what();
        }
    };
    auto b = body();
    b["factor"] = 0;
    expect_status(b, 400);
    b = body();
    b["factor"] = 3;
    expect_status(b, 400);
    b = body();
    b["kernel"] = "gauss";
    expect_status(b, 400);
    b = body();
    b["stop_step"] = 20;
    expect_status(b, 400);
    b = body();
    b["count"] = 0;
    expect_status(b, 400);
    b = body();
    b["reference"] = "!!!";
    expect_status(b, 400);
    b = body();
    b["reference"] = base64_encode(encode_pixmap(Tensor({1, 8, 8})));
    expect_status(b, 400);
    b = body();
    b["model"] = "nope";
    expect_status(b, 404);
    expect_status(json::array(), 400);
    // nothing was enqueued, so the counter has not moved
    EXPECT_EQ(svc.submit(body(1)), "job-000001");
}

TEST(Service, CompletedJobHasCountImagesAndMetrics) {
    JobService svc(registry(), make_default_schedule(20), one_worker());
    const auto id = svc.submit(body(4));
    EXPECT_EQ(svc.wait(id), JobState::done);
    const auto snap = *svc.snapshot(id);
    EXPECT_EQ(snap["state"], "done");
    ASSERT_EQ(snap["results"]["samples"].size(), 4u);
    EXPECT_EQ(snap["results"]["lowfreq_error"].size(), 4u);
    for (double e : snap["results"]["lowfreq_error"]) EXPECT_LT(e, 1e-3);
    EXPECT_TRUE(snap["results"]["diversity"].is_number());
    EXPECT_EQ(snap["results"]["pairs"], 6);
    EXPECT_EQ(snap["progress"]["steps_done"], 80);
    EXPECT_EQ(snap["progress"]["t"], 0);
    const auto img = base64_decode(snap["results"]["samples"][0].get<std::string>());
    ASSERT_TRUE(img);
    EXPECT_EQ(decode_pixmap(*img).shape, (std::vector<std::size_t>{1, 16, 16}));
    EXPECT_FALSE(svc.snapshot("job-999999").has_value());
}

TEST(Service, IdenticalSeedsGiveIdenticalBytes) {
    JobService svc(registry(), make_default_schedule(20));
    const auto a = svc.submit(body(3, 99)), b = svc.submit(body(3, 99)), c = svc.submit(body(3, 100));
    svc.wait(a);
    svc.wait(b);
    svc.wait(c);
    EXPECT_EQ(svc.find(a)->result->samples, svc.find(b)->result->samples);
    EXPECT_NE(svc.find(a)->result->samples, svc.find(c)->result->samples);
}

TEST(Service, DefaultSeedIsJobNumber) {
    JobService svc(registry(), make_default_schedule(10), one_worker());
    const auto id = svc.submit(body(1, std::nullopt));
    EXPECT_EQ((*svc.snapshot(id))["seed"], 1);
}

TEST(Service, VectorModelsReturnTensorFiles) {
    JobService svc(registry(), make_default_schedule(10), one_worker());
    const json b{{"model", "points"}, {"reference", base64_encode(encode_tensor(Tensor({2}, {1.0, -1.0})))},
                 {"factor", 1}, {"count", 2}, {"seed", 3}};
    const auto id = svc.submit(b);
    ASSERT_EQ(svc.wait(id), JobState::done);
    const auto& s = svc.find(id)->result->samples;
    EXPECT_EQ(decode_tensor(s[0]), Tensor({2}, {1.0f, -1.0f}));
}

TEST(Service, SnapshotDoesNotBlockOnRunningJob) {
    JobService svc(registry(), make_default_schedule(400), one_worker());
    const auto id = svc.submit(body(16));
    bool saw_running = false;
    long worst_us = 0;
    std::int64_t last_done = -1;
    for (;;) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto snap = *svc.snapshot(id);
        worst_us = std::max<long>(worst_us, std::chrono::duration_cast<std::chrono::microseconds>(
                                                std::chrono::steady_clock::now() - t0)
                                                .count());
        const auto done = snap["progress"]["steps_done"].get<std::int64_t>();
        EXPECT_GE(done, last_done);
        last_done = done;
        if (snap["state"] == "running") saw_running = true;
        if (snap["state"] == "done") break;
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    EXPECT_TRUE(saw_running);
    EXPECT_LT(worst_us, 100'000);
}

TEST(Service, RunDirectoryWriteThrough) {
    auto dir = std::filesystem::temp_directory_path() / "ilvr_service_runs";
    std::filesystem::remove_all(dir);
    ServiceOptions o = one_worker();
    o.run_dir = dir;
    JobService svc(registry(), make_default_schedule(10), o);
    const auto id = svc.submit(body(2));
    svc.wait(id);
    EXPECT_TRUE(std::filesystem::exists(dir / id / "manifest.json"));
    EXPECT_EQ(ilvr::detail::read_file_bytes((dir / id / "sample_0001.pnm").string()), svc.find(id)->result->samples[1]);
    const auto manifest = read_json((dir / id / "manifest.json").string());
    EXPECT_EQ(manifest["config"]["seed"], 11);
}

TEST(ModelRegistryTest, LoadsDirectory) {
    auto dir = std::filesystem::temp_directory_path() / "ilvr_models_dir";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    save_mixture((dir / "pts.json").string(), toy::points_2d());
    write_checkpoint((dir / "net.ilvrnet").string(), NeuralDenoiser::mlp(2, 4, 2));
    ilvr::detail::write_file_bytes((dir / "README").string(), "ignored");
    ModelRegistry r;
    r.load_dir(dir);
    ASSERT_EQ(r.entries().size(), 2u);
    EXPECT_EQ(r.find("pts")->kind, "analytic");
    EXPECT_EQ(r.find("net")->kind, "neural");
}

class HttpApi : public ::testing::Test {
protected:
    void SetUp() override {
        svc_ = std::make_unique<JobService>(registry(), make_default_schedule(20), one_worker());
        mount_api(server_, *svc_, "http://studio.local");
        port_ = server_.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }

    httplib::Client client() { return httplib::Client("127.0.0.1", port_); }

    httplib::Server server_;
    std::unique_ptr<JobService> svc_;
    int port_ = 0;
    std::thread thread_;
};

TEST_F(HttpApi, ModelsListing) {
    auto res = client().Get("/api/models");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://studio.local");
    const auto j = json::parse(res->body);
    ASSERT_EQ(j.size(), 2u);
    EXPECT_EQ(j[0]["id"], "faces");
    EXPECT_EQ(j[0]["shape"], json({1, 16, 16}));
    EXPECT_EQ(j[0]["T"], 20);
}

TEST_F(HttpApi, JobLifecycle) {
    auto c = client();
    auto res = c.Post("/api/jobs", body(2).dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 202);
    const std::string id = json::parse(res->body)["id"];
    EXPECT_EQ(id, "job-000001");
    EXPECT_EQ(res->get_header_value("Location"), "/api/jobs/job-000001");

    res = c.Get("/api/jobs/" + id);
    ASSERT_TRUE(res);
    const std::string state = json::parse(res->body)["state"];
    EXPECT_TRUE(state == "queued" || state == "running" || state == "done") << state;

    svc_->wait(id);
    res = c.Get("/api/jobs/" + id);
    const auto snap = json::parse(res->body);
    EXPECT_EQ(snap["state"], "done");

    res = c.Get("/api/jobs/" + id + "/samples/1");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Content-Type"), "image/x-portable-graymap");
    EXPECT_EQ(res->body, *base64_decode(snap["results"]["samples"][1].get<std::string>()));

    EXPECT_EQ(c.Get("/api/jobs/" + id + "/samples/2")->status, 404);
    EXPECT_EQ(c.Get("/api/jobs/" + id + "/samples/99999999999999999999")->status, 404);
    EXPECT_EQ(c.Get("/api/jobs/job-424242")->status, 404);
    EXPECT_EQ(c.Get("/api/jobs/job-424242/samples/0")->status, 404);
}

TEST_F(HttpApi, ErrorsAndPreflight) {
    auto c = client();
    auto b = body();
    b["factor"] = 0;
    auto res = c.Post("/api/jobs", b.dump(), "application/json");
    EXPECT_EQ(res->status, 400);
    EXPECT_TRUE(json::parse(res->body).contains("error"));
    b = body();
    b["model"] = "missing";
    EXPECT_EQ(c.Post("/api/jobs", b.dump(), "application/json")->status, 404);
    EXPECT_EQ(c.Post("/api/jobs", "{not json", "application/json")->status, 400);

    res = c.Options("/api/jobs");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 204);
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Methods"), "GET, POST, OPTIONS");
}

TEST_F(HttpApi, SamplesOfUnfinishedJobConflict) {
    // second job waits behind a long first one on the single worker
    auto c = client();
    auto slow = body(64);
    c.Post("/api/jobs", slow.dump(), "application/json");
    const std::string id = json::parse(c.Post("/api/jobs", body(1).dump(), "application/json")->body)["id"];
    EXPECT_EQ(c.Get("/api/jobs/" + id + "/samples/0")->status, 409);
}
