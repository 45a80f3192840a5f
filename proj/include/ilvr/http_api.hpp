#pragma once

#include "service.hpp"

#include "httplib.h"
#include "json.hpp"

#include <string>

namespace ilvr::service {

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

} // namespace detail

/// Registers the studio JSON API on `server`:
///   GET  /api/models
///   POST /api/jobs
///   GET  /api/jobs/{id}
///   GET  /api/jobs/{id}/samples/{k}
inline void mount_api(httplib::Server& server, JobService& jobs, const std::string& cors_origin = "*") {
    server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});

    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/api/models", [&jobs](const httplib::Request&, httplib::Response& res) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& [id, entry] : jobs.registry().entries()) {
            out.push_back({{"id", id},
                           {"kind", entry.kind},
                           {"shape", entry.model->data_shape()},
                           {"T", jobs.schedule().steps()},
                           {"kernels", {"box", "bilinear", "bicubic", "lanczos2", "lanczos3"}},
                           {"max_count", kMaxCount}});
        }
        detail::send_json(res, 200, out);
    });

    server.Post("/api/jobs", [&jobs](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded()) return detail::send_error(res, 400, "request body is not valid JSON");
        try {
            const std::string id = jobs.submit(body);
            res.set_header("Location", "/api/jobs/" + id);
            detail::send_json(res, 202, {{"id", id}});
        } catch (const RequestError& e) {
            detail::send_error(res, e.status, e.what());
        }
    });

    server.Get(R"(/api/jobs/([A-Za-z0-9-]+))", [&jobs](const httplib::Request& req, httplib::Response& res) {
        const auto snap = jobs.snapshot(req.matches[1]);
        if (!snap) return detail::send_error(res, 404, "unknown job");
        detail::send_json(res, 200, *snap);
    });

    server.Get(R"(/api/jobs/([A-Za-z0-9-]+)/samples/(\d+))", [&jobs](const httplib::Request& req,
                                                                     httplib::Response& res) {
        const auto job = jobs.find(req.matches[1]);
        if (!job) return detail::send_error(res, 404, "unknown job");
        std::lock_guard lock(job->mu);
        if (job->state != JobState::done || !job->result)
            return detail::send_error(res, 409, std::string("job is ") + to_string(job->state));
        const std::string index = req.matches[2];
        const std::size_t k = index.size() > 6 ? job->result->samples.size() : std::stoul(index);
        if (k >= job->result->samples.size()) return detail::send_error(res, 404, "no such sample");
        const auto& bytes = job->result->samples[k];
        const char* type = !is_pixmap(bytes)         ? "application/octet-stream"
                           : bytes[1] == '5'         ? "image/x-portable-graymap"
                                                     : "image/x-portable-pixmap";
        res.set_content(bytes, type);
    });
}

} // namespace ilvr::service
