// ilvr-studio: HTTP job service behind the browser studio.

#include <ilvr/http_api.hpp>

#include "CLI11.hpp"

#include <csignal>
#include <iostream>

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
    if (g_server) g_server->stop();
}
} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ILVR studio job service"};
    std::string host = "127.0.0.1", model_dir, run_dir, static_dir, cors = "*", sigma_mode = "posterior";
    int port = 8080, steps = 200;
    std::size_t workers = std::min<std::size_t>(4, ilvr::default_jobs());
    app.add_option("--model-dir", model_dir, "directory of mixture .json and .ilvrnet checkpoints")->required();
    app.add_option("--port", port, "listen port")->capture_default_str();
    app.add_option("--host", host, "listen address")->capture_default_str();
    app.add_option("--T", steps, "diffusion steps")->capture_default_str();
    app.add_option("--sigma-mode", sigma_mode, "posterior or beta")
        ->check(CLI::IsMember({"posterior", "beta"}))
        ->capture_default_str();
    app.add_option("--workers", workers, "sampler worker threads")->capture_default_str();
    app.add_option("--run-dir", run_dir, "also write finished jobs here");
    app.add_option("--static-dir", static_dir, "serve the built studio from this directory");
    app.add_option("--cors-origin", cors, "Access-Control-Allow-Origin value")->capture_default_str();
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    ilvr::service::ModelRegistry registry;
    try {
        registry.load_dir(model_dir);
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    }
    if (registry.entries().empty()) std::cerr << "warning: no models found in " << model_dir << "\n";
    ilvr::service::ServiceOptions opts;
    opts.workers = workers;
    opts.run_dir = run_dir;
    ilvr::service::JobService jobs(std::move(registry),
                                   ilvr::make_default_schedule(steps, ilvr::parse_sigma_mode(sigma_mode)), opts);

    httplib::Server server;
    ilvr::service::mount_api(server, jobs, cors);
    if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
        std::cerr << "data error: cannot serve " << static_dir << "\n";
        return 3;
    }
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << host << ":" << port << " with " << jobs.registry().entries().size()
              << " model(s)" << std::endl;
    if (!server.listen(host, port)) {
        std::cerr << "cannot listen on " << host << ":" << port << "\n";
        return 3;
    }
    return 0;
}
