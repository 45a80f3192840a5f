// Library walk-through: build the toy image mixture, draw a reference, run
// ILVR at a few factors and print the low-frequency error and diversity.

#include <ilvr/metrics.hpp>
#include <ilvr/sampler.hpp>
#include <ilvr/tensorio.hpp>
#include <ilvr/toy.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

int main(int argc, char** argv) {
    const std::string out = argc > 1 ? argv[1] : "ilvr_demo_out";
    std::filesystem::create_directories(out);

    const auto mix = ilvr::toy::images(16);
    const ilvr::DenoiserModel model(mix);
    const auto sched = ilvr::make_default_schedule(200);
    const auto reference = ilvr::sample_mixture(mix, 1, 7).front();
    ilvr::save_image(out + "/reference.pgm", reference);

    std::printf("%-6s %-10s %14s %10s\n", "factor", "kernel", "lowfreq_max", "diversity");
    for (std::size_t factor : {1u, 2u, 4u, 8u}) {
        ilvr::IlvrConfig cfg;
        cfg.reference = reference;
        cfg.factor = factor;
        cfg.kernel = ilvr::Kernel::bicubic;
        cfg.seed = 100;
        cfg.count = 6;
        const auto res = ilvr::sample_ilvr(model, sched, cfg);
        double worst = 0.0;
        for (std::size_t i = 0; i < res.samples.size(); ++i) {
            worst = std::max(worst, ilvr::lowfreq_error(res.samples[i], reference, factor, cfg.kernel));
            ilvr::save_image(out + "/N" + std::to_string(factor) + "_" + std::to_string(i) + ".pgm", res.samples[i]);
        }
        std::printf("%-6zu %-10s %14.3g %10.4f\n", factor, ilvr::to_string(cfg.kernel), worst,
                    ilvr::pairwise_diversity(res.samples));
    }
    std::printf("images written to %s/\n", out.c_str());
}
