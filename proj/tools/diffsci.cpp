// diffsci command-line tool. Precedence: flags > --config file > defaults.
//
// Exit codes: 0 success, 2 config error, 3 I/O error, 4 numerical abort,
// 5 external-prior failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "diffsci/commands.hpp"

namespace {

int exit_code(diffsci::ErrorKind k)
{
    switch (k) {
    case diffsci::ErrorKind::InvalidArgument:
    case diffsci::ErrorKind::Config: return 2;
    case diffsci::ErrorKind::Io: return 3;
    case diffsci::ErrorKind::Numerical: return 4;
    case diffsci::ErrorKind::ExternalPrior: return 5;
    }
    return 1;
}

struct Overrides {
    std::optional<std::size_t> shift, bands, max_concurrent, threads;
    std::optional<std::uint64_t> mask_seed, seed, noise_seed;
    std::optional<double> mask_density, lambda, zeta, sc, sigma_n, sim_sigma, strength, peak, cutoff;
    std::optional<int> t_start, steps, iterations, timeout_ms;
    std::optional<std::string> mask_file, method, plan, prior, endpoint;
    std::optional<std::string> cube, mask, measurement, output, trace, reference, report;
    std::optional<bool> accelerate, warm_start, normalize;
    std::vector<std::size_t> anchors, region;

    void apply(diffsci::RunConfig& c) const
    {
        auto set = [](auto& dst, const auto& src) {
            if (src) dst = *src;
        };
        set(c.shift, shift);
        if (bands) c.bands = *bands;
        set(c.max_concurrent, max_concurrent);
        set(c.solver.threads, threads);
        set(c.mask_seed, mask_seed);
        set(c.solver.seed, seed);
        set(c.noise_seed, noise_seed);
        set(c.mask_density, mask_density);
        set(c.solver.lambda, lambda);
        set(c.solver.zeta, zeta);
        set(c.solver.guidance_scale, sc);
        if (sigma_n) c.solver.sigma_n = *sigma_n;
        set(c.sim_sigma, sim_sigma);
        set(c.prior_strength, strength);
        set(c.solver.peak, peak);
        set(c.solver.plan.cutoff_nm, cutoff);
        set(c.solver.t_start, t_start);
        set(c.solver.steps, steps);
        set(c.baseline_iterations, iterations);
        set(c.timeout_ms, timeout_ms);
        set(c.mask_file, mask_file);
        set(c.method, method);
        if (plan) c.solver.plan.kind = diffsci::plan_kind_from_string(*plan);
        set(c.prior_kind, prior);
        set(c.endpoint, endpoint);
        set(c.cube_path, cube);
        set(c.mask_path, mask);
        set(c.measurement_path, measurement);
        set(c.output_path, output);
        set(c.trace_path, trace);
        set(c.reference_path, reference);
        set(c.report_path, report);
        set(c.solver.accelerate, accelerate);
        set(c.solver.warm_start, warm_start);
        set(c.solver.normalize, normalize);
        if (!anchors.empty()) {
            if (anchors.size() != 2 || anchors[0] < 1 || anchors[1] < 1)
                diffsci::fail(diffsci::ErrorKind::Config, "--anchors needs two 1-based band numbers");
            c.solver.plan.anchor_a = anchors[0] - 1;
            c.solver.plan.anchor_b = anchors[1] - 1;
        }
        if (!region.empty()) {
            if (region.size() != 4) diffsci::fail(diffsci::ErrorKind::Config, "--region needs h0 w0 h1 w1");
            c.region = diffsci::Region{region[0], region[1], region[2], region[3]};
        }
    }
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"DiffSCI snapshot compressive imaging: simulate, reconstruct, evaluate"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    Overrides o;
    app.add_option("-c,--config", config_path, "JSON run configuration");
    app.add_option("--shift", o.shift, "dispersion shift d (pixels per band)");
    app.add_option("--bands", o.bands, "band count");
    app.add_option("--mask-seed", o.mask_seed, "seed of the random mask");
    app.add_option("--mask-density", o.mask_density, "open fraction of the random mask");
    app.add_option("--mask-file", o.mask_file, "mask file to use instead of a random mask");
    app.add_option("--method", o.method, "diffsci or pnp");
    app.add_option("--lambda", o.lambda, "data-step weight lambda");
    app.add_option("--zeta", o.zeta, "sampler stochasticity zeta in [0,1]");
    app.add_option("--sc", o.sc, "guidance scale of the data step");
    app.add_option("--t-start", o.t_start, "starting timestep");
    app.add_option("--steps", o.steps, "number of sampling steps");
    app.add_option("--seed", o.seed, "sampler seed");
    app.add_option("--sigma-n", o.sigma_n, "noise level assumed by the solver");
    app.add_option("--accelerate", o.accelerate, "residual accumulation (true/false)");
    app.add_option("--warm-start", o.warm_start, "start from the noised adjoint (true/false)");
    app.add_option("--normalize", o.normalize, "solve on a normalized measurement (true/false)");
    app.add_option("--threads", o.threads, "worker threads for per-band denoising");
    app.add_option("--iterations", o.iterations, "pnp baseline iterations");
    app.add_option("--plan", o.plan, "sliding, wavelengthMatched or partitioned");
    app.add_option("--anchors", o.anchors, "two 1-based anchor bands")->expected(2);
    app.add_option("--cutoff", o.cutoff, "wavelength-matching cutoff in nm");
    app.add_option("--prior", o.prior, "identity, gaussianShrink, oracle or external");
    app.add_option("--strength", o.strength, "gaussianShrink strength in (0,1]");
    app.add_option("--endpoint", o.endpoint, "external prior endpoint (exec:, unix:, tcp:)");
    app.add_option("--max-concurrent", o.max_concurrent, "external prior connections");
    app.add_option("--timeout-ms", o.timeout_ms, "external prior I/O timeout");
    app.add_option("--noise", o.sim_sigma, "simulated measurement noise sigma_n");
    app.add_option("--noise-seed", o.noise_seed, "seed of the simulated noise");
    app.add_option("--cube", o.cube, "input cube (simulate) / output cube (synth)");
    app.add_option("--mask", o.mask, "mask file written by simulate, read by reconstruct");
    app.add_option("--measurement", o.measurement, "measurement file");
    app.add_option("--output", o.output, "reconstructed cube");
    app.add_option("--trace", o.trace, "per-step trace (JSON lines)");
    app.add_option("--reference", o.reference, "ground-truth cube");
    app.add_option("--report", o.report, "report file");
    app.add_option("--peak", o.peak, "PSNR/SSIM peak value");
    app.add_option("--region", o.region, "spectral-curve region h0 w0 h1 w1")->expected(4);

    auto* synth = app.add_subcommand("synth", "write a smooth synthetic cube");
    diffsci::SceneSpec scene;
    std::uint64_t scene_seed = 0;
    synth->add_option("--height", scene.height, "rows");
    synth->add_option("--width", scene.width, "columns");
    synth->add_option("--scene-bands", scene.bands, "bands");
    synth->add_option("--blobs", scene.blobs, "number of spectral blobs");
    synth->add_option("--scene-seed", scene_seed, "scene seed");

    auto* simulate = app.add_subcommand("simulate", "cube -> measurement + mask");
    auto* reconstruct = app.add_subcommand("reconstruct", "measurement -> cube + trace");
    auto* evaluate = app.add_subcommand("evaluate", "score a reconstruction against a reference");
    auto* report = app.add_subcommand("report", "summarize a trace file");

    auto* ablate = app.add_subcommand("ablate", "sweep one solver parameter");
    std::string axis;
    std::vector<std::string> values;
    ablate->add_option("axis", axis, "tStart, steps, lambda, zeta, sc, planKind or accelerate")->required();
    ablate->add_option("values", values, "values to sweep")->required();

    auto* dump = app.add_subcommand("config", "print the effective configuration");

    CLI11_PARSE(app, argc, argv);

    try {
        diffsci::RunConfig cfg;
        if (!config_path.empty()) cfg = diffsci::load_config(config_path);
        o.apply(cfg);

        if (*synth) {
            if (o.bands) scene.bands = *o.bands;
            diffsci::cmd_synth(cfg, scene, scene_seed, std::cout);
        } else if (*simulate) {
            diffsci::cmd_simulate(cfg, std::cout);
        } else if (*reconstruct) {
            diffsci::cmd_reconstruct(cfg, std::cout);
        } else if (*evaluate) {
            diffsci::cmd_evaluate(cfg, std::cout);
        } else if (*report) {
            diffsci::cmd_report(cfg.trace_path, std::cout);
        } else if (*ablate) {
            diffsci::cmd_ablate(cfg, axis, values, std::cout);
        } else if (*dump) {
            std::cout << diffsci::serialize_config(cfg);
        }
    } catch (const diffsci::Error& e) {
        std::cerr << "diffsci: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "diffsci: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
