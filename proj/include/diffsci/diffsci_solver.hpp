#pragma once

// Plug-and-play HQS reconstruction for CASSI with a diffusion score prior.
//
// Each reverse-diffusion step:
//   1. split x_t into per-band triples, Tweedie-denoise each with the prior,
//      and stitch the designated channels back into x_tilde;
//   2. pull x_tilde toward the measurement with the diagonal closed-form data
//      step (optionally driven by the accumulated residual y1);
//   3. recover the implied noise from x_t and the data-consistent x0_hat and
//      re-noise to the next ladder timestep.

#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "diffsci/band_adapter.hpp"
#include "diffsci/cassi_operator.hpp"
#include "diffsci/denoiser_prior.hpp"
#include "diffsci/diffusion_schedule.hpp"
#include "diffsci/error.hpp"
#include "diffsci/metrics.hpp"
#include "diffsci/random.hpp"
#include "diffsci/spectral_core.hpp"

namespace diffsci {

struct PlanSpec {
    PlanKind kind = PlanKind::WavelengthMatched;
    std::size_t anchor_a = 20;  // 0-based band indices
    std::size_t anchor_b = 27;
    double cutoff_nm = 500.0;

    BandPlan build(const std::vector<double>& wavelengths) const
    {
        const std::size_t B = wavelengths.size();
        switch (kind) {
        case PlanKind::Sliding: return make_sliding_plan(B);
        case PlanKind::Partitioned: return make_partitioned_plan(B);
        case PlanKind::WavelengthMatched:
            return make_wavelength_matched_plan(B, anchor_a, anchor_b, cutoff_nm, wavelengths);
        }
        fail(ErrorKind::Config, "unknown plan kind");
    }

    bool operator==(const PlanSpec&) const = default;
};

struct SolverConfig {
    double lambda = 15.0;
    double zeta = 1.0;
    double guidance_scale = 1.0;
    int t_start = 600;
    int steps = 100;
    std::uint64_t seed = 0;
    std::optional<double> sigma_n;  // defaults to the measurement's recorded sigma
    PlanSpec plan;
    bool accelerate = true;
    bool warm_start = false;
    bool normalize = true;
    std::size_t threads = 1;
    // Baseline penalty: mu = lambda * sigma_n^2 / baseline_sigma_bar^2.
    double baseline_sigma_bar = 1.0;
    double peak = 1.0;  // for traced PSNR

    void validate(const DiffusionSchedule& sched) const
    {
        require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
        require(guidance_scale >= 0.0 && std::isfinite(guidance_scale), "guidance scale must be non-negative");
        require(!sigma_n || (*sigma_n >= 0.0 && std::isfinite(*sigma_n)), "sigma_n must be non-negative");
        require(baseline_sigma_bar > 0.0, "baseline sigma_bar must be positive");
        require(threads >= 1, "threads must be at least 1");
        SamplerParams{zeta, t_start, steps, seed}.validate(sched);
    }

    bool operator==(const SolverConfig&) const = default;
};

struct TraceRecord {
    int step = 0;
    int t = 0;
    double rho = 0.0;        // data-step penalty (rho_t, or mu for the baseline)
    double residual = 0.0;   // ||y - Phi x|| in measurement units
    std::optional<double> psnr;
};

struct SolverState {
    SpectralCube x;          // current x_t
    Measurement y1;          // accumulated residual
    bool y1_started = false;
    int t = 0;
    std::vector<TraceRecord> trace;
};

struct SolverResult {
    SpectralCube cube;
    std::vector<TraceRecord> trace;
    double scale = 1.0;  // normalization factor the solve ran under
};

/// rho_t = lambda * sigma_n^2 / sigma_bar_t^2.
inline double rho(double lambda, double sigma_n, const DiffusionSchedule& sched, int t)
{
    require(t >= 1, "rho needs t >= 1");
    const double sb = sched.sigma_bar(t);
    return lambda * sigma_n * sigma_n / (sb * sb);
}

enum class DenominatorPolicy {
    Throw,          // any diag + mu <= 1e-12 is an error
    SkipUncovered,  // such pixels get a zero correction
};

inline constexpr double kDenominatorFloor = 1e-12;

namespace detail {

/// r <- r / (diag + mu) in place.
inline void divide_by_diag(Measurement& r, const Measurement& diag, double mu, DenominatorPolicy policy)
{
    std::string bad;
    std::size_t nbad = 0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        const double den = diag.data[i] + mu;
        if (den > kDenominatorFloor) {
            r.data[i] /= den;
            continue;
        }
        if (policy == DenominatorPolicy::SkipUncovered) {
            r.data[i] = 0.0;
            continue;
        }
        if (nbad < 8) bad += " (" + std::to_string(i / r.width) + "," + std::to_string(i % r.width) + ")";
        ++nbad;
    }
    if (nbad)
        fail(ErrorKind::Numerical, "degenerate data-step denominator at " + std::to_string(nbad) +
                                       " measurement pixel(s):" + bad + (nbad > 8 ? " ..." : ""));
}

inline Measurement residual(const CassiOperator& op, const Measurement& y, const SpectralCube& x)
{
    Measurement r = op.apply(x);
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = y.data[i] - r.data[i];
    return r;
}

inline void add_scaled(SpectralCube& x, const SpectralCube& dx, double s)
{
    auto xv = x.values();
    auto dv = dx.values();
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += s * dv[i];
}

inline void check_finite(const SpectralCube& x, int step, const char* what)
{
    if (!all_finite(x.values()))
        fail(ErrorKind::Numerical, std::string("non-finite values in ") + what + " at step " + std::to_string(step));
}

} // namespace detail

inline double residual_norm(const CassiOperator& op, const Measurement& y, const SpectralCube& x)
{
    return norm2(detail::residual(op, y, x).values());
}

/// x = z + Phi^T [(y - Phi z) / (diag(Phi Phi^T) + mu)], the minimiser of
/// ||y - Phi x||^2 + mu ||x - z||^2.
inline SpectralCube data_step_closed_form(const CassiOperator& op, const Measurement& y, const SpectralCube& z,
                                          double mu, DenominatorPolicy policy = DenominatorPolicy::Throw)
{
    require(mu >= 0.0 && std::isfinite(mu), "mu must be finite and non-negative");
    op.check_measurement(y);
    Measurement r = detail::residual(op, y, z);
    detail::divide_by_diag(r, op.diag_phi_phi_t(), mu, policy);
    SpectralCube x = z;
    detail::add_scaled(x, op.adjoint(r), 1.0);
    return x;
}

/// Accelerated data step. Accumulates y1 += y - Phi x_tilde, then
/// x0_hat = x_tilde + sc * Phi^T [(y1 - Phi x_tilde) / (diag + rho)].
///
/// y1 starts at Phi x_tilde on the first call, so the first step is exactly
/// the closed-form step (y1 = y after accumulation).
inline SpectralCube data_step_accelerated(const CassiOperator& op, const Measurement& y, SolverState& state,
                                          const SpectralCube& x_tilde, double rho_t, double sc,
                                          DenominatorPolicy policy = DenominatorPolicy::Throw)
{
    require(rho_t >= 0.0 && std::isfinite(rho_t), "rho must be finite and non-negative");
    op.check_measurement(y);
    const Measurement phi_x = op.apply(x_tilde);
    if (!state.y1_started) {
        state.y1 = phi_x;
        state.y1_started = true;
    }
    require(state.y1.same_shape(y), "accumulated residual has the wrong shape");
    for (std::size_t i = 0; i < y.data.size(); ++i) state.y1.data[i] += y.data[i] - phi_x.data[i];
    Measurement r = state.y1;
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] -= phi_x.data[i];
    detail::divide_by_diag(r, op.diag_phi_phi_t(), rho_t, policy);
    SpectralCube x = x_tilde;
    detail::add_scaled(x, op.adjoint(r), sc);
    return x;
}

/// Phi^T (y / diag(Phi Phi^T)); measurement pixels no band reaches give 0.
inline SpectralCube adjoint_initialization(const CassiOperator& op, const Measurement& y)
{
    op.check_measurement(y);
    Measurement r = y;
    detail::divide_by_diag(r, op.diag_phi_phi_t(), 0.0, DenominatorPolicy::SkipUncovered);
    return op.adjoint(r);
}

namespace detail {

/// Runs fn(b) for every band, on up to `threads` workers. The first failure
/// (by band index) is rethrown after all workers join.
inline void for_each_band(std::size_t bands, std::size_t threads, const std::function<void(std::size_t)>& fn)
{
    threads = std::max<std::size_t>(1, std::min(threads, bands));
    if (threads == 1) {
        for (std::size_t b = 0; b < bands; ++b) fn(b);
        return;
    }
    std::vector<std::exception_ptr> errors(bands);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t b = w; b < bands; b += threads) {
                    try {
                        fn(b);
                    } catch (...) {
                        errors[b] = std::current_exception();
                    }
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline Measurement scaled(const Measurement& y, double s)
{
    Measurement out = y;
    for (double& v : out.data) v *= s;
    out.noise_sigma *= s;
    return out;
}

inline SpectralCube scaled(SpectralCube x, double s)
{
    for (double& v : x.values()) v *= s;
    return x;
}

/// Factor c such that y / c puts the adjoint initialization in [0, 1].
inline double normalization_scale(const CassiOperator& op, const Measurement& y)
{
    const SpectralCube init = adjoint_initialization(op, y);
    double m = 0.0;
    for (double v : init.values()) m = std::max(m, std::abs(v));
    return m > 0.0 ? m : 1.0;
}

/// Denoises every band triple of `x` at timestep t, using `scale_up` as the
/// request context, and returns the recombined cube.
inline SpectralCube denoise_cube(const ScorePrior& prior, const DiffusionSchedule& sched, const BandPlan& plan,
                                 const SpectralCube& x, int t, double scale, std::size_t threads, int step)
{
    std::vector<TriImage> outs(x.bands());
    std::size_t workers = threads;
    if (prior.max_concurrency() > 0) workers = std::min(workers, prior.max_concurrency());
    for_each_band(x.bands(), workers, [&](std::size_t b) {
        const TriImage in = extract(plan, x, b);
        try {
            outs[b] = denoise(prior, sched, make_request(sched, in, t, static_cast<int>(b), scale));
            if (!all_finite(outs[b].values())) fail(ErrorKind::Numerical, "prior returned non-finite values");
        } catch (const Error& e) {
            fail(e.kind(), "step " + std::to_string(step) + " (t=" + std::to_string(t) + "), band " +
                               std::to_string(b) + ": " + e.what());
        }
    });
    return recombine(plan, outs, x.wavelengths());
}

} // namespace detail

/// Reverse-diffusion sampling with HQS data consistency. `reference`, when
/// given, adds a per-step PSNR of x0_hat to the trace.
inline SolverResult run_diffsci(const SolverConfig& cfg, const DiffusionSchedule& sched, const CassiOperator& op,
                                const Measurement& y_in, const ScorePrior& prior,
                                const SpectralCube* reference = nullptr)
{
    cfg.validate(sched);
    op.check_measurement(y_in);
    if (reference) op.check_cube(*reference);

    const double c = cfg.normalize ? detail::normalization_scale(op, y_in) : 1.0;
    const Measurement y = detail::scaled(y_in, 1.0 / c);
    const double sigma_n = cfg.sigma_n.value_or(y_in.noise_sigma) / c;
    const BandPlan plan = cfg.plan.build(op.wavelengths());
    const std::vector<int> ladder = timestep_ladder(cfg.t_start, cfg.steps);
    const DenominatorPolicy policy = DenominatorPolicy::SkipUncovered;

    SolverState state;
    state.t = cfg.t_start;
    {
        SpectralCube shape = make_cube(op.height(), op.width(), op.bands(), op.wavelengths(), 0.0);
        if (cfg.warm_start) {
            state.x = forward_sample(sched, adjoint_initialization(op, y), cfg.t_start, mix_seed(cfg.seed, 0));
        } else {
            state.x = std::move(shape);
            fill_gaussian(state.x.values(), mix_seed(cfg.seed, 0));
        }
    }

    for (std::size_t k = 0; k + 1 < ladder.size(); ++k) {
        const int t = ladder[k], t_next = ladder[k + 1];
        const int step = static_cast<int>(k);
        state.t = t;

        const SpectralCube x_tilde =
            detail::denoise_cube(prior, sched, plan, state.x, t, c, cfg.threads, step);
        detail::check_finite(x_tilde, step, "the denoised estimate");

        const double rho_t = rho(cfg.lambda, sigma_n, sched, t);
        SpectralCube x0_hat;
        if (cfg.accelerate) {
            x0_hat = data_step_accelerated(op, y, state, x_tilde, rho_t, cfg.guidance_scale, policy);
        } else {
            Measurement r = detail::residual(op, y, x_tilde);
            detail::divide_by_diag(r, op.diag_phi_phi_t(), rho_t, policy);
            x0_hat = x_tilde;
            detail::add_scaled(x0_hat, op.adjoint(r), cfg.guidance_scale);
        }
        detail::check_finite(x0_hat, step, "the data-step output");

        TraceRecord rec;
        rec.step = step;
        rec.t = t;
        rec.rho = rho_t;
        rec.residual = c * residual_norm(op, y, x0_hat);
        if (reference) rec.psnr = mean_psnr(detail::scaled(x0_hat, c), *reference, cfg.peak);
        state.trace.push_back(rec);

        const SpectralCube eps_hat = implied_noise(sched, state.x, x0_hat, t);
        state.x = reverse_step(sched, cfg.zeta, x0_hat, eps_hat, t, t_next, mix_seed(cfg.seed, k + 1));
        detail::check_finite(state.x, step, "the sampler state");
    }

    return SolverResult{detail::scaled(std::move(state.x), c), std::move(state.trace), c};
}

/// Default baseline penalties: mu = lambda * sigma_n^2 / baseline_sigma_bar^2 every iteration.
inline std::vector<double> default_mu_schedule(const SolverConfig& cfg, double sigma_n, int iterations)
{
    const double mu = cfg.lambda * sigma_n * sigma_n / (cfg.baseline_sigma_bar * cfg.baseline_sigma_bar);
    return std::vector<double>(static_cast<std::size_t>(std::max(iterations, 0)), mu);
}

/// Plain PnP-HQS: alternate the closed-form data step with per-band Tweedie
/// denoising (sliding triples). Iteration k denoises at the timestep whose
/// sigma_bar is closest to sqrt(lambda / mu_k), feeding sqrt(ab_t) * x so the
/// prior sees a variance-preserving input. Returns the last data-step output,
/// or the adjoint initialization when iterations == 0.
inline SolverResult run_pnp_baseline(const SolverConfig& cfg, const DiffusionSchedule& sched,
                                     const CassiOperator& op, const Measurement& y_in, const ScorePrior& prior,
                                     int iterations, std::vector<double> mu_schedule = {},
                                     const SpectralCube* reference = nullptr)
{
    require(iterations >= 0, "iterations must be non-negative");
    op.check_measurement(y_in);
    if (reference) op.check_cube(*reference);
    const double c = cfg.normalize ? detail::normalization_scale(op, y_in) : 1.0;
    const Measurement y = detail::scaled(y_in, 1.0 / c);
    const double sigma_n = cfg.sigma_n.value_or(y_in.noise_sigma) / c;
    if (mu_schedule.empty()) mu_schedule = default_mu_schedule(cfg, sigma_n, iterations);
    require(mu_schedule.size() >= static_cast<std::size_t>(iterations), "mu schedule shorter than iterations");
    const BandPlan plan = make_sliding_plan(op.bands());

    SpectralCube x = adjoint_initialization(op, y);
    SpectralCube z = x;
    std::vector<TraceRecord> trace;
    for (int k = 0; k < iterations; ++k) {
        const double mu = mu_schedule[k];
        require(mu >= 0.0 && std::isfinite(mu), "baseline mu must be finite and non-negative");
        x = data_step_closed_form(op, y, z, mu, DenominatorPolicy::SkipUncovered);
        detail::check_finite(x, k, "the data-step output");

        const int t = mu > 0.0 ? sched.timestep_for_sigma(std::sqrt(cfg.lambda / mu)) : sched.steps();
        SpectralCube noisy = detail::scaled(x, std::sqrt(sched.alpha_bar(t)));
        z = detail::denoise_cube(prior, sched, plan, noisy, t, c, cfg.threads, k);
        detail::check_finite(z, k, "the denoised estimate");

        TraceRecord rec;
        rec.step = k;
        rec.t = t;
        rec.rho = mu;
        rec.residual = c * residual_norm(op, y, x);
        if (reference) rec.psnr = mean_psnr(detail::scaled(x, c), *reference, cfg.peak);
        trace.push_back(rec);
    }
    return SolverResult{detail::scaled(std::move(x), c), std::move(trace), c};
}

} // namespace diffsci
