#pragma once

// Discrete variance-preserving noise schedule and the sampler algebra built
// on it: forward noising, clean-image prediction from a score, implied noise,
// and the zeta-mixed DDIM-style reverse update.
//
// Timesteps run 1..T; t = 0 is the clean end with alpha_bar(0) = 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "diffsci/error.hpp"
#include "diffsci/random.hpp"
#include "diffsci/spectral_core.hpp"

namespace diffsci {

class DiffusionSchedule {
public:
    static constexpr int default_steps = 1000;
    static constexpr double default_beta_start = 1e-4;
    static constexpr double default_beta_end = 0.02;

    /// Linear beta schedule, beta_t = beta_start + (t-1)/(T-1) * (beta_end - beta_start).
    static DiffusionSchedule linear(int total_steps = default_steps, double beta_start = default_beta_start,
                                    double beta_end = default_beta_end)
    {
        require(total_steps >= 1, "schedule needs at least one step");
        require(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0,
                "schedule requires 0 < beta_start < beta_end < 1");
        DiffusionSchedule s;
        s.beta_start_ = beta_start;
        s.beta_end_ = beta_end;
        s.betas_.resize(total_steps + 1, 0.0);
        s.alpha_bars_.resize(total_steps + 1, 1.0);
        for (int t = 1; t <= total_steps; ++t) {
            const double frac = total_steps == 1 ? 0.0 : double(t - 1) / double(total_steps - 1);
            s.betas_[t] = beta_start + frac * (beta_end - beta_start);
            s.alpha_bars_[t] = s.alpha_bars_[t - 1] * (1.0 - s.betas_[t]);
        }
        return s;
    }

    int steps() const { return static_cast<int>(betas_.size()) - 1; }
    double beta_start() const { return beta_start_; }
    double beta_end() const { return beta_end_; }

    double beta(int t) const { return betas_.at(checked(t, 1)); }
    double alpha(int t) const { return 1.0 - beta(t); }
    double alpha_bar(int t) const { return alpha_bars_.at(checked(t, 0)); }

    /// sigma_bar_t = sqrt((1 - alpha_bar_t) / alpha_bar_t), the noise level of
    /// x_t / sqrt(alpha_bar_t) seen as a clean image plus white noise.
    double sigma_bar(int t) const
    {
        const double ab = alpha_bar(t);
        return std::sqrt((1.0 - ab) / ab);
    }

    /// Timestep whose sigma_bar is closest to `sigma` (clamped to [1, T]).
    int timestep_for_sigma(double sigma) const
    {
        int best = 1;
        double err = std::abs(sigma_bar(1) - sigma);
        for (int t = 2; t <= steps(); ++t) {
            const double e = std::abs(sigma_bar(t) - sigma);
            if (e < err) { err = e; best = t; }
        }
        return best;
    }

private:
    int checked(int t, int lo) const
    {
        require(t >= lo && t <= steps(), "timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                                             "," + std::to_string(steps()) + "]");
        return t;
    }

    double beta_start_ = 0.0, beta_end_ = 0.0;
    std::vector<double> betas_;       // index 0 unused
    std::vector<double> alpha_bars_;  // alpha_bars_[0] == 1
};

struct SamplerParams {
    double zeta = 1.0;  // 0: deterministic DDIM, 1: fresh noise only
    int t_start = 600;
    int step_count = 100;
    std::uint64_t seed = 0;

    void validate(const DiffusionSchedule& sched) const
    {
        require(zeta >= 0.0 && zeta <= 1.0, "zeta must lie in [0,1]");
        require(step_count >= 1 && step_count <= t_start && t_start <= sched.steps(),
                "need 1 <= steps <= t_start <= T, got steps=" + std::to_string(step_count) +
                    " t_start=" + std::to_string(t_start) + " T=" + std::to_string(sched.steps()));
    }
};

namespace detail {

template <DenseField F>
void require_same(const F& a, const F& b, const char* what)
{
    require(a.same_shape(b), std::string(what) + ": shape mismatch");
}

} // namespace detail

/// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
template <DenseField F>
F forward_sample(const DiffusionSchedule& sched, const F& x0, int t, std::uint64_t seed)
{
    require(t >= 0 && t <= sched.steps(), "forward_sample: timestep out of range");
    const double ab = sched.alpha_bar(t);
    F out = x0;
    if (t == 0) return out;
    auto v = out.values();
    std::vector<double> eps(v.size());
    fill_gaussian(eps, seed);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * v[i] + s * eps[i];
    return out;
}

/// Tweedie estimate: x0 ~ (x_t + (1 - ab_t) score) / sqrt(ab_t).
template <DenseField F>
F predict_clean(const DiffusionSchedule& sched, const F& x_t, const F& score, int t)
{
    detail::require_same(x_t, score, "predict_clean");
    require(t >= 1, "predict_clean needs t >= 1");
    const double ab = sched.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(ab);
    F out = x_t;
    auto o = out.values();
    auto s = score.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = inv * (o[i] + (1.0 - ab) * s[i]);
    return out;
}

/// eps_hat = (x_t - sqrt(ab_t) x0_hat) / sqrt(1 - ab_t).
template <DenseField F>
F implied_noise(const DiffusionSchedule& sched, const F& x_t, const F& x0_hat, int t)
{
    detail::require_same(x_t, x0_hat, "implied_noise");
    require(t >= 1, "implied_noise needs t >= 1 (there is no noise at t = 0)");
    const double ab = sched.alpha_bar(t);
    const double a = std::sqrt(ab), inv = 1.0 / std::sqrt(1.0 - ab);
    F out = x_t;
    auto o = out.values();
    auto c = x0_hat.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = inv * (o[i] - a * c[i]);
    return out;
}

/// x_to = sqrt(ab_to) x0_hat + sqrt(1 - ab_to) (sqrt(1 - zeta) eps_hat + sqrt(zeta) eps_new).
/// eps_new is only drawn when zeta > 0.
template <DenseField F>
F reverse_step(const DiffusionSchedule& sched, double zeta, const F& x0_hat, const F& eps_hat, int t_from, int t_to,
               std::uint64_t seed)
{
    detail::require_same(x0_hat, eps_hat, "reverse_step");
    require(t_to < t_from && t_to >= 0 && t_from <= sched.steps(), "reverse_step needs 0 <= t_to < t_from <= T");
    require(zeta >= 0.0 && zeta <= 1.0, "zeta must lie in [0,1]");
    F out = x0_hat;
    if (t_to == 0) return out;
    const double ab = sched.alpha_bar(t_to);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    const double keep = std::sqrt(1.0 - zeta), fresh = std::sqrt(zeta);
    auto o = out.values();
    auto e = eps_hat.values();
    std::vector<double> noise;
    if (zeta > 0.0) {
        noise.resize(o.size());
        fill_gaussian(noise, seed);
    }
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double mixed = keep * e[i] + (zeta > 0.0 ? fresh * noise[i] : 0.0);
        o[i] = a * o[i] + s * mixed;
    }
    return out;
}

/// Ancestral DDPM step from a noise prediction:
/// x_{t-1} = (x_t - beta_t / sqrt(1 - ab_t) eps_theta) / sqrt(alpha_t) + sqrt(beta_t) z.
/// Kept as a reference; the sampler itself uses reverse_step.
template <DenseField F>
F ddpm_step(const DiffusionSchedule& sched, const F& x_t, const F& eps_theta, int t, std::uint64_t seed)
{
    detail::require_same(x_t, eps_theta, "ddpm_step");
    require(t >= 1, "ddpm_step needs t >= 1");
    const double beta = sched.beta(t), ab = sched.alpha_bar(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    const double c = beta / std::sqrt(1.0 - ab);
    F out = x_t;
    auto o = out.values();
    auto e = eps_theta.values();
    std::vector<double> z(o.size(), 0.0);
    if (t > 1) fill_gaussian(z, seed);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = inv_sqrt_alpha * (o[i] - c * e[i]) + std::sqrt(beta) * z[i];
    return out;
}

/// Reverse-time ladder: step_count strictly decreasing timesteps from t_start
/// down to 1, followed by the terminal 0.
///
/// t_k = round(t_start * (1 - k/(n-1))), then clamped into
/// [n - k, t_{k-1} - 1] so the sequence stays strictly decreasing and still
/// has room to end at 1.
inline std::vector<int> timestep_ladder(int t_start, int step_count)
{
    require(step_count >= 1 && step_count <= t_start,
            "ladder needs 1 <= steps <= t_start, got steps=" + std::to_string(step_count) +
                " t_start=" + std::to_string(t_start));
    std::vector<int> ladder;
    ladder.reserve(step_count + 1);
    ladder.push_back(t_start);
    const int n = step_count;
    for (int k = 1; k < n; ++k) {
        int t = static_cast<int>(std::lround(t_start * (1.0 - double(k) / double(n - 1))));
        if (k == n - 1) t = 1;
        t = std::max(t, n - k);
        t = std::min(t, ladder.back() - 1);
        ladder.push_back(t);
    }
    ladder.push_back(0);
    return ladder;
}

} // namespace diffsci
