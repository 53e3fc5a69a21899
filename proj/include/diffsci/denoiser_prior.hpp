#pragma once

// Score priors. A prior maps a noisy three-channel image x_t at timestep t to
// the score s(x_t, t) ~ grad log p_t(x_t); denoising is the Tweedie
// composition predict_clean(x_t, score).
//
// All built-in priors are stateless and reentrant.

#include <cmath>
#include <memory>
#include <string>

#include "diffsci/band_adapter.hpp"
#include "diffsci/diffusion_schedule.hpp"
#include "diffsci/error.hpp"
#include "diffsci/spectral_core.hpp"

namespace diffsci {

struct PriorRequest {
    const TriImage* image = nullptr;
    int timestep = 1;
    double sigma_bar = 0.0;  // sqrt((1 - ab_t) / ab_t) at `timestep`
    // Solver context. Stateless priors ignore these; priors that carry a
    // ground truth use `band` to pick the triple and `scale` to map solver
    // units back to data units (data = scale * solver).
    int band = -1;
    double scale = 1.0;

    const TriImage& x() const { return *image; }
    /// 1 - ab_t recovered from sigma_bar.
    double one_minus_alpha_bar() const { return sigma_bar * sigma_bar / (1.0 + sigma_bar * sigma_bar); }
    double alpha_bar() const { return 1.0 / (1.0 + sigma_bar * sigma_bar); }
};

inline PriorRequest make_request(const DiffusionSchedule& sched, const TriImage& image, int t, int band = -1,
                                 double scale = 1.0)
{
    require(t >= 1 && t <= sched.steps(), "prior request timestep " + std::to_string(t) + " out of range");
    return PriorRequest{&image, t, sched.sigma_bar(t), band, scale};
}

class ScorePrior {
public:
    virtual ~ScorePrior() = default;
    virtual TriImage score(const PriorRequest& req) const = 0;
    virtual std::string name() const = 0;
    /// How many score() calls may run at once; 0 means unlimited.
    virtual std::size_t max_concurrency() const { return 0; }
};

/// Zero score: the denoised estimate is x_t / sqrt(ab_t).
class IdentityPrior final : public ScorePrior {
public:
    TriImage score(const PriorRequest& req) const override
    {
        return TriImage(req.x().height(), req.x().width(), 0.0);
    }
    std::string name() const override { return "identity"; }
};

/// Smoothness prior: score = (blur(x_t) - x_t) / (1 - ab_t), where
/// blur = (1 - s) * I + s * K and K is the separable [1/4, 1/2, 1/4] kernel
/// applied per channel with replicated borders.
class GaussianShrinkPrior final : public ScorePrior {
public:
    explicit GaussianShrinkPrior(double strength) : strength_(strength)
    {
        require(strength > 0.0 && strength <= 1.0, "shrink strength must lie in (0,1]");
    }

    double strength() const { return strength_; }

    TriImage blur(const TriImage& x) const
    {
        const std::size_t H = x.height(), W = x.width();
        TriImage tmp(H, W), out(H, W);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    const std::size_t wl = w == 0 ? 0 : w - 1, wr = w + 1 < W ? w + 1 : W - 1;
                    tmp.at(h, w, c) = 0.25 * x.at(h, wl, c) + 0.5 * x.at(h, w, c) + 0.25 * x.at(h, wr, c);
                }
            for (std::size_t h = 0; h < H; ++h) {
                const std::size_t hu = h == 0 ? 0 : h - 1, hd = h + 1 < H ? h + 1 : H - 1;
                for (std::size_t w = 0; w < W; ++w) {
                    const double k = 0.25 * tmp.at(hu, w, c) + 0.5 * tmp.at(h, w, c) + 0.25 * tmp.at(hd, w, c);
                    out.at(h, w, c) = (1.0 - strength_) * x.at(h, w, c) + strength_ * k;
                }
            }
        }
        return out;
    }

    TriImage score(const PriorRequest& req) const override
    {
        TriImage s = blur(req.x());
        const double inv = 1.0 / req.one_minus_alpha_bar();
        auto sv = s.values();
        auto xv = req.x().values();
        for (std::size_t i = 0; i < sv.size(); ++i) sv[i] = (sv[i] - xv[i]) * inv;
        return s;
    }
    std::string name() const override { return "gaussianShrink"; }

private:
    double strength_;
};

namespace detail {

inline TriImage oracle_score(const TriImage& truth, const PriorRequest& req, double scale)
{
    require(truth.same_shape(req.x()), "oracle prior: ground truth and request differ in shape");
    const double ab = req.alpha_bar(), oma = req.one_minus_alpha_bar();
    const double a = std::sqrt(ab) / scale;
    TriImage s(truth.height(), truth.width());
    auto sv = s.values();
    auto tv = truth.values();
    auto xv = req.x().values();
    for (std::size_t i = 0; i < sv.size(); ++i) sv[i] = (a * tv[i] - xv[i]) / oma;
    return s;
}

} // namespace detail

/// Exact score of x_t ~ N(sqrt(ab_t) x_true, (1 - ab_t) I): denoising returns x_true.
class OraclePrior final : public ScorePrior {
public:
    explicit OraclePrior(TriImage truth) : truth_(std::move(truth)) {}
    TriImage score(const PriorRequest& req) const override { return detail::oracle_score(truth_, req, req.scale); }
    std::string name() const override { return "oracle"; }

private:
    TriImage truth_;
};

/// Oracle over a whole reference cube: the request's band selects the triple
/// through the same plan the solver uses.
class CubeOraclePrior final : public ScorePrior {
public:
    CubeOraclePrior(SpectralCube truth, BandPlan plan) : truth_(std::move(truth)), plan_(std::move(plan))
    {
        require(plan_.bands() == truth_.bands(), "oracle plan and reference cube disagree on band count");
    }
    TriImage score(const PriorRequest& req) const override
    {
        require(req.band >= 0 && static_cast<std::size_t>(req.band) < truth_.bands(),
                "cube oracle prior needs a band index in the request");
        return detail::oracle_score(extract(plan_, truth_, static_cast<std::size_t>(req.band)), req, req.scale);
    }
    std::string name() const override { return "oracle"; }

private:
    SpectralCube truth_;
    BandPlan plan_;
};

/// Tweedie denoiser: predict_clean(x_t, score(x_t, t)).
inline TriImage denoise(const ScorePrior& prior, const DiffusionSchedule& sched, const PriorRequest& req)
{
    require(req.image != nullptr, "prior request without an image");
    require(req.timestep >= 1, "prior request needs t >= 1");
    require(std::abs(req.sigma_bar - sched.sigma_bar(req.timestep)) <= 1e-9 * std::max(1.0, req.sigma_bar),
            "prior request noise level does not match the schedule at t=" + std::to_string(req.timestep));
    TriImage s = prior.score(req);
    require(s.same_shape(req.x()), "prior '" + prior.name() + "' returned a score of the wrong shape");
    return predict_clean(sched, req.x(), s, req.timestep);
}

} // namespace diffsci
