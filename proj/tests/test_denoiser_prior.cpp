#include <gtest/gtest.h>

#include <cmath>

#include "diffsci/denoiser_prior.hpp"
#include "diffsci/random.hpp"

using namespace diffsci;

namespace {

TriImage random_tri(std::size_t H, std::size_t W, std::uint64_t seed)
{
    TriImage t(H, W);
    fill_gaussian(t.values(), seed);
    return t;
}

const DiffusionSchedule& sched()
{
    static const DiffusionSchedule s = DiffusionSchedule::linear();
    return s;
}

} // namespace

TEST(IdentityPrior, ZeroScoreAndScaledDenoise)
{
    const IdentityPrior p;
    const TriImage x = random_tri(4, 5, 1);
    const auto req = make_request(sched(), x, 250);
    for (double v : p.score(req).values()) EXPECT_EQ(v, 0.0);
    const TriImage d = denoise(p, sched(), req);
    const double inv = 1.0 / std::sqrt(sched().alpha_bar(250));
    for (std::size_t i = 0; i < d.values().size(); ++i) EXPECT_NEAR(d.values()[i], x.values()[i] * inv, 1e-12);
}

TEST(IdentityPrior, QuarterAlphaBarDoubles)
{
    const auto s = DiffusionSchedule::linear(2, 0.5, 0.5 + 1e-12);
    const IdentityPrior p;
    const TriImage x(3, 3, 1.0);
    for (double v : denoise(p, s, make_request(s, x, 2)).values()) EXPECT_NEAR(v, 2.0, 1e-11);
}

TEST(OraclePrior, CleanInputHasZeroScore)
{
    const TriImage truth = random_tri(4, 4, 2);
    const OraclePrior p(truth);
    const int t = 333;
    TriImage xt = truth;
    for (double& v : xt.values()) v *= std::sqrt(sched().alpha_bar(t));
    for (double v : p.score(make_request(sched(), xt, t)).values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(OraclePrior, DenoiseRecoversTruthForAnyInput)
{
    const TriImage truth = random_tri(4, 4, 2);
    const OraclePrior p(truth);
    for (int t : {1, 10, 500, 1000}) {
        const TriImage xt = random_tri(4, 4, 100 + t);
        const TriImage d = denoise(p, sched(), make_request(sched(), xt, t));
        for (std::size_t i = 0; i < d.values().size(); ++i) EXPECT_NEAR(d.values()[i], truth.values()[i], 1e-10);
    }
}

TEST(OraclePrior, FixedPointOnForwardSamples)
{
    const TriImage truth = random_tri(5, 3, 4);
    const OraclePrior p(truth);
    for (int t = 1; t <= 1000; t += 37) {
        const TriImage xt = forward_sample(sched(), truth, t, t);
        const TriImage d = denoise(p, sched(), make_request(sched(), xt, t));
        for (std::size_t i = 0; i < d.values().size(); ++i) ASSERT_NEAR(d.values()[i], truth.values()[i], 1e-10);
    }
}

TEST(OraclePrior, ShapeMismatch)
{
    const OraclePrior p(TriImage(3, 3));
    const TriImage x(3, 4);
    EXPECT_THROW(p.score(make_request(sched(), x, 5)), Error);
}

TEST(CubeOraclePrior, UsesBandAndScale)
{
    SpectralCube truth = make_cube(3, 3, 4, evenly_spaced_wavelengths(4), 0.0);
    fill_gaussian(truth.values(), 3);
    const BandPlan plan = make_sliding_plan(4);
    const CubeOraclePrior p(truth, plan);
    const TriImage xt = random_tri(3, 3, 9);
    const TriImage d = denoise(p, sched(), make_request(sched(), xt, 40, 2, 4.0));
    const TriImage expect = extract(plan, truth, 2);
    for (std::size_t i = 0; i < d.values().size(); ++i) EXPECT_NEAR(d.values()[i], expect.values()[i] / 4.0, 1e-10);
    EXPECT_THROW(p.score(make_request(sched(), xt, 40)), Error);
}

TEST(GaussianShrinkPrior, BlurMatchesSeparableKernel)
{
    const GaussianShrinkPrior p(1.0);
    const TriImage x = random_tri(5, 6, 5);
    const TriImage b = p.blur(x);
    auto clamp = [](long v, long n) { return std::min(std::max(v, 0L), n - 1); };
    const double k[3] = {0.25, 0.5, 0.25};
    for (std::size_t c = 0; c < 3; ++c)
        for (long h = 0; h < 5; ++h)
            for (long w = 0; w < 6; ++w) {
                double s = 0;
                for (int i = -1; i <= 1; ++i)
                    for (int j = -1; j <= 1; ++j) s += k[i + 1] * k[j + 1] * x.at(clamp(h + i, 5), clamp(w + j, 6), c);
                EXPECT_NEAR(b.at(h, w, c), s, 1e-12);
            }
}

TEST(GaussianShrinkPrior, ScoreFormulaAndStrength)
{
    const GaussianShrinkPrior full(1.0), half(0.5);
    const TriImage x = random_tri(4, 4, 6);
    const int t = 123;
    const auto req = make_request(sched(), x, t);
    const TriImage sf = full.score(req), sh = half.score(req);
    const TriImage bf = full.blur(x);
    const double oma = 1.0 - sched().alpha_bar(t);
    for (std::size_t i = 0; i < x.values().size(); ++i) {
        EXPECT_NEAR(sf.values()[i], (bf.values()[i] - x.values()[i]) / oma, 1e-9);
        EXPECT_NEAR(sh.values()[i], 0.5 * sf.values()[i], 1e-9);
    }
    // Constant images are fixed points of the blur.
    for (double v : full.score(make_request(sched(), TriImage(4, 4, 0.3), t)).values()) EXPECT_NEAR(v, 0.0, 1e-12);
    EXPECT_THROW(GaussianShrinkPrior(0.0), Error);
    EXPECT_THROW(GaussianShrinkPrior(1.5), Error);
}

TEST(Priors, ShapePreservation)
{
    const TriImage x = random_tri(2, 7, 1);
    const IdentityPrior id;
    const GaussianShrinkPrior gs(0.5);
    const OraclePrior orc(random_tri(2, 7, 2));
    for (const ScorePrior* p : std::initializer_list<const ScorePrior*>{&id, &gs, &orc}) {
        const TriImage d = denoise(*p, sched(), make_request(sched(), x, 9));
        EXPECT_TRUE(d.same_shape(x)) << p->name();
    }
}

TEST(Denoise, RejectsInconsistentNoiseLevel)
{
    const IdentityPrior p;
    const TriImage x(2, 2);
    PriorRequest req = make_request(sched(), x, 10);
    req.sigma_bar *= 1.01;
    EXPECT_THROW(denoise(p, sched(), req), Error);
    EXPECT_THROW(make_request(sched(), x, 0), Error);
    EXPECT_THROW(make_request(sched(), x, 1001), Error);
}

TEST(PriorRequest, AlphaBarFromSigmaBar)
{
    const TriImage x(1, 1);
    const auto req = make_request(sched(), x, 700);
    EXPECT_NEAR(req.alpha_bar(), sched().alpha_bar(700), 1e-14);
    EXPECT_NEAR(req.one_minus_alpha_bar(), 1 - sched().alpha_bar(700), 1e-14);
}
