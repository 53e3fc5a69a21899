#include <gtest/gtest.h>

#include <cmath>

#include "diffsci/metrics.hpp"
#include "diffsci/random.hpp"

using namespace diffsci;

namespace {

Plane random_plane(std::size_t H, std::size_t W, std::uint64_t seed)
{
    Plane p(H, W);
    fill_uniform(p.data, seed);
    return p;
}

} // namespace

TEST(Psnr, IdenticalIsCapped)
{
    const Plane a = random_plane(4, 4, 1);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
}

TEST(Psnr, ConstantDifference)
{
    const Plane a(5, 5, 0.3), b(5, 5, 0.4);
    EXPECT_NEAR(psnr(a, b, 1.0), 20.0, 1e-9);
}

TEST(Psnr, MatchesBruteForce)
{
    const Plane a = random_plane(7, 9, 2), b = random_plane(7, 9, 3);
    double mse = 0;
    for (std::size_t h = 0; h < 7; ++h)
        for (std::size_t w = 0; w < 9; ++w) mse += std::pow(a.at(h, w) - b.at(h, w), 2);
    mse /= 63.0;
    EXPECT_NEAR(psnr(a, b, 2.0), 10 * std::log10(4.0 / mse), 1e-12);
}

TEST(Psnr, SymmetryAndMonotonicity)
{
    const Plane a = random_plane(6, 6, 4), b = random_plane(6, 6, 5);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    double prev = kPsnrCap + 1;
    for (double scale : {0.01, 0.1, 0.5, 1.0, 2.0}) {
        Plane c = a;
        for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += scale * (b.data[i] - a.data[i]);
        const double p = psnr(a, c);
        EXPECT_LT(p, prev);
        prev = p;
    }
}

TEST(Psnr, Errors)
{
    EXPECT_THROW(psnr(Plane(2, 2), Plane(2, 3)), Error);
    EXPECT_THROW(psnr(Plane(2, 2), Plane(2, 2), 0.0), Error);
}

TEST(Ssim, IdenticalIsOne)
{
    const Plane a = random_plane(16, 20, 1);
    EXPECT_EQ(ssim(a, a), 1.0);
}

TEST(Ssim, AntiCorrelatedIsLow)
{
    const Plane a = random_plane(24, 24, 2);
    Plane b = a;
    for (double& v : b.data) v = 1.0 - v;
    EXPECT_LT(ssim(a, b), 0.5);
}

TEST(Ssim, ConstantPlanesLuminanceOnly)
{
    const double c = 0.2, peak = 1.0;
    const Plane a(11, 11, c), b(11, 11, c + peak / 2);
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double mb = c + peak / 2;
    const double expected = (2 * c * mb + c1) / (c * c + mb * mb + c1);
    EXPECT_NEAR(ssim(a, b, peak), expected, 1e-12);
}

TEST(Ssim, SymmetryAndErrors)
{
    const Plane a = random_plane(13, 12, 3), b = random_plane(13, 12, 4);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
    EXPECT_THROW(ssim(Plane(10, 20), Plane(10, 20)), Error);
    EXPECT_THROW(ssim(a, Plane(13, 13)), Error);
}

TEST(SpectralCorrelation, Properties)
{
    const std::size_t B = 6;
    SpectralCube ref = make_cube(4, 4, B, evenly_spaced_wavelengths(B), 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < 4; ++h)
            for (std::size_t w = 0; w < 4; ++w) ref.at(h, w, b) = 0.1 * double(b) + 0.01 * double(h + w);
    const Region r{1, 1, 3, 3};
    EXPECT_NEAR(spectral_curve_correlation(ref, ref, r), 1.0, 1e-12);

    SpectralCube affine = ref;
    for (double& v : affine.values()) v = 2 * v + 3;
    EXPECT_NEAR(spectral_curve_correlation(affine, ref, r), 1.0, 1e-12);

    SpectralCube reversed = ref;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < 4; ++h)
            for (std::size_t w = 0; w < 4; ++w) reversed.at(h, w, b) = ref.at(h, w, B - 1 - b);
    EXPECT_LT(spectral_curve_correlation(reversed, ref, r), 0.0);

    EXPECT_THROW(spectral_curve(ref, Region{0, 0, 5, 2}), Error);
    const SpectralCube flat = make_cube(4, 4, B, evenly_spaced_wavelengths(B), 1.0);
    try {
        spectral_curve_correlation(flat, ref, r);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Numerical);
    }
}

TEST(Evaluate, MeanIsArithmeticMeanOfBands)
{
    SpectralCube ref = make_cube(12, 12, 3, evenly_spaced_wavelengths(3), 0.0), rec = ref;
    fill_uniform(ref.values(), 1);
    fill_uniform(rec.values(), 2);
    const EvalReport r = evaluate(rec, ref, 1.0, Region{0, 0, 12, 12});
    ASSERT_EQ(r.per_band_psnr.size(), 3u);
    double s = 0;
    for (std::size_t b = 0; b < 3; ++b) {
        EXPECT_NEAR(r.per_band_psnr[b], psnr(slice_band(rec, b), slice_band(ref, b)), 1e-12);
        s += r.per_band_psnr[b];
    }
    EXPECT_NEAR(r.mean_psnr, s / 3, 1e-12);
    EXPECT_NEAR(r.mean_psnr, mean_psnr(rec, ref), 1e-12);
    ASSERT_TRUE(r.mean_ssim.has_value());
    ASSERT_TRUE(r.spectral_correlation.has_value());
}

TEST(Evaluate, SelfComparison)
{
    SpectralCube ref = make_cube(12, 12, 2, evenly_spaced_wavelengths(2), 0.0);
    fill_uniform(ref.values(), 3);
    const EvalReport r = evaluate(ref, ref);
    EXPECT_EQ(r.mean_psnr, kPsnrCap);
    EXPECT_EQ(*r.mean_ssim, 1.0);
}

TEST(Evaluate, SmallCubesSkipSsimAndMismatchFails)
{
    const SpectralCube a = make_cube(4, 4, 2, evenly_spaced_wavelengths(2), 0.5);
    EXPECT_FALSE(evaluate(a, a).mean_ssim.has_value());
    EXPECT_THROW(evaluate(a, make_cube(4, 5, 2, evenly_spaced_wavelengths(2), 0.5)), Error);
}
