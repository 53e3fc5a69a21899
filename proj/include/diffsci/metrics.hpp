#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "diffsci/error.hpp"
#include "diffsci/spectral_core.hpp"

namespace diffsci {

/// Reported when the two inputs are identical (zero MSE).
inline constexpr double kPsnrCap = 200.0;

/// 10 log10(peak^2 / MSE), capped at kPsnrCap.
inline double psnr(std::span<const double> a, std::span<const double> b, double peak = 1.0)
{
    require(a.size() == b.size() && !a.empty(), "psnr: inputs differ in size");
    require(peak > 0.0, "psnr: peak must be positive");
    double sse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(a.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

inline double psnr(const Plane& a, const Plane& b, double peak = 1.0)
{
    require(a.same_shape(b), "psnr: plane dimensions differ");
    return psnr(a.values(), b.values(), peak);
}

namespace detail {

inline std::vector<double> gaussian_window(int size = 11, double sigma = 1.5)
{
    std::vector<double> g(size * size);
    const int r = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double v = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2.0 * sigma * sigma));
            g[i * size + j] = v;
            sum += v;
        }
    for (double& v : g) v /= sum;
    return g;
}

} // namespace detail

/// Mean SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5),
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2.
inline double ssim(const Plane& a, const Plane& b, double peak = 1.0)
{
    constexpr int win = 11;
    require(a.same_shape(b), "ssim: plane dimensions differ");
    require(a.height >= win && a.width >= win, "ssim needs planes of at least 11x11");
    require(peak > 0.0, "ssim: peak must be positive");
    static const std::vector<double> g = detail::gaussian_window(win, 1.5);
    const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t h0 = 0; h0 + win <= a.height; ++h0)
        for (std::size_t w0 = 0; w0 + win <= a.width; ++w0) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double wgt = g[i * win + j];
                    const double x = a.at(h0 + i, w0 + j), y = b.at(h0 + i, w0 + j);
                    ma += wgt * x;
                    mb += wgt * y;
                    saa += wgt * x * x;
                    sbb += wgt * y * y;
                    sab += wgt * x * y;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

/// Half-open pixel rectangle [h0, h1) x [w0, w1).
struct Region {
    std::size_t h0 = 0, w0 = 0, h1 = 0, w1 = 0;
    bool operator==(const Region&) const = default;
};

/// Mean intensity per band over the region.
inline std::vector<double> spectral_curve(const SpectralCube& cube, const Region& r)
{
    require(r.h0 < r.h1 && r.w0 < r.w1 && r.h1 <= cube.height() && r.w1 <= cube.width(),
            "spectral region outside the cube");
    std::vector<double> curve(cube.bands(), 0.0);
    const double n = double(r.h1 - r.h0) * double(r.w1 - r.w0);
    for (std::size_t b = 0; b < cube.bands(); ++b) {
        double s = 0.0;
        for (std::size_t h = r.h0; h < r.h1; ++h)
            for (std::size_t w = r.w0; w < r.w1; ++w) s += cube.at(h, w, b);
        curve[b] = s / n;
    }
    return curve;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y)
{
    require(x.size() == y.size() && x.size() >= 2, "pearson: need two equally long series of length >= 2");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(x.size());
    my /= double(y.size());
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) fail(ErrorKind::Numerical, "correlation undefined: a spectral curve is flat");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spectral_curve_correlation(const SpectralCube& recon, const SpectralCube& ref, const Region& r)
{
    require(recon.same_shape(ref), "spectral correlation: cube dimensions differ");
    return pearson(spectral_curve(recon, r), spectral_curve(ref, r));
}

struct EvalReport {
    std::vector<double> per_band_psnr;
    double mean_psnr = 0.0;
    std::optional<double> mean_ssim;  // absent for planes smaller than 11x11
    std::optional<double> spectral_correlation;
};

/// Per-band PSNR/SSIM averaged arithmetically over bands.
inline EvalReport evaluate(const SpectralCube& recon, const SpectralCube& ref, double peak = 1.0,
                           std::optional<Region> region = std::nullopt)
{
    require(recon.same_shape(ref), "evaluate: cube " + detail::dims(recon.height(), recon.width(), recon.bands()) +
                                       " vs reference " + detail::dims(ref.height(), ref.width(), ref.bands()));
    EvalReport rep;
    const bool with_ssim = recon.height() >= 11 && recon.width() >= 11;
    double ssim_sum = 0.0;
    for (std::size_t b = 0; b < recon.bands(); ++b) {
        rep.per_band_psnr.push_back(psnr(recon.band(b), ref.band(b), peak));
        if (with_ssim) ssim_sum += ssim(slice_band(recon, b), slice_band(ref, b), peak);
    }
    double s = 0.0;
    for (double p : rep.per_band_psnr) s += p;
    rep.mean_psnr = s / double(rep.per_band_psnr.size());
    if (with_ssim) rep.mean_ssim = ssim_sum / double(recon.bands());
    if (region) rep.spectral_correlation = spectral_curve_correlation(recon, ref, *region);
    return rep;
}

/// Mean per-band PSNR only; cheap enough for per-step traces.
inline double mean_psnr(const SpectralCube& recon, const SpectralCube& ref, double peak = 1.0)
{
    require(recon.same_shape(ref), "mean_psnr: cube dimensions differ");
    double s = 0.0;
    for (std::size_t b = 0; b < recon.bands(); ++b) s += psnr(recon.band(b), ref.band(b), peak);
    return s / double(recon.bands());
}

} // namespace diffsci
