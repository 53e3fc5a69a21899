#pragma once

// Single-disperser CASSI sensing operator.
//
// Every band is modulated by the same 2-D mask and then shifted right by
// shift*b columns (b 0-based) before all bands are summed onto one detector
// row of width W' = W + shift*(B-1):
//
//   y(h, w') = sum_b mask(h, w' - shift*b) * x(h, w' - shift*b, b)
//
// Terms whose source column falls outside [0, W) contribute nothing.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "diffsci/error.hpp"
#include "diffsci/random.hpp"
#include "diffsci/spectral_core.hpp"

namespace diffsci {

inline CodedMask random_mask(std::size_t height, std::size_t width, std::uint64_t seed, double density = 0.5)
{
    require(density >= 0.0 && density <= 1.0, "mask density must lie in [0,1]");
    std::mt19937_64 gen(seed);
    std::bernoulli_distribution open(density);
    std::vector<double> v(height * width);
    for (double& x : v) x = open(gen) ? 1.0 : 0.0;
    return CodedMask(height, width, std::move(v));
}

class CassiOperator {
public:
    CassiOperator(CodedMask mask, std::size_t shift, std::vector<double> wavelengths)
        : mask_(std::move(mask)), shift_(shift), wavelengths_(std::move(wavelengths))
    {
        require(!wavelengths_.empty(), "operator needs at least one band");
        // validates ordering/finiteness the same way cubes do
        (void)make_cube(1, 1, wavelengths_.size(), wavelengths_, 0.0);
    }

    CassiOperator(CodedMask mask, std::size_t shift, std::size_t bands)
        : CassiOperator(std::move(mask), shift, evenly_spaced_wavelengths(bands))
    {
    }

    const CodedMask& mask() const { return mask_; }
    std::size_t shift() const { return shift_; }
    std::size_t bands() const { return wavelengths_.size(); }
    std::size_t height() const { return mask_.height(); }
    std::size_t width() const { return mask_.width(); }
    std::size_t measurement_width() const { return mask_.width() + shift_ * (bands() - 1); }
    const std::vector<double>& wavelengths() const { return wavelengths_; }

    Measurement apply(const SpectralCube& x) const
    {
        check_cube(x);
        Measurement y(height(), measurement_width(), shift_);
        const std::size_t W = width();
        for (std::size_t b = 0; b < bands(); ++b) {
            const std::size_t off = shift_ * b;
            for (std::size_t h = 0; h < height(); ++h) {
                const double* xr = x.band(b).data() + h * W;
                const double* mr = mask_.values().data() + h * W;
                double* yr = y.data.data() + h * y.width + off;
                for (std::size_t w = 0; w < W; ++w) yr[w] += mr[w] * xr[w];
            }
        }
        return y;
    }

    SpectralCube adjoint(const Measurement& y) const
    {
        check_measurement(y);
        const std::size_t W = width();
        std::vector<double> out(height() * W * bands());
        for (std::size_t b = 0; b < bands(); ++b) {
            const std::size_t off = shift_ * b;
            for (std::size_t h = 0; h < height(); ++h) {
                const double* yr = y.data.data() + h * y.width + off;
                const double* mr = mask_.values().data() + h * W;
                double* xr = out.data() + b * height() * W + h * W;
                for (std::size_t w = 0; w < W; ++w) xr[w] = mr[w] * yr[w];
            }
        }
        return SpectralCube(height(), W, wavelengths_, std::move(out));
    }

    /// Diagonal of Phi*Phi^T, laid out like a measurement.
    Measurement diag_phi_phi_t() const
    {
        Measurement d(height(), measurement_width(), shift_);
        const std::size_t W = width();
        for (std::size_t b = 0; b < bands(); ++b)
            for (std::size_t h = 0; h < height(); ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    const double m = mask_.at(h, w);
                    d.at(h, w + shift_ * b) += m * m;
                }
        return d;
    }

    /// y = Phi x + n, n ~ N(0, sigma^2 I) drawn from a generator seeded with `seed`.
    Measurement simulate(const SpectralCube& x, double sigma, std::uint64_t seed) const
    {
        require(sigma >= 0.0 && std::isfinite(sigma), "noise sigma must be finite and non-negative");
        Measurement y = apply(x);
        y.noise_sigma = sigma;
        if (sigma > 0.0) {
            std::vector<double> n(y.data.size());
            fill_gaussian(n, seed, sigma);
            for (std::size_t i = 0; i < n.size(); ++i) y.data[i] += n[i];
        }
        return y;
    }

    void check_cube(const SpectralCube& x) const
    {
        require(x.height() == height() && x.width() == width() && x.bands() == bands(),
                "cube " + detail::dims(x.height(), x.width(), x.bands()) + " does not match operator " +
                    detail::dims(height(), width(), bands()));
    }

    void check_measurement(const Measurement& y) const
    {
        require(y.height == height() && y.width == measurement_width(),
                "measurement " + std::to_string(y.height) + "x" + std::to_string(y.width) +
                    " does not match operator " + std::to_string(height()) + "x" +
                    std::to_string(measurement_width()));
        require(y.data.size() == y.height * y.width, "measurement payload size mismatch");
    }

private:
    CodedMask mask_;
    std::size_t shift_;
    std::vector<double> wavelengths_;
};

} // namespace diffsci
