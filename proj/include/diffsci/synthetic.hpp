#pragma once

// Synthetic scenes for tests, smoke runs and ablations: a few soft spatial
// blobs, each with its own smooth (Gaussian-in-wavelength) spectrum, over a
// faint sloped background. Values stay in [0, 1].

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "diffsci/spectral_core.hpp"

namespace diffsci {

struct SceneSpec {
    std::size_t height = 32, width = 32, bands = 8;
    std::size_t blobs = 4;
    double first_nm = 450.0, last_nm = 720.0;
};

inline SpectralCube smooth_scene(const SceneSpec& spec, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto wl = evenly_spaced_wavelengths(spec.bands, spec.first_nm, spec.last_nm);
    SpectralCube cube = make_cube(spec.height, spec.width, spec.bands, wl, 0.0);

    struct Blob {
        double ch, cw, radius, peak_nm, width_nm, amp;
    };
    std::vector<Blob> blobs(spec.blobs);
    for (auto& b : blobs) {
        b.ch = u(gen) * double(spec.height);
        b.cw = u(gen) * double(spec.width);
        b.radius = (0.15 + 0.2 * u(gen)) * double(std::min(spec.height, spec.width));
        b.peak_nm = spec.first_nm + u(gen) * (spec.last_nm - spec.first_nm);
        b.width_nm = 60.0 + 80.0 * u(gen);
        b.amp = 0.4 + 0.4 * u(gen);
    }
    const double slope = 0.1 * u(gen);
    double maxv = 0.0;
    for (std::size_t k = 0; k < spec.bands; ++k)
        for (std::size_t h = 0; h < spec.height; ++h)
            for (std::size_t w = 0; w < spec.width; ++w) {
                double v = 0.05 + slope * double(h + w) / double(spec.height + spec.width);
                for (const auto& b : blobs) {
                    const double dh = double(h) - b.ch, dw = double(w) - b.cw;
                    const double spatial = std::exp(-(dh * dh + dw * dw) / (2.0 * b.radius * b.radius));
                    const double dl = wl[k] - b.peak_nm;
                    const double spectral = std::exp(-dl * dl / (2.0 * b.width_nm * b.width_nm));
                    v += b.amp * spatial * spectral;
                }
                cube.at(h, w, k) = v;
                maxv = std::max(maxv, v);
            }
    if (maxv > 1.0)
        for (double& v : cube.values()) v /= maxv;
    return cube;
}

} // namespace diffsci
