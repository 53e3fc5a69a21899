#pragma once

// Dense array types for spectral cubes, coded masks, snapshot measurements and
// the three-channel images handed to a score prior.
//
// Layout: every multi-channel type is channel-major, row-major within a
// channel: index(h, w, c) = c*H*W + h*W + w. Band / channel indices in this
// API are 0-based.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffsci/error.hpp"

namespace diffsci {

/// A single H x W real plane.
struct Plane {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    Plane() = default;
    Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w, fill) {}

    double& at(std::size_t h, std::size_t w) { return data[h * width + w]; }
    double at(std::size_t h, std::size_t w) const { return data[h * width + w]; }
    std::span<double> values() & { return data; }
    std::span<const double> values() const& { return data; }
    std::vector<double> values() && { return std::move(data); }
    bool same_shape(const Plane& o) const { return height == o.height && width == o.width; }
};

/// Anything with a flat value buffer that the diffusion algebra can act on
/// elementwise (TriImage, SpectralCube, Plane).
template <typename F>
concept DenseField = requires(F f, const F cf) {
    { f.values() } -> std::convertible_to<std::span<double>>;
    { cf.values() } -> std::convertible_to<std::span<const double>>;
    { cf.same_shape(cf) } -> std::convertible_to<bool>;
};

namespace detail {

inline bool all_finite(std::span<const double> v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline std::string dims(std::size_t h, std::size_t w, std::size_t c)
{
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

} // namespace detail

class SpectralCube {
public:
    SpectralCube() = default;

    SpectralCube(std::size_t height, std::size_t width, std::vector<double> wavelengths, std::vector<double> data)
        : height_(height), width_(width), bands_(wavelengths.size()), wavelengths_(std::move(wavelengths)),
          data_(std::move(data))
    {
        require(height_ >= 1 && width_ >= 1 && bands_ >= 1,
                "cube dimensions must be positive, got " + detail::dims(height_, width_, bands_));
        require(data_.size() == height_ * width_ * bands_,
                "cube payload holds " + std::to_string(data_.size()) + " values, expected " +
                    std::to_string(height_ * width_ * bands_));
        for (std::size_t b = 0; b < bands_; ++b) {
            require(std::isfinite(wavelengths_[b]), "wavelength " + std::to_string(b) + " is not finite");
            if (b > 0)
                require(wavelengths_[b] > wavelengths_[b - 1],
                        "wavelengths must be strictly increasing; violated at index " + std::to_string(b));
        }
        for (std::size_t i = 0; i < data_.size(); ++i)
            require(std::isfinite(data_[i]), "cube value at linear index " + std::to_string(i) + " is not finite");
    }

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t bands() const { return bands_; }
    std::size_t plane_size() const { return height_ * width_; }
    const std::vector<double>& wavelengths() const { return wavelengths_; }

    static std::size_t linear_index(std::size_t h, std::size_t w, std::size_t b, std::size_t H, std::size_t W)
    {
        return b * H * W + h * W + w;
    }

    double& at(std::size_t h, std::size_t w, std::size_t b) { return data_[linear_index(h, w, b, height_, width_)]; }
    double at(std::size_t h, std::size_t w, std::size_t b) const
    {
        return data_[linear_index(h, w, b, height_, width_)];
    }

    std::span<double> band(std::size_t b) { return {data_.data() + b * plane_size(), plane_size()}; }
    std::span<const double> band(std::size_t b) const { return {data_.data() + b * plane_size(), plane_size()}; }

    std::span<double> values() & { return data_; }
    std::span<const double> values() const& { return data_; }
    std::vector<double> values() && { return std::move(data_); }

    bool same_shape(const SpectralCube& o) const
    {
        return height_ == o.height_ && width_ == o.width_ && bands_ == o.bands_;
    }

private:
    std::size_t height_ = 0, width_ = 0, bands_ = 0;
    std::vector<double> wavelengths_;
    std::vector<double> data_;
};

/// Three-channel image; channel c occupies data[c*H*W, (c+1)*H*W).
class TriImage {
public:
    static constexpr std::size_t channels = 3;

    TriImage() = default;
    TriImage(std::size_t height, std::size_t width, double fill = 0.0)
        : height_(height), width_(width), data_(height * width * channels, fill)
    {
        require(height >= 1 && width >= 1, "tri-image dimensions must be positive");
    }
    TriImage(std::size_t height, std::size_t width, std::vector<double> data)
        : height_(height), width_(width), data_(std::move(data))
    {
        require(height >= 1 && width >= 1, "tri-image dimensions must be positive");
        require(data_.size() == height * width * channels, "tri-image payload size mismatch");
    }

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t plane_size() const { return height_ * width_; }

    double& at(std::size_t h, std::size_t w, std::size_t c) { return data_[c * plane_size() + h * width_ + w]; }
    double at(std::size_t h, std::size_t w, std::size_t c) const { return data_[c * plane_size() + h * width_ + w]; }

    std::span<double> channel(std::size_t c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const double> channel(std::size_t c) const { return {data_.data() + c * plane_size(), plane_size()}; }

    std::span<double> values() & { return data_; }
    std::span<const double> values() const& { return data_; }
    std::vector<double> values() && { return std::move(data_); }

    bool same_shape(const TriImage& o) const { return height_ == o.height_ && width_ == o.width_; }

private:
    std::size_t height_ = 0, width_ = 0;
    std::vector<double> data_;
};

class CodedMask {
public:
    CodedMask() = default;
    CodedMask(std::size_t height, std::size_t width, std::vector<double> values)
        : height_(height), width_(width), values_(std::move(values))
    {
        require(height >= 1 && width >= 1, "mask dimensions must be positive");
        require(values_.size() == height * width, "mask payload size mismatch");
        for (std::size_t i = 0; i < values_.size(); ++i)
            require(std::isfinite(values_[i]) && values_[i] >= 0.0 && values_[i] <= 1.0,
                    "mask value at index " + std::to_string(i) + " outside [0,1]");
    }

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    double at(std::size_t h, std::size_t w) const { return values_[h * width_ + w]; }
    std::span<const double> values() const& { return values_; }
    std::vector<double> values() && { return std::move(values_); }

private:
    std::size_t height_ = 0, width_ = 0;
    std::vector<double> values_;
};

/// Snapshot of width W' = W + shift*(B-1), plus the noise level it was taken at.
struct Measurement {
    std::size_t height = 0;
    std::size_t width = 0;  // W'
    std::size_t shift = 0;  // d
    double noise_sigma = 0.0;
    std::vector<double> data;

    Measurement() = default;
    Measurement(std::size_t h, std::size_t w, std::size_t d, double sigma = 0.0)
        : height(h), width(w), shift(d), noise_sigma(sigma), data(h * w, 0.0)
    {
    }

    double& at(std::size_t h, std::size_t w) { return data[h * width + w]; }
    double at(std::size_t h, std::size_t w) const { return data[h * width + w]; }
    std::span<double> values() & { return data; }
    std::span<const double> values() const& { return data; }
    std::vector<double> values() && { return std::move(data); }
    bool same_shape(const Measurement& o) const { return height == o.height && width == o.width; }
};

inline std::vector<double> evenly_spaced_wavelengths(std::size_t bands, double first_nm = 450.0,
                                                     double last_nm = 720.0)
{
    require(bands >= 1, "band count must be positive");
    std::vector<double> wl(bands, first_nm);
    if (bands == 1) return wl;
    require(last_nm > first_nm, "wavelength range must be increasing");
    for (std::size_t b = 0; b < bands; ++b)
        wl[b] = first_nm + (last_nm - first_nm) * static_cast<double>(b) / static_cast<double>(bands - 1);
    return wl;
}

inline SpectralCube make_cube(std::size_t height, std::size_t width, std::size_t bands,
                              std::vector<double> wavelengths, double fill)
{
    require(wavelengths.size() == bands, "expected " + std::to_string(bands) + " wavelengths, got " +
                                             std::to_string(wavelengths.size()));
    require(std::isfinite(fill), "fill value must be finite");
    return SpectralCube(height, width, std::move(wavelengths),
                        std::vector<double>(height * width * std::max<std::size_t>(bands, 1), fill));
}

/// Copy of band b as a plane.
inline Plane slice_band(const SpectralCube& cube, std::size_t b)
{
    require(b < cube.bands(), "band index " + std::to_string(b) + " out of range [0," +
                                  std::to_string(cube.bands()) + ")");
    Plane p(cube.height(), cube.width());
    auto src = cube.band(b);
    std::copy(src.begin(), src.end(), p.data.begin());
    return p;
}

inline TriImage assemble_tri_image(const Plane& p1, const Plane& p2, const Plane& p3)
{
    require(p1.height == p2.height && p1.height == p3.height && p1.width == p2.width && p1.width == p3.width,
            "tri-image planes must share dimensions");
    TriImage img(p1.height, p1.width);
    const Plane* planes[3] = {&p1, &p2, &p3};
    for (std::size_t c = 0; c < 3; ++c) std::copy(planes[c]->data.begin(), planes[c]->data.end(), img.channel(c).begin());
    return img;
}

/// Euclidean inner product over flat payloads.
inline double dot(std::span<const double> a, std::span<const double> b)
{
    require(a.size() == b.size(), "inner product of mismatched lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

} // namespace diffsci
