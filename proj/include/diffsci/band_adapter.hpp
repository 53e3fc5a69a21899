#pragma once

// Maps a B-band cube onto per-band three-channel inputs for an RGB-style
// prior and stitches the designated output channels back into a cube.

#include <array>
#include <string>
#include <vector>

#include "diffsci/error.hpp"
#include "diffsci/spectral_core.hpp"

namespace diffsci {

enum class PlanKind { Sliding, WavelengthMatched, Partitioned };

inline const char* to_string(PlanKind k)
{
    switch (k) {
    case PlanKind::Sliding: return "sliding";
    case PlanKind::WavelengthMatched: return "wavelengthMatched";
    case PlanKind::Partitioned: return "partitioned";
    }
    return "?";
}

inline PlanKind plan_kind_from_string(const std::string& s)
{
    if (s == "sliding") return PlanKind::Sliding;
    if (s == "wavelengthMatched") return PlanKind::WavelengthMatched;
    if (s == "partitioned") return PlanKind::Partitioned;
    fail(ErrorKind::Config, "unknown plan kind '" + s + "' (expected sliding, wavelengthMatched or partitioned)");
}

/// For each band i, the (0-based) source bands of the three channels and the
/// channel that carries band i's reconstruction.
struct BandGroup {
    std::array<std::size_t, 3> sources{};
    std::size_t designated = 1;
};

class BandPlan {
public:
    BandPlan() = default;
    explicit BandPlan(std::vector<BandGroup> groups) : groups_(std::move(groups))
    {
        const std::size_t B = groups_.size();
        require(B >= 1, "band plan needs at least one band");
        for (std::size_t i = 0; i < B; ++i) {
            const auto& g = groups_[i];
            require(g.designated < 3, "designated channel out of range for band " + std::to_string(i));
            for (auto s : g.sources) require(s < B, "plan source index out of range for band " + std::to_string(i));
            require(g.sources[g.designated] == i,
                    "designated channel of band " + std::to_string(i) + " does not read band " + std::to_string(i));
        }
    }

    std::size_t bands() const { return groups_.size(); }
    const BandGroup& group(std::size_t i) const
    {
        require(i < groups_.size(), "band " + std::to_string(i) + " outside plan");
        return groups_[i];
    }
    const std::vector<BandGroup>& groups() const { return groups_; }

private:
    std::vector<BandGroup> groups_;
};

namespace detail {

inline BandGroup sliding_group(std::size_t i, std::size_t B)
{
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 < B ? i + 1 : B - 1;
    return {{lo, i, hi}, 1};
}

} // namespace detail

/// Band i -> (i-1, i, i+1), edges repeat the boundary band.
inline BandPlan make_sliding_plan(std::size_t bands)
{
    require(bands >= 1, "band count must be positive");
    std::vector<BandGroup> g(bands);
    for (std::size_t i = 0; i < bands; ++i) g[i] = detail::sliding_group(i, bands);
    return BandPlan(std::move(g));
}

/// Bands with wavelength below `cutoff_nm` are paired with two fixed anchor
/// bands as (i, anchor_a, anchor_b) and read back from channel 0; all other
/// bands use the sliding triple. Anchors are 0-based.
inline BandPlan make_wavelength_matched_plan(std::size_t bands, std::size_t anchor_a, std::size_t anchor_b,
                                             double cutoff_nm, const std::vector<double>& wavelengths)
{
    require(bands >= 1, "band count must be positive");
    require(anchor_a < bands && anchor_b < bands,
            "anchor bands (" + std::to_string(anchor_a) + "," + std::to_string(anchor_b) + ") outside [0," +
                std::to_string(bands) + ")");
    require(wavelengths.size() == bands, "wavelength-matched plan needs one wavelength per band");
    std::vector<BandGroup> g(bands);
    for (std::size_t i = 0; i < bands; ++i) {
        if (wavelengths[i] < cutoff_nm)
            g[i] = {{i, anchor_a, anchor_b}, 0};
        else
            g[i] = detail::sliding_group(i, bands);
    }
    return BandPlan(std::move(g));
}

/// Non-overlapping triples [3k, 3k+1, 3k+2]; the tail triple repeats the last band.
inline BandPlan make_partitioned_plan(std::size_t bands)
{
    require(bands >= 1, "band count must be positive");
    std::vector<BandGroup> g(bands);
    for (std::size_t i = 0; i < bands; ++i) {
        const std::size_t start = (i / 3) * 3;
        BandGroup grp;
        for (std::size_t c = 0; c < 3; ++c) grp.sources[c] = std::min(start + c, bands - 1);
        grp.designated = i - start;
        g[i] = grp;
    }
    return BandPlan(std::move(g));
}

inline TriImage extract(const BandPlan& plan, const SpectralCube& cube, std::size_t band)
{
    require(plan.bands() == cube.bands(), "plan covers " + std::to_string(plan.bands()) + " bands, cube has " +
                                              std::to_string(cube.bands()));
    const auto& g = plan.group(band);
    TriImage img(cube.height(), cube.width());
    for (std::size_t c = 0; c < 3; ++c) {
        auto src = cube.band(g.sources[c]);
        std::copy(src.begin(), src.end(), img.channel(c).begin());
    }
    return img;
}

/// Band i of the result is the designated channel of outputs[i]; overlapping
/// triples are not averaged.
inline SpectralCube recombine(const BandPlan& plan, const std::vector<TriImage>& outputs,
                              std::vector<double> wavelengths)
{
    require(outputs.size() == plan.bands(), "recombine expects " + std::to_string(plan.bands()) + " outputs, got " +
                                                std::to_string(outputs.size()));
    require(wavelengths.size() == plan.bands(), "recombine needs one wavelength per band");
    const std::size_t H = outputs.front().height(), W = outputs.front().width();
    std::vector<double> data(H * W * plan.bands());
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        require(outputs[i].height() == H && outputs[i].width() == W,
                "output " + std::to_string(i) + " has inconsistent dimensions");
        auto ch = outputs[i].channel(plan.group(i).designated);
        std::copy(ch.begin(), ch.end(), data.begin() + static_cast<std::ptrdiff_t>(i * H * W));
    }
    return SpectralCube(H, W, std::move(wavelengths), std::move(data));
}

} // namespace diffsci
