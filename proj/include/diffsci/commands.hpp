#pragma once

// Command layer behind the diffsci CLI. Every command is a function of
// (files, RunConfig); output files are byte-identical for identical inputs.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "diffsci/config.hpp"
#include "diffsci/diffsci_solver.hpp"
#include "diffsci/external_prior.hpp"
#include "diffsci/io.hpp"
#include "diffsci/metrics.hpp"
#include "diffsci/synthetic.hpp"

namespace diffsci {

// ---- trace and report serialization ---------------------------------------

inline constexpr const char* kY1Convention =
    "y1 starts at Phi x_tilde on the first step, so step 1 uses y directly; afterwards y1 += y - Phi x_tilde";

struct TraceHeader {
    std::string method;
    std::string y1_convention;
    double scale = 1.0;
    bool accelerate = true;
    std::string plan;
    bool operator==(const TraceHeader&) const = default;
};

struct TraceFile {
    TraceHeader header;
    std::vector<TraceRecord> records;
};

inline std::string encode_trace(const TraceHeader& h, const std::vector<TraceRecord>& records)
{
    using nlohmann::json;
    std::string out = json{{"header", {{"method", h.method},
                                       {"y1Convention", h.y1_convention},
                                       {"scale", h.scale},
                                       {"accelerate", h.accelerate},
                                       {"plan", h.plan}}}}
                          .dump() +
                      "\n";
    for (const auto& r : records) {
        json j{{"step", r.step}, {"t", r.t}, {"rho", r.rho}, {"residual", r.residual}};
        if (r.psnr) j["psnr"] = *r.psnr;
        out += j.dump() + "\n";
    }
    return out;
}

inline TraceFile decode_trace(const std::string& text)
{
    using nlohmann::json;
    TraceFile tf;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            if (!have_header) {
                const auto& h = j.at("header");
                tf.header.method = h.at("method").get<std::string>();
                tf.header.y1_convention = h.at("y1Convention").get<std::string>();
                tf.header.scale = h.at("scale").get<double>();
                tf.header.accelerate = h.at("accelerate").get<bool>();
                tf.header.plan = h.at("plan").get<std::string>();
                have_header = true;
                continue;
            }
            TraceRecord r;
            r.step = j.at("step").get<int>();
            r.t = j.at("t").get<int>();
            r.rho = j.at("rho").get<double>();
            r.residual = j.at("residual").get<double>();
            if (j.contains("psnr")) r.psnr = j.at("psnr").get<double>();
            tf.records.push_back(r);
        } catch (const json::exception& e) {
            fail(ErrorKind::Io, "trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header) fail(ErrorKind::Io, "trace has no header line");
    return tf;
}

inline nlohmann::json to_json(const EvalReport& r)
{
    nlohmann::json j{{"perBandPsnr", r.per_band_psnr},
                     {"meanPsnr", r.mean_psnr},
                     {"averaging", "arithmetic mean of per-band dB values"}};
    j["meanSsim"] = r.mean_ssim ? nlohmann::json(*r.mean_ssim) : nlohmann::json(nullptr);
    j["spectralCorrelation"] =
        r.spectral_correlation ? nlohmann::json(*r.spectral_correlation) : nlohmann::json(nullptr);
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j)
{
    EvalReport r;
    try {
        r.per_band_psnr = j.at("perBandPsnr").get<std::vector<double>>();
        r.mean_psnr = j.at("meanPsnr").get<double>();
        if (!j.at("meanSsim").is_null()) r.mean_ssim = j.at("meanSsim").get<double>();
        if (!j.at("spectralCorrelation").is_null()) r.spectral_correlation = j.at("spectralCorrelation").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Io, std::string("malformed report: ") + e.what());
    }
    return r;
}

namespace detail {

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text)
{
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
    out << text;
    if (!out) fail(ErrorKind::Io, "write to '" + path + "' failed");
}

inline void need_path(const std::string& p, const char* key)
{
    if (p.empty()) fail(ErrorKind::Config, std::string("missing path: ") + key);
}

inline std::string fmt(double v, int precision = 2)
{
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

} // namespace detail

// ---- scene setup ------------------------------------------------------------

/// Everything a reconstruction needs, resolved from files and config.
struct Problem {
    CassiOperator op;
    Measurement y;
    std::optional<SpectralCube> reference;
};

inline std::vector<double> resolve_wavelengths(const RunConfig& cfg, std::size_t bands,
                                               const std::optional<SpectralCube>& reference)
{
    if (cfg.wavelengths) {
        if (cfg.wavelengths->size() != bands)
            fail(ErrorKind::Config, "operator.wavelengths has " + std::to_string(cfg.wavelengths->size()) +
                                        " entries for " + std::to_string(bands) + " bands");
        return *cfg.wavelengths;
    }
    if (reference && reference->bands() == bands) return reference->wavelengths();
    return evenly_spaced_wavelengths(bands, cfg.wavelength_first, cfg.wavelength_last);
}

/// Mask for a cube of the given size: operator.maskFile if set, else a seeded random mask.
inline CodedMask resolve_mask(const RunConfig& cfg, std::size_t height, std::size_t width)
{
    if (!cfg.mask_file.empty()) {
        CodedMask m = io::read_mask(cfg.mask_file);
        if (m.height() != height || m.width() != width)
            fail(ErrorKind::Config, "mask file '" + cfg.mask_file + "' is " + std::to_string(m.height()) + "x" +
                                        std::to_string(m.width()) + ", cube is " + std::to_string(height) + "x" +
                                        std::to_string(width));
        return m;
    }
    return random_mask(height, width, cfg.mask_seed, cfg.mask_density);
}

/// Number of bands a W' x d measurement implies for a mask of width W.
inline std::size_t infer_bands(std::size_t meas_width, std::size_t mask_width, std::size_t shift)
{
    if (meas_width < mask_width || (meas_width - mask_width) % shift != 0)
        fail(ErrorKind::Config, "measurement width " + std::to_string(meas_width) + " is not W + d(B-1) for W=" +
                                    std::to_string(mask_width) + ", d=" + std::to_string(shift));
    return (meas_width - mask_width) / shift + 1;
}

inline Problem load_problem(const RunConfig& cfg)
{
    detail::need_path(cfg.measurement_path, "paths.measurement");
    Measurement y = io::read_measurement(cfg.measurement_path);
    std::optional<SpectralCube> reference;
    if (!cfg.reference_path.empty()) reference = io::read_cube(cfg.reference_path);

    std::optional<CodedMask> mask;
    if (!cfg.mask_file.empty())
        mask = io::read_mask(cfg.mask_file);
    else if (!cfg.mask_path.empty())
        mask = io::read_mask(cfg.mask_path);

    std::size_t bands = 0;
    if (mask && y.shift > 0) {
        bands = infer_bands(y.width, mask->width(), y.shift);
        if (cfg.bands && *cfg.bands != bands)
            fail(ErrorKind::Config, "operator.bands=" + std::to_string(*cfg.bands) + " but the measurement implies " +
                                        std::to_string(bands));
    } else if (cfg.bands) {
        bands = *cfg.bands;
    } else if (reference) {
        bands = reference->bands();
    } else {
        fail(ErrorKind::Config, "cannot infer the band count: set operator.bands");
    }
    if (bands == 0) fail(ErrorKind::Config, "operator.bands must be positive");

    const std::size_t width = y.width - y.shift * (bands - 1);
    if (y.width < y.shift * (bands - 1) || width == 0)
        fail(ErrorKind::Config, "measurement too narrow for " + std::to_string(bands) + " bands");
    if (!mask) mask = random_mask(y.height, width, cfg.mask_seed, cfg.mask_density);
    if (mask->height() != y.height || mask->width() != width)
        fail(ErrorKind::Config, "mask is " + std::to_string(mask->height()) + "x" + std::to_string(mask->width()) +
                                    ", measurement implies " + std::to_string(y.height) + "x" + std::to_string(width));

    CassiOperator op(std::move(*mask), y.shift, resolve_wavelengths(cfg, bands, reference));
    if (reference) op.check_cube(*reference);
    return Problem{std::move(op), std::move(y), std::move(reference)};
}

/// Builds the configured prior. The oracle needs the reference cube.
inline std::unique_ptr<ScorePrior> make_prior(const RunConfig& cfg, const CassiOperator& op,
                                              const std::optional<SpectralCube>& reference)
{
    if (cfg.prior_kind == "identity") return std::make_unique<IdentityPrior>();
    if (cfg.prior_kind == "gaussianShrink") {
        if (!(cfg.prior_strength > 0.0 && cfg.prior_strength <= 1.0))
            fail(ErrorKind::Config, "prior.strength must lie in (0, 1]");
        return std::make_unique<GaussianShrinkPrior>(cfg.prior_strength);
    }
    if (cfg.prior_kind == "oracle") {
        if (!reference) fail(ErrorKind::Config, "the oracle prior needs paths.reference");
        const BandPlan plan =
            cfg.method == "pnp" ? make_sliding_plan(op.bands()) : cfg.solver.plan.build(op.wavelengths());
        return std::make_unique<CubeOraclePrior>(*reference, plan);
    }
    if (cfg.prior_kind == "external") {
        if (cfg.endpoint.empty()) fail(ErrorKind::Config, "the external prior needs prior.endpoint");
        return std::make_unique<ExternalPrior>(cfg.endpoint, cfg.schedule(), cfg.max_concurrent, cfg.timeout_ms);
    }
    fail(ErrorKind::Config, "unknown prior kind '" + cfg.prior_kind + "'");
}

inline SolverResult solve(const RunConfig& cfg, const Problem& p, const ScorePrior& prior)
{
    const DiffusionSchedule sched = cfg.schedule();
    const SpectralCube* ref = p.reference ? &*p.reference : nullptr;
    if (cfg.method == "pnp")
        return run_pnp_baseline(cfg.solver, sched, p.op, p.y, prior, cfg.baseline_iterations, {}, ref);
    return run_diffsci(cfg.solver, sched, p.op, p.y, prior, ref);
}

inline TraceHeader trace_header(const RunConfig& cfg, double scale)
{
    return TraceHeader{cfg.method, kY1Convention, scale, cfg.solver.accelerate,
                       cfg.method == "pnp" ? "sliding" : to_string(cfg.solver.plan.kind)};
}

// ---- commands -----------------------------------------------------------------

/// Writes a smooth synthetic cube to paths.cube.
inline SpectralCube cmd_synth(const RunConfig& cfg, const SceneSpec& spec, std::uint64_t seed, std::ostream& out)
{
    detail::need_path(cfg.cube_path, "paths.cube");
    SpectralCube cube = smooth_scene(spec, seed);
    io::write_cube(cube, cfg.cube_path);
    out << "wrote " << cfg.cube_path << " (" << cube.height() << "x" << cube.width() << "x" << cube.bands() << ")\n";
    return cube;
}

/// Reads paths.cube, writes the measurement (paths.measurement) and the mask used (paths.mask).
inline Measurement cmd_simulate(const RunConfig& cfg, std::ostream& out)
{
    detail::need_path(cfg.cube_path, "paths.cube");
    detail::need_path(cfg.measurement_path, "paths.measurement");
    const SpectralCube x = io::read_cube(cfg.cube_path);
    if (cfg.bands && *cfg.bands != x.bands())
        fail(ErrorKind::Config, "operator.bands=" + std::to_string(*cfg.bands) + " but the cube has " +
                                    std::to_string(x.bands()));
    if (!(cfg.sim_sigma >= 0.0)) fail(ErrorKind::Config, "simulate.sigmaN must be non-negative");
    CassiOperator op(resolve_mask(cfg, x.height(), x.width()), cfg.shift, x.wavelengths());
    const Measurement y = op.simulate(x, cfg.sim_sigma, cfg.noise_seed);
    io::write_measurement(y, cfg.measurement_path);
    if (!cfg.mask_path.empty()) io::write_mask(op.mask(), cfg.mask_path);
    out << "wrote " << cfg.measurement_path << " (" << y.height << "x" << y.width << ", d=" << y.shift
        << ", sigma_n=" << y.noise_sigma << ")\n";
    return y;
}

/// Reconstructs paths.measurement into paths.output; writes the trace to paths.trace when set.
inline SolverResult cmd_reconstruct(const RunConfig& cfg, std::ostream& out)
{
    detail::need_path(cfg.output_path, "paths.output");
    const Problem p = load_problem(cfg);
    const auto prior = make_prior(cfg, p.op, p.reference);
    SolverResult r = solve(cfg, p, *prior);
    io::write_cube(r.cube, cfg.output_path);
    if (!cfg.trace_path.empty()) detail::write_text(cfg.trace_path, encode_trace(trace_header(cfg, r.scale), r.trace));
    out << "wrote " << cfg.output_path << " after " << r.trace.size() << " steps";
    if (!r.trace.empty()) {
        out << ", final residual " << r.trace.back().residual;
        if (r.trace.back().psnr) out << ", PSNR " << detail::fmt(*r.trace.back().psnr) << " dB";
    }
    out << "\n";
    return r;
}

/// Compares paths.output against paths.reference; prints the report and writes it to paths.report when set.
inline EvalReport cmd_evaluate(const RunConfig& cfg, std::ostream& out)
{
    detail::need_path(cfg.output_path, "paths.output");
    detail::need_path(cfg.reference_path, "paths.reference");
    const SpectralCube recon = io::read_cube(cfg.output_path);
    const SpectralCube ref = io::read_cube(cfg.reference_path);
    if (!recon.same_shape(ref))
        fail(ErrorKind::Config, "reconstruction is " + diffsci::detail::dims(recon.height(), recon.width(), recon.bands()) +
                                    ", reference is " + diffsci::detail::dims(ref.height(), ref.width(), ref.bands()));
    const EvalReport rep = evaluate(recon, ref, cfg.solver.peak, cfg.region);
    const std::string text = to_json(rep).dump(2) + "\n";
    out << text;
    if (!cfg.report_path.empty()) detail::write_text(cfg.report_path, text);
    return rep;
}

/// Summarizes a trace file as a table.
inline TraceFile cmd_report(const std::string& trace_path, std::ostream& out)
{
    detail::need_path(trace_path, "paths.trace");
    TraceFile tf = decode_trace(detail::read_text(trace_path));
    out << "method " << tf.header.method << ", plan " << tf.header.plan << ", accelerate "
        << (tf.header.accelerate ? "on" : "off") << ", scale " << tf.header.scale << "\n";
    out << "# " << tf.header.y1_convention << "\n";
    out << std::setw(6) << "step" << std::setw(7) << "t" << std::setw(14) << "rho" << std::setw(14) << "residual"
        << std::setw(10) << "psnr" << "\n";
    for (const auto& r : tf.records) {
        out << std::setw(6) << r.step << std::setw(7) << r.t << std::setw(14) << std::setprecision(6) << r.rho
            << std::setw(14) << r.residual << std::setw(10) << (r.psnr ? detail::fmt(*r.psnr) : std::string("-"))
            << "\n";
    }
    return tf;
}

// ---- ablation -------------------------------------------------------------------

struct AblationRow {
    std::string value;
    std::optional<double> mean_psnr;
    std::optional<double> mean_ssim;
    std::optional<double> final_residual;
    std::vector<double> residual_curve;  // averaged over scenes, per step
    double seconds = 0.0;
    std::string error;
};

inline const std::vector<std::string>& ablation_axes()
{
    static const std::vector<std::string> axes{"tStart", "steps", "lambda", "zeta", "sc", "planKind", "accelerate"};
    return axes;
}

/// Returns a copy of cfg with one axis set from its textual value.
inline RunConfig with_axis(RunConfig cfg, const std::string& axis, const std::string& value)
{
    auto number = [&] {
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            fail(ErrorKind::Config, "ablation value '" + value + "' for axis " + axis + " is not a number");
        }
    };
    if (axis == "tStart") cfg.solver.t_start = static_cast<int>(number());
    else if (axis == "steps") cfg.solver.steps = static_cast<int>(number());
    else if (axis == "lambda") cfg.solver.lambda = number();
    else if (axis == "zeta") cfg.solver.zeta = number();
    else if (axis == "sc") cfg.solver.guidance_scale = number();
    else if (axis == "planKind") cfg.solver.plan.kind = plan_kind_from_string(value);
    else if (axis == "accelerate") {
        if (value == "on" || value == "true" || value == "1") cfg.solver.accelerate = true;
        else if (value == "off" || value == "false" || value == "0") cfg.solver.accelerate = false;
        else fail(ErrorKind::Config, "accelerate value must be on/off, got '" + value + "'");
    } else {
        fail(ErrorKind::Config, "unknown ablation axis '" + axis +
                                    "' (expected tStart, steps, lambda, zeta, sc, planKind or accelerate)");
    }
    return cfg;
}

/// Runs the sweep over every scene (each needs a reference). A failing cell
/// records its error and the sweep continues.
inline std::vector<AblationRow> ablate(const RunConfig& cfg, const std::string& axis,
                                       const std::vector<std::string>& values, const std::vector<Problem>& scenes,
                                       const ScorePrior* shared_prior = nullptr)
{
    if (std::find(ablation_axes().begin(), ablation_axes().end(), axis) == ablation_axes().end())
        with_axis(cfg, axis, "");  // throws the axis error
    if (values.empty()) fail(ErrorKind::Config, "ablation needs at least one value");
    if (scenes.empty()) fail(ErrorKind::Config, "ablation needs at least one scene");
    for (const auto& s : scenes)
        if (!s.reference) fail(ErrorKind::Config, "ablation scenes need a reference cube");

    std::vector<AblationRow> rows;
    for (const auto& v : values) {
        AblationRow row;
        row.value = v;
        const auto start = std::chrono::steady_clock::now();
        try {
            const RunConfig c = with_axis(cfg, axis, v);
            double psnr_sum = 0.0, ssim_sum = 0.0, res_sum = 0.0;
            bool have_ssim = true;
            for (const auto& s : scenes) {
                std::unique_ptr<ScorePrior> own;
                if (!shared_prior) own = make_prior(c, s.op, s.reference);
                const SolverResult r = solve(c, s, shared_prior ? *shared_prior : *own);
                const EvalReport rep = evaluate(r.cube, *s.reference, c.solver.peak);
                psnr_sum += rep.mean_psnr;
                if (rep.mean_ssim) ssim_sum += *rep.mean_ssim;
                else have_ssim = false;
                if (!r.trace.empty()) res_sum += r.trace.back().residual;
                if (row.residual_curve.size() < r.trace.size()) row.residual_curve.resize(r.trace.size(), 0.0);
                for (std::size_t k = 0; k < r.trace.size(); ++k)
                    row.residual_curve[k] += r.trace[k].residual / double(scenes.size());
            }
            const double n = double(scenes.size());
            row.mean_psnr = psnr_sum / n;
            if (have_ssim) row.mean_ssim = ssim_sum / n;
            row.final_residual = res_sum / n;
        } catch (const Error& e) {
            row.error = e.what();
            row.residual_curve.clear();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string format_ablation(const std::string& axis, const std::vector<AblationRow>& rows)
{
    std::ostringstream s;
    s << std::left << std::setw(20) << axis << std::right << std::setw(10) << "PSNR" << std::setw(9) << "SSIM"
      << std::setw(14) << "residual" << std::setw(10) << "time_s" << "\n";
    for (const auto& r : rows) {
        s << std::left << std::setw(20) << r.value << std::right;
        if (!r.error.empty()) {
            s << "  error: " << r.error << "\n";
            continue;
        }
        s << std::setw(10) << detail::fmt(*r.mean_psnr) << std::setw(9)
          << (r.mean_ssim ? detail::fmt(*r.mean_ssim, 4) : std::string("-")) << std::setw(14)
          << detail::fmt(*r.final_residual, 6) << std::setw(10) << detail::fmt(r.seconds, 3) << "\n";
    }
    return s.str();
}

inline nlohmann::json ablation_json(const std::string& axis, const std::vector<AblationRow>& rows)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j{{"value", r.value}, {"seconds", r.seconds}};
        if (r.error.empty()) {
            j["meanPsnr"] = *r.mean_psnr;
            j["meanSsim"] = r.mean_ssim ? nlohmann::json(*r.mean_ssim) : nlohmann::json(nullptr);
            j["finalResidual"] = *r.final_residual;
            j["residualCurve"] = r.residual_curve;
        } else {
            j["error"] = r.error;
        }
        arr.push_back(j);
    }
    return nlohmann::json{{"axis", axis}, {"rows", arr}};
}

/// Sweeps one axis on the configured measurement/reference pair; prints the
/// table and writes JSON rows to paths.report when set.
inline std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const std::string& axis,
                                           const std::vector<std::string>& values, std::ostream& out)
{
    if (cfg.reference_path.empty()) fail(ErrorKind::Config, "ablate needs paths.reference to score each cell");
    std::vector<Problem> scenes;
    scenes.push_back(load_problem(cfg));
    // An external prior holds live connections; open it once for the sweep.
    std::unique_ptr<ScorePrior> shared;
    if (cfg.prior_kind == "external") shared = make_prior(cfg, scenes[0].op, scenes[0].reference);
    const auto rows = ablate(cfg, axis, values, scenes, shared.get());
    out << format_ablation(axis, rows);
    if (!cfg.report_path.empty()) detail::write_text(cfg.report_path, ablation_json(axis, rows).dump(2) + "\n");
    return rows;
}

} // namespace diffsci
