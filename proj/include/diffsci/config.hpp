#pragma once

// Run configuration as a JSON document. Unknown keys are rejected. Band
// numbers in the document (plan anchors) are 1-based, as a user counts them;
// they are converted to 0-based indices on load.
//
// {
//   "operator": {"shift": 2, "maskSeed": 0, "maskDensity": 0.5, "maskFile": "",
//                "bands": null, "wavelengths": null, "wavelengthRange": [450, 720]},
//   "schedule": {"T": 1000, "betaStart": 1e-4, "betaEnd": 0.02},
//   "solver":   {"method": "diffsci", "lambda": 15, "zeta": 1, "guidanceScale": 1,
//                "tStart": 600, "steps": 100, "seed": 0, "sigmaN": null,
//                "accelerate": true, "warmStart": false, "normalize": true,
//                "threads": 1, "baselineIterations": 10, "baselineSigmaBar": 1},
//   "plan":     {"kind": "wavelengthMatched", "anchors": [21, 28], "cutoffNm": 500},
//   "prior":    {"kind": "gaussianShrink", "strength": 0.5, "endpoint": "",
//                "maxConcurrent": 1, "timeoutMs": 60000},
//   "simulate": {"sigmaN": 0, "noiseSeed": 0},
//   "paths":    {"cube": "", "mask": "", "measurement": "", "output": "",
//                "trace": "", "reference": "", "report": ""},
//   "metrics":  {"peak": 1, "region": null}
// }

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "diffsci/diffsci_solver.hpp"
#include "diffsci/error.hpp"
#include "diffsci/metrics.hpp"

namespace diffsci {

struct RunConfig {
    // operator
    std::size_t shift = 2;
    std::uint64_t mask_seed = 0;
    double mask_density = 0.5;
    std::string mask_file;
    std::optional<std::size_t> bands;
    std::optional<std::vector<double>> wavelengths;
    double wavelength_first = 450.0, wavelength_last = 720.0;

    // schedule
    int total_steps = DiffusionSchedule::default_steps;
    double beta_start = DiffusionSchedule::default_beta_start;
    double beta_end = DiffusionSchedule::default_beta_end;

    SolverConfig solver;
    std::string method = "diffsci";  // or "pnp"
    int baseline_iterations = 10;

    // prior
    std::string prior_kind = "gaussianShrink";  // identity | gaussianShrink | oracle | external
    double prior_strength = 0.5;
    std::string endpoint;
    std::size_t max_concurrent = 1;
    int timeout_ms = 60000;

    // simulate
    double sim_sigma = 0.0;
    std::uint64_t noise_seed = 0;

    // paths
    std::string cube_path, mask_path, measurement_path, output_path, trace_path, reference_path, report_path;

    // metrics (peak lives in solver.peak)
    std::optional<Region> region;

    DiffusionSchedule schedule() const { return DiffusionSchedule::linear(total_steps, beta_start, beta_end); }

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void cfg_fail(const std::string& what) { fail(ErrorKind::Config, what); }

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known)
{
    if (!obj.is_object()) cfg_fail("config section '" + where + "' must be an object");
    std::set<std::string> k(known.begin(), known.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!k.count(it.key())) cfg_fail("unknown config key '" + where + (where.empty() ? "" : ".") + it.key() + "'");
}

template <typename T>
void get(const json& obj, const char* key, T& out, const std::string& where)
{
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        cfg_fail("config key '" + where + "." + key + "': " + e.what());
    }
}

template <typename T>
void get_opt(const json& obj, const char* key, std::optional<T>& out, const std::string& where)
{
    if (!obj.contains(key)) return;
    if (obj.at(key).is_null()) {
        out.reset();
        return;
    }
    T v{};
    get(obj, key, v, where);
    out = v;
}

template <typename T>
json opt_json(const std::optional<T>& v)
{
    return v ? json(*v) : json(nullptr);
}

} // namespace detail

inline nlohmann::json to_json(const RunConfig& c)
{
    using nlohmann::json;
    json j;
    j["operator"] = {{"shift", c.shift},
                     {"maskSeed", c.mask_seed},
                     {"maskDensity", c.mask_density},
                     {"maskFile", c.mask_file},
                     {"bands", detail::opt_json(c.bands)},
                     {"wavelengths", detail::opt_json(c.wavelengths)},
                     {"wavelengthRange", {c.wavelength_first, c.wavelength_last}}};
    j["schedule"] = {{"T", c.total_steps}, {"betaStart", c.beta_start}, {"betaEnd", c.beta_end}};
    const SolverConfig& s = c.solver;
    j["solver"] = {{"method", c.method},
                   {"lambda", s.lambda},
                   {"zeta", s.zeta},
                   {"guidanceScale", s.guidance_scale},
                   {"tStart", s.t_start},
                   {"steps", s.steps},
                   {"seed", s.seed},
                   {"sigmaN", detail::opt_json(s.sigma_n)},
                   {"accelerate", s.accelerate},
                   {"warmStart", s.warm_start},
                   {"normalize", s.normalize},
                   {"threads", s.threads},
                   {"baselineIterations", c.baseline_iterations},
                   {"baselineSigmaBar", s.baseline_sigma_bar}};
    j["plan"] = {{"kind", to_string(s.plan.kind)},
                 {"anchors", {s.plan.anchor_a + 1, s.plan.anchor_b + 1}},
                 {"cutoffNm", s.plan.cutoff_nm}};
    j["prior"] = {{"kind", c.prior_kind},
                  {"strength", c.prior_strength},
                  {"endpoint", c.endpoint},
                  {"maxConcurrent", c.max_concurrent},
                  {"timeoutMs", c.timeout_ms}};
    j["simulate"] = {{"sigmaN", c.sim_sigma}, {"noiseSeed", c.noise_seed}};
    j["paths"] = {{"cube", c.cube_path},         {"mask", c.mask_path},     {"measurement", c.measurement_path},
                  {"output", c.output_path},     {"trace", c.trace_path},   {"reference", c.reference_path},
                  {"report", c.report_path}};
    json region = nullptr;
    if (c.region) region = {c.region->h0, c.region->w0, c.region->h1, c.region->w1};
    j["metrics"] = {{"peak", c.solver.peak}, {"region", region}};
    return j;
}

inline RunConfig config_from_json(const nlohmann::json& j)
{
    using detail::get;
    using detail::get_opt;
    RunConfig c;
    detail::reject_unknown(j, "", {"operator", "schedule", "solver", "plan", "prior", "simulate", "paths", "metrics"});

    if (j.contains("operator")) {
        const auto& o = j["operator"];
        detail::reject_unknown(o, "operator",
                               {"shift", "maskSeed", "maskDensity", "maskFile", "bands", "wavelengths",
                                "wavelengthRange"});
        get(o, "shift", c.shift, "operator");
        get(o, "maskSeed", c.mask_seed, "operator");
        get(o, "maskDensity", c.mask_density, "operator");
        get(o, "maskFile", c.mask_file, "operator");
        get_opt(o, "bands", c.bands, "operator");
        get_opt(o, "wavelengths", c.wavelengths, "operator");
        if (o.contains("wavelengthRange")) {
            std::vector<double> r;
            get(o, "wavelengthRange", r, "operator");
            if (r.size() != 2) detail::cfg_fail("operator.wavelengthRange needs [first, last]");
            c.wavelength_first = r[0];
            c.wavelength_last = r[1];
        }
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        detail::reject_unknown(s, "schedule", {"T", "betaStart", "betaEnd"});
        get(s, "T", c.total_steps, "schedule");
        get(s, "betaStart", c.beta_start, "schedule");
        get(s, "betaEnd", c.beta_end, "schedule");
    }
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        detail::reject_unknown(s, "solver",
                               {"method", "lambda", "zeta", "guidanceScale", "tStart", "steps", "seed", "sigmaN",
                                "accelerate", "warmStart", "normalize", "threads", "baselineIterations",
                                "baselineSigmaBar"});
        get(s, "method", c.method, "solver");
        get(s, "lambda", c.solver.lambda, "solver");
        get(s, "zeta", c.solver.zeta, "solver");
        get(s, "guidanceScale", c.solver.guidance_scale, "solver");
        get(s, "tStart", c.solver.t_start, "solver");
        get(s, "steps", c.solver.steps, "solver");
        get(s, "seed", c.solver.seed, "solver");
        get_opt(s, "sigmaN", c.solver.sigma_n, "solver");
        get(s, "accelerate", c.solver.accelerate, "solver");
        get(s, "warmStart", c.solver.warm_start, "solver");
        get(s, "normalize", c.solver.normalize, "solver");
        get(s, "threads", c.solver.threads, "solver");
        get(s, "baselineIterations", c.baseline_iterations, "solver");
        get(s, "baselineSigmaBar", c.solver.baseline_sigma_bar, "solver");
    }
    if (j.contains("plan")) {
        const auto& p = j["plan"];
        detail::reject_unknown(p, "plan", {"kind", "anchors", "cutoffNm"});
        std::string kind = to_string(c.solver.plan.kind);
        get(p, "kind", kind, "plan");
        c.solver.plan.kind = plan_kind_from_string(kind);
        if (p.contains("anchors")) {
            std::vector<std::size_t> a;
            get(p, "anchors", a, "plan");
            if (a.size() != 2 || a[0] < 1 || a[1] < 1) detail::cfg_fail("plan.anchors needs two 1-based band numbers");
            c.solver.plan.anchor_a = a[0] - 1;
            c.solver.plan.anchor_b = a[1] - 1;
        }
        get(p, "cutoffNm", c.solver.plan.cutoff_nm, "plan");
    }
    if (j.contains("prior")) {
        const auto& p = j["prior"];
        detail::reject_unknown(p, "prior", {"kind", "strength", "endpoint", "maxConcurrent", "timeoutMs"});
        get(p, "kind", c.prior_kind, "prior");
        get(p, "strength", c.prior_strength, "prior");
        get(p, "endpoint", c.endpoint, "prior");
        get(p, "maxConcurrent", c.max_concurrent, "prior");
        get(p, "timeoutMs", c.timeout_ms, "prior");
    }
    if (j.contains("simulate")) {
        const auto& s = j["simulate"];
        detail::reject_unknown(s, "simulate", {"sigmaN", "noiseSeed"});
        get(s, "sigmaN", c.sim_sigma, "simulate");
        get(s, "noiseSeed", c.noise_seed, "simulate");
    }
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        detail::reject_unknown(p, "paths", {"cube", "mask", "measurement", "output", "trace", "reference", "report"});
        get(p, "cube", c.cube_path, "paths");
        get(p, "mask", c.mask_path, "paths");
        get(p, "measurement", c.measurement_path, "paths");
        get(p, "output", c.output_path, "paths");
        get(p, "trace", c.trace_path, "paths");
        get(p, "reference", c.reference_path, "paths");
        get(p, "report", c.report_path, "paths");
    }
    if (j.contains("metrics")) {
        const auto& m = j["metrics"];
        detail::reject_unknown(m, "metrics", {"peak", "region"});
        get(m, "peak", c.solver.peak, "metrics");
        if (m.contains("region") && !m["region"].is_null()) {
            std::vector<std::size_t> r;
            get(m, "region", r, "metrics");
            if (r.size() != 4) detail::cfg_fail("metrics.region needs [h0, w0, h1, w1]");
            c.region = Region{r[0], r[1], r[2], r[3]};
        }
    }

    if (c.method != "diffsci" && c.method != "pnp") detail::cfg_fail("solver.method must be 'diffsci' or 'pnp'");
    if (c.prior_kind != "identity" && c.prior_kind != "gaussianShrink" && c.prior_kind != "oracle" &&
        c.prior_kind != "external")
        detail::cfg_fail("prior.kind must be identity, gaussianShrink, oracle or external");
    return c;
}

inline RunConfig parse_config(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        detail::cfg_fail(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline std::string serialize_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

inline RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

} // namespace diffsci
