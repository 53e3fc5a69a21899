#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <sys/wait.h>

#include "diffsci/commands.hpp"
#include "diffsci/random.hpp"

using namespace diffsci;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir = fs::temp_directory_path() /
              ("diffsci-io-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "-" +
               std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }

    /// A 32x32x4 scene simulated into files, config ready for reconstruction.
    RunConfig scene_config(std::size_t bands = 4, double sigma = 0.0)
    {
        RunConfig c;
        c.cube_path = path("truth.msic");
        c.measurement_path = path("y.meas");
        c.mask_path = path("mask.mask");
        c.output_path = path("recon.msic");
        c.trace_path = path("trace.jsonl");
        c.reference_path = c.cube_path;
        c.sim_sigma = sigma;
        c.solver.steps = 20;
        c.solver.zeta = 0.0;
        c.solver.plan.kind = PlanKind::Sliding;
        std::ostringstream sink;
        cmd_synth(c, SceneSpec{32, 32, bands}, 1, sink);
        cmd_simulate(c, sink);
        return c;
    }

    fs::path dir;
};

std::vector<std::uint8_t> bytes(const std::string& p) { return io::detail::slurp(p); }

int run_cli(const std::string& args)
{
    const int status = std::system((std::string(DIFFSCI_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

using Io = TempDir;
using Cli = TempDir;

TEST_F(Io, CubeRoundTripAt32Bit)
{
    SpectralCube c = make_cube(5, 7, 3, {450.5, 500.25, 610.0}, 0.0);
    fill_gaussian(c.values(), 3);
    io::write_cube(c, path("c.msic"));
    const SpectralCube r = io::read_cube(path("c.msic"));
    ASSERT_TRUE(r.same_shape(c));
    for (std::size_t i = 0; i < c.values().size(); ++i) EXPECT_EQ(r.values()[i], double(float(c.values()[i])));
    EXPECT_EQ(r.wavelengths(), c.wavelengths());
    EXPECT_EQ(fs::file_size(path("c.msic")), 20u + 3 * 4 + 5 * 7 * 3 * 4);
    io::write_cube(r, path("d.msic"));
    EXPECT_EQ(bytes(path("c.msic")), bytes(path("d.msic")));
}

TEST_F(Io, TruncatedCubeNamesSizes)
{
    const SpectralCube c = make_cube(4, 4, 2, evenly_spaced_wavelengths(2), 0.5);
    auto b = io::encode_cube(c);
    const std::size_t full = b.size();
    b.resize(full - 6);
    io::detail::dump(path("t.msic"), b);
    try {
        io::read_cube(path("t.msic"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
        EXPECT_NE(msg.find(std::to_string(full)), std::string::npos) << msg;
        EXPECT_NE(msg.find(std::to_string(full - 6)), std::string::npos) << msg;
    }
    b = io::encode_cube(c);
    b.push_back(0);
    EXPECT_THROW(io::decode_cube(b), Error);
    EXPECT_THROW(io::decode_cube(std::vector<std::uint8_t>(b.begin(), b.begin() + 10)), Error);
}

TEST_F(Io, WrongMagicAndVersion)
{
    auto b = io::encode_cube(make_cube(2, 2, 1, {500.0}, 0.0));
    b[0] = 'X';
    try {
        io::decode_cube(b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
    b[0] = 'M';
    b[4] = 2;
    EXPECT_THROW(io::decode_cube(b), Error);
    EXPECT_THROW(io::read_cube(path("missing.msic")), Error);
}

TEST_F(Io, DimensionOverflowIsRejected)
{
    wire::Writer w;
    w.magic(io::kCubeMagic);
    for (std::uint32_t v : {1u, 0xFFFFFFFFu, 0xFFFFFFFFu, 2u}) w.u32(v);
    EXPECT_THROW(io::decode_cube(w.take()), Error);
}

TEST_F(Io, MaskAndMeasurementRoundTrip)
{
    const CodedMask m = random_mask(6, 5, 2);
    io::write_mask(m, path("m.mask"));
    const CodedMask mr = io::read_mask(path("m.mask"));
    EXPECT_TRUE(std::equal(m.values().begin(), m.values().end(), mr.values().begin()));

    Measurement y(6, 9, 2, 0.05);
    fill_gaussian(y.data, 1);
    io::write_measurement(y, path("y.meas"));
    const Measurement yr = io::read_measurement(path("y.meas"));
    EXPECT_EQ(yr.shift, 2u);
    EXPECT_EQ(yr.noise_sigma, double(0.05f));
    for (std::size_t i = 0; i < y.data.size(); ++i) EXPECT_EQ(yr.data[i], double(float(y.data[i])));
    EXPECT_THROW(io::read_mask(path("y.meas")), Error);
}

TEST(Config, RoundTripDefaultsAndCustom)
{
    RunConfig c;
    EXPECT_EQ(parse_config(serialize_config(c)), c);
    c.shift = 1;
    c.bands = 6;
    c.wavelengths = std::vector<double>{400, 410, 420, 430, 440, 450.5};
    c.solver.sigma_n = 0.03;
    c.solver.plan = PlanSpec{PlanKind::Partitioned, 2, 5, 470.0};
    c.solver.threads = 4;
    c.solver.peak = 255;
    c.method = "pnp";
    c.prior_kind = "external";
    c.endpoint = "tcp:127.0.0.1:9000";
    c.region = Region{1, 2, 3, 4};
    c.output_path = "out/x.msic";
    c.beta_end = 0.015;
    const RunConfig back = parse_config(serialize_config(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(serialize_config(back), serialize_config(c));
}

TEST(Config, AnchorsAreOneBasedInTheDocument)
{
    const RunConfig c = parse_config(R"({"plan": {"anchors": [21, 28]}})");
    EXPECT_EQ(c.solver.plan.anchor_a, 20u);
    EXPECT_EQ(c.solver.plan.anchor_b, 27u);
    EXPECT_NE(serialize_config(c).find("21"), std::string::npos);
}

TEST(Config, UnknownKeysAndBadValuesAreConfigErrors)
{
    for (const char* doc : {R"({"solver": {"lamda": 3}})", R"({"extra": 1})", R"({"solver": {"steps": "many"}})",
                            R"({"plan": {"kind": "diagonal"}})", R"({"prior": {"kind": "neural"}})",
                            R"({"plan": {"anchors": [0, 3]}})", R"({"metrics": {"region": [1, 2]}})", "{not json",
                            R"({"solver": 5})"}) {
        try {
            parse_config(doc);
            FAIL() << doc;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Config) << doc;
        }
    }
}

TEST(Config, PartialDocumentKeepsDefaults)
{
    const RunConfig c = parse_config(R"({"solver": {"steps": 20}})");
    RunConfig d;
    d.solver.steps = 20;
    EXPECT_EQ(c, d);
}

TEST(Trace, RoundTrip)
{
    std::vector<TraceRecord> recs{{0, 600, 0.5, 1.25, 31.5}, {1, 300, 0.25, 0.5, std::nullopt}};
    const TraceHeader h{"diffsci", kY1Convention, 3.5, true, "sliding"};
    const TraceFile tf = decode_trace(encode_trace(h, recs));
    EXPECT_EQ(tf.header, h);
    ASSERT_EQ(tf.records.size(), 2u);
    EXPECT_EQ(tf.records[0].psnr, 31.5);
    EXPECT_FALSE(tf.records[1].psnr.has_value());
    EXPECT_EQ(tf.records[1].t, 300);
    EXPECT_THROW(decode_trace(""), Error);
    EXPECT_THROW(decode_trace("{\"header\": {}}\n"), Error);
}

TEST_F(Io, SimulateKaistGeometry)
{
    RunConfig c;
    c.cube_path = path("k.msic");
    c.measurement_path = path("k.meas");
    c.mask_path = path("k.mask");
    io::write_cube(make_cube(256, 256, 28, evenly_spaced_wavelengths(28), 0.25), c.cube_path);
    std::ostringstream out;
    const Measurement y = cmd_simulate(c, out);
    EXPECT_EQ(y.height, 256u);
    EXPECT_EQ(y.width, 310u);
    const Measurement r = io::read_measurement(c.measurement_path);
    EXPECT_EQ(r.width, 310u);
    EXPECT_EQ(r.shift, 2u);
}

TEST_F(Io, SimulateIsByteDeterministic)
{
    RunConfig c = scene_config(4, 0.02);
    const auto y1 = bytes(c.measurement_path), m1 = bytes(c.mask_path);
    std::ostringstream sink;
    cmd_simulate(c, sink);
    EXPECT_EQ(bytes(c.measurement_path), y1);
    EXPECT_EQ(bytes(c.mask_path), m1);
    EXPECT_EQ(io::read_measurement(c.measurement_path).noise_sigma, double(0.02f));
}

TEST_F(Io, SimulateMissingCube)
{
    RunConfig c;
    c.cube_path = path("nope.msic");
    c.measurement_path = path("y.meas");
    std::ostringstream sink;
    try {
        cmd_simulate(c, sink);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
    }
    c.cube_path.clear();
    EXPECT_THROW(cmd_simulate(c, sink), Error);
}

TEST_F(Io, ReconstructOracleSmokeAndDeterminism)
{
    RunConfig c = scene_config();
    c.prior_kind = "oracle";
    std::ostringstream sink;
    const SolverResult r = cmd_reconstruct(c, sink);
    ASSERT_TRUE(fs::exists(c.output_path));
    ASSERT_TRUE(fs::exists(c.trace_path));
    EXPECT_GE(mean_psnr(io::read_cube(c.output_path), io::read_cube(c.cube_path)), 60.0);
    const TraceFile tf = decode_trace(io::detail::slurp(c.trace_path).size() ? detail::read_text(c.trace_path) : "");
    EXPECT_EQ(tf.records.size(), 20u);
    EXPECT_EQ(tf.header.y1_convention, kY1Convention);
    EXPECT_EQ(tf.header.scale, r.scale);

    const auto out1 = bytes(c.output_path), tr1 = bytes(c.trace_path);
    cmd_reconstruct(c, sink);
    EXPECT_EQ(bytes(c.output_path), out1);
    EXPECT_EQ(bytes(c.trace_path), tr1);
}

TEST_F(Io, ReconstructInfersBandsFromMeasurementWidth)
{
    RunConfig c = scene_config(5);
    c.prior_kind = "identity";
    c.reference_path.clear();
    c.solver.steps = 3;
    std::ostringstream sink;
    cmd_reconstruct(c, sink);
    EXPECT_EQ(io::read_cube(c.output_path).bands(), 5u);
    c.bands = 4;
    EXPECT_THROW(cmd_reconstruct(c, sink), Error);
}

TEST_F(Io, ReconstructRegeneratesSeededMask)
{
    RunConfig c = scene_config(4);
    c.mask_path.clear();
    c.bands = 4;
    c.prior_kind = "oracle";
    std::ostringstream sink;
    cmd_reconstruct(c, sink);
    EXPECT_GE(mean_psnr(io::read_cube(c.output_path), io::read_cube(c.cube_path)), 60.0);
}

TEST_F(Io, ReconstructUnreachableExternalPrior)
{
    RunConfig c = scene_config();
    c.prior_kind = "external";
    c.endpoint = "unix:" + path("no-socket");
    std::ostringstream sink;
    try {
        cmd_reconstruct(c, sink);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ExternalPrior);
    }
    EXPECT_FALSE(fs::exists(c.output_path));
    EXPECT_FALSE(fs::exists(c.trace_path));
}

TEST_F(Io, ReconstructThroughExternalPrior)
{
    RunConfig c = scene_config();
    c.prior_kind = "external";
    c.endpoint = std::string("exec:") + FAKE_SCORE_SERVER + " gaussianShrink 0.5";
    c.max_concurrent = 2;
    c.solver.threads = 2;
    c.solver.steps = 5;
    std::ostringstream sink;
    const SolverResult ext = cmd_reconstruct(c, sink);
    c.prior_kind = "gaussianShrink";
    const SolverResult local = cmd_reconstruct(c, sink);
    // The wire is 32-bit, so the two runs agree closely but not bitwise.
    EXPECT_GE(mean_psnr(ext.cube, local.cube), 50.0);
}

TEST_F(Io, EvaluateSelfAndReportFile)
{
    RunConfig c = scene_config();
    c.output_path = c.cube_path;
    c.report_path = path("report.json");
    c.region = Region{4, 4, 20, 20};
    std::ostringstream out;
    const EvalReport r = cmd_evaluate(c, out);
    EXPECT_EQ(r.mean_psnr, kPsnrCap);
    EXPECT_EQ(*r.mean_ssim, 1.0);
    EXPECT_NEAR(*r.spectral_correlation, 1.0, 1e-12);
    const EvalReport back = report_from_json(nlohmann::json::parse(detail::read_text(c.report_path)));
    const EvalReport printed = report_from_json(nlohmann::json::parse(out.str()));
    EXPECT_EQ(back.per_band_psnr, printed.per_band_psnr);
    EXPECT_EQ(back.mean_psnr, printed.mean_psnr);
    EXPECT_EQ(back.mean_ssim, r.mean_ssim);
    EXPECT_EQ(back.spectral_correlation, r.spectral_correlation);
}

TEST_F(Io, EvaluateDimensionMismatch)
{
    RunConfig c = scene_config();
    io::write_cube(make_cube(32, 31, 4, evenly_spaced_wavelengths(4), 0.0), path("other.msic"));
    c.output_path = path("other.msic");
    std::ostringstream out;
    EXPECT_THROW(cmd_evaluate(c, out), Error);
}

TEST_F(Io, ReportCommandPrintsEveryStep)
{
    RunConfig c = scene_config();
    c.prior_kind = "oracle";
    std::ostringstream sink, out;
    cmd_reconstruct(c, sink);
    const TraceFile tf = cmd_report(c.trace_path, out);
    const std::string text = out.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3 + long(tf.records.size()));
    EXPECT_NE(text.find("y1 starts at"), std::string::npos);
}

TEST_F(Io, AblateStepsEmitsOneRowPerValue)
{
    RunConfig c = scene_config();
    c.report_path = path("ablate.json");
    std::ostringstream out;
    const auto rows = cmd_ablate(c, "steps", {"20", "100", "200"}, out);
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.error.empty()) << r.error;
        EXPECT_TRUE(r.mean_psnr.has_value());
        EXPECT_GE(r.seconds, 0.0);
    }
    EXPECT_EQ(rows[1].residual_curve.size(), 100u);
    const auto j = nlohmann::json::parse(detail::read_text(c.report_path));
    EXPECT_EQ(j["rows"].size(), 3u);
    const std::string table = out.str();
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
}

TEST_F(Io, AblateCellErrorsDoNotStopTheSweep)
{
    RunConfig c = scene_config();
    std::ostringstream out;
    const auto rows = cmd_ablate(c, "planKind", {"partitioned", "sliding", "wavelengthMatched", "diagonal"}, out);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_TRUE(rows[0].error.empty());
    EXPECT_TRUE(rows[1].error.empty());
    EXPECT_FALSE(rows[2].error.empty());  // default anchors do not fit 4 bands
    EXPECT_FALSE(rows[3].error.empty());
    EXPECT_NE(out.str().find("error"), std::string::npos);
}

TEST_F(Io, AblateAccelerateGivesPairedCurves)
{
    RunConfig c = scene_config(4, 0.01);
    std::ostringstream out;
    const auto rows = cmd_ablate(c, "accelerate", {"off", "on"}, out);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].residual_curve.size(), rows[1].residual_curve.size());
    EXPECT_EQ(rows[0].residual_curve.size(), 20u);
}

TEST_F(Io, AblateUnknownAxis)
{
    RunConfig c = scene_config();
    std::ostringstream out;
    try {
        cmd_ablate(c, "temperature", {"1"}, out);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
    for (const auto& axis : ablation_axes()) EXPECT_NO_THROW(with_axis(c, axis, axis == "planKind" ? "sliding" : "1"));
}

TEST_F(Cli, ExitCodes)
{
    const std::string cube = path("c.msic"), meas = path("y.meas"), mask = path("m.mask");
    EXPECT_EQ(run_cli("synth --cube " + cube + " --scene-bands 4 --height 16 --width 16"), 0);
    EXPECT_EQ(run_cli("simulate --cube " + cube + " --measurement " + meas + " --mask " + mask), 0);
    EXPECT_EQ(run_cli("simulate --cube " + path("none.msic") + " --measurement " + meas), 3);
    detail::write_text(path("bad.json"), R"({"solver": {"stepz": 3}})");
    EXPECT_EQ(run_cli("--config " + path("bad.json") + " simulate"), 2);
    EXPECT_EQ(run_cli("reconstruct --measurement " + meas + " --mask " + mask + " --output " + path("r.msic") +
                      " --prior external --endpoint unix:" + path("nothing")),
              5);
    EXPECT_EQ(run_cli("reconstruct --measurement " + meas + " --mask " + mask + " --output " + path("r.msic") +
                      " --prior oracle --reference " + cube + " --steps 10 --zeta 0 --plan sliding"),
              0);
    EXPECT_EQ(run_cli("reconstruct --measurement " + meas + " --mask " + mask + " --output " + path("r.msic") +
                      " --steps 700"),
              2);
    EXPECT_EQ(run_cli("evaluate --output " + path("r.msic") + " --reference " + cube), 0);
}

TEST_F(Cli, FlagsOverrideConfigOverrideDefaults)
{
    RunConfig file;
    file.solver.steps = 33;
    file.solver.lambda = 4.0;
    detail::write_text(path("c.json"), serialize_config(file));
    const std::string out = path("eff.json");
    const std::string cmd = std::string(DIFFSCI_CLI) + " --config " + path("c.json") + " --steps 7 config > " + out;
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    const RunConfig eff = parse_config(detail::read_text(out));
    EXPECT_EQ(eff.solver.steps, 7);         // flag
    EXPECT_EQ(eff.solver.lambda, 4.0);      // config file
    EXPECT_EQ(eff.solver.t_start, 600);     // default
}
