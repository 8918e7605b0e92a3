#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "app.hpp"
#include "commands.hpp"
#include "nlvae/pipeline.hpp"

namespace nlvae::cli {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nlvae");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / ("nlvae_cli_" + std::to_string(::getpid())) / info->name();
    fs::remove_all(root_);
    fs::create_directories(root_);
  }

  std::string dir(const std::string& name) const { return (root_ / name).string(); }

  std::string write_png(const std::string& name, int side, std::uint64_t seed) const {
    Image img = synthetic_fixture(std::max(side, 16));
    if (side < 16) img = crop(img, 0, 0, side, side);
    for (auto& v : img.pixels) v = std::clamp(v + 0.01 * static_cast<double>(seed % 7), 0.0, 1.0);
    const auto path = root_ / name;
    fs::create_directories(path.parent_path());
    save_image(img, path);
    return path.string();
  }

  static nlohmann::json manifest(const std::string& out) {
    return nlohmann::json::parse(std::ifstream(fs::path(out) / "manifest.json"));
  }

  static std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path root_;
};

// Small but complete training runs.
const std::vector<std::string> kQuick{"--epochs", "2", "--minibatch", "2", "--crop", "16"};

std::vector<std::string> quick(std::vector<std::string> args) {
  args.insert(args.end(), kQuick.begin(), kQuick.end());
  return args;
}

TEST_F(Cli, TrainWritesOutputAtScale) {
  const auto lr = write_png("lr.png", 32, 0);
  const auto out = dir("run");
  const auto r = run_cli(quick({"train", "--input", lr, "--scale", "4", "--out", out}));
  ASSERT_EQ(r.code, 0) << r.err;
  const Image sr = load_image(fs::path(out) / "sr.png");
  EXPECT_EQ(sr.height, 128);
  EXPECT_EQ(sr.width, 128);
  for (const char* f : {"loss.csv", "checkpoint.json", "report.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  }
  const auto m = manifest(out);
  EXPECT_EQ(m.at("status"), "ok");
  EXPECT_EQ(m.at("command"), "train");
  EXPECT_EQ(m.at("options").at("config").at("beta"), 200.0);
  EXPECT_EQ(m.at("inputs").size(), 1u);
  EXPECT_TRUE(m.contains("finished_at"));
}

TEST_F(Cli, ScaleThreeResolvesTableBeta) {
  const auto lr = write_png("lr.png", 32, 0);
  const auto out = dir("run");
  ASSERT_EQ(run_cli(quick({"train", "--input", lr, "--scale", "3", "--epochs", "1", "--out", out})).code, 0);
  EXPECT_EQ(manifest(out).at("options").at("config").at("beta"), 150.0);
}

TEST_F(Cli, ExplicitBetaOverridesTable) {
  const auto lr = write_png("lr.png", 32, 0);
  const auto out = dir("run");
  ASSERT_EQ(run_cli(quick({"train", "--input", lr, "--scale", "3", "--beta", "500", "--out", out})).code, 0);
  EXPECT_EQ(manifest(out).at("options").at("config").at("beta"), 500.0);
}

TEST_F(Cli, TrainFromReferenceScoresOutput) {
  const auto hr = write_png("hr.png", 64, 0);
  const auto out = dir("run");
  const auto r = run_cli(quick({"train", "--hr", hr, "--scale", "2", "--canvas", "native", "--out", out}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(out) / "lr.png"));
  const auto report = nlohmann::json::parse(std::ifstream(fs::path(out) / "report.json"));
  EXPECT_TRUE(report.contains("psnr"));
  EXPECT_NE(r.out.find("PSNR"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  const auto lr = write_png("lr.png", 32, 0);
  EXPECT_EQ(run_cli({"train", "--out", dir("a")}).code, kExitConfig);  // no source
  EXPECT_EQ(run_cli({"train", "--input", lr, "--optimizer", "lbfgs"}).code, kExitConfig);
  EXPECT_EQ(run_cli({"train", "--input", lr, "--scale", "1", "--out", dir("b")}).code, kExitConfig);
  EXPECT_EQ(run_cli({"bogus"}).code, kExitConfig);
  EXPECT_EQ(run_cli({"train", "--input", (root_ / "missing.png").string()}).code, kExitConfig);
  EXPECT_EQ(run_cli({"--version"}).code, kExitOk);
  // A readable image that is too small fails at run time.
  const auto tiny = write_png("tiny.png", 8, 0);
  const auto out = dir("tiny");
  EXPECT_EQ(run_cli(quick({"train", "--input", tiny, "--scale", "2", "--out", out})).code, kExitRuntime);
  const auto m = manifest(out);
  EXPECT_EQ(m.at("status"), "failed");
  EXPECT_TRUE(m.contains("error"));
}

TEST_F(Cli, ManifestReplayIsBitExact) {
  const auto lr = write_png("lr.png", 32, 0);
  const auto first = dir("first"), second = dir("second");
  ASSERT_EQ(run_cli(quick({"train", "--input", lr, "--scale", "2", "--seed", "9", "--out", first})).code, 0);
  const auto r = run_cli({"train", "--from-manifest", first, "--out", second, "--epochs", "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(fs::path(first) / "sr.png"), slurp(fs::path(second) / "sr.png"));
  EXPECT_EQ(slurp(fs::path(first) / "loss.csv"), slurp(fs::path(second) / "loss.csv"));
  EXPECT_EQ(manifest(first).at("options"), manifest(second).at("options"));
  EXPECT_EQ(run_cli({"cost", "--from-manifest", first}).code, kExitConfig);  // wrong command
}

TEST_F(Cli, ConfigFileSuppliesDefaults) {
  const auto lr = write_png("lr.png", 32, 0);
  const auto cfg = root_ / "run.toml";
  std::ofstream(cfg) << "[train]\nscale = 4\nepochs = 1\nminibatch = 2\ncrop = 16\nalpha = 2.5\n";
  const auto out = dir("run");
  ASSERT_EQ(run_cli({"--config", cfg.string(), "train", "--input", lr, "--alpha", "1.5", "--out", out}).code, 0);
  const auto options = manifest(out).at("options").at("config");
  EXPECT_EQ(options.at("scale"), 4);
  EXPECT_EQ(options.at("epochs"), 1);
  EXPECT_EQ(options.at("alpha"), 1.5);
}

TEST_F(Cli, BenchmarkRowsPerImage) {
  for (int i = 0; i < 5; ++i) write_png("set/img" + std::to_string(i) + ".png", 64, i);
  const auto out = dir("bench");
  const auto r = run_cli(quick({"benchmark", dir("set"), "--scale", "2", "--canvas", "native", "--epochs", "1",
                                "--out", out}));
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(fs::path(out) / "metrics.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 1 + 5 + 1);  // header, rows, mean
  EXPECT_TRUE(fs::exists(fs::path(out) / "table.md"));
}

TEST_F(Cli, BenchmarkEmptyAndPartial) {
  fs::create_directories(root_ / "empty");
  EXPECT_EQ(run_cli({"benchmark", dir("empty"), "--out", dir("e")}).code, kExitConfig);

  write_png("mixed/good.png", 64, 1);
  write_png("mixed/tiny.png", 8, 2);
  const auto out = dir("p");
  const auto r = run_cli(quick({"benchmark", dir("mixed"), "--scale", "2", "--canvas", "native", "--epochs", "1",
                                "--out", out}));
  EXPECT_EQ(r.code, kExitPartial) << r.err;
  EXPECT_NE(slurp(fs::path(out) / "failures.txt").find("tiny"), std::string::npos);
  EXPECT_EQ(manifest(out).at("status"), "partial");
}

TEST_F(Cli, BicubicColumnIsIndependentOfTraining) {
  for (int i = 0; i < 2; ++i) write_png("set/img" + std::to_string(i) + ".png", 64, i);
  Console console(std::cout, std::cerr);
  BenchmarkOptions o;
  o.dataset = dir("set");
  o.canvas = Canvas::kNative;
  o.config.scale = 2;
  o.config.epochs = 1;
  o.config.minibatch = 2;
  o.config.crop = 16;
  o.baseline_only = true;
  const auto baseline = run_benchmark(o, std::nullopt, console);
  EXPECT_EQ(baseline.report.method, "Bicubic");
  o.baseline_only = false;
  const auto full = run_benchmark(o, std::nullopt, console);
  ASSERT_EQ(full.report.rows.size(), baseline.report.rows.size());
  for (std::size_t i = 0; i < full.report.rows.size(); ++i) {
    EXPECT_EQ(*full.report.rows[i].baseline_psnr, baseline.report.rows[i].psnr);
    EXPECT_EQ(*full.report.rows[i].baseline_ssim, baseline.report.rows[i].ssim);
  }
  // A different seed changes the trained column only.
  o.config.seed = 99;
  const auto reseeded = run_benchmark(o, std::nullopt, console);
  EXPECT_EQ(*reseeded.report.rows[0].baseline_psnr, *full.report.rows[0].baseline_psnr);
  EXPECT_NE(reseeded.report.rows[0].psnr, full.report.rows[0].psnr);
  o.config.seed = 0;
  EXPECT_EQ(run_benchmark(o, std::nullopt, console).report.rows[0].psnr, full.report.rows[0].psnr);
}

TEST_F(Cli, SweepOptimizerAxisDrawsThreeCurves) {
  const auto out = dir("sweep");
  const auto r = run_cli(quick({"sweep", "--axis", "optimizer", "--epochs", "2", "--out", out}));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string svg = slurp(fs::path(out) / "curves.svg");
  std::size_t polylines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++polylines;
  EXPECT_EQ(polylines, 3u);
  EXPECT_TRUE(fs::exists(fs::path(out) / "psnr.svg"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "table.csv"));
}

TEST_F(Cli, SweepAxisDefaults) {
  EXPECT_EQ(default_sweep_values(SweepAxis::kEncoderBlocks), (std::vector<std::string>{"1", "2", "3", "4", "5"}));
  EXPECT_EQ(default_sweep_values(SweepAxis::kDecoderBlocks), (std::vector<std::string>{"5", "6", "7", "8", "9"}));
  EXPECT_EQ(default_sweep_values(SweepAxis::kOptimizer).size(), 3u);
  const auto cfg = apply_sweep_value(TrainConfig{}, SweepAxis::kDecoderBlocks, "7");
  EXPECT_EQ(cfg.model.decoder_widths.size(), 7u);
  EXPECT_EQ(cfg.model.encoder_widths.size(), 5u);
  EXPECT_THROW(parse_sweep_axis("width"), ConfigError);
  EXPECT_THROW(apply_sweep_value(TrainConfig{}, SweepAxis::kLoss, "l3"), ConfigError);
}

TEST_F(Cli, CostReductionRow) {
  auto r = run_cli({"cost", "--K", "3", "--out", dir("k3")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("F_W = 1/9"), std::string::npos);
  EXPECT_NE(r.out.find("F_O = 1/9"), std::string::npos);
  r = run_cli({"cost", "--K", "1", "--out", dir("k1")});
  EXPECT_NE(r.out.find("F_W = 1 "), std::string::npos);
  const std::string csv = slurp(fs::path(dir("k3")) / "cost.csv");
  EXPECT_NE(csv.find("first_conv"), std::string::npos);
}

TEST_F(Cli, MetricsOnFilePair) {
  const auto a = write_png("a.png", 32, 0);
  const auto b = write_png("b.png", 32, 3);
  const auto r = run_cli({"metrics", a, b, "--channel", "RGB", "--out", dir("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(dir("m")) / "metrics.csv"));
  const auto same = run_cli({"metrics", a, a, "--out", dir("same")});
  EXPECT_NE(slurp(fs::path(dir("same")) / "metrics.csv").find("99"), std::string::npos);
}

}  // namespace
}  // namespace nlvae::cli
