#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hyperei/io.hpp"
#include "hyperei/metrics.hpp"
#include "hyperei/operators.hpp"
#include "hyperei/png_io.hpp"

// Drives the installed binary the way a user would; HYPEREI_CLI is injected
// by the build.

using namespace hei;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(HYPEREI_CLI) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  RunResult result;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (std::fgets(buf.data(), int(buf.size()), pipe)) result.output += buf.data();
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hei_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(bool(f));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("cli synth: writes a loadable cube, deterministically") {
  TempDir tmp;
  const auto a = tmp / "a.hsc";
  const auto b = tmp / "b.hsc";
  CHECK(run("synth --h 32 --w 32 --c 8 --rank 3 --seed 7 -o " + a).exit_code == 0);
  const HsiCube cube = load_cube(a);
  CHECK(cube.height == 32);
  CHECK(cube.bands == 8);

  CHECK(run("synth --h 32 --w 32 --c 8 --rank 3 --seed 7 -o " + b).exit_code == 0);
  CHECK(slurp(a) == slurp(b));

  const auto bad = run("synth --h 8 --w 8 --c 8 --rank 9 --seed 1 -o " + tmp / "x.hsc");
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("rank") != std::string::npos);
  CHECK(bad.output.find("bands") != std::string::npos);
}

TEST_CASE("cli: flags can come from a key=value config file") {
  TempDir tmp;
  const auto cfg = tmp / "synth.cfg";
  std::ofstream(cfg) << "# fixture geometry\n"
                        "synth.h=32\n"
                        "synth.w=32\n"
                        "synth.c=8\n"
                        "synth.rank=3\n"
                        "synth.seed=7\n";
  const auto from_cfg = tmp / "cfg.hsc";
  const auto from_flags = tmp / "flags.hsc";
  CHECK(run("--config " + cfg + " synth -o " + from_cfg).exit_code == 0);
  CHECK(run("synth --h 32 --w 32 --c 8 --rank 3 --seed 7 -o " + from_flags).exit_code == 0);
  CHECK(slurp(from_cfg) == slurp(from_flags));

  // explicit flags beat the file
  const auto override_out = tmp / "override.hsc";
  CHECK(run("--config " + cfg + " synth --seed 8 -o " + override_out).exit_code == 0);
  CHECK(slurp(override_out) != slurp(from_cfg));
}

TEST_CASE("cli mask: stripe counts, random determinism, refusal of full coverage") {
  TempDir tmp;
  const auto m = tmp / "m.hsm";
  CHECK(run("mask stripe --h 16 --w 16 --cols 10:14 -o " + m).exit_code == 0);
  const SpatialMask mask = load_mask(m);
  CHECK(mask.size() - mask.observed_count() == 4 * 16);

  // several ranges at once
  const auto multi = tmp / "multi.hsm";
  CHECK(run("mask stripe --h 16 --w 16 --cols 1:2,5:7 -o " + multi).exit_code == 0);
  const SpatialMask mm = load_mask(multi);
  CHECK(mm.size() - mm.observed_count() == 3 * 16);

  const auto r1 = tmp / "r1.hsm";
  const auto r2 = tmp / "r2.hsm";
  CHECK(run("mask random --h 16 --w 16 --ratio 0.3 --seed 1 -o " + r1).exit_code == 0);
  CHECK(run("mask random --h 16 --w 16 --ratio 0.3 --seed 1 -o " + r2).exit_code == 0);
  CHECK(slurp(r1) == slurp(r2));

  CHECK(run("mask rect --h 8 --w 8 --x 0 --y 0 --rw 8 --rh 8 -o " + tmp / "z.hsm").exit_code == 2);
}

TEST_CASE("cli inpaint: artifacts, manifest reproduce, exit codes") {
  TempDir tmp;
  const auto cube = tmp / "cube.hsc";
  const auto mask = tmp / "mask.hsm";
  REQUIRE(run("synth --h 16 --w 16 --c 4 --rank 2 --seed 11 -o " + cube).exit_code == 0);
  REQUIRE(run("mask stripe --h 16 --w 16 --cols 6:9 -o " + mask).exit_code == 0);

  const auto xhat = tmp / "xhat.hsc";
  const auto hist = tmp / "history.csv";
  const auto ckpt = tmp / "model.hei";
  const auto manifest = tmp / "run.json";
  const std::string common = " --base 16 --depth 2 --seed 3 ";
  const auto res = run("inpaint --cube " + cube + " --mask " + mask + common + "--iters 60 -o " + xhat +
                       " --history " + hist + " --checkpoint " + ckpt + " --manifest " + manifest +
                       " --reference " + cube);
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(xhat));
  CHECK(fs::exists(ckpt));
  const std::string mjson = slurp(manifest);
  CHECK(mjson.find("\"objective\": \"mc+ei\"") != std::string::npos);
  CHECK(mjson.find("\"fnv1a64\"") != std::string::npos);
  const std::string csv = slurp(hist);
  CHECK(csv.rfind("iteration,mc_loss,ei_loss,total_loss,mpsnr", 0) == 0);

  // data consistency: observed pixels equal the measurement
  const HsiCube y = apply_mask(load_cube(cube), load_mask(mask));
  const HsiCube out = load_cube(xhat);
  const SpatialMask m = load_mask(mask);
  for (Eigen::Index p = 0; p < m.size(); ++p)
    if (m.bits[p]) CHECK(out.data[p] == y.data[p]);

  // reproduce from the manifest alone: bit-identical artifact
  const auto xhat2 = tmp / "xhat2.hsc";
  const auto rep = run("inpaint --from-manifest " + manifest + " -o " + xhat2);
  CHECK(rep.exit_code == 0);
  CHECK(slurp(xhat) == slurp(xhat2));

  // config flags conflict with --from-manifest
  CHECK(run("inpaint --from-manifest " + manifest + " --alpha 0.5 -o " + tmp / "no.hsc").exit_code == 2);

  // alpha = 0 runs are labeled mc_only
  const auto m0 = tmp / "mc_only.json";
  CHECK(run("inpaint --cube " + cube + " --mask " + mask + common +
            "--alpha 0 --iters 20 -o " + tmp / "x0.hsc" + " --manifest " + m0)
            .exit_code == 0);
  CHECK(slurp(m0).find("\"objective\": \"mc_only\"") != std::string::npos);

  // diverged run maps to exit 3
  CHECK(run("inpaint --cube " + cube + " --mask " + mask + common +
            "--lr 1e20 --iters 50 -o " + tmp / "div.hsc")
            .exit_code == 3);

  // missing input file maps to exit 2
  CHECK(run("inpaint --cube " + tmp / "nope.hsc" + " --mask " + mask + common + "--iters 5 -o " +
            tmp / "y.hsc")
            .exit_code == 2);

  // unwritable output maps to exit 4, and leaves no partial artifact
  const auto unwritable = run("inpaint --cube " + cube + " --mask " + mask + common +
                              "--iters 5 -o /nonexistent_dir_zz/out.hsc --manifest " +
                              tmp / "m4.json");
  CHECK(unwritable.exit_code == 4);
  CHECK(!fs::exists("/nonexistent_dir_zz/out.hsc"));
}

TEST_CASE("cli eval: scores, masked region, missing file") {
  TempDir tmp;
  const auto cube = tmp / "ref.hsc";
  REQUIRE(run("synth --h 16 --w 16 --c 3 --rank 2 --seed 5 -o " + cube).exit_code == 0);

  const auto same = run("eval --input " + cube + " --reference " + cube);
  CHECK(same.exit_code == 0);
  CHECK(same.output.find("\"mpsnr\": 100") != std::string::npos);
  CHECK(same.output.find("\"mssim\": 1") != std::string::npos);
  CHECK(same.output.find("\"region\": \"full\"") != std::string::npos);

  const auto mask = tmp / "m.hsm";
  REQUIRE(run("mask stripe --h 16 --w 16 --cols 4:8 -o " + mask).exit_code == 0);
  const auto degraded = tmp / "deg.hsc";
  save_cube(apply_mask(load_cube(cube), load_mask(mask)), degraded);

  const auto csv_path = tmp / "scores.csv";
  const auto deg = run("eval --input " + degraded + " --reference " + cube + " --mask " + mask +
                       " --region masked -o " + csv_path);
  CHECK(deg.exit_code == 0);
  CHECK(deg.output.find("\"region\": \"masked_only\"") != std::string::npos);
  const std::string csv = slurp(csv_path);
  CHECK(csv.rfind("band,psnr,ssim", 0) == 0);
  CHECK(csv.find("\nmean,") != std::string::npos);

  CHECK(run("eval --input " + degraded + " --reference " + tmp / "missing.hsc").exit_code == 2);
  CHECK(run("eval --input " + degraded + " --reference " + cube + " --region masked").exit_code == 2);
}

TEST_CASE("cli nullspace: the worked coverage cases") {
  TempDir tmp;
  const auto m1 = tmp / "one_col.hsm";
  REQUIRE(run("mask stripe --h 4 --w 4 --cols 1:2 -o " + m1).exit_code == 0);
  auto res = run("nullspace --mask " + m1 + " --actions 1,0 --label stripe1");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("mask_kind,group_desc,rank,full,missing_dims") != std::string::npos);
  const bool found_row = res.output.find("stripe1,1,0,16,true,0") != std::string::npos;
  CHECK(found_row);

  const auto m2 = tmp / "two_cols.hsm";
  REQUIRE(run("mask stripe --h 4 --w 4 --cols 1:3 -o " + m2).exit_code == 0);
  res = run("nullspace --mask " + m2 + " --actions 1,0");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find(",12,false,4") != std::string::npos);

  const auto m3 = tmp / "stripe4.hsm";
  REQUIRE(run("mask stripe --h 8 --w 8 --cols 2:6 -o " + m3).exit_code == 0);
  res = run("nullspace --mask " + m3 + " --group-size 7");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("shift T=7,64,true,0") != std::string::npos);
}

TEST_CASE("cli gradcheck: all ops pass, CSV well formed") {
  const auto res = run("gradcheck");
  CHECK(res.exit_code == 0);
  CHECK(res.output.rfind("op_name,max_rel_err,result", 0) == 0);
  CHECK(res.output.find(",fail") == std::string::npos);
  CHECK(res.output.find("conv2d,") != std::string::npos);
  CHECK(res.output.find("channel_norm,") != std::string::npos);
}

TEST_CASE("cli plot: grayscale values, mask stripes, bad band") {
  TempDir tmp;
  // constant 0.5 cube -> uniform mid-gray
  HsiCube flat(9, 13, 2);
  flat.data.setConstant(0.5f);
  const auto flat_path = tmp / "flat.hsc";
  save_cube(flat, flat_path);
  const auto png1 = tmp / "flat.png";
  CHECK(run("plot --cube " + flat_path + " --band 1 -o " + png1).exit_code == 0);
  const PngImage img = read_png8(png1);
  CHECK(img.width == 13);
  CHECK(img.height == 9);
  CHECK(img.channels == 1);
  for (const auto px : img.pixels) CHECK(int(px) == 128);  // round(0.5*255)

  // masked cube: black exactly at the masked columns
  const auto cube = tmp / "c.hsc";
  const auto mask = tmp / "m.hsm";
  REQUIRE(run("synth --h 16 --w 16 --c 3 --rank 2 --seed 9 -o " + cube).exit_code == 0);
  REQUIRE(run("mask stripe --h 16 --w 16 --cols 5:8 -o " + mask).exit_code == 0);
  const auto y_path = tmp / "y.hsc";
  save_cube(apply_mask(load_cube(cube), load_mask(mask)), y_path);
  const auto png2 = tmp / "y.png";
  CHECK(run("plot --cube " + y_path + " --band 0 -o " + png2).exit_code == 0);
  const PngImage yimg = read_png8(png2);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      const int v = yimg.pixels[std::size_t(i) * 16 + j];
      if (j >= 5 && j < 8) CHECK(v == 0);
      else CHECK(v > 0);
    }

  // rgb false color
  const auto png3 = tmp / "rgb.png";
  CHECK(run("plot --cube " + cube + " --rgb 0,1,2 -o " + png3).exit_code == 0);
  CHECK(read_png8(png3).channels == 3);

  CHECK(run("plot --cube " + cube + " --band 7 -o " + tmp / "bad.png").exit_code == 2);
  CHECK(run("plot --cube " + cube + " -o " + tmp / "none.png").exit_code == 2);
}

TEST_CASE("cli help: golden file covers every subcommand and exit code") {
  std::string all;
  for (const char* topic :
       {"--help", "synth --help", "mask --help", "mask stripe --help", "mask rect --help",
        "mask random --help", "inpaint --help", "eval --help", "nullspace --help",
        "gradcheck --help", "plot --help"}) {
    const auto res = run(topic);
    CHECK(res.exit_code == 0);
    all += std::string("$ hyperei ") + topic + "\n" + res.output + "\n";
  }
  const fs::path golden = fs::path(HYPEREI_SOURCE_DIR) / "tests" / "data" / "help_all.golden";
  if (!fs::exists(golden)) {
    // first run: write it so the diff is reviewable, then fail loudly
    fs::create_directories(golden.parent_path());
    std::ofstream(golden) << all;
    FAIL("golden help file was missing; wrote a fresh one, review and commit it");
  }
  CHECK(all == slurp(golden));
}
