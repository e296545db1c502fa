// hyperei: self-supervised hyperspectral inpainting toolkit.
// Subcommands: synth, mask, inpaint, eval, nullspace, gradcheck, plot.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hyperei/diff/gradcheck.hpp"
#include "hyperei/io.hpp"
#include "hyperei/manifest.hpp"
#include "hyperei/metrics.hpp"
#include "hyperei/operators.hpp"
#include "hyperei/png_io.hpp"
#include "hyperei/trainer.hpp"

namespace {

using namespace hei;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

int g_exit = kExitOk;

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  std::ofstream f(tmp, std::ios::trunc);
  if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed on " + tmp.string());
  f.close();
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string());
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text;
  else
    write_text_atomic(out_path, text);
}

std::vector<ColRange> parse_col_ranges(const std::string& spec) {
  std::vector<ColRange> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("--cols expects begin:end ranges, got '" + item + "'");
    try {
      out.push_back({std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ConfigError("--cols expects integer ranges, got '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--cols given no ranges");
  return out;
}

std::vector<GroupAction> parse_actions(const std::string& spec) {
  std::vector<GroupAction> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto comma = item.find(',');
    if (comma == std::string::npos)
      throw ConfigError("--actions expects dx,dy pairs separated by ';', got '" + item + "'");
    try {
      out.push_back({std::stoi(item.substr(0, comma)), std::stoi(item.substr(comma + 1))});
    } catch (const std::exception&) {
      throw ConfigError("--actions expects integer pairs, got '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--actions given no pairs");
  return out;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// ---------------------------------------------------------------------------
// subcommand wiring
// ---------------------------------------------------------------------------

void add_synth(CLI::App& app) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic low-rank hyperspectral cube");
  cmd->set_help_flag("--help", "Print this help message and exit");
  auto spec = std::make_shared<CubeSpec>();
  auto out = std::make_shared<std::string>();
  cmd->add_option("--h", spec->height, "Height in pixels")->required();
  cmd->add_option("--w", spec->width, "Width in pixels")->required();
  cmd->add_option("--c", spec->bands, "Number of spectral bands")->required();
  cmd->add_option("--rank", spec->rank, "Spectral mixing rank")->required();
  cmd->add_option("--smoothness", spec->smoothness, "Gaussian sigma for abundance maps")
      ->capture_default_str();
  cmd->add_option("--seed", spec->seed, "RNG seed")->capture_default_str();
  cmd->add_option("-o,--out", *out, "Output .hsc path")->required();
  cmd->callback([spec, out] { save_cube(synth_cube(*spec), *out); });
}

void add_mask(CLI::App& app) {
  auto* cmd = app.add_subcommand("mask", "Build a spatial mask (0 = missing pixel)");
  cmd->set_help_flag("--help", "Print this help message and exit");
  cmd->require_subcommand(1);

  struct Common {
    int h = 0, w = 0;
    std::string out;
  };
  auto wire_common = [](CLI::App* sub, const std::shared_ptr<Common>& c) {
    sub->add_option("--h", c->h, "Height in pixels")->required();
    sub->add_option("--w", c->w, "Width in pixels")->required();
    sub->add_option("-o,--out", c->out, "Output .hsm path")->required();
  };

  {
    auto* sub = cmd->add_subcommand("stripe", "Zero out vertical column ranges");
    sub->set_help_flag("--help", "Print this help message and exit");
    auto c = std::make_shared<Common>();
    auto cols = std::make_shared<std::string>();
    wire_common(sub, c);
    sub->add_option("--cols", *cols, "Column ranges begin:end[,begin:end...]")->required();
    sub->callback([c, cols] { save_mask(make_stripe_mask(c->h, c->w, parse_col_ranges(*cols)), c->out); });
  }
  {
    auto* sub = cmd->add_subcommand("rect", "Zero out a rectangle");
    sub->set_help_flag("--help", "Print this help message and exit");
    auto c = std::make_shared<Common>();
    auto x0 = std::make_shared<int>(0), y0 = std::make_shared<int>(0);
    auto rw = std::make_shared<int>(0), rh = std::make_shared<int>(0);
    wire_common(sub, c);
    sub->add_option("--x", *x0, "Rectangle left column")->required();
    sub->add_option("--y", *y0, "Rectangle top row")->required();
    sub->add_option("--rw", *rw, "Rectangle width")->required();
    sub->add_option("--rh", *rh, "Rectangle height")->required();
    sub->callback([c, x0, y0, rw, rh] { save_mask(make_rect_mask(c->h, c->w, *x0, *y0, *rw, *rh), c->out); });
  }
  {
    auto* sub = cmd->add_subcommand("random", "Zero out a uniform random pixel fraction");
    sub->set_help_flag("--help", "Print this help message and exit");
    auto c = std::make_shared<Common>();
    auto ratio = std::make_shared<double>(0.0);
    auto seed = std::make_shared<std::uint64_t>(0);
    wire_common(sub, c);
    sub->add_option("--ratio", *ratio, "Missing fraction in (0,1)")->required();
    sub->add_option("--seed", *seed, "RNG seed")->capture_default_str();
    sub->callback([c, ratio, seed] { save_mask(make_random_mask(c->h, c->w, *ratio, *seed), c->out); });
  }
}

void add_inpaint(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "inpaint", "Train the equivariant inpainting network on one measurement");
  cmd->set_help_flag("--help", "Print this help message and exit");
  auto job = std::make_shared<InpaintJob>();
  struct Flags {
    std::string cube, mask, out, history, checkpoint, reference, manifest, from_manifest;
    std::string attention = "both";
    std::uint64_t model_seed = 0;
    bool no_dc = false;
  };
  auto fl = std::make_shared<Flags>();

  std::vector<CLI::Option*> cfg_opts;
  cfg_opts.push_back(cmd->add_option("--cube", fl->cube, "Input cube (.hsc); the mask is applied to it"));
  cfg_opts.push_back(cmd->add_option("--mask", fl->mask, "Spatial mask (.hsm)"));
  cmd->add_option("-o,--out", fl->out, "Output inpainted cube (.hsc)");
  cmd->add_option("--history", fl->history, "Per-iteration loss CSV");
  cmd->add_option("--checkpoint", fl->checkpoint, "Trained weights (.hei)");
  cmd->add_option("--manifest", fl->manifest, "Run manifest JSON (default <out>.manifest.json)");
  cfg_opts.push_back(cmd->add_option("--reference", fl->reference, "Clean cube for MPSNR logging"));
  cfg_opts.push_back(cmd->add_option("--alpha", job->training.alpha, "Equivariance loss weight")
                         ->capture_default_str());
  cfg_opts.push_back(cmd->add_option("--group-size", job->training.group.size,
                                     "Shift group size T (offsets 0..T-1)")
                         ->capture_default_str());
  cfg_opts.push_back(cmd->add_option("--lr", job->training.lr, "Adam learning rate")->capture_default_str());
  cfg_opts.push_back(cmd->add_option("--iters", job->training.iterations, "Training iterations")
                         ->capture_default_str());
  cfg_opts.push_back(cmd->add_option("--seed", job->training.seed,
                                     "Training seed (also the model seed unless --model-seed)")
                         ->capture_default_str());
  cfg_opts.push_back(cmd->add_option("--model-seed", fl->model_seed, "Weight-init seed override"));
  cfg_opts.push_back(cmd->add_option("--log-every", job->training.log_every, "History row stride")
                         ->capture_default_str());
  cfg_opts.push_back(cmd->add_option("--base", job->model.base_channels, "U-Net base channel count")
                         ->capture_default_str());
  cfg_opts.push_back(cmd->add_option("--depth", job->model.depth, "U-Net depth")->capture_default_str());
  cfg_opts.push_back(cmd->add_option("--attn-rank", job->model.attention_rank,
                                     "Channel-attention bottleneck rank K")
                         ->capture_default_str());
  cfg_opts.push_back(cmd->add_option("--attention", fl->attention,
                                     "Attention mode: none|spatial|spectral|both")
                         ->capture_default_str());
  cfg_opts.push_back(cmd->add_flag("--no-data-consistency", fl->no_dc,
                                   "Do not overwrite observed pixels with the measurement"));
  auto* from_opt = cmd->add_option("--from-manifest", fl->from_manifest,
                                   "Reproduce a run from its manifest (config flags not allowed)");

  cmd->callback([job, fl, cmd, cfg_opts, from_opt] {
    if (from_opt->count() > 0) {
      for (const auto* o : cfg_opts)
        if (o->count() > 0)
          throw ConfigError("--from-manifest replaces the run configuration; drop " +
                            o->get_name());
      *job = job_from_manifest(fl->from_manifest);
      if (!fl->out.empty()) job->out_path = fl->out;
      if (!fl->history.empty()) job->history_path = fl->history;
      if (!fl->checkpoint.empty()) job->checkpoint_path = fl->checkpoint;
    } else {
      if (fl->cube.empty() || fl->mask.empty() || fl->out.empty())
        throw ConfigError("inpaint needs --cube, --mask and -o (or --from-manifest)");
      job->cube_path = fl->cube;
      job->mask_path = fl->mask;
      job->out_path = fl->out;
      if (!fl->history.empty()) job->history_path = fl->history;
      if (!fl->checkpoint.empty()) job->checkpoint_path = fl->checkpoint;
      if (!fl->reference.empty()) job->reference_path = fl->reference;
      job->model.attention_mode = net::attention_from_string(fl->attention);
      job->model.seed = cmd->get_option("--model-seed")->count() ? fl->model_seed
                                                                 : job->training.seed;
      job->training.data_consistency_output = !fl->no_dc;
    }

    const HsiCube cube = load_cube(job->cube_path);
    const SpatialMask mask = load_mask(job->mask_path);
    job->model.in_bands = cube.bands;
    net::validate(job->model);
    train::validate(job->training);

    const fs::path manifest_path =
        fl->manifest.empty() ? fs::path(job->out_path.string() + ".manifest.json")
                             : fs::path(fl->manifest);
    write_manifest(*job, manifest_path);

    std::optional<HsiCube> reference;
    if (job->reference_path) reference = load_cube(*job->reference_path);

    const HsiCube y = apply_mask(cube, mask);
    const train::Result result =
        train::train(y, mask, job->model, job->training, reference ? &*reference : nullptr);

    save_cube(result.x_hat, job->out_path);
    if (job->history_path) {
      std::ostringstream csv;
      train::write_csv(result.history, csv);
      write_text_atomic(*job->history_path, csv.str());
    }
    if (job->checkpoint_path) net::save_checkpoint(result.params, *job->checkpoint_path);
  });
}

void add_eval(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval", "Score a reconstruction against a reference cube");
  cmd->set_help_flag("--help", "Print this help message and exit");
  struct Args {
    std::string input, reference, mask, region = "full", out;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--input", a->input, "Reconstructed cube (.hsc)")->required();
  cmd->add_option("--reference", a->reference, "Clean reference cube (.hsc)")->required();
  cmd->add_option("--mask", a->mask, "Mask for masked-only scoring (.hsm)");
  cmd->add_option("--region", a->region, "Scoring region: full|masked")->capture_default_str();
  cmd->add_option("-o,--out", a->out, "CSV output path (default: stdout)");
  cmd->callback([a] {
    const HsiCube x_hat = load_cube(a->input);
    const HsiCube reference = load_cube(a->reference);
    Region region;
    if (a->region == "full") region = Region::Full;
    else if (a->region == "masked") region = Region::MaskedOnly;
    else throw ConfigError("--region must be full or masked, got '" + a->region + "'");
    std::optional<SpatialMask> mask;
    if (!a->mask.empty()) mask = load_mask(a->mask);
    if (region == Region::MaskedOnly && !mask)
      throw ConfigError("--region masked needs --mask");
    const QualityReport report = evaluate(x_hat, reference, mask ? &*mask : nullptr, region);

    std::ostringstream csv;
    csv.precision(9);
    csv << "band,psnr,ssim\n";
    for (const auto& row : report.per_band)
      csv << row.band << ',' << row.psnr << ',' << row.ssim << "\n";
    csv << "mean," << report.mpsnr << ',' << report.mssim << "\n";
    emit(csv.str(), a->out);

    std::ostringstream summary;
    summary.precision(9);
    summary << "{\"mpsnr\": " << report.mpsnr << ", \"mssim\": " << report.mssim
            << ", \"region\": \"" << (region == Region::Full ? "full" : "masked_only") << "\"}";
    std::cout << summary.str() << std::endl;
  });
}

void add_nullspace(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "nullspace", "Check whether the shift group covers the measurement null-space");
  cmd->set_help_flag("--help", "Print this help message and exit");
  struct Args {
    std::string mask, actions, label, out;
    int group_size = 7;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--mask", a->mask, "Spatial mask (.hsm)")->required();
  cmd->add_option("--group-size", a->group_size, "Use all offsets of the TxT shift group")
      ->capture_default_str();
  cmd->add_option("--actions", a->actions, "Explicit action list dx,dy[;dx,dy...] instead");
  cmd->add_option("--label", a->label, "mask_kind column value (default: mask file stem)");
  cmd->add_option("-o,--out", a->out, "CSV output path (default: stdout)");
  cmd->callback([a] {
    const SpatialMask mask = load_mask(a->mask);
    std::vector<GroupAction> actions;
    std::string group_desc;
    if (!a->actions.empty()) {
      actions = parse_actions(a->actions);
      group_desc = a->actions;
    } else {
      actions = all_actions(GroupConfig{a->group_size});
      group_desc = "shift T=" + std::to_string(a->group_size);
    }
    const CoverageReport rep = nullspace_coverage(mask, actions, mask.height, mask.width);
    const std::string label =
        a->label.empty() ? fs::path(a->mask).stem().string() : a->label;
    std::ostringstream csv;
    csv << "mask_kind,group_desc,rank,full,missing_dims\n"
        << label << ',' << group_desc << ',' << rep.stacked_rank << ','
        << (rep.full ? "true" : "false") << ',' << rep.missing_dims << "\n";
    emit(csv.str(), a->out);
  });
}

void add_gradcheck(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "gradcheck", "Verify analytic gradients against finite differences (float64)");
  cmd->set_help_flag("--help", "Print this help message and exit");
  auto out = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(20240901);
  cmd->add_option("-o,--out", *out, "CSV output path (default: stdout)");
  cmd->add_option("--seed", *seed, "Probe seed")->capture_default_str();
  cmd->callback([out, seed] {
    const auto results = diff::run_op_gradchecks(*seed);
    std::ostringstream csv;
    csv << "op_name,max_rel_err,result\n";
    bool all_pass = true;
    for (const auto& r : results) {
      csv << r.op << ',' << std::scientific << r.max_rel_err << ','
          << (r.pass ? "pass" : "fail") << "\n";
      all_pass &= r.pass;
    }
    emit(csv.str(), *out);
    if (!all_pass) g_exit = kExitCheckFailed;
  });
}

void add_plot(CLI::App& app) {
  auto* cmd = app.add_subcommand("plot", "Render a band (or RGB band triple) to 8-bit PNG");
  cmd->set_help_flag("--help", "Print this help message and exit");
  struct Args {
    std::string cube, rgb, out;
    int band = -1;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--cube", a->cube, "Input cube (.hsc)")->required();
  cmd->add_option("--band", a->band, "Band index for grayscale output");
  cmd->add_option("--rgb", a->rgb, "Three band indices r,g,b for false color");
  cmd->add_option("-o,--out", a->out, "Output .png path")->required();
  cmd->callback([a, cmd] {
    const HsiCube cube = load_cube(a->cube);
    auto check_band = [&](int b) {
      if (b < 0 || b >= cube.bands)
        throw ConfigError("band " + std::to_string(b) + " out of range 0.." +
                          std::to_string(cube.bands - 1));
    };
    const bool have_band = cmd->get_option("--band")->count() > 0;
    const bool have_rgb = !a->rgb.empty();
    if (have_band == have_rgb)
      throw ConfigError("plot needs exactly one of --band or --rgb");
    if (have_band) {
      check_band(a->band);
      std::vector<std::uint8_t> px(std::size_t(cube.plane()));
      const auto view = cube.band(a->band);
      for (int i = 0; i < cube.height; ++i)
        for (int j = 0; j < cube.width; ++j)
          px[std::size_t(i) * cube.width + j] = to_byte(view(i, j));
      write_png_gray8(a->out, cube.width, cube.height, px);
    } else {
      int r, g, b;
      if (std::sscanf(a->rgb.c_str(), "%d,%d,%d", &r, &g, &b) != 3)
        throw ConfigError("--rgb expects three comma-separated band indices");
      check_band(r);
      check_band(g);
      check_band(b);
      std::vector<std::uint8_t> px(std::size_t(cube.plane()) * 3);
      const int bands[3] = {r, g, b};
      for (int ch = 0; ch < 3; ++ch) {
        const auto view = cube.band(bands[ch]);
        for (int i = 0; i < cube.height; ++i)
          for (int j = 0; j < cube.width; ++j)
            px[(std::size_t(i) * cube.width + j) * 3 + ch] = to_byte(view(i, j));
      }
      write_png_rgb8(a->out, cube.width, cube.height, px);
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(kToolName) + " " + kToolVersion +
               " - self-supervised hyperspectral inpainting via equivariant imaging"};
  app.name("hyperei");
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_config("--config", "",
                 "Read options from a key=value file; keys are subcommand.option "
                 "(e.g. inpaint.alpha=0.5), # starts a comment");
  app.require_subcommand(1);
  app.footer(
      "Exit codes:\n"
      "  0  success\n"
      "  1  verification failure (gradcheck found a bad gradient)\n"
      "  2  configuration or file-format error\n"
      "  3  training diverged (non-finite loss)\n"
      "  4  I/O failure");
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);

  add_synth(app);
  add_mask(app);
  add_inpaint(app);
  add_eval(app);
  add_nullspace(app);
  add_gradcheck(app);
  add_plot(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // CLI11's own exit codes cover --help/--version (0); everything else is
    // a usage problem.
    return code == 0 ? 0 : kExitConfig;
  } catch (const DivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {  // config, format, shape, capacity, state
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return g_exit;
}
