// merf: fit, bake, render, diff and inspect memory-efficient radiance fields.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "merf.hpp"

namespace {

namespace fs = std::filesystem;
using namespace merf;

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::string format_psnr(double db) {
  if (std::isinf(db)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << db;
  return os.str();
}

GridShape parse_res(const std::string& s) {
  GridShape shape;
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ValidationError("--res expects L,R");
  try {
    shape.voxel_res = std::stoi(s.substr(0, comma));
    shape.plane_res = std::stoi(s.substr(comma + 1));
  } catch (const std::exception&) {
    throw ValidationError("--res expects two integers L,R");
  }
  if (shape.voxel_res < 2 || shape.plane_res < 2) throw ValidationError("--res values must be >= 2");
  if (shape.plane_res % kPoolingFactors.back() != 0) {
    throw ValidationError("--res plane resolution must be a multiple of " +
                          std::to_string(kPoolingFactors.back()));
  }
  return shape;
}

std::string view_name(std::size_t i) {
  std::ostringstream os;
  os << "view_" << std::setw(3) << std::setfill('0') << i << ".png";
  return os.str();
}

struct FitArgs {
  std::string scene;
  std::string out;
  int iters = 2000;
  std::string res = "64,128";
  std::uint64_t seed = 0;
  bool no_quant_aware = false;
  int batch = 1 << 14;
};

int run_fit(const FitArgs& a, int threads) {
  const SyntheticScene scene = read_scene(a.scene);
  const GridShape shape = parse_res(a.res);
  if (a.iters < 1 || a.batch < 1) throw ValidationError("--iters and --batch must be positive");
  std::cerr << "rendering " << scene.views.count << " ground-truth views\n";
  const auto views = generate_views(scene, {}, threads);
  FitConfig cfg;
  cfg.iterations = a.iters;
  cfg.batch_rays = a.batch;
  cfg.seed = a.seed;
  cfg.quantization_aware = !a.no_quant_aware;
  cfg.threads = threads;
  cfg.on_progress = [](const LossRecord& r) {
    std::cerr << "iter " << r.iteration << " loss " << r.loss << " psnr " << format_psnr(r.train_psnr)
              << "\n";
  };
  const FitResult fit = fit_field(views, shape, cfg);

  Checkpoint ckpt;
  ckpt.model = fit.model;
  ckpt.history = fit.history;
  for (const auto& v : views) ckpt.cameras.push_back(v.camera);
  write_checkpoint(ckpt, a.out, &views);
  {
    std::ofstream sj(fs::path(a.out) / "scene.json");
    sj << scene_to_json(scene).dump(2) << "\n";
  }
  const MarchConfig march = MarchConfig::for_plane_resolution(shape.plane_res);
  double psnr_sum = 0.0;
  double opacity_sum = 0.0;
  std::size_t pixels = 0;
  for (const auto& v : views) {
    const FloatImage img = render_model(v.camera, fit.model, march, threads);
    psnr_sum += psnr(img.rgb, v.image.rgb);
    for (double o : img.alpha) opacity_sum += o;
    pixels += img.alpha.size();
  }
  std::cout << "checkpoint=" << a.out << "\n"
            << "iterations=" << a.iters << "\n"
            << "seconds=" << fit.seconds << "\n"
            << "final_loss=" << fit.history.back().loss << "\n"
            << "train_psnr=" << format_psnr(psnr_sum / views.size()) << "\n"
            << "mean_opacity=" << opacity_sum / pixels << "\n";
  return 0;
}

struct BakeArgs {
  std::string ckpt;
  std::string cameras;
  std::string out;
  double threshold = 0.005;
};

int run_bake(const BakeArgs& a, int threads) {
  const Checkpoint ckpt = read_checkpoint(a.ckpt);
  const auto cameras = read_cameras(a.cameras);
  if (!(a.threshold >= 0.0)) throw ValidationError("--threshold must be >= 0");
  std::vector<Ray> rays;
  for (const auto& c : cameras) {
    for (int y = 0; y < c.height; ++y) {
      for (int x = 0; x < c.width; ++x) rays.push_back(c.pixel_ray(x, y));
    }
  }
  BakeConfig cfg;
  cfg.threshold = a.threshold;
  cfg.march = MarchConfig::for_plane_resolution(ckpt.model.raw.shape.plane_res);
  cfg.threads = threads;
  std::cerr << "baking from " << rays.size() << " training rays\n";
  const AssetBundle bundle = bake_scene(ckpt.model, rays, cfg);
  write_bundle(bundle, a.out);
  const auto manifest = read_manifest(a.out);
  std::cout << "bundle=" << a.out << "\n"
            << "occupancy_fraction=" << bundle.occupancy.base.fraction() << "\n"
            << "allocated_blocks=" << bundle.voxels.allocated_blocks() << "\n"
            << "bundle_bytes=" << payload_bytes(manifest) << "\n";
  return 0;
}

struct RenderArgs {
  std::string bundle;
  std::string cameras;
  std::string out;
  bool reference = false;
  double step = 0.0;
};

int run_render(const RenderArgs& a, int threads) {
  const AssetBundle bundle = read_bundle(a.bundle);
  const auto cameras = read_cameras(a.cameras);
  MarchConfig cfg = bundle.march;
  if (a.step != 0.0) {
    if (!(a.step > 0.0)) throw ValidationError("--step must be positive");
    cfg.step_size = a.step;
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out + ": " + ec.message());
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const FloatImage img = a.reference ? render_reference(cameras[i], bundle, cfg, threads)
                                       : render_image(cameras[i], bundle, cfg, threads);
    flagged += img.flagged_pixels;
    write_png(fs::path(a.out) / view_name(i), to_image(img));
    std::cerr << "rendered " << view_name(i) << "\n";
  }
  std::cout << "images=" << cameras.size() << "\n" << "flagged_pixels=" << flagged << "\n";
  return 0;
}

int run_diff(const std::string& pa, const std::string& pb) {
  const Image a = read_png(pa);
  const Image b = read_png(pb);
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw ValidationError("images differ in size or channel count");
  }
  std::cout << format_psnr(psnr(a, b)) << "\n";
  return 0;
}

int run_info(const std::string& dir) {
  const AssetBundle b = read_bundle(dir);
  const auto m = read_manifest(dir);
  std::cout << "version=" << b.version << "\n"
            << "voxel_resolution=" << b.shape.voxel_res << "\n"
            << "plane_resolution=" << b.shape.plane_res << "\n"
            << "block_size=" << b.voxels.block_size() << "\n"
            << "allocated_blocks=" << b.voxels.allocated_blocks() << "\n"
            << "step_size=" << b.march.step_size << "\n";
  for (const auto& [name, entry] : m.at("files").items()) {
    std::cout << "file " << name << " " << entry.at("bytes").get<std::size_t>() << "\n";
  }
  std::cout << "payload_bytes=" << payload_bytes(m) << "\n";
  std::cout << "occupancy level=1 resolution=" << b.occupancy.base.resolution()
            << " set=" << b.occupancy.base.count() << " fraction=" << b.occupancy.base.fraction()
            << "\n";
  for (std::size_t l = 0; l < b.occupancy.levels.size(); ++l) {
    const auto& g = b.occupancy.levels[l];
    std::cout << "occupancy level=" << b.occupancy.factors[l] << " resolution=" << g.resolution()
              << " set=" << g.count() << " fraction=" << g.fraction() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit, bake and render memory-efficient radiance fields"};
  app.require_subcommand(1);
  int threads = default_thread_count();
  app.add_option("--threads", threads, "Worker threads (default: MERF_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a field to rendered views of a synthetic scene");
  fit_cmd->add_option("--scene", fit.scene, "Scene spec (JSON)")->required();
  fit_cmd->add_option("--out", fit.out, "Checkpoint directory")->required();
  fit_cmd->add_option("--iters", fit.iters, "Iterations");
  fit_cmd->add_option("--res", fit.res, "Voxel and plane resolution L,R");
  fit_cmd->add_option("--seed", fit.seed, "Random seed");
  fit_cmd->add_option("--batch", fit.batch, "Rays per iteration");
  fit_cmd->add_flag("--no-quant-aware", fit.no_quant_aware, "Train without byte quantisation");
  fit_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  BakeArgs bake;
  auto* bake_cmd = app.add_subcommand("bake", "Bake a checkpoint into an asset bundle");
  bake_cmd->add_option("--ckpt", bake.ckpt, "Checkpoint directory")->required();
  bake_cmd->add_option("--cameras", bake.cameras, "Training cameras file")->required();
  bake_cmd->add_option("--out", bake.out, "Bundle directory")->required();
  bake_cmd->add_option("--threshold", bake.threshold, "Weight and alpha culling threshold");
  bake_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "Render a bundle from a cameras file");
  render_cmd->add_option("--bundle", render.bundle, "Bundle directory")->required();
  render_cmd->add_option("--cameras", render.cameras, "Cameras file")->required();
  render_cmd->add_option("--out", render.out, "Output image directory")->required();
  render_cmd->add_flag("--reference", render.reference, "Use the brute-force reference marcher");
  render_cmd->add_option("--step", render.step, "Override the step size (contracted units)");
  render_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string diff_a, diff_b;
  auto* diff_cmd = app.add_subcommand("diff", "Print the PSNR between two images");
  diff_cmd->add_option("--a", diff_a, "First image")->required();
  diff_cmd->add_option("--b", diff_b, "Second image")->required();

  std::string info_bundle;
  auto* info_cmd = app.add_subcommand("info", "Summarise a bundle");
  info_cmd->add_option("--bundle", info_bundle, "Bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*fit_cmd) return run_fit(fit, threads);
    if (*bake_cmd) return run_bake(bake, threads);
    if (*render_cmd) return run_render(render, threads);
    if (*diff_cmd) return run_diff(diff_a, diff_b);
    if (*info_cmd) return run_info(info_bundle);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
