// Command-line front end: prepare, train-edge, train-inpaint, infer, eval,
// gen-masks, canny and synth. Exit codes: 0 success, 1 internal error,
// 2 user or input error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "inpaint/batch.hpp"
#include "inpaint/canny.hpp"
#include "inpaint/checkpoint.hpp"
#include "inpaint/config.hpp"
#include "inpaint/dataset.hpp"
#include "inpaint/error.hpp"
#include "inpaint/image.hpp"
#include "inpaint/pipeline.hpp"

namespace fs = std::filesystem;
using namespace inpaint;

namespace {

constexpr int kUserError = 2;
constexpr int kInternalError = 1;

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::string structure, manifest, edge_checkpoint, inpaint_checkpoint;
  std::string use_edges;
  std::string out, runs_root = "runs";

  void attach(CLI::App* cmd, bool run_dir) {
    cmd->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "override one key (key=value), repeatable");
    cmd->add_option("--structure", structure, "network structure, e.g. 4(CM)-6(CM)-4(CM)");
    cmd->add_option("--manifest", manifest, "dataset manifest");
    cmd->add_option("--edge-checkpoint", edge_checkpoint, "trained edge model");
    cmd->add_option("--inpaint-checkpoint", inpaint_checkpoint, "trained completion model");
    cmd->add_option("--use-edges", use_edges, "true or false");
    if (run_dir) {
      cmd->add_option("--out", out, "run directory (default: <runs-root>/<timestamp>-<hash>)");
      cmd->add_option("--runs-root", runs_root, "parent of generated run directories");
    }
  }

  // defaults < config file < INPAINT_* environment < --set < dedicated flags
  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) cfg = load_config(config_file);
    apply_env_overrides(cfg);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!structure.empty()) cfg.structure = structure;
    if (!manifest.empty()) cfg.manifest = manifest;
    if (!edge_checkpoint.empty()) cfg.edge_checkpoint = edge_checkpoint;
    if (!inpaint_checkpoint.empty()) cfg.inpaint_checkpoint = inpaint_checkpoint;
    if (!use_edges.empty()) set_config_value(cfg, "use_edges", use_edges);
    validate(cfg);
    return cfg;
  }

  fs::path run_dir(const RunConfig& cfg) const {
    if (!out.empty()) {
      fs::create_directories(out);
      return out;
    }
    return make_run_dir(runs_root, cfg);
  }
};

void log_line(const std::string& s) {
  std::printf("%s\n", s.c_str());
  std::fflush(stdout);
}

DatasetManifest require_manifest(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("no manifest given (--manifest or manifest key)");
  if (!fs::exists(cfg.manifest)) throw ConfigError("manifest not found: " + cfg.manifest);
  return load_manifest(cfg.manifest);
}

std::vector<Sample> require_split(const RunConfig& cfg, const std::string& tag) {
  const auto samples = load_split(require_manifest(cfg), tag, data_options(cfg));
  if (samples.empty()) throw ConfigError("the " + tag + " split of " + cfg.manifest + " is empty");
  return samples;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

Image fit(const Image& image, std::size_t size) {
  if (image.width == size && image.height == size) return image;
  return square_resize(image, size);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-guided masked-convolution image inpainting"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "build a dataset manifest and edge cache from an image folder");
  std::string prep_images, prep_out;
  RunConfig prep_cfg;
  prepare->add_option("--images", prep_images, "folder of .png/.pgm/.ppm images")->required()->check(CLI::ExistingDirectory);
  prepare->add_option("--out", prep_out, "output folder")->required();
  prepare->add_option("--sigma", prep_cfg.canny_sigma, "Canny Gaussian sigma")->capture_default_str();
  prepare->add_option("--low", prep_cfg.canny_low, "Canny low threshold (fraction of max gradient)")->capture_default_str();
  prepare->add_option("--high", prep_cfg.canny_high, "Canny high threshold (fraction of max gradient)")->capture_default_str();
  prepare->add_option("--coverage", prep_cfg.mask_coverage, "hole fraction of generated masks")->capture_default_str();
  prepare->add_option("--split", prep_cfg.split_ratio, "fraction of images in the train split")->capture_default_str();
  prepare->add_option("--seed", prep_cfg.seed, "shuffle and mask seed")->capture_default_str();
  prepare->add_option("--size", prep_cfg.image_size, "square training resolution")->capture_default_str();

  auto* train_edge_cmd = app.add_subcommand("train-edge", "train the edge model");
  ConfigFlags te_flags;
  te_flags.attach(train_edge_cmd, true);

  auto* train_inpaint_cmd = app.add_subcommand("train-inpaint", "train the completion model");
  ConfigFlags ti_flags;
  ti_flags.attach(train_inpaint_cmd, true);

  auto* infer = app.add_subcommand("infer", "repair one image");
  ConfigFlags inf_flags;
  inf_flags.attach(infer, false);
  std::string inf_image, inf_mask, inf_output;
  bool dump = false;
  infer->add_option("--image", inf_image, "input image")->required()->check(CLI::ExistingFile);
  infer->add_option("--mask", inf_mask, "hole mask (white = hole)")->required()->check(CLI::ExistingFile);
  infer->add_option("--output", inf_output, "repaired image (.png/.ppm)")->required();
  infer->add_flag("--dump-intermediates", dump, "also write the raw prediction and predicted edges");

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM/FID on a manifest split");
  ConfigFlags ev_flags;
  ev_flags.attach(eval, true);
  std::string ev_split = "test";
  bool identity = false;
  std::vector<std::string> ablate;
  eval->add_option("--split", ev_split, "manifest split to score")->capture_default_str();
  eval->add_flag("--identity", identity, "score ground truth against itself");
  eval->add_option("--ablate", ablate, "train and score the flag grid over edges,skip,cm")->delimiter(',');

  auto* gen_masks = app.add_subcommand("gen-masks", "write irregular hole masks");
  std::size_t gm_count = 8, gm_size = 64;
  double gm_coverage = 0.25;
  std::uint64_t gm_seed = 1;
  std::string gm_out;
  gen_masks->add_option("--count", gm_count)->capture_default_str();
  gen_masks->add_option("--size", gm_size)->capture_default_str();
  gen_masks->add_option("--coverage", gm_coverage)->capture_default_str();
  gen_masks->add_option("--seed", gm_seed)->capture_default_str();
  gen_masks->add_option("--out", gm_out, "output folder")->required();

  auto* canny_cmd = app.add_subcommand("canny", "binary Canny edge map of an image");
  std::string cn_image, cn_output;
  CannyOptions cn_opt;
  canny_cmd->add_option("--image", cn_image)->required()->check(CLI::ExistingFile);
  canny_cmd->add_option("--output", cn_output)->required();
  canny_cmd->add_option("--sigma", cn_opt.sigma)->capture_default_str();
  canny_cmd->add_option("--low", cn_opt.low)->capture_default_str();
  canny_cmd->add_option("--high", cn_opt.high)->capture_default_str();

  auto* synth = app.add_subcommand("synth", "write synthetic toy images");
  std::size_t sy_count = 8, sy_size = 64;
  std::uint64_t sy_seed = 1;
  std::string sy_out;
  synth->add_option("--count", sy_count)->capture_default_str();
  synth->add_option("--size", sy_size)->capture_default_str();
  synth->add_option("--seed", sy_seed)->capture_default_str();
  synth->add_option("--out", sy_out, "output folder")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUserError;
  }

  try {
    if (*prepare) {
      validate(prep_cfg);
      const fs::path out = prep_out;
      fs::create_directories(out / "edges");
      const DatasetManifest m =
          build_manifest(fs::absolute(prep_images), mask_params(prep_cfg), prep_cfg.split_ratio, prep_cfg.seed);
      save_manifest(m, out / "manifest.txt");
      RunConfig cfg = prep_cfg;
      cfg.manifest = fs::absolute(out / "manifest.txt").string();
      cfg.edge_cache = fs::absolute(out / "edges").string();
      const DataOptions opt = data_options(cfg);
      for (const auto& e : m.entries) load_sample(e, m, opt);
      save_config(cfg, out / "config.txt");
      std::printf("%zu images: %zu train, %zu test\nmanifest %s\nconfig %s\n", m.entries.size(),
                  m.split("train").size(), m.split("test").size(), (out / "manifest.txt").c_str(),
                  (out / "config.txt").c_str());
    } else if (*train_edge_cmd) {
      const RunConfig cfg = te_flags.resolve();
      const auto train = require_split(cfg, "train");
      const fs::path dir = te_flags.run_dir(cfg);
      save_config(cfg, dir / "config.txt");
      const auto r = train_edge(cfg, train, dir, log_line);
      std::printf("edge checkpoint %s (%lld steps)\n", r.checkpoint.c_str(), static_cast<long long>(r.steps));
    } else if (*train_inpaint_cmd) {
      const RunConfig cfg = ti_flags.resolve();
      const auto train = require_split(cfg, "train");
      const fs::path dir = ti_flags.run_dir(cfg);
      save_config(cfg, dir / "config.txt");
      const auto r = train_inpaint(cfg, train, dir, log_line);
      std::printf("inpaint checkpoint %s (%lld steps)\n", r.checkpoint.c_str(), static_cast<long long>(r.steps));
    } else if (*infer) {
      const RunConfig cfg = inf_flags.resolve();
      Inpainter model(cfg);
      Sample s;
      s.id = fs::path(inf_image).stem().string();
      s.image = fit(to_rgb(load_image(inf_image)), cfg.image_size);
      s.mask_paper = binary_from_image(fit(load_image(inf_mask), cfg.image_size));
      s.edge_gt = canny(s.image, canny_options(cfg));
      const InpaintOutput out = model.run(make_batch({s}, {0}));
      save_image(tensor_to_image(out.composite), inf_output);
      if (dump) {
        const fs::path base = fs::path(inf_output).replace_extension();
        save_image(tensor_to_image(out.prediction), base.string() + "_pred.png");
        if (cfg.use_edges) {
          save_image(binary_to_image(binary_from_image(tensor_to_image(out.edges_pred, 0.0, 1.0))),
                     base.string() + "_edges.png");
        }
      }
      std::printf("wrote %s\n", inf_output.c_str());
    } else if (*eval) {
      const RunConfig cfg = ev_flags.resolve();
      const fs::path dir = ev_flags.run_dir(cfg);
      if (!ablate.empty()) {
        const auto rows = run_ablation(cfg, ablate, require_split(cfg, "train"), require_split(cfg, ev_split), dir,
                                       log_line);
        const std::string table = ablation_table(rows);
        write_text(dir / "ablation.txt", table);
        std::printf("%s", table.c_str());
      } else {
        const auto samples = require_split(cfg, ev_split);
        EvalReport r;
        if (identity) {
          r = evaluate_identity(cfg, samples);
        } else {
          Inpainter model(cfg);
          r = evaluate(model, samples);
        }
        write_text(dir / "report.txt", report_text(r));
        write_text(dir / "report.json", report_json(r));
        std::printf("%s", report_text(r).c_str());
      }
    } else if (*gen_masks) {
      MaskParams mp;
      mp.coverage = gm_coverage;
      fs::create_directories(gm_out);
      for (std::size_t i = 0; i < gm_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "mask_%04zu.png", i);
        save_image(binary_to_image(gen_irregular_mask(gm_size, gm_size, mp, gm_seed + i)), fs::path(gm_out) / name);
      }
      std::printf("wrote %zu masks to %s\n", gm_count, gm_out.c_str());
    } else if (*canny_cmd) {
      save_image(binary_to_image(canny(load_image(cn_image), cn_opt)), cn_output);
      std::printf("wrote %s\n", cn_output.c_str());
    } else if (*synth) {
      fs::create_directories(sy_out);
      for (std::size_t i = 0; i < sy_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "toy_%04zu.png", i);
        save_image(synth_toy_image(sy_size, sy_seed + i), fs::path(sy_out) / name);
      }
      std::printf("wrote %zu images to %s\n", sy_count, sy_out.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const UnsupportedFormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternalError;
  }
  return 0;
}
