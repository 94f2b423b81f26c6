#include "inpaint/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "inpaint/batch.hpp"
#include "inpaint/checkpoint.hpp"
#include "inpaint/error.hpp"
#include "inpaint/image.hpp"
#include "inpaint/losses.hpp"
#include "inpaint/metrics.hpp"

namespace fs = std::filesystem;

namespace inpaint {

namespace {

constexpr std::uint64_t kInpaintSeedOffset = 2;  // keeps G2/D2 inits apart from G1/D1

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string model_name(ModelKind kind) { return kind == ModelKind::edge ? "edge" : "inpaint"; }

void stamp(Checkpoint& ckpt, const RunConfig& cfg, ModelKind kind, std::int64_t step) {
  ckpt.metadata["model"] = model_name(kind);
  ckpt.metadata["structural_hash"] = structural_hash(cfg, kind);
  ckpt.metadata["config_hash"] = config_hash(cfg);
  ckpt.metadata["step"] = std::to_string(step);
}

// Keeps the header and rows before `step`, so a resumed run rewrites the tail.
std::ofstream open_loss_csv(const fs::path& path, const char* header, std::int64_t resume_step) {
  std::vector<std::string> kept;
  if (resume_step > 0 && fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) < resume_step) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header << '\n';
  for (const auto& l : kept) out << l << '\n';
  return out;
}

Tensor zeros_like_plane(const Tensor& t) { return Tensor::zeros(t.shape()); }

Tensor to_255(const Tensor& image) { return image_to_tensor(tensor_to_image(image), 0.0, 255.0); }

void require_nonempty(const std::vector<Sample>& samples, const char* what) {
  if (samples.empty()) throw std::invalid_argument(std::string(what) + " is empty");
}

std::map<std::string, std::string> flag_states(const RunConfig& cfg) {
  return {{"structure", cfg.structure},
          {"use_edges", cfg.use_edges ? "true" : "false"},
          {"use_skip_links", cfg.use_skip_links ? "true" : "false"},
          {"use_cm", cfg.use_cm ? "true" : "false"},
          {"fid_unsquared", cfg.fid_unsquared ? "true" : "false"},
          {"sconv_norm", cfg.sconv_norm}};
}

}  // namespace

fs::path make_run_dir(const fs::path& root, const RunConfig& cfg) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp_buf[32];
  std::strftime(stamp_buf, sizeof(stamp_buf), "%Y%m%d-%H%M%S", &tm);
  const fs::path dir = root / (std::string(stamp_buf) + "-" + config_hash(cfg).substr(0, 8));
  fs::create_directories(dir);
  return dir;
}

void apply_precision(const RunConfig& cfg) {
  set_compute_precision(cfg.precision == "f32" ? Precision::f32 : Precision::f64);
}

void check_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg, ModelKind kind, const std::string& where) {
  const auto model = ckpt.metadata.find("model");
  if (model == ckpt.metadata.end() || model->second != model_name(kind))
    throw ConfigError(where + " is not an " + model_name(kind) + " checkpoint");
  const auto found = ckpt.metadata.find("structural_hash");
  const std::string recorded = found == ckpt.metadata.end() ? "<none>" : found->second;
  const std::string expected = structural_hash(cfg, kind);
  if (recorded != expected)
    throw ConfigError(where + ": config hash mismatch, checkpoint " + recorded + " vs current config " + expected);
}

EdgeRunResult train_edge(const RunConfig& cfg, const std::vector<Sample>& train, const fs::path& run_dir,
                         const LogFn& log) {
  validate(cfg);
  require_nonempty(train, "edge training set");
  apply_precision(cfg);
  fs::create_directories(run_dir);
  const fs::path ckpt_path = run_dir / kEdgeCheckpoint;
  EdgeTrainer trainer(edge_net_config(cfg), edge_train_config(cfg), cfg.seed);
  if (fs::exists(ckpt_path)) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    check_checkpoint(ckpt, cfg, ModelKind::edge, ckpt_path.string());
    trainer.restore(ckpt);
    if (log) log("resuming edge training at step " + std::to_string(trainer.steps_taken()));
  }
  EdgeRunResult result;
  result.checkpoint = ckpt_path;
  std::ofstream csv = open_loss_csv(run_dir / kEdgeLossCsv, kEdgeCsvHeader, trainer.steps_taken());
  auto save = [&] {
    Checkpoint ckpt;
    stamp(ckpt, cfg, ModelKind::edge, trainer.steps_taken());
    trainer.store(ckpt);
    save_checkpoint(ckpt_path, ckpt);
  };
  const auto target = static_cast<std::int64_t>(cfg.edge_steps);
  while (trainer.steps_taken() < target) {
    const std::int64_t step = trainer.steps_taken();
    const Batch batch = make_batch(train, batch_indices(train.size(), cfg.batch_size, step, cfg.seed));
    const EdgeStepStats s = trainer.step(batch);
    result.last = s;
    csv << step << ',' << fmt(s.d_loss) << ',' << fmt(s.g_adv) << ',' << fmt(s.g_fm) << ',' << fmt(s.g_total) << ','
        << fmt(s.l1) << '\n';
    const std::int64_t done = trainer.steps_taken();
    if (done % static_cast<std::int64_t>(cfg.checkpoint_every) == 0 || done == target) {
      csv.flush();
      save();
      if (log) log("edge step " + std::to_string(done) + "/" + std::to_string(target) + " d=" + fmt(s.d_loss) +
                   " g=" + fmt(s.g_total) + " l1=" + fmt(s.l1));
    }
  }
  if (!fs::exists(ckpt_path)) save();
  result.steps = trainer.steps_taken();
  return result;
}

std::unique_ptr<EdgeGenerator> load_edge_generator(const RunConfig& cfg, const fs::path& path) {
  if (path.empty()) throw ConfigError("an edge checkpoint is required when use_edges is true");
  if (!fs::exists(path)) throw ConfigError("edge checkpoint not found: " + path.string());
  const Checkpoint ckpt = load_checkpoint(path);
  check_checkpoint(ckpt, cfg, ModelKind::edge, path.string());
  auto g1 = std::make_unique<EdgeGenerator>(edge_net_config(cfg), cfg.seed);
  restore_parameters(ckpt, g1->params(), "g1.");
  return g1;
}

Tensor edge_channel(EdgeGenerator* g1, const Batch& batch, Tensor* edges_pred) {
  if (!g1) return zeros_like_plane(batch.mask_paper);
  NoGradScope no_grad;
  const Tensor pred = predict_edges(*g1, batch, kEval);
  if (edges_pred) *edges_pred = pred;
  return composite_edges(batch.edges, pred, batch.mask_paper);
}

InpaintRunResult train_inpaint(const RunConfig& cfg, const std::vector<Sample>& train, const fs::path& run_dir,
                               const LogFn& log) {
  validate(cfg);
  require_nonempty(train, "inpaint training set");
  apply_precision(cfg);
  std::unique_ptr<EdgeGenerator> g1;
  if (cfg.use_edges) g1 = load_edge_generator(cfg, cfg.edge_checkpoint);
  fs::create_directories(run_dir);
  const fs::path ckpt_path = run_dir / kInpaintCheckpoint;
  CompletionTrainer trainer(completion_net_config(cfg), completion_train_config(cfg), cfg.seed + kInpaintSeedOffset);
  if (fs::exists(ckpt_path)) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    check_checkpoint(ckpt, cfg, ModelKind::inpaint, ckpt_path.string());
    trainer.restore(ckpt);
    if (log) log("resuming inpaint training at step " + std::to_string(trainer.steps_taken()));
  }
  InpaintRunResult result;
  result.checkpoint = ckpt_path;
  std::ofstream csv = open_loss_csv(run_dir / kInpaintLossCsv, kInpaintCsvHeader, trainer.steps_taken());
  auto save = [&] {
    Checkpoint ckpt;
    stamp(ckpt, cfg, ModelKind::inpaint, trainer.steps_taken());
    trainer.store(ckpt);
    save_checkpoint(ckpt_path, ckpt);
  };
  const auto target = static_cast<std::int64_t>(cfg.inpaint_steps);
  while (trainer.steps_taken() < target) {
    const std::int64_t step = trainer.steps_taken();
    const Batch batch = make_batch(train, batch_indices(train.size(), cfg.batch_size, step, cfg.seed));
    const CompletionStepStats s = trainer.step(batch, edge_channel(g1.get(), batch));
    result.last = s;
    csv << step << ',' << fmt(s.l1) << ',' << fmt(s.adv) << ',' << fmt(s.perceptual) << ',' << fmt(s.style) << ','
        << fmt(s.total) << '\n';
    const std::int64_t done = trainer.steps_taken();
    if (done % static_cast<std::int64_t>(cfg.checkpoint_every) == 0 || done == target) {
      csv.flush();
      save();
      if (log) log("inpaint step " + std::to_string(done) + "/" + std::to_string(target) + " d=" + fmt(s.d_loss) +
                   " g=" + fmt(s.total) + " hole_l1=" + fmt(s.hole_l1));
    }
  }
  if (!fs::exists(ckpt_path)) save();
  result.steps = trainer.steps_taken();
  return result;
}

Inpainter::Inpainter(const RunConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  if (cfg_.use_edges) g1_ = load_edge_generator(cfg_, cfg_.edge_checkpoint);
  if (cfg_.inpaint_checkpoint.empty()) throw ConfigError("an inpaint checkpoint is required");
  if (!fs::exists(cfg_.inpaint_checkpoint))
    throw ConfigError("inpaint checkpoint not found: " + cfg_.inpaint_checkpoint);
  const Checkpoint ckpt = load_checkpoint(cfg_.inpaint_checkpoint);
  check_checkpoint(ckpt, cfg_, ModelKind::inpaint, cfg_.inpaint_checkpoint);
  g2_ = std::make_unique<CompletionGenerator>(completion_net_config(cfg_), cfg_.seed + kInpaintSeedOffset);
  restore_parameters(ckpt, g2_->params(), "g2.");
}

InpaintOutput Inpainter::run(const Batch& batch) {
  apply_precision(cfg_);
  InpaintOutput out;
  out.edge_input = edge_channel(g1_.get(), batch, &out.edges_pred);
  NoGradScope no_grad;
  const Tensor validity = add_scalar(scale(batch.mask_paper, -1.0), 1.0);
  const Tensor damaged = batch.image * repeat_channels(validity, 3);
  out.prediction = g2_->forward(damaged, out.edge_input, validity, kEval);
  out.composite = composite_output(out.prediction, batch.image, batch.mask_paper);
  return out;
}

namespace {

EvalReport score(const RunConfig& cfg, const std::vector<Tensor>& outputs, const std::vector<Sample>& samples) {
  const FeatureExtractor fx = FeatureExtractor::standard();
  EvalReport r;
  r.sample_count = samples.size();
  r.config_hash = config_hash(cfg);
  r.flags = flag_states(cfg);
  std::vector<std::vector<double>> real, gen;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tensor gt = image_to_tensor(samples[i].image, 0.0, 255.0);
    const Tensor out = to_255(outputs[i]);
    psnr_sum += psnr(out, gt);
    ssim_sum += ssim(out, gt);
    for (auto& row : rows(fx.pooled(image_to_tensor(samples[i].image)))) real.push_back(std::move(row));
    for (auto& row : rows(fx.pooled(scale(add_scalar(out, -127.5), 1.0 / 127.5)))) gen.push_back(std::move(row));
  }
  const double n = static_cast<double>(samples.size());
  r.psnr = psnr_sum / n;
  r.ssim = ssim_sum / n;
  if (samples.size() < 2) {
    r.fid_available = false;
    return r;
  }
  FidOptions fo;
  fo.squared_mean_term = !cfg.fid_unsquared;
  const FidResult f = fid(real, gen, fo);
  r.fid = f.value;
  r.fid_regularized = f.regularized;
  return r;
}

}  // namespace

EvalReport evaluate(Inpainter& model, const std::vector<Sample>& samples) {
  require_nonempty(samples, "evaluation split");
  std::vector<Tensor> outputs;
  for (std::size_t i = 0; i < samples.size(); ++i) outputs.push_back(model.run(make_batch(samples, {i})).composite);
  return score(model.config(), outputs, samples);
}

EvalReport evaluate_identity(const RunConfig& cfg, const std::vector<Sample>& samples) {
  require_nonempty(samples, "evaluation split");
  std::vector<Tensor> outputs;
  for (const auto& s : samples) outputs.push_back(image_to_tensor(s.image));
  return score(cfg, outputs, samples);
}

std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  char buf[64];
  if (std::isinf(r.psnr))
    os << "psnr: inf\n";
  else {
    std::snprintf(buf, sizeof(buf), "%.4f", r.psnr);
    os << "psnr: " << buf << " dB\n";
  }
  std::snprintf(buf, sizeof(buf), "%.6f", r.ssim);
  os << "ssim: " << buf << '\n';
  if (r.fid_available) {
    std::snprintf(buf, sizeof(buf), "%.6g", r.fid);
    os << "fid: " << buf << (r.fid_regularized ? " (regularized)" : "") << '\n';
  } else {
    os << "fid: n/a (needs at least 2 samples)\n";
  }
  os << "samples: " << r.sample_count << '\n';
  os << "config_hash: " << r.config_hash << '\n';
  for (const auto& [k, v] : r.flags) os << k << ": " << v << '\n';
  return os.str();
}

std::string report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  if (std::isinf(r.psnr))
    j["psnr"] = "inf";
  else
    j["psnr"] = r.psnr;
  j["ssim"] = r.ssim;
  if (r.fid_available)
    j["fid"] = r.fid;
  else
    j["fid"] = nullptr;
  j["fid_regularized"] = r.fid_regularized;
  j["sample_count"] = r.sample_count;
  j["config_hash"] = r.config_hash;
  nlohmann::ordered_json flags = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.flags) flags[k] = v;
  j["flags"] = flags;
  return j.dump(2) + "\n";
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<std::string>& axes,
                                      const std::vector<Sample>& train, const std::vector<Sample>& eval,
                                      const fs::path& run_dir, const LogFn& log) {
  bool vary_edges = false, vary_skip = false, vary_cm = false;
  for (const auto& a : axes) {
    if (a == "edges")
      vary_edges = true;
    else if (a == "skip")
      vary_skip = true;
    else if (a == "cm")
      vary_cm = true;
    else
      throw ConfigError("unknown ablation axis '" + a + "' (expected edges, skip or cm)");
  }
  auto values = [](bool vary, bool fixed) { return vary ? std::vector<bool>{true, false} : std::vector<bool>{fixed}; };

  RunConfig base = cfg;
  const bool any_edges = vary_edges || cfg.use_edges;
  if (any_edges && base.edge_checkpoint.empty()) {
    if (log) log("ablation: training the shared edge model");
    base.edge_checkpoint = train_edge(base, train, run_dir / "edge", log).checkpoint.string();
  }

  std::vector<AblationRow> rows;
  for (bool e : values(vary_edges, cfg.use_edges))
    for (bool s : values(vary_skip, cfg.use_skip_links))
      for (bool c : values(vary_cm, cfg.use_cm)) {
        RunConfig rc = base;
        rc.use_edges = e;
        rc.use_skip_links = s;
        rc.use_cm = c;
        const std::string label = std::string("edges") + (e ? "1" : "0") + "_skip" + (s ? "1" : "0") + "_cm" +
                                  (c ? "1" : "0");
        if (log) log("ablation: " + label);
        rc.inpaint_checkpoint = train_inpaint(rc, train, run_dir / label, log).checkpoint.string();
        Inpainter model(rc);
        rows.push_back({e, s, c, evaluate(model, eval)});
      }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "edges  skip  cm   psnr       ssim      fid\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-6s %-5s %-4s %-10.4f %-9.6f ", r.use_edges ? "yes" : "no",
                  r.use_skip_links ? "yes" : "no", r.use_cm ? "CM" : "C", r.report.psnr, r.report.ssim);
    os << buf;
    if (r.report.fid_available)
      std::snprintf(buf, sizeof(buf), "%.6g\n", r.report.fid);
    else
      std::snprintf(buf, sizeof(buf), "n/a\n");
    os << buf;
  }
  return os.str();
}

}  // namespace inpaint
