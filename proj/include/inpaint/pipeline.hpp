#pragma once

// Two-stage training, inference, evaluation and the ablation grid, driven by
// a RunConfig. All artifacts of a run live in one directory.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "inpaint/completion.hpp"
#include "inpaint/config.hpp"
#include "inpaint/dataset.hpp"
#include "inpaint/edge_model.hpp"

namespace inpaint {

using LogFn = std::function<void(const std::string&)>;

inline constexpr const char* kEdgeCheckpoint = "edge.ckpt";
inline constexpr const char* kInpaintCheckpoint = "inpaint.ckpt";
inline constexpr const char* kEdgeLossCsv = "edge_loss.csv";
inline constexpr const char* kInpaintLossCsv = "inpaint_loss.csv";
inline constexpr const char* kEdgeCsvHeader = "step,d,adv,fm,total,l1";
inline constexpr const char* kInpaintCsvHeader = "step,l1,adv,perc,style,total";

/// `root/<YYYYmmdd-HHMMSS>-<hash prefix>`, created.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const RunConfig& cfg);

/// Sets the global GEMM precision from the config.
void apply_precision(const RunConfig& cfg);

/// Throws ConfigError (both hashes in the message) unless the checkpoint was
/// written for `kind` under the same structural config.
void check_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg, ModelKind kind, const std::string& where);

struct EdgeRunResult {
  std::filesystem::path checkpoint;
  std::int64_t steps = 0;
  std::optional<EdgeStepStats> last;
};

/// Trains G1/D1 until cfg.edge_steps, resuming from run_dir/edge.ckpt when
/// present. Writes the checkpoint every cfg.checkpoint_every steps and at the
/// end, and the loss curve to run_dir/edge_loss.csv.
EdgeRunResult train_edge(const RunConfig& cfg, const std::vector<Sample>& train, const std::filesystem::path& run_dir,
                         const LogFn& log = {});

struct InpaintRunResult {
  std::filesystem::path checkpoint;
  std::int64_t steps = 0;
  std::optional<CompletionStepStats> last;
};

/// Trains G2/D2 until cfg.inpaint_steps, resuming from run_dir/inpaint.ckpt.
/// With use_edges the edge channel comes from the G1 checkpoint at
/// cfg.edge_checkpoint; without it the channel is zero.
InpaintRunResult train_inpaint(const RunConfig& cfg, const std::vector<Sample>& train,
                               const std::filesystem::path& run_dir, const LogFn& log = {});

/// G1 loaded from a checkpoint, checked against the config.
std::unique_ptr<EdgeGenerator> load_edge_generator(const RunConfig& cfg, const std::filesystem::path& path);

/// Edge channel for G2: C_gt outside the hole and G1's prediction inside, or
/// zeros when `g1` is null. Also returns the raw prediction when requested.
Tensor edge_channel(EdgeGenerator* g1, const Batch& batch, Tensor* edges_pred = nullptr);

struct InpaintOutput {
  Tensor composite;   // I_comp, [N,3,H,W] in [-1,1]
  Tensor prediction;  // I_pred
  Tensor edges_pred;  // C_pred (empty without edges)
  Tensor edge_input;  // C_comp
};

/// Inference bundle: G1 (when edges are used) and G2 restored from the
/// checkpoints named in the config.
class Inpainter {
 public:
  explicit Inpainter(const RunConfig& cfg);
  InpaintOutput run(const Batch& batch);
  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  std::unique_ptr<EdgeGenerator> g1_;
  std::unique_ptr<CompletionGenerator> g2_;
};

struct EvalReport {
  double psnr = 0.0;  // mean over images; +infinity when all are exact
  double ssim = 0.0;
  double fid = 0.0;
  bool fid_available = true;  // false below two samples
  bool fid_regularized = false;
  std::size_t sample_count = 0;
  std::string config_hash;
  std::map<std::string, std::string> flags;
};

/// Metrics of I_comp (8-bit quantized) against I_gt over `samples`. Throws
/// std::invalid_argument on an empty list.
EvalReport evaluate(Inpainter& model, const std::vector<Sample>& samples);
/// Ground truth against itself, exercising the metric path without a model.
EvalReport evaluate_identity(const RunConfig& cfg, const std::vector<Sample>& samples);

std::string report_text(const EvalReport& r);
/// PSNR serializes as the string "inf" when infinite, FID as null when unavailable.
std::string report_json(const EvalReport& r);

struct AblationRow {
  bool use_edges = true;
  bool use_skip_links = true;
  bool use_cm = true;
  EvalReport report;
};

/// Trains and evaluates every combination of the listed axes ("edges",
/// "skip", "cm"); unlisted axes keep their config value. One G1 is trained
/// and shared unless cfg.edge_checkpoint names one.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<std::string>& axes,
                                      const std::vector<Sample>& train, const std::vector<Sample>& eval,
                                      const std::filesystem::path& run_dir, const LogFn& log = {});
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace inpaint
