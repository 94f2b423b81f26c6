#pragma once

// Run configuration: plain-text key=value files, environment overrides and
// the hashes that guard checkpoints against incompatible configs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "inpaint/canny.hpp"
#include "inpaint/completion.hpp"
#include "inpaint/dataset.hpp"
#include "inpaint/edge_model.hpp"

namespace inpaint {

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t image_size = 64;
  std::string structure = kDefaultStructure;

  std::size_t g1_width = 32;
  std::size_t g1_residual_blocks = 8;
  std::size_t g2_width = 32;
  std::size_t d_width = 32;
  bool spectral_norm_discriminator = true;

  double lambda_l1 = 1.0;
  double lambda_adv = 0.1;
  double lambda_p = 0.1;
  double lambda_s = 250.0;
  double fm_weight = 10.0;
  bool style_on_composite = true;

  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double d_lr_ratio = 0.1;
  std::size_t batch_size = 4;
  std::size_t edge_steps = 300;
  std::size_t inpaint_steps = 300;
  std::size_t checkpoint_every = 100;
  std::string precision = "f64";  // f64 | f32 (GEMMs only)

  bool use_edges = true;
  bool use_skip_links = true;
  bool use_cm = true;  // false turns every CM layer of `structure` into C
  bool fid_unsquared = false;
  std::string sconv_norm = "mean";  // mean | geometric | sum

  double canny_sigma = 2.0;
  double canny_low = 0.1;
  double canny_high = 0.2;
  double mask_coverage = 0.25;
  double split_ratio = 0.8;

  std::string manifest;
  std::string edge_checkpoint;
  std::string inpaint_checkpoint;
  std::string edge_cache;

  bool operator==(const RunConfig&) const = default;
};

inline constexpr const char* kEnvPrefix = "INPAINT_";

/// Keys in file order.
std::vector<std::string> config_keys();

/// Throws ConfigError on an unknown key or an unparsable value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// "key = value" lines; '#' starts a comment. Unknown keys, duplicate keys and
/// malformed lines raise ConfigError naming the line.
RunConfig parse_config(const std::string& text, RunConfig base = {});
std::string serialize_config(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Applies INPAINT_<KEY> (upper case) variables found in `env`.
void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env);
/// The same, reading the process environment.
void apply_env_overrides(RunConfig& cfg);

/// Throws ConfigError if values are out of range or the structure does not parse.
void validate(const RunConfig& cfg);

enum class ModelKind { edge, inpaint };

/// FNV-1a over every non-path key, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);
/// FNV-1a over the keys that shape the given model's parameters.
std::string structural_hash(const RunConfig& cfg, ModelKind kind);

/// Derived component configs.
NetworkSpec network_spec(const RunConfig& cfg);
SConvNorm sconv_norm(const RunConfig& cfg);
EdgeNetConfig edge_net_config(const RunConfig& cfg);
EdgeTrainConfig edge_train_config(const RunConfig& cfg);
CompletionNetConfig completion_net_config(const RunConfig& cfg);
CompletionTrainConfig completion_train_config(const RunConfig& cfg);
CannyOptions canny_options(const RunConfig& cfg);
MaskParams mask_params(const RunConfig& cfg);
DataOptions data_options(const RunConfig& cfg);

}  // namespace inpaint
