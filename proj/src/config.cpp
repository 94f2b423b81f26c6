#include "inpaint/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty())
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

struct Field {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

Field field(const char* name, double RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return format_double(c.*m); },
          [m, name](RunConfig& c, const std::string& v) { c.*m = parse_double(name, v); }};
}

Field field(const char* name, std::size_t RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, name](RunConfig& c, const std::string& v) { c.*m = parse_uint(name, v); }};
}

Field field(const char* name, std::uint64_t RunConfig::*m, int) {
  return {name, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, name](RunConfig& c, const std::string& v) { c.*m = parse_uint(name, v); }};
}

Field field(const char* name, bool RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); },
          [m, name](RunConfig& c, const std::string& v) { c.*m = parse_bool(name, v); }};
}

Field field(const char* name, std::string RunConfig::*m) {
  return {name, [m](const RunConfig& c) { return c.*m; }, [m](RunConfig& c, const std::string& v) { c.*m = v; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("seed", &RunConfig::seed, 0),
      field("image_size", &RunConfig::image_size),
      field("structure", &RunConfig::structure),
      field("g1_width", &RunConfig::g1_width),
      field("g1_residual_blocks", &RunConfig::g1_residual_blocks),
      field("g2_width", &RunConfig::g2_width),
      field("d_width", &RunConfig::d_width),
      field("spectral_norm_discriminator", &RunConfig::spectral_norm_discriminator),
      field("lambda_l1", &RunConfig::lambda_l1),
      field("lambda_adv", &RunConfig::lambda_adv),
      field("lambda_p", &RunConfig::lambda_p),
      field("lambda_s", &RunConfig::lambda_s),
      field("fm_weight", &RunConfig::fm_weight),
      field("style_on_composite", &RunConfig::style_on_composite),
      field("lr", &RunConfig::lr),
      field("beta1", &RunConfig::beta1),
      field("beta2", &RunConfig::beta2),
      field("d_lr_ratio", &RunConfig::d_lr_ratio),
      field("batch_size", &RunConfig::batch_size),
      field("edge_steps", &RunConfig::edge_steps),
      field("inpaint_steps", &RunConfig::inpaint_steps),
      field("checkpoint_every", &RunConfig::checkpoint_every),
      field("precision", &RunConfig::precision),
      field("use_edges", &RunConfig::use_edges),
      field("use_skip_links", &RunConfig::use_skip_links),
      field("use_cm", &RunConfig::use_cm),
      field("fid_unsquared", &RunConfig::fid_unsquared),
      field("sconv_norm", &RunConfig::sconv_norm),
      field("canny_sigma", &RunConfig::canny_sigma),
      field("canny_low", &RunConfig::canny_low),
      field("canny_high", &RunConfig::canny_high),
      field("mask_coverage", &RunConfig::mask_coverage),
      field("split_ratio", &RunConfig::split_ratio),
      field("manifest", &RunConfig::manifest),
      field("edge_checkpoint", &RunConfig::edge_checkpoint),
      field("inpaint_checkpoint", &RunConfig::inpaint_checkpoint),
      field("edge_cache", &RunConfig::edge_cache),
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.name == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

std::string fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.name);
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_field(key).get(cfg); }

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream is(text);
  std::string line;
  std::set<std::string> seen;
  for (std::size_t no = 1; std::getline(is, line); ++no) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError("config line " + std::to_string(no) + ": duplicate key '" + key + "'");
    try {
      set_config_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(no) + ": " + e.what());
    }
  }
  return base;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.name << " = " << f.get(cfg) << '\n';
  return os.str();
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), std::move(base));
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << serialize_config(cfg);
}

void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env) {
  for (const auto& f : fields()) {
    std::string var = kEnvPrefix;
    for (char c : f.name) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const auto it = env.find(var);
    if (it == env.end()) continue;
    try {
      f.set(cfg, trim(it->second));
    } catch (const ConfigError& e) {
      throw ConfigError("environment variable " + var + ": " + e.what());
    }
  }
}

void apply_env_overrides(RunConfig& cfg) {
  std::map<std::string, std::string> env;
  for (const auto& f : fields()) {
    std::string var = kEnvPrefix;
    for (char c : f.name) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(var.c_str())) env[var] = v;
  }
  apply_env_overrides(cfg, env);
}

void validate(const RunConfig& cfg) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (cfg.image_size == 0) fail("image_size must be positive");
  if (cfg.g1_width == 0 || cfg.g2_width == 0 || cfg.d_width == 0) fail("network widths must be positive");
  if (cfg.batch_size == 0) fail("batch_size must be positive");
  if (cfg.checkpoint_every == 0) fail("checkpoint_every must be positive");
  if (!(cfg.lr > 0)) fail("lr must be positive");
  if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1) fail("beta1 and beta2 must lie in [0,1)");
  if (!(cfg.d_lr_ratio > 0)) fail("d_lr_ratio must be positive");
  if (cfg.fm_weight < 0) fail("fm_weight must be nonnegative");
  if (cfg.precision != "f64" && cfg.precision != "f32") fail("precision must be f64 or f32, got '" + cfg.precision + "'");
  if (cfg.mask_coverage < 0 || cfg.mask_coverage > 0.9) fail("mask_coverage must lie in [0,0.9]");
  if (cfg.split_ratio < 0 || cfg.split_ratio > 1) fail("split_ratio must lie in [0,1]");
  try {
    validate(LossWeights{cfg.lambda_l1, cfg.lambda_adv, cfg.lambda_p, cfg.lambda_s});
    validate(canny_options(cfg));
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  sconv_norm(cfg);
  const NetworkSpec spec = network_spec(cfg);
  if (cfg.image_size % (std::size_t{1} << spec.depth()))
    fail("image_size " + std::to_string(cfg.image_size) + " must be divisible by " +
         std::to_string(std::size_t{1} << spec.depth()) + " for structure " + cfg.structure);
}

std::string config_hash(const RunConfig& cfg) {
  static const std::set<std::string> paths = {"manifest", "edge_checkpoint", "inpaint_checkpoint", "edge_cache"};
  std::string text;
  for (const auto& f : fields())
    if (!paths.count(f.name)) text += f.name + "=" + f.get(cfg) + "\n";
  return fnv1a(text);
}

std::string structural_hash(const RunConfig& cfg, ModelKind kind) {
  static const char* edge_keys[] = {"g1_width", "g1_residual_blocks", "d_width", "spectral_norm_discriminator"};
  static const char* inpaint_keys[] = {"structure", "g2_width", "d_width", "spectral_norm_discriminator",
                                       "use_edges", "use_skip_links", "use_cm", "sconv_norm"};
  std::string text = kind == ModelKind::edge ? "edge\n" : "inpaint\n";
  if (kind == ModelKind::edge)
    for (const char* k : edge_keys) text += std::string(k) + "=" + get_config_value(cfg, k) + "\n";
  else
    for (const char* k : inpaint_keys) text += std::string(k) + "=" + get_config_value(cfg, k) + "\n";
  return fnv1a(text);
}

NetworkSpec network_spec(const RunConfig& cfg) {
  NetworkSpec spec;
  try {
    spec = parse_structure(cfg.structure);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("structure: ") + e.what());
  }
  if (!cfg.use_cm)
    for (auto& s : spec.segments) s.kind = ConvKind::C;
  return spec;
}

SConvNorm sconv_norm(const RunConfig& cfg) {
  if (cfg.sconv_norm == "mean") return SConvNorm::window_mean;
  if (cfg.sconv_norm == "geometric") return SConvNorm::geometric_mean;
  if (cfg.sconv_norm == "sum") return SConvNorm::sum;
  throw ConfigError("sconv_norm must be mean, geometric or sum, got '" + cfg.sconv_norm + "'");
}

EdgeNetConfig edge_net_config(const RunConfig& cfg) {
  EdgeNetConfig c;
  c.width = cfg.g1_width;
  c.residual_blocks = cfg.g1_residual_blocks;
  return c;
}

EdgeTrainConfig edge_train_config(const RunConfig& cfg) {
  EdgeTrainConfig c;
  c.adam.lr = cfg.lr;
  c.adam.beta1 = cfg.beta1;
  c.adam.beta2 = cfg.beta2;
  c.d_lr_ratio = cfg.d_lr_ratio;
  c.fm_weight = cfg.fm_weight;
  c.d_width = cfg.d_width;
  c.d_spectral = cfg.spectral_norm_discriminator;
  return c;
}

CompletionNetConfig completion_net_config(const RunConfig& cfg) {
  CompletionNetConfig c;
  c.spec = network_spec(cfg);
  c.width = cfg.g2_width;
  c.skip_links = cfg.use_skip_links;
  c.sconv_norm = sconv_norm(cfg);
  return c;
}

CompletionTrainConfig completion_train_config(const RunConfig& cfg) {
  CompletionTrainConfig c;
  c.adam.lr = cfg.lr;
  c.adam.beta1 = cfg.beta1;
  c.adam.beta2 = cfg.beta2;
  c.d_lr_ratio = cfg.d_lr_ratio;
  c.weights = {cfg.lambda_l1, cfg.lambda_adv, cfg.lambda_p, cfg.lambda_s};
  c.d_width = cfg.d_width;
  c.d_spectral = cfg.spectral_norm_discriminator;
  c.style_on_composite = cfg.style_on_composite;
  return c;
}

CannyOptions canny_options(const RunConfig& cfg) { return {cfg.canny_sigma, cfg.canny_low, cfg.canny_high}; }

MaskParams mask_params(const RunConfig& cfg) {
  MaskParams p;
  p.coverage = cfg.mask_coverage;
  return p;
}

DataOptions data_options(const RunConfig& cfg) {
  DataOptions d;
  d.image_size = cfg.image_size;
  d.canny = canny_options(cfg);
  if (!cfg.edge_cache.empty()) d.edge_cache_dir = cfg.edge_cache;
  return d;
}

}  // namespace inpaint
