#pragma once

// Irregular hole masks, dataset manifests, edge-map caching and toy images.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "inpaint/canny.hpp"
#include "inpaint/image.hpp"
#include "inpaint/tensor.hpp"

namespace inpaint {

struct MaskParams {
  double coverage = 0.25;  // requested hole fraction
  std::size_t min_width = 5;
  std::size_t max_width = 20;
  std::size_t max_attempts = 4000;  // stroke segments tried before giving up
};

/// [1,1,H,W], 1 = hole. Random-walk brush strokes until the hole fraction
/// lies in [coverage, coverage + 0.05]; coverage 0 yields an empty mask.
/// Throws std::runtime_error if the bound on attempts is exhausted.
Tensor gen_irregular_mask(std::size_t h, std::size_t w, const MaskParams& params, std::uint64_t seed);

double hole_fraction(const Tensor& mask);

/// Smooth gradient background with a few random rectangles, discs and stripes.
Image synth_toy_image(std::size_t size, std::uint64_t seed);

struct ManifestEntry {
  std::string id;
  std::string image_path;
  std::uint64_t mask_seed = 0;
  std::string split;  // "train" or "test"

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  double coverage = 0.25;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(const std::string& tag) const;
  bool operator==(const DatasetManifest&) const = default;
};

inline constexpr const char* kManifestHeader = "# inpaint-manifest v1";

/// Images (.png/.pgm/.ppm) in `image_dir`, sorted by name, shuffled under
/// `seed`; round(split_ratio * n) go to train. Throws std::invalid_argument on
/// an empty directory or a ratio outside [0,1].
DatasetManifest build_manifest(const std::filesystem::path& image_dir, const MaskParams& mask, double split_ratio,
                               std::uint64_t seed);

std::string serialize_manifest(const DatasetManifest& m);
/// Throws ParseError with the character position of the first problem.
DatasetManifest parse_manifest(const std::string& text);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

struct Sample {
  std::string id;
  Image image;        // RGB, size x size
  Tensor mask_paper;  // [1,1,H,W], 1 = hole
  Tensor edge_gt;     // [1,1,H,W], binary
};

/// Throws ShapeError if the planes disagree in extent or a map is not binary.
void validate(const Sample& s);

struct DataOptions {
  std::size_t image_size = 64;
  CannyOptions canny;
  std::optional<std::filesystem::path> edge_cache_dir;
};

/// Cache file for an edge map; the name encodes the id, size and Canny settings.
std::filesystem::path edge_cache_path(const std::filesystem::path& dir, const std::string& id,
                                      std::size_t size, const CannyOptions& canny);

/// Loads or computes (and stores) the edge map of an already resized image.
Tensor cached_edges(const Image& image, const std::string& id, const DataOptions& opt);

Sample load_sample(const ManifestEntry& entry, const DatasetManifest& manifest, const DataOptions& opt);
std::vector<Sample> load_split(const DatasetManifest& manifest, const std::string& tag, const DataOptions& opt);

}  // namespace inpaint
