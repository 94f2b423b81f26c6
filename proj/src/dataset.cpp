#include "inpaint/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void stamp_segment(std::vector<std::uint8_t>& canvas, long h, long w, double x0, double y0, double x1, double y1,
                   double radius) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const long steps = std::max(1L, static_cast<long>(std::ceil(len)));
  const long r = static_cast<long>(std::ceil(radius));
  for (long s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(steps);
    const double cx = x0 + t * (x1 - x0), cy = y0 + t * (y1 - y0);
    for (long dy = -r; dy <= r; ++dy)
      for (long dx = -r; dx <= r; ++dx) {
        const long px = std::lround(cx) + dx, py = std::lround(cy) + dy;
        if (px < 0 || px >= w || py < 0 || py >= h) continue;
        if (std::hypot(px - cx, py - cy) <= radius) canvas[py * w + px] = 1;
      }
  }
}

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

void require_binary_plane(const Tensor& t, std::size_t size, const char* what, const std::string& id) {
  if (t.ndim() != 4 || t.dim(0) != 1 || t.dim(1) != 1 || t.dim(2) != size || t.dim(3) != size)
    throw ShapeError("sample " + id + ": " + what + " must be [1,1," + std::to_string(size) + "," +
                     std::to_string(size) + "]");
  for (double v : t.data())
    if (v != 0.0 && v != 1.0) throw ShapeError("sample " + id + ": " + what + " is not binary");
}

}  // namespace

Tensor gen_irregular_mask(std::size_t h, std::size_t w, const MaskParams& params, std::uint64_t seed) {
  if (h == 0 || w == 0) throw ShapeError("gen_irregular_mask: empty canvas");
  if (!(params.coverage >= 0.0 && params.coverage < 1.0))
    throw std::invalid_argument("mask coverage must lie in [0, 1), got " + format_double(params.coverage));
  if (params.min_width == 0 || params.min_width > params.max_width)
    throw std::invalid_argument("mask stroke widths must satisfy 0 < min <= max");
  const long H = static_cast<long>(h), W = static_cast<long>(w);
  const double total = static_cast<double>(h * w);
  const double upper = params.coverage + 0.05;
  std::vector<std::uint8_t> canvas(h * w, 0);
  std::size_t holes = 0;
  Rng rng(seed);
  std::size_t attempts = 0;
  const double span = static_cast<double>(std::min(h, w));
  while (static_cast<double>(holes) / total < params.coverage) {
    // One stroke: a random walk of a few segments with a fixed brush width.
    double x = rng.uniform(0.0, W - 1.0), y = rng.uniform(0.0, H - 1.0);
    double angle = rng.uniform(0.0, 2.0 * M_PI);
    const double radius = rng.uniform_int(static_cast<int>(params.min_width), static_cast<int>(params.max_width)) / 2.0;
    const int vertices = rng.uniform_int(2, 8);
    for (int v = 0; v < vertices && static_cast<double>(holes) / total < params.coverage; ++v) {
      if (++attempts > params.max_attempts)
        throw std::runtime_error("mask coverage " + format_double(params.coverage) + " not reachable on a " +
                                 std::to_string(h) + "x" + std::to_string(w) + " canvas");
      angle += rng.uniform(-M_PI / 2.0, M_PI / 2.0);
      const double len = rng.uniform(span / 10.0, span / 3.0);
      const double nx = std::clamp(x + len * std::cos(angle), 0.0, W - 1.0);
      const double ny = std::clamp(y + len * std::sin(angle), 0.0, H - 1.0);
      std::vector<std::uint8_t> next = canvas;
      stamp_segment(next, H, W, x, y, nx, ny, radius);
      const std::size_t count = static_cast<std::size_t>(std::count(next.begin(), next.end(), 1));
      // A segment that overshoots the window is dropped and the walk turns.
      if (static_cast<double>(count) / total > upper) continue;
      canvas.swap(next);
      holes = count;
      x = nx;
      y = ny;
    }
  }
  std::vector<double> out(canvas.begin(), canvas.end());
  return Tensor(Shape{1, 1, h, w}, std::move(out));
}

double hole_fraction(const Tensor& mask) {
  double s = 0.0;
  for (double v : mask.data()) s += v;
  return s / static_cast<double>(mask.numel());
}

Image synth_toy_image(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Image img(size, size, 3);
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(20, 235);
    c1[c] = rng.uniform(20, 235);
  }
  const double gx = rng.uniform(-1, 1), gy = rng.uniform(-1, 1);
  const double n = std::max(1e-9, std::fabs(gx) + std::fabs(gy));
  std::vector<double> px(size * size * 3);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double t = 0.5 + 0.5 * (gx * (2.0 * x / size - 1) + gy * (2.0 * y / size - 1)) / n;
      for (int c = 0; c < 3; ++c) px[(y * size + x) * 3 + c] = c0[c] + t * (c1[c] - c0[c]);
    }
  const int shapes = rng.uniform_int(2, 4);
  for (int s = 0; s < shapes; ++s) {
    const int kind = rng.uniform_int(0, 2);
    double col[3];
    for (double& c : col) c = rng.uniform(0, 255);
    const double cx = rng.uniform(0, size), cy = rng.uniform(0, size);
    const double a = rng.uniform(size / 8.0, size / 3.0), b = rng.uniform(size / 8.0, size / 3.0);
    const double period = rng.uniform(size / 10.0, size / 5.0);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = x - cx, dy = y - cy;
        bool inside = false;
        if (kind == 0) inside = std::fabs(dx) <= a && std::fabs(dy) <= b;
        if (kind == 1) inside = dx * dx + dy * dy <= a * a;
        if (kind == 2) inside = std::fabs(dy) <= b && std::fmod(x + size, period) < period / 2;
        if (inside)
          for (int c = 0; c < 3; ++c) px[(y * size + x) * 3 + c] = col[c];
      }
  }
  for (std::size_t i = 0; i < px.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(px[i]), 0L, 255L));
  return img;
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& tag) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == tag) out.push_back(e);
  return out;
}

DatasetManifest build_manifest(const std::filesystem::path& image_dir, const MaskParams& mask, double split_ratio,
                               std::uint64_t seed) {
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0))
    throw std::invalid_argument("split ratio must lie in [0, 1], got " + format_double(split_ratio));
  if (!std::filesystem::is_directory(image_dir))
    throw std::invalid_argument("image directory " + image_dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(image_dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  if (files.empty()) throw std::invalid_argument("no images (.png/.pgm/.ppm) in " + image_dir.string());
  std::sort(files.begin(), files.end());
  Rng rng(seed);
  // Fisher-Yates with our own draws, so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = files.size(); i > 1; --i) std::swap(files[i - 1], files[rng.next() % i]);
  const std::size_t n_train = static_cast<std::size_t>(std::lround(split_ratio * files.size()));
  DatasetManifest m;
  m.seed = seed;
  m.coverage = mask.coverage;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < files.size(); ++i) {
    std::string id = files[i].stem().string();
    for (int k = 2; ids.count(id); ++k) id = files[i].stem().string() + "-" + std::to_string(k);
    ids.insert(id);
    m.entries.push_back({id, files[i].lexically_normal().string(), rng.next(), i < n_train ? "train" : "test"});
  }
  return m;
}

std::string serialize_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << kManifestHeader << "\n# seed " << m.seed << "\n# coverage " << format_double(m.coverage) << "\n";
  for (const auto& e : m.entries) os << e.id << '\t' << e.image_path << '\t' << e.mask_seed << '\t' << e.split << '\n';
  return os.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  DatasetManifest m;
  std::size_t pos = 0, line_no = 0;
  bool seen_header = false, seen_seed = false, seen_coverage = false;
  std::set<std::string> ids;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    ++line_no;
    if (line_no == 1) {
      if (line != kManifestHeader) throw ParseError("manifest must start with '" + std::string(kManifestHeader) + "'", pos);
      seen_header = true;
    } else if (line.rfind("# seed ", 0) == 0) {
      const char* b = line.data() + 7;
      const auto r = std::from_chars(b, line.data() + line.size(), m.seed);
      if (r.ec != std::errc() || r.ptr != line.data() + line.size()) throw ParseError("bad seed", pos + 7);
      seen_seed = true;
    } else if (line.rfind("# coverage ", 0) == 0) {
      const char* b = line.data() + 11;
      const auto r = std::from_chars(b, line.data() + line.size(), m.coverage);
      if (r.ec != std::errc() || r.ptr != line.data() + line.size()) throw ParseError("bad coverage", pos + 11);
      seen_coverage = true;
    } else if (line.empty() || line[0] == '#') {
    } else {
      std::vector<std::string> fields;
      std::vector<std::size_t> starts;
      std::size_t f = 0;
      while (true) {
        const std::size_t tab = line.find('\t', f);
        starts.push_back(pos + f);
        fields.push_back(line.substr(f, tab == std::string::npos ? std::string::npos : tab - f));
        if (tab == std::string::npos) break;
        f = tab + 1;
      }
      if (fields.size() != 4) throw ParseError("expected 4 tab-separated fields, found " + std::to_string(fields.size()), pos);
      ManifestEntry e{fields[0], fields[1], 0, fields[3]};
      if (e.id.empty() || !ids.insert(e.id).second) throw ParseError("empty or duplicate sample id", starts[0]);
      const auto r = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), e.mask_seed);
      if (fields[2].empty() || r.ec != std::errc() || r.ptr != fields[2].data() + fields[2].size())
        throw ParseError("bad mask seed '" + fields[2] + "'", starts[2]);
      if (e.split != "train" && e.split != "test") throw ParseError("split must be train or test", starts[3]);
      m.entries.push_back(std::move(e));
    }
    pos = end + 1;
  }
  if (!seen_header) throw ParseError("empty manifest", 0);
  if (!seen_seed || !seen_coverage) throw ParseError("manifest lacks '# seed' or '# coverage' header", text.size());
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << serialize_manifest(m);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_manifest(ss.str());
}

void validate(const Sample& s) {
  const std::size_t size = s.image.width;
  if (s.image.height != size || s.image.channels != 3)
    throw ShapeError("sample " + s.id + ": image must be square RGB");
  require_binary_plane(s.mask_paper, size, "mask", s.id);
  require_binary_plane(s.edge_gt, size, "edge map", s.id);
}

std::filesystem::path edge_cache_path(const std::filesystem::path& dir, const std::string& id, std::size_t size,
                                      const CannyOptions& canny) {
  return dir / (id + ".n" + std::to_string(size) + ".s" + format_double(canny.sigma) + ".l" +
                format_double(canny.low) + ".h" + format_double(canny.high) + ".png");
}

Tensor cached_edges(const Image& image, const std::string& id, const DataOptions& opt) {
  if (!opt.edge_cache_dir) return canny(image, opt.canny);
  const auto path = edge_cache_path(*opt.edge_cache_dir, id, image.width, opt.canny);
  if (std::filesystem::exists(path)) {
    Tensor e = binary_from_image(load_image(path));
    if (e.dim(2) == image.height && e.dim(3) == image.width) return e;
  }
  Tensor e = canny(image, opt.canny);
  std::filesystem::create_directories(*opt.edge_cache_dir);
  save_image(binary_to_image(e), path);
  return e;
}

Sample load_sample(const ManifestEntry& entry, const DatasetManifest& manifest, const DataOptions& opt) {
  Sample s;
  s.id = entry.id;
  s.image = square_resize(to_rgb(load_image(entry.image_path)), opt.image_size);
  MaskParams mp;
  mp.coverage = manifest.coverage;
  s.mask_paper = gen_irregular_mask(opt.image_size, opt.image_size, mp, entry.mask_seed);
  s.edge_gt = cached_edges(s.image, entry.id, opt);
  validate(s);
  return s;
}

std::vector<Sample> load_split(const DatasetManifest& manifest, const std::string& tag, const DataOptions& opt) {
  std::vector<Sample> out;
  for (const auto& e : manifest.split(tag)) out.push_back(load_sample(e, manifest, opt));
  return out;
}

}  // namespace inpaint
