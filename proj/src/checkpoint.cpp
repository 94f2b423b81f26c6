#include "inpaint/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {

constexpr char kMagic[8] = {'I', 'N', 'P', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw FormatError(std::string("truncated checkpoint while reading ") + what,
                        offset_ + static_cast<std::size_t>(is_.gcount()));
    offset_ += n;
  }
  std::uint64_t uint(std::size_t width, const char* what) {
    unsigned char b[8] = {};
    bytes(reinterpret_cast<char*>(b), width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::string str(const char* what) {
    const std::size_t at = offset_;
    const auto n = uint(4, what);
    if (n > (1u << 20)) throw FormatError(std::string("implausible length for ") + what, at);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
  std::size_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_string(os, k);
    put_string(os, v);
  }
  put_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_string(os, name);
    put_u32(os, static_cast<std::uint32_t>(t.ndim()));
    for (auto e : t.shape()) put_u64(os, e);
    for (double v : t.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
  Reader r(is);
  char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a checkpoint file (bad magic)", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.uint(4, "version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  Checkpoint ckpt;
  const auto n_meta = r.uint(4, "metadata count");
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.str("metadata key");
    ckpt.metadata[k] = r.str("metadata value");
  }
  const auto n_tensors = r.uint(4, "tensor count");
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str("tensor name");
    const std::size_t dims_at = r.offset();
    const auto ndim = r.uint(4, "tensor rank");
    if (ndim == 0 || ndim > 8) throw FormatError("bad rank for tensor " + name, dims_at);
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint64_t d = 0; d < ndim; ++d) {
      const std::size_t at = r.offset();
      const auto e = r.uint(8, "tensor extent");
      if (e == 0 || e > (1ull << 32)) throw FormatError("bad extent for tensor " + name, at);
      shape.push_back(static_cast<std::size_t>(e));
      count *= e;
    }
    if (count > (1ull << 31)) throw FormatError("tensor " + name + " too large", dims_at);
    std::vector<double> values(count);
    for (auto& v : values) v = std::bit_cast<double>(r.uint(8, "tensor values"));
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

void store_parameters(Checkpoint& ckpt, const ParameterSet& params, const std::string& prefix) {
  for (const auto& e : params.entries()) ckpt.tensors.emplace_back(prefix + e.name, e.tensor.detach());
}

void restore_parameters(const Checkpoint& ckpt, ParameterSet& params, const std::string& prefix) {
  for (const auto& e : params.entries()) {
    const Tensor* src = ckpt.find(prefix + e.name);
    if (!src) throw std::runtime_error("checkpoint lacks parameter " + prefix + e.name);
    if (src->shape() != e.tensor.shape())
      throw ShapeError("checkpoint parameter " + prefix + e.name + " has shape " +
                       shape_str(src->shape()) + ", model expects " + shape_str(e.tensor.shape()));
    Tensor dst = e.tensor;
    std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
  }
}

void store_optimizer(Checkpoint& ckpt, Adam& opt, const std::string& prefix) {
  ckpt.metadata[prefix + "steps"] = std::to_string(opt.steps_taken());
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    ckpt.tensors.emplace_back(prefix + "m." + std::to_string(i), opt.first_moments()[i].detach());
    ckpt.tensors.emplace_back(prefix + "v." + std::to_string(i), opt.second_moments()[i].detach());
  }
}

void restore_optimizer(const Checkpoint& ckpt, Adam& opt, const std::string& prefix) {
  auto it = ckpt.metadata.find(prefix + "steps");
  if (it == ckpt.metadata.end()) throw std::runtime_error("checkpoint lacks optimizer state " + prefix);
  opt.set_steps_taken(std::stoll(it->second));
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    for (auto [tag, bufs] : {std::pair{"m.", &opt.first_moments()}, std::pair{"v.", &opt.second_moments()}}) {
      const Tensor* src = ckpt.find(prefix + tag + std::to_string(i));
      Tensor& dst = (*bufs)[i];
      if (!src || src->shape() != dst.shape())
        throw std::runtime_error("checkpoint optimizer state " + prefix + tag + std::to_string(i) +
                                 " missing or misshapen");
      std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
    }
  }
}

}  // namespace inpaint
