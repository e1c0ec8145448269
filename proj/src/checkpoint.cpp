#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vamamba/network.hpp"

namespace vamamba {

namespace {

constexpr char kMagic[4] = {'V', 'A', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const Model& model, CheckpointDtype dtype) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  const std::string cfg = model.cfg.to_text();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  const ParamList params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) {
      if (dtype == CheckpointDtype::f32) put<float>(out, static_cast<float>(v));
      else put<double>(out, v);
    }
  }
  return out;
}

Model checkpoint_from_bytes(const std::string& bytes) {
  Reader r(bytes);
  if (r.text(4) != std::string(kMagic, 4)) throw IoError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  std::istringstream lines(r.text(r.get<std::uint32_t>()));
  for (std::string line; std::getline(lines, line);) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || !cfg.set(line.substr(0, eq), line.substr(eq + 1))) {
      throw IoError("checkpoint config line not understood: '" + line + "'");
    }
  }
  Model model = Model::init(cfg, 0);
  ParamList params = model.parameters();
  const auto count = r.get<std::uint32_t>();
  if (count != params.size()) {
    throw IoError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                  std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    const std::string stored = r.text(r.get<std::uint32_t>());
    if (stored != name) throw IoError("checkpoint tensor '" + stored + "' where '" + name + "' expected");
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw IoError("unknown dtype " + std::to_string(dtype) + " for " + name);
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (shape != t.shape()) {
      throw IoError("shape " + shape_str(shape) + " of " + name + " does not match " +
                    shape_str(t.shape()));
    }
    for (double& v : t.mutable_data()) {
      v = dtype == 1 ? static_cast<double>(r.get<float>()) : r.get<double>();
    }
    check_finite(t.data(), "checkpoint");
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint payload");
  return model;
}

void save_checkpoint(const std::string& path, const Model& model, CheckpointDtype dtype) {
  const std::string bytes = checkpoint_bytes(model, dtype);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

}  // namespace vamamba
