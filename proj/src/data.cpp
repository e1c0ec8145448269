#include "vamamba/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "vamamba/image_io.hpp"

namespace vamamba {

Degradation parse_degradation(const std::string& text) {
  if (text == "gaussian_noise") return Degradation::gaussian_noise;
  if (text == "none") return Degradation::none;
  throw ConfigError("unknown degradation '" + text + "' (expected gaussian_noise or none)");
}

std::string to_string(Degradation d) {
  return d == Degradation::gaussian_noise ? "gaussian_noise" : "none";
}

Tensor add_gaussian_noise(const Tensor& clean, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
  Tensor out = clean.detach();
  if (sigma == 0.0) return out;
  for (double& v : out.mutable_data()) v += rng.normal(0.0, sigma);
  return out;
}

std::pair<Tensor, Tensor> synthesize_pair(const Tensor& clean, Degradation kind, double sigma,
                                          Rng& rng) {
  if (kind == Degradation::none) return {clean.detach(), clean};
  return {add_gaussian_noise(clean, sigma, rng), clean};
}

Tensor augment(const Tensor& image, std::size_t crop, Rng& rng) {
  if (image.dim() != 4 || image.size(0) != 1) {
    throw ShapeError("augment expects 1×C×H×W, got " + shape_str(image.shape()));
  }
  const std::size_t C = image.size(1), H = image.size(2), W = image.size(3);
  if (crop > H || crop > W) {
    throw ShapeError("crop " + std::to_string(crop) + " exceeds image " + std::to_string(H) + "x" +
                     std::to_string(W));
  }
  const std::size_t y0 = H > crop ? rng.index(H - crop + 1) : 0;
  const std::size_t x0 = W > crop ? rng.index(W - crop + 1) : 0;
  const bool flip_h = rng.coin(), flip_v = rng.coin();
  const std::size_t turns = rng.index(4);

  const auto src = image.data();
  std::vector<double> out(C * crop * crop);
  const std::size_t n = crop - 1;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < crop; ++y)
      for (std::size_t x = 0; x < crop; ++x) {
        // Output (y, x) pulls from the rotated, then flipped, crop.
        std::size_t sy = y, sx = x;
        if (flip_v) sy = n - sy;
        if (flip_h) sx = n - sx;
        for (std::size_t t = 0; t < turns; ++t) {
          const std::size_t ry = sx, rx = n - sy;
          sy = ry;
          sx = rx;
        }
        out[(c * crop + y) * crop + x] = src[(c * H + y0 + sy) * W + x0 + sx];
      }
  return Tensor({1, C, crop, crop}, std::move(out));
}

Tensor procedural_patch(std::size_t size, Rng& rng) {
  const double pi = std::numbers::pi;
  const std::size_t plane = size * size;
  std::vector<double> img(3 * plane);

  // Base: oriented gradient per channel.
  const double theta = rng.uniform(0.0, 2.0 * pi);
  const double dx = std::cos(theta), dy = std::sin(theta);
  for (std::size_t c = 0; c < 3; ++c) {
    const double lo = rng.uniform(0.1, 0.5), hi = rng.uniform(0.5, 0.9);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double u = (dx * (x + 0.5) + dy * (y + 0.5)) / static_cast<double>(size);
        const double t = std::clamp(0.5 + 0.5 * u, 0.0, 1.0);
        img[c * plane + y * size + x] = lo + (hi - lo) * t;
      }
  }

  // Sinusoidal texture.
  const double freq = rng.uniform(0.5, 3.0) * 2.0 * pi / static_cast<double>(size);
  const double phi = rng.uniform(0.0, 2.0 * pi), amp = rng.uniform(0.05, 0.2);
  const double a = rng.uniform(0.0, pi);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double s = amp * std::sin(freq * (std::cos(a) * x + std::sin(a) * y) + phi);
      for (std::size_t c = 0; c < 3; ++c) img[c * plane + y * size + x] += s;
    }

  // Filled convex polygons with flat colours.
  const std::size_t polygons = 1 + rng.index(3);
  for (std::size_t p = 0; p < polygons; ++p) {
    const double cx = rng.uniform(0.0, size), cy = rng.uniform(0.0, size);
    const double radius = rng.uniform(0.2, 0.5) * static_cast<double>(size);
    const std::size_t sides = 3 + rng.index(4);
    const double rot = rng.uniform(0.0, 2.0 * pi);
    std::vector<std::pair<double, double>> verts;
    for (std::size_t k = 0; k < sides; ++k) {
      const double ang = rot + 2.0 * pi * static_cast<double>(k) / static_cast<double>(sides);
      verts.emplace_back(cx + radius * std::cos(ang), cy + radius * std::sin(ang));
    }
    double colour[3];
    for (double& v : colour) v = rng.uniform(0.0, 1.0);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        bool inside = true;
        for (std::size_t k = 0; k < sides && inside; ++k) {
          const auto [x1, y1] = verts[k];
          const auto [x2, y2] = verts[(k + 1) % sides];
          inside = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1) >= 0.0;
        }
        if (inside)
          for (std::size_t c = 0; c < 3; ++c) img[c * plane + y * size + x] = colour[c];
      }
  }

  for (double& v : img) v = std::clamp(v, 0.0, 1.0);
  return Tensor({1, 3, size, size}, std::move(img));
}

Tensor ProceduralSource::next(std::size_t crop, Rng& rng) { return procedural_patch(crop, rng); }

FolderSource::FolderSource(const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(directory, ec)) throw IoError("data directory not found: " + directory);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) images_.push_back(read_image(f.string()));
  if (images_.empty()) throw IoError("no .ppm/.pgm images in " + directory);
}

Tensor FolderSource::next(std::size_t crop, Rng& rng) {
  return augment(images_[rng.index(images_.size())], crop, rng);
}

std::unique_ptr<DataSource> make_source(const std::string& data_dir) {
  if (data_dir.empty()) return std::make_unique<ProceduralSource>();
  return std::make_unique<FolderSource>(data_dir);
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw ShapeError("stack_images: empty list");
  const Shape& first = images.front().shape();
  if (first.size() != 4 || first[0] != 1) throw ShapeError("stack_images expects 1×C×H×W tensors");
  std::vector<double> data;
  data.reserve(images.size() * images.front().numel());
  for (const auto& t : images) {
    if (t.shape() != first) throw ShapeError("stack_images: mismatched shapes");
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor({images.size(), first[1], first[2], first[3]}, std::move(data));
}

}  // namespace vamamba
