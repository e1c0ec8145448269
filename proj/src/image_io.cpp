#include "vamamba/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vamamba {

namespace {

// Header token reader honouring '#' comments between fields.
class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  std::size_t number(const char* what) {
    skip_space();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1u << 24)) throw IoError(std::string("pnm header: ") + what + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw IoError(std::string("malformed pnm header: missing ") + what);
    return value;
  }
  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw IoError("malformed pnm header: no separator before pixel data");
    }
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

ImageFile decode_pnm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw IoError("unsupported magic: not a pnm file");
  ImageFile img;
  if (bytes[1] == '5') img.channels = 1;
  else if (bytes[1] == '6') img.channels = 3;
  else throw IoError(std::string("unsupported magic 'P") + bytes[1] + "' (only P5/P6)");

  HeaderReader h(bytes);
  img.width = h.number("width");
  img.height = h.number("height");
  const std::size_t maxval = h.number("maxval");
  if (img.width == 0 || img.height == 0) throw IoError("pnm image has zero size");
  if (maxval != 255) throw IoError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  const std::size_t start = h.raster_start();
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() < start + need) {
    throw IoError("truncated pnm payload: " + std::to_string(bytes.size() - std::min(bytes.size(), start)) +
                  " of " + std::to_string(need) + " bytes");
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                    bytes.begin() + static_cast<std::ptrdiff_t>(start + need));
  return img;
}

std::string encode_pnm(const ImageFile& image) {
  if (image.channels != 1 && image.channels != 3) throw IoError("pnm supports 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw IoError("pixel buffer does not match image dimensions");
  }
  std::string out = image.channels == 1 ? "P5\n" : "P6\n";
  out += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

Tensor image_to_tensor(const ImageFile& image) {
  const std::size_t C = image.channels, H = image.height, W = image.width;
  std::vector<double> data(C * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c)
        data[(c * H + y) * W + x] = image.pixels[(y * W + x) * C + c] / 255.0;
  return Tensor({1, C, H, W}, std::move(data));
}

ImageFile tensor_to_image(const Tensor& t) {
  if (t.dim() != 4 || t.size(0) != 1 || (t.size(1) != 1 && t.size(1) != 3)) {
    throw ShapeError("image tensor must be 1×1×H×W or 1×3×H×W, got " + shape_str(t.shape()));
  }
  ImageFile img;
  img.channels = t.size(1);
  img.height = t.size(2);
  img.width = t.size(3);
  img.pixels.resize(img.channels * img.height * img.width);
  const auto d = t.data();
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = std::clamp(d[(c * img.height + y) * img.width + x], 0.0, 1.0);
        img.pixels[(y * img.width + x) * img.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

ImageFile read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return decode_pnm(ss.str());
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_pnm(const ImageFile& image, const std::string& path) {
  const std::string bytes = encode_pnm(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path);
}

Tensor read_image(const std::string& path) {
  Tensor t = image_to_tensor(read_pnm(path));
  if (t.size(1) == 3) return t;
  const std::size_t H = t.size(2), W = t.size(3);
  std::vector<double> rgb;
  rgb.reserve(3 * H * W);
  for (int c = 0; c < 3; ++c) rgb.insert(rgb.end(), t.data().begin(), t.data().end());
  return Tensor({1, 3, H, W}, std::move(rgb));
}

void write_image(const Tensor& t, const std::string& path, bool gray) {
  if (gray && t.dim() == 4 && t.size(0) == 1 && t.size(1) == 3) {
    const std::size_t H = t.size(2), W = t.size(3), plane = H * W;
    const auto d = t.data();
    std::vector<double> mean(plane);
    for (std::size_t i = 0; i < plane; ++i) mean[i] = (d[i] + d[plane + i] + d[2 * plane + i]) / 3.0;
    write_pnm(tensor_to_image(Tensor({1, 1, H, W}, std::move(mean))), path);
    return;
  }
  write_pnm(tensor_to_image(t), path);
}

}  // namespace vamamba
