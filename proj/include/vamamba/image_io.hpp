#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vamamba/tensor.hpp"

namespace vamamba {

/// Binary portable any-map: P5 (gray) or P6 (RGB), maxval 255.
struct ImageFile {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;  // interleaved, row-major
};

ImageFile decode_pnm(const std::string& bytes);
std::string encode_pnm(const ImageFile& image);

/// Bytes ↔ [1×C×H×W] in [0,1]. Writing clamps to [0,1] and rounds v·255.
Tensor image_to_tensor(const ImageFile& image);
ImageFile tensor_to_image(const Tensor& t);

/// Always returns 1×3×H×W (gray is replicated across channels).
Tensor read_image(const std::string& path);
/// 3-channel tensors become P6; a 1-channel tensor becomes P5. Pass
/// `gray` to write the channel mean of a 3-channel tensor as P5.
void write_image(const Tensor& t, const std::string& path, bool gray = false);

ImageFile read_pnm(const std::string& path);
void write_pnm(const ImageFile& image, const std::string& path);

}  // namespace vamamba
