#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vamamba/random.hpp"
#include "vamamba/tensor.hpp"

namespace vamamba {

enum class Degradation { gaussian_noise, none };
Degradation parse_degradation(const std::string& text);
std::string to_string(Degradation d);

/// degraded = clean + 𝒩(0, σ²) (σ in [0,1] units). No clipping.
Tensor add_gaussian_noise(const Tensor& clean, double sigma, Rng& rng);
std::pair<Tensor, Tensor> synthesize_pair(const Tensor& clean, Degradation kind, double sigma,
                                          Rng& rng);

/// Random crop (when the image is larger than `crop`), horizontal and
/// vertical flips and a multiple-of-90° rotation of a [1×C×H×W] image.
Tensor augment(const Tensor& image, std::size_t crop, Rng& rng);

/// 1×3×size×size clean patch in [0,1] built from oriented gradients,
/// sinusoids and filled random polygons.
Tensor procedural_patch(std::size_t size, Rng& rng);

class DataSource {
 public:
  virtual ~DataSource() = default;
  /// Next clean [1×3×crop×crop] training patch.
  virtual Tensor next(std::size_t crop, Rng& rng) = 0;
};

class ProceduralSource : public DataSource {
 public:
  Tensor next(std::size_t crop, Rng& rng) override;
};

/// All .ppm/.pgm images in a directory (sorted by name), sampled uniformly
/// and augmented.
class FolderSource : public DataSource {
 public:
  explicit FolderSource(const std::string& directory);
  Tensor next(std::size_t crop, Rng& rng) override;
  std::size_t size() const { return images_.size(); }

 private:
  std::vector<Tensor> images_;
};

std::unique_ptr<DataSource> make_source(const std::string& data_dir);

/// Stacks [1×C×H×W] tensors into [B×C×H×W].
Tensor stack_images(const std::vector<Tensor>& images);

}  // namespace vamamba
