#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dnr/rng.hpp"
#include "dnr/tensor.hpp"

namespace dnr {

/// Additive white Gaussian noise. Sigmas are in 8-bit units (25 means a
/// standard deviation of 25/255 on [0,1] images).
struct NoiseSpec {
  enum class Mode { fixed, blind };

  Mode mode = Mode::fixed;
  double sigma = 25.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  bool clip = false;

  static NoiseSpec fixed(double sigma, bool clip = false);
  static NoiseSpec blind(double sigma_min, double sigma_max, bool clip = false);
  /// Parses "25" (fixed) or "15:50" (blind).
  static NoiseSpec parse(const std::string& text);

  void validate() const;
  /// Fixed sigma, or Uniform(sigma_min, sigma_max) in blind mode.
  double draw_sigma(Rng& rng) const;
  std::string to_string() const;
};

template <class T>
struct NoisyImage {
  Tensor<T> noisy;
  double sigma_used;
};

/// clean + N(0, (sigma/255)^2) i.i.d. per element, clamped to [0,1] only if
/// spec.clip is set.
template <class T>
NoisyImage<T> add_gaussian_noise(const Tensor<T>& clean, const NoiseSpec& spec, Rng& rng);

/// Uniformly placed size x size crop of a (C, H, W) image. Images smaller
/// than the crop are reflect-padded (bottom/right) first.
template <class T>
Tensor<T> random_crop(const Tensor<T>& image, std::size_t size, Rng& rng);

/// Deterministic procedural RGB images in [0,1]: smooth gradients,
/// sinusoids, soft blobs and hard-edged shapes.
std::vector<Tensor<float>> synth_corpus(std::size_t count, std::size_t size, std::uint64_t seed);

/// Image files of a dataset directory: the entries of "manifest.txt" when
/// present (newline-separated relative paths), else every .png/.ppm found
/// recursively, sorted by path.
std::vector<std::filesystem::path> list_dataset(const std::filesystem::path& dir);
std::vector<Tensor<float>> load_dataset(const std::filesystem::path& dir);

struct Batch {
  Tensor<float> noisy;  // (B, 3, crop, crop)
  Tensor<float> clean;  // (B, 3, crop, crop)
  std::vector<double> sigmas;

  std::size_t size() const { return sigmas.size(); }
  Tensor<float> noisy_item(std::size_t i) const;
  Tensor<float> clean_item(std::size_t i) const;
};

/// Stream of training minibatches. Batch k depends only on (seed, k), so a
/// run can be resumed at any batch index.
class BatchStream {
 public:
  BatchStream(const std::vector<Tensor<float>>& corpus, std::size_t batch_size, std::size_t crop,
              NoiseSpec noise, std::uint64_t seed);

  Batch batch(std::uint64_t index) const;
  Batch next() { return batch(cursor_++); }
  void seek(std::uint64_t index) { cursor_ = index; }

 private:
  const std::vector<Tensor<float>>* corpus_;
  std::size_t batch_size_, crop_;
  NoiseSpec noise_;
  std::uint64_t seed_;
  std::uint64_t cursor_ = 0;
};

}  // namespace dnr
