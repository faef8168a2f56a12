#include "dnr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dnr/image_io.hpp"

namespace dnr {

NoiseSpec NoiseSpec::fixed(double sigma, bool clip) {
  NoiseSpec s;
  s.mode = Mode::fixed;
  s.sigma = sigma;
  s.clip = clip;
  s.validate();
  return s;
}

NoiseSpec NoiseSpec::blind(double sigma_min, double sigma_max, bool clip) {
  NoiseSpec s;
  s.mode = Mode::blind;
  s.sigma_min = sigma_min;
  s.sigma_max = sigma_max;
  s.clip = clip;
  s.validate();
  return s;
}

NoiseSpec NoiseSpec::parse(const std::string& text) {
  auto number = [&](std::string_view part) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc{} || end != part.data() + part.size()) {
      throw ConfigError("malformed noise level '" + text + "' (expected SIGMA or MIN:MAX)");
    }
    return v;
  };
  const auto colon = text.find(':');
  if (colon == std::string::npos) return fixed(number(text));
  const std::string_view all(text);
  return blind(number(all.substr(0, colon)), number(all.substr(colon + 1)));
}

void NoiseSpec::validate() const {
  if (mode == Mode::fixed) {
    if (!(sigma > 0.0)) throw ConfigError("fixed noise needs sigma > 0");
  } else if (!(sigma_min > 0.0 && sigma_min <= sigma_max)) {
    throw ConfigError("blind noise needs 0 < sigma_min <= sigma_max");
  }
}

double NoiseSpec::draw_sigma(Rng& rng) const {
  return mode == Mode::fixed ? sigma : rng.uniform(sigma_min, sigma_max);
}

std::string NoiseSpec::to_string() const {
  std::ostringstream os;
  if (mode == Mode::fixed) {
    os << "sigma=" << sigma;
  } else {
    os << "blind=" << sigma_min << ':' << sigma_max;
  }
  return os.str();
}

template <class T>
NoisyImage<T> add_gaussian_noise(const Tensor<T>& clean, const NoiseSpec& spec, Rng& rng) {
  spec.validate();
  const double sigma = spec.draw_sigma(rng);
  const double scale = sigma / 255.0;
  Tensor<T> noisy = clean;
  for (auto& v : noisy.data()) {
    double x = static_cast<double>(v) + scale * rng.normal();
    if (spec.clip) x = std::clamp(x, 0.0, 1.0);
    v = static_cast<T>(x);
  }
  return {std::move(noisy), sigma};
}

namespace {

// Reflect-pad the bottom/right of an axis until it reaches `target`.
template <class T>
Tensor<T> grow_axis(Tensor<T> t, std::size_t axis, std::size_t target) {
  while (t.extent(axis) < target) {
    const std::size_t n = t.extent(axis);
    if (n == 1) {
      // Nothing to mirror: replicate the single line.
      Tensor<T> out = pad(t, axis, 0, target - 1, PadMode::zero);
      std::size_t outer = 1, inner = 1;
      for (std::size_t i = 0; i < axis; ++i) outer *= t.extent(i);
      for (std::size_t i = axis + 1; i < t.rank(); ++i) inner *= t.extent(i);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 1; j < target; ++j) {
          std::copy_n(out.data().data() + o * target * inner, inner, out.data().data() + (o * target + j) * inner);
        }
      }
      return out;
    }
    t = pad(t, axis, 0, std::min(n - 1, target - n), PadMode::reflect);
  }
  return t;
}

}  // namespace

template <class T>
Tensor<T> random_crop(const Tensor<T>& image, std::size_t size, Rng& rng) {
  if (size == 0) throw ConfigError("random_crop: size must be >= 1");
  if (image.rank() != 3) throw DimensionError("random_crop: expected (C,H,W), got " + shape_string(image.shape()));
  Tensor<T> src = grow_axis(grow_axis(image, 1, size), 2, size);
  const std::size_t y0 = static_cast<std::size_t>(rng.uniform_int(src.extent(1) - size + 1));
  const std::size_t x0 = static_cast<std::size_t>(rng.uniform_int(src.extent(2) - size + 1));
  return slice(slice(src, 1, y0, size), 2, x0, size);
}

std::vector<Tensor<float>> synth_corpus(std::size_t count, std::size_t size, std::uint64_t seed) {
  if (count == 0 || size == 0) throw ConfigError("synth_corpus: count and size must be >= 1");
  std::vector<Tensor<float>> corpus;
  corpus.reserve(count);
  const double n = static_cast<double>(size);
  for (std::size_t idx = 0; idx < count; ++idx) {
    Rng rng(derive_seed(seed, {idx}));
    std::vector<double> img(3 * size * size);
    auto at = [&](std::size_t c, std::size_t y, std::size_t x) -> double& { return img[(c * size + y) * size + x]; };

    // Linear color gradient.
    for (std::size_t c = 0; c < 3; ++c) {
      const double a = rng.uniform(0.2, 0.8), gx = rng.uniform(-0.4, 0.4), gy = rng.uniform(-0.4, 0.4);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) at(c, y, x) = a + gx * (x / n - 0.5) + gy * (y / n - 0.5);
      }
    }
    // Oriented sinusoids (texture).
    const std::size_t waves = 1 + rng.uniform_int(3);
    for (std::size_t k = 0; k < waves; ++k) {
      const double freq = rng.uniform(1.0, 8.0), theta = rng.uniform(0.0, std::numbers::pi);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double amp[3];
      for (auto& v : amp) v = rng.uniform(-0.12, 0.12);
      const double cx = std::cos(theta), sy = std::sin(theta);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double s = std::sin(2.0 * std::numbers::pi * freq * (cx * x + sy * y) / n + phase);
          for (std::size_t c = 0; c < 3; ++c) at(c, y, x) += amp[c] * s;
        }
      }
    }
    // Soft Gaussian blobs.
    const std::size_t blobs = 1 + rng.uniform_int(4);
    for (std::size_t k = 0; k < blobs; ++k) {
      const double bx = rng.uniform(0.0, n), by = rng.uniform(0.0, n), r = rng.uniform(0.05, 0.3) * n;
      double amp[3];
      for (auto& v : amp) v = rng.uniform(-0.4, 0.4);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
          const double g = std::exp(-d2 / (2.0 * r * r));
          for (std::size_t c = 0; c < 3; ++c) at(c, y, x) += amp[c] * g;
        }
      }
    }
    // Hard-edged rectangles and discs with flat colors.
    if (rng.uniform() < 0.7) {
      const std::size_t shapes = 1 + rng.uniform_int(3);
      for (std::size_t k = 0; k < shapes; ++k) {
        const bool disc = rng.uniform() < 0.5;
        const double x0 = rng.uniform(0.0, n), y0 = rng.uniform(0.0, n);
        const double ext = rng.uniform(0.15, 0.45) * n, ext2 = rng.uniform(0.15, 0.45) * n;
        double color[3];
        for (auto& v : color) v = rng.uniform();
        for (std::size_t y = 0; y < size; ++y) {
          for (std::size_t x = 0; x < size; ++x) {
            const double dx = x - x0, dy = y - y0;
            const bool inside = disc ? dx * dx + dy * dy <= ext * ext * 0.25
                                     : dx >= 0 && dx < ext && dy >= 0 && dy < ext2;
            if (!inside) continue;
            for (std::size_t c = 0; c < 3; ++c) at(c, y, x) = color[c];
          }
        }
      }
    }
    std::vector<float> data(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) data[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
    corpus.emplace_back(Shape{3, size, size}, std::move(data));
  }
  return corpus;
}

std::vector<std::filesystem::path> list_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  const fs::path manifest = dir / "manifest.txt";
  if (fs::exists(manifest)) {
    std::ifstream is(manifest);
    std::string line;
    while (std::getline(is, line)) {
      while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
      if (!line.empty()) files.push_back(dir / line);
    }
    return files;
  }
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<Tensor<float>> load_dataset(const std::filesystem::path& dir) {
  std::vector<Tensor<float>> out;
  for (const auto& p : list_dataset(dir)) out.push_back(read_image(p).to_tensor());
  return out;
}

Tensor<float> Batch::noisy_item(std::size_t i) const {
  Shape s(noisy.shape().begin() + 1, noisy.shape().end());
  return slice(noisy, 0, i, 1).reshape(s);
}

Tensor<float> Batch::clean_item(std::size_t i) const {
  Shape s(clean.shape().begin() + 1, clean.shape().end());
  return slice(clean, 0, i, 1).reshape(s);
}

BatchStream::BatchStream(const std::vector<Tensor<float>>& corpus, std::size_t batch_size, std::size_t crop,
                         NoiseSpec noise, std::uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), crop_(crop), noise_(noise), seed_(seed) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  if (batch_size == 0 || crop == 0) throw ConfigError("batch size and crop must be positive");
  noise_.validate();
}

Batch BatchStream::batch(std::uint64_t index) const {
  Rng rng(derive_seed(seed_, {0xba7c4, index}));
  Batch b{Tensor<float>(Shape{batch_size_, 3, crop_, crop_}), Tensor<float>(Shape{batch_size_, 3, crop_, crop_}), {}};
  const std::size_t item = 3 * crop_ * crop_;
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const auto& img = (*corpus_)[rng.uniform_int(corpus_->size())];
    const Tensor<float> clean = random_crop(img, crop_, rng);
    const auto [noisy, sigma] = add_gaussian_noise(clean, noise_, rng);
    std::copy(clean.data().begin(), clean.data().end(), b.clean.data().begin() + static_cast<long>(i * item));
    std::copy(noisy.data().begin(), noisy.data().end(), b.noisy.data().begin() + static_cast<long>(i * item));
    b.sigmas.push_back(sigma);
  }
  return b;
}

#define DNR_DATA(T)                                                                   \
  template NoisyImage<T> add_gaussian_noise(const Tensor<T>&, const NoiseSpec&, Rng&); \
  template Tensor<T> random_crop(const Tensor<T>&, std::size_t, Rng&);

DNR_DATA(float)
DNR_DATA(double)

}  // namespace dnr
