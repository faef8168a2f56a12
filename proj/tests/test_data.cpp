#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dnr/data.hpp"
#include "dnr/error.hpp"
#include "dnr/image_io.hpp"
#include "dnr/objective.hpp"
#include "dnr/preprocess.hpp"
#include "support.hpp"

using namespace dnr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dnr_test_data_" + std::to_string(Rng(std::random_device{}()).bits()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Tensor<float> position_image(std::size_t h, std::size_t w) {
  Tensor<float> t(Shape{1, h, w});
  for (std::size_t i = 0; i < h * w; ++i) t[i] = static_cast<float>(i);
  return t;
}

}  // namespace

TEST_CASE("noise spec parsing and validation") {
  const auto f = NoiseSpec::parse("25");
  CHECK(f.mode == NoiseSpec::Mode::fixed);
  CHECK(f.sigma == 25.0);
  const auto b = NoiseSpec::parse("15:50");
  CHECK(b.mode == NoiseSpec::Mode::blind);
  CHECK(b.sigma_min == 15.0);
  CHECK(b.sigma_max == 50.0);
  CHECK(b.to_string() == "blind=15:50");
  CHECK(NoiseSpec::parse("12.5").sigma == 12.5);
  for (const char* bad : {"", "x", "0", "-3", "50:15", "0:10", "1:2:3", "25abc"}) {
    CAPTURE(std::string(bad));
    CHECK_THROWS_AS(NoiseSpec::parse(bad), ConfigError);
  }
  Rng rng(1);
  CHECK(NoiseSpec::fixed(7.5).draw_sigma(rng) == 7.5);
}

TEST_CASE("fixed noise calibration") {
  const Tensor<double> clean(Shape{3, 256, 256}, 0.5);
  Rng rng(2024);
  const auto r = add_gaussian_noise(clean, NoiseSpec::fixed(25), rng);
  CHECK(r.sigma_used == 25.0);
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double d = r.noisy[i] - clean[i];
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(clean.size());
  const double mean = sum / n, std = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(std - 25.0 / 255.0) < 0.02 * 25.0 / 255.0);
  CHECK(std::abs(mean) < 3.0 * (25.0 / 255.0) / std::sqrt(n));
  CHECK(std::abs(psnr(r.noisy, clean) - 20.0 * std::log10(255.0 / 25.0)) < 0.1);

  // Unclipped: values leave [0,1] on a bright image.
  const Tensor<double> bright(Shape{1, 64, 64}, 0.98);
  const auto u = add_gaussian_noise(bright, NoiseSpec::fixed(25), rng);
  CHECK(*std::max_element(u.noisy.data().begin(), u.noisy.data().end()) > 1.0);
  const auto c = add_gaussian_noise(bright, NoiseSpec::fixed(25, true), rng);
  CHECK(*std::max_element(c.noisy.data().begin(), c.noisy.data().end()) <= 1.0);
  CHECK(*std::min_element(c.noisy.data().begin(), c.noisy.data().end()) >= 0.0);
}

TEST_CASE("noise is zero mean over a million samples") {
  const Tensor<double> clean(Shape{1, 1000, 1000}, 0.0);
  Rng rng(77);
  const auto r = add_gaussian_noise(clean, NoiseSpec::fixed(10), rng);
  double sum = 0;
  for (double v : r.noisy.data()) sum += v;
  const double n = 1e6;
  CHECK(std::abs(sum / n) < 3.0 * (10.0 / 255.0) / std::sqrt(n));
}

TEST_CASE("tiny sigma leaves the image nearly unchanged") {
  const auto clean = oracle::random<double>({3, 32, 32}, 3, 0, 1);
  Rng rng(5);
  const auto r = add_gaussian_noise(clean, NoiseSpec::fixed(1e-3), rng);
  double mse = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) mse += (r.noisy[i] - clean[i]) * (r.noisy[i] - clean[i]);
  mse /= static_cast<double>(clean.size());
  const double want = (1e-3 / 255) * (1e-3 / 255);
  CHECK(mse == doctest::Approx(want).epsilon(0.05));
}

TEST_CASE("blind sigma is uniform on the range") {
  const auto spec = NoiseSpec::blind(15, 50);
  Rng rng(9);
  const Tensor<float> clean(Shape{1, 1, 1});
  double sum = 0, lo = 1e9, hi = -1e9;
  for (int i = 0; i < 10000; ++i) {
    const double s = add_gaussian_noise(clean, spec, rng).sigma_used;
    sum += s;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  CHECK(std::abs(sum / 10000 - 32.5) < 0.01 * 32.5);
  CHECK(lo >= 15.0);
  CHECK(hi <= 50.0);
}

TEST_CASE("random crop") {
  Rng rng(1);
  const auto img = oracle::random<float>({3, 9, 7}, 4, 0, 1);
  for (int i = 0; i < 20; ++i) {
    const auto c = random_crop(img, 7, rng);  // full width, rows vary
    bool found = false;
    for (std::size_t y0 = 0; y0 <= 2; ++y0) found |= c == slice(img, 1, y0, 7);
    CHECK(found);
  }
  const auto sq = oracle::random<float>({3, 8, 8}, 5, 0, 1);
  CHECK(random_crop(sq, 8, rng) == sq);

  const auto pos = position_image(6, 5);
  for (int i = 0; i < 50; ++i) {
    const auto one = random_crop(pos, 1, rng);
    CHECK(one.shape() == Shape{1, 1, 1});
    CHECK(one[0] == std::floor(one[0]));
    CHECK(one[0] >= 0.0f);
    CHECK(one[0] < 30.0f);
  }
  CHECK_THROWS_AS(random_crop(pos, 0, rng), ConfigError);
  CHECK_THROWS_AS(random_crop(Tensor<float>(Shape{5, 5}), 2, rng), DimensionError);
}

TEST_CASE("crop positions are uniform") {
  // 8x8 image, 5x5 crops -> 16 positions; the top-left value encodes the position.
  const auto pos = position_image(8, 8);
  Rng rng(31337);
  std::vector<double> hist(16, 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto c = random_crop(pos, 5, rng);
    const auto v = static_cast<std::size_t>(c[0]);
    const std::size_t y = v / 8, x = v % 8;
    REQUIRE(y < 4);
    REQUIRE(x < 4);
    // Contiguity: the crop is a window, not a scatter.
    CHECK(c.at({0, 4, 4}) == static_cast<float>((y + 4) * 8 + x + 4));
    hist[y * 4 + x] += 1;
  }
  double chi2 = 0;
  const double expected = draws / 16.0;
  for (double h : hist) chi2 += (h - expected) * (h - expected) / expected;
  CHECK(chi2 < 37.70);  // chi-square, 15 dof, p = 0.001
}

TEST_CASE("crop fuzz stays in bounds, reflect-pads small images") {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t h = 1 + rng.uniform_int(12), w = 1 + rng.uniform_int(12), s = 1 + rng.uniform_int(16);
    const auto img = oracle::random<float>({2, h, w}, trial, 0, 1);
    const auto c = random_crop(img, s, rng);
    REQUIRE(c.shape() == Shape{2, s, s});
    std::set<float> source(img.data().begin(), img.data().end());
    for (float v : c.data()) CHECK(source.count(v) == 1);
  }
  // 3x3 crop of a 2x2 image: reflect padding mirrors without repeating the edge.
  Rng r2(0);
  const auto tiny = position_image(2, 2);
  const auto c = random_crop(tiny, 3, r2);
  CHECK(c.at({0, 0, 0}) == 0.0f);
  CHECK(c.at({0, 0, 2}) == 0.0f);
  CHECK(c.at({0, 2, 0}) == 0.0f);
  CHECK(c.at({0, 1, 1}) == 3.0f);
}

TEST_CASE("synthetic corpus") {
  const auto a = synth_corpus(40, 48, 123);
  const auto b = synth_corpus(40, 48, 123);
  const auto c = synth_corpus(40, 48, 124);
  CHECK(a.size() == 40);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  std::size_t edgy = 0;
  for (const auto& img : a) {
    CHECK(img.shape() == Shape{3, 48, 48});
    for (float v : img.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    bool edge = false;
    for (std::size_t ch = 0; ch < 3 && !edge; ++ch) {
      const auto dx = apply_highpass_bank(slice(img, 0, ch, 1).reshape({48, 48}))[static_cast<int>(Stencil::d_x)];
      for (std::size_t y = 1; y + 1 < 48 && !edge; ++y) {
        for (std::size_t x = 1; x + 1 < 48; ++x) {
          if (std::abs(dx.at({y, x})) > 0.5f) {
            edge = true;
            break;
          }
        }
      }
    }
    edgy += edge;
  }
  CHECK(edgy >= 8);  // >= 20%
  CHECK_THROWS_AS(synth_corpus(0, 8, 1), ConfigError);
}

TEST_CASE("8-bit conversion round-trips") {
  ImageBuffer buf{5, 3, {}};
  for (std::size_t i = 0; i < 45; ++i) buf.rgb.push_back(static_cast<std::uint8_t>(i * 5 + 7));
  const auto t = buf.to_tensor();
  CHECK(t.shape() == Shape{3, 3, 5});
  CHECK(t.at({1, 0, 0}) == doctest::Approx(buf.rgb[1] / 255.0));  // interleaved rgb
  CHECK(ImageBuffer::from_tensor(t) == buf);
  Tensor<double> wild(Shape{3, 1, 1}, 0.0);
  wild[0] = -0.5;
  wild[1] = 1.7;
  wild[2] = 0.5;
  const auto w = ImageBuffer::from_tensor(wild);
  CHECK(w.rgb == std::vector<std::uint8_t>{0, 255, 128});
  CHECK_THROWS_AS(ImageBuffer::from_tensor(Tensor<double>(Shape{1, 2, 2})), ShapeError);
}

TEST_CASE("PNG and PPM files round-trip byte-identically") {
  TempDir tmp;
  ImageBuffer buf{17, 9, {}};
  Rng rng(3);
  for (std::size_t i = 0; i < 17 * 9 * 3; ++i) buf.rgb.push_back(static_cast<std::uint8_t>(rng.uniform_int(256)));
  for (const char* name : {"a.png", "b.ppm"}) {
    const auto p = tmp.path / name;
    write_image(p, buf);
    const auto back = read_image(p);
    CHECK(back == buf);
    const auto p2 = tmp.path / (std::string("again_") + name);
    write_image(p2, back);
    std::ifstream f1(p, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
  }
  CHECK_THROWS_AS(read_image(tmp.path / "missing.png"), IoError);
  {
    std::ofstream junk(tmp.path / "junk.png", std::ios::binary);
    junk << "not an image";
  }
  CHECK_THROWS_AS(read_image(tmp.path / "junk.png"), IoError);
  {
    std::ofstream cut(tmp.path / "cut.ppm", std::ios::binary);
    cut << "P6\n4 4\n255\n" << std::string(10, 'x');
  }
  CHECK_THROWS_AS(read_image(tmp.path / "cut.ppm"), IoError);
}

TEST_CASE("dataset directory listing") {
  TempDir tmp;
  ImageBuffer buf{4, 4, std::vector<std::uint8_t>(48, 100)};
  fs::create_directories(tmp.path / "sub");
  write_image(tmp.path / "b.png", buf);
  write_image(tmp.path / "a.ppm", buf);
  write_image(tmp.path / "sub" / "c.png", buf);
  { std::ofstream(tmp.path / "notes.txt") << "hi"; }
  auto files = list_dataset(tmp.path);
  REQUIRE(files.size() == 3);
  CHECK(files[0].filename() == "a.ppm");
  CHECK(files[1].filename() == "b.png");
  CHECK(files[2].filename() == "c.png");
  CHECK(load_dataset(tmp.path).size() == 3);

  { std::ofstream(tmp.path / "manifest.txt") << "sub/c.png\nb.png\n"; }
  files = list_dataset(tmp.path);
  REQUIRE(files.size() == 2);
  CHECK(files[0].filename() == "c.png");
  CHECK_THROWS_AS(list_dataset(tmp.path / "nope"), IoError);
}

TEST_CASE("batch stream") {
  const auto corpus = synth_corpus(6, 32, 1);
  BatchStream s(corpus, 4, 20, NoiseSpec::fixed(25), 42);
  const Batch b0 = s.next();
  CHECK(b0.noisy.shape() == Shape{4, 3, 20, 20});
  CHECK(b0.clean.shape() == Shape{4, 3, 20, 20});
  CHECK(b0.size() == 4);
  for (double sg : b0.sigmas) CHECK(sg == 25.0);
  CHECK(b0.noisy_item(2).shape() == Shape{3, 20, 20});

  BatchStream again(corpus, 4, 20, NoiseSpec::fixed(25), 42);
  CHECK(again.next().noisy == b0.noisy);
  CHECK_FALSE(s.next().noisy == b0.noisy);
  s.seek(0);
  CHECK(s.next().clean == b0.clean);
  CHECK(s.batch(7).noisy == again.batch(7).noisy);

  // Clean crops come from the corpus, noise is on top.
  const auto diff = b0.noisy_item(0) - b0.clean_item(0);
  double sq = 0;
  for (float v : diff.data()) sq += v * v;
  CHECK(std::sqrt(sq / diff.size()) == doctest::Approx(25.0 / 255).epsilon(0.15));

  BatchStream blind(corpus, 10, 8, NoiseSpec::blind(15, 50), 3);
  for (int i = 0; i < 100; ++i) {
    const auto b = blind.next();
    std::set<double> distinct(b.sigmas.begin(), b.sigmas.end());
    CHECK(distinct.size() >= 2);
    for (double sg : b.sigmas) {
      CHECK(sg >= 15.0);
      CHECK(sg <= 50.0);
    }
  }

  const std::vector<Tensor<float>> empty;
  CHECK_THROWS_AS(BatchStream(empty, 4, 8, NoiseSpec::fixed(25), 1), ConfigError);
  CHECK_THROWS_AS(BatchStream(corpus, 0, 8, NoiseSpec::fixed(25), 1), ConfigError);
}

TEST_CASE("default training crop shape") {
  const auto corpus = synth_corpus(2, 64, 5);  // smaller than 180: reflect-padded
  BatchStream s(corpus, 10, 180, NoiseSpec::fixed(25), 1);
  CHECK(s.next().noisy.shape() == Shape{10, 3, 180, 180});
}
