#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "dnr/checkpoint.hpp"
#include "dnr/error.hpp"
#include "dnr/model.hpp"
#include "support.hpp"

using namespace dnr;
namespace fs = std::filesystem;

namespace {

void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void putf(std::vector<std::uint8_t>& b, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put32(b, u);
}
void puts(std::vector<std::uint8_t>& b, const std::string& s) {
  put32(b, static_cast<std::uint32_t>(s.size()));
  b.insert(b.end(), s.begin(), s.end());
}

Checkpoint sample() {
  Checkpoint c;
  c.config = "arch=3dr branches=1 width=2 lambda1=1";
  c.tensors.emplace_back("w", Tensor<float>(Shape{2, 1}, std::vector<float>{1.5f, -2.0f}));
  c.tensors.emplace_back("s", Tensor<float>(Shape{}, std::vector<float>{0.25f}));
  return c;
}

}  // namespace

TEST_CASE("checkpoint bytes match the documented layout") {
  std::vector<std::uint8_t> want{'D', 'N', 'R', 'C'};
  put32(want, 1);
  puts(want, "arch=3dr branches=1 width=2 lambda1=1");
  put32(want, 2);
  puts(want, "w");
  put32(want, 2);
  put64(want, 2);
  put64(want, 1);
  putf(want, 1.5f);
  putf(want, -2.0f);
  puts(want, "s");
  put32(want, 0);
  putf(want, 0.25f);

  const auto got = encode_checkpoint(sample());
  CHECK(got == want);
  const auto back = decode_checkpoint(want);
  CHECK(back.config == sample().config);
  CHECK(back.tensors == sample().tensors);
  REQUIRE(back.find("s") != nullptr);
  CHECK((*back.find("s"))[0] == 0.25f);
  CHECK(back.find("nope") == nullptr);
}

TEST_CASE("checkpoint round trip is byte-identical") {
  TwoStageModel<float> m(ModelConfig{Stage2Preset::vggmini, 2, 3, 0.5});
  m.init_params(17);
  Checkpoint c{m.config().to_string(), m.export_tensors()};
  const auto bytes = encode_checkpoint(c);
  const auto again = encode_checkpoint(decode_checkpoint(bytes));
  CHECK(again == bytes);

  const fs::path p = fs::temp_directory_path() / "dnr_test_ckpt.bin";
  save_checkpoint(p, c);
  const auto loaded = load_checkpoint(p);
  CHECK(encode_checkpoint(loaded) == bytes);

  TwoStageModel<float> n(ModelConfig::parse(loaded.config));
  n.import_tensors(loaded.tensors);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto y = oracle::random<float>({3, 13, 16}, seed, 0, 1);
    CHECK(denoise(n, y) == denoise(m, y));
  }
  fs::remove(p);
}

TEST_CASE("malformed checkpoints are rejected") {
  const auto good = encode_checkpoint(sample());
  for (std::size_t len = 0; len < good.size(); ++len) {
    CAPTURE(len);
    CHECK_THROWS_AS(decode_checkpoint(std::span(good.data(), len)), IoError);
  }
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("magic"), IoError);
  bad = good;
  bad[4] = 2;
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("version"), IoError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(bad), IoError);
  // Absurd extent must not allocate.
  std::vector<std::uint8_t> huge{'D', 'N', 'R', 'C'};
  put32(huge, 1);
  puts(huge, "x");
  put32(huge, 1);
  puts(huge, "t");
  put32(huge, 2);
  put64(huge, 1ULL << 40);
  put64(huge, 1ULL << 40);
  CHECK_THROWS_AS(decode_checkpoint(huge), IoError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
  CHECK_THROWS_AS(save_checkpoint("/nonexistent/dir/x.ckpt", sample()), IoError);
}
