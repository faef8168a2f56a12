#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dnr/checkpoint.hpp"
#include "dnr/cli.hpp"
#include "dnr/image_io.hpp"
#include "dnr/model.hpp"
#include "dnr/rng.hpp"

using namespace dnr;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run dnr_run(std::vector<std::string> args) {
  args.insert(args.begin(), "dnr");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dnr_test_cli_" + std::to_string(Rng(std::random_device{}()).bits()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines_with(const std::string& text, const std::string& prefix) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) {
    if (l.rfind(prefix, 0) == 0) out.push_back(l);
  }
  return out;
}

double field(const std::string& line, const std::string& key) {
  const auto pos = line.find(key + "=");
  REQUIRE(pos != std::string::npos);
  return std::stod(line.substr(pos + key.size() + 1));
}

const std::vector<std::string> kTiny{"--synth", "6:24", "--width", "4", "--batch", "2", "--crop", "16", "--val", "2"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void write_zero_checkpoint(const std::string& path, const ModelConfig& cfg) {
  TwoStageModel<float> m(cfg);
  m.init_params(1);
  for (auto* p : m.parameters()) std::fill(p->value.data().begin(), p->value.data().end(), 0.0f);
  save_checkpoint(path, Checkpoint{cfg.to_string(), m.export_tensors()});
}

ImageBuffer random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  ImageBuffer b{w, h, {}};
  Rng rng(seed);
  for (std::size_t i = 0; i < w * h * 3; ++i) b.rgb.push_back(static_cast<std::uint8_t>(rng.uniform_int(256)));
  return b;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(dnr_run({}).code == 1);
  CHECK(dnr_run({"bogus"}).code == 1);
  CHECK(dnr_run({"train", "--synth", "2:16"}).code == 1);  // no --checkpoint
  CHECK(dnr_run({"train", "--checkpoint", "/tmp/x"}).code == 1);  // no data
  CHECK(dnr_run({"train", "--checkpoint", "/tmp/x", "--synth", "2:16", "--data", "d"}).code == 1);
  CHECK(dnr_run({"train", "--checkpoint", "/tmp/x", "--synth", "2:16", "--sigma", "25", "--blind", "1:2"}).code == 1);
  CHECK(dnr_run({"train", "--checkpoint", "/tmp/x", "--synth", "2:16", "--arch", "unet"}).code == 1);
  CHECK(dnr_run({"train", "--checkpoint", "/tmp/x", "--synth", "two:16"}).code == 1);
  CHECK(dnr_run({"eval"}).code == 1);
  CHECK(dnr_run({"denoise", "--checkpoint", "c"}).code == 1);
  const auto help = dnr_run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("train") != std::string::npos);
}

TEST_CASE("train: smoke descent, determinism, log format") {
  TempDir tmp;
  const auto args = cat({"train", "--iters1", "50", "--iters2", "0", "--log-every", "1", "--arch", "3dr", "--seed", "3"}, kTiny);
  const auto a = dnr_run(cat(args, {"--checkpoint", tmp / "a.ckpt", "--log", tmp / "a.log"}));
  REQUIRE(a.code == 0);
  const auto iters = lines_with(a.out, "iter=");
  REQUIRE(iters.size() == 50);
  CHECK(field(iters.back(), "loss") < field(iters.front(), "loss"));
  CHECK(iters.front().find("val_psnr=") != std::string::npos);
  CHECK(iters.front().find("sigma=") == std::string::npos);
  CHECK(lines_with(a.out, "# stage=1 loss=psnr iters=50 lr=0.005").size() == 1);
  CHECK(slurp(tmp.path / "a.log") == a.out);

  const auto b = dnr_run(cat(args, {"--checkpoint", tmp / "b.ckpt", "--log", tmp / "b.log"}));
  REQUIRE(b.code == 0);
  CHECK(slurp(tmp.path / "a.ckpt") == slurp(tmp.path / "b.ckpt"));
  CHECK(lines_with(a.out, "iter=") == lines_with(b.out, "iter="));

  const auto ckpt = load_checkpoint(tmp.path / "a.ckpt");
  CHECK(ckpt.config == "arch=3dr branches=2 width=4 lambda1=0.5");
}

TEST_CASE("train: blind logs per-sample sigma") {
  TempDir tmp;
  const auto r = dnr_run(cat({"train", "--iters1", "3", "--iters2", "0", "--log-every", "1", "--arch", "3dr", "--blind",
                              "15:50", "--checkpoint", tmp / "c.ckpt"},
                             kTiny));
  REQUIRE(r.code == 0);
  for (const auto& l : lines_with(r.out, "iter=")) {
    const auto s = l.substr(l.find("sigma=") + 6);
    CHECK(std::count(s.begin(), s.end(), ',') == 1);  // batch of 2
    CHECK(field(l, "sigma") >= 15.0);
  }
}

TEST_CASE("train: resume matches the uninterrupted run") {
  TempDir tmp;
  const auto base = cat({"train", "--arch", "3dr+vggmini", "--log-every", "1", "--seed", "4"}, kTiny);
  const auto full = dnr_run(cat(base, {"--iters1", "6", "--iters2", "3", "--checkpoint", tmp / "full.ckpt"}));
  REQUIRE(full.code == 0);
  REQUIRE(dnr_run(cat(base, {"--iters1", "4", "--iters2", "0", "--checkpoint", tmp / "part.ckpt"})).code == 0);
  const auto resumed =
      dnr_run(cat(base, {"--iters1", "6", "--iters2", "3", "--resume", tmp / "part.ckpt", "--checkpoint", tmp / "resumed.ckpt"}));
  REQUIRE(resumed.code == 0);
  const auto want = lines_with(full.out, "iter=");
  const auto got = lines_with(resumed.out, "iter=");
  REQUIRE(got.size() == 5);  // stage 1: 5, 6; stage 2: 1..3
  CHECK(std::vector(want.end() - 5, want.end()) == got);
  CHECK(slurp(tmp.path / "full.ckpt") == slurp(tmp.path / "resumed.ckpt"));
}

TEST_CASE("architecture mismatch cites the checkpoint config") {
  TempDir tmp;
  write_zero_checkpoint(tmp / "z.ckpt", ModelConfig{Stage2Preset::none, 2, 4, 0.5});
  const auto r = dnr_run(cat({"train", "--iters1", "1", "--resume", tmp / "z.ckpt", "--arch", "3dr+vggmini",
                              "--checkpoint", tmp / "out.ckpt"},
                             kTiny));
  CHECK(r.code == 1);
  CHECK(r.err.find("arch=3dr branches=2 width=4 lambda1=0.5") != std::string::npos);

  write_image(tmp.path / "in.png", random_image(12, 10, 1));
  const auto d = dnr_run({"denoise", "--checkpoint", tmp / "z.ckpt", "--input", tmp / "in.png", "--output",
                          tmp / "out.png", "--width", "8"});
  CHECK(d.code == 1);
  CHECK(d.err.find("arch=3dr branches=2 width=4 lambda1=0.5") != std::string::npos);
}

TEST_CASE("I/O failures exit with 2") {
  TempDir tmp;
  const auto r = dnr_run(cat({"train", "--iters1", "1", "--checkpoint", "/nonexistent/dir/x.ckpt"}, kTiny));
  CHECK(r.code == 2);
  CHECK(r.out.find("iter=") == std::string::npos);  // rejected before training
  CHECK(dnr_run({"denoise", "--checkpoint", tmp / "missing.ckpt", "--input", tmp / "a.png", "--output", tmp / "b.png"})
            .code == 2);
  { std::ofstream(tmp.path / "junk.ckpt") << "garbage"; }
  CHECK(dnr_run({"eval", "--synth", "1:16", "--checkpoint", tmp / "junk.ckpt"}).code == 2);
  CHECK(dnr_run({"eval", "--data", tmp / "nothing-here"}).code == 2);
  write_zero_checkpoint(tmp / "z.ckpt", ModelConfig{Stage2Preset::none, 1, 2, 1.0});
  CHECK(dnr_run({"denoise", "--checkpoint", tmp / "z.ckpt", "--input", tmp / "nope.png", "--output", tmp / "b.png"})
            .code == 2);
}

TEST_CASE("numeric failure exits with 3 and keeps a checkpoint") {
  TempDir tmp;
  const auto r = dnr_run(cat({"train", "--arch", "3dr", "--iters1", "40", "--lr1", "3e38", "--checkpoint", tmp / "n.ckpt"},
                             kTiny));
  CHECK(r.code == 3);
  CHECK(r.err.find("numeric") != std::string::npos);
  REQUIRE(fs::exists(tmp.path / "n.ckpt"));
  const auto ck = load_checkpoint(tmp.path / "n.ckpt");
  CHECK(ck.find("train.progress") != nullptr);
}

TEST_CASE("denoise with a zero checkpoint returns the input") {
  TempDir tmp;
  write_zero_checkpoint(tmp / "z.ckpt", ModelConfig{Stage2Preset::alexmini, 2, 4, 0.5});
  const auto img = random_image(19, 14, 2);
  write_image(tmp.path / "in.png", img);
  const auto plain = dnr_run({"denoise", "--checkpoint", tmp / "z.ckpt", "--input", tmp / "in.png", "--output",
                              tmp / "plain.png"});
  REQUIRE(plain.code == 0);
  const auto ens = dnr_run({"denoise", "--checkpoint", tmp / "z.ckpt", "--input", tmp / "in.png", "--output",
                            tmp / "ens.png", "--ensemble"});
  REQUIRE(ens.code == 0);
  CHECK(read_image(tmp.path / "plain.png") == img);
  CHECK(slurp(tmp.path / "plain.png") == slurp(tmp.path / "ens.png"));

  // Directory mode with metrics against a clean reference.
  fs::create_directories(tmp.path / "noisy");
  fs::create_directories(tmp.path / "clean");
  write_image(tmp.path / "noisy" / "a.png", img);
  write_image(tmp.path / "clean" / "a.png", random_image(19, 14, 3));
  const auto dir = dnr_run({"denoise", "--checkpoint", tmp / "z.ckpt", "--input", tmp / "noisy", "--output",
                            tmp / "outdir", "--clean", tmp / "clean"});
  REQUIRE(dir.code == 0);
  CHECK(fs::exists(tmp.path / "outdir" / "a.png"));
  const auto line = lines_with(dir.out, "a.png").at(0);
  CHECK(field(line, "psnr") == doctest::Approx(field(line, "noisy_psnr")).epsilon(1e-9));
  CHECK(field(line, "ssim") <= 1.0);
}

TEST_CASE("eval: baseline table and CSV") {
  TempDir tmp;
  const auto a = dnr_run({"eval", "--synth", "2:256", "--csv", tmp / "a.csv"});
  REQUIRE(a.code == 0);
  const auto b = dnr_run({"eval", "--synth", "2:256", "--csv", tmp / "b.csv"});
  REQUIRE(b.code == 0);
  const std::string csv = slurp(tmp.path / "a.csv");
  CHECK(csv == slurp(tmp.path / "b.csv"));
  CHECK(a.out == b.out);

  std::istringstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header == "sigma,psnr,ssim,n_images");
  std::vector<double> psnrs;
  for (std::string row; std::getline(is, row);) {
    std::istringstream rs(row);
    std::string sigma, p, s, n;
    std::getline(rs, sigma, ',');
    std::getline(rs, p, ',');
    std::getline(rs, s, ',');
    std::getline(rs, n, ',');
    CHECK(n == "2");
    // Without a checkpoint the "denoised" column is the noisy input.
    CHECK(std::abs(std::stod(p) - 20.0 * std::log10(255.0 / std::stod(sigma))) < 0.2);
    psnrs.push_back(std::stod(p));
  }
  REQUIRE(psnrs.size() == 3);
  CHECK(psnrs[0] > psnrs[1]);
  CHECK(psnrs[1] > psnrs[2]);
  CHECK(a.out.find("noisy_psnr") != std::string::npos);

  const auto c = dnr_run({"eval", "--synth", "2:32", "--sigmas", "10,30", "--csv", tmp / "c.csv"});
  REQUIRE(c.code == 0);
  const auto rows = slurp(tmp.path / "c.csv");
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 3);
  CHECK(rows.find("\n10.00,") != std::string::npos);
}

TEST_CASE("eval with a checkpoint, plain and ensemble") {
  TempDir tmp;
  write_zero_checkpoint(tmp / "z.ckpt", ModelConfig{Stage2Preset::vggmini, 2, 4, 0.5});
  const auto base = dnr_run({"eval", "--synth", "2:32", "--sigmas", "25", "--csv", tmp / "base.csv"});
  const auto zero = dnr_run({"eval", "--synth", "2:32", "--sigmas", "25", "--checkpoint", tmp / "z.ckpt", "--csv",
                             tmp / "zero.csv"});
  const auto ens = dnr_run({"eval", "--synth", "2:32", "--sigmas", "25", "--checkpoint", tmp / "z.ckpt", "--ensemble",
                            "--csv", tmp / "ens.csv"});
  REQUIRE(base.code == 0);
  REQUIRE(zero.code == 0);
  REQUIRE(ens.code == 0);
  CHECK(slurp(tmp.path / "base.csv") == slurp(tmp.path / "zero.csv"));
  CHECK(slurp(tmp.path / "zero.csv") == slurp(tmp.path / "ens.csv"));
}
