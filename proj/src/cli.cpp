#include "dnr/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "dnr/checkpoint.hpp"
#include "dnr/data.hpp"
#include "dnr/error.hpp"
#include "dnr/image_io.hpp"
#include "dnr/model.hpp"
#include "dnr/objective.hpp"
#include "dnr/train.hpp"

namespace fs = std::filesystem;

namespace dnr {
namespace {

struct ArchArgs {
  std::string arch = "3dr+alexmini";
  std::size_t branches = 2;
  std::size_t width = 32;
  double lambda1 = 0.5;
  std::vector<CLI::Option*> opts;

  void add(CLI::App& app) {
    opts.push_back(app.add_option("--arch", arch, "3dr, 3dr+alexmini or 3dr+vggmini")->capture_default_str());
    opts.push_back(app.add_option("--branches", branches, "first-stage branches")->capture_default_str());
    opts.push_back(app.add_option("--width", width, "first-stage feature maps")->capture_default_str());
    opts.push_back(app.add_option("--lambda1", lambda1, "residual weight of the first branch")->capture_default_str());
  }
  bool given() const {
    for (auto* o : opts) {
      if (o->count() > 0) return true;
    }
    return false;
  }
  ModelConfig config() const {
    ModelConfig c;
    c.stage2 = parse_arch(arch);
    c.branches = branches;
    c.width = width;
    c.lambda1 = lambda1;
    c.validate();
    return c;
  }
};

struct TrainArgs {
  ArchArgs arch;
  std::string data, synth, checkpoint, resume, log, blind;
  double sigma = 25.0;
  std::size_t val = 4;
  bool f64 = false;
  TrainConfig tc;
};

struct DenoiseArgs {
  ArchArgs arch;
  std::string checkpoint, input, output, clean;
  double add_noise = 0.0;
  std::uint64_t seed = 0;
  bool ensemble = false, f64 = false;
};

struct EvalArgs {
  std::string data, synth, checkpoint, csv;
  std::vector<double> sigmas{15.0, 25.0, 50.0};
  std::uint64_t seed = 0;
  bool ensemble = false, f64 = false, clip = false;
};

std::pair<std::size_t, std::size_t> parse_synth(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    const long long count = std::stoll(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument(text);
    const std::string rest = text.substr(colon + 1);
    const long long size = std::stoll(rest, &used);
    if (used != rest.size() || count <= 0 || size <= 0) throw std::invalid_argument(text);
    return {static_cast<std::size_t>(count), static_cast<std::size_t>(size)};
  } catch (const std::logic_error&) {
    throw ConfigError("--synth expects COUNT:SIZE with positive integers, got '" + text + "'");
  }
}

void require_writable(const fs::path& path, const std::string& what) {
  const fs::path parent = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  if (!fs::is_directory(parent)) {
    throw IoError("cannot write " + what + " '" + path.string() + "': directory '" + parent.string() +
                  "' does not exist");
  }
  if (fs::is_directory(path)) throw IoError("cannot write " + what + " '" + path.string() + "': is a directory");
  const bool existed = fs::exists(path);
  {
    std::ofstream probe(path, std::ios::binary | std::ios::app);
    if (!probe) throw IoError("cannot write " + what + " '" + path.string() + "'");
  }
  if (!existed) fs::remove(path);
}

/// Loads parameters, rejecting a checkpoint whose topology differs from an
/// explicitly requested one.
ModelConfig checkpoint_config(const Checkpoint& ckpt, const ArchArgs& arch, const std::string& path) {
  ModelConfig stored;
  try {
    stored = ModelConfig::parse(ckpt.config);
  } catch (const ConfigError& e) {
    throw ConfigError("checkpoint '" + path + "' has an unreadable config \"" + ckpt.config + "\": " + e.what());
  }
  if (arch.given()) {
    const ModelConfig wanted = arch.config();
    if (!(wanted == stored)) {
      throw ConfigError("architecture mismatch: requested \"" + wanted.to_string() + "\" but checkpoint '" + path +
                        "' holds \"" + ckpt.config + "\"");
    }
  }
  return stored;
}

template <class T>
void load_model(TwoStageModel<T>& model, const Checkpoint& ckpt) {
  try {
    model.import_tensors(ckpt.tensors);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (checkpoint config \"" + ckpt.config + "\")");
  }
}

template <class T>
Tensor<T> run_model(const TwoStageModel<T>& model, const Tensor<T>& noisy, bool ensemble) {
  return ensemble ? enhanced_denoise(model, noisy) : denoise(model, noisy);
}

std::vector<Tensor<float>> load_images(const std::string& data, const std::string& synth, std::uint64_t seed,
                                       std::size_t* synth_size) {
  if (!synth.empty()) {
    const auto [count, size] = parse_synth(synth);
    if (synth_size) *synth_size = size;
    return synth_corpus(count, size, seed);
  }
  if (!fs::is_directory(data)) throw IoError("dataset directory '" + data + "' not found");
  auto images = load_dataset(data);
  if (images.empty()) throw IoError("dataset directory '" + data + "' contains no images");
  return images;
}

template <class T>
int cmd_train(const TrainArgs& a, std::ostream& out) {
  const NoiseSpec noise = a.blind.empty() ? NoiseSpec::fixed(a.sigma) : NoiseSpec::parse(a.blind);
  noise.validate();
  a.tc.validate();
  ModelConfig config = a.arch.config();

  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    config = checkpoint_config(*resume, a.arch, a.resume);
  }
  require_writable(a.checkpoint, "checkpoint");

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::app);
    if (!log_file) throw IoError("cannot open log file '" + a.log + "'");
  }
  auto emit = [&](const std::string& line) {
    out << line << '\n' << std::flush;
    if (log_file.is_open()) log_file << line << '\n' << std::flush;
  };

  std::size_t synth_size = 0;
  std::vector<Tensor<float>> corpus = load_images(a.data, a.synth, derive_seed(a.tc.seed, {0xc0}), &synth_size);
  std::vector<Tensor<float>> held_out;
  if (!a.synth.empty()) {
    if (a.val > 0) held_out = synth_corpus(a.val, synth_size, derive_seed(a.tc.seed, {0x5a1}));
  } else if (corpus.size() > a.val) {
    held_out.assign(corpus.end() - static_cast<std::ptrdiff_t>(a.val), corpus.end());
    corpus.resize(corpus.size() - a.val);
  }

  TwoStageModel<T> model(config);
  model.init_params(a.tc.seed);
  Trainer<T> trainer(model, corpus, noise, a.tc);
  trainer.set_validation(ValidationSet<T>::make(held_out, noise, derive_seed(a.tc.seed, {0x7a1})));
  if (resume) trainer.restore(*resume);

  emit("# config " + config.to_string() + " noise=" + noise.to_string() + " images=" + std::to_string(corpus.size()) +
       " val_images=" + std::to_string(held_out.size()));
  const bool blind = noise.mode == NoiseSpec::Mode::blind;
  int current_stage = 0;
  auto header = [&](int stage) {
    if (stage == current_stage) return;
    current_stage = stage;
    char buf[160];
    if (stage == 1) {
      std::snprintf(buf, sizeof buf, "# stage=1 loss=psnr iters=%llu lr=%g", static_cast<unsigned long long>(a.tc.iters1),
                    a.tc.lr1);
    } else {
      std::snprintf(buf, sizeof buf, "# stage=2 loss=mixed iters=%llu lr=%g", static_cast<unsigned long long>(a.tc.iters2),
                    a.tc.lr2);
    }
    emit(buf);
  };
  auto save = [&] { save_checkpoint(a.checkpoint, trainer.make_checkpoint()); };

  try {
    trainer.run([&](const LogEntry& e) {
      header(e.stage);
      emit(format_log_line(e, blind));
      save();
    });
  } catch (const NumericError&) {
    // Parameters are untouched by the failed step.
    save();
    throw;
  }
  save();
  emit("# saved " + a.checkpoint);
  return kExitOk;
}

std::vector<std::pair<fs::path, fs::path>> denoise_jobs(const DenoiseArgs& a) {
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(a.input)) {
    if (fs::exists(a.output) && !fs::is_directory(a.output)) {
      throw IoError("--output '" + a.output + "' must be a directory when --input is one");
    }
    fs::create_directories(a.output);
    for (const auto& p : list_dataset(a.input)) jobs.emplace_back(p, fs::path(a.output) / p.filename());
    if (jobs.empty()) throw IoError("no images found in '" + a.input + "'");
  } else {
    if (!fs::exists(a.input)) throw IoError("input image '" + a.input + "' not found");
    fs::path dst = a.output;
    if (fs::is_directory(dst)) dst /= fs::path(a.input).filename();
    require_writable(dst, "output image");
    jobs.emplace_back(a.input, dst);
  }
  return jobs;
}

template <class T>
int cmd_denoise(const DenoiseArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  TwoStageModel<T> model(checkpoint_config(ckpt, a.arch, a.checkpoint));
  load_model(model, ckpt);

  const auto jobs = denoise_jobs(a);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& [src, dst] = jobs[i];
    Tensor<T> noisy = read_image(src).to_tensor().template cast<T>();
    if (a.add_noise > 0.0) {
      Rng rng(derive_seed(a.seed, {i}));
      noisy = add_gaussian_noise(noisy, NoiseSpec::fixed(a.add_noise), rng).noisy;
    }
    const Tensor<T> restored = run_model(model, noisy, a.ensemble);
    const ImageBuffer written = ImageBuffer::from_tensor(restored);
    write_image(dst, written);

    std::ostringstream line;
    line << src.filename().string() << " -> " << dst.string();
    if (!a.clean.empty()) {
      fs::path clean_path = a.clean;
      if (fs::is_directory(clean_path)) clean_path /= src.filename();
      const Tensor<T> clean = read_image(clean_path).to_tensor().template cast<T>();
      if (clean.shape() != noisy.shape()) {
        throw IoError("clean image '" + clean_path.string() + "' is " + shape_string(clean.shape()) +
                      ", noisy input is " + shape_string(noisy.shape()));
      }
      const Tensor<T> saved = written.to_tensor().template cast<T>();
      line << std::fixed << std::setprecision(4) << " psnr=" << psnr(saved, clean) << " ssim=" << ssim(saved, clean)
           << " noisy_psnr=" << psnr(noisy, clean) << " noisy_ssim=" << ssim(noisy, clean);
    }
    out << line.str() << '\n';
  }
  return kExitOk;
}

std::string fmt(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

template <class T>
int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::unique_ptr<TwoStageModel<T>> model;
  if (!a.checkpoint.empty()) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    model = std::make_unique<TwoStageModel<T>>(checkpoint_config(ckpt, ArchArgs{}, a.checkpoint));
    load_model(*model, ckpt);
  }
  if (!a.csv.empty()) require_writable(a.csv, "csv");
  if (a.sigmas.empty()) throw ConfigError("--sigmas needs at least one value");

  const auto images = load_images(a.data, a.synth, derive_seed(a.seed, {0xe7}), nullptr);

  struct Row {
    double sigma;
    MetricReport denoised, noisy;
  };
  std::vector<Row> rows;
  for (const double sigma : a.sigmas) {
    const NoiseSpec spec = NoiseSpec::fixed(sigma, a.clip);
    spec.validate();
    Row row{sigma, {}, {}};
    for (std::size_t i = 0; i < images.size(); ++i) {
      Rng rng(derive_seed(a.seed, {i, static_cast<std::uint64_t>(std::llround(sigma * 1000.0))}));
      const Tensor<T> clean = images[i].template cast<T>();
      const Tensor<T> noisy = add_gaussian_noise(clean, spec, rng).noisy;
      const Tensor<T> restored = model ? run_model(*model, noisy, a.ensemble) : noisy;
      row.denoised.add(psnr(restored, clean), ssim(restored, clean));
      row.noisy.add(psnr(noisy, clean), ssim(noisy, clean));
    }
    rows.push_back(std::move(row));
  }

  out << std::left << std::setw(8) << "sigma" << std::setw(10) << "psnr" << std::setw(9) << "ssim" << std::setw(12)
      << "noisy_psnr" << std::setw(12) << "noisy_ssim"
      << "n_images\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(8) << fmt(r.sigma, 2) << std::setw(10) << fmt(r.denoised.mean_psnr(), 4)
        << std::setw(9) << fmt(r.denoised.mean_ssim(), 4) << std::setw(12) << fmt(r.noisy.mean_psnr(), 4)
        << std::setw(12) << fmt(r.noisy.mean_ssim(), 4) << r.denoised.count() << '\n';
  }
  if (!a.csv.empty()) {
    std::ofstream csv(a.csv);
    if (!csv) throw IoError("cannot write csv '" + a.csv + "'");
    csv << "sigma,psnr,ssim,n_images\n";
    for (const auto& r : rows) {
      csv << fmt(r.sigma, 2) << ',' << fmt(r.denoised.mean_psnr(), 6) << ',' << fmt(r.denoised.mean_ssim(), 6) << ','
          << r.denoised.count() << '\n';
    }
    if (!csv) throw IoError("failed writing csv '" + a.csv + "'");
  }
  return kExitOk;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    err << "dnr: numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "dnr: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "dnr: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "dnr: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage residual image denoiser", "dnr"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model on clean images");
  auto* data_opt = train->add_option("--data", ta.data, "directory of clean training images");
  train->add_option("--synth", ta.synth, "use COUNT:SIZE procedural images instead of --data")->excludes(data_opt);
  train->add_option("--checkpoint", ta.checkpoint, "output checkpoint path")->required();
  train->add_option("--resume", ta.resume, "continue from this checkpoint");
  train->add_option("--log", ta.log, "append log lines to this file");
  auto* sigma_opt = train->add_option("--sigma", ta.sigma, "fixed noise level (8-bit units)")->capture_default_str();
  train->add_option("--blind", ta.blind, "blind noise range MIN:MAX")->excludes(sigma_opt);
  ta.arch.add(*train);
  train->add_option("--iters1", ta.tc.iters1, "stage-1 iterations")->capture_default_str();
  train->add_option("--iters2", ta.tc.iters2, "stage-2 iterations")->capture_default_str();
  train->add_option("--lr1", ta.tc.lr1, "stage-1 learning rate")->capture_default_str();
  train->add_option("--lr2", ta.tc.lr2, "stage-2 learning rate")->capture_default_str();
  train->add_option("--batch", ta.tc.batch, "minibatch size")->capture_default_str();
  train->add_option("--crop", ta.tc.crop, "training crop size")->capture_default_str();
  train->add_option("--seed", ta.tc.seed, "random seed")->capture_default_str();
  train->add_option("--log-every", ta.tc.log_every, "iterations between log lines")->capture_default_str();
  train->add_option("--val", ta.val, "held-out validation images")->capture_default_str();
  train->add_flag("--f64", ta.f64, "train in double precision");

  DenoiseArgs da;
  auto* den = app.add_subcommand("denoise", "denoise an image or a directory of images");
  den->add_option("--checkpoint", da.checkpoint, "trained checkpoint")->required();
  den->add_option("--input", da.input, "noisy image or directory")->required();
  den->add_option("--output", da.output, "output image or directory")->required();
  den->add_option("--clean", da.clean, "clean reference image or directory, for metrics");
  den->add_option("--add-noise", da.add_noise, "corrupt the input with this sigma first");
  den->add_option("--seed", da.seed, "seed for --add-noise")->capture_default_str();
  den->add_flag("--ensemble", da.ensemble, "average over four rotations");
  den->add_flag("--f64", da.f64, "run in double precision");
  da.arch.add(*den);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "PSNR/SSIM over a set of clean images at several noise levels");
  auto* edata = ev->add_option("--data", ea.data, "directory of clean images");
  ev->add_option("--synth", ea.synth, "use COUNT:SIZE procedural images")->excludes(edata);
  ev->add_option("--checkpoint", ea.checkpoint, "trained checkpoint (omit for the noisy baseline)");
  ev->add_option("--sigmas", ea.sigmas, "noise levels")->delimiter(',')->capture_default_str();
  ev->add_option("--csv", ea.csv, "write sigma,psnr,ssim,n_images rows here");
  ev->add_option("--seed", ea.seed, "noise seed")->capture_default_str();
  ev->add_flag("--ensemble", ea.ensemble, "average over four rotations");
  ev->add_flag("--clip", ea.clip, "clamp noisy images to [0,1]");
  ev->add_flag("--f64", ea.f64, "run in double precision");

  std::vector<std::string> argv_rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(argv_rev.begin(), argv_rev.end());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return kExitOk;
    err << "dnr: " << e.what() << '\n';
    if (app.get_subcommands().empty()) {
      err << app.help();
    } else {
      err << app.get_subcommands().front()->help();
    }
    return kExitUsage;
  }

  if (train->parsed()) {
    if (ta.data.empty() && ta.synth.empty()) {
      err << "dnr: train needs --data DIR or --synth COUNT:SIZE\n";
      return kExitUsage;
    }
    return guarded(err, [&] { return ta.f64 ? cmd_train<double>(ta, out) : cmd_train<float>(ta, out); });
  }
  if (den->parsed()) {
    return guarded(err, [&] { return da.f64 ? cmd_denoise<double>(da, out) : cmd_denoise<float>(da, out); });
  }
  if (ea.data.empty() && ea.synth.empty()) {
    err << "dnr: eval needs --data DIR or --synth COUNT:SIZE\n";
    return kExitUsage;
  }
  return guarded(err, [&] { return ea.f64 ? cmd_eval<double>(ea, out) : cmd_eval<float>(ea, out); });
}

}  // namespace dnr
