#include "dnr/train.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dnr {

void TrainConfig::validate() const {
  if (crop == 0 || batch == 0) throw ConfigError("crop and batch size must be positive");
  if (!(lr1 > 0.0) || !(lr2 > 0.0)) throw ConfigError("learning rates must be positive");
  if (log_every == 0) throw ConfigError("log interval must be positive");
  stage2_loss.included();
}

template <class T>
ValidationSet<T> ValidationSet<T>::make(const std::vector<Tensor<float>>& clean, const NoiseSpec& noise,
                                        std::uint64_t seed) {
  ValidationSet<T> v;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    Rng rng(derive_seed(seed, {0x7a1, i}));
    auto [noisy, sigma] = add_gaussian_noise(clean[i], noise, rng);
    v.clean.push_back(clean[i].template cast<T>());
    v.noisy.push_back(noisy.template cast<T>());
    v.sigmas.push_back(sigma);
  }
  return v;
}

std::string format_log_line(const LogEntry& e, bool with_sigmas) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "iter=%llu loss=%.6f val_psnr=%.4f", static_cast<unsigned long long>(e.iter), e.loss,
                e.val_psnr);
  std::string line = buf;
  if (with_sigmas) {
    line += " sigma=";
    for (std::size_t i = 0; i < e.sigmas.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.3f", i ? "," : "", e.sigmas[i]);
      line += buf;
    }
  }
  return line;
}

template <class T>
Trainer<T>::Trainer(TwoStageModel<T>& model, const std::vector<Tensor<float>>& corpus, NoiseSpec noise,
                    TrainConfig config)
    : model_(model),
      noise_(noise),
      config_((config.validate(), config)),
      stream1_(corpus, config.batch, config.crop, noise, derive_seed(config.seed, {1})),
      stream2_(corpus, config.batch, config.crop, noise, derive_seed(config.seed, {2})),
      adam1_(AdamConfig{.learning_rate = config.lr1}),
      adam2_(AdamConfig{.learning_rate = config.lr2}) {}

template <class T>
double Trainer<T>::run_batch(int stage, std::uint64_t index, bool update, std::vector<double>* sigmas) {
  const Batch batch = (stage == 1 ? stream1_ : stream2_).batch(index);
  if (sigmas) *sigmas = batch.sigmas;
  const T inv_b = T{1} / static_cast<T>(batch.size());

  ParameterSet<T> params;
  if (stage == 1) {
    params = model_.stage1().parameters();
  } else {
    model_.set_stage1_frozen(true);
    params = model_.stage2().parameters();
  }
  params.zero_grad();

  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor<T> noisy = batch.noisy_item(i).template cast<T>();
    const Tensor<T> clean = batch.clean_item(i).template cast<T>();
    if (stage == 1) {
      const Tensor<T> out = update ? model_.stage1().forward(noisy) : model_.stage1().infer(noisy);
      LossValue<T> loss = psnr_loss(out, clean);
      total += loss.value;
      if (update) model_.stage1().backward(inv_b * loss.gradient);
    } else {
      const Tensor<T> out = update ? model_.forward(noisy) : model_.infer(noisy);
      LossValue<T> loss = mixed_derivative_loss(out - clean, config_.stage2_loss);
      total += loss.value;
      if (update) model_.backward(inv_b * loss.gradient);
    }
  }
  const double mean = total / static_cast<double>(batch.size());
  if (!std::isfinite(mean)) {
    params.zero_grad();
    throw NumericError("non-finite loss at stage " + std::to_string(stage) + " iteration " + std::to_string(index + 1));
  }
  if (update) {
    for (auto* p : params) {
      if (!all_finite(p->grad)) {
        p->zero_grad();
        params.zero_grad();
        throw NumericError("non-finite gradient for '" + p->name + "' at stage " + std::to_string(stage));
      }
    }
    (stage == 1 ? adam1_ : adam2_).step(params);
  }
  return mean;
}

template <class T>
double Trainer<T>::step_stage1(std::uint64_t index, std::vector<double>* sigmas) {
  return run_batch(1, index, true, sigmas);
}

template <class T>
double Trainer<T>::step_stage2(std::uint64_t index, std::vector<double>* sigmas) {
  return run_batch(2, index, true, sigmas);
}

template <class T>
double Trainer<T>::eval_stage1(std::uint64_t index) {
  return run_batch(1, index, false, nullptr);
}

template <class T>
double Trainer<T>::eval_stage2(std::uint64_t index) {
  return run_batch(2, index, false, nullptr);
}

template <class T>
double Trainer<T>::validation_psnr(int stage) const {
  if (validation_.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < validation_.clean.size(); ++i) {
    const Tensor<T> out = stage == 1 ? model_.stage1().infer(validation_.noisy[i]) : model_.infer(validation_.noisy[i]);
    sum += psnr(out, validation_.clean[i]);
  }
  return sum / static_cast<double>(validation_.clean.size());
}

namespace {

template <class T>
std::vector<Tensor<T>> snapshot(const ParameterSet<T>& params) {
  std::vector<Tensor<T>> out;
  for (auto* p : params) out.push_back(p->value);
  return out;
}

template <class T>
void load(const ParameterSet<T>& params, const std::vector<Tensor<T>>& values) {
  std::size_t i = 0;
  for (auto* p : params) p->value = values.at(i++);
}

}  // namespace

template <class T>
ParameterSet<T> Trainer<T>::stage_parameters(int stage) const {
  return stage == 1 ? model_.stage1().parameters() : model_.stage2().parameters();
}

template <class T>
void Trainer<T>::run(const std::function<void(const LogEntry&)>& on_log) {
  for (int stage = 1; stage <= 2; ++stage) {
    if (stage == 2 && !model_.has_stage2()) break;
    std::uint64_t& done = stage == 1 ? done1_ : done2_;
    const std::uint64_t total = stage == 1 ? config_.iters1 : config_.iters2;
    Selection& sel = select_[stage - 1];
    const ParameterSet<T> params = stage_parameters(stage);
    if (done >= total) continue;
    // A finished stage was left on its best point; carry on from the iterate.
    if (!sel.live.empty()) {
      load(params, sel.live);
      sel.live.clear();
    }
    while (done < total) {
      LogEntry e;
      e.stage = stage;
      e.loss = stage == 1 ? step_stage1(done, &e.sigmas) : step_stage2(done, &e.sigmas);
      ++done;
      e.iter = done;
      if (done % config_.log_every == 0 || done == total) {
        if (!validation_.empty()) {
          e.val_psnr = validation_psnr(stage);
          if (e.val_psnr > sel.best_val) {
            sel.best_val = e.val_psnr;
            sel.best = snapshot(params);
          }
        }
        if (on_log) on_log(e);
      }
    }
    // Late Adam excursions at lr 0.005 can wreck a run that was fine
    // earlier, so a stage ends on its best validated parameters.
    if (!sel.best.empty()) {
      sel.live = snapshot(params);
      load(params, sel.best);
    }
  }
}

template <class T>
Checkpoint Trainer<T>::make_checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = model_.config().to_string();
  ckpt.tensors = model_.export_tensors();
  ckpt.tensors.emplace_back("train.progress",
                            Tensor<float>(Shape{2}, {static_cast<float>(done1_), static_cast<float>(done2_)}));
  const std::pair<const char*, const Adam<T>*> opts[] = {{"adam1", &adam1_}, {"adam2", &adam2_}};
  for (const auto& [prefix, opt] : opts) {
    ckpt.tensors.emplace_back(std::string(prefix) + ".t", Tensor<float>::scalar(static_cast<float>(opt->steps())));
    for (const auto& [name, mom] : opt->moments()) {
      ckpt.tensors.emplace_back(std::string(prefix) + ".m/" + name, mom.m.template cast<float>());
      ckpt.tensors.emplace_back(std::string(prefix) + ".v/" + name, mom.v.template cast<float>());
    }
  }
  for (int stage = 1; stage <= (model_.has_stage2() ? 2 : 1); ++stage) {
    const Selection& sel = select_[stage - 1];
    const std::string prefix = "select" + std::to_string(stage);
    const ParameterSet<T> params = stage_parameters(stage);
    std::size_t i = 0;
    for (auto* p : params) {
      if (!sel.best.empty()) ckpt.tensors.emplace_back(prefix + ".best/" + p->name, sel.best[i].template cast<float>());
      if (!sel.live.empty()) ckpt.tensors.emplace_back(prefix + ".live/" + p->name, sel.live[i].template cast<float>());
      ++i;
    }
  }
  return ckpt;
}

template <class T>
void Trainer<T>::restore(const Checkpoint& ckpt) {
  model_.import_tensors(ckpt.tensors);
  if (const auto* p = ckpt.find("train.progress")) {
    done1_ = static_cast<std::uint64_t>((*p)[0]);
    done2_ = static_cast<std::uint64_t>((*p)[1]);
  }
  const std::pair<const char*, Adam<T>*> opts[] = {{"adam1", &adam1_}, {"adam2", &adam2_}};
  for (const auto& [prefix, opt] : opts) {
    const auto* t = ckpt.find(std::string(prefix) + ".t");
    if (!t) continue;
    std::map<std::string, typename Adam<T>::Moments> state;
    const std::string mkey = std::string(prefix) + ".m/";
    for (const auto& [name, tensor] : ckpt.tensors) {
      if (name.rfind(mkey, 0) != 0) continue;
      const std::string pname = name.substr(mkey.size());
      const auto* v = ckpt.find(std::string(prefix) + ".v/" + pname);
      if (!v) throw IoError("checkpoint lacks second moment for '" + pname + "'");
      state.emplace(pname, typename Adam<T>::Moments{tensor.template cast<T>(), v->template cast<T>()});
    }
    opt->restore(static_cast<std::int64_t>(t->item()), std::move(state));
  }
  for (int stage = 1; stage <= (model_.has_stage2() ? 2 : 1); ++stage) {
    Selection& sel = select_[stage - 1];
    sel = Selection{};
    const std::string prefix = "select" + std::to_string(stage);
    const ParameterSet<T> params = stage_parameters(stage);
    auto gather = [&](const std::string& kind) {
      std::vector<Tensor<T>> out;
      for (auto* p : params) {
        const auto* t = ckpt.find(prefix + "." + kind + "/" + p->name);
        if (!t) return std::vector<Tensor<T>>{};
        if (t->shape() != p->value.shape()) throw IoError("checkpoint snapshot '" + p->name + "' has the wrong shape");
        out.push_back(t->template cast<T>());
      }
      return out;
    };
    sel.best = gather("best");
    sel.live = gather("live");
    if (!sel.best.empty() && !validation_.empty()) {
      // The score is recomputed rather than stored, so it matches bit for bit.
      const auto current = snapshot(params);
      load(params, sel.best);
      sel.best_val = validation_psnr(stage);
      load(params, current);
    }
  }
}

template struct ValidationSet<float>;
template struct ValidationSet<double>;
template class Trainer<float>;
template class Trainer<double>;

}  // namespace dnr
