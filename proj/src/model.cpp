#include "dnr/model.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "dnr/preprocess.hpp"
#include "dnr/rng.hpp"

namespace dnr {

std::string_view arch_name(Stage2Preset preset) {
  switch (preset) {
    case Stage2Preset::none: return "3dr";
    case Stage2Preset::alexmini: return "3dr+alexmini";
    case Stage2Preset::vggmini: return "3dr+vggmini";
  }
  return "?";
}

Stage2Preset parse_arch(std::string_view name) {
  if (name == "3dr") return Stage2Preset::none;
  if (name == "3dr+alexmini") return Stage2Preset::alexmini;
  if (name == "3dr+vggmini") return Stage2Preset::vggmini;
  throw ConfigError("unknown architecture '" + std::string(name) + "' (expected 3dr, 3dr+alexmini, 3dr+vggmini)");
}

void ModelConfig::validate() const {
  if (branches < 1 || branches > 3) throw ConfigError("branch count must be in 1..3");
  if (width < 1) throw ConfigError("width must be positive");
  if (!(lambda1 >= 0.0 && lambda1 <= 1.0)) throw ConfigError("lambda1 must lie in [0,1]");
}

std::vector<double> ModelConfig::branch_weights() const {
  validate();
  if (branches == 1) return {1.0};
  std::vector<double> w(branches, (1.0 - lambda1) / static_cast<double>(branches - 1));
  w[0] = lambda1;
  return w;
}

std::string ModelConfig::to_string() const {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, lambda1);
  std::ostringstream os;
  os << "arch=" << arch_name(stage2) << " branches=" << branches << " width=" << width
     << " lambda1=" << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
  return os.str();
}

ModelConfig ModelConfig::parse(std::string_view text) {
  ModelConfig cfg;
  std::map<std::string, std::string> kv;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed model config token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("model config '" + std::string(text) + "' lacks " + key);
    return it->second;
  };
  try {
    cfg.stage2 = parse_arch(need("arch"));
    cfg.branches = std::stoul(need("branches"));
    cfg.width = std::stoul(need("width"));
    cfg.lambda1 = std::stod(need("lambda1"));
  } catch (const std::logic_error&) {
    throw ConfigError("malformed model config '" + std::string(text) + "'");
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

template <class T>
BranchNet<T>::BranchNet(std::string prefix, std::size_t width) : stack_(prefix) {
  const Padding none{0, 0}, same{2, 2};
  // Intensities sit in [0,1]. Without centering, Adam's sign-like first-layer
  // steps all push the pre-activations the same way.
  stack_.template emplace<PlaneOffsetLayer<T>>(prefix + ".center", 0, T{-0.5});
  auto& c1 = stack_.template emplace<ConvLayer<T>>(prefix + ".conv1", 3, width,
                                                    std::vector<std::size_t>{3, 5, 5},
                                                    std::vector<Padding>{none, same, same});
  c1.set_propagate_input_grad(false);
  first_ = &c1;
  // (width, 3 planes, H, W) -> (3 * width, H, W)
  stack_.template emplace<MergeAxesLayer<T>>(prefix + ".merge");
  stack_.template emplace<TanhLayer<T>>(prefix + ".tanh1");
  stack_.add(ConvLayer<T>::same2d(prefix + ".conv2", (kInputPlanes - 2) * width, width, 5));
  stack_.template emplace<TanhLayer<T>>(prefix + ".tanh2");
  stack_.add(ConvLayer<T>::same2d(prefix + ".conv3", width, width, 5));
  stack_.template emplace<TanhLayer<T>>(prefix + ".tanh3");
  stack_.add(ConvLayer<T>::same2d(prefix + ".conv4", width, width, 5));
  stack_.template emplace<TanhLayer<T>>(prefix + ".tanh4");
  stack_.add(ConvLayer<T>::same2d(prefix + ".conv5", width, 3, 5));
}

template <class T>
Stage1Model<T>::Stage1Model(const ModelConfig& config) : weights_(config.branch_weights()) {
  for (std::size_t b = 0; b < config.branches; ++b) {
    branches_.push_back(std::make_unique<BranchNet<T>>("stage1.branch" + std::to_string(b), config.width));
  }
}

template <class T>
Tensor<T> Stage1Model<T>::combine(std::span<const Tensor<T>> residuals, std::span<const double> weights,
                                  const Tensor<T>& noisy) {
  if (residuals.size() != weights.size()) throw ConfigError("combine: one weight per residual required");
  Tensor<T> out = noisy;
  for (std::size_t b = 0; b < residuals.size(); ++b) {
    require_same_shape(residuals[b].shape(), noisy.shape(), "stage-1 residual");
    const T w = static_cast<T>(weights[b]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * residuals[b][i];
  }
  return out;
}

namespace {

template <class T>
void require_rgb(const Tensor<T>& x, const char* what) {
  if (x.rank() != 3 || x.extent(0) != 3) {
    throw DimensionError(std::string(what) + ": expected a (3,H,W) image, got " + shape_string(x.shape()));
  }
}

}  // namespace

template <class T>
Tensor<T> Stage1Model<T>::infer(const Tensor<T>& noisy) const {
  require_rgb(noisy, "stage1_forward");
  const Tensor<T> pre = build_input(noisy);
  std::vector<Tensor<T>> residuals;
  for (const auto& b : branches_) residuals.push_back(b->infer(pre));
  return combine(residuals, weights_, noisy);
}

template <class T>
Tensor<T> Stage1Model<T>::forward(const Tensor<T>& noisy) {
  require_rgb(noisy, "stage1_forward");
  const Tensor<T> pre = build_input(noisy);
  std::vector<Tensor<T>> residuals;
  for (auto& b : branches_) residuals.push_back(b->forward(pre));
  input_shape_ = noisy.shape();
  cached_ = true;
  return combine(residuals, weights_, noisy);
}

template <class T>
Tensor<T> Stage1Model<T>::backward(const Tensor<T>& grad) {
  if (!cached_) throw StateError("stage 1: backward called before forward");
  require_same_shape(grad.shape(), input_shape_, "stage-1 backward");
  std::optional<Tensor<T>> grad_pre;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    Tensor<T> g = branches_[b]->backward(static_cast<T>(weights_[b]) * grad);
    if (!input_gradients_) continue;
    if (grad_pre) {
      axpy(T{1}, g, *grad_pre);
    } else {
      grad_pre = std::move(g);
    }
  }
  if (!input_gradients_) return Tensor<T>(input_shape_);
  return grad + build_input_adjoint(*grad_pre);
}

template <class T>
ParameterSet<T> Stage1Model<T>::parameters() {
  ParameterSet<T> all;
  for (auto& b : branches_) all.append(b->parameters());
  return all;
}

template <class T>
void Stage1Model<T>::init_params(std::uint64_t seed) {
  for (std::size_t b = 0; b < branches_.size(); ++b) branches_[b]->init_params(derive_seed(seed, {1, b}));
}

template <class T>
void Stage1Model<T>::set_input_gradients(bool on) {
  input_gradients_ = on;
  for (auto& b : branches_) b->set_propagate_input_grad(on);
}

// ---------------------------------------------------------------------------

template <class T>
Stage2Model<T>::Stage2Model(Stage2Preset preset) : stack_("stage2") {
  auto tanh = [this](const std::string& n) { stack_.template emplace<TanhLayer<T>>("stage2." + n); };
  auto conv = [this](const std::string& n, std::size_t in, std::size_t out, std::size_t k) {
    auto layer = ConvLayer<T>::same2d("stage2." + n, in, out, k);
    ConvLayer<T>* raw = layer.get();
    stack_.add(std::move(layer));
    return raw;
  };
  stack_.template emplace<TransposedConvLayer<T>>("stage2.deconv", 3, 3, 4, 2);
  switch (preset) {
    case Stage2Preset::alexmini:
      conv("conv1", 3, 16, 7);
      tanh("tanh1");
      stack_.template emplace<MaxPoolLayer<T>>("stage2.pool", 3, 2);
      conv("conv2", 16, 32, 5);
      tanh("tanh2");
      for (int i = 3; i <= 5; ++i) {
        conv("conv" + std::to_string(i), 32, 32, 3);
        tanh("tanh" + std::to_string(i));
      }
      final_ = conv("conv6", 32, 3, 3);
      break;
    case Stage2Preset::vggmini:
      conv("conv1", 3, 16, 3);
      tanh("tanh1");
      conv("conv2", 16, 16, 3);
      tanh("tanh2");
      stack_.template emplace<MaxPoolLayer<T>>("stage2.pool", 2, 2);
      conv("conv3", 16, 32, 3);
      tanh("tanh3");
      for (int i = 4; i <= 5; ++i) {
        conv("conv" + std::to_string(i), 32, 32, 3);
        tanh("tanh" + std::to_string(i));
      }
      final_ = conv("conv6", 32, 3, 3);
      break;
    case Stage2Preset::none:
      throw ConfigError("stage 2 requested with preset 3dr");
  }
}

template <class T>
void Stage2Model<T>::init_params(std::uint64_t seed) {
  stack_.init_params(seed);
  std::fill(final_->weight().value.data().begin(), final_->weight().value.data().end(), T{0});
}

// Crop (or zero-extend) a residual to the target spatial size, anchored at
// the top-left corner.
template <class T>
Tensor<T> Stage2Model<T>::fit_to(const Tensor<T>& r, const Shape& shape) {
  if (r.shape() == shape) return r;
  Tensor<T> out(shape);
  const std::size_t h = std::min(r.extent(1), shape[1]), w = std::min(r.extent(2), shape[2]);
  for (std::size_t c = 0; c < shape[0]; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at({c, y, x}) = r.at({c, y, x});
    }
  }
  return out;
}

template <class T>
Tensor<T> Stage2Model<T>::unfit(const Tensor<T>& g, const Shape& full) {
  return fit_to(g, full);
}

template <class T>
Tensor<T> Stage2Model<T>::infer(const Tensor<T>& x_hat) const {
  require_rgb(x_hat, "stage2_forward");
  return fit_to(stack_.infer(x_hat), x_hat.shape()) + x_hat;
}

template <class T>
Tensor<T> Stage2Model<T>::forward(const Tensor<T>& x_hat) {
  require_rgb(x_hat, "stage2_forward");
  const Tensor<T> r = stack_.forward(x_hat);
  residual_shape_ = r.shape();
  cached_ = true;
  return fit_to(r, x_hat.shape()) + x_hat;
}

template <class T>
Tensor<T> Stage2Model<T>::backward(const Tensor<T>& grad) {
  if (!cached_) throw StateError("stage 2: backward called before forward");
  return stack_.backward(unfit(grad, residual_shape_)) + grad;
}

// ---------------------------------------------------------------------------

template <class T>
TwoStageModel<T>::TwoStageModel(ModelConfig config) : config_(config), stage1_((config.validate(), config)) {
  if (config_.stage2 != Stage2Preset::none) stage2_.emplace(config_.stage2);
}

template <class T>
Stage2Model<T>& TwoStageModel<T>::stage2() {
  if (!stage2_) throw ConfigError("model '" + config_.to_string() + "' has no second stage");
  return *stage2_;
}

template <class T>
const Stage2Model<T>& TwoStageModel<T>::stage2() const {
  if (!stage2_) throw ConfigError("model '" + config_.to_string() + "' has no second stage");
  return *stage2_;
}

template <class T>
Tensor<T> TwoStageModel<T>::infer(const Tensor<T>& noisy) const {
  Tensor<T> x_hat = stage1_.infer(noisy);
  return stage2_ ? stage2_->infer(x_hat) : x_hat;
}

template <class T>
Tensor<T> TwoStageModel<T>::forward(const Tensor<T>& noisy) {
  if (!stage2_) return stage1_.forward(noisy);
  stage1_out_ = frozen_ ? stage1_.infer(noisy) : stage1_.forward(noisy);
  return stage2_->forward(stage1_out_);
}

template <class T>
Tensor<T> TwoStageModel<T>::backward(const Tensor<T>& grad) {
  if (!stage2_) return stage1_.backward(grad);
  Tensor<T> g = stage2_->backward(grad);
  if (frozen_) return Tensor<T>(g.shape());
  return stage1_.backward(g);
}

template <class T>
ParameterSet<T> TwoStageModel<T>::parameters() {
  ParameterSet<T> all = stage1_.parameters();
  if (stage2_) all.append(stage2_->parameters());
  return all;
}

template <class T>
ParameterSet<T> TwoStageModel<T>::trainable_parameters() {
  if (stage2_ && frozen_) return stage2_->parameters();
  return parameters();
}

template <class T>
void TwoStageModel<T>::init_params(std::uint64_t seed) {
  stage1_.init_params(seed);
  if (stage2_) stage2_->init_params(derive_seed(seed, {2}));
}

template <class T>
void TwoStageModel<T>::set_input_gradients(bool on) {
  stage1_.set_input_gradients(on);
}

template <class T>
std::vector<std::pair<std::string, Tensor<float>>> TwoStageModel<T>::export_tensors() {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (auto* p : parameters()) out.emplace_back(p->name, p->value.template cast<float>());
  return out;
}

template <class T>
void TwoStageModel<T>::import_tensors(const std::vector<std::pair<std::string, Tensor<float>>>& tensors) {
  std::map<std::string_view, const Tensor<float>*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  for (auto* p : parameters()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw ConfigError("checkpoint lacks parameter '" + p->name + "' required by model '" +
                        config_.to_string() + "'");
    }
    if (it->second->shape() != p->value.shape()) {
      throw ConfigError("parameter '" + p->name + "' has shape " + shape_string(it->second->shape()) +
                        " in checkpoint but " + shape_string(p->value.shape()) + " in model '" +
                        config_.to_string() + "'");
    }
    p->value = it->second->template cast<T>();
  }
}

template <class T>
Tensor<T> denoise(const TwoStageModel<T>& model, const Tensor<T>& noisy) {
  return model.infer(noisy);
}

template <class T>
Tensor<T> enhanced_denoise(const TwoStageModel<T>& model, const Tensor<T>& noisy) {
  std::vector<Tensor<T>> outs;
  for (int k = 0; k < 4; ++k) outs.push_back(rotate90(model.infer(rotate90(noisy, k)), 4 - k));
  // Pairwise sum: four identical outputs average back to exactly that output.
  Tensor<T> acc(noisy.shape());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    acc[i] = ((outs[0][i] + outs[1][i]) + (outs[2][i] + outs[3][i])) / T{4};
  }
  return acc;
}

#define DNR_MODEL(T)                                                           \
  template class BranchNet<T>;                                                 \
  template class Stage1Model<T>;                                               \
  template class Stage2Model<T>;                                               \
  template class TwoStageModel<T>;                                             \
  template Tensor<T> denoise(const TwoStageModel<T>&, const Tensor<T>&);       \
  template Tensor<T> enhanced_denoise(const TwoStageModel<T>&, const Tensor<T>&);

DNR_MODEL(float)
DNR_MODEL(double)

}  // namespace dnr
