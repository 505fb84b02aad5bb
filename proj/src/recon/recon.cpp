#include "ctgen/recon/recon.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ctgen/core/rng.hpp"

namespace ctgen::recon {

using ad::Var;

ReconModel::ReconModel(ReconModelSpec spec, uint64_t init_seed) : spec_(std::move(spec)) {
  Rng rng(init_seed ^ 0x8ECC0ull);
  const int64_t k = spec_.k_inputs;
  if (spec_.kind == ReconModelSpec::Kind::mlp) {
    int64_t in = k;
    for (size_t i = 0; i < spec_.hidden_layers.size(); ++i) {
      layers_.emplace_back(params_, "fc" + std::to_string(i), in, spec_.hidden_layers[i], 1, 1, 0, rng);
      in = spec_.hidden_layers[i];
    }
    layers_.emplace_back(params_, "out", in, 1, 1, 1, 0, rng);
  } else {
    if (spec_.hidden_layers.empty()) throw std::invalid_argument("ReconModel: CNN needs at least one convolution");
    int64_t in = k;
    for (size_t i = 0; i + 1 < spec_.hidden_layers.size(); ++i) {
      const int64_t ks = spec_.hidden_layers[i];
      layers_.emplace_back(params_, "conv" + std::to_string(i), in, k, ks, 1, ks / 2, rng);
      in = k;
    }
    const int64_t ks = spec_.hidden_layers.back();
    layers_.emplace_back(params_, "out", in, 1, ks, 1, ks / 2, rng);
  }
}

Var ReconModel::forward(const Var& stack) const {
  if (stack->value.rank() != 4 || stack->value.dim(1) != spec_.k_inputs)
    throw std::invalid_argument("ReconModel::forward: expected [B," + std::to_string(spec_.k_inputs) + ",H,W]");
  Var h = stack;
  for (size_t i = 0; i + 1 < layers_.size(); ++i) h = ad::relu(layers_[i](h));
  return ad::sigmoid(layers_.back()(h));
}

hu::CtSlice ReconModel::reconstruct(const hu::WindowedStack& stack) const {
  ad::NoGradGuard guard;
  const int64_t k = stack.k(), h = stack.height(), w = stack.width();
  Var in = ad::constant(stack.channels.reshaped({1, k, h, w}));
  const Tensor out = forward(in)->value;
  return hu::CtSlice{out.reshaped({h, w}), hu::Provenance::synthetic};
}

void ReconModel::save(const std::filesystem::path& path, const std::string& extra_meta_json) const {
  ArrayFile f;
  params_.save(f);
  nlohmann::json meta = nlohmann::json::parse(extra_meta_json);
  meta["model"] = {{"name", spec_.name},
                   {"kind", spec_.kind == ReconModelSpec::Kind::mlp ? "mlp" : "cnn"},
                   {"hidden_layers", spec_.hidden_layers},
                   {"k_inputs", spec_.k_inputs},
                   {"parameter_count", parameter_count()}};
  f.put_meta_json(meta.dump(2));
  f.save(path);
}

ReconModel ReconModel::load(const std::filesystem::path& path) {
  const ArrayFile f = ArrayFile::load(path);
  const auto meta = nlohmann::json::parse(f.get_meta_json());
  const auto& m = meta.at("model");
  ReconModelSpec spec;
  spec.name = m.at("name").get<std::string>();
  spec.kind = m.at("kind").get<std::string>() == "mlp" ? ReconModelSpec::Kind::mlp : ReconModelSpec::Kind::cnn;
  spec.hidden_layers = m.at("hidden_layers").get<std::vector<int64_t>>();
  spec.k_inputs = m.at("k_inputs").get<int64_t>();
  ReconModel model(spec, 0);
  model.params_.load(f);
  return model;
}

ReconModelSpec recon_spec_by_name(const std::string& name, int64_t k) {
  if (k < 1) throw std::invalid_argument("recon_spec_by_name: K must be >= 1");
  ReconModelSpec spec;
  spec.name = name;
  spec.k_inputs = k;
  if (name == "MLP_0") {
    spec.kind = ReconModelSpec::Kind::mlp;
  } else if (name == "MLP_4") {
    spec.kind = ReconModelSpec::Kind::mlp;
    spec.hidden_layers = {k};
  } else if (name == "MLP_4x4") {
    spec.kind = ReconModelSpec::Kind::mlp;
    spec.hidden_layers = {k, k};
  } else if (name == "MLP_4x4x4") {
    spec.kind = ReconModelSpec::Kind::mlp;
    spec.hidden_layers = {k, k, k};
  } else if (name == "CNN_3") {
    spec.kind = ReconModelSpec::Kind::cnn;
    spec.hidden_layers = {3};
  } else if (name == "CNN_7") {
    spec.kind = ReconModelSpec::Kind::cnn;
    spec.hidden_layers = {7};
  } else if (name == "CNN_11") {
    spec.kind = ReconModelSpec::Kind::cnn;
    spec.hidden_layers = {11};
  } else if (name == "CNN_3x3") {
    spec.kind = ReconModelSpec::Kind::cnn;
    spec.hidden_layers = {3, 3};
  } else if (name == "CNN_3x3x3") {
    spec.kind = ReconModelSpec::Kind::cnn;
    spec.hidden_layers = {3, 3, 3};
  } else {
    throw std::invalid_argument("recon_spec_by_name: unknown model '" + name + "'");
  }
  return spec;
}

ReconModel build_recon(const std::string& name, int64_t k, uint64_t init_seed) {
  return ReconModel(recon_spec_by_name(name, k), init_seed);
}

std::vector<std::string> recon_model_names() {
  return {"MLP_0", "MLP_4", "MLP_4x4", "MLP_4x4x4", "CNN_3", "CNN_7", "CNN_11", "CNN_3x3", "CNN_3x3x3"};
}

void assemble_batch(const std::vector<data::LoadedSlice>& slices, const std::vector<int64_t>& ids, Tensor& stacks,
                    Tensor& targets) {
  if (ids.empty()) throw std::invalid_argument("assemble_batch: empty batch");
  const auto& first = slices[static_cast<size_t>(ids[0])].stack;
  const int64_t k = first.k(), h = first.height(), w = first.width();
  const auto b = static_cast<int64_t>(ids.size());
  stacks = Tensor({b, k, h, w});
  targets = Tensor({b, 1, h, w});
  for (int64_t i = 0; i < b; ++i) {
    const auto& s = slices[static_cast<size_t>(ids[static_cast<size_t>(i)])];
    std::copy(s.stack.channels.data(), s.stack.channels.data() + k * h * w, stacks.data() + i * k * h * w);
    std::copy(s.stack.full_range_slice->pixels.data(), s.stack.full_range_slice->pixels.data() + h * w,
              targets.data() + i * h * w);
  }
}

double recon_mse(const ReconModel& model, const std::vector<data::LoadedSlice>& slices) {
  ad::NoGradGuard guard;
  double acc = 0.0;
  int64_t count = 0;
  for (const auto& s : slices) {
    const hu::CtSlice rec = model.reconstruct(s.stack);
    const Tensor& want = s.stack.full_range_slice->pixels;
    for (int64_t i = 0; i < want.numel(); ++i) {
      const double d = rec.pixels[i] - want[i];
      acc += d * d;
    }
    count += want.numel();
  }
  return acc / static_cast<double>(count);
}

ReconTrainResult train_recon(ReconModel& model, const std::vector<data::LoadedSlice>& train,
                             const std::vector<data::LoadedSlice>& test, const ReconTrainConfig& config) {
  if (train.empty()) throw std::invalid_argument("train_recon: empty training set");
  ad::Adam opt(model.params().vars(),
               ad::AdamConfig{.lr = config.lr, .beta1 = config.beta1, .beta2 = config.beta2});
  Rng shuffle_rng(config.seed ^ 0x7EC0ull);

  std::vector<int64_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  ReconTrainResult result;
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.final_lr > 0.0 && config.epochs > 1) {
      const double frac = static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
      opt.set_lr(config.lr * std::pow(config.final_lr / config.lr, frac));
    }
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.uniform_int(static_cast<int64_t>(i)))]);

    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch));
      std::vector<int64_t> ids(order.begin() + static_cast<int64_t>(start), order.begin() + static_cast<int64_t>(end));
      Tensor stacks, targets;
      assemble_batch(train, ids, stacks, targets);

      Var pred = model.forward(ad::constant(stacks));
      Var loss = ad::mean_all(ad::square(ad::sub(pred, ad::constant(targets))));
      const double lv = loss->value.item();
      if (!std::isfinite(lv))
        throw std::runtime_error("train_recon: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batches));
      opt.step(ad::grad_values(loss, model.params().vars()));
      epoch_loss += lv;
      ++batches;
    }
    result.epoch_train_mse.push_back(epoch_loss / static_cast<double>(batches));
  }
  result.final_test_mse = test.empty() ? 0.0 : recon_mse(model, test);
  return result;
}

}  // namespace ctgen::recon
