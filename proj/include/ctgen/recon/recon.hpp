#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ctgen/ad/nn.hpp"
#include "ctgen/ad/optim.hpp"
#include "ctgen/data/dataset.hpp"
#include "ctgen/hu/windowing.hpp"

namespace ctgen::recon {

struct ReconModelSpec {
  enum class Kind { mlp, cnn };
  Kind kind = Kind::mlp;
  std::string name;
  // MLP: hidden feature widths (always K); CNN: kernel size per convolution,
  // the last convolution reducing to one channel.
  std::vector<int64_t> hidden_layers;
  int64_t k_inputs = 4;
};

/// The nine reconstruction models: voxel-wise MLPs and spatially-preserving
/// CNNs, ReLU hidden activations, sigmoid output. The MLP is realized as a
/// stack of 1x1 convolutions over the channel dimension — observationally
/// identical to a per-voxel MLP while reusing the conv path.
class ReconModel {
 public:
  ReconModel(ReconModelSpec spec, uint64_t init_seed);

  /// [B,K,H,W] -> [B,1,H,W], values in [0,1].
  ad::Var forward(const ad::Var& stack) const;

  /// Convenience single-stack inference (no gradients recorded).
  hu::CtSlice reconstruct(const hu::WindowedStack& stack) const;

  const ReconModelSpec& spec() const { return spec_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  int64_t parameter_count() const { return params_.parameter_count(); }

  void save(const std::filesystem::path& path, const std::string& extra_meta_json = "{}") const;
  static ReconModel load(const std::filesystem::path& path);

 private:
  ReconModelSpec spec_;
  ad::ParamStore params_;
  std::vector<ad::Conv2dLayer> layers_;
};

/// Allowed names: MLP_0, MLP_4, MLP_4x4, MLP_4x4x4, CNN_3, CNN_7, CNN_11,
/// CNN_3x3, CNN_3x3x3.
ReconModelSpec recon_spec_by_name(const std::string& name, int64_t k);
ReconModel build_recon(const std::string& name, int64_t k, uint64_t init_seed = 0);
std::vector<std::string> recon_model_names();

struct ReconTrainConfig {
  double lr = 5e-5;
  double final_lr = 0.0;  // > 0 enables exponential decay towards this rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  int64_t epochs = 50;
  int64_t batch = 16;
  uint64_t seed = 0;
};

struct ReconTrainResult {
  std::vector<double> epoch_train_mse;
  double final_test_mse = 0.0;
};

/// Plain MSE regression of the full-range slice from its windowed channels.
/// Aborts on non-finite loss. The loss is also evaluated on `test` after
/// every epoch when it is non-empty.
ReconTrainResult train_recon(ReconModel& model, const std::vector<data::LoadedSlice>& train,
                             const std::vector<data::LoadedSlice>& test, const ReconTrainConfig& config);

/// Mean squared error of model reconstructions against the full-range truth.
double recon_mse(const ReconModel& model, const std::vector<data::LoadedSlice>& slices);

/// Assembles [B,K,H,W] channel and [B,1,H,W] target tensors for a batch.
void assemble_batch(const std::vector<data::LoadedSlice>& slices, const std::vector<int64_t>& ids, Tensor& stacks,
                    Tensor& targets);

}  // namespace ctgen::recon
