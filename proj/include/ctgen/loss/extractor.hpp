#pragma once

#include <memory>
#include <string>

#include "ctgen/ad/nn.hpp"

namespace ctgen::loss {

/// Embeds single-channel images into a fixed-dimensional feature space.
/// Implementations must be frozen: gradients flow through them into their
/// input, never into their own weights.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  /// [B,1,H,W] in [0,1] -> [B,d].
  virtual ad::Var embed(const ad::Var& images) const = 0;
  virtual int64_t feature_dim() const = 0;
  virtual std::string identity() const = 0;
  virtual bool deterministic() const = 0;
};

/// Fixed-seed frozen random conv embedder. Stands in for license-gated
/// pretrained backbones; absolute feature distances are only comparable
/// between runs of this repo. Inputs are area-resampled to 64x64 (power-of-
/// two sizes only).
class SurrogateExtractor : public FeatureExtractor {
 public:
  explicit SurrogateExtractor(uint64_t seed = 0xC7C7, int64_t feature_dim = 256);

  ad::Var embed(const ad::Var& images) const override;
  int64_t feature_dim() const override { return dim_; }
  std::string identity() const override;
  bool deterministic() const override { return true; }

 private:
  uint64_t seed_;
  int64_t dim_;
  ad::ParamStore params_;
  std::vector<ad::Conv2dLayer> convs_;
  ad::LinearLayer head_;
};

/// "surrogate" or "surrogate:<seed>"; the plugin slot for pretrained
/// extractors rejects unknown names with the available list.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name);

/// Mean squared distance between embeddings, per sample: [B].
ad::Var feature_distance_per_sample(const FeatureExtractor& extractor, const ad::Var& a, const ad::Var& b);

}  // namespace ctgen::loss
