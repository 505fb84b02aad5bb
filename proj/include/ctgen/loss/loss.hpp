#pragma once

#include "ctgen/ad/graph.hpp"
#include "ctgen/loss/extractor.hpp"

namespace ctgen::loss {

/// Weight block of the composite autoencoder objective. Operating point:
/// (1.0, 0.1, 1.0, 0.1, 0.25, 1.0) with w_min = 0.15.
struct LossWeights {
  float pre_mse = 1.0f;
  float ssim = 0.1f;
  float pre_rin = 1.0f;
  float post_mse = 0.1f;
  float post_rin = 0.25f;
  float vq = 1.0f;
  float w_min = 0.15f;

  void validate() const;
};

/// Mean single-scale SSIM (Gaussian window, default 11/1.5, data range 1)
/// per sample: [B,1,H,W] x2 -> [B]. Differentiable.
ad::Var ssim_per_sample(const ad::Var& a, const ad::Var& b, int64_t window = 11, double sigma = 1.5);

/// Convenience scalar SSIM between two [H,W] tensors (no gradients).
double ssim(const Tensor& a, const Tensor& b, int64_t window = 11, double sigma = 1.5);

/// Interval-weighted synthesis loss over stacks [B,K,H,W]: per channel a
/// weighted sum of MSE, 1-SSIM and the perceptual feature distance, the
/// channels combined with per-sample dynamic weights computed from the
/// ground-truth channels (the weights are constants with respect to model
/// parameters).
ad::Var pre_rec_loss(const ad::Var& truth_stack, const ad::Var& predicted_stack, const LossWeights& weights,
                     const FeatureExtractor& extractor);

/// Full-range coherence loss on [B,1,H,W] images: post_mse * MSE +
/// post_rin * feature distance, batch-averaged.
ad::Var post_rec_loss(const ad::Var& truth_full, const ad::Var& recon_full, const LossWeights& weights,
                      const FeatureExtractor& extractor);

/// Quantization objective on [B,n] latents: the stop-gradient codebook term
/// plus the commitment term, scaled by lambda_vq. The squared norm is
/// realized as the per-sample mean over latent elements. The first term
/// updates the codebook only, the second the encoder only;
/// commitment_weight defaults to 1 (the training configuration supplies the
/// operating value).
ad::Var vq_loss(const ad::Var& zhat, const ad::Var& zq, double lambda_vq, double commitment_weight = 1.0);

/// Exact sum of the three terms.
ad::Var total_loss(const ad::Var& pre_rec, const ad::Var& post_rec, const ad::Var& vq);

}  // namespace ctgen::loss
