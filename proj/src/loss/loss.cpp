#include "ctgen/loss/loss.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "ctgen/ad/nn.hpp"
#include "ctgen/hu/windowing.hpp"

namespace ctgen::loss {

using ad::Var;

namespace {

constexpr double kC1 = 0.01 * 0.01;  // (k1 * data_range)^2
constexpr double kC2 = 0.03 * 0.03;

const Tensor& gaussian_window(int64_t window, double sigma) {
  static std::map<std::pair<int64_t, int64_t>, Tensor> cache;
  const auto key = std::make_pair(window, static_cast<int64_t>(sigma * 1e6));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  Tensor w({1, 1, window, window});
  const double c = static_cast<double>(window - 1) / 2.0;
  double total = 0.0;
  for (int64_t r = 0; r < window; ++r)
    for (int64_t col = 0; col < window; ++col) {
      const double d2 = (r - c) * (r - c) + (col - c) * (col - c);
      const double v = std::exp(-d2 / (2.0 * sigma * sigma));
      w[r * window + col] = static_cast<float>(v);
      total += v;
    }
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<float>(w[i] / total);
  return cache.emplace(key, std::move(w)).first->second;
}

Var blur(const Var& x, int64_t window, double sigma) {
  return ad::conv2d(x, ad::constant(gaussian_window(window, sigma)), ad::constant(Tensor({1})), 1, 0);
}

Var per_sample_mean(const Var& x) {
  const int64_t b = x->value.dim(0);
  const int64_t per = x->value.numel() / b;
  return ad::mul_scalar(ad::sum_rows(ad::reshape(x, {b, per})), 1.0 / static_cast<double>(per));
}

}  // namespace

void LossWeights::validate() const {
  if (pre_mse < 0 || ssim < 0 || pre_rin < 0 || post_mse < 0 || post_rin < 0 || vq < 0)
    throw std::invalid_argument("LossWeights: weights must be non-negative");
  if (w_min < 0.0f || w_min >= 1.0f) throw std::invalid_argument("LossWeights: w_min must be in [0,1)");
}

Var ssim_per_sample(const Var& a, const Var& b, int64_t window, double sigma) {
  if (a->value.shape() != b->value.shape() || a->value.rank() != 4 || a->value.dim(1) != 1)
    throw std::invalid_argument("ssim: expected matching [B,1,H,W]");
  if (a->value.dim(2) < window || a->value.dim(3) < window)
    throw std::invalid_argument("ssim: image smaller than the window");

  Var mu_a = blur(a, window, sigma);
  Var mu_b = blur(b, window, sigma);
  Var mu_aa = ad::square(mu_a);
  Var mu_bb = ad::square(mu_b);
  Var mu_ab = ad::mul(mu_a, mu_b);
  Var sig_a = ad::sub(blur(ad::square(a), window, sigma), mu_aa);
  Var sig_b = ad::sub(blur(ad::square(b), window, sigma), mu_bb);
  Var sig_ab = ad::sub(blur(ad::mul(a, b), window, sigma), mu_ab);

  Var num = ad::mul(ad::add_scalar(ad::mul_scalar(mu_ab, 2.0), kC1), ad::add_scalar(ad::mul_scalar(sig_ab, 2.0), kC2));
  Var den = ad::mul(ad::add_scalar(ad::add(mu_aa, mu_bb), kC1), ad::add_scalar(ad::add(sig_a, sig_b), kC2));
  return per_sample_mean(ad::div(num, den));
}

double ssim(const Tensor& a, const Tensor& b, int64_t window, double sigma) {
  ad::NoGradGuard guard;
  const int64_t h = a.dim(0), w = a.dim(1);
  Var va = ad::constant(a.reshaped({1, 1, h, w}));
  Var vb = ad::constant(b.reshaped({1, 1, h, w}));
  return ssim_per_sample(va, vb, window, sigma)->value.item();
}

Var pre_rec_loss(const Var& truth_stack, const Var& predicted_stack, const LossWeights& weights,
                 const FeatureExtractor& extractor) {
  weights.validate();
  if (truth_stack->value.shape() != predicted_stack->value.shape() || truth_stack->value.rank() != 4)
    throw std::invalid_argument("pre_rec_loss: expected matching [B,K,H,W]");
  const int64_t b = truth_stack->value.dim(0), k = truth_stack->value.dim(1);
  const int64_t hw = truth_stack->value.dim(2) * truth_stack->value.dim(3);

  // Dynamic interval weights from the ground-truth channels, per sample;
  // constants w.r.t. any model parameter.
  Tensor wk({k, b});
  for (int64_t bi = 0; bi < b; ++bi) {
    std::vector<float> fractions(static_cast<size_t>(k));
    for (int64_t ki = 0; ki < k; ++ki) {
      int64_t nz = 0;
      const float* ch = truth_stack->value.data() + (bi * k + ki) * hw;
      for (int64_t i = 0; i < hw; ++i) nz += ch[i] > 0.0f;
      fractions[static_cast<size_t>(ki)] = static_cast<float>(nz) / static_cast<float>(hw);
    }
    const auto w = hu::hu_weights_from_fractions(fractions, weights.w_min);
    for (int64_t ki = 0; ki < k; ++ki) wk[ki * b + bi] = w[static_cast<size_t>(ki)];
  }

  Var acc;  // [B]
  for (int64_t ki = 0; ki < k; ++ki) {
    Var tc = ad::slice_channels(truth_stack, ki, ki + 1);
    Var pc = ad::slice_channels(predicted_stack, ki, ki + 1);
    Var mse = per_sample_mean(ad::square(ad::sub(tc, pc)));
    Var ssim_term = ad::add_scalar(ad::neg(ssim_per_sample(tc, pc)), 1.0);
    Var rin = feature_distance_per_sample(extractor, tc, pc);
    Var combined = ad::add(ad::add(ad::mul_scalar(mse, weights.pre_mse), ad::mul_scalar(ssim_term, weights.ssim)),
                           ad::mul_scalar(rin, weights.pre_rin));
    Tensor wrow({b});
    std::copy(wk.data() + ki * b, wk.data() + (ki + 1) * b, wrow.data());
    Var weighted = ad::mul(combined, ad::constant(wrow));
    acc = acc ? ad::add(acc, weighted) : weighted;
  }
  return ad::mean_all(acc);
}

Var post_rec_loss(const Var& truth_full, const Var& recon_full, const LossWeights& weights,
                  const FeatureExtractor& extractor) {
  weights.validate();
  if (truth_full->value.shape() != recon_full->value.shape() || truth_full->value.rank() != 4 ||
      truth_full->value.dim(1) != 1)
    throw std::invalid_argument("post_rec_loss: expected matching [B,1,H,W]");
  Var mse = per_sample_mean(ad::square(ad::sub(truth_full, recon_full)));
  Var rin = feature_distance_per_sample(extractor, truth_full, recon_full);
  return ad::mean_all(ad::add(ad::mul_scalar(mse, weights.post_mse), ad::mul_scalar(rin, weights.post_rin)));
}

Var vq_loss(const Var& zhat, const Var& zq, double lambda_vq, double commitment_weight) {
  if (zhat->value.shape() != zq->value.shape())
    throw std::invalid_argument("vq_loss: latent shape mismatch");
  Var codebook_term = per_sample_mean(ad::square(ad::sub(ad::detach(zhat), zq)));
  Var commit_term = per_sample_mean(ad::square(ad::sub(ad::detach(zq), zhat)));
  Var combined = ad::add(codebook_term, ad::mul_scalar(commit_term, commitment_weight));
  return ad::mul_scalar(ad::mean_all(combined), lambda_vq);
}

Var total_loss(const Var& pre_rec, const Var& post_rec, const Var& vq) {
  return ad::add(ad::add(pre_rec, post_rec), vq);
}

}  // namespace ctgen::loss
