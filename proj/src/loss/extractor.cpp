#include "ctgen/loss/extractor.hpp"

#include <stdexcept>

namespace ctgen::loss {

using ad::Var;

SurrogateExtractor::SurrogateExtractor(uint64_t seed, int64_t feature_dim) : seed_(seed), dim_(feature_dim) {
  Rng rng(seed ^ 0xFEA7ull);
  const int64_t widths[4] = {16, 32, 64, 128};
  int64_t in = 1;
  for (int i = 0; i < 4; ++i) {
    convs_.emplace_back(params_, "conv" + std::to_string(i), in, widths[i], 3, 2, 1, rng);
    in = widths[i];
  }
  head_ = ad::LinearLayer(params_, "head", in, dim_, rng);
  for (const auto& [name, v] : params_.entries()) v->requires_grad = false;  // frozen by construction
}

Var SurrogateExtractor::embed(const Var& images) const {
  if (images->value.rank() != 4 || images->value.dim(1) != 1)
    throw std::invalid_argument("SurrogateExtractor: expected [B,1,H,W]");
  Var h = images;
  // Area-resample to the 64x64 operating size.
  while (h->value.dim(2) > 64) h = ad::avg_pool2x2(h);
  while (h->value.dim(2) < 64) h = ad::upsample_nearest2x(h);
  if (h->value.dim(2) != 64 || h->value.dim(3) != 64)
    throw std::invalid_argument("SurrogateExtractor: image sides must be powers of two");
  for (const auto& conv : convs_) h = ad::silu(conv(h));
  return head_(ad::global_avg_pool(h));
}

std::string SurrogateExtractor::identity() const {
  return "surrogate-v1:seed=" + std::to_string(seed_) + ":d=" + std::to_string(dim_);
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name) {
  if (name == "surrogate") return std::make_unique<SurrogateExtractor>();
  if (name.rfind("surrogate:", 0) == 0)
    return std::make_unique<SurrogateExtractor>(std::stoull(name.substr(10)));
  throw std::invalid_argument("make_extractor: unknown extractor '" + name +
                              "' (available: surrogate, surrogate:<seed>)");
}

Var feature_distance_per_sample(const FeatureExtractor& extractor, const Var& a, const Var& b) {
  Var fa = extractor.embed(a);
  Var fb = extractor.embed(b);
  Var diff = ad::square(ad::sub(fa, fb));
  return ad::mul_scalar(ad::sum_rows(diff), 1.0 / static_cast<double>(extractor.feature_dim()));
}

}  // namespace ctgen::loss
