#include "ctgen/ad/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ctgen::ad {

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Var& p : params_) {
    m_.push_back(zeros_like(p->value));
    v_.push_back(zeros_like(p->value));
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw std::invalid_argument("Adam::step: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i]->value;
    const Tensor& g = grads[i];
    if (g.shape() != p.shape()) throw std::invalid_argument("Adam::step: gradient shape mismatch");
    for (int64_t j = 0; j < p.numel(); ++j) {
      const double gj = g[j];
      if (!std::isfinite(gj)) throw std::runtime_error("Adam::step: non-finite gradient");
      m_[i][j] = static_cast<float>(cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj);
      v_[i][j] = static_cast<float>(cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj);
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      double update = cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      if (cfg_.weight_decay > 0.0) update += cfg_.lr * cfg_.weight_decay * p[j];
      p[j] = static_cast<float>(p[j] - update);
    }
  }
}

}  // namespace ctgen::ad
