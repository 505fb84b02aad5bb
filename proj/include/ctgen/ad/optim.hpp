#pragma once

#include <vector>

#include "ctgen/ad/graph.hpp"

namespace ctgen::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW) when > 0
};

/// Adam / AdamW over leaf parameters. Parameter values are updated in place
/// between graph constructions.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig cfg);

  void step(const std::vector<Tensor>& grads);
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Var> params_;
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace ctgen::ad
