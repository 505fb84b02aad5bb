#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ctgen/ad/graph.hpp"
#include "ctgen/core/array_io.hpp"
#include "ctgen/core/rng.hpp"

namespace ctgen::ad {

// ---- structured ops on [B,C,H,W] tensors ----

/// Zero-padded 2-D convolution via im2col + GEMM. w is [O,C,K,K], b is [O].
Var conv2d(const Var& x, const Var& w, const Var& b, int64_t stride, int64_t pad);
Var upsample_nearest2x(const Var& x);
Var avg_pool2x2(const Var& x);
Var global_avg_pool(const Var& x);  // -> [B,C]
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int64_t c0, int64_t c1);
Var add_channel_bias(const Var& x, const Var& b);

/// x[B,...] scaled per sample by s[B].
Var scale_per_sample(const Var& x, const Var& s);

/// x[m,in] * w[in,out] + b[out].
Var linear(const Var& x, const Var& w, const Var& b);

/// Row lookup: table[V,d] indexed by ids -> [m,d]; gradient scatters into
/// the table.
Var embedding(const Var& table, const std::vector<int64_t>& ids);

/// Row-wise layer norm over [m,d] with learned gamma/beta of size [d].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// ---- parameters ----

/// Named parameter registry backing checkpoints, the optimizer and the
/// frozen-model hash.
class ParamStore {
 public:
  Var create(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::vector<Var> vars() const;
  int64_t parameter_count() const;

  void save(ArrayFile& file, const std::string& prefix = "p/") const;
  void load(const ArrayFile& file, const std::string& prefix = "p/");

  /// FNV-1a over the raw parameter bytes, in registration order.
  uint64_t content_hash() const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

/// Uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor uniform_fanin_init(const Shape& shape, int64_t fan_in, Rng& rng);

struct Conv2dLayer {
  Var w, b;
  int64_t stride = 1, pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore& ps, const std::string& name, int64_t in_c, int64_t out_c, int64_t k, int64_t stride,
              int64_t pad, Rng& rng);
  Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct LinearLayer {
  Var w, b;

  LinearLayer() = default;
  LinearLayer(ParamStore& ps, const std::string& name, int64_t in, int64_t out, Rng& rng, bool zero_init = false);
  Var operator()(const Var& x) const { return linear(x, w, b); }
};

}  // namespace ctgen::ad
