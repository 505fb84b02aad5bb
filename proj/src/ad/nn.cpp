#include "ctgen/ad/nn.hpp"

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>

namespace ctgen::ad {

namespace {

// Index-map builders are memoized per geometry; training loops reuse a
// handful of shapes thousands of times.
using MapKey = std::array<int64_t, 10>;
std::map<MapKey, IndexMap>& map_cache() {
  static std::map<MapKey, IndexMap> cache;
  return cache;
}

IndexMap cached(const MapKey& key, const std::function<std::vector<int64_t>()>& build) {
  auto& cache = map_cache();
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto map = std::make_shared<const std::vector<int64_t>>(build());
  cache.emplace(key, map);
  return map;
}

int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

IndexMap im2col_map(int64_t B, int64_t C, int64_t H, int64_t W, int64_t K, int64_t stride, int64_t pad) {
  const int64_t OH = conv_out_dim(H, K, stride, pad), OW = conv_out_dim(W, K, stride, pad);
  return cached({1, B, C, H, W, K, stride, pad, OH, OW}, [=] {
    std::vector<int64_t> map(static_cast<size_t>(C * K * K * B * OH * OW));
    const int64_t cols = B * OH * OW;
    int64_t row = 0;
    for (int64_t c = 0; c < C; ++c)
      for (int64_t u = 0; u < K; ++u)
        for (int64_t v = 0; v < K; ++v, ++row) {
          int64_t col = 0;
          for (int64_t b = 0; b < B; ++b)
            for (int64_t oh = 0; oh < OH; ++oh)
              for (int64_t ow = 0; ow < OW; ++ow, ++col) {
                const int64_t ih = oh * stride - pad + u;
                const int64_t iw = ow * stride - pad + v;
                map[static_cast<size_t>(row * cols + col)] =
                    (ih >= 0 && ih < H && iw >= 0 && iw < W) ? ((b * C + c) * H + ih) * W + iw : -1;
              }
        }
    return map;
  });
}

IndexMap conv_nchw_map(int64_t B, int64_t O, int64_t OH, int64_t OW) {
  return cached({2, B, O, OH, OW, 0, 0, 0, 0, 0}, [=] {
    std::vector<int64_t> map(static_cast<size_t>(B * O * OH * OW));
    int64_t i = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t o = 0; o < O; ++o)
        for (int64_t p = 0; p < OH * OW; ++p, ++i)
          map[static_cast<size_t>(i)] = o * (B * OH * OW) + b * OH * OW + p;
    return map;
  });
}

IndexMap channel_bias_map(int64_t B, int64_t C, int64_t HW) {
  return cached({3, B, C, HW, 0, 0, 0, 0, 0, 0}, [=] {
    std::vector<int64_t> map(static_cast<size_t>(B * C * HW));
    int64_t i = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t p = 0; p < HW; ++p, ++i) map[static_cast<size_t>(i)] = c;
    return map;
  });
}

IndexMap upsample2x_map(int64_t B, int64_t C, int64_t H, int64_t W) {
  return cached({4, B, C, H, W, 0, 0, 0, 0, 0}, [=] {
    std::vector<int64_t> map(static_cast<size_t>(B * C * 4 * H * W));
    int64_t i = 0;
    for (int64_t bc = 0; bc < B * C; ++bc)
      for (int64_t r = 0; r < 2 * H; ++r)
        for (int64_t col = 0; col < 2 * W; ++col, ++i)
          map[static_cast<size_t>(i)] = (bc * H + r / 2) * W + col / 2;
    return map;
  });
}

IndexMap pool2x_scatter_map(int64_t B, int64_t C, int64_t H, int64_t W) {
  return cached({5, B, C, H, W, 0, 0, 0, 0, 0}, [=] {
    std::vector<int64_t> map(static_cast<size_t>(B * C * H * W));
    int64_t i = 0;
    for (int64_t bc = 0; bc < B * C; ++bc)
      for (int64_t r = 0; r < H; ++r)
        for (int64_t col = 0; col < W; ++col, ++i)
          map[static_cast<size_t>(i)] = (bc * (H / 2) + r / 2) * (W / 2) + col / 2;
    return map;
  });
}

IndexMap slice_channels_gather_map(int64_t B, int64_t C, int64_t HW, int64_t c0, int64_t c1) {
  return cached({6, B, C, HW, c0, c1, 0, 0, 0, 0}, [=] {
    std::vector<int64_t> map(static_cast<size_t>(B * (c1 - c0) * HW));
    int64_t i = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = c0; c < c1; ++c)
        for (int64_t p = 0; p < HW; ++p, ++i) map[static_cast<size_t>(i)] = (b * C + c) * HW + p;
    return map;
  });
}

IndexMap concat_scatter_map(int64_t B, int64_t Cin, int64_t HW, int64_t Cout, int64_t c_offset) {
  return cached({7, B, Cin, HW, Cout, c_offset, 0, 0, 0, 0}, [=] {
    std::vector<int64_t> map(static_cast<size_t>(B * Cin * HW));
    int64_t i = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < Cin; ++c)
        for (int64_t p = 0; p < HW; ++p, ++i) map[static_cast<size_t>(i)] = (b * Cout + c_offset + c) * HW + p;
    return map;
  });
}

IndexMap sample_broadcast_map(int64_t B, int64_t per_sample) {
  return cached({8, B, per_sample, 0, 0, 0, 0, 0, 0, 0}, [=] {
    std::vector<int64_t> map(static_cast<size_t>(B * per_sample));
    int64_t i = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t p = 0; p < per_sample; ++p, ++i) map[static_cast<size_t>(i)] = b;
    return map;
  });
}

IndexMap gap_scatter_map(int64_t B, int64_t C, int64_t HW) {
  return cached({9, B, C, HW, 0, 0, 0, 0, 0, 0}, [=] {
    std::vector<int64_t> map(static_cast<size_t>(B * C * HW));
    int64_t i = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t p = 0; p < HW; ++p, ++i) map[static_cast<size_t>(i)] = b * C + c;
    return map;
  });
}

void need_rank4(const Var& x, const char* op) {
  if (x->value.rank() != 4) throw std::invalid_argument(std::string(op) + ": expected [B,C,H,W]");
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int64_t stride, int64_t pad) {
  need_rank4(x, "conv2d");
  if (w->value.rank() != 4) throw std::invalid_argument("conv2d: weight must be [O,C,K,K]");
  const int64_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int64_t O = w->value.dim(0), K = w->value.dim(2);
  if (w->value.dim(1) != C) throw std::invalid_argument("conv2d: channel mismatch");
  const int64_t OH = conv_out_dim(H, K, stride, pad), OW = conv_out_dim(W, K, stride, pad);

  Var cols = gather(x, im2col_map(B, C, H, W, K, stride, pad), {C * K * K, B * OH * OW});
  Var w2d = reshape(w, {O, C * K * K});
  Var out2d = matmul(w2d, cols);
  Var out = gather(out2d, conv_nchw_map(B, O, OH, OW), {B, O, OH, OW});
  return add_channel_bias(out, b);
}

Var upsample_nearest2x(const Var& x) {
  need_rank4(x, "upsample_nearest2x");
  const int64_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  return gather(x, upsample2x_map(B, C, H, W), {B, C, 2 * H, 2 * W});
}

Var avg_pool2x2(const Var& x) {
  need_rank4(x, "avg_pool2x2");
  const int64_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (H % 2 || W % 2) throw std::invalid_argument("avg_pool2x2: odd spatial size");
  Var summed = scatter_add(x, pool2x_scatter_map(B, C, H, W), {B, C, H / 2, W / 2});
  return mul_scalar(summed, 0.25);
}

Var global_avg_pool(const Var& x) {
  need_rank4(x, "global_avg_pool");
  const int64_t B = x->value.dim(0), C = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  Var summed = scatter_add(x, gap_scatter_map(B, C, HW), {B, C});
  return mul_scalar(summed, 1.0 / static_cast<double>(HW));
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
  const int64_t B = xs[0]->value.dim(0), H = xs[0]->value.dim(2), W = xs[0]->value.dim(3);
  int64_t total_c = 0;
  for (const Var& x : xs) {
    need_rank4(x, "concat_channels");
    if (x->value.dim(0) != B || x->value.dim(2) != H || x->value.dim(3) != W)
      throw std::invalid_argument("concat_channels: shape mismatch");
    total_c += x->value.dim(1);
  }
  Var out;
  int64_t offset = 0;
  for (const Var& x : xs) {
    Var placed = scatter_add(x, concat_scatter_map(B, x->value.dim(1), H * W, total_c, offset), {B, total_c, H, W});
    out = out ? add(out, placed) : placed;
    offset += x->value.dim(1);
  }
  return out;
}

Var slice_channels(const Var& x, int64_t c0, int64_t c1) {
  need_rank4(x, "slice_channels");
  const int64_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (c0 < 0 || c1 > C || c0 >= c1) throw std::invalid_argument("slice_channels: bad range");
  return gather(x, slice_channels_gather_map(B, C, H * W, c0, c1), {B, c1 - c0, H, W});
}

Var add_channel_bias(const Var& x, const Var& b) {
  need_rank4(x, "add_channel_bias");
  const int64_t B = x->value.dim(0), C = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  if (b->value.numel() != C) throw std::invalid_argument("add_channel_bias: bias size mismatch");
  return add(x, gather(b, channel_bias_map(B, C, HW), x->value.shape()));
}

Var scale_per_sample(const Var& x, const Var& s) {
  const int64_t B = x->value.dim(0);
  if (s->value.numel() != B) throw std::invalid_argument("scale_per_sample: scale size mismatch");
  const int64_t per = x->value.numel() / B;
  return mul(x, gather(s, sample_broadcast_map(B, per), x->value.shape()));
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x->value.rank() != 2) throw std::invalid_argument("linear: expected [m,in]");
  Var out = matmul(x, w);
  return add(out, broadcast_rows(b, out->value.dim(0)));
}

Var embedding(const Var& table, const std::vector<int64_t>& ids) {
  if (table->value.rank() != 2) throw std::invalid_argument("embedding: table must be [V,d]");
  const int64_t V = table->value.dim(0), d = table->value.dim(1);
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(ids.size() * static_cast<size_t>(d));
  for (int64_t id : ids) {
    if (id < 0 || id >= V) throw std::invalid_argument("embedding: id out of range");
    for (int64_t c = 0; c < d; ++c) map->push_back(id * d + c);
  }
  return gather(table, map, {static_cast<int64_t>(ids.size()), d});
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x->value.rank() != 2) throw std::invalid_argument("layer_norm: expected [m,d]");
  const int64_t m = x->value.dim(0), d = x->value.dim(1);
  Var mean = mul_scalar(sum_rows(x), 1.0 / static_cast<double>(d));
  Var centered = sub(x, broadcast_cols(mean, d));
  Var var = mul_scalar(sum_rows(square(centered)), 1.0 / static_cast<double>(d));
  Var inv = div(constant(Tensor({m}, 1.0f)), sqrt_v(add_scalar(var, eps)));
  Var normed = mul(centered, broadcast_cols(inv, d));
  return add(mul(normed, broadcast_rows(gamma, m)), broadcast_rows(beta, m));
}

Var ParamStore::create(const std::string& name, Tensor init) {
  for (const auto& [n, v] : entries_)
    if (n == name) throw std::invalid_argument("ParamStore: duplicate parameter name " + name);
  Var v = leaf(std::move(init), true);
  entries_.emplace_back(name, v);
  return v;
}

std::vector<Var> ParamStore::vars() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& [n, v] : entries_) out.push_back(v);
  return out;
}

int64_t ParamStore::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, v] : entries_) n += v->value.numel();
  return n;
}

void ParamStore::save(ArrayFile& file, const std::string& prefix) const {
  for (const auto& [name, v] : entries_) file.put_f32(prefix + name, v->value);
}

void ParamStore::load(const ArrayFile& file, const std::string& prefix) {
  for (auto& [name, v] : entries_) {
    Tensor t = file.get_f32(prefix + name);
    if (t.shape() != v->value.shape())
      throw std::runtime_error("ParamStore: shape mismatch loading " + name);
    v->value = std::move(t);
  }
}

uint64_t ParamStore::content_hash() const {
  uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& [name, v] : entries_) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(v->value.data());
    const size_t n = sizeof(float) * static_cast<size_t>(v->value.numel());
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ull;
    }
  }
  return h;
}

Tensor uniform_fanin_init(const Shape& shape, int64_t fan_in, Rng& rng) {
  Tensor t(shape);
  const float bound = 1.0f / std::sqrt(static_cast<float>(std::max<int64_t>(fan_in, 1)));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniformf(-bound, bound);
  return t;
}

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& name, int64_t in_c, int64_t out_c, int64_t k,
                         int64_t stride_, int64_t pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  const int64_t fan_in = in_c * k * k;
  w = ps.create(name + ".w", uniform_fanin_init({out_c, in_c, k, k}, fan_in, rng));
  b = ps.create(name + ".b", uniform_fanin_init({out_c}, fan_in, rng));
}

LinearLayer::LinearLayer(ParamStore& ps, const std::string& name, int64_t in, int64_t out, Rng& rng, bool zero_init) {
  if (zero_init) {
    w = ps.create(name + ".w", Tensor({in, out}));
    b = ps.create(name + ".b", Tensor({out}));
  } else {
    w = ps.create(name + ".w", uniform_fanin_init({in, out}, in, rng));
    b = ps.create(name + ".b", uniform_fanin_init({out}, in, rng));
  }
}

}  // namespace ctgen::ad
