#include "ctgen/hu/windowing.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctgen::hu {

namespace {

constexpr int kPhysicalMin = -1024;
constexpr int kPhysicalMax = 3071;

float scale_one(int h, const HuInterval& iv) {
  const int c = std::clamp(h, iv.hu_min, iv.hu_max);
  return static_cast<float>(c - iv.hu_min) / static_cast<float>(iv.width());
}

}  // namespace

HuInterval::HuInterval(int lo, int hi) : hu_min(lo), hu_max(hi) {
  if (hu_min >= hu_max) throw std::invalid_argument("HuInterval: hu_min must be < hu_max");
  if (hu_min < kPhysicalMin || hu_max > kPhysicalMax)
    throw std::invalid_argument("HuInterval: outside physical HU range [-1024, 3071]");
}

HuIntervalSet::HuIntervalSet(std::vector<HuInterval> ivs, HuInterval full)
    : intervals(std::move(ivs)), full_range(full) {
  if (intervals.empty()) throw std::invalid_argument("HuIntervalSet: needs at least one interval");
  for (const HuInterval& iv : intervals)
    if (iv.hu_min < full_range.hu_min || iv.hu_max > full_range.hu_max)
      throw std::invalid_argument("HuIntervalSet: interval not contained in full range");
  // Disjointness: sort endpoints and require strict gaps (closed intervals).
  std::vector<HuInterval> sorted = intervals;
  std::sort(sorted.begin(), sorted.end(), [](const HuInterval& a, const HuInterval& b) { return a.hu_min < b.hu_min; });
  for (size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].hu_min <= sorted[i - 1].hu_max)
      throw std::invalid_argument("HuIntervalSet: intervals overlap or share an endpoint");
}

HuIntervalSet paper_interval_set() {
  return HuIntervalSet({HuInterval(-950, -700), HuInterval(-500, -200), HuInterval(30, 70), HuInterval(100, 1000)},
                       HuInterval(-1000, 1000));
}

Tensor clip_scale(const HuImage& slice_hu, const HuInterval& interval) {
  Tensor out({slice_hu.height, slice_hu.width});
  for (int64_t i = 0; i < slice_hu.numel(); ++i) out[i] = scale_one(slice_hu.hu[static_cast<size_t>(i)], interval);
  return out;
}

WindowedStack window_stack(const HuImage& slice_hu, const HuIntervalSet& set, Provenance prov) {
  const int64_t k = set.k(), h = slice_hu.height, w = slice_hu.width;
  Tensor channels({k, h, w});
  for (int64_t c = 0; c < k; ++c) {
    const Tensor ch = clip_scale(slice_hu, set.intervals[static_cast<size_t>(c)]);
    std::copy(ch.data(), ch.data() + h * w, channels.data() + c * h * w);
  }
  CtSlice full{clip_scale(slice_hu, set.full_range), prov};
  return WindowedStack{std::move(channels), set, std::move(full)};
}

Tensor active_masks(const HuImage& slice_hu, const HuIntervalSet& set) {
  const int64_t k = set.k(), n = slice_hu.numel();
  Tensor masks({k, slice_hu.height, slice_hu.width});
  for (int64_t c = 0; c < k; ++c) {
    const HuInterval& iv = set.intervals[static_cast<size_t>(c)];
    for (int64_t i = 0; i < n; ++i)
      masks[c * n + i] = iv.contains(slice_hu.hu[static_cast<size_t>(i)]) ? 1.0f : 0.0f;
  }
  return masks;
}

PiecewiseReconstruction piecewise_reconstruct(const WindowedStack& stack, const Tensor& masks) {
  if (masks.empty()) throw std::invalid_argument("piecewise_reconstruct: mask information is required");
  const int64_t k = stack.k(), h = stack.height(), w = stack.width(), n = h * w;
  if (masks.rank() != 3 || masks.dim(0) != k || masks.dim(1) != h || masks.dim(2) != w)
    throw std::invalid_argument("piecewise_reconstruct: mask shape does not match stack");

  const HuInterval& full = stack.interval_set.full_range;
  PiecewiseReconstruction out{Tensor({h, w}), Tensor({h, w})};
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t c = 0; c < k; ++c) {
      if (masks[c * n + i] <= 0.5f) continue;
      const HuInterval& iv = stack.interval_set.intervals[static_cast<size_t>(c)];
      // Unclip back to the raw value. Raw HU values are integral (int16
      // until scaling), so rounding removes the float32 division error and
      // the rescale below reproduces clip_scale(raw, full) bit-for-bit.
      const float unclipped = stack.channels[c * n + i] * static_cast<float>(iv.width()) + static_cast<float>(iv.hu_min);
      const int hu = static_cast<int>(std::lround(unclipped));
      out.full[i] = scale_one(hu, full);
      out.covered[i] = 1.0f;
      break;
    }
  }
  return out;
}

PiecewiseReconstruction piecewise_reconstruct(const WindowedStack& stack, const HuImage& raw) {
  return piecewise_reconstruct(stack, active_masks(raw, stack.interval_set));
}

AffineFit best_affine_combiner(const std::vector<WindowedStack>& stacks) {
  if (stacks.empty()) throw std::invalid_argument("best_affine_combiner: no stacks");
  const int64_t k = stacks[0].k();
  const int64_t d = k + 1;  // coefficients + bias

  // Accumulate the normal equations in double; pixel counts can be large.
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd aty = Eigen::VectorXd::Zero(d);
  double yty = 0.0;
  int64_t count = 0;
  Eigen::VectorXd row(d);
  for (const WindowedStack& s : stacks) {
    if (!s.full_range_slice) throw std::invalid_argument("best_affine_combiner: stack lacks full-range target");
    if (s.k() != k) throw std::invalid_argument("best_affine_combiner: channel count mismatch");
    const int64_t n = s.height() * s.width();
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t c = 0; c < k; ++c) row(c) = s.channels[c * n + i];
      row(k) = 1.0;
      const double y = s.full_range_slice->pixels[i];
      ata.noalias() += row * row.transpose();
      aty.noalias() += row * y;
      yty += y * y;
      ++count;
    }
  }
  if (count < d) throw std::invalid_argument("best_affine_combiner: fewer samples than unknowns");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ata);
  const Eigen::VectorXd evals = eig.eigenvalues();
  const double tol = std::max(1e-12, evals.maxCoeff() * 1e-10);
  Eigen::VectorXd inv = evals;
  bool deficient = false;
  for (int64_t i = 0; i < d; ++i) {
    if (evals(i) <= tol) {
      inv(i) = 0.0;  // minimum-norm pseudo-inverse
      deficient = true;
    } else {
      inv(i) = 1.0 / evals(i);
    }
  }
  const Eigen::VectorXd coef = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose() * aty;

  const double ss_res = std::max(0.0, yty - 2.0 * coef.dot(aty) + coef.dot(ata * coef));
  AffineFit fit;
  fit.coefficients.resize(static_cast<size_t>(k));
  for (int64_t c = 0; c < k; ++c) fit.coefficients[static_cast<size_t>(c)] = static_cast<float>(coef(c));
  fit.bias = static_cast<float>(coef(k));
  fit.rmse = static_cast<float>(std::sqrt(ss_res / static_cast<double>(count)));
  fit.rank_deficient = deficient;
  return fit;
}

std::vector<float> hu_weights_from_fractions(const std::vector<float>& fractions, float w_min) {
  if (fractions.empty()) throw std::invalid_argument("hu_weights: empty fraction vector");
  if (w_min < 0.0f || w_min >= 1.0f) throw std::invalid_argument("hu_weights: w_min must be in [0,1)");
  std::vector<double> z(fractions.size());
  double zmax = -1.0;
  for (size_t i = 0; i < fractions.size(); ++i) {
    z[i] = std::max(static_cast<double>(fractions[i]), static_cast<double>(w_min));
    zmax = std::max(zmax, z[i]);
  }
  double denom = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    denom += v;
  }
  std::vector<float> w(fractions.size());
  for (size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(z[i] / denom);
  return w;
}

HuWeightVector hu_weights(const WindowedStack& stack, float w_min) {
  const int64_t k = stack.k(), n = stack.height() * stack.width();
  if (n == 0) throw std::invalid_argument("hu_weights: empty channels");
  std::vector<float> fractions(static_cast<size_t>(k));
  for (int64_t c = 0; c < k; ++c) {
    int64_t nonzero = 0;
    for (int64_t i = 0; i < n; ++i)
      if (stack.channels[c * n + i] > 0.0f) ++nonzero;
    fractions[static_cast<size_t>(c)] = static_cast<float>(nonzero) / static_cast<float>(n);
  }
  return HuWeightVector{hu_weights_from_fractions(fractions, w_min), w_min};
}

}  // namespace ctgen::hu
