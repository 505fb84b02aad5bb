#pragma once

#include <optional>
#include <vector>

#include "ctgen/core/tensor.hpp"

namespace ctgen::hu {

/// Closed HU interval [hu_min, hu_max]. Degenerate and out-of-physical-range
/// intervals are rejected at construction.
struct HuInterval {
  int hu_min;
  int hu_max;

  HuInterval(int lo, int hi);

  int width() const { return hu_max - hu_min; }
  bool contains(int h) const { return h >= hu_min && h <= hu_max; }
};

/// Ordered, pairwise-disjoint intervals plus the baseline full clip range.
/// Disjointness forbids shared endpoints, so closed-interval membership never
/// needs a tie-break.
struct HuIntervalSet {
  std::vector<HuInterval> intervals;
  HuInterval full_range;

  HuIntervalSet(std::vector<HuInterval> ivs, HuInterval full);

  int64_t k() const { return static_cast<int64_t>(intervals.size()); }
};

/// The four-interval operating point used throughout the experiments, with
/// the [-1000, 1000] baseline clip range.
HuIntervalSet paper_interval_set();

enum class Provenance { real, phantom, synthetic };

/// Unit-scaled 2-D slice; all values in [0,1].
struct CtSlice {
  Tensor pixels;  // [H,W]
  Provenance provenance = Provenance::phantom;

  int64_t height() const { return pixels.dim(0); }
  int64_t width() const { return pixels.dim(1); }
};

/// K complementary windowed views of one slice, one channel per interval,
/// optionally carrying the full-range companion.
struct WindowedStack {
  Tensor channels;  // [K,H,W]
  HuIntervalSet interval_set;
  std::optional<CtSlice> full_range_slice;

  int64_t k() const { return channels.dim(0); }
  int64_t height() const { return channels.dim(1); }
  int64_t width() const { return channels.dim(2); }
};

/// Dynamic per-interval loss weights; always sums to 1.
struct HuWeightVector {
  std::vector<float> weights;
  float w_min;
};

/// (clip(h, hu_min, hu_max) - hu_min) / (hu_max - hu_min), elementwise in
/// float32. Monotone in h and constant outside the interval.
Tensor clip_scale(const HuImage& slice_hu, const HuInterval& interval);

/// Windows a raw slice into K channels plus the full-range companion.
WindowedStack window_stack(const HuImage& slice_hu, const HuIntervalSet& set, Provenance prov = Provenance::phantom);

/// M_k(v) = 1 iff the raw HU at v lies in I_k. Returned as [K,H,W] with
/// values in {0,1}; rows are mutually exclusive by interval disjointness.
Tensor active_masks(const HuImage& slice_hu, const HuIntervalSet& set);

struct PiecewiseReconstruction {
  Tensor full;     // [H,W]; value only meaningful where covered == 1
  Tensor covered;  // [H,W] in {0,1}; 0 marks pixels in inter-interval gaps
};

/// Analytic inverse of windowing: unclips each covered pixel back to its
/// integer HU value and rescales into the full range. Bit-exact against
/// clip_scale(raw, full_range) on covered pixels; gap pixels are flagged
/// undetermined rather than given a sentinel value. `masks` as produced by
/// active_masks; empty masks are rejected.
PiecewiseReconstruction piecewise_reconstruct(const WindowedStack& stack, const Tensor& masks);
PiecewiseReconstruction piecewise_reconstruct(const WindowedStack& stack, const HuImage& raw);

struct AffineFit {
  std::vector<float> coefficients;  // alpha_1..alpha_K
  float bias = 0.0f;
  float rmse = 0.0f;
  bool rank_deficient = false;
};

/// Least-squares affine fit of the full-range target from the K channels
/// over every pixel of every stack. The returned RMSE quantifies how far any
/// fixed affine combination stays from inverting the windowing. Stacks must
/// carry their full-range companion. Rank-deficient systems are solved
/// minimum-norm and flagged.
AffineFit best_affine_combiner(const std::vector<WindowedStack>& stacks);

/// Eq.-style dynamic weights: softmax over max(nonzero fraction, w_min).
HuWeightVector hu_weights(const WindowedStack& stack, float w_min);

/// Same computation on a raw fraction vector (shared with tests/oracles).
std::vector<float> hu_weights_from_fractions(const std::vector<float>& fractions, float w_min);

}  // namespace ctgen::hu
