#include <doctest.h>

#include <cmath>

#include "ctgen/core/rng.hpp"
#include "ctgen/data/phantom.hpp"
#include "ctgen/hu/windowing.hpp"

using namespace ctgen;
using namespace ctgen::hu;

namespace {

HuImage constant_image(int64_t n, int16_t v) {
  HuImage img(n, n);
  std::fill(img.hu.begin(), img.hu.end(), v);
  return img;
}

HuImage random_image(int64_t n, uint64_t seed, int lo = -1000, int hi = 1000) {
  Rng rng(seed);
  HuImage img(n, n);
  for (auto& h : img.hu) h = static_cast<int16_t>(lo + rng.uniform_int(hi - lo + 1));
  return img;
}

}  // namespace

TEST_CASE("interval validation") {
  CHECK_THROWS(HuInterval(-700, -700));  // degenerate
  CHECK_THROWS(HuInterval(-700, -950));
  CHECK_THROWS(HuInterval(-2000, 0));
  CHECK_NOTHROW(HuInterval(-950, -700));
}

TEST_CASE("interval set validation") {
  const HuInterval full(-1000, 1000);
  CHECK_THROWS(HuIntervalSet({}, full));
  CHECK_THROWS(HuIntervalSet({HuInterval(-950, -700), HuInterval(-700, -500)}, full));  // shared endpoint
  CHECK_THROWS(HuIntervalSet({HuInterval(-950, -600), HuInterval(-700, -500)}, full));  // overlap
  CHECK_THROWS(HuIntervalSet({HuInterval(-1024, -700)}, full));                         // outside full range
  CHECK(paper_interval_set().k() == 4);
}

TEST_CASE("clip_scale anchor values") {
  const HuInterval lung(-950, -700);
  HuImage img(1, 3);
  img.hu = {-1000, -825, -700};
  const Tensor out = clip_scale(img, lung);
  CHECK(out[0] == 0.0f);   // below bound clamps to floor
  CHECK(out[1] == 0.5f);   // interval midpoint
  CHECK(out[2] == 1.0f);

  HuImage zero(1, 1);
  zero.hu = {0};
  CHECK(clip_scale(zero, HuInterval(-1000, 1000))[0] == 0.5f);  // baseline midpoint
}

TEST_CASE("clip_scale is monotone and saturates outside the interval") {
  const HuInterval iv(-500, -200);
  HuImage img(1, 201);
  for (int i = 0; i <= 200; ++i) img.hu[i] = static_cast<int16_t>(-700 + 5 * i);  // -700..300
  const Tensor out = clip_scale(img, iv);
  for (int i = 1; i <= 200; ++i) CHECK(out[i] >= out[i - 1]);
  CHECK(out[0] == 0.0f);
  CHECK(out[200] == 1.0f);
}

TEST_CASE("window_stack on the paper interval set") {
  const HuIntervalSet set = paper_interval_set();

  SUBCASE("air slice is zero everywhere") {
    const WindowedStack s = window_stack(constant_image(8, -1000), set);
    CHECK(s.k() == 4);
    for (int64_t i = 0; i < s.channels.numel(); ++i) CHECK(s.channels[i] == 0.0f);
    for (int64_t i = 0; i < s.full_range_slice->pixels.numel(); ++i) CHECK(s.full_range_slice->pixels[i] == 0.0f);
  }

  SUBCASE("midpoint pixels land at 0.5 in exactly one channel") {
    HuImage img(1, 4);
    img.hu = {-825, -350, 50, 550};
    const WindowedStack s = window_stack(img, set);
    for (int64_t k = 0; k < 4; ++k) {
      for (int64_t p = 0; p < 4; ++p) {
        const float v = s.channels[k * 4 + p];
        if (k == p)
          CHECK(v == 0.5f);
        else
          CHECK((v == 0.0f || v == 1.0f));  // clamped outside its interval
      }
    }
  }
}

TEST_CASE("active_masks membership and partition") {
  const HuIntervalSet set = paper_interval_set();

  HuImage img(1, 2);
  img.hu = {-800, -600};
  const Tensor m = active_masks(img, set);
  CHECK(m[0 * 2 + 0] == 1.0f);  // -800 in [-950,-700]
  CHECK(m[1 * 2 + 0] == 0.0f);
  CHECK(m[2 * 2 + 0] == 0.0f);
  CHECK(m[3 * 2 + 0] == 0.0f);
  for (int64_t k = 0; k < 4; ++k) CHECK(m[k * 2 + 1] == 0.0f);  // -600 in a gap

  // Brute-force partition check over random HU values.
  const HuImage rnd = random_image(32, 99);
  const Tensor masks = active_masks(rnd, set);
  const int64_t n = rnd.numel();
  for (int64_t i = 0; i < n; ++i) {
    float sum = 0.0f;
    for (int64_t k = 0; k < 4; ++k) sum += masks[k * n + i];
    CHECK((sum == 0.0f || sum == 1.0f));
    bool member = false;
    for (const HuInterval& iv : set.intervals) member = member || iv.contains(rnd.hu[i]);
    CHECK(sum == (member ? 1.0f : 0.0f));
  }
}

TEST_CASE("piecewise reconstruction is bit-exact on covered pixels") {
  const HuIntervalSet set = paper_interval_set();

  SUBCASE("single pixel anchors") {
    HuImage img(1, 2);
    img.hu = {-825, -600};
    const WindowedStack s = window_stack(img, set);
    const PiecewiseReconstruction r = piecewise_reconstruct(s, img);
    CHECK(r.covered[0] == 1.0f);
    CHECK(r.full[0] == doctest::Approx(0.0875).epsilon(1e-7));
    CHECK(r.covered[1] == 0.0f);  // gap value flagged undetermined
  }

  SUBCASE("whole random slices, float-equality against the oracle") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const HuImage img = random_image(32, 1000 + seed);
      const WindowedStack s = window_stack(img, set);
      const PiecewiseReconstruction r = piecewise_reconstruct(s, img);
      const Tensor want = clip_scale(img, set.full_range);
      for (int64_t i = 0; i < img.numel(); ++i) {
        if (r.covered[i] == 1.0f) CHECK(r.full[i] == want[i]);  // bit-for-bit
      }
    }
  }

  SUBCASE("missing masks are rejected") {
    const WindowedStack s = window_stack(constant_image(4, 0), set);
    CHECK_THROWS(piecewise_reconstruct(s, Tensor{}));
  }
}

TEST_CASE("best affine combiner") {
  SUBCASE("identity decomposition has zero residual") {
    const HuIntervalSet identity({HuInterval(-1000, 1000)}, HuInterval(-1000, 1000));
    std::vector<WindowedStack> stacks;
    for (uint64_t s = 0; s < 3; ++s) stacks.push_back(window_stack(random_image(16, 50 + s), identity));
    const AffineFit fit = best_affine_combiner(stacks);
    CHECK(fit.coefficients[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(std::abs(fit.bias) < 1e-5);
    CHECK(fit.rmse < 1e-6);
  }

  SUBCASE("multi-tissue phantoms admit no affine inverse") {
    const HuIntervalSet set = paper_interval_set();
    std::vector<WindowedStack> stacks;
    for (uint64_t s = 0; s < 10; ++s) {
      const HuImage img = data::generate_phantom(data::lung_phantom_spec(32, s));
      stacks.push_back(window_stack(img, set));
      // The analytic piecewise oracle stays at zero residual on the same data.
      const PiecewiseReconstruction r = piecewise_reconstruct(stacks.back(), img);
      const Tensor want = clip_scale(img, set.full_range);
      for (int64_t i = 0; i < img.numel(); ++i)
        if (r.covered[i] == 1.0f) CHECK(r.full[i] == want[i]);
    }
    const AffineFit fit = best_affine_combiner(stacks);
    CHECK(fit.rmse > 1e-3f);
  }

  SUBCASE("constant image is fit exactly and flagged rank-deficient") {
    const HuIntervalSet set = paper_interval_set();
    const AffineFit fit = best_affine_combiner({window_stack(constant_image(8, -1000), set)});
    CHECK(fit.rmse < 1e-6);
    CHECK(fit.rank_deficient);
  }
}

TEST_CASE("hu weights") {
  SUBCASE("equal fractions give uniform weights") {
    const auto w = hu_weights_from_fractions({0.4f, 0.4f, 0.4f, 0.4f}, 0.15f);
    for (float v : w) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));
  }

  SUBCASE("hand-computed softmax for (0.9, 0, 0, 0) at w_min 0.15") {
    // Independent scalar oracle: softmax(0.9, 0.15, 0.15, 0.15).
    const double e9 = std::exp(0.9), e15 = std::exp(0.15);
    const double denom = e9 + 3 * e15;
    const auto w = hu_weights_from_fractions({0.9f, 0.0f, 0.0f, 0.0f}, 0.15f);
    CHECK(w[0] == doctest::Approx(e9 / denom).epsilon(1e-6));
    for (int k = 1; k < 4; ++k) CHECK(w[k] == doctest::Approx(e15 / denom).epsilon(1e-6));
  }

  SUBCASE("weights sum to one and are permutation-equivariant") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<float> f(4);
      for (auto& v : f) v = static_cast<float>(rng.uniform());
      const auto w = hu_weights_from_fractions(f, 0.15f);
      double sum = 0.0;
      for (float v : w) {
        CHECK(v > 0.0f);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
      std::vector<float> fr(f.rbegin(), f.rend());
      const auto wr = hu_weights_from_fractions(fr, 0.15f);
      for (int k = 0; k < 4; ++k) CHECK(w[k] == doctest::Approx(wr[3 - k]).epsilon(1e-7));
    }
  }

  SUBCASE("stack-level computation matches the fraction path") {
    const HuIntervalSet set = paper_interval_set();
    const HuImage img = data::generate_phantom(data::lung_phantom_spec(32, 7));
    const WindowedStack s = window_stack(img, set);
    const HuWeightVector w = hu_weights(s, 0.15f);
    const int64_t n = s.height() * s.width();
    std::vector<float> fractions;
    for (int64_t k = 0; k < s.k(); ++k) {
      int64_t nz = 0;
      for (int64_t i = 0; i < n; ++i) nz += s.channels[k * n + i] > 0.0f;
      fractions.push_back(static_cast<float>(nz) / static_cast<float>(n));
    }
    const auto want = hu_weights_from_fractions(fractions, 0.15f);
    for (size_t k = 0; k < want.size(); ++k) CHECK(w.weights[k] == want[k]);
  }

  SUBCASE("validation") {
    CHECK_THROWS(hu_weights_from_fractions({}, 0.15f));
    CHECK_THROWS(hu_weights_from_fractions({0.5f}, 1.0f));
  }
}
