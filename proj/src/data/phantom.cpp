#include "ctgen/data/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "ctgen/core/rng.hpp"

namespace ctgen::data {

namespace {

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

bool inside(const TissueComponent& c, float x, float y) {
  const float dx0 = x - c.cx, dy0 = y - c.cy;
  const float ca = std::cos(c.angle), sa = std::sin(c.angle);
  const float dx = ca * dx0 + sa * dy0;
  const float dy = -sa * dx0 + ca * dy0;
  if (c.kind == TissueComponent::Kind::box) return std::abs(dx) <= c.rx && std::abs(dy) <= c.ry;
  const float u = dx / c.rx, v = dy / c.ry;
  return u * u + v * v <= 1.0f;
}

void validate(const PhantomSpec& spec) {
  if (spec.image_size < 16 || !is_power_of_two(spec.image_size))
    throw std::invalid_argument("PhantomSpec: image_size must be >= 16 and a power of two");
  for (const TissueComponent& c : spec.tissue_components) {
    if (c.hu_lo > c.hu_hi || c.hu_lo < -1000 || c.hu_hi > 1000)
      throw std::invalid_argument("PhantomSpec: tissue HU range must lie within [-1000, 1000]");
    if (c.rx <= 0.0f || c.ry <= 0.0f) throw std::invalid_argument("PhantomSpec: non-positive component extent");
    const float reach = std::max(c.rx, c.ry);
    if (c.cx - reach < 0.0f || c.cx + reach > 1.0f || c.cy - reach < 0.0f || c.cy + reach > 1.0f)
      throw std::invalid_argument("PhantomSpec: component exceeds canvas");
  }
}

}  // namespace

HuImage generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  const int64_t n = spec.image_size;
  HuImage img(n, n);
  std::fill(img.hu.begin(), img.hu.end(), static_cast<int16_t>(-1000));  // air

  Rng rng(spec.seed);
  for (const TissueComponent& c : spec.tissue_components) {
    Rng tex = rng.fork(0x7155u + static_cast<uint64_t>(&c - spec.tissue_components.data()));
    for (int64_t r = 0; r < n; ++r) {
      const float y = (static_cast<float>(r) + 0.5f) / static_cast<float>(n);
      for (int64_t col = 0; col < n; ++col) {
        const float x = (static_cast<float>(col) + 0.5f) / static_cast<float>(n);
        if (!inside(c, x, y)) continue;
        const int hu = c.hu_lo + static_cast<int>(tex.uniform_int(c.hu_hi - c.hu_lo + 1));
        img.at(r, col) = static_cast<int16_t>(hu);
      }
    }
  }

  if (spec.noise_sigma > 0.0f) {
    Rng noise = rng.fork(0xA01Eu);
    for (int16_t& h : img.hu) {
      const float v = static_cast<float>(h) + spec.noise_sigma * noise.normal();
      h = static_cast<int16_t>(std::clamp(std::lround(v), long(-1000), long(1000)));
    }
  }
  return img;
}

PhantomSpec lung_phantom_spec(int64_t image_size, uint64_t seed) {
  Rng rng(seed ^ 0x9A57C0DEull);
  auto jitter = [&rng](float base, float amp) { return base + rng.uniformf(-amp, amp); };

  PhantomSpec spec;
  spec.image_size = image_size;
  spec.seed = seed;
  spec.noise_sigma = rng.uniformf(4.0f, 12.0f);

  const float bodyRx = jitter(0.42f, 0.03f), bodyRy = jitter(0.34f, 0.03f);

  // Fat rim: body-sized ellipse painted first, soft tissue inset over it.
  spec.tissue_components.push_back({TissueComponent::Kind::ellipse, 0.5f, 0.52f, bodyRx, bodyRy, 0.0f, -115, -95});
  spec.tissue_components.push_back(
      {TissueComponent::Kind::ellipse, 0.5f, 0.52f, bodyRx - 0.03f, bodyRy - 0.03f, 0.0f, 35, 55});

  // Lung fields.
  const float lungRy = jitter(0.20f, 0.02f);
  const float lungRx = jitter(0.145f, 0.015f);
  const float lungY = jitter(0.50f, 0.02f);
  spec.tissue_components.push_back(
      {TissueComponent::Kind::ellipse, jitter(0.335f, 0.015f), lungY, lungRx, lungRy, jitter(0.25f, 0.1f), -870, -720});
  spec.tissue_components.push_back(
      {TissueComponent::Kind::ellipse, jitter(0.665f, 0.015f), lungY, lungRx, lungRy, jitter(-0.25f, 0.1f), -870, -720});

  // Ground-glass / denser parenchyma patches inside the lungs.
  const int n_patches = 2 + static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < n_patches; ++i) {
    const bool left = rng.uniform() < 0.5;
    const float cx = (left ? 0.335f : 0.665f) + rng.uniformf(-0.05f, 0.05f);
    const float cy = lungY + rng.uniformf(-0.10f, 0.10f);
    spec.tissue_components.push_back({TissueComponent::Kind::ellipse, cx, cy, rng.uniformf(0.02f, 0.045f),
                                      rng.uniformf(0.02f, 0.045f), rng.uniformf(0.0f, 3.1f), -450, -250});
  }

  // Vessels (blood) inside the lungs.
  const int n_vessels = 2 + static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < n_vessels; ++i) {
    const bool left = rng.uniform() < 0.5;
    const float cx = (left ? 0.335f : 0.665f) + rng.uniformf(-0.07f, 0.07f);
    const float cy = lungY + rng.uniformf(-0.12f, 0.12f);
    spec.tissue_components.push_back({TissueComponent::Kind::ellipse, cx, cy, rng.uniformf(0.008f, 0.02f),
                                      rng.uniformf(0.008f, 0.02f), 0.0f, 30, 45});
  }

  // Vertebra and ribs.
  spec.tissue_components.push_back({TissueComponent::Kind::ellipse, 0.5f, jitter(0.80f, 0.02f), jitter(0.05f, 0.01f),
                                    jitter(0.045f, 0.01f), 0.0f, 600, 950});
  const int n_ribs = 4 + static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < n_ribs; ++i) {
    const float t = rng.uniformf(0.3f, 2.8f);
    const float cx = 0.5f + (bodyRx - 0.045f) * std::cos(t);
    const float cy = 0.52f + (bodyRy - 0.045f) * std::sin(t);
    spec.tissue_components.push_back(
        {TissueComponent::Kind::ellipse, cx, cy, rng.uniformf(0.012f, 0.02f), rng.uniformf(0.02f, 0.035f),
         rng.uniformf(0.0f, 3.1f), 650, 900});
  }

  // Trachea: air pocket between the lungs.
  spec.tissue_components.push_back({TissueComponent::Kind::ellipse, jitter(0.5f, 0.01f), jitter(0.38f, 0.02f),
                                    jitter(0.025f, 0.005f), jitter(0.03f, 0.005f), 0.0f, -1000, -1000});
  return spec;
}

std::vector<RawSlice> make_phantom_corpus(int64_t n_patients, int64_t slices_per_patient, int64_t image_size,
                                          uint64_t seed) {
  std::vector<RawSlice> out;
  out.reserve(static_cast<size_t>(n_patients * slices_per_patient));
  for (int64_t p = 0; p < n_patients; ++p) {
    char name[32];
    std::snprintf(name, sizeof(name), "phantom_%03lld", static_cast<long long>(p));
    for (int64_t s = 0; s < slices_per_patient; ++s) {
      const uint64_t slice_seed = seed * 0x10001ull + static_cast<uint64_t>(p) * 0x3E5ull + static_cast<uint64_t>(s);
      out.push_back(RawSlice{name, s, generate_phantom(lung_phantom_spec(image_size, slice_seed))});
    }
  }
  return out;
}

}  // namespace ctgen::data
