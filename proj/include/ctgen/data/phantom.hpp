#pragma once

#include <cstdint>
#include <vector>

#include "ctgen/core/tensor.hpp"

namespace ctgen::data {

/// One procedural tissue region. Geometry is expressed as fractions of the
/// image side so the same spec scales across resolutions.
struct TissueComponent {
  enum class Kind { ellipse, box };
  Kind kind = Kind::ellipse;
  float cx = 0.5f, cy = 0.5f;  // center
  float rx = 0.25f, ry = 0.25f;  // half-extents
  float angle = 0.0f;           // rotation, radians
  int hu_lo = 0, hu_hi = 1;     // per-pixel HU drawn uniformly from [lo, hi]
};

struct PhantomSpec {
  int64_t image_size = 64;  // >= 16, power of two (generative nets halve it repeatedly)
  std::vector<TissueComponent> tissue_components;
  float noise_sigma = 0.0f;  // additive HU noise
  uint64_t seed = 0;
};

/// Deterministic CT-like slice: air background, components painted in order.
/// Components must fit the canvas; HU ranges must stay within [-1000, 1000].
HuImage generate_phantom(const PhantomSpec& spec);

/// Randomized lung-slice morphology: elliptical body with fat rim, two lung
/// fields with denser parenchyma patches and vessels, rib/vertebra bone.
/// Tissue HU anchors follow the usual tissue table (lung parenchyma around
/// -850..-720, soft/ground-glass -450..-250, fat -115..-95, blood/muscle
/// 30..55, bone 600..950). Deterministic per (image_size, seed).
PhantomSpec lung_phantom_spec(int64_t image_size, uint64_t seed);

/// One raw slice as stored/ingested: integer HU plus identity.
struct RawSlice {
  std::string patient_id;
  int64_t slice_index = 0;
  HuImage hu;
};

/// n_patients x slices_per_patient randomized lung phantoms; patient ids are
/// "phantom_000".. and slice indices run 0..slices_per_patient-1.
std::vector<RawSlice> make_phantom_corpus(int64_t n_patients, int64_t slices_per_patient, int64_t image_size,
                                          uint64_t seed);

}  // namespace ctgen::data
