#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ctgen::data {

/// Minimal single-frame CT DICOM slice reader. Supports uncompressed
/// little-endian transfer syntaxes (implicit 1.2.840.10008.1.2 and explicit
/// 1.2.840.10008.1.2.1) and the handful of tags the ingestion pipeline
/// needs. Rescale slope/intercept are mandatory: the contract is that pixel
/// data is converted to HU here, before any retention or clipping.
struct DicomSlice {
  std::string patient_id;
  int instance_number = 0;
  int64_t rows = 0;
  int64_t cols = 0;
  double slope = 0.0;
  double intercept = 0.0;
  bool has_rescale = false;
  bool pixels_signed = false;
  std::vector<uint16_t> raw_pixels;  // reinterpreted per pixels_signed

  /// slope * stored + intercept, rounded and clamped to int16.
  std::vector<int16_t> to_hu() const;
};

DicomSlice read_dicom_slice(const std::filesystem::path& path);

}  // namespace ctgen::data
