#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ctgen/data/phantom.hpp"
#include "ctgen/hu/windowing.hpp"

namespace ctgen::data {

enum class Split { train, test };

struct ManifestEntry {
  std::string patient_id;
  int64_t slice_index = 0;
  std::string path;  // relative to the dataset root
};

/// Patient-level split plus the per-slice file index. No patient ever
/// appears in both splits.
struct DatasetManifest {
  hu::HuIntervalSet interval_set;
  std::vector<ManifestEntry> entries;
  std::map<std::string, Split> split;
  uint64_t seed = 0;
  double split_fraction = 0.0;

  std::vector<ManifestEntry> entries_for(Split s) const;
};

/// Persists each slice as a named-array container (full-range channel,
/// win_0..win_{K-1}, plus the raw int16 HU) under
/// `<root>/<patient>/<slice_index>.nda`, with a JSON manifest at
/// `<root>/manifest.json`. The split is by patient at split_fraction; at
/// least two patients are required when a split is requested.
DatasetManifest build_dataset(const std::vector<RawSlice>& slices, const hu::HuIntervalSet& set, double split_fraction,
                              uint64_t seed, const std::filesystem::path& root);

DatasetManifest load_manifest(const std::filesystem::path& root);

/// One dataset slice materialized in memory.
struct LoadedSlice {
  std::string patient_id;
  int64_t slice_index = 0;
  hu::WindowedStack stack;  // includes full-range companion
  HuImage raw;
};

LoadedSlice load_slice(const std::filesystem::path& root, const ManifestEntry& entry, const hu::HuIntervalSet& set);
std::vector<LoadedSlice> load_split(const std::filesystem::path& root, const DatasetManifest& manifest, Split s);

/// Windows a raw corpus in memory and performs the same patient split
/// without touching the filesystem (used by tests and desk-scale runs).
struct MemoryDataset {
  std::vector<LoadedSlice> train;
  std::vector<LoadedSlice> test;
};
MemoryDataset window_corpus(const std::vector<RawSlice>& slices, const hu::HuIntervalSet& set, double split_fraction,
                            uint64_t seed);

/// Reads a volume (DICOM series directory, single DICOM file, or a
/// named-array volume container with an int16 "hu" [S,H,W] entry), applies
/// rescale to HU, drops slices outside [retention_lo, retention_hi]
/// (inclusive, 0-based within the volume), and clips to `clip`.
std::vector<RawSlice> ingest_volume(const std::filesystem::path& path, int64_t retention_lo, int64_t retention_hi,
                                    const hu::HuInterval& clip);

}  // namespace ctgen::data
