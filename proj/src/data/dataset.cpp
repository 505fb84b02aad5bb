#include "ctgen/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "ctgen/core/array_io.hpp"
#include "ctgen/core/rng.hpp"
#include "ctgen/data/dicom.hpp"

namespace ctgen::data {

namespace {

using nlohmann::json;

json interval_set_to_json(const hu::HuIntervalSet& set) {
  json j;
  j["full_range"] = {set.full_range.hu_min, set.full_range.hu_max};
  j["intervals"] = json::array();
  for (const hu::HuInterval& iv : set.intervals) j["intervals"].push_back({iv.hu_min, iv.hu_max});
  return j;
}

hu::HuIntervalSet interval_set_from_json(const json& j) {
  std::vector<hu::HuInterval> ivs;
  for (const auto& e : j.at("intervals")) ivs.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  const auto& fr = j.at("full_range");
  return hu::HuIntervalSet(std::move(ivs), hu::HuInterval(fr.at(0).get<int>(), fr.at(1).get<int>()));
}

std::string slice_rel_path(const std::string& patient, int64_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%04lld%s", static_cast<long long>(index), ArrayFile::kExtension);
  return patient + "/" + name;
}

std::map<std::string, Split> split_patients(const std::vector<RawSlice>& slices, double fraction, uint64_t seed) {
  std::set<std::string> unique;
  for (const RawSlice& s : slices) unique.insert(s.patient_id);
  std::vector<std::string> patients(unique.begin(), unique.end());
  if (patients.size() < 2) throw std::invalid_argument("build_dataset: patient-level split needs >= 2 patients");

  // Deterministic Fisher-Yates on the sorted patient list.
  Rng rng(seed ^ 0x5B711Dull);
  for (size_t i = patients.size(); i > 1; --i) std::swap(patients[i - 1], patients[rng.uniform_int(static_cast<int64_t>(i))]);

  const auto n_train = static_cast<size_t>(std::llround(fraction * static_cast<double>(patients.size())));
  const size_t clamped = std::clamp<size_t>(n_train, 1, patients.size() - 1);
  std::map<std::string, Split> split;
  for (size_t i = 0; i < patients.size(); ++i) split[patients[i]] = i < clamped ? Split::train : Split::test;
  return split;
}

}  // namespace

std::vector<ManifestEntry> DatasetManifest::entries_for(Split s) const {
  std::vector<ManifestEntry> out;
  for (const ManifestEntry& e : entries)
    if (split.at(e.patient_id) == s) out.push_back(e);
  return out;
}

DatasetManifest build_dataset(const std::vector<RawSlice>& slices, const hu::HuIntervalSet& set, double split_fraction,
                              uint64_t seed, const std::filesystem::path& root) {
  if (slices.empty()) throw std::invalid_argument("build_dataset: no slices");
  DatasetManifest manifest{set, {}, split_patients(slices, split_fraction, seed), seed, split_fraction};

  std::filesystem::create_directories(root);
  for (const RawSlice& s : slices) {
    const hu::WindowedStack stack = hu::window_stack(s.hu, set);
    ArrayFile f;
    f.put_f32("full", stack.full_range_slice->pixels);
    const int64_t n = stack.height() * stack.width();
    for (int64_t c = 0; c < stack.k(); ++c) {
      Tensor ch({stack.height(), stack.width()});
      std::copy(stack.channels.data() + c * n, stack.channels.data() + (c + 1) * n, ch.data());
      f.put_f32("win_" + std::to_string(c), ch);
    }
    f.put_i16("hu", {s.hu.height, s.hu.width}, s.hu.hu);
    json meta{{"patient_id", s.patient_id}, {"slice_index", s.slice_index}};
    f.put_meta_json(meta.dump());
    const std::string rel = slice_rel_path(s.patient_id, s.slice_index);
    f.save(root / rel);
    manifest.entries.push_back(ManifestEntry{s.patient_id, s.slice_index, rel});
  }

  json j;
  j["interval_set"] = interval_set_to_json(set);
  j["seed"] = seed;
  j["split_fraction"] = split_fraction;
  j["entries"] = json::array();
  for (const ManifestEntry& e : manifest.entries)
    j["entries"].push_back({{"patient_id", e.patient_id}, {"slice_index", e.slice_index}, {"path", e.path}});
  j["split"] = json::object();
  for (const auto& [patient, s] : manifest.split) j["split"][patient] = (s == Split::train ? "train" : "test");
  std::ofstream os(root / "manifest.json");
  os << j.dump(2) << "\n";
  if (!os) throw std::runtime_error("build_dataset: failed writing manifest under " + root.string());
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
  std::ifstream is(root / "manifest.json");
  if (!is) throw std::runtime_error("load_manifest: missing manifest.json under " + root.string());
  json j = json::parse(is);
  DatasetManifest m{interval_set_from_json(j.at("interval_set")), {}, {}, j.at("seed").get<uint64_t>(),
                    j.at("split_fraction").get<double>()};
  for (const auto& e : j.at("entries"))
    m.entries.push_back(
        ManifestEntry{e.at("patient_id").get<std::string>(), e.at("slice_index").get<int64_t>(), e.at("path").get<std::string>()});
  for (const auto& [patient, s] : j.at("split").items())
    m.split[patient] = s.get<std::string>() == "train" ? Split::train : Split::test;
  return m;
}

LoadedSlice load_slice(const std::filesystem::path& root, const ManifestEntry& entry, const hu::HuIntervalSet& set) {
  const ArrayFile f = ArrayFile::load(root / entry.path);
  const Tensor full = f.get_f32("full");
  const int64_t k = set.k(), h = full.dim(0), w = full.dim(1);
  Tensor channels({k, h, w});
  for (int64_t c = 0; c < k; ++c) {
    const Tensor ch = f.get_f32("win_" + std::to_string(c));
    std::copy(ch.data(), ch.data() + h * w, channels.data() + c * h * w);
  }
  Shape hu_shape;
  std::vector<int16_t> hu = f.get_i16("hu", &hu_shape);
  HuImage raw(hu_shape.at(0), hu_shape.at(1));
  raw.hu = std::move(hu);
  hu::WindowedStack stack{std::move(channels), set, hu::CtSlice{full, hu::Provenance::phantom}};
  return LoadedSlice{entry.patient_id, entry.slice_index, std::move(stack), std::move(raw)};
}

std::vector<LoadedSlice> load_split(const std::filesystem::path& root, const DatasetManifest& manifest, Split s) {
  std::vector<LoadedSlice> out;
  for (const ManifestEntry& e : manifest.entries_for(s)) out.push_back(load_slice(root, e, manifest.interval_set));
  return out;
}

MemoryDataset window_corpus(const std::vector<RawSlice>& slices, const hu::HuIntervalSet& set, double split_fraction,
                            uint64_t seed) {
  const auto split = split_patients(slices, split_fraction, seed);
  MemoryDataset ds;
  for (const RawSlice& s : slices) {
    LoadedSlice ls{s.patient_id, s.slice_index, hu::window_stack(s.hu, set), s.hu};
    (split.at(s.patient_id) == Split::train ? ds.train : ds.test).push_back(std::move(ls));
  }
  return ds;
}

std::vector<RawSlice> ingest_volume(const std::filesystem::path& path, int64_t retention_lo, int64_t retention_hi,
                                    const hu::HuInterval& clip) {
  if (retention_lo > retention_hi) throw std::invalid_argument("ingest_volume: empty retention window");

  struct IndexedSlice {
    int order_key;
    RawSlice slice;
  };
  std::vector<IndexedSlice> all;

  auto clip_image = [&clip](HuImage& img) {
    for (int16_t& h : img.hu)
      h = static_cast<int16_t>(std::clamp<int>(h, clip.hu_min, clip.hu_max));
  };

  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".dcm") files.push_back(e.path());
    if (files.empty()) throw std::runtime_error("ingest_volume: no .dcm files in " + path.string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      DicomSlice d = read_dicom_slice(f);
      HuImage img(d.rows, d.cols);
      img.hu = d.to_hu();
      all.push_back(IndexedSlice{d.instance_number, RawSlice{d.patient_id.empty() ? "unknown" : d.patient_id, 0, std::move(img)}});
    }
  } else if (path.extension() == ".dcm") {
    DicomSlice d = read_dicom_slice(path);
    HuImage img(d.rows, d.cols);
    img.hu = d.to_hu();
    all.push_back(IndexedSlice{d.instance_number, RawSlice{d.patient_id.empty() ? "unknown" : d.patient_id, 0, std::move(img)}});
  } else if (path.extension() == ArrayFile::kExtension) {
    const ArrayFile f = ArrayFile::load(path);
    Shape shape;
    const std::vector<int16_t> hu = f.get_i16("hu", &shape);
    if (shape.size() != 3) throw std::runtime_error("ingest_volume: 'hu' entry must be [S,H,W] in " + path.string());
    const auto meta = nlohmann::json::parse(f.get_meta_json());
    const std::string patient = meta.at("patient_id").get<std::string>();
    const double slope = meta.value("slope", 1.0);
    const double intercept = meta.value("intercept", 0.0);
    const int64_t s = shape[0], h = shape[1], w = shape[2];
    for (int64_t i = 0; i < s; ++i) {
      HuImage img(h, w);
      for (int64_t p = 0; p < h * w; ++p) {
        const long v = std::lround(slope * static_cast<double>(hu[static_cast<size_t>(i * h * w + p)]) + intercept);
        img.hu[static_cast<size_t>(p)] = static_cast<int16_t>(std::clamp(v, long(-32768), long(32767)));
      }
      all.push_back(IndexedSlice{static_cast<int>(i), RawSlice{patient, 0, std::move(img)}});
    }
  } else {
    throw std::runtime_error("ingest_volume: unsupported input " + path.string() +
                             " (expected a DICOM series directory, a .dcm file, or a " +
                             std::string(ArrayFile::kExtension) + " volume)");
  }

  std::stable_sort(all.begin(), all.end(),
                   [](const IndexedSlice& a, const IndexedSlice& b) { return a.order_key < b.order_key; });
  std::vector<RawSlice> kept;
  for (size_t i = 0; i < all.size(); ++i) {
    const auto idx = static_cast<int64_t>(i);
    if (idx < retention_lo || idx > retention_hi) continue;
    RawSlice s = std::move(all[i].slice);
    s.slice_index = idx;
    clip_image(s.hu);
    kept.push_back(std::move(s));
  }
  return kept;
}

}  // namespace ctgen::data
