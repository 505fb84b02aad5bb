#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ctgen/core/tensor.hpp"

namespace ctgen {

/// Named-array container: a flat little-endian file holding named tensors
/// (float32 / int16 / int64 / raw bytes). Used for persisted slices, model
/// checkpoints and sampled arrays. Layout:
///
///   magic "NDAC0001"
///   u32 entry count
///   per entry: u16 name length, name bytes, u8 dtype, u8 rank,
///              u64 dims[rank], raw data
///
/// A reserved "__meta__" bytes entry carries a JSON document with
/// free-form metadata (specs, configs, seeds).
class ArrayFile {
 public:
  static constexpr const char* kExtension = ".nda";

  void put_f32(const std::string& name, const Tensor& t);
  void put_i16(const std::string& name, const Shape& shape, const std::vector<int16_t>& v);
  void put_i64(const std::string& name, const Shape& shape, const std::vector<int64_t>& v);
  void put_bytes(const std::string& name, const std::vector<uint8_t>& v);
  void put_meta_json(const std::string& json_text);

  bool has(const std::string& name) const;
  std::vector<std::string> names() const;

  Tensor get_f32(const std::string& name) const;
  std::vector<int16_t> get_i16(const std::string& name, Shape* shape = nullptr) const;
  std::vector<int64_t> get_i64(const std::string& name, Shape* shape = nullptr) const;
  std::vector<uint8_t> get_bytes(const std::string& name) const;
  std::string get_meta_json() const;

  void save(const std::filesystem::path& path) const;
  static ArrayFile load(const std::filesystem::path& path);

 private:
  enum class DType : uint8_t { f32 = 0, i16 = 1, i64 = 2, bytes = 3 };
  struct Entry {
    DType dtype;
    Shape shape;
    std::vector<uint8_t> raw;
  };
  std::map<std::string, Entry> entries_;

  const Entry& find(const std::string& name, DType want) const;
};

}  // namespace ctgen
