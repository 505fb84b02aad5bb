#include "ctgen/core/array_io.hpp"

#include <cstring>
#include <fstream>

namespace ctgen {

namespace {

constexpr char kMagic[8] = {'N', 'D', 'A', 'C', '0', '0', '0', '1'};
constexpr const char* kMetaName = "__meta__";

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("ArrayFile: truncated file");
  return v;
}

std::vector<uint8_t> to_raw(const void* p, size_t nbytes) {
  std::vector<uint8_t> raw(nbytes);
  std::memcpy(raw.data(), p, nbytes);
  return raw;
}

}  // namespace

void ArrayFile::put_f32(const std::string& name, const Tensor& t) {
  entries_[name] = Entry{DType::f32, t.shape(), to_raw(t.data(), sizeof(float) * static_cast<size_t>(t.numel()))};
}

void ArrayFile::put_i16(const std::string& name, const Shape& shape, const std::vector<int16_t>& v) {
  if (shape_numel(shape) != static_cast<int64_t>(v.size()))
    throw std::invalid_argument("ArrayFile::put_i16: shape/data mismatch");
  entries_[name] = Entry{DType::i16, shape, to_raw(v.data(), sizeof(int16_t) * v.size())};
}

void ArrayFile::put_i64(const std::string& name, const Shape& shape, const std::vector<int64_t>& v) {
  if (shape_numel(shape) != static_cast<int64_t>(v.size()))
    throw std::invalid_argument("ArrayFile::put_i64: shape/data mismatch");
  entries_[name] = Entry{DType::i64, shape, to_raw(v.data(), sizeof(int64_t) * v.size())};
}

void ArrayFile::put_bytes(const std::string& name, const std::vector<uint8_t>& v) {
  entries_[name] = Entry{DType::bytes, Shape{static_cast<int64_t>(v.size())}, v};
}

void ArrayFile::put_meta_json(const std::string& json_text) {
  put_bytes(kMetaName, std::vector<uint8_t>(json_text.begin(), json_text.end()));
}

bool ArrayFile::has(const std::string& name) const { return entries_.count(name) > 0; }

std::vector<std::string> ArrayFile::names() const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

const ArrayFile::Entry& ArrayFile::find(const std::string& name, DType want) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("ArrayFile: missing entry '" + name + "'");
  if (it->second.dtype != want) throw std::runtime_error("ArrayFile: dtype mismatch for '" + name + "'");
  return it->second;
}

Tensor ArrayFile::get_f32(const std::string& name) const {
  const Entry& e = find(name, DType::f32);
  std::vector<float> v(e.raw.size() / sizeof(float));
  std::memcpy(v.data(), e.raw.data(), e.raw.size());
  return Tensor(e.shape, std::move(v));
}

std::vector<int16_t> ArrayFile::get_i16(const std::string& name, Shape* shape) const {
  const Entry& e = find(name, DType::i16);
  std::vector<int16_t> v(e.raw.size() / sizeof(int16_t));
  std::memcpy(v.data(), e.raw.data(), e.raw.size());
  if (shape) *shape = e.shape;
  return v;
}

std::vector<int64_t> ArrayFile::get_i64(const std::string& name, Shape* shape) const {
  const Entry& e = find(name, DType::i64);
  std::vector<int64_t> v(e.raw.size() / sizeof(int64_t));
  std::memcpy(v.data(), e.raw.data(), e.raw.size());
  if (shape) *shape = e.shape;
  return v;
}

std::vector<uint8_t> ArrayFile::get_bytes(const std::string& name) const {
  return find(name, DType::bytes).raw;
}

std::string ArrayFile::get_meta_json() const {
  const auto raw = get_bytes(kMetaName);
  return std::string(raw.begin(), raw.end());
}

void ArrayFile::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("ArrayFile: cannot open for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, static_cast<uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    write_pod<uint16_t>(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint8_t>(os, static_cast<uint8_t>(e.dtype));
    write_pod<uint8_t>(os, static_cast<uint8_t>(e.shape.size()));
    for (int64_t d : e.shape) write_pod<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(e.raw.data()), static_cast<std::streamsize>(e.raw.size()));
  }
  if (!os) throw std::runtime_error("ArrayFile: write failed: " + path.string());
}

ArrayFile ArrayFile::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("ArrayFile: cannot open: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("ArrayFile: bad magic in " + path.string());
  ArrayFile f;
  const auto count = read_pod<uint32_t>(is);
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    Entry e;
    e.dtype = static_cast<DType>(read_pod<uint8_t>(is));
    const auto rank = read_pod<uint8_t>(is);
    e.shape.resize(rank);
    for (uint8_t d = 0; d < rank; ++d) e.shape[d] = static_cast<int64_t>(read_pod<uint64_t>(is));
    size_t elem = 1;
    switch (e.dtype) {
      case DType::f32: elem = 4; break;
      case DType::i16: elem = 2; break;
      case DType::i64: elem = 8; break;
      case DType::bytes: elem = 1; break;
      default: throw std::runtime_error("ArrayFile: unknown dtype in " + path.string());
    }
    e.raw.resize(static_cast<size_t>(shape_numel(e.shape)) * elem);
    is.read(reinterpret_cast<char*>(e.raw.data()), static_cast<std::streamsize>(e.raw.size()));
    if (!is) throw std::runtime_error("ArrayFile: truncated entry '" + name + "' in " + path.string());
    f.entries_[name] = std::move(e);
  }
  return f;
}

}  // namespace ctgen
