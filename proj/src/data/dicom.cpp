#include "ctgen/data/dicom.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ctgen::data {

namespace {

struct Cursor {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  bool eof() const { return pos >= buf.size(); }
  void need(size_t n, const char* what) const {
    if (pos + n > buf.size()) throw std::runtime_error(std::string("DICOM: truncated while reading ") + what);
  }
  uint16_t u16() {
    need(2, "u16");
    uint16_t v;
    std::memcpy(&v, buf.data() + pos, 2);
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4, "u32");
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::string bytes(size_t n) {
    need(n, "value");
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

bool is_long_vr(const std::string& vr) {
  return vr == "OB" || vr == "OW" || vr == "OF" || vr == "SQ" || vr == "UT" || vr == "UN";
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  size_t b = 0;
  while (b < s.size() && s[b] == ' ') ++b;
  return s.substr(b);
}

}  // namespace

std::vector<int16_t> DicomSlice::to_hu() const {
  std::vector<int16_t> hu(raw_pixels.size());
  for (size_t i = 0; i < raw_pixels.size(); ++i) {
    const double stored =
        pixels_signed ? static_cast<double>(static_cast<int16_t>(raw_pixels[i])) : static_cast<double>(raw_pixels[i]);
    const long v = std::lround(slope * stored + intercept);
    hu[i] = static_cast<int16_t>(std::clamp(v, long(-32768), long(32767)));
  }
  return hu;
}

DicomSlice read_dicom_slice(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("DICOM: cannot open " + path.string());
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  Cursor c{buf};
  c.need(132, "preamble");
  c.pos = 128;
  if (c.bytes(4) != "DICM") throw std::runtime_error("DICOM: missing DICM marker in " + path.string());

  DicomSlice out;
  std::string transfer_syntax = "1.2.840.10008.1.2.1";  // explicit LE default
  bool in_meta = true;
  bool explicit_vr = true;
  int bits_allocated = 16;

  while (!c.eof()) {
    const uint16_t group = c.u16();
    const uint16_t elem = c.u16();
    if (in_meta && group != 0x0002) {
      // Meta group ended; switch to the negotiated transfer syntax.
      in_meta = false;
      if (transfer_syntax == "1.2.840.10008.1.2")
        explicit_vr = false;
      else if (transfer_syntax != "1.2.840.10008.1.2.1")
        throw std::runtime_error("DICOM: unsupported transfer syntax " + transfer_syntax + " in " + path.string());
    }
    const bool exp = in_meta || explicit_vr;

    std::string vr;
    uint32_t len = 0;
    if (exp) {
      vr = c.bytes(2);
      if (is_long_vr(vr)) {
        c.u16();  // reserved
        len = c.u32();
      } else {
        len = c.u16();
      }
    } else {
      len = c.u32();
    }
    if (len == 0xFFFFFFFFu)
      throw std::runtime_error("DICOM: undefined-length elements are not supported (" + path.string() + ")");

    const uint32_t tag = (static_cast<uint32_t>(group) << 16) | elem;
    switch (tag) {
      case 0x00020010: transfer_syntax = trim(c.bytes(len)); break;
      case 0x00100020: out.patient_id = trim(c.bytes(len)); break;
      case 0x00200013: out.instance_number = std::stoi(trim(c.bytes(len))); break;
      case 0x00280010: out.rows = c.u16(); if (len != 2) c.bytes(len - 2); break;
      case 0x00280011: out.cols = c.u16(); if (len != 2) c.bytes(len - 2); break;
      case 0x00280100: bits_allocated = c.u16(); if (len != 2) c.bytes(len - 2); break;
      case 0x00280103: out.pixels_signed = c.u16() == 1; if (len != 2) c.bytes(len - 2); break;
      case 0x00281052: out.intercept = std::stod(trim(c.bytes(len))); out.has_rescale = true; break;
      case 0x00281053: out.slope = std::stod(trim(c.bytes(len))); break;
      case 0x7FE00010: {
        if (bits_allocated != 16) throw std::runtime_error("DICOM: only 16-bit pixel data supported");
        c.need(len, "pixel data");
        out.raw_pixels.resize(len / 2);
        std::memcpy(out.raw_pixels.data(), buf.data() + c.pos, len);
        c.pos += len;
        break;
      }
      default: c.bytes(len); break;
    }
  }

  if (out.rows <= 0 || out.cols <= 0 || out.raw_pixels.empty())
    throw std::runtime_error("DICOM: missing image geometry or pixel data in " + path.string());
  if (static_cast<int64_t>(out.raw_pixels.size()) != out.rows * out.cols)
    throw std::runtime_error("DICOM: pixel count does not match Rows*Columns in " + path.string());
  if (!out.has_rescale)
    throw std::runtime_error("DICOM: missing rescale slope/intercept metadata in " + path.string());
  if (out.slope == 0.0) out.slope = 1.0;
  return out;
}

}  // namespace ctgen::data
