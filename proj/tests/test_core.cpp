#include <doctest.h>

#include <filesystem>

#include "ctgen/core/array_io.hpp"
#include "ctgen/core/csv.hpp"
#include "ctgen/core/image_io.hpp"
#include "ctgen/core/rng.hpp"
#include "ctgen/core/tensor.hpp"

using namespace ctgen;

namespace {
std::filesystem::path tmp_dir() {
  auto p = std::filesystem::temp_directory_path() / "ctgen_test_core";
  std::filesystem::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at2(1, 2) == 6.0f);
  CHECK_THROWS(t.reshaped({4, 2}));
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
}

TEST_CASE("rng determinism and normal moments") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(7);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("rng fork gives distinct streams") {
  Rng r(3);
  Rng f1 = r.fork(1), f2 = r.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());
}

TEST_CASE("array file round trip") {
  const auto path = tmp_dir() / "roundtrip.nda";
  ArrayFile f;
  Tensor t({2, 2}, std::vector<float>{0.5f, -1.0f, 3.25f, 0.0f});
  f.put_f32("full", t);
  f.put_i16("hu", {4}, {-1000, 0, 55, 700});
  f.put_i64("tokens", {2}, {3, 511});
  f.put_meta_json("{\"seed\":9}");
  f.save(path);

  const ArrayFile g = ArrayFile::load(path);
  CHECK(g.has("full"));
  const Tensor u = g.get_f32("full");
  REQUIRE(u.shape() == Shape{2, 2});
  for (int i = 0; i < 4; ++i) CHECK(u[i] == t[i]);
  CHECK(g.get_i16("hu")[3] == 700);
  CHECK(g.get_i64("tokens")[1] == 511);
  CHECK(g.get_meta_json() == "{\"seed\":9}");
  CHECK_THROWS(g.get_f32("missing"));
  CHECK_THROWS(g.get_i16("full"));
}

TEST_CASE("png writer emits a decodable header") {
  const auto path = tmp_dir() / "img.png";
  Tensor img({8, 8});
  for (int i = 0; i < 64; ++i) img[i] = static_cast<float>(i) / 63.0f;
  write_png_gray(path, img);
  CHECK(std::filesystem::file_size(path) > 8);

  write_png_grid(tmp_dir() / "grid.png", {img, img, img}, 2);
  CHECK(std::filesystem::exists(tmp_dir() / "grid.png"));
}

TEST_CASE("csv float formatting is stable") {
  CHECK(fmt_float(0.125) == "0.125");
  CHECK(fmt_float(1e-9) == "1e-09");
}
