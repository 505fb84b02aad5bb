#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include <nlohmann/json.hpp>

#include "ctgen/data/dataset.hpp"
#include "ctgen/data/phantom.hpp"
#include "ctgen/recon/recon.hpp"

using namespace ctgen;
using namespace ctgen::recon;

namespace {

Tensor random_stack(int64_t b, int64_t k, int64_t n, uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  Rng rng(seed);
  Tensor t({b, k, n, n});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniformf(lo, hi);
  return t;
}

std::vector<data::LoadedSlice> phantom_slices(int64_t n_patients, int64_t per_patient, int64_t size, uint64_t seed) {
  const auto corpus = data::make_phantom_corpus(n_patients, per_patient, size, seed);
  std::vector<data::LoadedSlice> out;
  const auto set = hu::paper_interval_set();
  for (const auto& s : corpus)
    out.push_back(data::LoadedSlice{s.patient_id, s.slice_index, hu::window_stack(s.hu, set), s.hu});
  return out;
}

}  // namespace

TEST_CASE("parameter counts match the model table exactly") {
  const std::map<std::string, int64_t> want{{"MLP_0", 5},     {"MLP_4", 25},  {"MLP_4x4", 45},
                                            {"MLP_4x4x4", 65}, {"CNN_3", 37},  {"CNN_7", 197},
                                            {"CNN_11", 485},   {"CNN_3x3", 185}, {"CNN_3x3x3", 333}};
  for (const auto& [name, count] : want) {
    ReconModel model = build_recon(name, 4);
    CHECK_MESSAGE(model.parameter_count() == count, name);
  }
  CHECK_THROWS(build_recon("CNN_5", 4));
}

TEST_CASE("forward output stays in [0,1] for arbitrary inputs") {
  for (const std::string& name : recon_model_names()) {
    ReconModel model = build_recon(name, 4, 99);
    ad::NoGradGuard guard;
    const Tensor wild = random_stack(2, 4, 16, 7, -50.0f, 50.0f);
    const Tensor out = model.forward(ad::constant(wild))->value;
    REQUIRE(out.shape() == Shape{2, 1, 16, 16});
    for (int64_t i = 0; i < out.numel(); ++i) {
      CHECK(out[i] >= 0.0f);
      CHECK(out[i] <= 1.0f);
    }
  }
}

TEST_CASE("zeroed MLP_0 outputs the sigmoid midpoint") {
  ReconModel model = build_recon("MLP_0", 4);
  for (auto& [name, v] : model.params().entries())
    std::fill(v->value.vec().begin(), v->value.vec().end(), 0.0f);
  ad::NoGradGuard guard;
  const Tensor out = model.forward(ad::constant(random_stack(1, 4, 8, 3)))->value;
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.5f);
}

TEST_CASE("all-zero stack gives spatially constant output") {
  for (const std::string& name : {std::string("MLP_4x4"), std::string("CNN_3x3x3")}) {
    ReconModel model = build_recon(name, 4, 5);
    ad::NoGradGuard guard;
    const Tensor out = model.forward(ad::constant(Tensor({1, 4, 12, 12})))->value;
    // Interior pixels (away from zero-padding) share one value.
    const float center = out[6 * 12 + 6];
    for (int64_t r = 3; r < 9; ++r)
      for (int64_t c = 3; c < 9; ++c) CHECK(out[r * 12 + c] == doctest::Approx(center).epsilon(1e-6));
  }
}

TEST_CASE("MLP prediction is voxel-local") {
  ReconModel model = build_recon("MLP_4x4x4", 4, 11);
  ad::NoGradGuard guard;
  Tensor stack = random_stack(1, 4, 8, 13);
  const Tensor base = model.forward(ad::constant(stack))->value;
  // Perturb every pixel except (2,2); output at (2,2) must not move.
  Tensor perturbed = stack;
  for (int64_t k = 0; k < 4; ++k)
    for (int64_t i = 0; i < 64; ++i)
      if (i != 2 * 8 + 2) perturbed[k * 64 + i] += 0.37f;
  const Tensor moved = model.forward(ad::constant(perturbed))->value;
  CHECK(moved[2 * 8 + 2] == base[2 * 8 + 2]);
  CHECK(moved[3 * 8 + 3] != base[3 * 8 + 3]);
}

TEST_CASE("CNN receptive field bounds") {
  ad::NoGradGuard guard;
  Tensor stack = random_stack(1, 4, 16, 17);
  const int64_t v = 8 * 16 + 8;

  SUBCASE("single 3x3 conv sees one pixel of context") {
    ReconModel model = build_recon("CNN_3", 4, 2);
    const Tensor base = model.forward(ad::constant(stack))->value;
    Tensor p = stack;
    p[0 * 256 + 8 * 16 + 10] += 1.0f;  // two pixels away
    CHECK(model.forward(ad::constant(p))->value[v] == base[v]);
    Tensor q = stack;
    q[0 * 256 + 8 * 16 + 9] += 1.0f;  // adjacent
    CHECK(model.forward(ad::constant(q))->value[v] != base[v]);
  }

  SUBCASE("three 3x3 convs see three pixels of context") {
    ReconModel model = build_recon("CNN_3x3x3", 4, 2);
    const Tensor base = model.forward(ad::constant(stack))->value;
    Tensor p = stack;
    p[0 * 256 + 8 * 16 + 12] += 1.0f;  // four pixels away
    CHECK(model.forward(ad::constant(p))->value[v] == base[v]);
    Tensor q = stack;
    q[0 * 256 + 8 * 16 + 11] += 1.0f;  // three pixels away
    CHECK(model.forward(ad::constant(q))->value[v] != base[v]);
  }
}

// Double-precision mirror of CNN_3x3 (two 3x3 convs) used as the
// finite-difference oracle; float32 losses are too coarse for 1e-4 checks.
namespace oracle {

using Grid = std::vector<double>;  // flattened

Grid conv3(const Grid& in, int64_t c_in, int64_t c_out, int64_t n, const std::vector<double>& w,
           const std::vector<double>& b, bool relu_act) {
  Grid out(static_cast<size_t>(c_out * n * n), 0.0);
  for (int64_t o = 0; o < c_out; ++o)
    for (int64_t r = 0; r < n; ++r)
      for (int64_t c = 0; c < n; ++c) {
        double acc = b[static_cast<size_t>(o)];
        for (int64_t ci = 0; ci < c_in; ++ci)
          for (int64_t u = -1; u <= 1; ++u)
            for (int64_t v2 = -1; v2 <= 1; ++v2) {
              const int64_t rr = r + u, cc = c + v2;
              if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
              acc += in[static_cast<size_t>(ci * n * n + rr * n + cc)] *
                     w[static_cast<size_t>(((o * c_in + ci) * 3 + (u + 1)) * 3 + (v2 + 1))];
            }
        out[static_cast<size_t>(o * n * n + r * n + c)] = relu_act ? std::max(acc, 0.0) : acc;
      }
  return out;
}

double loss(const Grid& stack, const Grid& target, int64_t k, int64_t n, const std::vector<double>& w1,
            const std::vector<double>& b1, const std::vector<double>& w2, const std::vector<double>& b2) {
  const Grid h = conv3(stack, k, k, n, w1, b1, true);
  const Grid z = conv3(h, k, 1, n, w2, b2, false);
  double acc = 0.0;
  for (int64_t i = 0; i < n * n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-z[static_cast<size_t>(i)]));
    const double d = s - target[static_cast<size_t>(i)];
    acc += d * d;
  }
  return acc / static_cast<double>(n * n);
}

}  // namespace oracle

TEST_CASE("analytic gradients match central finite differences within 1e-4") {
  const int64_t k = 4, n = 4;
  ReconModel model = build_recon("CNN_3x3", k, 31);
  Rng rng(77);
  Tensor stack({1, k, n, n});
  Tensor target({1, 1, n, n});
  for (int64_t i = 0; i < stack.numel(); ++i) stack[i] = rng.uniformf(0.0f, 1.0f);
  for (int64_t i = 0; i < target.numel(); ++i) target[i] = rng.uniformf(0.0f, 1.0f);

  ad::Var pred = model.forward(ad::constant(stack));
  ad::Var loss = ad::mean_all(ad::square(ad::sub(pred, ad::constant(target))));
  const std::vector<Tensor> analytic = ad::grad_values(loss, model.params().vars());

  // Copy weights and data into the double-precision oracle.
  auto to_double = [](const Tensor& t) { return std::vector<double>(t.data(), t.data() + t.numel()); };
  const auto& entries = model.params().entries();
  std::vector<std::vector<double>> weights;
  for (const auto& [name, v] : entries) weights.push_back(to_double(v->value));
  const oracle::Grid gs = to_double(stack);
  const oracle::Grid gt = to_double(target);

  const double eps = 1e-6;
  for (size_t p = 0; p < weights.size(); ++p) {
    for (size_t j = 0; j < weights[p].size(); ++j) {
      const double keep = weights[p][j];
      weights[p][j] = keep + eps;
      const double up = oracle::loss(gs, gt, k, n, weights[0], weights[1], weights[2], weights[3]);
      weights[p][j] = keep - eps;
      const double down = oracle::loss(gs, gt, k, n, weights[0], weights[1], weights[2], weights[3]);
      weights[p][j] = keep;
      const double fd = (up - down) / (2 * eps);
      const double an = analytic[p][static_cast<int64_t>(j)];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      CHECK(std::abs(fd - an) / denom < 1e-4);
    }
  }
}

TEST_CASE("single-sample overfit drives train MSE below 1e-5") {
  // Clean piecewise-constant sample: the channel-to-target mapping is exactly
  // deterministic, so the probe measures the trainer rather than gap-texture
  // noise.
  data::PhantomSpec spec;
  spec.image_size = 32;
  spec.tissue_components = {
      {data::TissueComponent::Kind::ellipse, 0.5f, 0.5f, 0.3f, 0.25f, 0.0f, -800, -800}};
  const HuImage img = data::generate_phantom(spec);
  std::vector<data::LoadedSlice> slices;
  slices.push_back(data::LoadedSlice{"p", 0, hu::window_stack(img, hu::paper_interval_set()), img});

  ReconModel model = build_recon("MLP_4x4x4", 4, 7);
  ReconTrainConfig cfg;
  cfg.lr = 2e-2;  // desk-scale rate for the 2000-step overfit probe
  cfg.final_lr = 5e-5;
  cfg.epochs = 2000;
  cfg.batch = 1;
  const ReconTrainResult r = train_recon(model, slices, {}, cfg);
  CHECK(r.epoch_train_mse.back() <= 1e-5);
}

TEST_CASE("MLP_0 recovers an exactly representable affine map") {
  // Targets are generated through the model's own sigmoid head, so the
  // underlying affine combination of channels is exactly representable.
  auto slices = phantom_slices(4, 2, 32, 9);
  const float a[4] = {0.9f, -0.4f, 0.3f, 0.2f};
  const float bias = -0.1f;
  for (auto& s : slices) {
    const int64_t n = s.stack.height() * s.stack.width();
    for (int64_t i = 0; i < n; ++i) {
      float z = bias;
      for (int64_t kk = 0; kk < 4; ++kk) z += a[kk] * s.stack.channels[kk * n + i];
      s.stack.full_range_slice->pixels[i] = 1.0f / (1.0f + std::exp(-z));
    }
  }
  std::vector<data::LoadedSlice> train(slices.begin(), slices.begin() + 6);
  std::vector<data::LoadedSlice> test(slices.begin() + 6, slices.end());
  ReconModel model = build_recon("MLP_0", 4, 1);
  ReconTrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.final_lr = 1e-7;
  cfg.epochs = 6000;  // collinear channels make this a slow ravine
  cfg.batch = 6;
  const ReconTrainResult r = train_recon(model, train, test, cfg);
  CHECK(r.final_test_mse <= 1e-6);
}

TEST_CASE("epoch losses are non-increasing over 5-epoch windows") {
  auto slices = phantom_slices(6, 2, 32, 15);
  ReconModel model = build_recon("CNN_3x3", 4, 3);
  ReconTrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.epochs = 20;
  cfg.batch = 4;
  const ReconTrainResult r = train_recon(model, slices, {}, cfg);
  std::vector<double> windows;
  for (size_t i = 0; i + 5 <= r.epoch_train_mse.size(); i += 5) {
    double acc = 0.0;
    for (size_t j = i; j < i + 5; ++j) acc += r.epoch_train_mse[j];
    windows.push_back(acc / 5.0);
  }
  for (size_t i = 1; i < windows.size(); ++i) CHECK(windows[i] <= windows[i - 1] + 1e-9);
}

TEST_CASE("checkpoint round trip preserves behavior and config echo") {
  const auto path = std::filesystem::temp_directory_path() / "ctgen_recon_ckpt.nda";
  ReconModel model = build_recon("CNN_3x3x3", 4, 21);
  nlohmann::json cfg{{"train", {{"lr", 5e-5}, {"beta1", 0.9}, {"beta2", 0.999}, {"epochs", 50}, {"batch", 16}}}};
  model.save(path, cfg.dump());

  ReconModel loaded = ReconModel::load(path);
  CHECK(loaded.parameter_count() == 333);
  CHECK(loaded.params().content_hash() == model.params().content_hash());

  const auto meta = nlohmann::json::parse(ArrayFile::load(path).get_meta_json());
  CHECK(meta.at("train").at("lr").get<double>() == 5e-5);
  CHECK(meta.at("train").at("batch").get<int>() == 16);

  ad::NoGradGuard guard;
  const Tensor in = random_stack(1, 4, 8, 5);
  const Tensor a = model.forward(ad::constant(in))->value;
  const Tensor b = loaded.forward(ad::constant(in))->value;
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("shape mismatch is rejected") {
  ReconModel model = build_recon("MLP_0", 4);
  CHECK_THROWS(model.forward(ad::constant(Tensor({1, 3, 8, 8}))));
}
