#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "cstseld/model.hpp"
#include "cstseld/nn.hpp"
#include "support.hpp"

using cst::CstFormer;
using cst::ModelConfig;
using cst::PoolingProfile;
using cst::Shape;
using cst::Tensor;
using cst::UleKernel;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.n_cst = 1;
  cfg.pooling = PoolingProfile::kFront;
  cfg.ule_kernels = {UleKernel{5, 4}};
  cfg.heads = 2;
  cfg.n_classes = 2;
  cfg.n_tracks = 3;
  cfg.dropout_rate = 0.0;
  cfg.fc_hidden = 32;
  cfg.input_frames = 50;
  return cfg;
}

Tensor<double> random_input(const ModelConfig& cfg, std::int64_t batch, unsigned seed) {
  std::mt19937_64 rng(seed);
  return Tensor<double>(
      Shape{batch, cfg.input_channels, cfg.input_frames, cfg.mel_bands},
      testsupport::random_vector(
          static_cast<std::size_t>(batch * cfg.input_channels * cfg.input_frames * cfg.mel_bands),
          rng));
}

void zero_attention_projections(CstFormer<double>& model) {
  for (auto& e : model.params().entries()) {
    if (e.name.find(".wq") != std::string::npos || e.name.find(".wk") != std::string::npos ||
        e.name.find(".wv") != std::string::npos || e.name.find(".wo") != std::string::npos) {
      std::fill(e.tensor.mutable_values().begin(), e.tensor.mutable_values().end(), 0.0);
    }
  }
}

}  // namespace

TEST_CASE("shape program: every Table profile/kernel row forward-passes to [50, K]") {
  struct Row {
    const char* name;
    PoolingProfile pooling;
    int n_cst;
  };
  const Row rows[] = {
      {"small", PoolingProfile::kFront, 2},
      {"base", PoolingProfile::kMiddle, 2},
      {"large", PoolingProfile::kEnd, 4},
      {"huge", PoolingProfile::kEnd, 6},
  };
  for (const auto& row : rows) {
    for (bool multiscale : {false, true}) {
      ModelConfig cfg;
      cfg.channels = 16;  // micro width; profile/kernels are the real thing
      cfg.n_cst = row.n_cst;
      cfg.pooling = row.pooling;
      cfg.multiscale = multiscale;
      cfg.n_classes = 13;
      cfg.dropout_rate = 0.0;
      REQUIRE_NOTHROW(cfg.validate());
      CstFormer<double> model(cfg, 7);
      auto out = model.forward(random_input(cfg, 1, 42), /*train=*/false);
      INFO(row.name, multiscale ? " msule" : " ule");
      CHECK(out.shape() == Shape{1, 50, 13 * 3 * 3});
      for (double v : out.values()) CHECK(std::fabs(v) <= 1.0);  // tanh head
    }
  }
}

TEST_CASE("divisibility validator rejects (7,4) on T'=250") {
  ModelConfig cfg;
  cfg.channels = 16;
  cfg.n_cst = 1;
  cfg.pooling = PoolingProfile::kEnd;  // T' = 250
  cfg.ule_kernels = {UleKernel{7, 4}};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("does not divide"), cst::ConfigError);
}

TEST_CASE("encoder dims follow the pooling table") {
  ModelConfig cfg;
  std::int64_t t = 0, f = 0;
  cfg.pooling = PoolingProfile::kFront;
  cfg.encoder_dims(250, t, f);
  CHECK(t == 50);
  CHECK(f == 16);
  cfg.pooling = PoolingProfile::kMiddle;
  cfg.encoder_dims(250, t, f);
  CHECK(t == 50);
  CHECK(f == 16);
  cfg.pooling = PoolingProfile::kEnd;
  cfg.encoder_dims(250, t, f);
  CHECK(t == 250);
  CHECK(f == 16);
  CHECK(cfg.output_frames(250) == 50);  // FC-block (5,1) -> 10 Hz
}

TEST_CASE("LPU is a residual depthwise convolution") {
  auto cfg = micro_config();
  CstFormer<double> model(cfg, 3);
  std::mt19937_64 rng(5);
  Tensor<double> z(Shape{1, 8, 10, 16}, testsupport::random_vector(8 * 10 * 16, rng));

  SUBCASE("zero kernel -> identity") {
    auto& w = model.params().at("cst0.lpu.w");
    std::fill(w.mutable_values().begin(), w.mutable_values().end(), 0.0);
    CHECK(model.lpu(z, 0).values() == z.values());
  }
  SUBCASE("center-one kernel -> doubling") {
    auto& w = model.params().at("cst0.lpu.w");
    std::fill(w.mutable_values().begin(), w.mutable_values().end(), 0.0);
    for (int c = 0; c < 8; ++c) w.mutable_values()[static_cast<std::size_t>(c * 9 + 4)] = 1.0;
    auto out = model.lpu(z, 0);
    for (std::size_t i = 0; i < out.values().size(); ++i)
      CHECK(out.values()[i] == doctest::Approx(2.0 * z.values()[i]));
  }
  SUBCASE("output minus input equals the standalone depthwise convolution") {
    auto out = model.lpu(z, 0);
    auto dw = cst::depthwise_conv2d(z, model.params().at("cst0.lpu.w"));
    for (std::size_t i = 0; i < out.values().size(); ++i)
      CHECK(out.values()[i] - z.values()[i] == doctest::Approx(dw.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("channel attention with ULE") {
  auto cfg = micro_config();
  CstFormer<double> model(cfg, 11);
  std::mt19937_64 rng(6);
  Tensor<double> z(Shape{2, 8, 10, 16}, testsupport::random_vector(2 * 8 * 10 * 16, rng));

  SUBCASE("maps are CxC per head per patch and rows sum to 1") {
    cst::AttentionCapture capture;
    model.attention_sublayer(z, 0, 'C', false, nullptr, &capture);
    REQUIRE(capture.maps.size() == 1);
    const auto& m = capture.maps[0];
    // kernel (5,4): patch grid (10/5, 16/4) = (2,4), batch multiplier 8 per item
    CHECK(m.shape == Shape{2 * 2 * 4, 2, 8, 8});
    const std::int64_t rows = 2 * 2 * 4 * 2 * 8;
    for (std::int64_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < 8; ++c) s += m.values[static_cast<std::size_t>(r * 8 + c)];
      CHECK(std::fabs(s - 1.0) < 1e-6);
    }
  }
  SUBCASE("zero W_Q/W_K -> uniform 1/C attention rows") {
    for (const char* n : {"cst0.catt.wq", "cst0.catt.wk"}) {
      auto& w = model.params().at(n);
      std::fill(w.mutable_values().begin(), w.mutable_values().end(), 0.0);
    }
    cst::AttentionCapture capture;
    model.attention_sublayer(z, 0, 'C', false, nullptr, &capture);
    for (double v : capture.maps[0].values) CHECK(v == doctest::Approx(1.0 / 8).epsilon(1e-12));
  }
  SUBCASE("zero projections -> sublayer reduces to LN(residual input)") {
    zero_attention_projections(model);
    auto out = model.attention_sublayer(z, 0, 'C', false, nullptr, nullptr);
    // same as layer norm of z across channels
    auto expect = cst::permute(
        cst::layer_norm_last(cst::permute(z, {0, 2, 3, 1}), model.params().at("cst0.catt.ln.gamma"),
                             model.params().at("cst0.catt.ln.beta")),
        {0, 3, 1, 2});
    for (std::size_t i = 0; i < out.values().size(); ++i)
      CHECK(out.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("Large/End block-1 channel attention follows Table arithmetic") {
  ModelConfig cfg;
  cfg.channels = 16;
  cfg.n_cst = 4;
  cfg.pooling = PoolingProfile::kEnd;
  cfg.n_classes = 13;
  cfg.dropout_rate = 0.0;
  CstFormer<double> model(cfg, 1);
  std::mt19937_64 rng(2);
  Tensor<double> z(Shape{1, 16, 250, 16},
                   testsupport::random_vector(16 * 250 * 16, rng, -0.1, 0.1));
  cst::AttentionCapture capture;
  model.attention_sublayer(z, 0, 'C', false, nullptr, &capture);
  // kernel (25,4): patch grid (250/25, 16/4) = (10,4) -> 40 patches per clip
  CHECK(capture.maps[0].shape == Shape{40, 8, 16, 16});
}

TEST_CASE("axis attention: map extents and residual identity") {
  auto cfg = micro_config();
  CstFormer<double> model(cfg, 13);
  std::mt19937_64 rng(8);
  Tensor<double> z(Shape{1, 8, 10, 16}, testsupport::random_vector(8 * 10 * 16, rng));

  cst::AttentionCapture capture;
  model.attention_sublayer(z, 0, 'S', false, nullptr, &capture);
  model.attention_sublayer(z, 0, 'T', false, nullptr, &capture);
  CHECK(capture.maps[0].shape == Shape{10, 2, 16, 16});  // spectral: F'xF', batch B*T'
  CHECK(capture.maps[1].shape == Shape{16, 2, 10, 10});  // temporal: T'xT', batch B*F'

  zero_attention_projections(model);
  auto out = model.attention_sublayer(z, 0, 'T', false, nullptr, nullptr);
  auto expect = cst::permute(
      cst::layer_norm_last(cst::permute(z, {0, 2, 3, 1}), model.params().at("cst0.tatt.ln.gamma"),
                           model.params().at("cst0.tatt.ln.beta")),
      {0, 3, 1, 2});
  for (std::size_t i = 0; i < out.values().size(); ++i)
    CHECK(out.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));
}

TEST_CASE("single head equals 8 heads with block-diagonal equivalent weights") {
  // Head-concatenation identity: build an 8-head attention whose per-head
  // logits and value blocks reproduce one full-width head.
  const std::int64_t S = 6, D = 16;
  const int H = 8;
  const std::int64_t Dh = D / H;
  std::mt19937_64 rng(17);
  Tensor<double> x(Shape{1, S, D}, testsupport::random_vector(static_cast<std::size_t>(S * D), rng));

  auto uq = testsupport::random_vector(static_cast<std::size_t>(D * Dh), rng);
  auto vk = testsupport::random_vector(static_cast<std::size_t>(D * Dh), rng);
  auto wv_full = testsupport::random_vector(static_cast<std::size_t>(D * D), rng);
  auto wo_full = testsupport::random_vector(static_cast<std::size_t>(D * D), rng);

  // single head: W_Q/W_K only use the first Dh columns
  std::vector<double> wq1(static_cast<std::size_t>(D * D), 0.0);
  std::vector<double> wk1(static_cast<std::size_t>(D * D), 0.0);
  for (std::int64_t r = 0; r < D; ++r)
    for (std::int64_t c = 0; c < Dh; ++c) {
      wq1[static_cast<std::size_t>(r * D + c)] = uq[static_cast<std::size_t>(r * Dh + c)];
      wk1[static_cast<std::size_t>(r * D + c)] = vk[static_cast<std::size_t>(r * Dh + c)];
    }
  auto single = cst::multi_head_self_attention<double>(
      x, Tensor<double>(Shape{D, D}, wq1), Tensor<double>(Shape{D, D}, wk1),
      Tensor<double>(Shape{D, D}, wv_full), Tensor<double>(Shape{D, D}, wo_full), 1);

  // 8 heads: every head carries the same scaled query/key pair; values are
  // contiguous chunks of the full value projection.
  const double qscale = std::sqrt(static_cast<double>(Dh) / static_cast<double>(D));
  std::vector<double> wq8(static_cast<std::size_t>(D * D));
  std::vector<double> wk8(static_cast<std::size_t>(D * D));
  for (int h = 0; h < H; ++h)
    for (std::int64_t r = 0; r < D; ++r)
      for (std::int64_t c = 0; c < Dh; ++c) {
        wq8[static_cast<std::size_t>(r * D + h * Dh + c)] =
            uq[static_cast<std::size_t>(r * Dh + c)] * qscale;
        wk8[static_cast<std::size_t>(r * D + h * Dh + c)] = vk[static_cast<std::size_t>(r * Dh + c)];
      }
  auto multi = cst::multi_head_self_attention<double>(
      x, Tensor<double>(Shape{D, D}, wq8), Tensor<double>(Shape{D, D}, wk8),
      Tensor<double>(Shape{D, D}, wv_full), Tensor<double>(Shape{D, D}, wo_full), H);

  CHECK(testsupport::max_rel_err(single.values(), multi.values()) < 1e-6);
}

TEST_CASE("IRFFN expands four-fold and keeps the outer residual") {
  auto cfg = micro_config();
  CstFormer<double> model(cfg, 19);
  std::mt19937_64 rng(23);
  Tensor<double> z(Shape{1, 8, 10, 16}, testsupport::random_vector(8 * 10 * 16, rng));

  SUBCASE("all-zero weights -> identity via the outer residual") {
    for (auto& e : model.params().entries()) {
      if (e.name.find("irffn") == std::string::npos) continue;
      if (e.name.find(".mean") != std::string::npos || e.name.find(".var") != std::string::npos)
        continue;
      std::fill(e.tensor.mutable_values().begin(), e.tensor.mutable_values().end(), 0.0);
    }
    auto out = model.irffn(z, 0, /*train=*/false);
    for (std::size_t i = 0; i < out.values().size(); ++i)
      CHECK(out.values()[i] == doctest::Approx(z.values()[i]));
  }
  SUBCASE("expansion weights are shaped 4C and receive gradient") {
    auto zz = z.clone();
    zz.set_requires_grad();
    auto loss = cst::sum(cst::mul(model.irffn(zz, 0, true), model.irffn(zz, 0, true).detach()));
    loss.backward();
    const auto& w = model.params().at("cst0.irffn.expand.w");
    CHECK(w.shape() == Shape{32, 8, 1, 1});  // 4C = 32
    double mag = 0.0;
    for (double g : w.grad()) mag += std::fabs(g);
    CHECK(mag > 0.0);
  }
}

TEST_CASE("eval-mode forward is deterministic, train differs by dropout draws") {
  auto cfg = micro_config();
  CstFormer<double> model(cfg, 29);
  auto x = random_input(cfg, 2, 31);
  auto a = model.forward(x, false);
  auto b = model.forward(x, false);
  CHECK(a.values() == b.values());
}

TEST_CASE("attention ablations are first-class configs") {
  for (const std::string order : {"CS", "CT", "ST", "TCS", "SCT", "T"}) {
    auto cfg = micro_config();
    cfg.attention_order = order;
    CstFormer<double> model(cfg, 37);
    auto out = model.forward(random_input(cfg, 1, 41), false);
    INFO("order ", order);
    CHECK(out.shape() == Shape{1, 10, 2 * 3 * 3});
  }
  auto cfg = micro_config();
  cfg.attention_order = "CC";
  CHECK_THROWS_AS(cfg.validate(), cst::ConfigError);
  cfg.attention_order = "X";
  CHECK_THROWS_AS(cfg.validate(), cst::ConfigError);
}

TEST_CASE("checkpoint round-trip is bit-exact and validates shapes") {
  const auto dir = std::filesystem::temp_directory_path() / "cstseld_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.ckpt").string();

  auto cfg = micro_config();
  CstFormer<double> model(cfg, 43);
  // make running stats non-trivial so buffers are exercised
  std::mt19937_64 rng(47);
  model.forward(random_input(cfg, 2, 53), true, &rng);
  save_checkpoint(path, model, {{"run", "unit-test"}});

  CHECK(cst::checkpoint_dtype(path) == "f64");
  auto cfg2 = cst::checkpoint_config(path);
  CHECK(cfg2.channels == cfg.channels);
  CHECK(cfg2.resolved_ule_kernels() == cfg.resolved_ule_kernels());

  auto loaded = cst::load_checkpoint<double>(path);
  REQUIRE(loaded.params().entries().size() == model.params().entries().size());
  for (std::size_t i = 0; i < model.params().entries().size(); ++i) {
    const auto& a = model.params().entries()[i];
    const auto& b = loaded.params().entries()[i];
    REQUIRE(a.name == b.name);
    CHECK(a.tensor.values() == b.tensor.values());  // bit-exact
  }

  // same input -> identical outputs
  auto x = random_input(cfg, 1, 59);
  CHECK(model.forward(x, false).values() == loaded.forward(x, false).values());

  CHECK_THROWS_AS(cst::load_checkpoint<float>(path), cst::ConfigError);  // dtype mismatch
  std::filesystem::remove_all(dir);
}

TEST_CASE("end-to-end micro gradcheck vs finite differences") {
  auto cfg = micro_config();
  CstFormer<double> model(cfg, 61);
  auto x = random_input(cfg, 1, 67);
  std::mt19937_64 wrng(71);
  const auto weights = testsupport::random_vector(
      static_cast<std::size_t>(cfg.output_frames(cfg.input_frames) * cfg.output_width()), wrng);

  auto loss_value = [&]() {
    auto out = model.forward(x, /*train=*/true);
    Tensor<double> w(out.shape(), weights);
    return cst::sum(cst::mul(out, w));
  };

  auto loss = loss_value();
  loss.backward();

  int checked_tensors = 0;
  for (auto& e : model.params().entries()) {
    if (!e.trainable) continue;
    const auto analytic = e.tensor.grad();
    auto f = [&](const std::vector<double>& v) {
      auto& data = e.tensor.mutable_values();
      auto saved = data;
      data = v;
      cst::NoGradGuard ng;
      const double out = loss_value().item();
      data = saved;
      return out;
    };
    auto fd = testsupport::finite_diff_grad(f, e.tensor.values(), 1e-4);
    INFO("parameter ", e.name);
    CHECK(testsupport::max_rel_err(analytic, fd) < 1e-4);
    ++checked_tensors;
  }
  CHECK(checked_tensors > 20);
}
