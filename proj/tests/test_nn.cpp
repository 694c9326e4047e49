#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "json.hpp"
#include "slidesift/error.hpp"
#include "slidesift/nn.hpp"
#include "slidesift/parallel.hpp"
#include "support.hpp"

using namespace slidesift;
using namespace slidesift::nn;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no slidesift::Error thrown";
  return Errc::Io;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Tensor4<double> random_batch(std::uint32_t n, std::uint32_t c, std::uint32_t s, std::uint64_t seed) {
  Tensor4<double> b(n, c, s, s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (auto& v : b.values) v = d(rng);
  return b;
}

void randomize(Model<double>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (auto& w : m.weights)
    for (auto& v : w) v = d(rng);
}

// Largest relative error between analytic and central-difference gradients.
double max_gradient_error(Model<double> m, const Tensor4<double>& batch, const std::vector<int>& labels) {
  const auto analytic = loss_and_gradient(m, batch, labels, false);
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    for (std::size_t k = 0; k < m.weights[l].size(); ++k) {
      const double keep = m.weights[l][k];
      m.weights[l][k] = keep + h;
      const double up = loss_and_gradient(m, batch, labels, false).loss;
      m.weights[l][k] = keep - h;
      const double down = loss_and_gradient(m, batch, labels, false).loss;
      m.weights[l][k] = keep;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.grads[l][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

TileDataset white_black(std::uint32_t size, int per_class) {
  TileDataset d{size, {}};
  for (int i = 0; i < per_class; ++i) {
    d.tiles.push_back({std::vector<std::uint8_t>(std::size_t{size} * size * 3, 255), 1});
    d.tiles.push_back({std::vector<std::uint8_t>(std::size_t{size} * size * 3, 0), 0});
  }
  return d;
}

}  // namespace

TEST(Layers, ParamCounts) {
  EXPECT_EQ(LayerSpec::dense(10, 1).param_count(), 11u);
  EXPECT_EQ(LayerSpec::conv(3, 16).param_count(), 448u);
  EXPECT_EQ(LayerSpec::relu().param_count(), 0u);
  const auto c = count_params_flops({LayerSpec::flatten(), LayerSpec::dense(10, 1), LayerSpec::sigmoid()}, 10, 1);
  EXPECT_EQ(c.params, 11u);
  EXPECT_EQ(c.flops, 2u * 10 + 1 + 4);
}

TEST(Layers, ShapesAndValidation) {
  const auto m = build_reference_model(32, 1);
  const auto shapes = layer_shapes(m.layers, 3, 32);
  // Flatten output: 2x2x64.
  const auto flat = std::find_if(m.layers.begin(), m.layers.end(),
                                 [](const LayerSpec& l) { return l.kind == LayerKind::Flatten; });
  EXPECT_EQ(shapes[flat - m.layers.begin()].c, 256u);
  EXPECT_EQ(std::count_if(m.layers.begin(), m.layers.end(),
                          [](const LayerSpec& l) { return l.kind == LayerKind::Dropout; }),
            3);
  EXPECT_EQ(code_of([] { layer_shapes({LayerSpec::conv(3, 4), LayerSpec::flatten(), LayerSpec::dense(5, 1)}, 3, 8); }),
            Errc::ShapeMismatch);
  EXPECT_EQ(code_of([] { layer_shapes({LayerSpec::conv(2, 4)}, 3, 8); }), Errc::ShapeMismatch);
  EXPECT_THROW(build_model({LayerSpec::conv(3, 1), LayerSpec::flatten(), LayerSpec::dense(64, 2)}, 8, 0), Error);
}

TEST(Reference, ParameterCountMatchesAnalyticSum) {
  // Independent sum: conv k*k*in*out + out, dense in*out + out.
  auto conv = [](std::uint64_t in, std::uint64_t out) { return 9 * in * out + out; };
  auto side = [](std::uint32_t s) {
    for (int i = 0; i < 4; ++i) s /= 2;
    return std::uint64_t{s};
  };
  auto analytic = [&](std::uint32_t t) {
    const std::uint64_t flat = side(t) * side(t) * 64;
    return conv(3, 16) + conv(16, 32) + conv(32, 48) + conv(48, 64) + flat * 48 + 48 + 48 + 1;
  };
  EXPECT_EQ(analytic(224), 648881u);
  for (std::uint32_t t : {32u, 64u, 100u, 224u, 550u, 650u})
    EXPECT_EQ(count_params_flops(build_reference_model(t, 0)).params, analytic(t)) << t;

  const auto p550 = count_params_flops(build_reference_model(550, 0)).params;
  const auto p224 = count_params_flops(build_reference_model(224, 0)).params;
  const double ratio = static_cast<double>(p550) / p224;
  EXPECT_EQ(side(550), 34u);
  EXPECT_EQ(side(224), 14u);
  EXPECT_GT(ratio, 5.0);
  EXPECT_LT(ratio, 34.0 * 34.0 / (14.0 * 14.0));
}

TEST(Reference, FlopsFollowConvention) {
  // Recomputed from the layer shapes, one MAC = 2 FLOPs.
  std::uint64_t expect = 0;
  std::uint64_t s = 224;
  const std::uint64_t chans[] = {3, 16, 32, 48, 64};
  for (int i = 0; i < 4; ++i) {
    const auto in = chans[i], out = chans[i + 1];
    expect += 2 * in * 9 * out * s * s + out * s * s;  // conv + bias
    expect += out * s * s;                             // relu
    s /= 2;
    expect += 3 * out * s * s;  // pool
  }
  const auto flat = s * s * 64;
  expect += 2 * flat * 48 + 48 + 48 + 2 * 48 + 1 + 4;
  EXPECT_EQ(count_params_flops(build_reference_model(224, 0)).flops, expect);
}

TEST(Reference, TileSizeSupport) {
  for (std::uint32_t t : {32u, 48u, 64u, 100u, 150u, 224u, 550u, 650u}) EXPECT_TRUE(is_supported_tile_size(t));
  for (std::uint32_t t : {0u, 16u, 33u, 90u, 700u + 1}) {
    EXPECT_FALSE(is_supported_tile_size(t));
    EXPECT_EQ(code_of([&] { build_reference_model(t, 0); }), Errc::UnsupportedTileSize);
  }
}

TEST(Reference, SeededInitIsDeterministic) {
  EXPECT_EQ(build_reference_model(64, 9), build_reference_model(64, 9));
  EXPECT_NE(build_reference_model(64, 9).weights, build_reference_model(64, 10).weights);
  // He-uniform bound and zero biases.
  const auto m = build_reference_model(32, 3);
  const auto& w = m.weights[0];
  const double limit = std::sqrt(6.0 / 27.0);
  for (std::size_t k = 0; k < 16 * 27; ++k) ASSERT_LE(std::abs(w[k]), limit);
  for (std::size_t k = 16 * 27; k < w.size(); ++k) ASSERT_EQ(w[k], 0.0f);
}

TEST(Forward, ZeroFinalDenseGivesHalf) {
  auto m = build_reference_model(32, 4);
  std::fill(m.weights[m.layers.size() - 2].begin(), m.weights[m.layers.size() - 2].end(), 0.0f);
  Tensor4<float> b(3, 3, 32, 32, 0.7f);
  for (float p : forward(m, b, false)) EXPECT_EQ(p, 0.5f);
  for (float p : forward(m, b, true, 77)) EXPECT_EQ(p, 0.5f);
}

TEST(Forward, HandTracedConvDense) {
  // 4x4 gray input x = i/16; conv center tap 2, bias 0.5 -> 2x + 0.5 (no
  // border effect since only the center tap is nonzero); dense averages and
  // subtracts 1: z = 2 * mean(x) + 0.5 - 1 = 0.4375.
  auto m = build_model({LayerSpec::conv(1, 1), LayerSpec::flatten(), LayerSpec::dense(16, 1), LayerSpec::sigmoid()},
                       4, 0, 1)
               .cast<double>();
  std::fill(m.weights[0].begin(), m.weights[0].end(), 0.0);
  m.weights[0][4] = 2.0;
  m.weights[0][9] = 0.5;
  std::fill(m.weights[2].begin(), m.weights[2].end(), 1.0 / 16);
  m.weights[2][16] = -1.0;
  Tensor4<double> b(1, 1, 4, 4);
  for (int i = 0; i < 16; ++i) b.values[i] = i / 16.0;
  EXPECT_NEAR(forward(m, b, false)[0], sigmoid(0.4375), 1e-15);
}

TEST(Forward, ConvMatchesDirectLoops) {
  auto m = build_model({LayerSpec::conv(2, 3), LayerSpec::flatten(), LayerSpec::dense(48, 1), LayerSpec::sigmoid()},
                       4, 0, 2)
               .cast<double>();
  randomize(m, 5);
  const auto b = random_batch(2, 2, 4, 6);
  const auto got = forward(m, b, false);
  for (std::uint32_t n = 0; n < 2; ++n) {
    const auto x = b.sample(n);
    double z = m.weights[2][48];
    for (int o = 0; o < 3; ++o)
      for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) {
          double acc = m.weights[0][3 * 2 * 9 + o];
          for (int i = 0; i < 2; ++i)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = y + ky - 1, sx = xx + kx - 1;
                if (sy < 0 || sy >= 4 || sx < 0 || sx >= 4) continue;
                acc += m.weights[0][((o * 2 + i) * 3 + ky) * 3 + kx] * x[(i * 4 + sy) * 4 + sx];
              }
          z += m.weights[2][(o * 4 + y) * 4 + xx] * acc;
        }
    EXPECT_NEAR(got[n], sigmoid(z), 1e-14);
  }
}

TEST(Forward, InferenceIsRepeatableAndShapeChecked) {
  const auto m = build_reference_model(32, 6);
  Tensor4<float> b(4, 3, 32, 32);
  std::mt19937 rng(7);
  for (auto& v : b.values) v = std::uniform_real_distribution<float>(0, 1)(rng);
  const auto a = forward(m, b, false);
  EXPECT_EQ(a, forward(m, b, false));
  for (float p : a) {
    EXPECT_GT(p, 0.0f);
    EXPECT_LT(p, 1.0f);
  }
  EXPECT_EQ(forward(m, b, true, 1), forward(m, b, true, 1));
  EXPECT_NE(forward(m, b, true, 1), a);
  Tensor4<float> wrong(1, 3, 16, 16);
  EXPECT_EQ(code_of([&] { forward(m, wrong, false); }), Errc::ShapeMismatch);
}

TEST(Loss, BceAtHalfIsLn2) {
  EXPECT_NEAR(bce(0.5, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(0.5, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(0.9, 1), -std::log(0.9), 1e-15);
  EXPECT_NEAR(bce(0.9, 0), -std::log(0.1), 1e-14);
}

TEST(Gradient, ConvDenseMatchesFiniteDifferences) {
  auto m = build_model({LayerSpec::conv(3, 2), LayerSpec::flatten(), LayerSpec::dense(128, 1), LayerSpec::sigmoid()},
                       8, 0)
               .cast<double>();
  randomize(m, 8);
  const auto b = random_batch(3, 3, 8, 9);
  EXPECT_LT(max_gradient_error(m, b, {1, 0, 1}), 1e-6);
}

TEST(Gradient, ReluPoolDropoutStackMatchesFiniteDifferences) {
  auto m = build_model({LayerSpec::conv(3, 4), LayerSpec::relu(), LayerSpec::maxpool(), LayerSpec::dropout(0.25),
                        LayerSpec::conv(4, 3), LayerSpec::relu(), LayerSpec::maxpool(), LayerSpec::flatten(),
                        LayerSpec::dense(12, 5), LayerSpec::relu(), LayerSpec::dense(5, 1), LayerSpec::sigmoid()},
                       9, 0)
               .cast<double>();
  randomize(m, 10);
  const auto b = random_batch(2, 3, 9, 11);
  EXPECT_LT(max_gradient_error(m, b, {0, 1}), 1e-6);
}

TEST(Gradient, FloatAndDoubleAgree) {
  const auto mf = build_reference_model(32, 12);
  const auto md = mf.cast<double>();
  Tensor4<float> bf(2, 3, 32, 32);
  std::mt19937 rng(13);
  for (auto& v : bf.values) v = std::uniform_real_distribution<float>(0, 1)(rng);
  Tensor4<double> bd(2, 3, 32, 32);
  std::copy(bf.values.begin(), bf.values.end(), bd.values.begin());
  const int labels[] = {1, 0};
  const auto gf = loss_and_gradient(mf, bf, labels, false);
  const auto gd = loss_and_gradient(md, bd, labels, false);
  EXPECT_NEAR(gf.loss, gd.loss, 1e-5);
}

TEST(Tiles, FlipsPreserveHistogram) {
  const auto img = testsupport::noise_image(16, 16, 3, 14);
  std::vector<float> plain(768), flipped(768);
  tile_to_chw(img.pixels(), 16, plain);
  tile_to_chw(img.pixels(), 16, flipped, true, true);
  EXPECT_NE(plain, flipped);
  EXPECT_FLOAT_EQ(plain[0], img.at(0, 0, 0) / 255.0f);
  EXPECT_FLOAT_EQ(flipped[0], img.at(15, 15, 0) / 255.0f);
  std::vector<float> h = flipped;
  tile_to_chw(img.pixels(), 16, h, true, false);
  EXPECT_FLOAT_EQ(h[0], img.at(15, 0, 0) / 255.0f);
  std::sort(plain.begin(), plain.end());
  std::sort(flipped.begin(), flipped.end());
  EXPECT_EQ(plain, flipped);
}

TEST(Tiles, PredictMatchesForward) {
  const auto m = build_reference_model(32, 15);
  std::vector<RasterImage> tiles;
  Tensor4<float> b(3, 3, 32, 32);
  for (std::uint32_t i = 0; i < 3; ++i) {
    tiles.push_back(testsupport::noise_image(32, 32, 3, 16 + i));
    tile_to_chw(tiles.back().pixels(), 32, b.sample(i));
  }
  EXPECT_EQ(predict(m, tiles), forward(m, b, false));
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), Errc::Config);
  c = {};
  c.batch_size = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), Errc::Config);
  c = {};
  c.learning_rate = -1;
  EXPECT_EQ(code_of([&] { c.validate(); }), Errc::Config);
  auto m = build_reference_model(32, 0);
  c = {};
  c.epochs = 0;
  EXPECT_EQ(code_of([&] { train(m, white_black(32, 1), c); }), Errc::Config);
}

TEST(Train, DatasetChecks) {
  auto m = build_reference_model(32, 0);
  TrainConfig c;
  c.epochs = 1;
  EXPECT_EQ(code_of([&] { train(m, TileDataset{32, {}}, c); }), Errc::EmptyDataset);
  auto one_class = white_black(32, 2);
  for (auto& t : one_class.tiles) t.label = 1;
  EXPECT_EQ(code_of([&] { train(m, one_class, c); }), Errc::EmptyDataset);
  EXPECT_EQ(code_of([&] { train(m, white_black(64, 1), c); }), Errc::ShapeMismatch);
}

TEST(Train, SeparatesWhiteFromBlack) {
  auto m = build_reference_model(32, 17);
  TrainConfig c;
  c.epochs = 5;
  c.seed = 17;
  const auto data = white_black(32, 16);
  const auto ckpts = train(m, data, c);
  ASSERT_EQ(ckpts.size(), 5u);
  for (std::uint32_t e = 0; e < 5; ++e) EXPECT_EQ(ckpts[e].epoch, e + 1);
  std::vector<RasterImage> tiles;
  for (const auto& t : data.tiles) tiles.emplace_back(32, 32, 3, t.rgb);
  const auto p = predict(m, tiles);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) correct += (p[i] >= 0.5f) == (data.tiles[i].label == 1);
  EXPECT_EQ(correct, p.size());
  EXPECT_LT(ckpts.back().mean_loss, ckpts.front().mean_loss);
}

TEST(Train, ZeroLearningRateLeavesWeights) {
  auto m = build_reference_model(32, 18);
  const auto before = m;
  TrainConfig c;
  c.epochs = 1;
  c.learning_rate = 0.0;
  train(m, white_black(32, 4), c);
  EXPECT_EQ(m, before);
}

TEST(Train, CheckpointsAreByteIdenticalAcrossRunsAndThreadCounts) {
  const auto dir = testsupport::scratch_dir("train_det");
  const auto data = white_black(32, 5);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.seed = 3;
  auto run = [&](const std::string& sub, unsigned threads) {
    set_thread_limit(threads);
    auto m = build_reference_model(32, 3);
    c.checkpoint_dir = dir / sub;
    return train(m, data, c);
  };
  const auto a = run("a", 1);
  const auto b = run("b", 1);
  const auto t = run("t", 4);
  set_thread_limit(0);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].path.filename().string(), checkpoint_name(i + 1));
    const auto bytes = testsupport::slurp(a[i].path);
    EXPECT_EQ(bytes, testsupport::slurp(b[i].path));
    EXPECT_EQ(bytes, testsupport::slurp(t[i].path));
  }
  EXPECT_EQ(checkpoint_name(7), "epoch_007.aeye");
}

TEST(Serialize, RoundTripIsBitExact) {
  const auto dir = testsupport::scratch_dir("nn_io");
  auto m = build_reference_model(64, 19);
  m.weights[0][0] = -0.0f;
  m.weights[0][1] = std::numeric_limits<float>::denorm_min();
  save_model(m, dir / "m.aeye");
  const auto back = load_model(dir / "m.aeye");
  ASSERT_EQ(back.layers, m.layers);
  EXPECT_EQ(back.input_size, 64u);
  EXPECT_EQ(back.seed, 19u);
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    ASSERT_EQ(back.weights[l].size(), m.weights[l].size());
    for (std::size_t k = 0; k < m.weights[l].size(); ++k)
      ASSERT_EQ(std::bit_cast<std::uint32_t>(back.weights[l][k]), std::bit_cast<std::uint32_t>(m.weights[l][k]));
  }
  EXPECT_EQ(serialize_model(back), serialize_model(m));
}

TEST(Serialize, Layout) {
  const auto m = build_model({LayerSpec::conv(1, 1), LayerSpec::flatten(), LayerSpec::dense(4, 1), LayerSpec::sigmoid()},
                             2, 5, 1);
  const auto bytes = serialize_model(m);
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "AEYE");
  auto u32 = [&](std::size_t at) {
    return std::uint32_t{bytes[at]} | std::uint32_t{bytes[at + 1]} << 8 | std::uint32_t{bytes[at + 2]} << 16 |
           std::uint32_t{bytes[at + 3]} << 24;
  };
  EXPECT_EQ(u32(4), kModelFormatVersion);
  const auto hlen = u32(8);
  const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  EXPECT_EQ(header["input_size"], 2);
  EXPECT_EQ(header["layers"].size(), 4u);
  const std::size_t blob = 12 + hlen;
  EXPECT_EQ(bytes.size(), blob + (10 + 5) * 4);
  const std::size_t dense_at = blob + header["layers"][2]["offset"].get<std::size_t>();
  EXPECT_EQ(std::bit_cast<float>(u32(dense_at)), m.weights[2][0]);
  EXPECT_EQ(std::bit_cast<float>(u32(blob)), m.weights[0][0]);
}

TEST(Serialize, Errors) {
  const auto dir = testsupport::scratch_dir("nn_io_err");
  auto bytes = serialize_model(build_reference_model(32, 20));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { deserialize_model(bad); }), Errc::Format);
  bad = bytes;
  bad[4] = 2;
  try {
    deserialize_model(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Version);
    const std::string msg = e.what();
    EXPECT_NE(msg.find('2'), std::string::npos);
    EXPECT_NE(msg.find('1'), std::string::npos);
  }
  bad.assign(bytes.begin(), bytes.end() - 3);
  EXPECT_EQ(code_of([&] { deserialize_model(bad); }), Errc::Format);
  bad.assign(bytes.begin(), bytes.begin() + 6);
  EXPECT_EQ(code_of([&] { deserialize_model(bad); }), Errc::Format);
  EXPECT_EQ(code_of([&] { load_model(dir / "missing.aeye"); }), Errc::Io);
}
