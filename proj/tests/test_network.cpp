#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gradient_suite.hpp"
#include "pixobj/network.hpp"
#include "pixobj/weights.hpp"

namespace pixobj {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pixobj_test_network_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

TEST(Presets, PaperLayerTable) {
  struct Row {
    LayerKind kind;
    int channels;
    int kernel;
    int stride;
    int pad;
    int dilation;
    double rate;
  };
  const auto C = [](int ch, int k, int d) { return Row{LayerKind::kConv, ch, k, 1, k == 3 ? d : 0, d, 0.0}; };
  const Row R{LayerKind::kRelu, 0, 0, 1, 0, 1, 0.0};
  const auto P = [](int s) { return Row{LayerKind::kMaxPool, 0, 3, s, 1, 1, 0.0}; };
  const Row D{LayerKind::kDropout, 0, 0, 1, 0, 1, 0.5};
  const std::vector<Row> expected{
      C(64, 3, 1),   R, C(64, 3, 1),   R, P(2),                                        //
      C(128, 3, 1),  R, C(128, 3, 1),  R, P(2),                                        //
      C(256, 3, 1),  R, C(256, 3, 1),  R, C(256, 3, 1), R, P(2),                       //
      C(512, 3, 1),  R, C(512, 3, 1),  R, C(512, 3, 1), R, P(1),                       //
      C(512, 3, 2),  R, C(512, 3, 2),  R, C(512, 3, 2), R, P(1),                       //
      C(1024, 3, 12), R, D, C(1024, 1, 1), R, D, C(2, 1, 1)};
  const NetworkConfig cfg = NetworkConfig::paper();
  ASSERT_EQ(cfg.layers.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& l = cfg.layers[i];
    const auto& e = expected[i];
    EXPECT_EQ(l.kind, e.kind) << i;
    if (e.kind == LayerKind::kConv) {
      EXPECT_EQ(l.channels, e.channels) << i;
      EXPECT_EQ(l.kernel, e.kernel) << i;
      EXPECT_EQ(l.pad, e.pad) << i;
      EXPECT_EQ(l.dilation, e.dilation) << i;
      EXPECT_EQ(l.stride, 1) << i;
    } else if (e.kind == LayerKind::kMaxPool) {
      EXPECT_EQ(l.kernel, 3) << i;
      EXPECT_EQ(l.stride, e.stride) << i;
      EXPECT_EQ(l.pad, 1) << i;
    } else if (e.kind == LayerKind::kDropout) {
      EXPECT_EQ(l.rate, 0.5) << i;
    }
  }
  EXPECT_EQ(cfg.conv_count(), 16);
  EXPECT_EQ(cfg.layers.back().channels, 2);
  EXPECT_EQ(cfg.input_channels, 3);
}

TEST(Presets, PaperParameterCountClosedForm) {
  const std::vector<std::pair<int, int>> convs3{{3, 64},    {64, 64},   {64, 128},  {128, 128}, {128, 256},
                                                {256, 256}, {256, 256}, {256, 512}, {512, 512}, {512, 512},
                                                {512, 512}, {512, 512}, {512, 512}, {512, 1024}};
  std::int64_t expected = 0;
  for (const auto& [in, out] : convs3) expected += static_cast<std::int64_t>(in) * out * 9 + out;
  expected += 1024LL * 1024 + 1024;
  expected += 1024LL * 2 + 2;
  EXPECT_EQ(NetworkConfig::paper().parameter_count(), expected);
}

TEST(Presets, PaperOutputStrideIsEight) {
  const NetworkConfig cfg = NetworkConfig::paper();
  EXPECT_EQ(cfg.output_shape(Shape{1, 3, 321, 321}), (Shape{1, 2, 41, 41}));
  EXPECT_EQ(cfg.output_stride(), 8);
  // Stride-2 ceil pooling with pad 1 maps n to n / 2 + 1; the other layers
  // preserve size.
  const auto half = [](int n) { return n / 2 + 1; };
  for (int in = 33; in < 200; ++in) {
    const Shape out = cfg.output_shape(Shape{1, 3, in, in + 7});
    EXPECT_EQ(out.h, half(half(half(in)))) << in;
    EXPECT_EQ(out.w, half(half(half(in + 7)))) << in;
    EXPECT_LE(std::abs(out.h * 8 - in), 16) << in;
  }
}

TEST(Presets, ToyShapes) {
  const NetworkConfig cfg = NetworkConfig::toy();
  const int stride = cfg.output_stride();
  EXPECT_EQ(cfg.output_shape(Shape{1, 3, 64, 64}), (Shape{1, 2, 64 / stride + 1, 64 / stride + 1}));
  EXPECT_EQ(cfg.layers.back().channels, 2);
  bool has_two = false;
  bool has_twelve = false;
  for (const auto& l : cfg.layers) {
    has_two |= l.kind == LayerKind::kConv && l.dilation == 2;
    has_twelve |= l.kind == LayerKind::kConv && l.dilation == 12;
  }
  EXPECT_TRUE(has_two);
  EXPECT_TRUE(has_twelve);
  EXPECT_THROW(NetworkConfig::from_preset("vgg"), ContractViolation);
}

TEST(Presets, FeatureAndActivationLayers) {
  const NetworkConfig cfg = NetworkConfig::paper();
  EXPECT_EQ(cfg.layers[cfg.activation_layer()].kind, LayerKind::kMaxPool);
  EXPECT_EQ(cfg.activation_layer(), 30u);
  EXPECT_EQ(cfg.layers[cfg.feature_layer()].kind, LayerKind::kRelu);
  EXPECT_EQ(cfg.feature_channels(), 1024);
}

TEST(Network, SameSeedSameParameters) {
  const Network a = Network::random(NetworkConfig::toy(), 42);
  const Network b = Network::random(NetworkConfig::toy(), 42);
  const Network c = Network::random(NetworkConfig::toy(), 43);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
}

TEST(Network, ToyForwardSmoke) {
  const Network net = Network::random(NetworkConfig::toy(), 1);
  std::mt19937_64 rng(1);
  const Tensor x = testing::random_tensor({1, 3, 64, 64}, rng).cast<float>();
  const Tensor y1 = net.forward(x);
  const Tensor y2 = net.forward(x);
  EXPECT_EQ(y1.shape(), net.config().output_shape(x.shape()));
  EXPECT_EQ(y1, y2);
  EXPECT_THROW(net.forward(Tensor({1, 4, 64, 64})), ContractViolation);
}

TEST(Network, TrainModeDropoutDependsOnSeedOnly) {
  const Network net = Network::random(NetworkConfig::toy(), 2);
  std::mt19937_64 rng(2);
  const Tensor x = testing::random_tensor({1, 3, 24, 24}, rng).cast<float>();
  EXPECT_EQ(net.forward_trace(x, true, 5).output, net.forward_trace(x, true, 5).output);
  EXPECT_FALSE(net.forward_trace(x, true, 5).output == net.forward_trace(x, true, 6).output);
  EXPECT_EQ(net.forward_trace(x, false, 5).output, net.forward(x));
}

TEST(Network, EndToEndGradients) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) EXPECT_LT(testing::network_grad_error(seed), 1e-4) << seed;
}

TEST(Objectness, MapContract) {
  const Network net = Network::random(NetworkConfig::toy(), 3);
  std::mt19937_64 rng(3);
  const Tensor x = testing::random_tensor({1, 3, 37, 53}, rng).cast<float>();
  const ObjectnessMap m = predict_objectness(net, x);
  EXPECT_EQ(m.rows(), 37);
  EXPECT_EQ(m.cols(), 53);
  for (float v : m.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Objectness, SaturatedForegroundBias) {
  Network net = Network::random(NetworkConfig::toy(), 4);
  auto& last = net.params().rbegin()->second;
  for (auto& w : last.weights.data()) w = 0.0f;
  last.bias = {50.0f, 0.0f};
  const ObjectnessMap m = predict_objectness(net, Tensor({1, 3, 20, 20}, 0.1f));
  for (float v : m.data()) EXPECT_NEAR(v, 1.0f, 1e-6);
}

TEST(Objectness, SoftmaxChannelsSumToOne) {
  const Network net = Network::random(NetworkConfig::toy(), 5);
  std::mt19937_64 rng(5);
  const Tensor logits = net.forward(testing::random_tensor({1, 3, 30, 30}, rng).cast<float>());
  const Tensor fg = softmax_foreground(logits);
  Tensor swapped(logits.shape());
  for (int h = 0; h < logits.h(); ++h)
    for (int w = 0; w < logits.w(); ++w) {
      swapped.at(0, 0, h, w) = logits.at(0, 1, h, w);
      swapped.at(0, 1, h, w) = logits.at(0, 0, h, w);
    }
  const Tensor bg = softmax_foreground(swapped);
  for (std::size_t i = 0; i < fg.numel(); ++i) EXPECT_NEAR(fg.data()[i] + bg.data()[i], 1.0f, 1e-6);
}

TEST(Activation, ZeroWeightsGiveZeroMap) {
  Network net(NetworkConfig::toy());
  const Tensor x({1, 3, 33, 41}, 0.4f);
  const Grid<float> raw = activation_map_raw(net, x);
  EXPECT_EQ(raw.rows(), 33);
  EXPECT_EQ(raw.cols(), 41);
  for (float v : raw.data()) EXPECT_EQ(v, 0.0f);
  const Grid<float> normalized = activation_map(net, x);
  for (float v : normalized.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Activation, NormalizedRange) {
  const Network net = Network::random(NetworkConfig::toy(), 6);
  std::mt19937_64 rng(6);
  const Grid<float> m = activation_map(net, testing::random_tensor({1, 3, 40, 40}, rng).cast<float>());
  EXPECT_EQ(*std::min_element(m.data().begin(), m.data().end()), 0.0f);
  EXPECT_EQ(*std::max_element(m.data().begin(), m.data().end()), 1.0f);
}

TEST(Archive, RoundTripIsBitExact) {
  const fs::path dir = scratch("roundtrip");
  Network net = Network::random(NetworkConfig::toy(), 7);
  net.set_iteration(123);
  for (auto& [idx, v] : net.velocity()) v.bias.assign(v.bias.size(), 0.25f);
  save_weights(net, dir);
  const Network back = load_weights(dir);
  EXPECT_TRUE(back == net);
  EXPECT_EQ(back.iteration(), 123);
  EXPECT_EQ(back.config().preset, "toy");
  for (const auto& [idx, v] : back.velocity()) {
    EXPECT_EQ(v.bias, net.velocity().at(idx).bias);
    EXPECT_EQ(v.weights, net.velocity().at(idx).weights);
  }
  Network into(NetworkConfig::toy());
  load_weights_into(into, dir);
  EXPECT_TRUE(into == net);
}

TEST(Archive, ToyIntoPaperIsShapeMismatch) {
  const fs::path dir = scratch("toy_into_paper");
  save_weights(Network::random(NetworkConfig::toy(), 8), dir);
  Network paper(NetworkConfig::paper());
  EXPECT_THROW(load_weights_into(paper, dir), ShapeMismatchError);
}

TEST(Archive, EditedShapeNamesLayer) {
  const fs::path dir = scratch("edited_shape");
  save_weights(Network::random(NetworkConfig::toy(), 9), dir);
  std::string m = slurp(dir / "manifest.txt");
  const std::string from = "layer=2 name=weight shape=16,16,3,3";
  const auto pos = m.find(from);
  ASSERT_NE(pos, std::string::npos) << m;
  m.replace(pos, from.size(), "layer=2 name=weight shape=16,16,3,2");
  spit(dir / "manifest.txt", m);
  try {
    load_weights(dir);
    FAIL() << "expected ShapeMismatchError";
  } catch (const ShapeMismatchError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
  }
}

TEST(Archive, CorruptManifest) {
  const fs::path dir = scratch("corrupt");
  save_weights(Network::random(NetworkConfig::toy(), 10), dir);
  spit(dir / "manifest.txt", "not a manifest\n");
  EXPECT_THROW(load_weights(dir), CorruptManifestError);
  spit(dir / "manifest.txt", "");
  EXPECT_THROW(load_weights(dir), CorruptManifestError);
}

TEST(Archive, TruncatedBlob) {
  const fs::path dir = scratch("truncated");
  save_weights(Network::random(NetworkConfig::toy(), 11), dir);
  const fs::path blob = dir / "layer02_weight.f32";
  ASSERT_TRUE(fs::exists(blob));
  fs::resize_file(blob, fs::file_size(blob) - 4);
  EXPECT_THROW(load_weights(dir), TruncatedBlobError);
}

TEST(Archive, ChecksumMismatch) {
  const fs::path dir = scratch("checksum");
  save_weights(Network::random(NetworkConfig::toy(), 12), dir);
  const fs::path blob = dir / "layer00_weight.f32";
  std::string bytes = slurp(blob);
  bytes[5] = static_cast<char>(bytes[5] ^ 0x10);
  spit(blob, bytes);
  EXPECT_THROW(load_weights(dir), ChecksumError);
}

TEST(Archive, MissingDirectoryIsIoError) {
  EXPECT_THROW(load_weights(scratch("absent")), IoError);
}

TEST(Archive, ErrorsAreDistinct) {
  static_assert(std::is_base_of_v<ArchiveError, CorruptManifestError>);
  static_assert(std::is_base_of_v<ArchiveError, ShapeMismatchError>);
  static_assert(std::is_base_of_v<ArchiveError, TruncatedBlobError>);
  static_assert(std::is_base_of_v<ArchiveError, ChecksumError>);
  static_assert(!std::is_base_of_v<ShapeMismatchError, TruncatedBlobError>);
  SUCCEED();
}

}  // namespace
}  // namespace pixobj
