#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "nlx/network.hpp"
#include "nlx/synthetic.hpp"
#include "support.hpp"

using namespace nlx;
using testsupport::small_net;

namespace {

// Direct conv over an image in HWC layout, zero padding.
std::vector<double> naive_conv(const Conv2d& c, const Image& img) {
  const long H = static_cast<long>(img.height()), W = static_cast<long>(img.width());
  const long P = static_cast<long>(c.padding);
  const long OH = H + 2 * P - static_cast<long>(c.kernel_h) + 1, OW = W + 2 * P - static_cast<long>(c.kernel_w) + 1;
  std::vector<double> out(c.out_channels * OH * OW);
  for (std::size_t o = 0; o < c.out_channels; ++o)
    for (long y = 0; y < OH; ++y)
      for (long x = 0; x < OW; ++x) {
        double s = c.bias.empty() ? 0.0 : c.bias[o];
        for (std::size_t i = 0; i < c.in_channels; ++i)
          for (long ky = 0; ky < static_cast<long>(c.kernel_h); ++ky)
            for (long kx = 0; kx < static_cast<long>(c.kernel_w); ++kx) {
              const long iy = y + ky - P, ix = x + kx - P;
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              s += static_cast<double>(c.weights[((o * c.in_channels + i) * c.kernel_h + ky) * c.kernel_w + kx]) *
                   img.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), i);
            }
        out[(o * OH + y) * OW + x] = s;
      }
  return out;
}

}  // namespace

TEST(Image, RejectsTinyOrOutOfRange) {
  EXPECT_THROW(Image(2, 5, 3), InputError);
  EXPECT_THROW(Image(5, 2, 3), InputError);
  EXPECT_THROW(Image(4, 4, 3, 1.5f), InputError);
  Image img(3, 3, 3);
  img.at(1, 1, 0) = -0.1f;
  EXPECT_THROW(img.validate(), InputError);
}

TEST(Image, PpmRoundTripIsLosslessOnEightBitValues) {
  Image img(5, 7, 3);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) img.pixels()[i] = static_cast<float>((i * 37) % 256) / 255.0f;
  const auto back = decode_ppm(encode_ppm(img));
  EXPECT_EQ(back, img);
  EXPECT_EQ(image_digest(back), image_digest(img));
}

TEST(Image, PpmRejectsGarbage) {
  std::vector<std::uint8_t> junk = {'P', '3', '\n'};
  EXPECT_THROW(decode_ppm(junk), FormatError);
  std::string truncated = "P6\n4 4\n255\nabc";
  EXPECT_THROW(decode_ppm(std::vector<std::uint8_t>(truncated.begin(), truncated.end())), FormatError);
}

TEST(Network, CompositionErrorsNameTheLayer) {
  Conv2d c{"c1", 3, 2, 3, 3, 1, 1, std::vector<float>(54, 0.1f), {0, 0}};
  Dense d{"fc", 99, 2, std::vector<float>(198, 0.1f), {0, 0}};
  try {
    Network({3, 6, 6}, {c, Relu{"r"}, Flatten{"f"}, d}, {"x", "y"});
    FAIL() << "expected a composition error";
  } catch (const CompositionError& e) {
    EXPECT_NE(std::string(e.what()).find("fc"), std::string::npos) << e.what();
  }
}

TEST(Network, ForwardConvMatchesDirectLoops) {
  const auto net = small_net(3, true);
  const auto img = testsupport::random_image(11);
  const auto fw = forward(net, img);
  const auto expect = naive_conv(net.conv("conv1"), img);
  const auto& got = fw.activations.outputs.at(net.layer_index("conv1"));
  ASSERT_EQ(got.data.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(got.data[i], expect[i], 1e-5);
}

TEST(Network, SoftmaxIsNormalizedAndPredictionIsArgmax) {
  const auto net = small_net(4, true);
  const auto p = forward(net, testsupport::random_image(5)).prediction;
  double s = 0.0;
  for (double v : p.probabilities) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
  const auto best = std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin();
  EXPECT_EQ(p.predicted_index, static_cast<std::size_t>(best));
  EXPECT_EQ(p.predicted_class, net.class_names()[p.predicted_index]);
}

TEST(Network, MaskZeroesExactlyTheMaskedChannel) {
  const auto net = small_net(5, true);
  const auto img = testsupport::random_image(6);
  const auto plain = forward(net, img);
  const auto masked = forward(net, img, NeuronMask{{{"conv2", 3}}});
  const auto li = net.layer_index("conv2");
  const auto& a = plain.activations.outputs[li];
  const auto& b = masked.activations.outputs[li];
  for (std::size_t c = 0; c < a.channels; ++c)
    for (std::size_t y = 0; y < a.height; ++y)
      for (std::size_t x = 0; x < a.width; ++x) {
        if (c == 3) EXPECT_EQ(b.at(c, y, x), 0.0f);
        else EXPECT_EQ(b.at(c, y, x), a.at(c, y, x));
      }
  // upstream layers untouched
  EXPECT_EQ(plain.activations.outputs[0].data, masked.activations.outputs[0].data);
}

TEST(Network, UnknownNeuronsAreLookupErrors) {
  const auto net = small_net(1);
  EXPECT_THROW(net.validate_neuron({"conv9", 0}), LookupError);
  EXPECT_THROW(net.validate_neuron({"conv1", 4}), LookupError);
  EXPECT_THROW(net.validate_neuron({"relu1", 0}), LookupError);
  EXPECT_THROW(forward(net, testsupport::random_image(1), NeuronMask{{{"conv1", 99}}}), LookupError);
}

TEST(Network, InputShapeMismatchIsInputError) {
  const auto net = small_net(1);
  EXPECT_THROW(forward(net, testsupport::random_image(1, 10, 12)), InputError);
}

TEST(Network, ActivationMapReadsTheReluOutput) {
  const auto net = small_net(8, true);
  const auto fw = forward(net, testsupport::random_image(2));
  const auto g = activation_map(net, fw.activations, {"conv3", 2});
  const auto& relu = fw.activations.outputs[net.layer_index("relu3")];
  ASSERT_EQ(g.height, relu.height);
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x) EXPECT_EQ(g.values[y * g.width + x], relu.at(2, y, x));
}

TEST(Network, ForwardIsDeterministicAcrossThreads) {
  const auto net = small_net(9, true);
  const auto img = testsupport::random_image(9);
  const auto a = forward(net, img).prediction.logits;
  std::vector<std::vector<float>> got(4);
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t) ts.emplace_back([&, t] { got[t] = forward(net, img).prediction.logits; });
  for (auto& t : ts) t.join();
  for (const auto& g : got) EXPECT_EQ(g, a);
}

TEST(ReferenceModel, ReproducesStoredTestAccuracy) {
  const auto& m = testsupport::reference();
  const auto& meta = m.metadata;
  const auto seed = meta.at("test_seed").get<std::uint64_t>();
  const auto per_class = meta.at("test_per_class").get<std::size_t>();
  const auto stored = meta.at("test_accuracy").get<double>();
  std::size_t correct = 0, total = 0;
  for (const auto& s : synthetic::cohort(10, per_class, seed)) {
    correct += forward(m.network, s.image).prediction.predicted_class == s.label ? 1 : 0;
    ++total;
  }
  EXPECT_NEAR(static_cast<double>(correct) / static_cast<double>(total), stored, 0.001);
  EXPECT_GE(stored, 0.6);
}
