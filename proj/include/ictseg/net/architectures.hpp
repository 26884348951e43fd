#pragma once

#include <cstdint>
#include <string>

#include "ictseg/net/network.hpp"
#include "ictseg/rng.hpp"

namespace ictseg {

enum class Architecture { tiny_unet, resnet50_unet };

inline const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::tiny_unet: return "tiny_unet";
    case Architecture::resnet50_unet: return "resnet50_unet";
  }
  return "?";
}

inline Architecture architecture_from_string(const std::string& s) {
  if (s == "tiny_unet") return Architecture::tiny_unet;
  if (s == "resnet50_unet") return Architecture::resnet50_unet;
  throw ConfigError("unknown architecture '" + s + "'");
}

struct ModelSpec {
  Architecture architecture = Architecture::tiny_unet;
  int n_classes = 2;
  std::uint64_t init_seed = 0;
  int in_channels = 1;
};

inline void validate_model_spec(const ModelSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("model.n_classes must be >= 2");
  if (spec.in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
}

namespace detail {

// Two conv3 encoder stages (16, 32 channels) with tanh and 2x average-pool
// downsampling, conv3x64 bottleneck, mirrored decoder with skip concats,
// 1x1xK head, softmax. Input H and W must be divisible by 4.
template <typename T>
Network<T> build_tiny_unet(int in_channels, int n_classes) {
  typename Network<T>::Builder b;
  const int e1 = b.activation(b.conv("enc1.conv", b.input(), 3, 1, 1, in_channels, 16),
                              Activation::tanh);
  const int p1 = b.avgpool2(e1);
  const int e2 = b.activation(b.conv("enc2.conv", p1, 3, 1, 1, 16, 32), Activation::tanh);
  const int p2 = b.avgpool2(e2);
  const int mid =
      b.activation(b.conv("bottleneck.conv", p2, 3, 1, 1, 32, 64), Activation::tanh);
  const int u2 = b.concat(b.upsample2(mid), e2);
  const int d2 = b.activation(b.conv("dec2.conv", u2, 3, 1, 1, 96, 32), Activation::tanh);
  const int u1 = b.concat(b.upsample2(d2), e1);
  const int d1 = b.activation(b.conv("dec1.conv", u1, 3, 1, 1, 48, 16), Activation::tanh);
  const int logits = b.conv("head.conv", d1, 1, 1, 0, 16, n_classes);
  return b.finish(b.softmax(logits));
}

// ResNet-50 bottleneck encoder (stages 3-4-6-3, stride on the 3x3 conv,
// conv1 projection shortcuts) with a U-Net style decoder over the stage
// outputs. Norm-free: plain conv+bias blocks keep inference strictly
// per-sample. Input H and W must be divisible by 32.
template <typename T>
Network<T> build_resnet50_unet(int in_channels, int n_classes) {
  typename Network<T>::Builder b;

  auto bottleneck = [&b](const std::string& name, int from, int cin, int cmid, int cout,
                         int stride) {
    int x = b.activation(b.conv(name + ".conv1", from, 1, 1, 0, cin, cmid), Activation::relu);
    x = b.activation(b.conv(name + ".conv2", x, 3, stride, 1, cmid, cmid), Activation::relu);
    x = b.conv(name + ".conv3", x, 1, 1, 0, cmid, cout);
    int shortcut = from;
    if (stride != 1 || cin != cout)
      shortcut = b.conv(name + ".down", from, 1, stride, 0, cin, cout);
    return b.activation(b.add(x, shortcut), Activation::relu);
  };

  auto stage = [&](const std::string& name, int from, int cin, int cmid, int cout, int blocks,
                   int first_stride) {
    int x = bottleneck(name + ".block0", from, cin, cmid, cout, first_stride);
    for (int i = 1; i < blocks; ++i)
      x = bottleneck(name + ".block" + std::to_string(i), x, cout, cmid, cout, 1);
    return x;
  };

  const int stem =
      b.activation(b.conv("stem.conv", b.input(), 7, 2, 3, in_channels, 64), Activation::relu);
  const int pooled = b.maxpool(stem, 3, 2, 1);
  const int c2 = stage("stage2", pooled, 64, 64, 256, 3, 1);
  const int c3 = stage("stage3", c2, 256, 128, 512, 4, 2);
  const int c4 = stage("stage4", c3, 512, 256, 1024, 6, 2);
  const int c5 = stage("stage5", c4, 1024, 512, 2048, 3, 2);

  auto up_block = [&](const std::string& name, int from, int skip, int cin, int cout) {
    const int merged = b.concat(b.upsample2(from), skip);
    return b.activation(b.conv(name + ".conv", merged, 3, 1, 1, cin, cout), Activation::relu);
  };

  int d = up_block("dec4", c5, c4, 2048 + 1024, 256);
  d = up_block("dec3", d, c3, 256 + 512, 128);
  d = up_block("dec2", d, c2, 128 + 256, 64);
  d = up_block("dec1", d, stem, 64 + 64, 32);
  d = b.activation(b.conv("dec0.conv", b.upsample2(d), 3, 1, 1, 32, 16), Activation::relu);
  const int logits = b.conv("head.conv", d, 1, 1, 0, 16, n_classes);
  return b.finish(b.softmax(logits));
}

}  // namespace detail

template <typename T>
Network<T> build_network(const ModelSpec& spec) {
  validate_model_spec(spec);
  switch (spec.architecture) {
    case Architecture::tiny_unet:
      return detail::build_tiny_unet<T>(spec.in_channels, spec.n_classes);
    case Architecture::resnet50_unet:
      return detail::build_resnet50_unet<T>(spec.in_channels, spec.n_classes);
  }
  throw ConfigError("unknown architecture");
}

// Seeded fan-in-scaled uniform init: weights ~ U(-sqrt(3/fan_in), +sqrt(3/fan_in)),
// biases zero. Draws happen in a fixed entry order in double, then narrow to T.
template <typename T>
ParamSet<T> init_params(const Network<T>& net, std::uint64_t init_seed) {
  ParamSet<T> params = net.param_template();
  Rng rng(derived_seed(init_seed, 0x1717));
  for (std::size_t i = 0; i < params.entry_count(); ++i) {
    auto& e = params.entry(i);
    if (e.shape.size() < 2) continue;  // biases stay zero
    std::size_t fan_in = 1;
    for (std::size_t d = 0; d + 1 < e.shape.size(); ++d)
      fan_in *= static_cast<std::size_t>(e.shape[d]);
    const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (auto& v : e.values) v = static_cast<T>(rng.uniform(-limit, limit));
  }
  return params;
}

template <typename T>
ParamSet<T> init_params(const ModelSpec& spec) {
  return init_params(build_network<T>(spec), spec.init_seed);
}

}  // namespace ictseg
