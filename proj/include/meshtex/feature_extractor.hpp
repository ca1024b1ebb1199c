// Fixed convolutional feature extractor: 3 stride-2 conv layers
// (3 -> 16 -> 32 -> 64, kernel 3, pad 1) with leaky ReLU, then a global
// average pool to a 64-d vector. Weights come from the documented fixed
// seed by default and can be loaded from a checkpoint-format file, so a
// converted pretrained extractor can be dropped in.
//
// The same network provides perceptual-loss features during training
// (gradients flow through it to the image; its own weights stay fixed).
#pragma once

#include <cstdint>
#include <string>

#include "meshtex/checkpoint.hpp"
#include "meshtex/nn.hpp"
#include "meshtex/rng.hpp"
#include "meshtex/tape.hpp"

namespace meshtex {

constexpr std::uint64_t kExtractorSeed = 900913;
constexpr int kFeatureDim = 64;

template <typename S>
struct FeatureExtractor {
  Conv2dLayer<S> conv1, conv2, conv3;

  static FeatureExtractor make_seeded(std::uint64_t seed = kExtractorSeed) {
    Rng rng(seed);
    FeatureExtractor fe;
    fe.conv1 = Conv2dLayer<S>::make(3, 16, 3, 2, 1, rng);
    fe.conv2 = Conv2dLayer<S>::make(16, 32, 3, 2, 1, rng);
    fe.conv3 = Conv2dLayer<S>::make(32, 64, 3, 2, 1, rng);
    return fe;
  }

  // chw image in [0,1] -> 64-d feature vector. Works at any image size
  // large enough for three stride-2 layers.
  Tensor<S> features(Tape<S>& tape, const Tensor<S>& chw) const {
    Tensor<S> h = tape.activation(conv1.forward(tape, chw), Act::leaky_relu);
    h = tape.activation(conv2.forward(tape, h), Act::leaky_relu);
    h = tape.activation(conv3.forward(tape, h), Act::leaky_relu);
    return tape.global_avg_pool(h);
  }

  TensorMap to_tensors() const {
    TensorMap map;
    auto put = [&map](const std::string& name, const Tensor<S>& t) {
      map.emplace(name, t.template cast<double>());
    };
    put("fe.conv1.k", conv1.kernels);
    put("fe.conv1.b", conv1.bias);
    put("fe.conv2.k", conv2.kernels);
    put("fe.conv2.b", conv2.bias);
    put("fe.conv3.k", conv3.kernels);
    put("fe.conv3.b", conv3.bias);
    return map;
  }

  static FeatureExtractor from_tensors(const TensorMap& map) {
    FeatureExtractor fe = make_seeded();
    auto get = [&map](const std::string& name, Tensor<S>& dst) {
      const Tensor<double>& src = checkpoint_get(map, name);
      if (src.shape != dst.shape) {
        throw DataError("feature extractor tensor '" + name +
                        "' has shape " + shape_str(src.shape) + ", expected " +
                        shape_str(dst.shape));
      }
      dst = src.template cast<S>();
    };
    get("fe.conv1.k", fe.conv1.kernels);
    get("fe.conv1.b", fe.conv1.bias);
    get("fe.conv2.k", fe.conv2.kernels);
    get("fe.conv2.b", fe.conv2.bias);
    get("fe.conv3.k", fe.conv3.kernels);
    get("fe.conv3.b", fe.conv3.bias);
    return fe;
  }

  static FeatureExtractor load(const std::string& path) {
    return from_tensors(load_checkpoint(path));
  }
};

}  // namespace meshtex
