// Parameterized layers built on the tape ops, with the initialization
// conventions used throughout the pipeline: Glorot-uniform for dense and
// graph-convolution weights, normal(0, 0.02) for conv kernels, zero biases.
#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "meshtex/rng.hpp"
#include "meshtex/tape.hpp"
#include "meshtex/tensor.hpp"

namespace meshtex {

// Callback used to enumerate all learnable tensors of a module by name.
template <typename S>
using ParamVisitor = std::function<void(const std::string&, Tensor<S>&)>;

namespace init {

template <typename S>
Tensor<S> glorot_uniform(int fan_in, int fan_out, Shape shape, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<S> t = Tensor<S>::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    (*t.data)[i] = static_cast<S>(rng.uniform(-limit, limit));
  }
  return t;
}

template <typename S>
Tensor<S> normal(Shape shape, double stddev, Rng& rng) {
  Tensor<S> t = Tensor<S>::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    (*t.data)[i] = static_cast<S>(rng.normal() * stddev);
  }
  return t;
}

}  // namespace init

template <typename S>
struct DenseLayer {
  Tensor<S> weight;  // in x out
  Tensor<S> bias;    // out

  static DenseLayer make(int in, int out, Rng& rng) {
    return {init::glorot_uniform<S>(in, out, {in, out}, rng),
            Tensor<S>::zeros({out})};
  }

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x) const {
    return tape.add_rowvec(tape.matmul(x, weight), bias);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".w", weight);
    fn(prefix + ".b", bias);
  }
};

template <typename S>
struct GraphConvLayer {
  Tensor<S> weight;  // in x out
  Tensor<S> bias;    // out

  static GraphConvLayer make(int in, int out, Rng& rng) {
    return {init::glorot_uniform<S>(in, out, {in, out}, rng),
            Tensor<S>::zeros({out})};
  }

  Tensor<S> forward(Tape<S>& tape, const NormalizedAdjacency& adj,
                    const Tensor<S>& h) const {
    return tape.add_rowvec(gcn_conv(tape, adj, h, weight), bias);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".w", weight);
    fn(prefix + ".b", bias);
  }
};

template <typename S>
struct Conv2dLayer {
  Tensor<S> kernels;  // out x in x k x k
  Tensor<S> bias;     // out
  int stride = 1;
  int pad = 0;

  static Conv2dLayer make(int in, int out, int k, int stride, int pad,
                          Rng& rng) {
    Conv2dLayer l;
    l.kernels = init::normal<S>({out, in, k, k}, 0.02, rng);
    l.bias = Tensor<S>::zeros({out});
    l.stride = stride;
    l.pad = pad;
    return l;
  }

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x) const {
    return tape.add_channel_bias(tape.conv2d(x, kernels, stride, pad), bias);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".k", kernels);
    fn(prefix + ".b", bias);
  }
};

template <typename S>
struct InstanceNormLayer {
  Tensor<S> gamma;
  Tensor<S> beta;

  static InstanceNormLayer make(int channels) {
    return {Tensor<S>::full({channels}, S(1)), Tensor<S>::zeros({channels})};
  }

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x) const {
    return tape.instance_norm(x, gamma, beta);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".g", gamma);
    fn(prefix + ".b", beta);
  }
};

}  // namespace meshtex
