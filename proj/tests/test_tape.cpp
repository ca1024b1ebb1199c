#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "meshtex/adam.hpp"
#include "meshtex/gradcheck.hpp"
#include "meshtex/nn.hpp"
#include "meshtex/rng.hpp"
#include "meshtex/tape.hpp"

using namespace meshtex;
using Catch::Approx;
using T = Tensor<double>;

namespace {

T random_tensor(Shape shape, Rng& rng, double lo = 0.2, double hi = 1.5) {
  T t = T::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    // Keep values away from activation kinks so finite differences stay
    // smooth; signs alternate via the random draw.
    const double mag = rng.uniform(lo, hi);
    (*t.data)[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// Scalar loss for matrix outputs: sum(out * G) with a fixed random G.
T weighted_sum(Tape<double>& tape, const T& out, const T& weights) {
  return tape.sum_all(tape.mul(out, weights));
}

NormalizedAdjacency two_node_path() {
  NormalizedAdjacency a;
  a.num_nodes = 2;
  a.offsets = {0, 2, 4};
  a.neighbors = {0, 1, 0, 1};
  a.weights = {0.5, 0.5, 0.5, 0.5};
  return a;
}

NormalizedAdjacency k4_adjacency() {
  NormalizedAdjacency a;
  a.num_nodes = 4;
  a.offsets = {0, 4, 8, 12, 16};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      a.neighbors.push_back(j);
      a.weights.push_back(0.25);
    }
  }
  return a;
}

}  // namespace

TEST_CASE("rng is deterministic and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(a.next_u64() == b.next_u64());
  }
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 10; ++i) {
    if (a2.next_u64() != c.next_u64()) differs = true;
  }
  REQUIRE(differs);

  // State round-trip resumes the exact stream.
  Rng d(7);
  d.normal();
  const auto state = d.state();
  const double next = d.normal();
  Rng e(999);
  e.set_state(state);
  REQUIRE(e.normal() == next);
}

TEST_CASE("rng normal sampling has standard moments") {
  Rng rng(2024);
  const int n = 100000;
  const int d = 16;
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  std::vector<std::vector<double>> samples(d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const double z = rng.normal();
      mean[j] += z;
      var[j] += z * z;
    }
  }
  for (int j = 0; j < d; ++j) {
    mean[j] /= n;
    var[j] = var[j] / n - mean[j] * mean[j];
    REQUIRE(std::abs(mean[j]) < 0.02);
    REQUIRE(std::abs(var[j] - 1.0) < 0.03);
  }
}

TEST_CASE("matmul identity and analytic values") {
  Tape<double> tape;
  const T eye = T::from({2, 2}, {1, 0, 0, 1});
  const T x = T::from({2, 2}, {3, 1, 4, 1});
  const T prod = tape.matmul(eye, x);
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(prod[i] == x[i]);

  const T a = T::from({2, 2}, {1, 2, 3, 4});
  const T ones = T::from({2, 1}, {1, 1});
  const T out = tape.matmul(a, ones);
  REQUIRE(out[0] == Approx(3.0));
  REQUIRE(out[1] == Approx(7.0));
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(1);
  const T g = random_tensor({3, 2}, rng);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, t.matmul(in[0], in[1]), g);
      },
      {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-6);
}

TEST_CASE("matmul rejects mismatched shapes") {
  Tape<double> tape;
  REQUIRE_THROWS_AS(tape.matmul(T::zeros({2, 3}), T::zeros({2, 3})),
                    ShapeError);
}

TEST_CASE("conv2d with a 1x1 unit kernel is the identity") {
  Tape<double> tape;
  Rng rng(2);
  const T x = random_tensor({1, 5, 5}, rng);
  const T k = T::from({1, 1, 1, 1}, {1.0});
  const T y = tape.conv2d(x, k, 1, 0);
  REQUIRE(y.shape == Shape{1, 5, 5});
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y[i] == Approx(x[i]));
}

TEST_CASE("conv2d averaging kernel preserves a constant image") {
  Tape<double> tape;
  const double c = 0.37;
  const T x = T::full({1, 6, 6}, c);
  const T k = T::full({1, 1, 3, 3}, 1.0 / 9.0);
  const T y = tape.conv2d(x, k, 1, 0);  // interior-only output
  REQUIRE(y.shape == Shape{1, 4, 4});
  for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y[i] == Approx(c));
}

TEST_CASE("conv2d strided shapes follow the DCGAN convention") {
  Tape<double> tape;
  const T x = T::zeros({3, 64, 64});
  const T k = T::zeros({32, 3, 4, 4});
  const T y = tape.conv2d(x, k, 2, 1);
  REQUIRE(y.shape == Shape{32, 32, 32});
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(3);
  const T g = random_tensor({3, 3, 3}, rng);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, t.conv2d(in[0], in[1], 2, 1), g);
      },
      {random_tensor({2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-5);
}

TEST_CASE("activations match analytic values") {
  Tape<double> tape;
  const T x = T::from({4}, {0.0, -1.0, 2.0, -3.0});
  const T s = tape.activation(x, Act::sigmoid);
  REQUIRE(s[0] == Approx(0.5));
  const T l = tape.activation(x, Act::leaky_relu);
  REQUIRE(l[1] == Approx(-0.2));
  REQUIRE(l[2] == Approx(2.0));
  const T r = tape.activation(x, Act::relu);
  REQUIRE(r[1] == 0.0);
  REQUIRE(r[2] == Approx(2.0));
  const T th = tape.activation(x, Act::tanh_);
  REQUIRE(th[2] == Approx(std::tanh(2.0)));
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(4);
  for (Act kind : {Act::relu, Act::leaky_relu, Act::sigmoid, Act::tanh_}) {
    const T g = random_tensor({8}, rng);
    auto rep = finite_difference_check(
        [&](Tape<double>& t, const std::vector<T>& in) {
          return weighted_sum(t, t.activation(in[0], kind), g);
        },
        {random_tensor({8}, rng)});
    REQUIRE(rep.max_rel_err <= 1e-6);
  }
}

TEST_CASE("gcn_conv hand-computed two-node path") {
  Tape<double> tape;
  const NormalizedAdjacency adj = two_node_path();
  const T h = T::from({2, 1}, {1.0, 3.0});
  const T w = T::from({1, 1}, {1.0});
  const T y = gcn_conv(tape, adj, h, w);
  REQUIRE(y[0] == Approx(2.0));
  REQUIRE(y[1] == Approx(2.0));
}

TEST_CASE("gcn_conv on an isolated node with identity weights") {
  Tape<double> tape;
  NormalizedAdjacency adj;
  adj.num_nodes = 1;
  adj.offsets = {0, 1};
  adj.neighbors = {0};
  adj.weights = {1.0};
  const T h = T::from({1, 2}, {0.3, -0.7});
  const T w = T::from({2, 2}, {1, 0, 0, 1});
  const T y = gcn_conv(tape, adj, h, w);
  REQUIRE(y[0] == Approx(0.3));
  REQUIRE(y[1] == Approx(-0.7));
}

TEST_CASE("gcn_conv gradients match finite differences on K4") {
  Rng rng(5);
  const NormalizedAdjacency adj = k4_adjacency();
  const T g = random_tensor({4, 3}, rng);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, gcn_conv(t, adj, in[0], in[1]), g);
      },
      {random_tensor({4, 2}, rng), random_tensor({2, 3}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-6);
}

TEST_CASE("spmm output is bit-exact under node permutation") {
  // 4-node path graph and its reversal: summed neighborhoods contain the
  // same values, so sorted accumulation gives identical bits.
  NormalizedAdjacency fwd;
  fwd.num_nodes = 4;
  fwd.offsets = {0, 2, 5, 8, 10};
  fwd.neighbors = {0, 1, 0, 1, 2, 1, 2, 3, 2, 3};
  const double w12 = 1.0 / std::sqrt(2.0 * 3.0);
  const double w22 = 1.0 / 3.0;
  fwd.weights = {0.5, w12, w12, w22, w22, w22, w22, w12, w12, 0.5};

  NormalizedAdjacency rev = fwd;  // reversal permutation maps i -> 3-i
  Tape<double> ta, tb;
  Rng rng(6);
  const T h = random_tensor({4, 5}, rng);
  T hrev = T::zeros({4, 5});
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < 5; ++c) hrev.at(3 - i, c) = h.at(i, c);
  }
  const T ya = ta.spmm(fwd, h);
  const T yb = tb.spmm(rev, hrev);
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < 5; ++c) {
      REQUIRE(ya.at(i, c) == yb.at(3 - i, c));  // exact, not approximate
    }
  }
}

TEST_CASE("bce_with_logits analytic values") {
  Tape<double> tape;
  const T zero_logit = T::scalar(0.0);
  REQUIRE(tape.bce_with_logits(zero_logit, T::scalar(1.0)).item() ==
          Approx(std::log(2.0)));
  REQUIRE(tape.bce_with_logits(zero_logit, T::scalar(0.0)).item() ==
          Approx(std::log(2.0)));
  REQUIRE(tape.bce_with_logits(T::scalar(20.0), T::scalar(1.0)).item() <=
          1e-8);
}

TEST_CASE("bce_with_logits gradient equals sigmoid(x) - t") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const double x = rng.uniform(-3, 3);
    const double t = trial % 2 ? 1.0 : 0.0;
    Tape<double> tape;
    T logit = T::scalar(x);
    logit = tape.watch(logit);
    const T loss = tape.bce_with_logits(logit, T::scalar(t));
    tape.backward(loss);
    const double expected = 1.0 / (1.0 + std::exp(-x)) - t;
    REQUIRE(std::abs(tape.grad(logit)[0] - expected) < 1e-9);
  }
}

TEST_CASE("mse and elementwise op gradients match finite differences") {
  Rng rng(8);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        const T d = t.sub(t.mul(in[0], in[1]), t.scale(in[2], 0.7));
        return t.mse(d, in[3]);
      },
      {random_tensor({6}, rng), random_tensor({6}, rng),
       random_tensor({6}, rng), random_tensor({6}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-6);
}

TEST_CASE("broadcast helpers match finite differences") {
  Rng rng(9);
  const T g = random_tensor({3, 4}, rng);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, t.add_rowvec(in[0], in[1]), g);
      },
      {random_tensor({3, 4}, rng), random_tensor({4}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-6);

  const T g2 = random_tensor({2, 3, 3}, rng);
  auto rep2 = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, t.add_channel_bias(in[0], in[1]), g2);
      },
      {random_tensor({2, 3, 3}, rng), random_tensor({2}, rng)});
  REQUIRE(rep2.max_rel_err <= 1e-6);
}

TEST_CASE("instance_norm gradients match finite differences") {
  Rng rng(10);
  const T g = random_tensor({2, 4, 4}, rng);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, t.instance_norm(in[0], in[1], in[2]), g);
      },
      {random_tensor({2, 4, 4}, rng), random_tensor({2}, rng),
       random_tensor({2}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-5);
}

TEST_CASE("pooling, permute and reshape gradients match finite differences") {
  Rng rng(11);
  const T g = random_tensor({3}, rng);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, t.global_avg_pool(in[0]), g);
      },
      {random_tensor({3, 4, 4}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-6);

  const T g2 = random_tensor({3, 2, 2}, rng);
  auto rep2 = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, t.hwc_to_chw(in[0]), g2);
      },
      {random_tensor({2, 2, 3}, rng)});
  REQUIRE(rep2.max_rel_err <= 1e-6);

  const T g3 = random_tensor({6}, rng);
  auto rep3 = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, t.reshape(in[0], {6}), g3);
      },
      {random_tensor({2, 3}, rng)});
  REQUIRE(rep3.max_rel_err <= 1e-6);
}

TEST_CASE("replicate_concat appends z to every row") {
  Tape<double> tape;
  const T h = T::from({3, 2}, {1, 2, 3, 4, 5, 6});
  const T z = T::from({2}, {9, -9});
  const T out = tape.replicate_concat(h, z);
  REQUIRE(out.shape == Shape{3, 4});
  for (int i = 0; i < 3; ++i) {
    REQUIRE(out.at(i, 2) == 9.0);
    REQUIRE(out.at(i, 3) == -9.0);
  }
  // d = 0 leaves the input unchanged.
  const T empty = T::zeros({0});
  const T same = tape.replicate_concat(h, empty);
  REQUIRE(same.shape == Shape{3, 2});
  for (std::size_t i = 0; i < h.size(); ++i) REQUIRE(same[i] == h[i]);
}

TEST_CASE("replicate_concat gradients match finite differences") {
  Rng rng(12);
  const T g = random_tensor({3, 5}, rng);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        return weighted_sum(t, t.replicate_concat(in[0], in[1]), g);
      },
      {random_tensor({3, 3}, rng), random_tensor({2}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-6);
}

TEST_CASE("stack_scalars gathers values and routes gradients") {
  Rng rng(13);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        std::vector<T> parts;
        parts.push_back(t.sum_all(in[0]));
        parts.push_back(t.mean_all(in[1]));
        const T stacked = t.stack_scalars(parts);
        return t.mse(stacked, T::from({2}, {0.1, -0.4}));
      },
      {random_tensor({3}, rng), random_tensor({4}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-6);
}

TEST_CASE("fan-out gradients accumulate additively") {
  Tape<double> tape;
  T x = T::from({2}, {1.5, -0.5});
  x = tape.watch(x);
  // y = x + x  =>  dy/dx = 2
  const T y = tape.add(x, x);
  const T loss = tape.sum_all(y);
  tape.backward(loss);
  REQUIRE(tape.grad(x)[0] == Approx(2.0));
  REQUIRE(tape.grad(x)[1] == Approx(2.0));
}

TEST_CASE("branch gradients sum over shared subexpressions") {
  Rng rng(14);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        const T a = t.activation(in[0], Act::tanh_);
        // a feeds two branches; the tape must sum both pulls.
        const T b = t.mul(a, a);
        const T c = t.add(b, a);
        return t.mean_all(c);
      },
      {random_tensor({5}, rng)});
  REQUIRE(rep.max_rel_err <= 1e-6);
}

TEST_CASE("non-finite forward values raise NumericalError") {
  Tape<double> tape;
  const T huge = T::full({2}, 1e308);
  REQUIRE_THROWS_AS(tape.mul(huge, huge), NumericalError);
}

TEST_CASE("ops on constants stay off the tape") {
  Tape<double> tape;
  const T a = T::from({2}, {1, 2});
  const T b = T::from({2}, {3, 4});
  const T c = tape.add(a, b);
  REQUIRE(c.node == -1);
  REQUIRE(tape.node_count() == 0);
}

TEST_CASE("adam first step with unit gradient") {
  AdamConfig cfg;  // lr = 1e-4
  T p = T::full({3}, 1.0);
  const T g = T::full({3}, 1.0);
  AdamSlot<double> slot{T::zeros({3}), T::zeros({3})};
  adam_step(p, g, slot, cfg, 1);
  // mhat = 1, vhat = 1 after bias correction, so the update is lr/(1+eps).
  const double expected = 1.0 - 1e-4 * (1.0 / (1.0 + 1e-8));
  for (int i = 0; i < 3; ++i) REQUIRE(p[i] == Approx(expected).epsilon(1e-12));
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  AdamConfig cfg;
  T p = T::from({2}, {0.3, -0.9});
  AdamSlot<double> slot{T::zeros({2}), T::zeros({2})};
  for (long t = 1; t <= 5; ++t) {
    adam_step(p, T::zeros({2}), slot, cfg, t);
  }
  REQUIRE(p[0] == 0.3);
  REQUIRE(p[1] == -0.9);
}

TEST_CASE("adam matches a scalar reference over two steps") {
  AdamConfig cfg;
  const double g = 0.73;
  T p = T::scalar(0.5);
  AdamSlot<double> slot{T::zeros({1}), T::zeros({1})};
  adam_step(p, T::scalar(g), slot, cfg, 1);
  adam_step(p, T::scalar(g), slot, cfg, 2);

  // Independent scalar reference.
  double m = 0, v = 0, x = 0.5;
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    x -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  REQUIRE(std::abs(p[0] - x) < 1e-12);
}

TEST_CASE("adam rejects mismatched gradient shapes") {
  AdamConfig cfg;
  T p = T::zeros({2});
  AdamSlot<double> slot{T::zeros({2}), T::zeros({2})};
  REQUIRE_THROWS_AS(adam_step(p, T::zeros({3}), slot, cfg, 1), ShapeError);
}

TEST_CASE("layer forward passes are differentiable end to end") {
  Rng rng(15);
  auto dense = DenseLayer<double>::make(3, 2, rng);
  const T g = random_tensor({4, 2}, rng);
  auto rep = finite_difference_check(
      [&](Tape<double>& t, const std::vector<T>& in) {
        DenseLayer<double> layer{in[1], in[2]};
        return weighted_sum(t, layer.forward(t, in[0]), g);
      },
      {random_tensor({4, 3}, rng), dense.weight.detached_copy(),
       dense.bias.detached_copy()});
  REQUIRE(rep.max_rel_err <= 1e-6);
}

TEST_CASE("fixed seed makes forward-backward-step bit-reproducible") {
  auto run = [] {
    Rng rng(77);
    auto layer = DenseLayer<double>::make(4, 3, rng);
    T x = random_tensor({2, 4}, rng);
    AdamOptimizer<double> opt;
    opt.register_param("w", &layer.weight);
    opt.register_param("b", &layer.bias);
    for (int step = 0; step < 3; ++step) {
      Tape<double> tape;
      DenseLayer<double> watched{tape.watch(layer.weight),
                                 tape.watch(layer.bias)};
      const T out = watched.forward(tape, x);
      const T loss = tape.mse(out, T::zeros({2, 3}));
      tape.backward(loss);
      opt.step({tape.grad(watched.weight), tape.grad(watched.bias)});
    }
    return layer.weight;
  };
  const T a = run();
  const T b = run();
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i] == b[i]);  // bitwise
  }
}
